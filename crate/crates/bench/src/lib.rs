//! Shared inputs for the benchmarks.

use minpat_core::casestudy::CaseStudy;
use minpat_core::{ContingencyTable, DesignMatrix};

pub fn case(case: CaseStudy) -> (ContingencyTable, DesignMatrix) {
    (case.table(), case.design())
}
