//! Embedded reference tables and the detections reported for them in the
//! literature.

use serde::Serialize;

use crate::detect::{detect_ol1, detect_oltcs, detect_omp, detect_ompc, DetectionReport, Method, DEFAULT_G, DEFAULT_SUBSETS};
use crate::error::{Error, Result};
use crate::estimate::{Estimator, TrimVariant};
use crate::model::{build_design, Coding, DesignMatrix, ModelSpec};
use crate::patterns::minimal_catalog;
use crate::table::ContingencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseStudy {
    Nevada,
    Glass,
    Socialnet,
}

impl std::str::FromStr for CaseStudy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nevada" => Ok(CaseStudy::Nevada),
            "glass" => Ok(CaseStudy::Glass),
            "socialnet" | "social" => Ok(CaseStudy::Socialnet),
            _ => Err(Error::InvalidArgument(format!("unknown case study `{s}`"))),
        }
    }
}

/// A detection as published, cells as 0-based flat indices.
#[derive(Debug, Clone, Serialize)]
pub struct Reported {
    pub method: Method,
    pub alpha: f64,
    /// One entry per reported solution.
    pub outliers: Vec<Vec<usize>>,
}

fn rep(method: Method, alpha: f64, outliers: &[&[usize]]) -> Reported {
    Reported {
        method,
        alpha,
        outliers: outliers.iter().map(|s| s.to_vec()).collect(),
    }
}

impl CaseStudy {
    pub const ALL: [CaseStudy; 3] = [CaseStudy::Nevada, CaseStudy::Glass, CaseStudy::Socialnet];

    pub fn name(self) -> &'static str {
        match self {
            CaseStudy::Nevada => "nevada",
            CaseStudy::Glass => "glass",
            CaseStudy::Socialnet => "socialnet",
        }
    }

    pub fn table(self) -> ContingencyTable {
        let words = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match self {
            // Archaeological finds by distance from permanent water
            // (Mosteller and Parunak, 1985).
            CaseStudy::Nevada => ContingencyTable::new(
                vec![4, 4],
                vec![2, 10, 4, 2, 3, 8, 4, 6, 13, 5, 3, 9, 20, 36, 19, 20],
            )
            .and_then(|t| {
                t.with_labels(vec![
                    words(&["drills", "pots", "grinding_stones", "point_fragments"]),
                    words(&["contiguity", "within_0.25mi", "0.25-0.5mi", "0.5-1mi"]),
                ])
            }),
            // Status of fathers and sons, classes merged to three
            // (Glass, 1954; Goodman, 1971).
            CaseStudy::Glass => ContingencyTable::new(
                vec![3, 3],
                vec![588, 395, 159, 349, 714, 447, 111, 320, 411],
            )
            .and_then(|t| {
                t.with_labels(vec![
                    words(&["high", "middle", "low"]),
                    words(&["high", "middle", "low"]),
                ])
            }),
            // Friendship networks of pregnant women in Aberdeen
            // (McKinlay, 1973): frequency x distance x parity.
            CaseStudy::Socialnet => ContingencyTable::new(
                vec![3, 2, 2],
                vec![30, 6, 2, 13, 19, 12, 16, 8, 5, 2, 10, 4],
            )
            .and_then(|t| {
                t.with_labels(vec![
                    words(&["daily", "weekly", "less"]),
                    words(&["walk", "bus"]),
                    words(&["not_first", "first"]),
                ])
            }),
        }
        .expect("embedded table is valid")
    }

    pub fn model(self) -> ModelSpec {
        let t = self.table();
        match self {
            CaseStudy::Socialnet => ModelSpec::parse("1,2|2,3", t.dims().to_vec(), Coding::SumToZero),
            _ => ModelSpec::independence(t.dims().to_vec(), Coding::SumToZero),
        }
        .expect("embedded model is valid")
    }

    pub fn design(self) -> DesignMatrix {
        build_design(&self.model()).expect("embedded design has full rank")
    }

    /// Levels at which the detections are run.
    pub fn alphas(self) -> &'static [f64] {
        match self {
            CaseStudy::Nevada => &[0.001, 0.0005],
            CaseStudy::Glass => &[0.01],
            CaseStudy::Socialnet => &[0.01],
        }
    }

    /// Published detections.
    pub fn reported(self) -> Vec<Reported> {
        use Method::*;
        match self {
            CaseStudy::Nevada => vec![
                rep(Ol1, 0.001, &[&[]]),
                rep(Omp, 0.001, &[&[]]),
                rep(Ompc, 0.001, &[&[8, 9]]),
                rep(Ompc, 0.0005, &[&[8]]),
                rep(Ompcl1, 0.001, &[&[8]]),
                rep(Oltcs, 0.001, &[&[8]]),
            ],
            CaseStudy::Glass => vec![
                rep(Omp, 0.01, &[&[0, 4, 8]]),
                rep(Ol1, 0.01, &[&[0, 2, 6, 8]]),
                rep(Oltcs, 0.01, &[&[0, 2, 6, 8]]),
                rep(Ompc, 0.01, &[&[0, 1, 2, 3, 4, 5, 6, 7, 8]]),
                rep(Ompcl1, 0.01, &[&[0, 1, 2, 3, 4, 5, 6, 7, 8]]),
            ],
            CaseStudy::Socialnet => vec![
                rep(Ol1, 0.01, &[&[0, 2]]),
                rep(Oltcs, 0.01, &[&[2]]),
                rep(Omp, 0.01, &[&[2], &[3]]),
                rep(Ompc, 0.01, &[&[0, 2, 3]]),
                rep(Ompcl1, 0.01, &[&[0, 1, 2, 3, 8]]),
            ],
        }
    }
}

/// One method run next to the published result.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub reported: Reported,
    pub found: Vec<Vec<usize>>,
    pub matches: bool,
    pub report: DetectionReport,
}

/// Reruns every published detection of a case study.
pub fn reproduce(case: CaseStudy, seed: u64) -> Result<Vec<Comparison>> {
    let table = case.table();
    let design = case.design();
    let catalog = minimal_catalog(&design, 500, seed)?;
    case.reported()
        .into_iter()
        .map(|reported| {
            let a = reported.alpha;
            let report = match reported.method {
                Method::Ol1 => detect_ol1(&table, &design, a, Estimator::L1),
                Method::Omp => detect_omp(&table, &design, a, &catalog),
                Method::Ompc => detect_ompc(&table, &design, a, &catalog, Estimator::Ml, DEFAULT_G),
                Method::Ompcl1 => detect_ompc(&table, &design, a, &catalog, Estimator::L1, DEFAULT_G),
                Method::Oltcs => detect_oltcs(&table, &design, a, DEFAULT_SUBSETS, TrimVariant::Ltcs, seed),
            }?;
            let mut found: Vec<Vec<usize>> = (0..report.flags.len()).map(|k| report.outliers(k)).collect();
            found.sort();
            let mut want = reported.outliers.clone();
            want.sort();
            Ok(Comparison {
                matches: found == want,
                reported,
                found,
                report,
            })
        })
        .collect()
}
