use minpat_core::casestudy::CaseStudy;
use minpat_core::detect::{detect_ol1, detect_oltcs, detect_omp, detect_ompc};
use minpat_core::patterns::{enumerate_minimal, minimal_catalog, DEFAULT_ENUM_CAP};
use minpat_core::simulate::{evaluate_rates, scenario};
use minpat_core::{build_design, Coding, ContingencyTable, Error, Estimator, Method, ModelSpec, TrimVariant};

fn exact_table() -> ContingencyTable {
    // products of margins: rows (1, 2, 3) times columns (10, 20, 30, 40)
    let rows = [1u64, 2, 3];
    let cols = [10u64, 20, 30, 40];
    let counts = rows.iter().flat_map(|r| cols.iter().map(move |c| r * c)).collect();
    ContingencyTable::new(vec![3, 4], counts).unwrap()
}

#[test]
fn ompc_cutoff_is_monotone() {
    let (t, d) = (CaseStudy::Nevada.table(), CaseStudy::Nevada.design());
    let cat = enumerate_minimal(&d, DEFAULT_ENUM_CAP).unwrap();
    let r = detect_ompc(&t, &d, 0.001, &cat, Estimator::Ml, 0.5).unwrap();
    let counts = r.detect_counts.clone().unwrap();
    let rr = r.r.clone().unwrap();
    assert!(counts.iter().zip(&rr).all(|(c, r)| c <= r));
    let mut previous = r.flags_at(0.0).unwrap();
    for j in 0..16 {
        assert_eq!(previous[j], counts[j] > 0);
    }
    for k in 1..=10 {
        let now = r.flags_at(k as f64 / 10.0).unwrap();
        assert!(now.iter().zip(&previous).all(|(n, p)| !n || *p));
        previous = now;
    }
    for j in 0..16 {
        assert!(!previous[j]);
    }
    assert_eq!(r.flags_at(0.5).unwrap(), r.flags[0]);
}

#[test]
fn omp_solutions_share_the_minimum() {
    let (t, d) = (CaseStudy::Socialnet.table(), CaseStudy::Socialnet.design());
    let cat = enumerate_minimal(&d, DEFAULT_ENUM_CAP).unwrap();
    let r = detect_omp(&t, &d, 0.01, &cat).unwrap();
    let hist = r.outlier_histogram.clone().unwrap();
    let min = hist.iter().position(|&c| c > 0).unwrap();
    for k in 0..r.flags.len() {
        assert_eq!(r.outliers(k).len(), min);
    }
    assert_eq!(r.chosen_patterns.iter().map(Vec::len).sum::<usize>(), hist[min]);
}

#[test]
fn exact_table_has_no_outliers() {
    let t = exact_table();
    let d = build_design(&ModelSpec::independence(vec![3, 4], Coding::SumToZero).unwrap()).unwrap();
    for alpha in [0.1, 0.05, 0.01, 1e-4] {
        let r = detect_ol1(&t, &d, alpha, Estimator::Ml).unwrap();
        assert!(r.outliers(0).is_empty());
    }
    let r = detect_oltcs(&t, &d, 0.01, 200, TrimVariant::Ltcs, 3).unwrap();
    assert!(r.outliers(0).is_empty());
    let r = detect_oltcs(&t, &d, 0.01, 200, TrimVariant::Lmcs, 3).unwrap();
    assert!(r.outliers(0).is_empty());
}

#[test]
fn reports_are_deterministic() {
    let (t, d) = (CaseStudy::Nevada.table(), CaseStudy::Nevada.design());
    let a = detect_oltcs(&t, &d, 0.001, 300, TrimVariant::Ltcs, 42).unwrap();
    let b = detect_oltcs(&t, &d, 0.001, 300, TrimVariant::Ltcs, 42).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let back: minpat_core::DetectionReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
    let c1 = minimal_catalog(&build_design(&ModelSpec::independence(vec![5, 5], Coding::SumToZero).unwrap()).unwrap(), 50, 9).unwrap();
    let c2 = minimal_catalog(&build_design(&ModelSpec::independence(vec![5, 5], Coding::SumToZero).unwrap()).unwrap(), 50, 9).unwrap();
    assert_eq!(c1, c2);
    assert!(!c1.exhaustive);
}

#[test]
fn failed_fits_are_skipped() {
    // a zero row makes every saturated ML fit through it fail
    let t = ContingencyTable::new(vec![3, 3], vec![0, 0, 0, 12, 15, 9, 20, 18, 25]).unwrap();
    let d = build_design(&ModelSpec::independence(vec![3, 3], Coding::SumToZero).unwrap()).unwrap();
    let cat = enumerate_minimal(&d, DEFAULT_ENUM_CAP).unwrap();
    match detect_ompc(&t, &d, 0.01, &cat, Estimator::Ml, 0.5) {
        Ok(r) => {
            assert!(r.skipped_patterns > 0);
            let used = cat.len() - r.skipped_patterns;
            let rr = r.r.unwrap();
            assert_eq!(rr.iter().sum::<usize>(), used * (9 - cat.size));
        }
        Err(e) => assert_eq!(e, Error::AllFitsFailed(cat.len())),
    }
}

#[test]
fn bad_arguments() {
    let (t, d) = (CaseStudy::Glass.table(), CaseStudy::Glass.design());
    let cat = enumerate_minimal(&d, DEFAULT_ENUM_CAP).unwrap();
    assert!(detect_omp(&t, &d, 0.0, &cat).is_err());
    assert!(detect_ompc(&t, &d, 0.01, &cat, Estimator::Ml, 1.5).is_err());
    let other = CaseStudy::Nevada.table();
    assert!(detect_omp(&other, &d, 0.01, &cat).is_err());
}

#[test]
fn planted_outlier_is_usually_found() {
    let spec = scenario(1, 11).unwrap().remove(1);
    let r = evaluate_rates(Method::Ompc, &spec).unwrap();
    assert!(r.outliers.unwrap() >= 0.6, "{r:?}");
}
