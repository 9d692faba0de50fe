mod common;

use proptest::prelude::*;

use minpat_core::estimate::{trimmed_chisq_means, TrimSpec, TrimVariant};
use minpat_core::patterns::{enumerate_minimal, sample_catalog, PatternKind, DEFAULT_ENUM_CAP};
use minpat_core::region::{is_alpha_outlier, outlier_region, poisson_pmf};
use minpat_core::table::load_table;
use minpat_core::{build_design, Coding, ContingencyTable, ModelSpec, TableFormat};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn region_mass_is_bounded(m in 0.01f64..3000.0, la in -12.0f64..-0.7) {
        let alpha = 10f64.powf(la);
        let r = outlier_region(m, alpha).unwrap();
        prop_assert!(r.outlier_mass() <= alpha * (1.0 + 1e-9));
        prop_assert!(r.lo <= m.floor() as u64 && m.floor() as u64 <= r.hi);
        // the least likely inlier cannot join without exceeding alpha
        let edge = poisson_pmf(r.lo, m).unwrap().min(poisson_pmf(r.hi, m).unwrap());
        prop_assert!(r.outlier_mass() + edge > alpha * (1.0 - 1e-9));
    }

    #[test]
    fn region_shrinks_with_alpha(m in 0.1f64..2000.0, la in -10.0f64..-1.0, d in 0.1f64..3.0) {
        let wide = outlier_region(m, 10f64.powf(la - d)).unwrap();
        let narrow = outlier_region(m, 10f64.powf(la)).unwrap();
        prop_assert!(wide.lo <= narrow.lo && narrow.hi <= wide.hi);
    }

    #[test]
    fn fast_criterion_matches_region(m in 0.1f64..500.0, la in -9.0f64..-1.0, y in 0u64..800) {
        let alpha = 10f64.powf(la);
        let r = outlier_region(m, alpha).unwrap();
        prop_assert_eq!(is_alpha_outlier(y, m, alpha), r.is_outlier(y));
    }

    #[test]
    fn trimmed_criterion_ignores_cell_order(
        pairs in proptest::collection::vec((0u64..200, 0.5f64..150.0), 4..30),
        seed in any::<u64>(),
        lmcs in any::<bool>(),
    ) {
        let n = pairs.len();
        let counts: Vec<u64> = pairs.iter().map(|p| p.0).collect();
        let means: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let t = ContingencyTable::new(vec![n], counts.clone()).unwrap();
        let tp = ContingencyTable::new(vec![n], order.iter().map(|&i| counts[i]).collect()).unwrap();
        let mp: Vec<f64> = order.iter().map(|&i| means[i]).collect();
        let variant = if lmcs { TrimVariant::Lmcs } else { TrimVariant::Ltcs };
        let trim = TrimSpec::new((n + 3) / 2, variant, 1, n).unwrap();
        let a = trimmed_chisq_means(&means, &t, trim).unwrap();
        let b = trimmed_chisq_means(&mp, &tp, trim).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn tables_round_trip(
        dims in proptest::collection::vec(1usize..4, 1..4),
        seed in any::<u64>(),
        long in any::<bool>(),
    ) {
        let n: usize = dims.iter().product();
        let counts: Vec<u64> = (0..n as u64).map(|i| (seed.rotate_left(i as u32 * 7) ^ i) % 1000).collect();
        let t = ContingencyTable::new(dims.clone(), counts).unwrap();
        let format = if long || dims.len() != 2 { TableFormat::Long } else { TableFormat::Grid };
        let back = load_table(&t.to_text(format).unwrap(), format).unwrap();
        prop_assert_eq!(back.dims(), t.dims());
        prop_assert_eq!(back.counts(), t.counts());
    }

    #[test]
    fn exclusion_counts_add_up(seed in any::<u64>(), draws in 1usize..200, rows in 2usize..5, cols in 2usize..6) {
        let d = build_design(&ModelSpec::independence(vec![rows, cols], Coding::SumToZero).unwrap()).unwrap();
        let cat = sample_catalog(&d, PatternKind::Minimal, draws, seed).unwrap();
        let n = d.n_cells();
        let total: usize = cat.exclusion_counts.iter().sum();
        prop_assert_eq!(total, draws * (n - cat.size));
    }
}

#[test]
fn exhaustive_exclusion_counts_are_symmetric() {
    // every cell of a square table is left out by the same number of patterns
    let d = build_design(&ModelSpec::independence(vec![4, 4], Coding::CornerPoint).unwrap()).unwrap();
    let cat = enumerate_minimal(&d, DEFAULT_ENUM_CAP).unwrap();
    assert!(cat.exclusion_counts.iter().all(|&r| r == 4179));
}
