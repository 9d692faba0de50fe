//! Outlier identification procedures: OL1, OMP, OMPC/OMPCL1 and OLTCS.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, fit_ml, optimal_h, trimmed_chisq, Estimator, FitResult, TrimSpec, TrimVariant};
use crate::model::DesignMatrix;
use crate::patterns::{sample_strictly_minimal, CellSet, PatternCatalog};
use crate::region::is_alpha_outlier;
use crate::rng::stream;
use crate::table::ContingencyTable;

/// Default OMPC cutoff fraction.
pub const DEFAULT_G: f64 = 0.5;
/// Default number of elemental subsets for OLTCS.
pub const DEFAULT_SUBSETS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ol1,
    Omp,
    Ompc,
    Ompcl1,
    Oltcs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ol1 => "ol1",
            Method::Omp => "omp",
            Method::Ompc => "ompc",
            Method::Ompcl1 => "ompcl1",
            Method::Oltcs => "oltcs",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ol1" => Method::Ol1,
            "omp" => Method::Omp,
            "ompc" => Method::Ompc,
            "ompcl1" => Method::Ompcl1,
            "oltcs" => Method::Oltcs,
            _ => return Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub method: Method,
    pub alpha: f64,
    /// Outlier indicators per cell, one vector per solution. Only OMP can
    /// return more than one.
    pub flags: Vec<Vec<bool>>,
    /// Means used for flagging, parallel to `flags`.
    pub fitted_means: Vec<Vec<f64>>,
    /// Patterns behind each solution (OMP ties, the OLTCS winner).
    pub chosen_patterns: Vec<Vec<CellSet>>,
    /// OMPC family: detections per cell across patterns excluding it.
    pub detect_counts: Option<Vec<usize>>,
    /// OMPC family: usable patterns excluding each cell.
    pub r: Option<Vec<usize>>,
    pub g: Option<f64>,
    /// OMP: `outlier_histogram[k]` patterns flagged exactly k cells.
    pub outlier_histogram: Option<Vec<usize>>,
    pub patterns_used: usize,
    pub exhaustive: bool,
    pub seed: Option<u64>,
    pub skipped_patterns: usize,
}

impl DetectionReport {
    /// Flags of the first (for most methods, only) solution.
    pub fn primary_flags(&self) -> &[bool] {
        &self.flags[0]
    }

    /// Flagged cells of solution `k`.
    pub fn outliers(&self, k: usize) -> Vec<usize> {
        self.flags[k]
            .iter()
            .enumerate()
            .filter_map(|(j, &f)| f.then_some(j))
            .collect()
    }

    /// OMPC flags recomputed for a different cutoff fraction.
    pub fn flags_at(&self, g: f64) -> Option<Vec<bool>> {
        let (c, r) = (self.detect_counts.as_ref()?, self.r.as_ref()?);
        Some(ompc_flags(c, r, g))
    }
}

fn ompc_flags(counts: &[usize], r: &[usize], g: f64) -> Vec<bool> {
    counts
        .iter()
        .zip(r)
        .map(|(&c, &r)| c as f64 > g * r as f64)
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

fn flag_all(table: &ContingencyTable, means: &[f64], alpha: f64) -> Vec<bool> {
    table
        .counts()
        .iter()
        .zip(means)
        .map(|(&y, &m)| is_alpha_outlier(y, m, alpha))
        .collect()
}

/// Fits every pattern in parallel; unusable fits come back as None.
fn fit_patterns(
    estimator: Estimator,
    design: &DesignMatrix,
    table: &ContingencyTable,
    patterns: &[CellSet],
) -> Result<Vec<Option<FitResult>>> {
    if table.n_cells() != design.n_cells() {
        return Err(Error::InvalidArgument(format!(
            "table has {} cells, design has {}",
            table.n_cells(),
            design.n_cells()
        )));
    }
    if patterns.is_empty() {
        return Err(Error::InvalidArgument("empty pattern catalog".into()));
    }
    Ok(patterns
        .par_iter()
        .map(|w| fit(estimator, design, table, w).ok().filter(FitResult::usable))
        .collect())
}

/// One-step identifier: a single fit on the complete table.
pub fn detect_ol1(
    table: &ContingencyTable,
    design: &DesignMatrix,
    alpha: f64,
    estimator: Estimator,
) -> Result<DetectionReport> {
    check_alpha(alpha)?;
    let all: Vec<usize> = (0..design.n_cells()).collect();
    let f = fit(estimator, design, table, &all)?;
    if !f.usable() {
        return Err(Error::AllFitsFailed(1));
    }
    Ok(DetectionReport {
        method: Method::Ol1,
        alpha,
        flags: vec![flag_all(table, &f.fitted_means, alpha)],
        fitted_means: vec![f.fitted_means],
        chosen_patterns: vec![Vec::new()],
        detect_counts: None,
        r: None,
        g: None,
        outlier_histogram: None,
        patterns_used: 1,
        exhaustive: true,
        seed: None,
        skipped_patterns: 0,
    })
}

/// ML fit on every minimal pattern, flagging all N cells; returns the flag sets
/// of all patterns with the fewest outliers.
pub fn detect_omp(
    table: &ContingencyTable,
    design: &DesignMatrix,
    alpha: f64,
    catalog: &PatternCatalog,
) -> Result<DetectionReport> {
    check_alpha(alpha)?;
    let fits = fit_patterns(Estimator::Ml, design, table, &catalog.patterns)?;
    let n = design.n_cells();
    let mut histogram = vec![0usize; n + 1];
    let mut best = usize::MAX;
    let mut skipped = 0;
    let mut scored = Vec::with_capacity(fits.len());
    for (w, f) in catalog.patterns.iter().zip(fits) {
        let Some(f) = f else {
            skipped += 1;
            continue;
        };
        let flags = flag_all(table, &f.fitted_means, alpha);
        let k = flags.iter().filter(|&&b| b).count();
        histogram[k] += 1;
        best = best.min(k);
        scored.push((w, k, flags, f.fitted_means));
    }
    if scored.is_empty() {
        return Err(Error::AllFitsFailed(catalog.len()));
    }
    let mut flags: Vec<Vec<bool>> = Vec::new();
    let mut means = Vec::new();
    let mut chosen: Vec<Vec<CellSet>> = Vec::new();
    for (w, k, fl, m) in scored {
        if k != best {
            continue;
        }
        match flags.iter().position(|f| *f == fl) {
            Some(i) => chosen[i].push(w.clone()),
            None => {
                flags.push(fl);
                means.push(m);
                chosen.push(vec![w.clone()]);
            }
        }
    }
    while histogram.len() > 1 && histogram.last() == Some(&0) {
        histogram.pop();
    }
    Ok(DetectionReport {
        method: Method::Omp,
        alpha,
        flags,
        fitted_means: means,
        chosen_patterns: chosen,
        detect_counts: None,
        r: None,
        g: None,
        outlier_histogram: Some(histogram),
        patterns_used: catalog.len(),
        exhaustive: catalog.exhaustive,
        seed: catalog.seed,
        skipped_patterns: skipped,
    })
}

/// Count method: each cell is tested under every pattern excluding it; it is an
/// outlier when detected in more than `g * r_j` of those patterns.
///
/// Patterns whose fit fails are left out of both the counts and `r_j`.
pub fn detect_ompc(
    table: &ContingencyTable,
    design: &DesignMatrix,
    alpha: f64,
    catalog: &PatternCatalog,
    estimator: Estimator,
    g: f64,
) -> Result<DetectionReport> {
    check_alpha(alpha)?;
    if !(0.0..=1.0).contains(&g) {
        return Err(Error::InvalidArgument(format!("cutoff fraction {g} outside [0, 1]")));
    }
    let fits = fit_patterns(estimator, design, table, &catalog.patterns)?;
    let n = design.n_cells();
    let mut counts = vec![0usize; n];
    let mut r = vec![0usize; n];
    let mut skipped = 0;
    for (w, f) in catalog.patterns.iter().zip(&fits) {
        let Some(f) = f else {
            skipped += 1;
            continue;
        };
        let inside = w.mask(n);
        for j in (0..n).filter(|&j| !inside[j]) {
            r[j] += 1;
            if is_alpha_outlier(table.counts()[j], f.fitted_means[j], alpha) {
                counts[j] += 1;
            }
        }
    }
    if skipped == catalog.len() {
        return Err(Error::AllFitsFailed(catalog.len()));
    }
    let flags = ompc_flags(&counts, &r, g);
    // report the mean over usable patterns excluding each cell
    let mut mean = vec![0.0; n];
    for (w, f) in catalog.patterns.iter().zip(&fits) {
        if let Some(f) = f {
            for j in (0..n).filter(|&j| !w.contains(j)) {
                mean[j] += f.fitted_means[j] / r[j] as f64;
            }
        }
    }
    Ok(DetectionReport {
        method: match estimator {
            Estimator::Ml => Method::Ompc,
            Estimator::L1 => Method::Ompcl1,
        },
        alpha,
        flags: vec![flags],
        fitted_means: vec![mean],
        chosen_patterns: vec![Vec::new()],
        detect_counts: Some(counts),
        r: Some(r),
        g: Some(g),
        outlier_histogram: None,
        patterns_used: catalog.len(),
        exhaustive: catalog.exhaustive,
        seed: catalog.seed,
        skipped_patterns: skipped,
    })
}

/// Elemental-subset search: ML fits on `subsets` random strictly minimal
/// patterns, keeping the one with the smallest trimmed chi-squared criterion.
/// Ties are broken by the untrimmed statistic, then by draw order.
pub fn detect_oltcs(
    table: &ContingencyTable,
    design: &DesignMatrix,
    alpha: f64,
    subsets: usize,
    variant: TrimVariant,
    seed: u64,
) -> Result<DetectionReport> {
    check_alpha(alpha)?;
    if subsets == 0 {
        return Err(Error::InvalidArgument("need at least one elemental subset".into()));
    }
    let (n, p) = (design.n_cells(), design.p());
    let trim = TrimSpec::new(optimal_h(n, p), variant, p, n)?;
    let mut rng = stream(seed, 0);
    let draws = (0..subsets)
        .map(|_| sample_strictly_minimal(design, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let full = TrimSpec::new(n, TrimVariant::Ltcs, p, n)?;
    let scored: Vec<Option<(f64, f64, FitResult)>> = draws
        .par_iter()
        .map(|w| {
            let f = fit_ml(design, table, w).ok().filter(FitResult::usable)?;
            let q = trimmed_chisq(&f, table, trim).ok()?;
            let total = trimmed_chisq(&f, table, full).ok()?;
            q.is_finite().then_some((q, total, f))
        })
        .collect();
    let skipped = scored.iter().filter(|s| s.is_none()).count();
    // near-ties on the trimmed criterion go to the smaller untrimmed statistic
    let better = |a: (f64, f64), b: (f64, f64)| {
        let tol = 1e-9 * a.0.abs().max(b.0.abs()).max(1.0);
        if (a.0 - b.0).abs() <= tol {
            a.1 < b.1
        } else {
            a.0 < b.0
        }
    };
    let best = scored
        .into_iter()
        .zip(&draws)
        .filter_map(|(s, w)| s.map(|(q, t, f)| (q, t, f, w)))
        .fold(None::<(f64, f64, FitResult, &CellSet)>, |acc, cur| match acc {
            Some(a) if !better((cur.0, cur.1), (a.0, a.1)) => Some(a),
            _ => Some(cur),
        });
    let Some((_, _, f, w)) = best else {
        return Err(Error::AllFitsFailed(subsets));
    };
    Ok(DetectionReport {
        method: Method::Oltcs,
        alpha,
        flags: vec![flag_all(table, &f.fitted_means, alpha)],
        fitted_means: vec![f.fitted_means],
        chosen_patterns: vec![vec![w.clone()]],
        detect_counts: None,
        r: None,
        g: None,
        outlier_histogram: None,
        patterns_used: subsets,
        exhaustive: false,
        seed: Some(seed),
        skipped_patterns: skipped,
    })
}
