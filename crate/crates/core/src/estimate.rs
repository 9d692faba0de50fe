//! Maximum likelihood and L1 fits of loglinear Poisson models on cell subsets,
//! plus the trimmed Pearson criterion used to rank elemental fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lad::lad;
use crate::model::{dot, DesignMatrix};
use crate::table::ContingencyTable;

/// Lower cap on fitted means; saturated fits with zero counts drive them to 0.
pub const MIN_FITTED_MEAN: f64 = 1e-10;
pub const ML_MAX_ITER: usize = 100;
pub const ML_STEP_TOL: f64 = 1e-8;

/// Which estimator a detector runs on each cell subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ml,
    #[default]
    L1,
}

/// Handling of zero counts in the L1 criterion, where `log 0` is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPolicy {
    /// Replace counts by `max(y, floor)`.
    Floor(f64),
    /// Leave zero cells out of the L1 sum.
    Drop,
}

impl Default for ZeroPolicy {
    fn default() -> Self {
        ZeroPolicy::Floor(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// `exp(x_j' beta)` for every cell of the table, floored at [`MIN_FITTED_MEAN`].
    pub fitted_means: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood (ML, up to the `log y!` constant) or L1 objective.
    pub objective: f64,
    /// Set when some fitted mean hit the lower cap.
    pub capped: bool,
}

impl FitResult {
    fn from_beta(
        design: &DesignMatrix,
        beta: Vec<f64>,
        converged: bool,
        iterations: usize,
        objective: f64,
    ) -> Self {
        let mut capped = false;
        let fitted_means = design
            .linear_predictor(&beta)
            .into_iter()
            .map(|eta| {
                let m = eta.exp();
                if m < MIN_FITTED_MEAN {
                    capped = true;
                    MIN_FITTED_MEAN
                } else {
                    m
                }
            })
            .collect();
        Self {
            beta,
            fitted_means,
            converged,
            iterations,
            objective,
            capped,
        }
    }

    /// Usable for outlier flagging: converged with finite positive means.
    pub fn usable(&self) -> bool {
        self.converged && self.fitted_means.iter().all(|m| m.is_finite() && *m > 0.0)
    }
}

fn check_cells(design: &DesignMatrix, table: &ContingencyTable, cells: &[usize]) -> Result<()> {
    if table.n_cells() != design.n_cells() {
        return Err(Error::InvalidArgument(format!(
            "table has {} cells, design has {}",
            table.n_cells(),
            design.n_cells()
        )));
    }
    if cells.len() < design.p() {
        return Err(Error::RankDeficient {
            rank: cells.len(),
            p: design.p(),
        });
    }
    if let Some(&j) = cells.iter().find(|&&j| j >= design.n_cells()) {
        return Err(Error::InvalidArgument(format!("cell {j} out of range")));
    }
    Ok(())
}

/// Solves `x_j' beta = z_j` for a saturated subset (|cells| = p).
fn interpolate(design: &DesignMatrix, cells: &[usize], z: &[f64]) -> Result<Vec<f64>> {
    let p = design.p();
    let a = DMatrix::from_fn(p, p, |r, c| design.column(cells[r])[c]);
    let lu = a.lu();
    let sol = lu
        .solve(&DVector::from_column_slice(z))
        .ok_or(Error::RankDeficient { rank: p - 1, p })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient { rank: p - 1, p });
    }
    Ok(sol.iter().copied().collect())
}

/// Maximum likelihood fit on `cells` by Newton scoring (IRLS).
///
/// Starts at `beta = (log(mean + 0.5), 0, ..., 0)`; stops when the largest
/// coefficient step falls below [`ML_STEP_TOL`] or after [`ML_MAX_ITER`]
/// iterations (reported as `converged = false`).
pub fn fit_ml(design: &DesignMatrix, table: &ContingencyTable, cells: &[usize]) -> Result<FitResult> {
    check_cells(design, table, cells)?;
    let p = design.p();
    let y: Vec<f64> = cells.iter().map(|&j| table.counts()[j] as f64).collect();

    if cells.len() == p && y.iter().all(|&v| v > 0.0) {
        // exact fit
        let z: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let beta = interpolate(design, cells, &z)?;
        let ll = log_likelihood(design, cells, &y, &beta);
        return Ok(FitResult::from_beta(design, beta, true, 0, ll));
    }

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut beta = vec![0.0; p];
    beta[0] = (mean + 0.5).ln();
    let mut ll = log_likelihood(design, cells, &y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut hess = DMatrix::<f64>::zeros(p, p);
    let mut grad = DVector::<f64>::zeros(p);
    while iterations < ML_MAX_ITER {
        iterations += 1;
        hess.fill(0.0);
        grad.fill(0.0);
        for (&j, &yj) in cells.iter().zip(&y) {
            let x = design.column(j);
            let m = dot(x, &beta).exp();
            let resid = yj - m;
            for a in 0..p {
                grad[a] += resid * x[a];
                let mxa = m * x[a];
                for b in 0..=a {
                    hess[(a, b)] += mxa * x[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match hess.clone().lu().solve(&grad) {
                Some(s) => s,
                None => break,
            },
        };
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        // step halving keeps the log-likelihood from decreasing
        let mut t = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ll;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            cand_ll = log_likelihood(design, cells, &y, &candidate);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-6 {
                break;
            }
            t *= 0.5;
        }
        let max_step = step.amax() * t;
        beta = candidate;
        ll = cand_ll;
        if max_step < ML_STEP_TOL {
            converged = true;
            break;
        }
    }
    Ok(FitResult::from_beta(design, beta, converged, iterations, ll))
}

fn log_likelihood(design: &DesignMatrix, cells: &[usize], y: &[f64], beta: &[f64]) -> f64 {
    cells
        .iter()
        .zip(y)
        .map(|(&j, &yj)| {
            let eta = dot(design.column(j), beta);
            yj * eta - eta.exp()
        })
        .sum()
}

/// L1 fit: minimizes `sum |log y*_j - x_j' beta|` over `cells`.
///
/// Ties among minimizers are resolved towards the least-squares point of the
/// optimal set (see [`crate::lad`]).
pub fn fit_l1(design: &DesignMatrix, table: &ContingencyTable, cells: &[usize]) -> Result<FitResult> {
    fit_l1_with(design, table, cells, ZeroPolicy::default())
}

pub fn fit_l1_with(
    design: &DesignMatrix,
    table: &ContingencyTable,
    cells: &[usize],
    zeros: ZeroPolicy,
) -> Result<FitResult> {
    check_cells(design, table, cells)?;
    let used: Vec<usize> = match zeros {
        ZeroPolicy::Floor(_) => cells.to_vec(),
        ZeroPolicy::Drop => cells
            .iter()
            .copied()
            .filter(|&j| table.counts()[j] > 0)
            .collect(),
    };
    if used.len() < design.p() {
        return Err(Error::RankDeficient {
            rank: used.len(),
            p: design.p(),
        });
    }
    let floor = match zeros {
        ZeroPolicy::Floor(f) => f,
        ZeroPolicy::Drop => 0.0,
    };
    let z: Vec<f64> = used
        .iter()
        .map(|&j| (table.counts()[j] as f64).max(floor).ln())
        .collect();
    let p = design.p();
    if used.len() == p {
        let beta = interpolate(design, &used, &z)?;
        return Ok(FitResult::from_beta(design, beta, true, 0, 0.0));
    }
    let a = DMatrix::from_fn(used.len(), p, |r, c| design.column(used[r])[c]);
    if a.rank(crate::model::DEFAULT_RANK_TOL * a.amax().max(1.0)) < p {
        return Err(Error::RankDeficient { rank: p - 1, p });
    }
    let sol = lad(&a, &z)?;
    Ok(FitResult::from_beta(
        design,
        sol.beta,
        true,
        sol.pivots,
        sol.objective,
    ))
}

/// Dispatches on the estimator.
pub fn fit(
    estimator: Estimator,
    design: &DesignMatrix,
    table: &ContingencyTable,
    cells: &[usize],
) -> Result<FitResult> {
    match estimator {
        Estimator::Ml => fit_ml(design, table, cells),
        Estimator::L1 => fit_l1(design, table, cells),
    }
}

/// Trimming count with the best breakdown point, `floor((N + G + 2) / 2)`.
pub fn optimal_h(n: usize, g: usize) -> usize {
    (n + g + 2) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrimVariant {
    /// Sum of the `h` smallest Pearson components.
    #[default]
    Ltcs,
    /// The `h`-th smallest Pearson component alone.
    Lmcs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimSpec {
    pub h: usize,
    pub variant: TrimVariant,
}

impl TrimSpec {
    pub fn new(h: usize, variant: TrimVariant, p: usize, n: usize) -> Result<Self> {
        if h < p || h > n {
            return Err(Error::InvalidArgument(format!(
                "trimming count {h} outside [{p}, {n}]"
            )));
        }
        Ok(Self { h, variant })
    }
}

/// Pearson components `(y_j - m_j)^2 / m_j` for all cells.
pub fn pearson_components(means: &[f64], table: &ContingencyTable) -> Result<Vec<f64>> {
    means
        .iter()
        .zip(table.counts())
        .map(|(&m, &y)| {
            if !(m > 0.0) {
                return Err(Error::Numerical("fitted mean is zero".into()));
            }
            let d = y as f64 - m;
            Ok(d * d / m)
        })
        .collect()
}

/// Trimmed chi-squared criterion over all N cells.
pub fn trimmed_chisq(fit: &FitResult, table: &ContingencyTable, trim: TrimSpec) -> Result<f64> {
    trimmed_chisq_means(&fit.fitted_means, table, trim)
}

pub fn trimmed_chisq_means(means: &[f64], table: &ContingencyTable, trim: TrimSpec) -> Result<f64> {
    let mut comps = pearson_components(means, table)?;
    if trim.h == 0 || trim.h > comps.len() {
        return Err(Error::InvalidArgument(format!(
            "trimming count {} outside [1, {}]",
            trim.h,
            comps.len()
        )));
    }
    comps.sort_by(f64::total_cmp);
    Ok(match trim.variant {
        TrimVariant::Ltcs => comps[..trim.h].iter().sum(),
        TrimVariant::Lmcs => comps[trim.h - 1],
    })
}

/// Pattern-restricted variant: sums the components of the fitted cells only.
pub fn pattern_chisq(means: &[f64], table: &ContingencyTable, cells: &[usize]) -> Result<f64> {
    let comps = pearson_components(means, table)?;
    Ok(cells.iter().map(|&j| comps[j]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_design, Coding, ModelSpec};

    fn design(dims: Vec<usize>, coding: Coding) -> DesignMatrix {
        build_design(&ModelSpec::independence(dims, coding).unwrap()).unwrap()
    }

    fn glass() -> ContingencyTable {
        ContingencyTable::new(vec![3, 3], vec![588, 395, 159, 349, 714, 447, 111, 320, 411]).unwrap()
    }

    #[test]
    fn full_ml_fit_matches_margins() {
        let t = glass();
        let d = design(vec![3, 3], Coding::SumToZero);
        let f = fit_ml(&d, &t, &(0..9).collect::<Vec<_>>()).unwrap();
        assert!(f.converged);
        let c = t.counts_f64();
        let total: f64 = c.iter().sum();
        for i in 0..3 {
            for j in 0..3 {
                let row: f64 = c[i * 3..i * 3 + 3].iter().sum();
                let col: f64 = (0..3).map(|r| c[r * 3 + j]).sum();
                let want = row * col / total;
                assert!(((f.fitted_means[i * 3 + j] - want) / want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn nevada_first_cell() {
        let t = ContingencyTable::new(
            vec![4, 4],
            vec![2, 10, 4, 2, 3, 8, 4, 6, 13, 5, 3, 9, 20, 36, 19, 20],
        )
        .unwrap();
        let d = design(vec![4, 4], Coding::SumToZero);
        let f = fit_ml(&d, &t, &(0..16).collect::<Vec<_>>()).unwrap();
        assert!((f.fitted_means[0] - 18.0 * 38.0 / 164.0).abs() < 1e-9);
    }

    #[test]
    fn exact_fit_on_strictly_minimal_pattern() {
        let t = glass();
        let d = design(vec![3, 3], Coding::CornerPoint);
        let cells = [0, 1, 4, 5, 8];
        for f in [fit_ml(&d, &t, &cells).unwrap(), fit_l1(&d, &t, &cells).unwrap()] {
            for &j in &cells {
                let y = t.counts()[j] as f64;
                assert!(((f.fitted_means[j] - y) / y).abs() < 1e-10);
            }
        }
        assert_eq!(fit_l1(&d, &t, &cells).unwrap().objective, 0.0);
    }

    #[test]
    fn constant_table_l1() {
        let t = ContingencyTable::new(vec![3, 3], vec![7; 9]).unwrap();
        let d = design(vec![3, 3], Coding::SumToZero);
        let f = fit_l1(&d, &t, &(0..9).collect::<Vec<_>>()).unwrap();
        assert!((f.beta[0] - 7f64.ln()).abs() < 1e-10);
        assert!(f.beta[1..].iter().all(|b| b.abs() < 1e-10));
        assert!(f.objective.abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_subset_rejected() {
        let t = glass();
        let d = design(vec![3, 3], Coding::SumToZero);
        assert!(fit_l1(&d, &t, &[0, 1, 3, 4, 8]).is_err());
        assert!(fit_ml(&d, &t, &[0, 1]).is_err());
    }

    #[test]
    fn zero_count_saturated_fit_is_flagged() {
        let t = ContingencyTable::new(vec![3, 3], vec![0, 5, 6, 7, 8, 9, 4, 3, 2]).unwrap();
        let d = design(vec![3, 3], Coding::SumToZero);
        let f = fit_ml(&d, &t, &[0, 1, 4, 5, 8]).unwrap();
        assert!(!f.converged);
        assert!(f.fitted_means.iter().all(|&m| m >= MIN_FITTED_MEAN));
    }

    #[test]
    fn drop_policy_ignores_zero_cells() {
        let t = ContingencyTable::new(vec![3, 3], vec![0, 5, 6, 7, 8, 9, 4, 3, 2]).unwrap();
        let d = design(vec![3, 3], Coding::SumToZero);
        let all: Vec<usize> = (0..9).collect();
        let dropped = fit_l1_with(&d, &t, &all, ZeroPolicy::Drop).unwrap();
        let direct = fit_l1(&d, &t, &all[1..]).unwrap();
        for (a, b) in dropped.fitted_means.iter().zip(&direct.fitted_means) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn optimal_h_values() {
        assert_eq!(optimal_h(9, 5), 8);
        assert_eq!(optimal_h(16, 7), 12);
        assert_eq!(optimal_h(12, 8), 11);
    }

    #[test]
    fn trimmed_criterion_basics() {
        let t = glass();
        let means = t.counts_f64();
        let trim = TrimSpec::new(5, TrimVariant::Ltcs, 5, 9).unwrap();
        assert_eq!(trimmed_chisq_means(&means, &t, trim).unwrap(), 0.0);
        let d = design(vec![3, 3], Coding::SumToZero);
        let f = fit_ml(&d, &t, &(0..9).collect::<Vec<_>>()).unwrap();
        let full = TrimSpec::new(9, TrimVariant::Ltcs, 5, 9).unwrap();
        let pearson: f64 = f
            .fitted_means
            .iter()
            .zip(t.counts())
            .map(|(m, &y)| (y as f64 - m).powi(2) / m)
            .sum();
        assert!((trimmed_chisq(&f, &t, full).unwrap() - pearson).abs() < 1e-9 * pearson);
        assert!(TrimSpec::new(4, TrimVariant::Ltcs, 5, 9).is_err());
    }

    #[test]
    fn trimmed_criterion_inflated_cell() {
        // means of an exactly independent table; one count inflated
        let t = ContingencyTable::new(vec![3, 3], vec![60, 20, 20, 30, 10, 10, 30, 10, 10]).unwrap();
        let means = [30.0, 20.0, 20.0, 30.0, 10.0, 10.0, 30.0, 10.0, 10.0];
        let trim = TrimSpec::new(8, TrimVariant::Ltcs, 5, 9).unwrap();
        // only cell 0 deviates: component 30; the eight smallest are all zero
        assert_eq!(trimmed_chisq_means(&means, &t, trim).unwrap(), 0.0);
        let lmcs = TrimSpec::new(9, TrimVariant::Lmcs, 5, 9).unwrap();
        assert_eq!(trimmed_chisq_means(&means, &t, lmcs).unwrap(), 30.0);
        let zero = [0.0; 9];
        assert!(trimmed_chisq_means(&zero, &t, trim).is_err());
    }
}
