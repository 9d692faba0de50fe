//! Simulation scenarios with planted outliers, classification rates and the
//! OMPC cutoff study.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_ol1, detect_oltcs, detect_omp, detect_ompc, Method, DEFAULT_G, DEFAULT_SUBSETS};
use crate::error::{Error, Result};
use crate::estimate::{fit, Estimator, FitResult, TrimVariant};
use crate::model::{build_design, Coding, DesignMatrix, ModelSpec};
use crate::patterns::{minimal_catalog, PatternCatalog};
use crate::region::{is_alpha_outlier, outlier_region};
use crate::rng::{stream, Rng};
use crate::table::ContingencyTable;

/// Level of the regions used by every detector in the simulations.
pub const DETECTION_ALPHA: f64 = 0.01;
pub const DEFAULT_REPLICATIONS: usize = 100;
/// Monte Carlo pattern budget when the full catalog is too large.
pub const DEFAULT_PATTERN_BUDGET: usize = 500;

const BETA1: [f64; 5] = [4.0, 0.2, -0.2, 0.4, 0.3];
const BETA2: [f64; 7] = [3.8, 0.2, -0.2, 0.1, 0.25, 0.3, -0.1];
const BETA3: [f64; 19] = [
    3.3, 0.2, -0.2, 0.1, 0.25, 0.3, -0.1, 0.4, 0.2, 0.1, 0.2, -0.4, 0.2, -0.2, 0.1, 0.0, 0.1, -0.3,
    0.1,
];

/// Type: planted above the inlier interval. Antitype: below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Type,
    Antitype,
}

/// Where a planted value sits relative to the inlier interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// `lo - 1` or `hi + 1`, the first outlying counts.
    #[default]
    Outside,
    /// `lo` or `hi` themselves.
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub cell: usize,
    pub direction: Direction,
    pub alpha: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub label: String,
    pub dims: Vec<usize>,
    /// True parameter in sum-to-zero coding.
    pub beta: Vec<f64>,
    pub planted: Vec<Plant>,
    pub replications: usize,
    pub pattern_budget: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn design(&self) -> Result<DesignMatrix> {
        let d = build_design(&ModelSpec::independence(self.dims.clone(), Coding::SumToZero)?)?;
        if d.p() != self.beta.len() {
            return Err(Error::InvalidArgument(format!(
                "beta has {} entries, model needs {}",
                self.beta.len(),
                d.p()
            )));
        }
        let mut cells: Vec<usize> = self.planted.iter().map(|p| p.cell).collect();
        cells.sort_unstable();
        if cells.windows(2).any(|w| w[0] == w[1]) || cells.last().is_some_and(|&c| c >= d.n_cells()) {
            return Err(Error::InvalidArgument("planted cells must be distinct and in range".into()));
        }
        Ok(d)
    }

    /// True cell means `exp(x_j' beta)`.
    pub fn true_means(&self) -> Result<Vec<f64>> {
        let d = self.design()?;
        Ok(d.linear_predictor(&self.beta).into_iter().map(f64::exp).collect())
    }

    /// Values inserted for the planted cells.
    pub fn planted_values(&self) -> Result<Vec<u64>> {
        let means = self.true_means()?;
        self.planted
            .iter()
            .map(|p| planted_value_at(means[p.cell], p.direction, p.alpha, p.boundary))
            .collect()
    }
}

/// The count just outside the `alpha`-inlier interval of `Poi(mean)`.
pub fn planted_value(mean: f64, direction: Direction, alpha: f64) -> Result<u64> {
    planted_value_at(mean, direction, alpha, Boundary::Outside)
}

pub fn planted_value_at(mean: f64, direction: Direction, alpha: f64, boundary: Boundary) -> Result<u64> {
    let region = outlier_region(mean, alpha)?;
    match (direction, boundary) {
        (Direction::Type, Boundary::Outside) => Ok(region.hi + 1),
        (Direction::Type, Boundary::Edge) => Ok(region.hi),
        (Direction::Antitype, Boundary::Edge) => Ok(region.lo),
        (Direction::Antitype, Boundary::Outside) => region.lo.checked_sub(1).ok_or_else(|| {
            Error::InvalidArgument(format!("no antitype below the inlier interval of mean {mean}"))
        }),
    }
}

/// The variants of one of the six standard scenarios.
pub fn scenario(number: u8, seed: u64) -> Result<Vec<ScenarioSpec>> {
    use Direction::*;
    type Setup = (Vec<usize>, &'static [f64], Vec<usize>, f64);
    let (dims, beta, cells, alpha): Setup = match number {
        1 => (vec![3, 3], &BETA1, vec![0], 1e-4),
        2 => (vec![4, 4], &BETA2, vec![0], 1e-4),
        3 => (vec![4, 4], &BETA2, vec![0, 1], 1e-4),
        4 => (vec![4, 4], &BETA2, vec![0, 5], 1e-4),
        5 => (vec![4, 4], &BETA2, vec![0, 1], 1e-8),
        6 => (vec![10, 10], &BETA3, vec![0, 12], 1e-4),
        _ => return Err(Error::InvalidArgument(format!("no scenario {number}; expected 1..6"))),
    };
    // the 10x10 tables carry the interval ends themselves (18/67 and 9/49)
    let boundary = if number == 6 { Boundary::Edge } else { Boundary::Outside };
    let variants: Vec<(&str, Vec<Direction>)> = if cells.len() == 1 {
        vec![("antitype", vec![Antitype]), ("type", vec![Type])]
    } else {
        vec![
            ("2 antitypes", vec![Antitype, Antitype]),
            ("1 type, 1 antitype", vec![Antitype, Type]),
            ("2 types", vec![Type, Type]),
        ]
    };
    Ok(variants
        .into_iter()
        .map(|(label, dirs)| ScenarioSpec {
            label: format!("{number}: {label}"),
            dims: dims.clone(),
            beta: beta.to_vec(),
            planted: cells
                .iter()
                .zip(dirs)
                .map(|(&cell, direction)| Plant {
                    cell,
                    direction,
                    alpha,
                    boundary,
                })
                .collect(),
            replications: DEFAULT_REPLICATIONS,
            pattern_budget: DEFAULT_PATTERN_BUDGET,
            seed,
        })
        .collect())
}

fn draw_table(dims: &[usize], means: &[f64], rng: &mut Rng) -> Result<ContingencyTable> {
    let counts = means
        .iter()
        .map(|&m| {
            let d = Poisson::new(m).map_err(|e| Error::Numerical(format!("Poisson({m}): {e}")))?;
            Ok(d.sample(rng) as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    ContingencyTable::new(dims.to_vec(), counts)
}

/// Independent Poisson tables with the planted cells overwritten.
/// Replication `k` draws from stream `k` of the scenario seed.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Vec<ContingencyTable>> {
    let means = spec.true_means()?;
    let values = spec.planted_values()?;
    (0..spec.replications)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(spec.seed, k as u64);
            let mut t = draw_table(&spec.dims, &means, &mut rng)?;
            for (p, &v) in spec.planted.iter().zip(&values) {
                t = t.with_count(p.cell, v);
            }
            Ok(t)
        })
        .collect()
}

/// Share of planted cells flagged and of the other cells left unflagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub label: String,
    pub method: Method,
    /// None without planted cells.
    pub outliers: Option<f64>,
    pub inliers: f64,
    pub replications: usize,
    pub failed_replications: usize,
}

/// Per-replication seed for catalogs and elemental subsets, kept apart from
/// the table streams.
fn aux_seed(seed: u64, k: usize) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1)
}

fn flag_table(
    method: Method,
    table: &ContingencyTable,
    design: &DesignMatrix,
    shared: Option<&PatternCatalog>,
    budget: usize,
    seed: u64,
) -> Result<Vec<bool>> {
    let a = DETECTION_ALPHA;
    let report = match method {
        Method::Ol1 => detect_ol1(table, design, a, Estimator::L1)?,
        Method::Oltcs => detect_oltcs(table, design, a, DEFAULT_SUBSETS, TrimVariant::Ltcs, seed)?,
        _ => {
            let own;
            let c = match shared {
                Some(c) => c,
                None => {
                    own = minimal_catalog(design, budget, seed)?;
                    &own
                }
            };
            match method {
                Method::Omp => detect_omp(table, design, a, c)?,
                Method::Ompc => detect_ompc(table, design, a, c, Estimator::Ml, DEFAULT_G)?,
                _ => detect_ompc(table, design, a, c, Estimator::L1, DEFAULT_G)?,
            }
        }
    };
    Ok(report.flags.into_iter().next().unwrap_or_default())
}

/// Runs `method` on every replication of `spec` at the simulation level.
pub fn evaluate_rates(method: Method, spec: &ScenarioSpec) -> Result<RateTable> {
    let design = spec.design()?;
    let tables = generate_scenario(spec)?;
    let n = design.n_cells();
    // an exhaustive catalog is shared; sampled ones are drawn per replication
    let shared = match minimal_catalog(&design, spec.pattern_budget, spec.seed)? {
        c if c.exhaustive => Some(c),
        _ => None,
    };
    let planted: Vec<bool> = {
        let mut m = vec![false; n];
        for p in &spec.planted {
            m[p.cell] = true;
        }
        m
    };
    let results: Vec<Option<Vec<bool>>> = tables
        .par_iter()
        .enumerate()
        .map(|(k, t)| {
            flag_table(method, t, &design, shared.as_ref(), spec.pattern_budget, aux_seed(spec.seed, k)).ok()
        })
        .collect();
    let (mut hit, mut kept, mut ok) = (0usize, 0usize, 0usize);
    for flags in results.iter().flatten() {
        ok += 1;
        for j in 0..n {
            match (planted[j], flags[j]) {
                (true, true) => hit += 1,
                (false, false) => kept += 1,
                _ => {}
            }
        }
    }
    if ok == 0 {
        return Err(Error::AllFitsFailed(tables.len()));
    }
    let n_planted = spec.planted.len();
    Ok(RateTable {
        label: spec.label.clone(),
        method,
        outliers: (n_planted > 0).then(|| hit as f64 / (n_planted * ok) as f64),
        inliers: kept as f64 / ((n - n_planted) * ok) as f64,
        replications: tables.len(),
        failed_replications: tables.len() - ok,
    })
}

/// How the cell (1,1) outlier is planted under the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CutoffPlant {
    #[default]
    Type,
    Antitype,
    /// Type or antitype with equal probability per table.
    Either,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffConfig {
    pub sizes: Vec<usize>,
    pub g_grid: Vec<f64>,
    pub tables: usize,
    pub intercept: f64,
    pub effect_range: f64,
    pub plant_alpha: f64,
    pub plant: CutoffPlant,
    pub pattern_budget: usize,
    pub seed: u64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self {
            sizes: vec![3, 4, 5, 6, 7],
            g_grid: (1..=9).map(|k| k as f64 / 10.0).collect(),
            tables: 1000,
            intercept: 3.8,
            effect_range: 0.5,
            plant_alpha: 1e-4,
            plant: CutoffPlant::default(),
            pattern_budget: DEFAULT_PATTERN_BUDGET,
            seed: 0,
        }
    }
}

/// Correct-classification rates of cell (1,1) for one table size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub size: usize,
    pub g: Vec<f64>,
    /// Share of null tables where (1,1) is not flagged.
    pub m0: Vec<f64>,
    /// Share of contaminated tables where (1,1) is flagged.
    pub m1: Vec<f64>,
    pub failed: usize,
}

/// OMPC vote `(detections, r)` for a single cell; only patterns excluding it matter.
pub fn cell_vote(
    table: &ContingencyTable,
    design: &DesignMatrix,
    alpha: f64,
    catalog: &PatternCatalog,
    estimator: Estimator,
    cell: usize,
) -> Result<(usize, usize)> {
    let y = table.counts()[cell];
    let (c, r) = catalog
        .patterns
        .par_iter()
        .filter(|w| !w.contains(cell))
        .map(|w| match fit(estimator, design, table, w) {
            Ok(f) if f.usable() => (is_alpha_outlier(y, f.fitted_means[cell], alpha) as usize, 1),
            _ => (0, 0),
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if r == 0 {
        return Err(Error::AllFitsFailed(catalog.len()));
    }
    Ok((c, r))
}

/// Cutoff study: null and contaminated tables per size, with (1,1) scored
/// at every `g` from a single vote per table.
pub fn cutoff_study(config: &CutoffConfig) -> Result<Vec<CutoffRow>> {
    if config.g_grid.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
        return Err(Error::InvalidArgument("cutoff fractions must lie in (0, 1)".into()));
    }
    config
        .sizes
        .iter()
        .enumerate()
        .map(|(s, &k)| cutoff_row(config, k, config.seed.wrapping_add((s as u64) << 32)))
        .collect()
}

fn cutoff_row(config: &CutoffConfig, k: usize, seed: u64) -> Result<CutoffRow> {
    let design = build_design(&ModelSpec::independence(vec![k, k], Coding::SumToZero)?)?;
    let shared = match minimal_catalog(&design, config.pattern_budget, seed)? {
        c if c.exhaustive => Some(c),
        _ => None,
    };
    let votes: Vec<Option<[(usize, usize); 2]>> = (0..config.tables)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let mut beta = vec![config.intercept];
            for _ in 1..design.p() {
                beta.push(rng.random_range(-config.effect_range..config.effect_range));
            }
            let means: Vec<f64> = design.linear_predictor(&beta).into_iter().map(f64::exp).collect();
            let null = draw_table(&[k, k], &means, &mut rng).ok()?;
            let direction = match config.plant {
                CutoffPlant::Type => Direction::Type,
                CutoffPlant::Antitype => Direction::Antitype,
                CutoffPlant::Either if rng.random_bool(0.5) => Direction::Type,
                CutoffPlant::Either => Direction::Antitype,
            };
            let v = planted_value(means[0], direction, config.plant_alpha).ok()?;
            let alt = null.with_count(0, v);
            let own;
            let catalog = match &shared {
                Some(c) => c,
                None => {
                    own = minimal_catalog(&design, config.pattern_budget, aux_seed(seed, t)).ok()?;
                    &own
                }
            };
            let vote = |tab: &ContingencyTable| {
                cell_vote(tab, &design, DETECTION_ALPHA, catalog, Estimator::Ml, 0).ok()
            };
            Some([vote(&null)?, vote(&alt)?])
        })
        .collect();
    let ok: Vec<_> = votes.iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::AllFitsFailed(config.tables));
    }
    let share = |pred: &dyn Fn(&[(usize, usize); 2]) -> bool| {
        ok.iter().filter(|v| pred(v)).count() as f64 / ok.len() as f64
    };
    let flagged = |(c, r): (usize, usize), g: f64| c as f64 > g * r as f64;
    Ok(CutoffRow {
        size: k,
        g: config.g_grid.clone(),
        m0: config.g_grid.iter().map(|&g| share(&|v| !flagged(v[0], g))).collect(),
        m1: config.g_grid.iter().map(|&g| share(&|v| flagged(v[1], g))).collect(),
        failed: config.tables - ok.len(),
    })
}

/// Fitted means of an ML fit on the planted-free cells, for diagnostics.
pub fn fit_without_planted(spec: &ScenarioSpec, table: &ContingencyTable) -> Result<FitResult> {
    let d = spec.design()?;
    let cells: Vec<usize> = (0..d.n_cells())
        .filter(|j| !spec.planted.iter().any(|p| p.cell == *j))
        .collect();
    fit(Estimator::Ml, &d, table, &cells)
}
