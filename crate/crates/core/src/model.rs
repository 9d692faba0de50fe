//! Design matrices of hierarchical loglinear Poisson models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::multi_index;

/// Relative singular-value tolerance used for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Coding of the factor effect columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    /// Indicators of every level but the last.
    CornerPoint,
    /// Effect coding: `1` at the level, `-1` at the last level.
    #[default]
    SumToZero,
}

impl std::str::FromStr for Coding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sumzero" | "sumtozero" | "effect" => Ok(Coding::SumToZero),
            "corner" | "cornerpoint" | "treatment" => Ok(Coding::CornerPoint),
            other => Err(Error::InvalidModel(format!("unknown coding `{other}`"))),
        }
    }
}

/// A hierarchical loglinear model given by its generating class.
///
/// Factors are 0-based here; the textual form uses 1-based factor numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dims: Vec<usize>,
    pub terms: Vec<Vec<usize>>,
    pub coding: Coding,
}

impl ModelSpec {
    pub fn new(dims: Vec<usize>, terms: Vec<Vec<usize>>, coding: Coding) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidDims(format!("{dims:?}")));
        }
        let mut seen: Vec<Vec<usize>> = Vec::new();
        for term in &terms {
            let mut t = term.clone();
            t.sort_unstable();
            t.dedup();
            if t.is_empty() {
                return Err(Error::InvalidModel("empty term".into()));
            }
            if t.len() != term.len() {
                return Err(Error::InvalidModel(format!(
                    "term {term:?} repeats a factor"
                )));
            }
            if let Some(&f) = t.iter().find(|&&f| f >= dims.len()) {
                return Err(Error::InvalidModel(format!(
                    "factor {} does not exist in a {}-way table",
                    f + 1,
                    dims.len()
                )));
            }
            if seen.contains(&t) {
                return Err(Error::InvalidModel(format!("duplicate term {term:?}")));
            }
            seen.push(t);
        }
        Ok(Self {
            dims,
            terms: seen,
            coding,
        })
    }

    /// Mutual independence of all factors (main effects only).
    pub fn independence(dims: Vec<usize>, coding: Coding) -> Result<Self> {
        let terms = (0..dims.len()).map(|f| vec![f]).collect();
        Self::new(dims, terms, coding)
    }

    /// Parses `independence` or a generating class like `1,2|2,3`.
    pub fn parse(text: &str, dims: Vec<usize>, coding: Coding) -> Result<Self> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("independence") || text.eq_ignore_ascii_case("indep") {
            return Self::independence(dims, coding);
        }
        let mut terms = Vec::new();
        for part in text.split('|') {
            let mut term = Vec::new();
            for f in part.split(',') {
                let f = f.trim();
                let v: usize = f
                    .parse()
                    .map_err(|_| Error::InvalidModel(format!("`{f}` is not a factor number")))?;
                if v == 0 {
                    return Err(Error::InvalidModel("factor numbers are 1-based".into()));
                }
                term.push(v - 1);
            }
            terms.push(term);
        }
        Self::new(dims, terms, coding)
    }

    /// True for the main-effects model of a two-way table.
    pub fn is_two_way_independence(&self) -> bool {
        self.dims.len() == 2
            && self.expanded_terms() == vec![vec![0], vec![1]]
    }

    /// All terms implied by the generating class, ordered by size then lexicographically.
    pub fn expanded_terms(&self) -> Vec<Vec<usize>> {
        let mut all: Vec<Vec<usize>> = Vec::new();
        for term in &self.terms {
            let k = term.len();
            for mask in 1u32..(1 << k) {
                let sub: Vec<usize> = (0..k)
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| term[b])
                    .collect();
                if !all.contains(&sub) {
                    all.push(sub);
                }
            }
        }
        all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        all
    }

    pub fn textual(&self) -> String {
        self.terms
            .iter()
            .map(|t| {
                t.iter()
                    .map(|f| (f + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// The p×N design matrix; column `j` is the regressor of cell `j`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    spec: ModelSpec,
    rank_tol: f64,
}

fn effect_value(coding: Coding, level: usize, column_level: usize, levels: usize) -> f64 {
    if level == column_level {
        1.0
    } else if coding == Coding::SumToZero && level == levels - 1 {
        -1.0
    } else {
        0.0
    }
}

/// Every combination of levels `0..sizes[k]`, last position fastest.
fn level_combinations(sizes: &[usize]) -> Vec<Vec<usize>> {
    sizes.iter().fold(vec![Vec::new()], |acc, &size| {
        acc.into_iter()
            .flat_map(|prefix| {
                (0..size).map(move |l| {
                    let mut next = prefix.clone();
                    next.push(l);
                    next
                })
            })
            .collect()
    })
}

/// Builds the design matrix and checks that it has full row rank.
pub fn build_design(spec: &ModelSpec) -> Result<DesignMatrix> {
    let dims = &spec.dims;
    let n: usize = dims.iter().product();
    let cells: Vec<Vec<usize>> = (0..n).map(|j| multi_index(j, dims)).collect::<Result<_>>()?;

    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for term in spec.expanded_terms() {
        let sizes: Vec<usize> = term.iter().map(|&f| dims[f] - 1).collect();
        for levels in level_combinations(&sizes) {
            let row: Vec<f64> = cells
                .iter()
                .map(|c| {
                    term.iter()
                        .zip(&levels)
                        .map(|(&f, &l)| effect_value(spec.coding, c[f], l, dims[f]))
                        .product()
                })
                .collect();
            rows.push(row);
        }
    }
    let p = rows.len();
    let matrix = DMatrix::from_fn(p, n, |r, c| rows[r][c]);
    let design = DesignMatrix {
        matrix,
        spec: spec.clone(),
        rank_tol: DEFAULT_RANK_TOL,
    };
    let all: Vec<usize> = (0..n).collect();
    let rank = design.rank_of(&all);
    if rank < p {
        return Err(Error::RankDeficient { rank, p });
    }
    Ok(design)
}

impl DesignMatrix {
    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cells(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn with_rank_tol(mut self, tol: f64) -> Self {
        self.rank_tol = tol;
        self
    }

    /// Column of cell `j` as a contiguous slice.
    pub fn column(&self, j: usize) -> &[f64] {
        let p = self.p();
        &self.matrix.as_slice()[j * p..(j + 1) * p]
    }

    /// `(I, J)` when this is the two-way independence model.
    pub fn two_way_geometry(&self) -> Option<(usize, usize)> {
        self.spec
            .is_two_way_independence()
            .then(|| (self.spec.dims[0], self.spec.dims[1]))
    }

    /// Linear predictor `x_j' beta` for every cell.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_cells())
            .map(|j| dot(self.column(j), beta))
            .collect()
    }

    /// The p×|cells| submatrix.
    pub fn submatrix(&self, cells: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), cells.len(), |r, c| self.matrix[(r, cells[c])])
    }

    /// Numerical rank of the columns in `cells`, counting singular values above
    /// `rank_tol` times the largest one.
    pub fn rank_of(&self, cells: &[usize]) -> usize {
        if cells.is_empty() {
            return 0;
        }
        let sub = self.submatrix(cells);
        let sv = sub.singular_values();
        let top = sv.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > self.rank_tol * top).count()
    }

    /// True iff the submatrix on `cells` has rank p.
    pub fn submatrix_full_rank(&self, cells: &[usize]) -> Result<bool> {
        if cells.is_empty() {
            return Err(Error::InvalidArgument("empty cell set".into()));
        }
        if let Some(&j) = cells.iter().find(|&&j| j >= self.n_cells()) {
            return Err(Error::InvalidArgument(format!("cell {j} out of range")));
        }
        if cells.len() < self.p() {
            return Ok(false);
        }
        Ok(self.rank_of(cells) == self.p())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
