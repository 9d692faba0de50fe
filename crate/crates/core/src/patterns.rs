//! Minimal and strictly minimal patterns: decision, enumeration, sampling.
//!
//! For the two-way independence model a cell `(i, j)` is an edge between row
//! vertex `i` and column vertex `j` of the complete bipartite graph `K_{I,J}`.
//! A set of cells contains a k-cycle exactly when its graph has a cycle, has a
//! full-rank submatrix exactly when the graph is connected and spanning, and is
//! strictly minimal exactly when it is a spanning tree. Other models fall back
//! to numerical rank checks.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DesignMatrix;
use crate::rng::{stream, Rng};

/// Default cap on the number of candidate subsets an enumeration may scan.
pub const DEFAULT_ENUM_CAP: u128 = 10_000_000;
/// Above this many patterns detectors switch to Monte Carlo catalogs.
pub const MAX_EXHAUSTIVE_PATTERNS: usize = 10_000;

/// Sorted set of distinct flat cell indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellSet(Vec<usize>);

impl CellSet {
    pub fn new(mut cells: Vec<usize>, n_cells: usize) -> Result<Self> {
        cells.sort_unstable();
        if cells.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("repeated cell in cell set".into()));
        }
        if let Some(&j) = cells.last() {
            if j >= n_cells {
                return Err(Error::InvalidArgument(format!(
                    "cell {j} out of range for {n_cells} cells"
                )));
            }
        }
        Ok(Self(cells))
    }

    fn from_sorted(cells: Vec<usize>) -> Self {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        Self(cells)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.0.binary_search(&cell).is_ok()
    }

    /// Membership mask over `n_cells` cells.
    pub fn mask(&self, n_cells: usize) -> Vec<bool> {
        let mut m = vec![false; n_cells];
        for &j in &self.0 {
            m[j] = true;
        }
        m
    }
}

impl std::ops::Deref for CellSet {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Union-find over row and column vertices.
#[derive(Clone)]
struct Forest {
    parent: Vec<usize>,
    components: usize,
}

impl Forest {
    fn new(vertices: usize) -> Self {
        Self {
            parent: (0..vertices).collect(),
            components: vertices,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the components of `a` and `b`; false if they were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        self.components -= 1;
        true
    }
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    rows: usize,
    cols: usize,
}

impl Grid {
    fn ends(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, self.rows + cell % self.cols)
    }

    fn forest(&self) -> Forest {
        Forest::new(self.rows + self.cols)
    }
}

/// True iff some subset of `cells` forms a k-cycle in an `rows x cols` table.
pub fn contains_k_cycle(cells: &[usize], rows: usize, cols: usize) -> bool {
    let grid = Grid { rows, cols };
    let mut f = grid.forest();
    cells.iter().any(|&c| {
        let (r, k) = grid.ends(c);
        !f.union(r, k)
    })
}

/// Size of a minimal pattern: `max(p, floor(N/2) + 1)`.
pub fn minimal_size(p: usize, n_cells: usize) -> usize {
    p.max(n_cells / 2 + 1)
}

fn grid_of(design: &DesignMatrix) -> Option<Grid> {
    design
        .two_way_geometry()
        .map(|(rows, cols)| Grid { rows, cols })
}

fn two_way_full_rank(grid: Grid, cells: &[usize]) -> bool {
    let mut f = grid.forest();
    for &c in cells {
        let (r, k) = grid.ends(c);
        f.union(r, k);
    }
    f.components == 1
}

fn full_rank(design: &DesignMatrix, cells: &[usize]) -> bool {
    if cells.iter().any(|&j| j >= design.n_cells()) || cells.len() < design.p() {
        return false;
    }
    match grid_of(design) {
        Some(grid) => two_way_full_rank(grid, cells),
        None => design.submatrix_full_rank(cells).unwrap_or(false),
    }
}

fn distinct(cells: &[usize]) -> bool {
    let mut v = cells.to_vec();
    v.sort_unstable();
    v.windows(2).all(|w| w[0] != w[1])
}

/// Exactly p cells with a full-rank submatrix. Uses the cycle criterion for
/// two-way independence and a rank check otherwise.
pub fn is_strictly_minimal(design: &DesignMatrix, cells: &[usize]) -> bool {
    cells.len() == design.p() && distinct(cells) && full_rank(design, cells)
}

/// Exactly `max(p, floor(N/2)+1)` cells with a full-rank submatrix.
pub fn is_minimal_pattern(design: &DesignMatrix, cells: &[usize]) -> bool {
    cells.len() == minimal_size(design.p(), design.n_cells())
        && distinct(cells)
        && full_rank(design, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Minimal,
    StrictlyMinimal,
}

/// A collection of patterns and the per-cell exclusion counts `r_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCatalog {
    pub kind: PatternKind,
    /// Cells per pattern.
    pub size: usize,
    pub n_cells: usize,
    /// For sampled catalogs these are the raw draws, repeats included.
    pub patterns: Vec<CellSet>,
    pub exhaustive: bool,
    pub seed: Option<u64>,
    /// `r_j`: number of patterns not containing cell `j`.
    pub exclusion_counts: Vec<usize>,
}

impl PatternCatalog {
    fn build(
        kind: PatternKind,
        size: usize,
        n_cells: usize,
        patterns: Vec<CellSet>,
        exhaustive: bool,
        seed: Option<u64>,
    ) -> Self {
        let mut exclusion_counts = vec![patterns.len(); n_cells];
        for w in &patterns {
            for &j in w.iter() {
                exclusion_counts[j] -= 1;
            }
        }
        Self {
            kind,
            size,
            n_cells,
            patterns,
            exhaustive,
            seed,
            exclusion_counts,
        }
    }

    /// Wraps an explicit list of patterns.
    pub fn from_patterns(
        design: &DesignMatrix,
        kind: PatternKind,
        patterns: Vec<CellSet>,
    ) -> Result<Self> {
        let size = match kind {
            PatternKind::Minimal => minimal_size(design.p(), design.n_cells()),
            PatternKind::StrictlyMinimal => design.p(),
        };
        for w in &patterns {
            let ok = match kind {
                PatternKind::Minimal => is_minimal_pattern(design, w),
                PatternKind::StrictlyMinimal => is_strictly_minimal(design, w),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "{:?} is not a {kind:?} pattern",
                    w.as_slice()
                )));
            }
        }
        Ok(Self::build(kind, size, design.n_cells(), patterns, false, None))
    }

    /// `W`, the number of patterns (draws, for sampled catalogs).
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Sorted distinct patterns.
    pub fn distinct(&self) -> Vec<CellSet> {
        let mut v = self.patterns.clone();
        v.sort();
        v.dedup();
        v
    }

    /// One pattern per line, cells as space-separated 0-based indices.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for w in &self.patterns {
            let s: Vec<String> = w.iter().map(|j| j.to_string()).collect();
            out.push_str(&s.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses [`PatternCatalog::to_lines`] output, validating every pattern.
    pub fn from_lines(design: &DesignMatrix, kind: PatternKind, text: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells = line
                .split_whitespace()
                .map(|f| {
                    f.parse::<usize>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("`{f}` is not a cell index"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            patterns.push(CellSet::new(cells, design.n_cells())?);
        }
        Self::from_patterns(design, kind, patterns)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of candidate subsets an exhaustive scan for `kind` visits, `C(N, size)`.
pub fn candidate_count(design: &DesignMatrix, kind: PatternKind) -> u128 {
    let size = match kind {
        PatternKind::Minimal => minimal_size(design.p(), design.n_cells()),
        PatternKind::StrictlyMinimal => design.p(),
    };
    binomial(design.n_cells(), size)
}

/// Depth-first subset scan in lexicographic order. `state` carries the
/// incremental validity structure; `push` returns None when the prefix can be
/// pruned.
fn scan<S: Clone>(
    n: usize,
    size: usize,
    prefix: &mut Vec<usize>,
    start: usize,
    state: &S,
    push: &(dyn Fn(&S, usize, usize) -> Option<S> + Sync),
    accept: &(dyn Fn(&S) -> bool + Sync),
    out: &mut Vec<CellSet>,
) {
    if prefix.len() == size {
        if accept(state) {
            out.push(CellSet::from_sorted(prefix.clone()));
        }
        return;
    }
    let remaining = size - prefix.len();
    for c in start..=(n - remaining) {
        if let Some(next) = push(state, c, prefix.len() + 1) {
            prefix.push(c);
            scan(n, size, prefix, c + 1, &next, push, accept, out);
            prefix.pop();
        }
    }
}

/// Incremental orthonormal basis of the chosen design columns.
#[derive(Clone)]
struct Span {
    basis: Vec<Vec<f64>>,
}

impl Span {
    fn with(&self, col: &[f64]) -> (Span, bool) {
        let mut v = col.to_vec();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for b in &self.basis {
                let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= d * bi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-9 * norm0.max(1.0) {
            return (self.clone(), false);
        }
        let mut basis = self.basis.clone();
        basis.push(v.into_iter().map(|x| x / norm).collect());
        (Span { basis }, true)
    }
}

/// Exhaustive catalog of minimal or strictly minimal patterns.
///
/// Two-way independence scans with cycle/connectivity pruning; other models
/// prune prefixes whose rank can no longer reach p. Fails with
/// [`Error::EnumerationCap`] when `C(N, size)` exceeds `cap`.
pub fn enumerate(design: &DesignMatrix, kind: PatternKind, cap: u128) -> Result<PatternCatalog> {
    let candidates = candidate_count(design, kind);
    if candidates > cap {
        return Err(Error::EnumerationCap { candidates, cap });
    }
    let n = design.n_cells();
    let p = design.p();
    let size = match kind {
        PatternKind::Minimal => minimal_size(p, n),
        PatternKind::StrictlyMinimal => p,
    };
    let strict = kind == PatternKind::StrictlyMinimal;
    let leads: Vec<usize> = (0..=(n - size)).collect();

    let patterns: Vec<CellSet> = match grid_of(design) {
        Some(grid) => {
            let push = move |f: &Forest, c: usize, depth: usize| -> Option<Forest> {
                let mut f = f.clone();
                let (r, k) = grid.ends(c);
                let merged = f.union(r, k);
                if strict && !merged {
                    return None;
                }
                // each further cell merges at most two components
                if f.components - 1 > size - depth {
                    return None;
                }
                Some(f)
            };
            let accept = |f: &Forest| f.components == 1;
            leads
                .par_iter()
                .map(|&lead| {
                    let mut out = Vec::new();
                    if let Some(f) = push(&grid.forest(), lead, 1) {
                        let mut prefix = vec![lead];
                        scan(n, size, &mut prefix, lead + 1, &f, &push, &accept, &mut out);
                    }
                    out
                })
                .flatten()
                .collect()
        }
        None => {
            let push = move |s: &(Span, usize), c: usize, depth: usize| -> Option<(Span, usize)> {
                let (span, added) = s.0.with(design.column(c));
                if strict && !added {
                    return None;
                }
                if span.basis.len() + (size - depth) < p {
                    return None;
                }
                Some((span, depth))
            };
            let accept = |s: &(Span, usize)| s.0.basis.len() == p;
            let found: Vec<CellSet> = leads
                .par_iter()
                .map(|&lead| {
                    let mut out = Vec::new();
                    let empty = (Span { basis: Vec::new() }, 0);
                    if let Some(s) = push(&empty, lead, 1) {
                        let mut prefix = vec![lead];
                        scan(n, size, &mut prefix, lead + 1, &s, &push, &accept, &mut out);
                    }
                    out
                })
                .flatten()
                .collect();
            // confirm with the SVD rank check
            found
                .into_iter()
                .filter(|w| design.submatrix_full_rank(w).unwrap_or(false))
                .collect()
        }
    };
    Ok(PatternCatalog::build(kind, size, n, patterns, true, None))
}

pub fn enumerate_minimal(design: &DesignMatrix, cap: u128) -> Result<PatternCatalog> {
    enumerate(design, PatternKind::Minimal, cap)
}

pub fn enumerate_strictly_minimal(design: &DesignMatrix, cap: u128) -> Result<PatternCatalog> {
    enumerate(design, PatternKind::StrictlyMinimal, cap)
}

/// Uniform spanning tree of `K_{rows,cols}` by Wilson's loop-erased walks.
fn uniform_spanning_tree(grid: Grid, rng: &mut Rng) -> Vec<usize> {
    let v = grid.rows + grid.cols;
    let mut in_tree = vec![false; v];
    let mut next = vec![usize::MAX; v];
    in_tree[0] = true;
    let step = |u: usize, rng: &mut Rng| -> usize {
        if u < grid.rows {
            grid.rows + rng.random_range(0..grid.cols)
        } else {
            rng.random_range(0..grid.rows)
        }
    };
    for start in 1..v {
        let mut u = start;
        while !in_tree[u] {
            next[u] = step(u, rng);
            u = next[u];
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u];
        }
    }
    let mut cells: Vec<usize> = (1..v)
        .map(|u| {
            let w = next[u];
            let (r, c) = if u < grid.rows { (u, w - grid.rows) } else { (w, u - grid.rows) };
            r * grid.cols + c
        })
        .collect();
    cells.sort_unstable();
    cells
}

/// Sequential cycle-avoiding construction: pick cells uniformly from the
/// candidates, dropping every candidate that would close a cycle.
///
/// Every result is strictly minimal, but tree shapes are not equally likely;
/// [`sample_strictly_minimal`] is the uniform sampler.
pub fn sample_strictly_minimal_sequential(
    rows: usize,
    cols: usize,
    rng: &mut Rng,
) -> Vec<usize> {
    let grid = Grid { rows, cols };
    let mut forest = grid.forest();
    let mut candidates: Vec<usize> = (0..rows * cols).collect();
    let mut chosen = Vec::with_capacity(rows + cols - 1);
    while chosen.len() < rows + cols - 1 {
        let pick = candidates.swap_remove(rng.random_range(0..candidates.len()));
        let (r, k) = grid.ends(pick);
        forest.union(r, k);
        chosen.push(pick);
        candidates.retain(|&c| {
            let (r, k) = grid.ends(c);
            forest.find(r) != forest.find(k)
        });
        candidates.sort_unstable();
    }
    chosen.sort_unstable();
    chosen
}

fn random_subset(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut v = rand::seq::index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

const REJECTION_TRIES: usize = 10_000;

/// Greedy random basis: visit cells in random order, keep those that raise the rank.
fn greedy_basis(design: &DesignMatrix, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = design.n_cells();
    let order = rand::seq::index::sample(rng, n, n).into_vec();
    let mut span = Span { basis: Vec::new() };
    let mut out = Vec::new();
    for c in order {
        let (next, added) = span.with(design.column(c));
        if added {
            span = next;
            out.push(c);
            if out.len() == design.p() {
                out.sort_unstable();
                return Ok(out);
            }
        }
    }
    Err(Error::RankDeficient {
        rank: out.len(),
        p: design.p(),
    })
}

/// Draws a strictly minimal pattern uniformly at random.
///
/// Two-way independence: a uniform spanning tree of the row/column graph.
/// Other models: uniform p-subsets until one has full rank (a greedy basis
/// after many rejections).
pub fn sample_strictly_minimal(design: &DesignMatrix, rng: &mut Rng) -> Result<CellSet> {
    if let Some(grid) = grid_of(design) {
        return Ok(CellSet::from_sorted(uniform_spanning_tree(grid, rng)));
    }
    let (n, p) = (design.n_cells(), design.p());
    for _ in 0..REJECTION_TRIES {
        let s = random_subset(n, p, rng);
        if design.submatrix_full_rank(&s)? {
            return Ok(CellSet::from_sorted(s));
        }
    }
    greedy_basis(design, rng).map(CellSet::from_sorted)
}

/// Draws a minimal pattern uniformly at random: uniform subsets of the pattern
/// size, rejected until one has full rank. When rejections pile up it falls back
/// to a strictly minimal core extended by uniformly chosen extra cells.
pub fn sample_minimal(design: &DesignMatrix, rng: &mut Rng) -> Result<CellSet> {
    let (n, p) = (design.n_cells(), design.p());
    let size = minimal_size(p, n);
    if size == p {
        return sample_strictly_minimal(design, rng);
    }
    for _ in 0..REJECTION_TRIES {
        let s = random_subset(n, size, rng);
        if full_rank(design, &s) {
            return Ok(CellSet::from_sorted(s));
        }
    }
    extend_core(design, rng)
}

/// A strictly minimal core plus `size - p` uniformly chosen further cells.
pub fn extend_core(design: &DesignMatrix, rng: &mut Rng) -> Result<CellSet> {
    let (n, p) = (design.n_cells(), design.p());
    let size = minimal_size(p, n);
    let core = sample_strictly_minimal(design, rng)?;
    let rest: Vec<usize> = (0..n).filter(|&j| !core.contains(j)).collect();
    let mut cells = core.0;
    for i in rand::seq::index::sample(rng, rest.len(), size - p) {
        cells.push(rest[i]);
    }
    cells.sort_unstable();
    Ok(CellSet::from_sorted(cells))
}

/// Monte Carlo catalog of `draws` patterns (with replacement) from one seeded stream.
pub fn sample_catalog(
    design: &DesignMatrix,
    kind: PatternKind,
    draws: usize,
    seed: u64,
) -> Result<PatternCatalog> {
    let mut rng = stream(seed, 0);
    let patterns = (0..draws)
        .map(|_| match kind {
            PatternKind::Minimal => sample_minimal(design, &mut rng),
            PatternKind::StrictlyMinimal => sample_strictly_minimal(design, &mut rng),
        })
        .collect::<Result<Vec<_>>>()?;
    let size = match kind {
        PatternKind::Minimal => minimal_size(design.p(), design.n_cells()),
        PatternKind::StrictlyMinimal => design.p(),
    };
    Ok(PatternCatalog::build(
        kind,
        size,
        design.n_cells(),
        patterns,
        false,
        Some(seed),
    ))
}

/// Catalog of minimal patterns for detection: the exhaustive list when it has at
/// most [`MAX_EXHAUSTIVE_PATTERNS`] members and is cheap to scan, otherwise
/// `budget` sampled patterns.
pub fn minimal_catalog(design: &DesignMatrix, budget: usize, seed: u64) -> Result<PatternCatalog> {
    const SCAN_LIMIT: u128 = 1_000_000;
    if candidate_count(design, PatternKind::Minimal) <= SCAN_LIMIT {
        let cat = enumerate_minimal(design, SCAN_LIMIT)?;
        if cat.len() <= MAX_EXHAUSTIVE_PATTERNS {
            return Ok(cat);
        }
    }
    sample_catalog(design, PatternKind::Minimal, budget, seed)
}
