//! Least absolute deviations regression.
//!
//! `min_beta sum_i |z_i - a_i' beta|` is solved exactly through its dual
//!
//! ```text
//! max z'd  s.t.  A'd = 0,  -1 <= d_i <= 1
//! ```
//!
//! with a bounded-variable simplex (Bland's rule, so it terminates on the
//! degenerate problems that tied counts produce). The simplex multipliers are
//! the primal coefficients. LAD minimizers are often not unique; the returned
//! point is the minimizer with the smallest sum of squared residuals, found by
//! an active-set least-squares pass over the optimal face, so the answer does
//! not depend on the pivoting path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LadSolution {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Simplex<'a> {
    // p x (n + p): structural columns are a_i, then one signed artificial per row
    cols: &'a DMatrix<f64>,
    n: usize,
    p: usize,
    binv: DMatrix<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    xb: Vec<f64>,
    pivots: usize,
}

impl<'a> Simplex<'a> {
    fn upper(&self, j: usize) -> f64 {
        if j < self.n {
            1.0
        } else {
            f64::INFINITY
        }
    }

    fn column(&self, j: usize) -> DVector<f64> {
        &self.binv * self.cols.column(j)
    }

    fn value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Lower => 0.0,
            Status::Upper => 1.0,
            Status::Basic => {
                let r = self.basis.iter().position(|&b| b == j).unwrap_or(0);
                self.xb[r]
            }
        }
    }

    fn duals(&self, cost: &[f64]) -> DVector<f64> {
        let cb = DVector::from_iterator(self.p, self.basis.iter().map(|&b| cost[b]));
        self.binv.transpose() * cb
    }

    fn pivot(&mut self, row: usize, entering: usize, w: &DVector<f64>) {
        let piv = w[row];
        for c in 0..self.p {
            self.binv[(row, c)] /= piv;
        }
        for r in 0..self.p {
            if r != row && w[r] != 0.0 {
                let f = w[r];
                for c in 0..self.p {
                    let v = self.binv[(row, c)];
                    self.binv[(r, c)] -= f * v;
                }
            }
        }
        self.basis[row] = entering;
        self.pivots += 1;
    }

    /// Maximizes `cost' x`; `allowed(j)` gates which columns may enter.
    fn optimize(&mut self, cost: &[f64], allowed: impl Fn(usize) -> bool) -> Result<()> {
        let total = self.n + self.p;
        let limit = 50 * total * total + 1000;
        for _ in 0..limit {
            let y = self.duals(cost);
            let mut entering = None;
            for j in 0..total {
                if self.status[j] == Status::Basic || !allowed(j) {
                    continue;
                }
                let d = cost[j] - y.dot(&self.cols.column(j));
                let improving = match self.status[j] {
                    Status::Lower => d > TOL,
                    Status::Upper => d < -TOL,
                    Status::Basic => false,
                };
                if improving {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return Ok(());
            };
            let sigma = if self.status[j] == Status::Lower { 1.0 } else { -1.0 };
            let w = self.column(j);
            // basic values move by -sigma * theta * w
            let mut theta = self.upper(j);
            let mut leave: Option<(usize, Status)> = None;
            for r in 0..self.p {
                let rate = sigma * w[r];
                let b = self.basis[r];
                if rate > TOL {
                    let t = self.xb[r].max(0.0) / rate;
                    if t < theta - TOL
                        || (t <= theta + TOL && leave.is_some_and(|(lr, _)| b < self.basis[lr]))
                    {
                        theta = t;
                        leave = Some((r, Status::Lower));
                    }
                } else if rate < -TOL && self.upper(b).is_finite() {
                    let t = (self.upper(b) - self.xb[r]).max(0.0) / -rate;
                    if t < theta - TOL
                        || (t <= theta + TOL && leave.is_some_and(|(lr, _)| b < self.basis[lr]))
                    {
                        theta = t;
                        leave = Some((r, Status::Upper));
                    }
                }
            }
            if !theta.is_finite() {
                return Err(Error::Numerical("unbounded LAD dual".into()));
            }
            for r in 0..self.p {
                self.xb[r] -= sigma * theta * w[r];
            }
            match leave {
                None => {
                    self.status[j] = if sigma > 0.0 { Status::Upper } else { Status::Lower };
                    self.pivots += 1;
                }
                Some((r, bound)) => {
                    let out = self.basis[r];
                    self.status[out] = bound;
                    let entering_value = if sigma > 0.0 { theta } else { 1.0 - theta };
                    self.pivot(r, j, &w);
                    self.status[j] = Status::Basic;
                    self.xb[r] = entering_value;
                }
            }
        }
        Err(Error::Numerical("LAD simplex iteration limit".into()))
    }
}

/// Solves the LAD regression of `z` on the rows of `a` (n x p, full column rank).
pub fn lad(a: &DMatrix<f64>, z: &[f64]) -> Result<LadSolution> {
    let (n, p) = a.shape();
    if z.len() != n {
        return Err(Error::InvalidArgument("response length mismatch".into()));
    }
    if n < p {
        return Err(Error::RankDeficient { rank: n, p });
    }
    // e = (d + 1) / 2 in [0, 1]:  A' e = A' 1 / 2
    let b: Vec<f64> = (0..p).map(|k| 0.5 * a.column(k).sum()).collect();
    let mut cols = DMatrix::zeros(p, n + p);
    for i in 0..n {
        for k in 0..p {
            cols[(k, i)] = a[(i, k)];
        }
    }
    let mut binv = DMatrix::zeros(p, p);
    for k in 0..p {
        let s = if b[k] < 0.0 { -1.0 } else { 1.0 };
        cols[(k, n + k)] = s;
        binv[(k, k)] = s;
    }
    let mut sx = Simplex {
        cols: &cols,
        n,
        p,
        binv,
        basis: (n..n + p).collect(),
        status: (0..n + p)
            .map(|j| if j < n { Status::Lower } else { Status::Basic })
            .collect(),
        xb: b.iter().map(|v| v.abs()).collect(),
        pivots: 0,
    };

    let phase1: Vec<f64> = (0..n + p).map(|j| if j < n { 0.0 } else { -1.0 }).collect();
    sx.optimize(&phase1, |_| true)?;
    let infeasibility: f64 = (0..p)
        .filter(|&r| sx.basis[r] >= n)
        .map(|r| sx.xb[r])
        .sum();
    if infeasibility > 1e-7 {
        return Err(Error::Numerical("LAD dual has no feasible point".into()));
    }
    // drive remaining artificials out of the basis
    for r in 0..p {
        if sx.basis[r] < n {
            continue;
        }
        let mut best: Option<(usize, f64, DVector<f64>)> = None;
        for j in 0..n {
            if sx.status[j] == Status::Basic {
                continue;
            }
            let w = sx.column(j);
            if best.as_ref().is_none_or(|(_, v, _)| w[r].abs() > *v) {
                best = Some((j, w[r].abs(), w));
            }
        }
        match best {
            Some((j, v, w)) if v > 1e-10 => {
                let value = sx.value(j);
                let out = sx.basis[r];
                sx.status[out] = Status::Lower;
                sx.pivot(r, j, &w);
                sx.status[j] = Status::Basic;
                sx.xb[r] = value;
            }
            _ => return Err(Error::RankDeficient { rank: p - 1, p }),
        }
    }
    let mut phase2: Vec<f64> = z.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, p));
    sx.optimize(&phase2, |j| j < n)?;

    let beta0 = sx.duals(&phase2);
    let e: Vec<f64> = (0..n).map(|j| sx.value(j)).collect();
    let pivots = sx.pivots;
    let beta = least_squares_on_face(a, z, beta0, &e)?;
    let objective = residuals(a, z, &beta).iter().map(|r| r.abs()).sum();
    Ok(LadSolution {
        beta: beta.iter().copied().collect(),
        objective,
        pivots,
    })
}

fn residuals(a: &DMatrix<f64>, z: &[f64], beta: &DVector<f64>) -> Vec<f64> {
    let fit = a * beta;
    z.iter().zip(fit.iter()).map(|(z, f)| z - f).collect()
}

/// Minimizes the squared residual norm over the set of LAD minimizers.
///
/// A dual solution `e` pins the optimal face: residuals vanish where
/// `0 < e_i < 1`, are non-negative where `e_i = 1` and non-positive where
/// `e_i = 0`.
fn least_squares_on_face(
    a: &DMatrix<f64>,
    z: &[f64],
    start: DVector<f64>,
    e: &[f64],
) -> Result<DVector<f64>> {
    let (n, p) = a.shape();
    let face_tol = 1e-9;
    // rows of G beta >= h
    let mut g_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        let row: Vec<f64> = a.row(i).iter().copied().collect();
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        if e[i] >= 1.0 - face_tol {
            g_rows.push((neg, -z[i]));
        } else if e[i] <= face_tol {
            g_rows.push((row, z[i]));
        } else {
            g_rows.push((row.clone(), z[i]));
            g_rows.push((neg, -z[i]));
        }
    }
    let base: f64 = residuals(a, z, &start).iter().map(|r| r.abs()).sum();
    let beta = match constrained_least_squares(a, z, &g_rows) {
        Some(b) => b,
        None => return Ok(start),
    };
    let obj: f64 = residuals(a, z, &beta).iter().map(|r| r.abs()).sum();
    if !(obj <= base + 1e-9 * (1.0 + base)) || beta.len() != p {
        return Ok(start);
    }
    Ok(beta)
}

/// `min ||A beta - z||` subject to `G beta >= h`, via reduction to a
/// least-distance problem solved by non-negative least squares.
fn constrained_least_squares(
    a: &DMatrix<f64>,
    z: &[f64],
    g_rows: &[(Vec<f64>, f64)],
) -> Option<DVector<f64>> {
    let p = a.ncols();
    let qr = a.clone().qr();
    let r = qr.r();
    let c = qr.q().transpose() * DVector::from_column_slice(z);
    let r_inv = r.try_inverse()?;
    let m = g_rows.len();
    let g = DMatrix::from_fn(m, p, |i, k| g_rows[i].0[k]);
    let h = DVector::from_iterator(m, g_rows.iter().map(|(_, v)| *v));
    let e = &g * &r_inv;
    let f = h - &e * &c;
    // scale for conditioning of the feasibility test
    let scale = 1.0 + f.amax();
    let mut ehat = DMatrix::zeros(p + 1, m);
    for i in 0..m {
        for k in 0..p {
            ehat[(k, i)] = e[(i, k)];
        }
        ehat[(p, i)] = f[i] / scale;
    }
    let mut d = DVector::zeros(p + 1);
    d[p] = 1.0;
    let x = nnls(&ehat, &d)?;
    let res = &ehat * &x - &d;
    if res.norm() < 1e-12 || res[p].abs() < 1e-14 {
        return None;
    }
    let u = DVector::from_iterator(p, (0..p).map(|k| -res[k] / res[p])) * scale;
    Some(&r_inv * (u + c))
}

/// Lawson-Hanson non-negative least squares `min ||A x - b||, x >= 0`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.ncols();
    let tol = 1e-12 * (1.0 + a.amax()) * n.max(1) as f64;
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve = |passive: &[bool]| -> Option<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
        let sol = sub.svd(true, true).solve(b, 1e-13).ok()?;
        let mut s = DVector::zeros(n);
        for (c, &j) in idx.iter().enumerate() {
            s[j] = sol[c];
        }
        Some(s)
    };
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let pick = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = pick else {
            return Some(x);
        };
        passive[j] = true;
        for _ in 0..(3 * n + 10) {
            let s = solve(&passive)?;
            if (0..n).filter(|&k| passive[k]).all(|k| s[k] > tol) {
                x = s;
                break;
            }
            let mut step = 1.0f64;
            for k in (0..n).filter(|&k| passive[k] && s[k] <= tol) {
                step = step.min(x[k] / (x[k] - s[k]));
            }
            x += step * (&s - &x);
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(a: &DMatrix<f64>, z: &[f64]) -> f64 {
        // an LAD optimum interpolates p observations
        let (n, p) = a.shape();
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..p).collect();
        loop {
            let sub = DMatrix::from_fn(p, p, |r, c| a[(idx[r], c)]);
            if let Some(inv) = sub.clone().try_inverse() {
                if sub.determinant().abs() > 1e-9 {
                    let rhs = DVector::from_iterator(p, idx.iter().map(|&i| z[i]));
                    let beta = inv * rhs;
                    let obj: f64 = residuals(a, z, &beta).iter().map(|r| r.abs()).sum();
                    best = best.min(obj);
                }
            }
            // next combination
            let mut k = p;
            while k > 0 && idx[k - 1] == n - p + k - 1 {
                k -= 1;
            }
            if k == 0 {
                return best;
            }
            idx[k - 1] += 1;
            for t in k..p {
                idx[t] = idx[t - 1] + 1;
            }
        }
    }

    #[test]
    fn simple_line() {
        let a = DMatrix::from_row_slice(5, 2, &[1., 0., 1., 1., 1., 2., 1., 3., 1., 4.]);
        let z = [0.0, 1.0, 2.0, 3.0, 40.0];
        let s = lad(&a, &z).unwrap();
        assert!((s.beta[0]).abs() < 1e-9 && (s.beta[1] - 1.0).abs() < 1e-9);
        assert!((s.objective - 36.0).abs() < 1e-9);
    }

    #[test]
    fn median_with_ties_is_least_squares_point() {
        // minimizers of sum |z_i - b| form [2, 3]; the least-squares pick is the mean clipped to it
        let a = DMatrix::from_element(4, 1, 1.0);
        let s = lad(&a, &[1.0, 2.0, 3.0, 10.0]).unwrap();
        assert!((s.beta[0] - 3.0).abs() < 1e-9, "{:?}", s.beta);
        let s = lad(&a, &[1.0, 2.0, 3.0, 3.5]).unwrap();
        assert!((s.beta[0] - 2.375).abs() < 1e-9, "{:?}", s.beta);
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (1u64 << 31) as f64
        };
        for trial in 0..40 {
            let n = 6 + trial % 5;
            let p = 2 + trial % 3;
            let a = DMatrix::from_fn(n, p, |_, c| if c == 0 { 1.0 } else { (next() * 4.0).round() - 2.0 });
            if a.rank(1e-9) < p {
                continue;
            }
            let z: Vec<f64> = (0..n).map(|_| (next() * 6.0).round()).collect();
            let s = lad(&a, &z).unwrap();
            let best = brute_force(&a, &z);
            assert!((s.objective - best).abs() < 1e-8, "trial {trial}: {} vs {best}", s.objective);
        }
    }
}
