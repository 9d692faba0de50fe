#![allow(dead_code)]

use num_rational::Rational64;
use rand::Rng;

use minpat_core::region::poisson_pmf;
use minpat_core::DesignMatrix;

/// Exact rank of the design columns in `cells` (entries are small integers).
pub fn rational_rank(design: &DesignMatrix, cells: &[usize]) -> usize {
    let p = design.p();
    let mut rows: Vec<Vec<Rational64>> = cells
        .iter()
        .map(|&j| {
            design
                .column(j)
                .iter()
                .map(|&v| {
                    assert_eq!(v, v.round(), "non-integer design entry");
                    Rational64::from_integer(v as i64)
                })
                .collect()
        })
        .collect();
    let mut rank = 0;
    for col in 0..p {
        let Some(piv) = (rank..rows.len()).find(|&r| rows[r][col] != Rational64::from_integer(0)) else {
            continue;
        };
        rows.swap(rank, piv);
        let lead = rows[rank][col];
        for r in 0..rows.len() {
            if r != rank && rows[r][col] != Rational64::from_integer(0) {
                let f = rows[r][col] / lead;
                for c in col..p {
                    let v = rows[rank][c];
                    rows[r][c] -= f * v;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// All k-subsets of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for t in i..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Brute-force outlier set: y is an outlier iff the mass of all counts no more
/// likely than y is at most alpha. Returns the inlier interval.
pub fn brute_region(m: f64, alpha: f64) -> (u64, u64) {
    let top = (m + 60.0 * m.sqrt() + 60.0) as u64;
    let pmf: Vec<f64> = (0..=top).map(|y| poisson_pmf(y, m).unwrap()).collect();
    let mut order: Vec<usize> = (0..pmf.len()).collect();
    order.sort_by(|&a, &b| pmf[a].total_cmp(&pmf[b]));
    let mut outlier = vec![false; pmf.len()];
    let mut acc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // equal pmf values enter together
        let mut j = i;
        let mut group = 0.0;
        while j < order.len() && pmf[order[j]] == pmf[order[i]] {
            group += pmf[order[j]];
            j += 1;
        }
        acc += group;
        if acc > alpha {
            break;
        }
        for &k in &order[i..j] {
            outlier[k] = true;
        }
        i = j;
    }
    let lo = (0..pmf.len()).find(|&y| !outlier[y]).unwrap() as u64;
    let hi = (0..pmf.len()).rev().find(|&y| !outlier[y]).unwrap() as u64;
    (lo, hi)
}

/// Least absolute deviations optimum by enumerating interpolating p-subsets.
pub fn lad_vertex_oracle(rows: &[Vec<f64>], z: &[f64]) -> f64 {
    let n = rows.len();
    let p = rows[0].len();
    let mut best = f64::INFINITY;
    for s in subsets(n, p) {
        let a = nalgebra::DMatrix::from_fn(p, p, |r, c| rows[s[r]][c]);
        if a.clone().svd(false, false).singular_values.min() < 1e-9 {
            continue;
        }
        let rhs = nalgebra::DVector::from_iterator(p, s.iter().map(|&i| z[i]));
        let Some(beta) = a.lu().solve(&rhs) else { continue };
        let obj: f64 = (0..n)
            .map(|i| (z[i] - rows[i].iter().zip(beta.iter()).map(|(x, b)| x * b).sum::<f64>()).abs())
            .sum();
        best = best.min(obj);
    }
    best
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}
