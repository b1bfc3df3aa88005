//! Linear solvers for the symmetric positive definite systems.
//!
//! Two backends are provided: Jacobi-preconditioned conjugate gradients and
//! an envelope (profile) Cholesky factorization on a reverse Cuthill-McKee
//! ordering. Both are deterministic for fixed input.

use std::collections::VecDeque;

use thiserror::Error;

use super::sparse::{dot, norm, SparseSymMatrix};
use crate::config::SolverKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("saddle-point system is singular (Schur complement {0:.3e})")]
    SaddleBreakdown(f64),
}

pub const DEFAULT_TOL: f64 = 1e-10;

/// Solve `A x = rhs` with Jacobi-preconditioned CG to relative residual `tol`.
pub fn solve_spd(a: &SparseSymMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>, SolveError> {
    let max_iter = (10 * a.dim()).max(1000);
    pcg(a, rhs, None, tol, max_iter).map(|(x, _)| x)
}

/// Preconditioned conjugate gradients; returns the solution and the
/// iteration count.
pub fn pcg(
    a: &SparseSymMatrix,
    rhs: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = a.dim();
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = guess.map_or_else(|| vec![0.0; n], |g| g.to_vec());
    let mut r = a.mul_vec(&x);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok((x, it));
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SolveError::NotPositiveDefinite { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if res <= tol {
        Ok((x, max_iter))
    } else {
        Err(SolveError::NotConverged {
            iterations: max_iter,
            residual: res,
        })
    }
}

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = peripheral_node(a, seed, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = a.row(v).0.iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn peripheral_node(a: &SparseSymMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut start = seed;
    let mut ecc = 0;
    for _ in 0..4 {
        let (far, depth) = farthest(a, start, degree);
        if depth <= ecc {
            break;
        }
        ecc = depth;
        start = far;
    }
    start
}

fn farthest(a: &SparseSymMatrix, start: usize, degree: &[usize]) -> (usize, usize) {
    let mut level = vec![usize::MAX; a.dim()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0);
    while let Some(v) = queue.pop_front() {
        let l = level[v];
        if l > best.1 || (l == best.1 && degree[v] < degree[best.0]) {
            best = (v, l);
        }
        for &w in a.row(v).0 {
            if level[w] == usize::MAX {
                level[w] = l + 1;
                queue.push_back(w);
            }
        }
    }
    best
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Envelope Cholesky factor `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl CholeskyFactor {
    pub fn factor(a: &SparseSymMatrix) -> Result<Self, SolveError> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &j in a.row(old).0 {
                first[new] = first[new].min(inv[j]);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (new, &old) in perm.iter().enumerate() {
            let (cols, vals) = a.row(old);
            for (&j, &v) in cols.iter().zip(vals) {
                let jn = inv[j];
                if jn <= new {
                    data[offset[new] + jn - first[new]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(offset[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let row_j = &done[offset[j]..offset[j] + j - fj + 1];
                let k0 = fi.max(fj);
                let s = dot_lanes(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                row_i[j - fi] = (row_i[j - fi] - s) / row_j[j - fj];
            }
            let s = dot_lanes(&row_i[..i - fi], &row_i[..i - fi]);
            let d = row_i[i - fi] - s;
            if !(d > 0.0) {
                return Err(SolveError::NotPositiveDefinite {
                    pivot: perm[i],
                    value: d,
                });
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(Self {
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let s = dot_lanes(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// A matrix made ready for repeated solves with one backend.
#[derive(Debug, Clone)]
pub enum PreparedSolver {
    Direct(CholeskyFactor),
    Iterative { matrix: SparseSymMatrix, tol: f64 },
}

impl PreparedSolver {
    pub fn new(a: SparseSymMatrix, kind: SolverKind, tol: f64) -> Result<Self, SolveError> {
        Ok(match kind {
            SolverKind::Direct => PreparedSolver::Direct(CholeskyFactor::factor(&a)?),
            SolverKind::Cg => PreparedSolver::Iterative { matrix: a, tol },
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        match self {
            PreparedSolver::Direct(f) => Ok(f.solve(rhs)),
            PreparedSolver::Iterative { matrix, tol } => solve_spd(matrix, rhs, *tol),
        }
    }
}

/// Solve the one-multiplier KKT system
///
/// ```text
/// [ A  r ] [x]   [rhs   ]
/// [ r' 0 ] [l] = [target]
/// ```
///
/// by Schur complement.
pub fn solve_saddle(
    a: &SparseSymMatrix,
    r: &[f64],
    rhs: &[f64],
    target: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64), SolveError> {
    let solver = PreparedSolver::Iterative { matrix: a.clone(), tol };
    solve_saddle_with(&solver, r, rhs, target)
}

pub fn solve_saddle_with(
    solver: &PreparedSolver,
    r: &[f64],
    rhs: &[f64],
    target: f64,
) -> Result<(Vec<f64>, f64), SolveError> {
    let y = solver.solve(rhs)?;
    let w = solver.solve(r)?;
    let schur = dot(r, &w);
    if !(schur.abs() > 1e-300) || !schur.is_finite() {
        return Err(SolveError::SaddleBreakdown(schur));
    }
    let lambda = (dot(r, &y) - target) / schur;
    let x = y.iter().zip(&w).map(|(y, w)| y - lambda * w).collect();
    Ok((x, lambda))
}
