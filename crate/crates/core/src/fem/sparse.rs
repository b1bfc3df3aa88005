//! Compressed-row storage for the symmetric matrices of the discrete system.

/// Square matrix in CSR form storing both triangles. Column indices are
/// sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Result of eliminating prescribed degrees of freedom.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: SparseSymMatrix,
    pub rhs: Vec<f64>,
    /// `free[k]` is the full index of reduced unknown `k`.
    pub free: Vec<usize>,
}

impl ReducedSystem {
    /// Scatter a reduced solution back, filling prescribed values.
    pub fn expand(&self, x: &[f64], n: usize, fixed: &[(usize, f64)]) -> Vec<f64> {
        let mut full = vec![0.0; n];
        for &(i, v) in fixed {
            full[i] = v;
        }
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }
}

impl SparseSymMatrix {
    /// Zero-valued matrix with the given sparsity (each row list is sorted
    /// and deduplicated here).
    pub fn from_pattern(n: usize, mut rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Duplicates are summed in input order, so the result is deterministic.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(n, rows);
        for &(i, j, v) in triplets {
            let k = m.find(i, j).expect("entry in pattern");
            m.values[k] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &t)
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Storage slot of entry `(i, j)`.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= c);
        m
    }

    /// `a * self + b * other` for matrices sharing one sparsity pattern.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert!(
            self.row_ptr == other.row_ptr && self.col_idx == other.col_idx,
            "combine requires identical sparsity"
        );
        let mut m = self.clone();
        for (v, w) in m.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        m
    }

    /// Largest `|a_ij - a_ji|` relative to the largest stored magnitude.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Remove rows and columns of prescribed unknowns, moving their known
    /// values to the right-hand side so the reduced matrix stays symmetric.
    pub fn eliminate(&self, fixed: &[(usize, f64)], rhs: &[f64]) -> ReducedSystem {
        assert_eq!(rhs.len(), self.n);
        let mut value = vec![None; self.n];
        for &(i, v) in fixed {
            value[i] = Some(v);
        }
        let mut map = vec![usize::MAX; self.n];
        let mut free = Vec::with_capacity(self.n);
        for i in 0..self.n {
            if value[i].is_none() {
                map[i] = free.len();
                free.push(i);
            }
        }
        let mut row_ptr = Vec::with_capacity(free.len() + 1);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        let mut red_rhs = Vec::with_capacity(free.len());
        row_ptr.push(0);
        for &i in &free {
            let (cols, vals) = self.row(i);
            let mut b = rhs[i];
            for (&j, &v) in cols.iter().zip(vals) {
                match value[j] {
                    Some(x) => b -= v * x,
                    None => {
                        col_idx.push(map[j]);
                        values.push(v);
                    }
                }
            }
            red_rhs.push(b);
            row_ptr.push(col_idx.len());
        }
        ReducedSystem {
            matrix: SparseSymMatrix {
                n: free.len(),
                row_ptr,
                col_idx,
                values,
            },
            rhs: red_rhs,
            free,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
