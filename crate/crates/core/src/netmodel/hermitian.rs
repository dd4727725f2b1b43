use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Sparse Hermitian matrix stored as its full list of nonzero entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseHermitian {
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseHermitian {
    /// Sums duplicate coordinates and drops exact zeros.
    pub fn from_triplets(triplets: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        for (i, j, v) in triplets {
            *acc.entry((i, j)).or_default() += v;
        }
        let entries =
            acc.into_iter().filter(|(_, v)| *v != Complex64::new(0.0, 0.0)).map(|((i, j), v)| (i, j, v)).collect();
        SparseHermitian { entries }
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    /// `v^H M v`, real for Hermitian `M`.
    pub fn quad_form(&self, v: &[Complex64]) -> f64 {
        self.entries.iter().map(|&(i, j, m)| (v[i].conj() * m * v[j]).re).sum()
    }

    /// `tr(M W)` for a Hermitian `W`.
    pub fn trace_with(&self, w: &DMatrix<Complex64>) -> f64 {
        self.entries.iter().map(|&(i, j, m)| (m * w[(j, i)]).re).sum()
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<Complex64> {
        let mut d = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            d[(i, j)] += v;
        }
        d
    }

    pub fn scaled(&self, s: f64) -> Self {
        SparseHermitian { entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * s)).collect() }
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self, n: usize) -> f64 {
        let d = self.to_dense(n);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((d[(i, j)] - d[(j, i)].conj()).norm());
            }
        }
        worst
    }
}
