//! Symmetric sparse matrices and their SPD factorization.
//!
//! Storage is full (both triangles) CSR from `sprs`; the factorization is a
//! sparse LDL^T from `sprs-ldl` with reverse Cuthill-McKee ordering.

use std::io::{self, Write};

use nalgebra::DMatrix;
use sprs::{CsMat, FillInReduction, SymmetryCheck, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("factorization failed: {0}")]
    Singular(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymSparseMatrix {
    inner: CsMat<f64>,
}

/// Coordinate-format accumulator; duplicate entries are summed.
#[derive(Debug)]
pub struct TripletBuilder {
    tri: TriMat<f64>,
}

impl TripletBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            tri: TriMat::new((dim, dim)),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.tri.add_triplet(row, col, value);
        }
    }

    pub fn build(self) -> SymSparseMatrix {
        SymSparseMatrix {
            inner: self.tri.to_csr(),
        }
    }
}

impl SymSparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        TripletBuilder::new(dim).build()
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: CsMat::eye(dim),
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut b = TripletBuilder::new(m.nrows());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                b.add(i, j, m[(i, j)]);
            }
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    pub fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner.get(row, col).copied().unwrap_or(0.0)
    }

    /// Iterate stored `(row, col, value)` entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.inner
            .outer_iterator()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |(j, &v)| (i, j, v)).collect::<Vec<_>>())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        self.inner
            .outer_iterator()
            .map(|row| row.iter().map(|(j, &v)| v * x[j]).sum())
            .collect()
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        if factor == 0.0 {
            return Self::zeros(self.dim());
        }
        Self {
            inner: self.inner.map(|&v| v * factor),
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &SymSparseMatrix, factor: f64) -> Self {
        assert_eq!(self.dim(), other.dim());
        let mut b = TripletBuilder::new(self.dim());
        for (i, j, v) in self.entries() {
            b.add(i, j, v);
        }
        for (i, j, v) in other.entries() {
            b.add(i, j, factor * v);
        }
        b.build()
    }

    /// Max-abs entry.
    pub fn norm_max(&self) -> f64 {
        self.inner.data().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.norm_max();
        if scale == 0.0 {
            return 0.0;
        }
        self.entries()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// Principal submatrix `M[rows, rows]`.
    pub fn submatrix(&self, rows: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.dim()];
        for (k, &r) in rows.iter().enumerate() {
            map[r] = k;
        }
        let mut b = TripletBuilder::new(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            if let Some(row) = self.inner.outer_view(r) {
                for (j, &v) in row.iter() {
                    if map[j] != usize::MAX {
                        b.add(k, map[j], v);
                    }
                }
            }
        }
        b.build()
    }

    /// `M[rows, cols] * x` for an arbitrary rectangular block.
    pub fn block_mul(&self, rows: &[usize], cols: &[usize], x: &[f64]) -> Vec<f64> {
        assert_eq!(cols.len(), x.len());
        let mut full = vec![0.0; self.dim()];
        for (k, &c) in cols.iter().enumerate() {
            full[c] = x[k];
        }
        rows.iter()
            .map(|&r| {
                self.inner
                    .outer_view(r)
                    .map_or(0.0, |row| row.iter().map(|(j, &v)| v * full[j]).sum())
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn factor(&self) -> Result<SpdFactor, FactorError> {
        if self.dim() == 0 {
            return Ok(SpdFactor {
                kind: FactorKind::Empty,
                dim: 0,
            });
        }
        if self.dim() == 1 {
            // the sparse symbolic phase needs at least two rows
            let value = self.get(0, 0);
            if !(value > 0.0) || !value.is_finite() {
                return Err(FactorError::NotPositiveDefinite { pivot: 0, value });
            }
            return Ok(SpdFactor {
                kind: FactorKind::Scalar(value),
                dim: 1,
            });
        }
        let ldl = Ldl::new()
            .check_symmetry(SymmetryCheck::DontCheckSymmetry)
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .numeric(self.inner.view())
            .map_err(|e| FactorError::Singular(format!("{e:?}")))?;
        let diag = ldl.d();
        let scale = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        if let Some((pivot, &value)) = diag
            .iter()
            .enumerate()
            .find(|&(_, &d)| !(d > 1e-14 * scale) || !d.is_finite())
        {
            return Err(FactorError::NotPositiveDefinite { pivot, value });
        }
        Ok(SpdFactor {
            kind: FactorKind::Ldl(ldl),
            dim: self.dim(),
        })
    }

    /// Coordinate text dump, one `row col value` triple per line.
    pub fn write_coordinates<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "% {} {} {}", self.dim(), self.dim(), self.nnz())?;
        for (i, j, v) in self.entries() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }
}

/// Factorization of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    kind: FactorKind,
    dim: usize,
}

#[derive(Debug, Clone)]
enum FactorKind {
    Empty,
    Scalar(f64),
    Ldl(LdlNumeric<f64, usize>),
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.dim);
        match &self.kind {
            FactorKind::Empty => Vec::new(),
            FactorKind::Scalar(d) => vec![rhs[0] / d],
            FactorKind::Ldl(ldl) => ldl.solve(rhs.to_vec()),
        }
    }
}
