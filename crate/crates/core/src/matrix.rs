//! Small exact matrices over chart rings.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ring::{ChartRing, RingElement};
use crate::scalar::PadicScalar;

#[derive(Clone, PartialEq, Eq)]
pub struct Mat {
    ring: Arc<ChartRing>,
    rows: usize,
    cols: usize,
    entries: Vec<RingElement>,
}

impl Mat {
    pub fn from_fn(
        ring: &Arc<ChartRing>,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> RingElement,
    ) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let e = f(r, c);
                assert!(e.ring().as_ref() == ring.as_ref(), "entry ring mismatch");
                entries.push(e);
            }
        }
        Mat { ring: Arc::clone(ring), rows, cols, entries }
    }

    pub fn zero(ring: &Arc<ChartRing>, rows: usize, cols: usize) -> Self {
        Self::from_fn(ring, rows, cols, |_, _| RingElement::zero(ring))
    }

    pub fn identity(ring: &Arc<ChartRing>, n: usize) -> Self {
        Self::from_fn(ring, n, n, |r, c| {
            if r == c {
                RingElement::one(ring)
            } else {
                RingElement::zero(ring)
            }
        })
    }

    pub fn from_rows(ring: &Arc<ChartRing>, rows: Vec<Vec<RingElement>>) -> Self {
        let nr = rows.len();
        let nc = rows.first().map(|r| r.len()).unwrap_or(0);
        assert!(rows.iter().all(|r| r.len() == nc));
        Self::from_fn(ring, nr, nc, |r, c| rows[r][c].clone())
    }

    pub fn from_cols(ring: &Arc<ChartRing>, cols: Vec<Vec<RingElement>>) -> Self {
        let nc = cols.len();
        let nr = cols.first().map(|c| c.len()).unwrap_or(0);
        assert!(cols.iter().all(|c| c.len() == nr));
        Self::from_fn(ring, nr, nc, |r, c| cols[c][r].clone())
    }

    pub fn ring(&self) -> &Arc<ChartRing> {
        &self.ring
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> &RingElement {
        &self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: RingElement) {
        assert!(v.ring().as_ref() == self.ring.as_ref());
        self.entries[r * self.cols + c] = v;
    }

    pub fn col(&self, c: usize) -> Vec<RingElement> {
        (0..self.rows).map(|r| self.at(r, c).clone()).collect()
    }

    pub fn columns(&self) -> Vec<Vec<RingElement>> {
        (0..self.cols).map(|c| self.col(c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(&self.ring, self.rows, self.cols, |r, c| {
            self.at(r, c).add(other.at(r, c))
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(&self.ring, self.rows, self.cols, |r, c| {
            self.at(r, c).sub(other.at(r, c))
        })
    }

    pub fn neg(&self) -> Self {
        Self::from_fn(&self.ring, self.rows, self.cols, |r, c| self.at(r, c).neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        assert_eq!(self.cols, other.rows, "matrix dimension mismatch");
        let mut out = Vec::with_capacity(self.rows * other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = RingElement::zero(&self.ring);
                for k in 0..self.cols {
                    acc = acc.add(&self.at(r, k).mul(other.at(k, c))?);
                }
                out.push(acc);
            }
        }
        Ok(Mat { ring: Arc::clone(&self.ring), rows: self.rows, cols: other.cols, entries: out })
    }

    pub fn mul_vec(&self, v: &[RingElement]) -> Result<Vec<RingElement>> {
        assert_eq!(self.cols, v.len());
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let mut acc = RingElement::zero(&self.ring);
            for k in 0..self.cols {
                acc = acc.add(&self.at(r, k).mul(&v[k])?);
            }
            out.push(acc);
        }
        Ok(out)
    }

    pub fn scale(&self, f: &RingElement) -> Result<Self> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for e in &self.entries {
            out.push(e.mul(f)?);
        }
        Ok(Mat { ring: Arc::clone(&self.ring), rows: self.rows, cols: self.cols, entries: out })
    }

    pub fn scale_scalar(&self, c: &PadicScalar) -> Self {
        Self::from_fn(&self.ring, self.rows, self.cols, |r, cc| self.at(r, cc).mul_scalar(c))
    }

    pub fn map<F>(&self, mut f: F) -> Result<Mat>
    where
        F: FnMut(&RingElement) -> Result<RingElement>,
    {
        let mut out = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            out.push(f(e)?);
        }
        let ring = out
            .first()
            .map(|e| Arc::clone(e.ring()))
            .unwrap_or_else(|| Arc::clone(&self.ring));
        assert!(out.iter().all(|e| e.ring().as_ref() == ring.as_ref()));
        Ok(Mat { ring, rows: self.rows, cols: self.cols, entries: out })
    }

    pub fn reduce_to(&self, target: &Arc<ChartRing>) -> Mat {
        self.map(|e| Ok(e.reduce_to(target))).expect("reduction is total")
    }

    pub fn include_into(&self, finer: &Arc<ChartRing>) -> Result<Mat> {
        self.map(|e| e.include_into(finer))
    }

    pub fn substitute(&self, target: &Arc<ChartRing>, images: &[RingElement]) -> Result<Mat> {
        self.map(|e| e.substitute(target, images))
    }

    pub fn derivative(&self, var: usize) -> Result<Mat> {
        self.map(|e| e.partial_derivative(var))
    }

    pub fn transpose(&self) -> Mat {
        Self::from_fn(&self.ring, self.cols, self.rows, |r, c| self.at(c, r).clone())
    }

    /// Determinant by cofactor expansion; ranks here are tiny.
    pub fn det(&self) -> Result<RingElement> {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        match n {
            0 => Ok(RingElement::one(&self.ring)),
            1 => Ok(self.at(0, 0).clone()),
            _ => {
                let mut acc = RingElement::zero(&self.ring);
                for c in 0..n {
                    if self.at(0, c).is_zero() {
                        continue;
                    }
                    let minor = self.minor(0, c);
                    let term = self.at(0, c).mul(&minor.det()?)?;
                    if c % 2 == 0 {
                        acc = acc.add(&term);
                    } else {
                        acc = acc.sub(&term);
                    }
                }
                Ok(acc)
            }
        }
    }

    fn minor(&self, row: usize, col: usize) -> Mat {
        let entries: Vec<RingElement> = (0..self.rows)
            .filter(|&r| r != row)
            .flat_map(|r| {
                (0..self.cols).filter(|&c| c != col).map(move |c| self.at(r, c).clone())
            })
            .collect();
        Mat { ring: Arc::clone(&self.ring), rows: self.rows - 1, cols: self.cols - 1, entries }
    }

    /// Inverse via the adjugate; requires the determinant to be a unit.
    pub fn inverse(&self) -> Result<Mat> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let det = self.det()?;
        let det_inv = det.invert().map_err(|_| Error::NotAUnit)?;
        if n == 1 {
            return Ok(Mat {
                ring: Arc::clone(&self.ring),
                rows: 1,
                cols: 1,
                entries: vec![det_inv],
            });
        }
        let mut out = Mat::zero(&self.ring, n, n);
        for r in 0..n {
            for c in 0..n {
                let cof = self.minor(r, c).det()?;
                let signed = if (r + c) % 2 == 0 { cof } else { cof.neg() };
                out.set(c, r, signed.mul(&det_inv)?);
            }
        }
        Ok(out)
    }

    pub fn kronecker(&self, other: &Self) -> Result<Mat> {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Mat::zero(&self.ring, rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        let v = self.at(r1, c1).mul(other.at(r2, c2))?;
                        out.set(r1 * other.rows + r2, c1 * other.cols + c2, v);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn block_diag(&self, other: &Self) -> Mat {
        let rows = self.rows + other.rows;
        let cols = self.cols + other.cols;
        Mat::from_fn(&self.ring, rows, cols, |r, c| {
            if r < self.rows && c < self.cols {
                self.at(r, c).clone()
            } else if r >= self.rows && c >= self.cols {
                other.at(r - self.rows, c - self.cols).clone()
            } else {
                RingElement::zero(&self.ring)
            }
        })
    }

    pub fn pow(&self, e: u32) -> Result<Mat> {
        assert_eq!(self.rows, self.cols);
        let mut acc = Mat::identity(&self.ring, self.rows);
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// First entry, as (row, col, lhs, rhs), at which the two matrices
    /// differ; None when equal.
    pub fn first_difference(&self, other: &Self) -> Option<(usize, usize, String, String)> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.at(r, c) != other.at(r, c) {
                    return Some((r, c, self.at(r, c).render(), other.at(r, c).render()));
                }
            }
        }
        None
    }

    pub fn render_rows(&self) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.at(r, c).render()).collect())
            .collect()
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[")?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.at(r, c).render()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}
