//! Finitely generated submodules of free modules over one-variable mod-p
//! chart rings.
//!
//! Such a ring is a localization of F_p[t] and hence a PID; its elements
//! factor as (unit of the localization) * (monic polynomial coprime to
//! every inverted irreducible). Normal forms are column Hermite forms
//! with monic "core" pivots, unit parts absorbed, and off-pivot entries
//! in pivot rows reduced to canonical residues, so equal submodules have
//! identical normal forms.

use std::sync::OnceLock;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::polyutil;
use crate::ring::{ChartRing, RingElement};

/// Unit-times-core factorization in the localized PID.
/// Returns (core, unit) with element = unit * core, core monic with no
/// inverted-prime factors, unit invertible in the ring.
fn strip_units(el: &RingElement) -> Result<(Vec<u64>, RingElement)> {
    let ring = el.ring().clone();
    let p = ring.p();
    if el.is_zero() {
        return Err(Error::ZeroElement);
    }
    let min_exp = el.terms().keys().map(|k| k[0]).min().unwrap();
    let max_exp = el.terms().keys().map(|k| k[0]).max().unwrap();
    let mut dense = vec![0u64; (max_exp - min_exp + 1) as usize];
    for (k, c) in el.terms() {
        dense[(k[0] - min_exp) as usize] = c.value();
    }
    dense = polyutil::trim(dense);
    let mut unit = RingElement::one(&ring);
    let mut core_shift: i64 = 0;
    if ring.inverted()[0] {
        if min_exp != 0 {
            unit = unit
                .mul(&RingElement::monomial(&ring, vec![min_exp], crate::scalar::PadicScalar::one(p, 1))?)?;
        }
    } else {
        debug_assert!(min_exp >= 0);
        core_shift = min_exp;
    }
    for (i, d) in ring.denominators().to_vec().iter().enumerate() {
        loop {
            match polyutil::try_div_exact(&dense, d, p, p)? {
                Some(q) => {
                    dense = q;
                    unit = unit.mul(&crate::chart::denominator_element(&ring, i))?;
                }
                None => break,
            }
        }
    }
    // account for the element's own denominator part
    for (i, &b) in el.den().to_vec().iter().enumerate() {
        for _ in 0..b {
            let inv = crate::chart::denominator_element(&ring, i).invert()?;
            unit = unit.mul(&inv)?;
        }
    }
    let lc = *dense.last().unwrap();
    let lc_scalar = crate::scalar::PadicScalar::new(p, 1, lc);
    unit = unit.mul_scalar(&lc_scalar);
    let monic = polyutil::make_monic(&dense, p);
    // reattach a t-power that is not a unit (variable not inverted)
    let mut core = vec![0u64; core_shift as usize];
    core.extend_from_slice(&monic);
    Ok((core, unit))
}

fn core_to_element(ring: &Arc<ChartRing>, core: &[u64]) -> RingElement {
    RingElement::from_dense(ring, core)
}

/// b | a in the localized PID.
fn divides(b: &RingElement, a: &RingElement) -> Result<bool> {
    if a.is_zero() {
        return Ok(true);
    }
    if b.is_zero() {
        return Ok(false);
    }
    let (core_a, _) = strip_units(a)?;
    let (core_b, _) = strip_units(b)?;
    Ok(polyutil::try_div_exact(&core_a, &core_b, a.ring().p(), a.ring().p())?.is_some())
}

/// Exact quotient a / b when b | a.
fn div_exact(a: &RingElement, b: &RingElement) -> Result<RingElement> {
    let ring = a.ring().clone();
    let p = ring.p();
    if a.is_zero() {
        return Ok(RingElement::zero(&ring));
    }
    let (core_a, unit_a) = strip_units(a)?;
    let (core_b, unit_b) = strip_units(b)?;
    let q = polyutil::try_div_exact(&core_a, &core_b, p, p)?
        .ok_or_else(|| Error::InvalidInput("non-exact division".into()))?;
    core_to_element(&ring, &q).mul(&unit_a)?.mul(&unit_b.invert()?)
}

/// gcd with Bezout certificate: (g, x, y) with g = x*a + y*b, g a monic
/// core (or zero).
fn gcd_bezout(a: &RingElement, b: &RingElement) -> Result<(RingElement, RingElement, RingElement)> {
    let ring = a.ring().clone();
    let p = ring.p();
    if a.is_zero() {
        let (core_b, unit_b) = strip_units(b)?;
        return Ok((core_to_element(&ring, &core_b), RingElement::zero(&ring), unit_b.invert()?));
    }
    if b.is_zero() {
        let (core_a, unit_a) = strip_units(a)?;
        return Ok((core_to_element(&ring, &core_a), unit_a.invert()?, RingElement::zero(&ring)));
    }
    let (core_a, unit_a) = strip_units(a)?;
    let (core_b, unit_b) = strip_units(b)?;
    let (g, x, y) = polyutil::ext_gcd_fp(&core_a, &core_b, p);
    let g_el = core_to_element(&ring, &g);
    let x_el = core_to_element(&ring, &x).mul(&unit_a.invert()?)?;
    let y_el = core_to_element(&ring, &y).mul(&unit_b.invert()?)?;
    Ok((g_el, x_el, y_el))
}

/// Canonical residue of `e` modulo the monic core polynomial `pivot`
/// (coprime to all inverted primes): a polynomial of degree < deg(pivot).
fn reduce_mod_pivot(e: &RingElement, pivot_core: &[u64]) -> Result<(RingElement, RingElement)> {
    let ring = e.ring().clone();
    let p = ring.p();
    if e.is_zero() {
        return Ok((RingElement::zero(&ring), RingElement::zero(&ring)));
    }
    if polyutil::deg(pivot_core) == Some(0) {
        // pivot is a unit constant: residue 0, quotient e / pivot
        let q = div_exact(e, &core_to_element(&ring, pivot_core))?;
        return Ok((RingElement::zero(&ring), q));
    }
    // e = N * U with N a plain polynomial (t-cleared) and U a unit;
    // residue = N * U mod pivot computed in F_p[t]/(pivot).
    let min_exp = e.terms().keys().map(|k| k[0]).min().unwrap();
    let max_exp = e.terms().keys().map(|k| k[0]).max().unwrap();
    let mut dense = vec![0u64; (max_exp - min_exp + 1) as usize];
    for (k, c) in e.terms() {
        dense[(k[0] - min_exp) as usize] = c.value();
    }
    dense = polyutil::trim(dense);
    // unit factor: t^{min_exp} / prod d_i^{b_i}
    let mut unit_num: Vec<u64> = vec![1];
    let mut unit_den: Vec<u64> = vec![1];
    if min_exp >= 0 {
        let mut t_pow = vec![0u64; min_exp as usize];
        t_pow.push(1);
        unit_num = polyutil::mul(&unit_num, &t_pow, p);
    } else {
        let mut t_pow = vec![0u64; (-min_exp) as usize];
        t_pow.push(1);
        unit_den = polyutil::mul(&unit_den, &t_pow, p);
    }
    for (i, &b) in e.den().iter().enumerate() {
        for _ in 0..b {
            unit_den = polyutil::mul(&unit_den, &ring.denominators()[i], p);
        }
    }
    let (_, num_mod) = polyutil::div_rem(&polyutil::mul(&dense, &unit_num, p), pivot_core, p, p)?;
    let den_inv = polyutil::inverse_mod_poly_fp(&unit_den, pivot_core, p)
        .ok_or_else(|| Error::InvalidInput("denominator not invertible modulo pivot".into()))?;
    let (_, residue) = polyutil::div_rem(&polyutil::mul(&num_mod, &den_inv, p), pivot_core, p, p)?;
    let residue_el = core_to_element(&ring, &residue);
    let diff = e.sub(&residue_el);
    let q = if diff.is_zero() {
        RingElement::zero(&ring)
    } else {
        div_exact(&diff, &core_to_element(&ring, pivot_core))?
    };
    Ok((residue_el, q))
}

/// Column Hermite reduction with optional transformation tracking.
/// Returns (normal form with zero columns dropped, pivots as (row, core),
/// transformation matrix post-composed so that gens * transform = padded nf).
fn hermite(gens: &Mat, track: bool) -> Result<(Mat, Vec<(usize, Vec<u64>)>, Option<Mat>)> {
    let ring = gens.ring().clone();
    let rows = gens.rows();
    let mut cols: Vec<Vec<RingElement>> = gens.columns();
    let n_cols = cols.len();
    let mut trans: Vec<Vec<RingElement>> = (0..n_cols)
        .map(|i| {
            (0..n_cols)
                .map(|j| {
                    if i == j {
                        RingElement::one(&ring)
                    } else {
                        RingElement::zero(&ring)
                    }
                })
                .collect()
        })
        .collect();
    let mut pivots: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut next_col = 0usize;
    for row in 0..rows {
        // clear all but one nonzero entry in this row among columns >= next_col
        loop {
            let active: Vec<usize> = (next_col..cols.len())
                .filter(|&c| !cols[c][row].is_zero())
                .collect();
            if active.len() <= 1 {
                break;
            }
            let (c1, c2) = (active[0], active[1]);
            let a = cols[c1][row].clone();
            let b = cols[c2][row].clone();
            let (g, x, y) = gcd_bezout(&a, &b)?;
            let a_over_g = div_exact(&a, &g)?;
            let b_over_g = div_exact(&b, &g)?;
            // invertible 2-column transform [[x, -b/g], [y, a/g]]
            for r in 0..rows {
                let u = cols[c1][r].clone();
                let v = cols[c2][r].clone();
                cols[c1][r] = x.mul(&u)?.add(&y.mul(&v)?);
                cols[c2][r] = a_over_g.mul(&v)?.sub(&b_over_g.mul(&u)?);
            }
            if track {
                for r in 0..n_cols {
                    let u = trans[c1][r].clone();
                    let v = trans[c2][r].clone();
                    trans[c1][r] = x.mul(&u)?.add(&y.mul(&v)?);
                    trans[c2][r] = a_over_g.mul(&v)?.sub(&b_over_g.mul(&u)?);
                }
            }
        }
        let active: Vec<usize> = (next_col..cols.len())
            .filter(|&c| !cols[c][row].is_zero())
            .collect();
        if let Some(&c) = active.first() {
            cols.swap(next_col, c);
            trans.swap(next_col, c);
            // normalize the pivot to its monic core
            let (core, unit) = strip_units(&cols[next_col][row])?;
            let unit_inv = unit.invert()?;
            for r in 0..rows {
                cols[next_col][r] = cols[next_col][r].mul(&unit_inv)?;
            }
            if track {
                for r in 0..n_cols {
                    trans[next_col][r] = trans[next_col][r].mul(&unit_inv)?;
                }
            }
            pivots.push((row, core));
            next_col += 1;
        }
    }
    // reduce off-pivot entries in pivot rows
    for i in 0..pivots.len() {
        let (row, core) = pivots[i].clone();
        for j in 0..i {
            let (residue, q) = reduce_mod_pivot(&cols[j][row], &core)?;
            if q.is_zero() {
                continue;
            }
            for r in 0..rows {
                let sub = q.mul(&cols[i][r])?;
                cols[j][r] = cols[j][r].sub(&sub);
            }
            if track {
                for r in 0..n_cols {
                    let sub = q.mul(&trans[i][r])?;
                    trans[j][r] = trans[j][r].sub(&sub);
                }
            }
            debug_assert_eq!(cols[j][row], residue);
        }
    }
    let kept: Vec<usize> = (0..cols.len())
        .filter(|&c| cols[c].iter().any(|e| !e.is_zero()))
        .collect();
    debug_assert_eq!(kept.len(), pivots.len());
    let nf = if kept.is_empty() {
        Mat::zero(&ring, rows, 0)
    } else {
        Mat::from_cols(&ring, kept.iter().map(|&c| cols[c].clone()).collect())
    };
    let trans_mat = if track {
        Some(Mat::from_cols(&ring, trans))
    } else {
        None
    };
    let _ = n_cols;
    Ok((nf, pivots, trans_mat))
}

#[derive(Clone)]
pub struct SubmodulePresentation {
    ring: Arc<ChartRing>,
    ambient_rank: usize,
    gens: Mat,
    normal: OnceLock<(Mat, Vec<(usize, Vec<u64>)>)>,
}

impl std::fmt::Debug for SubmodulePresentation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Submodule{:?}", self.normal_form().render_rows())
    }
}

impl PartialEq for SubmodulePresentation {
    fn eq(&self, other: &Self) -> bool {
        self.ring.as_ref() == other.ring.as_ref()
            && self.ambient_rank == other.ambient_rank
            && self.normal_form() == other.normal_form()
    }
}

impl Eq for SubmodulePresentation {}

impl SubmodulePresentation {
    pub fn new(ring: &Arc<ChartRing>, ambient_rank: usize, columns: Vec<Vec<RingElement>>) -> Result<Self> {
        if ring.dim() != 1 {
            return Err(Error::UnsupportedDimension(
                "submodule algebra requires a one-variable chart ring".into(),
            ));
        }
        if ring.precision() != 1 {
            return Err(Error::InvalidInput("submodule algebra works mod p".into()));
        }
        for col in &columns {
            if col.len() != ambient_rank {
                return Err(Error::AmbientMismatch(format!(
                    "generator has {} coordinates, ambient rank is {ambient_rank}",
                    col.len()
                )));
            }
        }
        let gens = if columns.is_empty() {
            Mat::zero(ring, ambient_rank, 0)
        } else {
            Mat::from_cols(ring, columns)
        };
        Ok(SubmodulePresentation {
            ring: Arc::clone(ring),
            ambient_rank,
            gens,
            normal: OnceLock::new(),
        })
    }

    pub fn from_matrix(mat: Mat, ambient_rank: usize) -> Result<Self> {
        Self::new(&mat.ring().clone(), ambient_rank, mat.columns())
    }

    pub fn zero(ring: &Arc<ChartRing>, ambient_rank: usize) -> Self {
        Self::new(ring, ambient_rank, vec![]).expect("zero module is always valid")
    }

    pub fn full(ring: &Arc<ChartRing>, ambient_rank: usize) -> Self {
        let id = Mat::identity(ring, ambient_rank);
        Self::from_matrix(id, ambient_rank).expect("full module is always valid")
    }

    pub fn coordinate(ring: &Arc<ChartRing>, ambient_rank: usize, indices: &[usize]) -> Self {
        let cols = indices
            .iter()
            .map(|&i| {
                (0..ambient_rank)
                    .map(|r| {
                        if r == i {
                            RingElement::one(ring)
                        } else {
                            RingElement::zero(ring)
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(ring, ambient_rank, cols).expect("coordinate module is always valid")
    }

    pub fn ring(&self) -> &Arc<ChartRing> {
        &self.ring
    }

    pub fn ambient_rank(&self) -> usize {
        self.ambient_rank
    }

    pub fn generators(&self) -> &Mat {
        &self.gens
    }

    fn normal_data(&self) -> &(Mat, Vec<(usize, Vec<u64>)>) {
        self.normal.get_or_init(|| {
            let (nf, pivots, _) = hermite(&self.gens, false).expect("normal form computation");
            (nf, pivots)
        })
    }

    pub fn normal_form(&self) -> &Mat {
        &self.normal_data().0
    }

    pub fn pivots(&self) -> &[(usize, Vec<u64>)] {
        &self.normal_data().1
    }

    /// Rank of the submodule = number of pivots.
    pub fn rank(&self) -> usize {
        self.pivots().len()
    }

    pub fn is_zero_module(&self) -> bool {
        self.rank() == 0
    }

    fn check_ambient(&self, other: &Self) -> Result<()> {
        if self.ring.as_ref() != other.ring.as_ref() || self.ambient_rank != other.ambient_rank {
            return Err(Error::AmbientMismatch(
                "submodules live in different ambient modules".into(),
            ));
        }
        Ok(())
    }

    /// Membership with a coefficient witness in terms of the normal-form
    /// generators.
    pub fn membership(&self, v: &[RingElement]) -> Result<Option<Vec<RingElement>>> {
        if v.len() != self.ambient_rank {
            return Err(Error::AmbientMismatch("vector length != ambient rank".into()));
        }
        let (nf, pivots) = self.normal_data();
        let mut rem = v.to_vec();
        let mut coeffs = vec![RingElement::zero(&self.ring); nf.cols()];
        for (i, (row, _)) in pivots.iter().enumerate() {
            let entry = rem[*row].clone();
            if entry.is_zero() {
                continue;
            }
            if !divides(nf.at(*row, i), &entry)? {
                return Ok(None);
            }
            let q = div_exact(&entry, nf.at(*row, i))?;
            for r in 0..self.ambient_rank {
                rem[r] = rem[r].sub(&q.mul(nf.at(r, i))?);
            }
            coeffs[i] = q;
        }
        if rem.iter().all(|e| e.is_zero()) {
            Ok(Some(coeffs))
        } else {
            Ok(None)
        }
    }

    pub fn contains_vector(&self, v: &[RingElement]) -> Result<bool> {
        Ok(self.membership(v)?.is_some())
    }

    pub fn contains(&self, other: &Self) -> Result<bool> {
        self.check_ambient(other)?;
        for c in other.normal_form().columns() {
            if !self.contains_vector(&c)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn equals(&self, other: &Self) -> Result<bool> {
        self.check_ambient(other)?;
        Ok(self.normal_form() == other.normal_form())
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.check_ambient(other)?;
        let mut cols = self.gens.columns();
        cols.extend(other.gens.columns());
        Self::new(&self.ring, self.ambient_rank, cols)
    }

    /// Kernel of the column map R^s -> R^r given by `mat`.
    pub fn kernel(mat: &Mat) -> Result<Mat> {
        let (nf, _, trans) = hermite(mat, true)?;
        let trans = trans.expect("tracking requested");
        let rank = nf.cols();
        // columns of the transformation beyond the pivot count map to zero
        let kernel_cols: Vec<Vec<RingElement>> =
            (rank..mat.cols()).map(|c| trans.col(c)).collect();
        Ok(Mat::from_cols(mat.ring(), kernel_cols))
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.check_ambient(other)?;
        let a = self.normal_form();
        let b = other.normal_form();
        if a.cols() == 0 || b.cols() == 0 {
            return Ok(Self::zero(&self.ring, self.ambient_rank));
        }
        // stack [A | B]; kernel vectors (x; y) give A x = -B y in A ∩ B
        let stacked = Mat::from_cols(&self.ring, {
            let mut cols = a.columns();
            cols.extend(b.columns());
            cols
        });
        let ker = Self::kernel(&stacked)?;
        let mut cols = Vec::new();
        for kc in ker.columns() {
            let x = &kc[..a.cols()];
            let v = a.mul_vec(x)?;
            if v.iter().any(|e| !e.is_zero()) {
                cols.push(v);
            }
        }
        Self::new(&self.ring, self.ambient_rank, cols)
    }

    /// Smallest submodule containing this one with torsion-free quotient:
    /// the span of the first `rank` columns of the row-transformation in a
    /// diagonalization gens = U D V.
    pub fn saturate(&self) -> Result<Self> {
        let nf = self.normal_form();
        if nf.cols() == 0 {
            return Ok(self.clone());
        }
        let (u, diag_rank) = smith_row_transform(nf)?;
        let cols: Vec<Vec<RingElement>> = (0..diag_rank).map(|c| u.col(c)).collect();
        Self::new(&self.ring, self.ambient_rank, cols)
    }

    /// Image under an ambient-to-ambient matrix.
    pub fn apply(&self, m: &Mat) -> Result<Self> {
        if m.cols() != self.ambient_rank {
            return Err(Error::AmbientMismatch("matrix does not act on the ambient".into()));
        }
        let new_gens = m.mul(self.normal_form())?;
        Self::from_matrix(new_gens, m.rows())
    }

    /// Coordinate-wise Frobenius pullback t -> t^p of the generators.
    pub fn frobenius_pullback(&self) -> Result<Self> {
        let cols = self
            .normal_form()
            .columns()
            .into_iter()
            .map(|col| col.into_iter().map(|e| e.frobenius_mod_p()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(&self.ring, self.ambient_rank, cols)
    }

    pub fn is_theta_stable(&self, theta: &[Mat]) -> Result<bool> {
        for th in theta {
            for col in self.normal_form().columns() {
                let image = th.mul_vec(&col)?;
                if !self.contains_vector(&image)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Intersections with the coordinate submodules of each grading level.
    pub fn graded_parts(&self, levels: &[u32]) -> Result<Vec<Self>> {
        if levels.len() != self.ambient_rank {
            return Err(Error::AmbientMismatch("levels length != ambient rank".into()));
        }
        let max_level = levels.iter().copied().max().unwrap_or(0);
        let mut parts = Vec::new();
        for lvl in 0..=max_level {
            let idx: Vec<usize> = (0..self.ambient_rank).filter(|&i| levels[i] == lvl).collect();
            let coord = Self::coordinate(&self.ring, self.ambient_rank, &idx);
            parts.push(self.intersect(&coord)?);
        }
        Ok(parts)
    }

    pub fn is_subsystem_of_hodge(&self, levels: &[u32]) -> Result<bool> {
        let parts = self.graded_parts(levels)?;
        let mut acc = Self::zero(&self.ring, self.ambient_rank);
        for p in parts {
            acc = acc.sum(&p)?;
        }
        acc.equals(self)
    }

    pub fn include_into(&self, finer: &Arc<ChartRing>) -> Result<Self> {
        let cols = self
            .normal_form()
            .columns()
            .into_iter()
            .map(|col| col.into_iter().map(|e| e.include_into(finer)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(finer, self.ambient_rank, cols)
    }

    pub fn render_generators(&self) -> Vec<Vec<String>> {
        self.normal_form()
            .columns()
            .iter()
            .map(|col| col.iter().map(|e| e.render()).collect())
            .collect()
    }
}

/// Row transformation U and rank from a diagonalization gens = U D V over
/// the localized PID; only U and the rank are needed for saturation.
fn smith_row_transform(mat: &Mat) -> Result<(Mat, usize)> {
    let ring = mat.ring().clone();
    let rows = mat.rows();
    let mut work = mat.clone();
    let mut u = Mat::identity(&ring, rows);
    // u tracks row operations: work = u_inv * original, so original = u * work;
    // we apply the inverse of each row op to the columns of u.
    let mut row0 = 0usize;
    let mut col0 = 0usize;
    while row0 < rows && col0 < work.cols() {
        // find a nonzero entry in the working block
        let mut found = None;
        'search: for c in col0..work.cols() {
            for r in row0..rows {
                if !work.at(r, c).is_zero() {
                    found = Some((r, c));
                    break 'search;
                }
            }
        }
        let Some((pr, pc)) = found else { break };
        swap_rows(&mut work, row0, pr);
        swap_cols_u(&mut u, row0, pr);
        swap_cols(&mut work, col0, pc);
        loop {
            // clear the pivot column with row ops
            let mut changed = false;
            for r in row0 + 1..rows {
                if work.at(r, col0).is_zero() {
                    continue;
                }
                let a = work.at(row0, col0).clone();
                let b = work.at(r, col0).clone();
                if divides(&a, &b)? {
                    let q = div_exact(&b, &a)?;
                    row_axpy(&mut work, r, row0, &q)?;
                    // original = u * work stays fixed: u col_{row0} += q * col_r
                    col_axpy_add(&mut u, row0, r, &q)?;
                } else {
                    let (g, x, y) = gcd_bezout(&a, &b)?;
                    let a_g = div_exact(&a, &g)?;
                    let b_g = div_exact(&b, &g)?;
                    two_row_transform(&mut work, row0, r, &x, &y, &a_g, &b_g)?;
                    two_col_transform_u(&mut u, row0, r, &x, &y, &a_g, &b_g)?;
                }
                changed = true;
            }
            // clear the pivot row with column ops (no effect on u)
            for c in col0 + 1..work.cols() {
                if work.at(row0, c).is_zero() {
                    continue;
                }
                let a = work.at(row0, col0).clone();
                let b = work.at(row0, c).clone();
                if divides(&a, &b)? {
                    let q = div_exact(&b, &a)?;
                    col_axpy(&mut work, c, col0, &q)?;
                } else {
                    let (g, x, y) = gcd_bezout(&a, &b)?;
                    let a_g = div_exact(&a, &g)?;
                    let b_g = div_exact(&b, &g)?;
                    two_col_transform(&mut work, col0, c, &x, &y, &a_g, &b_g)?;
                }
                changed = true;
            }
            let col_clear = (row0 + 1..rows).all(|r| work.at(r, col0).is_zero());
            let row_clear = (col0 + 1..work.cols()).all(|c| work.at(row0, c).is_zero());
            if col_clear && row_clear {
                break;
            }
            if !changed {
                return Err(Error::InvalidInput("diagonalization did not converge".into()));
            }
        }
        row0 += 1;
        col0 += 1;
    }
    Ok((u, row0))
}

fn swap_rows(m: &mut Mat, a: usize, b: usize) {
    if a == b {
        return;
    }
    for c in 0..m.cols() {
        let x = m.at(a, c).clone();
        let y = m.at(b, c).clone();
        m.set(a, c, y);
        m.set(b, c, x);
    }
}

fn swap_cols(m: &mut Mat, a: usize, b: usize) {
    if a == b {
        return;
    }
    for r in 0..m.rows() {
        let x = m.at(r, a).clone();
        let y = m.at(r, b).clone();
        m.set(r, a, y);
        m.set(r, b, x);
    }
}

fn swap_cols_u(u: &mut Mat, a: usize, b: usize) {
    swap_cols(u, a, b);
}

/// work row_r -= q * row_src
fn row_axpy(m: &mut Mat, r: usize, src: usize, q: &RingElement) -> Result<()> {
    for c in 0..m.cols() {
        let v = m.at(r, c).sub(&q.mul(m.at(src, c))?);
        m.set(r, c, v);
    }
    Ok(())
}

/// u col_dst += q * col_src
fn col_axpy_add(m: &mut Mat, dst: usize, src: usize, q: &RingElement) -> Result<()> {
    for r in 0..m.rows() {
        let v = m.at(r, dst).add(&q.mul(m.at(r, src))?);
        m.set(r, dst, v);
    }
    Ok(())
}

/// work col_c -= q * col_src
fn col_axpy(m: &mut Mat, c: usize, src: usize, q: &RingElement) -> Result<()> {
    for r in 0..m.rows() {
        let v = m.at(r, c).sub(&q.mul(m.at(r, src))?);
        m.set(r, c, v);
    }
    Ok(())
}

/// rows (r1, r2) <- (x r1 + y r2, -b_g r1 + a_g r2); determinant 1.
fn two_row_transform(
    m: &mut Mat,
    r1: usize,
    r2: usize,
    x: &RingElement,
    y: &RingElement,
    a_g: &RingElement,
    b_g: &RingElement,
) -> Result<()> {
    for c in 0..m.cols() {
        let u = m.at(r1, c).clone();
        let v = m.at(r2, c).clone();
        m.set(r1, c, x.mul(&u)?.add(&y.mul(&v)?));
        m.set(r2, c, a_g.mul(&v)?.sub(&b_g.mul(&u)?));
    }
    Ok(())
}

/// The inverse transform applied to u's columns so u * work is unchanged:
/// inverse of [[x, y], [-b_g, a_g]] is [[a_g, -y], [b_g, x]].
fn two_col_transform_u(
    u: &mut Mat,
    c1: usize,
    c2: usize,
    x: &RingElement,
    y: &RingElement,
    a_g: &RingElement,
    b_g: &RingElement,
) -> Result<()> {
    for r in 0..u.rows() {
        let p = u.at(r, c1).clone();
        let q = u.at(r, c2).clone();
        u.set(r, c1, p.mul(a_g)?.add(&q.mul(b_g)?));
        u.set(r, c2, q.mul(x)?.sub(&p.mul(y)?));
    }
    Ok(())
}

/// cols (c1, c2) <- (x c1 + y c2, -b_g c1 + a_g c2)
fn two_col_transform(
    m: &mut Mat,
    c1: usize,
    c2: usize,
    x: &RingElement,
    y: &RingElement,
    a_g: &RingElement,
    b_g: &RingElement,
) -> Result<()> {
    for r in 0..m.rows() {
        let u = m.at(r, c1).clone();
        let v = m.at(r, c2).clone();
        m.set(r, c1, x.mul(&u)?.add(&y.mul(&v)?));
        m.set(r, c2, a_g.mul(&v)?.sub(&b_g.mul(&u)?));
    }
    Ok(())
}

/// Degree of a line-bundle transition written as a unit monomial c * t^k
/// over the overlap of a two-chart projective line: degree = -k for the
/// chart order (t-chart, s-chart).
pub fn transition_degree(transition: &RingElement) -> Result<i64> {
    let rp = transition.ring().mod_p();
    let reduced = if transition.ring().precision() == 1 {
        transition.clone()
    } else {
        transition.reduce_to(&rp)
    };
    let (k, _) = reduced.as_unit_monomial()?;
    Ok(-k)
}

/// Reduced fraction for slopes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0);
        let g = gcd_i64(num.abs(), den.abs()).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Rational { num: sign * num / g, den: sign * den / g }
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd_i64(b, a % b)
    }
}
