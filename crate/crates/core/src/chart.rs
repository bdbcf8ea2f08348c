//! Local filtered de Rham data and mod-p Higgs data on a single chart.
//!
//! A `FilteredDeRhamChart` is the free-module presentation of a local
//! quadruple (H, Fil, nabla, Phi): filtration level per basis vector,
//! one connection matrix per variable, a chosen Frobenius lifting, and
//! the Frobenius matrix. Conventions are pinned once here and documented
//! in docs/conventions.md:
//!
//!   * nabla acts on coordinate columns as v |-> dv + sum_l A_l v dt_l,
//!     so column a of A_l holds the coordinates of nabla_{d/dt_l} e_a;
//!   * column a of Phi holds the coordinates of Phi(F^* e_a).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::report::CheckResult;
use crate::ring::{ChartRing, RingElement};
use crate::scalar::{factorial_unit_part, ord_factorial_ratio, MultiIndex, PadicScalar};

/// A Frobenius lifting on a chart ring of precision >= 2: images of the
/// variables, congruent to p-th powers mod p, sending every inverted
/// element to a unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrobeniusLifting {
    ring: Arc<ChartRing>,
    images: Vec<RingElement>,
}

impl FrobeniusLifting {
    pub fn new(ring: &Arc<ChartRing>, images: Vec<RingElement>) -> Result<Self> {
        if ring.precision() < 2 {
            return Err(Error::PrecisionTooLow(
                "a Frobenius lifting needs precision >= 2".into(),
            ));
        }
        if images.len() != ring.dim() {
            return Err(Error::InvalidLifting("one image per variable required".into()));
        }
        for img in &images {
            if img.ring().as_ref() != ring.as_ref() {
                return Err(Error::RingMismatch("lifting image outside the chart ring".into()));
            }
        }
        Ok(FrobeniusLifting { ring: Arc::clone(ring), images })
    }

    pub fn standard(ring: &Arc<ChartRing>) -> Result<Self> {
        let images =
            (0..ring.dim()).map(|l| RingElement::var(ring, l).pow(ring.p() as i64).unwrap()).collect();
        Self::new(ring, images)
    }

    pub fn parse(ring: &Arc<ChartRing>, texts: &[String]) -> Result<Self> {
        let images = texts
            .iter()
            .map(|t| RingElement::parse(ring, t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ring, images)
    }

    pub fn ring(&self) -> &Arc<ChartRing> {
        &self.ring
    }

    pub fn images(&self) -> &[RingElement] {
        &self.images
    }

    /// Checks F(t_l) = t_l^p mod p and that inverted elements map to units.
    pub fn check_valid(&self) -> Result<()> {
        let rp = self.ring.mod_p();
        for (l, img) in self.images.iter().enumerate() {
            let reduced = img.reduce_to(&rp);
            let tp = RingElement::var(&rp, l).pow(self.ring.p() as i64).unwrap();
            if reduced != tp {
                return Err(Error::InvalidLifting(format!(
                    "image of {} is {} mod p, expected {}",
                    self.ring.vars()[l],
                    reduced.render(),
                    tp.render()
                )));
            }
            if self.ring.inverted()[l] && !img.is_unit() {
                return Err(Error::InvalidLifting(format!(
                    "image of inverted variable {} is not a unit",
                    self.ring.vars()[l]
                )));
            }
        }
        for (i, _) in self.ring.denominators().iter().enumerate() {
            // the denominator itself, as an element, must map to a unit
            let den_el = denominator_element(&self.ring, i);
            let image = den_el.substitute(&self.ring, &self.images)?;
            if !image.is_unit() {
                return Err(Error::InvalidLifting(format!(
                    "image of denominator #{i} is not a unit"
                )));
            }
        }
        Ok(())
    }

    /// F^# applied to an element of the chart ring (same precision).
    pub fn pullback(&self, f: &RingElement) -> Result<RingElement> {
        f.substitute(&self.ring, &self.images)
    }

    pub fn pullback_mat(&self, m: &Mat) -> Result<Mat> {
        m.substitute(&self.ring, &self.images)
    }

    /// d/dt_k of F(t_l); each such derivative is divisible by p.
    pub fn derivative(&self, l: usize, k: usize) -> Result<RingElement> {
        self.images[l].partial_derivative(k)
    }

    /// f_{l,k} = (d/dt_k F(t_l)) / p, reduced mod p.
    pub fn divided_derivative_mod_p(&self, l: usize, k: usize) -> Result<RingElement> {
        let d = self.derivative(l, k)?;
        let lower = self.ring.with_precision(self.ring.precision() - 1);
        let divided = d.exact_div_pow(1, &lower).map_err(|_| {
            Error::InvalidLifting("lifting derivative not divisible by p".into())
        })?;
        Ok(divided.reduce_to(&self.ring.mod_p()))
    }

    pub fn reduce_to(&self, target: &Arc<ChartRing>) -> Result<Self> {
        let images = self.images.iter().map(|i| i.reduce_to(target)).collect();
        Self::new(target, images)
    }

    pub fn include_into(&self, finer: &Arc<ChartRing>) -> Result<Self> {
        let images = self
            .images
            .iter()
            .map(|i| i.include_into(finer))
            .collect::<Result<Vec<_>>>()?;
        Self::new(finer, images)
    }

    pub fn render(&self) -> Vec<String> {
        self.images.iter().map(|i| i.render()).collect()
    }
}

pub fn denominator_element(ring: &Arc<ChartRing>, idx: usize) -> RingElement {
    RingElement::from_dense(ring, &ring.denominators()[idx])
}

/// Graded mod-p Higgs data: levels per basis vector and one Higgs matrix
/// per variable, strictly lowering the level by one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HiggsChart {
    ring: Arc<ChartRing>,
    rank: usize,
    levels: Vec<u32>,
    theta: Vec<Mat>,
}

impl HiggsChart {
    pub fn new(ring: &Arc<ChartRing>, levels: Vec<u32>, theta: Vec<Mat>) -> Result<Self> {
        if ring.precision() != 1 {
            return Err(Error::InvalidInput("Higgs charts live at precision 1".into()));
        }
        let rank = levels.len();
        if theta.len() != ring.dim() {
            return Err(Error::InvalidInput("one Higgs matrix per variable required".into()));
        }
        for th in &theta {
            if th.rows() != rank || th.cols() != rank {
                return Err(Error::InvalidInput("Higgs matrix dimension mismatch".into()));
            }
            if th.ring().as_ref() != ring.as_ref() {
                return Err(Error::RingMismatch("Higgs matrix outside the chart ring".into()));
            }
        }
        Ok(HiggsChart { ring: Arc::clone(ring), rank, levels, theta })
    }

    pub fn ring(&self) -> &Arc<ChartRing> {
        &self.ring
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn theta(&self) -> &[Mat] {
        &self.theta
    }

    pub fn validate(&self) -> Vec<CheckResult> {
        let mut out = Vec::new();
        // strict lowering: entry (b,a) nonzero requires level(b) = level(a) - 1
        let mut lower = Ok(());
        'outer: for (l, th) in self.theta.iter().enumerate() {
            for a in 0..self.rank {
                for b in 0..self.rank {
                    if !th.at(b, a).is_zero() && self.levels[b] + 1 != self.levels[a] {
                        lower = Err(format!(
                            "theta_{l} entry ({b},{a}) = {} does not lower the level by one",
                            th.at(b, a).render()
                        ));
                        break 'outer;
                    }
                }
            }
        }
        out.push(CheckResult::from_outcome("theta-lowers-grading", lower));
        let mut comm = Ok(());
        'outer2: for k in 0..self.theta.len() {
            for l in k + 1..self.theta.len() {
                let ab = self.theta[k].mul(&self.theta[l]);
                let ba = self.theta[l].mul(&self.theta[k]);
                match (ab, ba) {
                    (Ok(ab), Ok(ba)) => {
                        if let Some((r, c, lhs, rhs)) = ab.first_difference(&ba) {
                            comm = Err(format!(
                                "theta_{k} theta_{l} != theta_{l} theta_{k} at ({r},{c}): {lhs} vs {rhs}"
                            ));
                            break 'outer2;
                        }
                    }
                    _ => {
                        comm = Err("Higgs product failed".into());
                        break 'outer2;
                    }
                }
            }
        }
        out.push(CheckResult::from_outcome("theta-commutes", comm));
        out
    }

    pub fn theta_apply(&self, l: usize, v: &[RingElement]) -> Result<Vec<RingElement>> {
        self.theta[l].mul_vec(v)
    }

    /// theta^j = theta_1^{j_1} theta_2^{j_2} applied to coordinates.
    pub fn theta_iterate(&self, j: &MultiIndex, v: &[RingElement]) -> Result<Vec<RingElement>> {
        let mut cur = v.to_vec();
        for (l, &count) in j.entries().iter().enumerate() {
            for _ in 0..count {
                cur = self.theta_apply(l, &cur)?;
            }
        }
        Ok(cur)
    }

    pub fn restrict(&self, finer: &Arc<ChartRing>) -> Result<Self> {
        let theta = self
            .theta
            .iter()
            .map(|t| t.include_into(finer))
            .collect::<Result<Vec<_>>>()?;
        Self::new(finer, self.levels.clone(), theta)
    }
}

/// The local quadruple (H, Fil, nabla, Phi) on a chart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilteredDeRhamChart {
    ring: Arc<ChartRing>,
    rank: usize,
    weight: u32,
    fil: Vec<u32>,
    conn: Vec<Mat>,
    lifting: FrobeniusLifting,
    phi: Mat,
}

impl FilteredDeRhamChart {
    pub fn new(
        ring: &Arc<ChartRing>,
        weight: u32,
        fil: Vec<u32>,
        conn: Vec<Mat>,
        lifting: FrobeniusLifting,
        phi: Mat,
    ) -> Result<Self> {
        let rank = fil.len();
        if conn.len() != ring.dim() {
            return Err(Error::InvalidInput("one connection matrix per variable".into()));
        }
        for a in &conn {
            if a.rows() != rank || a.cols() != rank || a.ring().as_ref() != ring.as_ref() {
                return Err(Error::InvalidInput("connection matrix shape/ring mismatch".into()));
            }
        }
        if phi.rows() != rank || phi.cols() != rank || phi.ring().as_ref() != ring.as_ref() {
            return Err(Error::InvalidInput("Frobenius matrix shape/ring mismatch".into()));
        }
        if lifting.ring().as_ref() != ring.as_ref() {
            return Err(Error::RingMismatch("lifting outside the chart ring".into()));
        }
        Ok(FilteredDeRhamChart { ring: Arc::clone(ring), rank, weight, fil, conn, lifting, phi })
    }

    pub fn ring(&self) -> &Arc<ChartRing> {
        &self.ring
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn fil(&self) -> &[u32] {
        &self.fil
    }

    pub fn conn(&self) -> &[Mat] {
        &self.conn
    }

    pub fn lifting(&self) -> &FrobeniusLifting {
        &self.lifting
    }

    pub fn phi(&self) -> &Mat {
        &self.phi
    }

    /// nabla_{d/dt_l} on coordinate columns: dv + A_l v.
    pub fn nabla(&self, l: usize, v: &[RingElement]) -> Result<Vec<RingElement>> {
        let av = self.conn[l].mul_vec(v)?;
        let mut out = Vec::with_capacity(v.len());
        for (x, a) in v.iter().zip(av) {
            out.push(x.partial_derivative(l)?.add(&a));
        }
        Ok(out)
    }

    /// nabla^j = nabla_1^{j_1} nabla_2^{j_2}; integrability makes the
    /// ordering immaterial.
    pub fn nabla_iterate(&self, j: &MultiIndex, v: &[RingElement]) -> Result<Vec<RingElement>> {
        let mut cur = v.to_vec();
        for (l, &count) in j.entries().iter().enumerate() {
            for _ in 0..count {
                cur = self.nabla(l, &cur)?;
            }
        }
        Ok(cur)
    }

    fn basis_column(&self, a: usize) -> Vec<RingElement> {
        (0..self.rank)
            .map(|r| if r == a { RingElement::one(&self.ring) } else { RingElement::zero(&self.ring) })
            .collect()
    }

    /// The five axioms plus structural bounds, reported one by one with a
    /// first counterexample on failure.
    pub fn validate(&self) -> Vec<CheckResult> {
        let mut out = Vec::new();

        let p = self.ring.p();
        let m = self.ring.precision();
        let structure = if self.weight as u64 > p - 2 {
            Err(format!("weight n = {} exceeds p - 2 = {}", self.weight, p - 2))
        } else if m < self.weight + 1 {
            Err(format!("precision m = {m} is below n + 1 = {}", self.weight + 1))
        } else if self.fil.iter().any(|&f| f > self.weight) {
            Err("a filtration level exceeds the weight".into())
        } else {
            Ok(())
        };
        out.push(CheckResult::from_outcome("weight-bounds", structure));

        out.push(CheckResult::from_outcome(
            "frobenius-lifting",
            self.lifting.check_valid().map_err(|e| e.to_string()),
        ));

        // Griffiths transversality: A_l[b][a] = 0 whenever fil(b) < fil(a) - 1
        let mut griffiths = Ok(());
        'g: for (l, a_mat) in self.conn.iter().enumerate() {
            for a in 0..self.rank {
                for b in 0..self.rank {
                    if (self.fil[b] as i64) < self.fil[a] as i64 - 1 && !a_mat.at(b, a).is_zero() {
                        griffiths = Err(format!(
                            "A_{l} entry ({b},{a}) = {} drops the filtration by more than one",
                            a_mat.at(b, a).render()
                        ));
                        break 'g;
                    }
                }
            }
        }
        out.push(CheckResult::from_outcome("griffiths-transversality", griffiths));

        // integrability: d_k A_l - d_l A_k + A_k A_l - A_l A_k = 0
        let integrability = (|| -> Result<std::result::Result<(), String>> {
            for k in 0..self.conn.len() {
                for l in k + 1..self.conn.len() {
                    let curv = self.conn[l]
                        .derivative(k)?
                        .sub(&self.conn[k].derivative(l)?)
                        .add(&self.conn[k].mul(&self.conn[l])?)
                        .sub(&self.conn[l].mul(&self.conn[k])?);
                    if !curv.is_zero() {
                        let zero = Mat::zero(&self.ring, self.rank, self.rank);
                        let (r, c, lhs, _) = curv.first_difference(&zero).unwrap();
                        return Ok(Err(format!(
                            "curvature in directions ({k},{l}) at entry ({r},{c}): {lhs}"
                        )));
                    }
                }
            }
            Ok(Ok(()))
        })();
        out.push(match integrability {
            Ok(res) => CheckResult::from_outcome("integrability", res),
            Err(e) => CheckResult::error("integrability", e.to_string()),
        });

        // p-divisibility of Phi columns by p^{fil(a)}
        let mut divisibility = Ok(());
        'd: for a in 0..self.rank {
            for b in 0..self.rank {
                let entry = self.phi.at(b, a);
                for (mono, c) in entry.terms() {
                    if c.valuation() < self.fil[a] {
                        divisibility = Err(format!(
                            "Phi entry ({b},{a}), monomial exponent {mono:?}: coefficient {} is not divisible by p^{}",
                            c.value(),
                            self.fil[a]
                        ));
                        break 'd;
                    }
                }
            }
        }
        out.push(CheckResult::from_outcome("p-divisibility", divisibility));

        // horizontality: d_k Phi + A_k Phi = sum_l Phi F^#(A_l) d_k(F(t_l))
        let horizontality = (|| -> Result<std::result::Result<(), String>> {
            for k in 0..self.conn.len() {
                let lhs = self.phi.derivative(k)?.add(&self.conn[k].mul(&self.phi)?);
                let mut rhs = Mat::zero(&self.ring, self.rank, self.rank);
                for l in 0..self.conn.len() {
                    let pulled = self.lifting.pullback_mat(&self.conn[l])?;
                    let dfl = self.lifting.derivative(l, k)?;
                    rhs = rhs.add(&self.phi.mul(&pulled)?.scale(&dfl)?);
                }
                if let Some((r, c, a, b)) = lhs.first_difference(&rhs) {
                    return Ok(Err(format!(
                        "direction t_{k}, entry ({r},{c}): left {a}, right {b}"
                    )));
                }
            }
            Ok(Ok(()))
        })();
        out.push(match horizontality {
            Ok(res) => CheckResult::from_outcome("frobenius-horizontality", res),
            Err(e) => CheckResult::error("frobenius-horizontality", e.to_string()),
        });

        // strong divisibility: det of the divided Frobenius is a unit mod p;
        // not evaluable at all when p-divisibility already failed
        out.push(match self.phi_tilde_matrix() {
            Err(e) => CheckResult::error(
                "strong-divisibility",
                format!("not evaluable: {e}"),
            ),
            Ok(tilde) => match tilde.det() {
                Err(e) => CheckResult::error("strong-divisibility", e.to_string()),
                Ok(det) => match det.unit_check() {
                    Ok(_) => CheckResult::pass("strong-divisibility"),
                    Err(_) => CheckResult::fail(
                        "strong-divisibility",
                        format!("det of divided Frobenius = {} is not a unit", det.render()),
                    ),
                },
            },
        });

        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().iter().all(|c| c.passed())
    }

    /// The mod-p matrix whose column a is Phi column a divided by p^{fil(a)}.
    pub fn phi_tilde_matrix(&self) -> Result<Mat> {
        let rp = self.ring.mod_p();
        let mut cols = Vec::with_capacity(self.rank);
        for a in 0..self.rank {
            let lower = self.ring.with_precision(self.ring.precision() - self.fil[a]);
            let col = self
                .phi
                .col(a)
                .into_iter()
                .map(|e| Ok(e.exact_div_pow(self.fil[a], &lower)?.reduce_to(&rp)))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    Error::NotDivisible { .. } | Error::PrecisionExhausted { .. } => {
                        Error::InvalidInput(format!(
                            "Phi column {a} is not divisible by p^{}",
                            self.fil[a]
                        ))
                    }
                    other => other,
                })?;
            cols.push(col);
        }
        Ok(Mat::from_cols(&rp, cols))
    }

    /// The associated graded Higgs data: levels = fil, theta = the
    /// level-lowering block of the connection, mod p.
    pub fn gr_fil(&self) -> Result<HiggsChart> {
        let failures: Vec<String> = self
            .validate()
            .into_iter()
            .filter(|c| !c.passed())
            .map(|c| c.check)
            .collect();
        if !failures.is_empty() {
            return Err(Error::InvalidInput(format!(
                "chart fails validation: {}",
                failures.join(", ")
            )));
        }
        let rp = self.ring.mod_p();
        let theta = self
            .conn
            .iter()
            .map(|a_mat| {
                Mat::from_fn(&rp, self.rank, self.rank, |b, a| {
                    if self.fil[b] + 1 == self.fil[a] {
                        a_mat.at(b, a).reduce_to(&rp)
                    } else {
                        RingElement::zero(&rp)
                    }
                })
            })
            .collect();
        HiggsChart::new(&rp, self.fil.clone(), theta)
    }

    /// Change the Frobenius lifting, rewriting Phi through the divided-power
    /// Taylor expansion. The data (H, Fil, nabla) is unchanged.
    pub fn transport_frobenius(&self, new_lifting: &FrobeniusLifting) -> Result<Self> {
        if new_lifting.ring().as_ref() != self.ring.as_ref() {
            return Err(Error::RingMismatch("new lifting lives on a different ring".into()));
        }
        new_lifting.check_valid()?;
        let m = self.ring.precision();
        let p = self.ring.p();
        let dim = self.ring.dim();
        // all terms with ord_p(p^{|j|}/j!) >= m vanish; |j| <= max(n+m, 2m-2)
        // covers everything below that valuation
        let bound = (self.weight + m).max(2 * m - 2);

        // z_l = F'(t_l) - F(t_l), divisible by p; w_l = z_l / p
        let lower = self.ring.with_precision(m - 1);
        let mut w = Vec::with_capacity(dim);
        for l in 0..dim {
            let z = new_lifting.images()[l].sub(&self.lifting.images()[l]);
            let wl = z.exact_div_pow(1, &lower).map_err(|_| {
                Error::InvalidLifting("lifting difference not divisible by p".into())
            })?;
            w.push(wl);
        }

        let mut cols = Vec::with_capacity(self.rank);
        for a in 0..self.rank {
            let mut acc: Vec<RingElement> =
                (0..self.rank).map(|_| RingElement::zero(&self.ring)).collect();
            for j in MultiIndex::all_up_to(dim, bound) {
                let e = ord_factorial_ratio(&j, p);
                if !j.is_zero() && e >= m {
                    continue;
                }
                let nabla_j = self.nabla_iterate(&j, &self.basis_column(a))?;
                let pulled: Vec<RingElement> = nabla_j
                    .iter()
                    .map(|x| self.lifting.pullback(x))
                    .collect::<Result<Vec<_>>>()?;
                let base = self.phi.mul_vec(&pulled)?;
                if j.is_zero() {
                    for (slot, b) in acc.iter_mut().zip(base) {
                        *slot = slot.add(&b);
                    }
                    continue;
                }
                // z^j / j! = p^e * u^{-1} * w^j with u the unit part of j!
                let mut wj = RingElement::one(&lower);
                for (l, &count) in j.entries().iter().enumerate() {
                    wj = wj.mul(&w[l].pow(count as i64)?)?;
                }
                let u_inv = factorial_unit_part(&j, p, m - 1).inverse()?;
                let coeff = wj.mul_scalar(&u_inv);
                for (slot, b) in acc.iter_mut().zip(base) {
                    let term = b.reduce_to(&lower).mul(&coeff)?.mul_by_pow_p(e, &self.ring);
                    *slot = slot.add(&term);
                }
            }
            cols.push(acc);
        }
        let phi = Mat::from_cols(&self.ring, cols);
        FilteredDeRhamChart::new(
            &self.ring,
            self.weight,
            self.fil.clone(),
            self.conn.clone(),
            new_lifting.clone(),
            phi,
        )
    }

    /// Direct sum on the same ring and lifting.
    pub fn build_sum(&self, other: &Self) -> Result<Self> {
        if self.ring.as_ref() != other.ring.as_ref() {
            return Err(Error::RingMismatch("direct sum needs a common ring".into()));
        }
        if self.lifting != other.lifting {
            return Err(Error::InvalidInput("direct sum needs a common lifting".into()));
        }
        let weight = self.weight.max(other.weight);
        let mut fil = self.fil.clone();
        fil.extend_from_slice(&other.fil);
        let conn = self
            .conn
            .iter()
            .zip(&other.conn)
            .map(|(a, b)| a.block_diag(b))
            .collect();
        let phi = self.phi.block_diag(&other.phi);
        FilteredDeRhamChart::new(&self.ring, weight, fil, conn, self.lifting.clone(), phi)
    }

    /// Tensor product: filtration adds, Phi multiplies (Kronecker), the
    /// connection acts by the Leibniz rule.
    pub fn build_tensor(&self, other: &Self) -> Result<Self> {
        if self.ring.as_ref() != other.ring.as_ref() {
            return Err(Error::RingMismatch("tensor product needs a common ring".into()));
        }
        if self.lifting != other.lifting {
            return Err(Error::InvalidInput("tensor product needs a common lifting".into()));
        }
        let weight = self.weight + other.weight;
        let p = self.ring.p();
        if weight as u64 > p - 2 {
            return Err(Error::WeightOverflow(format!(
                "combined weight {} exceeds p - 2 = {}",
                weight,
                p - 2
            )));
        }
        if self.ring.precision() < weight + 1 {
            return Err(Error::PrecisionTooLow(format!(
                "tensor of weight {} needs precision >= {}",
                weight,
                weight + 1
            )));
        }
        let mut fil = Vec::with_capacity(self.rank * other.rank);
        for a in 0..self.rank {
            for b in 0..other.rank {
                fil.push(self.fil[a] + other.fil[b]);
            }
        }
        let id_a = Mat::identity(&self.ring, self.rank);
        let id_b = Mat::identity(&self.ring, other.rank);
        let conn = self
            .conn
            .iter()
            .zip(&other.conn)
            .map(|(a, b)| Ok(a.kronecker(&id_b)?.add(&id_a.kronecker(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let phi = self.phi.kronecker(&other.phi)?;
        FilteredDeRhamChart::new(&self.ring, weight, fil, conn, self.lifting.clone(), phi)
    }

    /// Coefficient-wise inclusion into a finer localization.
    pub fn restrict(&self, finer: &Arc<ChartRing>) -> Result<Self> {
        if !finer.extends(&self.ring) {
            return Err(Error::IncompatibleRings(format!(
                "{:?} does not extend {:?}",
                finer,
                self.ring
            )));
        }
        let conn = self
            .conn
            .iter()
            .map(|a| a.include_into(finer))
            .collect::<Result<Vec<_>>>()?;
        FilteredDeRhamChart::new(
            finer,
            self.weight,
            self.fil.clone(),
            conn,
            self.lifting.include_into(finer)?,
            self.phi.include_into(finer)?,
        )
    }

    /// Rewrite all data in the basis whose columns are given by `basis`
    /// (an invertible matrix over the ring). The filtration levels of the
    /// new basis vectors must be supplied by the caller.
    pub fn change_basis(&self, basis: &Mat, new_fil: Vec<u32>) -> Result<Self> {
        let inv = basis.inverse()?;
        let conn = self
            .conn
            .iter()
            .enumerate()
            .map(|(l, a)| {
                let transformed = inv.mul(&basis.derivative(l)?.add(&a.mul(basis)?))?;
                Ok(transformed)
            })
            .collect::<Result<Vec<_>>>()?;
        let phi = inv.mul(&self.phi)?.mul(&self.lifting.pullback_mat(basis)?)?;
        FilteredDeRhamChart::new(&self.ring, self.weight, new_fil, conn, self.lifting.clone(), phi)
    }

    /// Extract the sub-chart on a subset of basis indices; all blocks
    /// coupling the subset to its complement must vanish.
    pub fn sub_chart(&self, keep: &[usize], weight: u32) -> Result<Self> {
        let complement: Vec<usize> =
            (0..self.rank).filter(|i| !keep.contains(i)).collect();
        for (l, a) in self.conn.iter().enumerate() {
            for &i in keep {
                for &j in &complement {
                    if !a.at(i, j).is_zero() || !a.at(j, i).is_zero() {
                        return Err(Error::InvalidInput(format!(
                            "connection A_{l} couples index {i} with dropped index {j}"
                        )));
                    }
                }
            }
        }
        for &i in keep {
            for &j in &complement {
                if !self.phi.at(i, j).is_zero() || !self.phi.at(j, i).is_zero() {
                    return Err(Error::InvalidInput(format!(
                        "Frobenius couples index {i} with dropped index {j}"
                    )));
                }
            }
        }
        let fil = keep.iter().map(|&i| self.fil[i]).collect();
        let conn = self
            .conn
            .iter()
            .map(|a| {
                Mat::from_fn(&self.ring, keep.len(), keep.len(), |r, c| {
                    a.at(keep[r], keep[c]).clone()
                })
            })
            .collect();
        let phi = Mat::from_fn(&self.ring, keep.len(), keep.len(), |r, c| {
            self.phi.at(keep[r], keep[c]).clone()
        });
        FilteredDeRhamChart::new(&self.ring, weight, fil, conn, self.lifting.clone(), phi)
    }

    /// The symmetric square as a direct summand of the tensor square, in
    /// the basis e_i e_j (i >= j, descending), with e_i e_j for i > j the
    /// halved symmetrization.
    pub fn symmetric_square(&self) -> Result<Self> {
        let square = self.build_tensor(self)?;
        let r = self.rank;
        let two_inv = PadicScalar::new(self.ring.p(), self.ring.precision(), 2).inverse()?;
        let mut cols: Vec<Vec<RingElement>> = Vec::new();
        let mut fil = Vec::new();
        let mut sym_count = 0usize;
        let mut push_vector = |idx_pairs: Vec<(usize, PadicScalar)>, level: u32| {
            let mut col = vec![RingElement::zero(&self.ring); r * r];
            for (i, c) in idx_pairs {
                col[i] = RingElement::constant(&self.ring, c);
            }
            cols.push(col);
            fil.push(level);
        };
        let one = PadicScalar::one(self.ring.p(), self.ring.precision());
        for i in (0..r).rev() {
            for j in (0..=i).rev() {
                if i == j {
                    push_vector(vec![(i * r + i, one)], 2 * self.fil[i]);
                } else {
                    push_vector(
                        vec![(i * r + j, two_inv), (j * r + i, two_inv)],
                        self.fil[i] + self.fil[j],
                    );
                }
                sym_count += 1;
            }
        }
        for i in (0..r).rev() {
            for j in (0..i).rev() {
                push_vector(
                    vec![(i * r + j, two_inv), (j * r + i, two_inv.neg())],
                    self.fil[i] + self.fil[j],
                );
            }
        }
        let basis = Mat::from_cols(&self.ring, cols);
        let rebased = square.change_basis(&basis, fil)?;
        rebased.sub_chart(&(0..sym_count).collect::<Vec<_>>(), 2 * self.weight)
    }
}
