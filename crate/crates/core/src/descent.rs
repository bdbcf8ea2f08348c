//! p-curvature, the conjugate filtration, Cartier descent of flat
//! submodules, the round trip for subsystems of Hodge bundles, and the
//! inverse Cartier transform by exponential twisting with determinant and
//! degree checks.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::associate::{associate_subsheaf, phi_tilde};
use crate::chart::{FilteredDeRhamChart, FrobeniusLifting, HiggsChart};
use crate::error::{Error, Result};
use crate::glued::GluedObject;
use crate::matrix::Mat;
use crate::ring::{ChartRing, RingElement};
use crate::scalar::PadicScalar;
use crate::submodule::{transition_degree, SubmodulePresentation};

/// The p-curvature of a mod-p connection: one matrix per variable, each
/// the p-th iterate of differentiation in that direction.
#[derive(Clone, Debug)]
pub struct PCurvature {
    pub psi: Vec<Mat>,
}

/// Apply (nabla_l)^k to a coordinate vector.
pub fn nabla_power(
    conn: &[Mat],
    l: usize,
    k: u32,
    v: &[RingElement],
) -> Result<Vec<RingElement>> {
    let mut cur = v.to_vec();
    for _ in 0..k {
        let av = conn[l].mul_vec(&cur)?;
        let mut next = Vec::with_capacity(cur.len());
        for (x, a) in cur.iter().zip(av) {
            next.push(x.partial_derivative(l)?.add(&a));
        }
        cur = next;
    }
    Ok(cur)
}

/// psi_l = matrix of (nabla_l)^p, by operator iteration on the identity.
pub fn p_curvature(ring: &Arc<ChartRing>, conn: &[Mat]) -> Result<PCurvature> {
    if ring.precision() != 1 {
        return Err(Error::InvalidInput("p-curvature is a mod-p notion".into()));
    }
    let p = ring.p() as u32;
    let rank = conn[0].rows();
    let mut psi = Vec::with_capacity(conn.len());
    for l in 0..conn.len() {
        let mut mat = Mat::identity(ring, rank);
        for _ in 0..p {
            mat = conn[l].mul(&mat)?.add(&mat.derivative(l)?);
        }
        psi.push(mat);
    }
    Ok(PCurvature { psi })
}

impl PCurvature {
    /// Function-linearity: the p-th iterate applied to f*v equals f times
    /// the matrix applied to v. The left side is recomputed by operator
    /// iteration, independently of the matrix.
    pub fn linearity_holds(
        &self,
        conn: &[Mat],
        f: &RingElement,
        v: &[RingElement],
    ) -> Result<bool> {
        let p = f.ring().p() as u32;
        for l in 0..conn.len() {
            let fv: Vec<RingElement> =
                v.iter().map(|x| x.mul(f)).collect::<Result<Vec<_>>>()?;
            let lhs = nabla_power(conn, l, p, &fv)?;
            let psi_v = self.psi[l].mul_vec(v)?;
            let rhs: Vec<RingElement> =
                psi_v.iter().map(|x| x.mul(f)).collect::<Result<Vec<_>>>()?;
            if lhs != rhs {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn commute(&self) -> Result<bool> {
        for k in 0..self.psi.len() {
            for l in k + 1..self.psi.len() {
                if self.psi[k].mul(&self.psi[l])? != self.psi[l].mul(&self.psi[k])? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn nilpotency_holds(&self, exponent: u32) -> Result<bool> {
        for m in &self.psi {
            if !m.pow(exponent)?.is_zero() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn vanishes_on(&self, w: &SubmodulePresentation) -> Result<bool> {
        for m in &self.psi {
            for col in w.normal_form().columns() {
                let image = m.mul_vec(&col)?;
                if image.iter().any(|x| !x.is_zero()) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// The decreasing horizontal filtration on the mod-p fiber whose q-th step
/// is spanned by the divided-Frobenius columns of levels <= n - q.
#[derive(Clone, Debug)]
pub struct ConjugateFiltration {
    /// steps[q] for q = 0 ..= n+1; steps[0] is everything, steps[n+1] = 0.
    pub steps: Vec<SubmodulePresentation>,
}

pub fn conjugate_filtration(chart: &FilteredDeRhamChart) -> Result<ConjugateFiltration> {
    let tilde = phi_tilde(chart)?;
    let rp = chart.ring().mod_p();
    let n = chart.weight();
    let conn_p: Vec<Mat> = chart.conn().iter().map(|a| a.reduce_to(&rp)).collect();
    let mut steps = Vec::with_capacity(n as usize + 2);
    for q in 0..=n + 1 {
        let cols: Vec<Vec<RingElement>> = (0..chart.rank())
            .filter(|&a| q <= n && chart.fil()[a] <= n - q)
            .map(|a| tilde.mat.col(a))
            .collect();
        let step = SubmodulePresentation::new(&rp, chart.rank(), cols)?;
        // horizontality of the step
        for col in step.normal_form().columns() {
            for (l, a_mat) in conn_p.iter().enumerate() {
                let mut image = a_mat.mul_vec(&col)?;
                for (slot, x) in image.iter_mut().zip(&col) {
                    *slot = slot.add(&x.partial_derivative(l)?);
                }
                if !step.contains_vector(&image)? {
                    return Err(Error::HorizontalityViolation(format!(
                        "conjugate filtration step {q} is not nabla-stable"
                    )));
                }
            }
        }
        // graded pieces are free of the expected ranks
        let expected: usize =
            (0..chart.rank()).filter(|&a| q <= n && chart.fil()[a] <= n - q).count();
        if step.rank() != expected || !step.saturate()?.equals(&step)? {
            return Err(Error::InvalidInput(format!(
                "conjugate filtration step {q} is not a free direct summand of rank {expected}"
            )));
        }
        steps.push(step);
    }
    Ok(ConjugateFiltration { steps })
}

/// The filtration identity: the subsheaf associated to the level-truncated
/// part equals the associated subsheaf intersected with the matching
/// conjugate step, for every truncation level.
pub fn remark_identity_holds(
    chart: &FilteredDeRhamChart,
    g: &SubmodulePresentation,
) -> Result<bool> {
    let n = chart.weight();
    if !g.is_subsystem_of_hodge(chart.fil())? {
        return Err(Error::InvalidInput(
            "the filtration identity applies to graded submodules".into(),
        ));
    }
    let parts = g.graded_parts(chart.fil())?;
    let conj = conjugate_filtration(chart)?;
    let s_full = associate_subsheaf(chart, g, false)?;
    for i in 0..=n {
        let mut truncated = SubmodulePresentation::zero(g.ring(), g.ambient_rank());
        for (lvl, part) in parts.iter().enumerate() {
            if (lvl as u32) <= i {
                truncated = truncated.sum(part)?;
            }
        }
        let lhs = associate_subsheaf(chart, &truncated, false)?;
        let rhs = s_full.intersect(&conj.steps[(n - i) as usize])?;
        if !lhs.equals(&rhs)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Flat sections of a submodule under a mod-p connection, solved by a
/// degree-bounded linear system over F_p on the coefficients of the
/// combination of normal-form generators. Returns generators whose span
/// is the whole submodule.
pub fn cartier_descend_flat(
    conn: &[Mat],
    w: &SubmodulePresentation,
    degree_bound: Option<i64>,
) -> Result<Vec<Vec<RingElement>>> {
    let ring = w.ring().clone();
    let p = ring.p();
    let psi = p_curvature(&ring, conn)?;
    if !psi.vanishes_on(w)? {
        return Err(Error::NotPCurvatureZero(
            "the p-curvature does not vanish on the submodule".into(),
        ));
    }
    let gens = w.normal_form().columns();
    if gens.is_empty() {
        return Ok(vec![]);
    }
    let max_gen_deg: i64 = gens
        .iter()
        .flat_map(|col| col.iter())
        .flat_map(|e| e.terms().keys())
        .flat_map(|k| k.iter().map(|&x| x.abs()))
        .max()
        .unwrap_or(0);
    let bound = degree_bound.unwrap_or(max_gen_deg + p as i64);

    // monomial box for the unknown coefficient functions
    let mut monos: Vec<Vec<i64>> = vec![vec![]];
    for l in 0..ring.dim() {
        let lo = if ring.inverted()[l] { -bound } else { 0 };
        let mut next = Vec::new();
        for m in &monos {
            for e in lo..=bound {
                let mut mm = m.clone();
                mm.push(e);
                next.push(mm);
            }
        }
        monos = next;
    }

    // build candidate basis elements h = t^mono * gen_i and their nabla
    // images; flatten everything over F_p
    #[derive(PartialEq, Eq, PartialOrd, Ord, Clone)]
    struct Key {
        var: usize,
        coord: usize,
        mono: Vec<i64>,
        den: Vec<u32>,
    }
    let mut keys: std::collections::BTreeMap<Key, usize> = BTreeMap::new();
    let mut columns: Vec<Vec<(usize, u64)>> = Vec::new();
    let mut candidates: Vec<Vec<RingElement>> = Vec::new();
    for gen in &gens {
        for mono in &monos {
            let m_el = match RingElement::monomial(
                &ring,
                mono.clone(),
                PadicScalar::one(p, 1),
            ) {
                Ok(x) => x,
                Err(_) => continue,
            };
            let candidate: Vec<RingElement> = gen
                .iter()
                .map(|x| x.mul(&m_el))
                .collect::<Result<Vec<_>>>()?;
            let mut col_entries = Vec::new();
            for l in 0..ring.dim() {
                let image = nabla_power(conn, l, 1, &candidate)?;
                for (coord, x) in image.iter().enumerate() {
                    for (k, c) in x.terms() {
                        let key = Key {
                            var: l,
                            coord,
                            mono: k.clone(),
                            den: x.den().to_vec(),
                        };
                        let next_idx = keys.len();
                        let idx = *keys.entry(key).or_insert(next_idx);
                        col_entries.push((idx, c.value()));
                    }
                }
            }
            columns.push(col_entries);
            candidates.push(candidate);
        }
    }

    // kernel of the flatness system over F_p
    let n_rows = keys.len();
    let n_cols = columns.len();
    let mut a = vec![vec![0u64; n_cols]; n_rows];
    for (ci, col) in columns.iter().enumerate() {
        for &(ri, val) in col {
            a[ri][ci] = (a[ri][ci] + val) % p;
        }
    }
    let kernel = fp_kernel(&a, p);

    // greedily select flat sections until they span the submodule
    let mut selected: Vec<Vec<RingElement>> = Vec::new();
    let mut span = SubmodulePresentation::zero(&ring, w.ambient_rank());
    for kvec in &kernel {
        let mut section = vec![RingElement::zero(&ring); w.ambient_rank()];
        for (ci, &coef) in kvec.iter().enumerate() {
            if coef == 0 {
                continue;
            }
            let c = PadicScalar::new(p, 1, coef);
            for (slot, x) in section.iter_mut().zip(&candidates[ci]) {
                *slot = slot.add(&x.mul_scalar(&c));
            }
        }
        if section.iter().all(|x| x.is_zero()) {
            continue;
        }
        if span.contains_vector(&section)? {
            continue;
        }
        span = span.sum(&SubmodulePresentation::new(
            &ring,
            w.ambient_rank(),
            vec![section.clone()],
        )?)?;
        selected.push(section);
        if span.equals(w)? {
            return Ok(selected);
        }
    }
    if span.equals(w)? {
        Ok(selected)
    } else {
        Err(Error::DegreeBoundExceeded(format!(
            "flat sections of degree <= {bound} do not span the submodule; raise the bound"
        )))
    }
}

/// Kernel basis of an F_p matrix by Gaussian elimination.
fn fp_kernel(a: &[Vec<u64>], p: u64) -> Vec<Vec<u64>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut m: Vec<Vec<u64>> = a.to_vec();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; cols];
    let mut rank = 0usize;
    for c in 0..cols {
        let piv = (rank..rows).find(|&r| m[r][c] != 0);
        let Some(piv) = piv else { continue };
        m.swap(rank, piv);
        let inv = mod_inverse(m[rank][c], p);
        for x in m[rank].iter_mut() {
            *x = *x * inv % p;
        }
        for r in 0..rows {
            if r != rank && m[r][c] != 0 {
                let f = m[r][c];
                for cc in 0..cols {
                    m[r][cc] = (m[r][cc] + (p - f) * m[rank][cc]) % p;
                }
            }
        }
        pivot_of_col[c] = Some(rank);
        rank += 1;
        if rank == rows {
            break;
        }
    }
    let mut kernel = Vec::new();
    for free in 0..cols {
        if pivot_of_col[free].is_some() {
            continue;
        }
        let mut v = vec![0u64; cols];
        v[free] = 1;
        for c in 0..cols {
            if let Some(r) = pivot_of_col[c] {
                // row r reads: x_c + sum coeffs = 0
                v[c] = (p - m[r][free] % p) % p;
            }
        }
        kernel.push(v);
    }
    kernel
}

fn mod_inverse(v: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    let mut base = v % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        e >>= 1;
    }
    acc
}

/// The Cartier--Katz descent of a horizontal submodule W of the mod-p
/// fiber: pass to the conjugate grading, through the inverse of the
/// divided-Frobenius graded isomorphism, and descend the resulting
/// Frobenius-pullback submodule along the canonical connection.
pub fn cartier_katz_descent(
    chart: &FilteredDeRhamChart,
    w: &SubmodulePresentation,
) -> Result<SubmodulePresentation> {
    cartier_katz_descent_bounded(chart, w, None)
}

/// As `cartier_katz_descent`, with an explicit Laurent-degree bound for
/// the flat-section solver.
pub fn cartier_katz_descent_bounded(
    chart: &FilteredDeRhamChart,
    w: &SubmodulePresentation,
    degree_bound: Option<i64>,
) -> Result<SubmodulePresentation> {
    let rp = chart.ring().mod_p();
    let n = chart.weight();
    let conn_p: Vec<Mat> = chart.conn().iter().map(|a| a.reduce_to(&rp)).collect();
    // precondition: nabla(W) inside W
    for col in w.normal_form().columns() {
        for (l, a_mat) in conn_p.iter().enumerate() {
            let mut image = a_mat.mul_vec(&col)?;
            for (slot, x) in image.iter_mut().zip(&col) {
                *slot = slot.add(&x.partial_derivative(l)?);
            }
            if !w.contains_vector(&image)? {
                return Err(Error::NotHorizontal(
                    "nabla image of a generator escapes the submodule".into(),
                ));
            }
        }
    }
    let conj = conjugate_filtration(chart)?;
    let tilde = phi_tilde(chart)?;
    // graded pieces, pushed through the inverse of the divided Frobenius
    let mut target = SubmodulePresentation::zero(&rp, chart.rank());
    for q in 0..=n {
        let wq = w.intersect(&conj.steps[q as usize])?;
        if wq.is_zero_module() {
            continue;
        }
        let back = wq.apply(&tilde.inverse)?;
        // project onto the level-(n-q) coordinate slots
        let level = n - q;
        let projected_cols: Vec<Vec<RingElement>> = back
            .normal_form()
            .columns()
            .into_iter()
            .map(|col| {
                col.into_iter()
                    .enumerate()
                    .map(|(idx, x)| {
                        if chart.fil()[idx] == level {
                            x
                        } else {
                            RingElement::zero(&rp)
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|col: &Vec<RingElement>| col.iter().any(|x| !x.is_zero()))
            .collect();
        if projected_cols.is_empty() {
            continue;
        }
        let piece = SubmodulePresentation::new(&rp, chart.rank(), projected_cols)?;
        target = target.sum(&piece)?;
    }
    // descend under the canonical connection (zero matrices)
    let zero_conn: Vec<Mat> =
        (0..rp.dim()).map(|_| Mat::zero(&rp, chart.rank(), chart.rank())).collect();
    let flats = cartier_descend_flat(&zero_conn, &target, degree_bound).map_err(|e| match e {
        Error::DegreeBoundExceeded(msg) => Error::DegreeBoundExceeded(msg),
        other => Error::DescentFailure(other.to_string()),
    })?;
    // un-star: coordinates of flat sections lie in the image of Frobenius
    let p = rp.p();
    let mut descended_cols = Vec::new();
    for section in flats {
        let mut col = Vec::with_capacity(section.len());
        for x in section {
            col.push(unstar(&x, p)?);
        }
        descended_cols.push(col);
    }
    let descended = SubmodulePresentation::new(&rp, chart.rank(), descended_cols)?;
    let higgs = chart.gr_fil()?;
    if !descended.is_theta_stable(higgs.theta())? {
        return Err(Error::DescentFailure(
            "descended submodule is not stable under the Higgs field".into(),
        ));
    }
    Ok(descended)
}

/// Inverse of the mod-p Frobenius on an element of its image: divide all
/// exponents and denominator multiplicities by p.
fn unstar(x: &RingElement, p: u64) -> Result<RingElement> {
    let ring = x.ring().clone();
    let mut out = RingElement::zero(&ring);
    for (k, c) in x.terms() {
        if k.iter().any(|&e| e.rem_euclid(p as i64) != 0) {
            return Err(Error::DescentFailure(format!(
                "flat coordinate {} is not a Frobenius pullback",
                x.render()
            )));
        }
        let reduced: Vec<i64> = k.iter().map(|&e| e / p as i64).collect();
        out = out.add(&RingElement::monomial(&ring, reduced, *c)?);
    }
    if x.den().iter().any(|&b| b % p as u32 != 0) {
        return Err(Error::DescentFailure(format!(
            "flat coordinate {} has a denominator outside the Frobenius image",
            x.render()
        )));
    }
    for (i, &b) in x.den().iter().enumerate() {
        if b > 0 {
            let d = crate::chart::denominator_element(&ring, i);
            out = out.mul(&d.pow(-((b / p as u32) as i64))?)?;
        }
    }
    Ok(out)
}

/// Round trip for a subsystem of Hodge bundles: descending the associated
/// subsheaf recovers the submodule.
pub fn roundtrip_check(
    chart: &FilteredDeRhamChart,
    g: &SubmodulePresentation,
) -> Result<bool> {
    if !g.is_subsystem_of_hodge(chart.fil())? {
        return Err(Error::InvalidInput(
            "round trip applies to subsystems of Hodge bundles".into(),
        ));
    }
    let s = associate_subsheaf(chart, g, false)?;
    let back = cartier_katz_descent(chart, &s)?;
    back.equals(g)
}

// ---------------------------------------------------------------------------
// Inverse Cartier transform by exponential twisting
// ---------------------------------------------------------------------------

/// exp of a nilpotent mod-p matrix; the series must terminate before the
/// p-th power.
pub fn exp_nilpotent(m: &Mat) -> Result<Mat> {
    let ring = m.ring().clone();
    let p = ring.p();
    let mut acc = Mat::identity(&ring, m.rows());
    let mut power = Mat::identity(&ring, m.rows());
    let mut factorial = PadicScalar::one(p, 1);
    for k in 1..=p {
        power = power.mul(m)?;
        if power.is_zero() {
            return Ok(acc);
        }
        if k == p {
            return Err(Error::NilpotencyTooDeep(format!(
                "matrix is not nilpotent of exponent < {p}"
            )));
        }
        factorial = factorial.mul(&PadicScalar::new(p, 1, k));
        acc = acc.add(&power.scale_scalar(&factorial.inverse()?));
    }
    Ok(acc)
}

/// The locally twisted connection nabla_can + (dF/p) F^*(theta) of a Higgs
/// chart, as mod-p matrices, one per variable.
pub fn twist_connection(higgs: &HiggsChart, lifting: &FrobeniusLifting) -> Result<Vec<Mat>> {
    let rp = higgs.ring().clone();
    if lifting.ring().mod_p().as_ref() != rp.as_ref() {
        return Err(Error::RingMismatch(
            "lifting does not reduce to the Higgs chart's ring".into(),
        ));
    }
    lifting.check_valid().map_err(|e| Error::InvalidLifting(e.to_string()))?;
    // nilpotency within exponent p-1 (so the twisting exponentials exist)
    for th in higgs.theta() {
        let mut power = Mat::identity(&rp, higgs.rank());
        let mut ok = false;
        for _ in 0..rp.p() {
            power = power.mul(th)?;
            if power.is_zero() {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::NilpotencyTooDeep(
                "Higgs field is not nilpotent of exponent < p".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(rp.dim());
    for k in 0..rp.dim() {
        let mut b = Mat::zero(&rp, higgs.rank(), higgs.rank());
        for l in 0..rp.dim() {
            let f = lifting.divided_derivative_mod_p(l, k)?;
            let theta_pulled = higgs.theta()[l].map(|e| e.frobenius_mod_p())?;
            b = b.add(&theta_pulled.scale(&f)?);
        }
        out.push(b);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TwistedGlued {
    /// mod-p twisted connection matrices per chart, keyed by chart id
    pub connections: Vec<(String, Vec<Mat>)>,
    /// per overlap: twisted transition mod p on the overlap ring
    pub transitions: Vec<TwistedTransition>,
}

#[derive(Clone, Debug)]
pub struct TwistedTransition {
    pub label: String,
    pub overlap_index: usize,
    pub matrix: Mat,
    /// F^#(det of the original transition), for the determinant check
    pub det_pullback: RingElement,
    pub original_det_degree: Option<i64>,
}

/// Glue the locally twisted bundles: on each overlap the transition is the
/// Frobenius pullback of the original transition times the exponential of
/// the divided lifting difference paired with the pulled-back Higgs field.
pub fn inverse_cartier_exponential_twisting(
    glued: &GluedObject,
    liftings: &BTreeMap<String, FrobeniusLifting>,
) -> Result<TwistedGlued> {
    let mut connections = Vec::new();
    for chart in &glued.charts {
        let higgs = chart.data.as_higgs().ok_or_else(|| {
            Error::InvalidInput("exponential twisting expects Higgs charts".into())
        })?;
        let lifting = liftings
            .get(&chart.id)
            .ok_or_else(|| Error::MissingLifting(format!("chart {}", chart.id)))?;
        connections.push((chart.id.clone(), twist_connection(higgs, lifting)?));
    }
    let mut transitions = Vec::new();
    for (idx, ov) in glued.overlaps.iter().enumerate() {
        if ov.ring.precision() < 2 {
            return Err(Error::PrecisionTooLow(
                "twisting the transition needs overlap precision >= 2".into(),
            ));
        }
        let first = &glued.charts[ov.first];
        let second = &glued.charts[ov.second];
        let lift1 = liftings
            .get(&first.id)
            .ok_or_else(|| Error::MissingLifting(format!("chart {}", first.id)))?;
        let lift2 = liftings
            .get(&second.id)
            .ok_or_else(|| Error::MissingLifting(format!("chart {}", second.id)))?;
        let ind1 = ov.induce_lifting(lift1, false)?;
        let ind2 = ov.induce_lifting(lift2, true)?;
        let rp = ov.ring.mod_p();
        let lower = ov.ring.with_precision(ov.ring.precision() - 1);
        let theta1 = first
            .data
            .as_higgs()
            .expect("checked above")
            .theta()
            .iter()
            .map(|th| th.include_into(&rp))
            .collect::<Result<Vec<_>>>()?;
        let rank = first.data.rank();
        let mut pairing = Mat::zero(&rp, rank, rank);
        for l in 0..rp.dim() {
            let diff = ind1.images()[l].sub(&ind2.images()[l]);
            let h = diff
                .exact_div_pow(1, &lower)
                .map_err(|_| {
                    Error::InvalidLifting("induced liftings do not agree mod p".into())
                })?
                .reduce_to(&rp);
            let theta_pulled = theta1[l].map(|e| e.frobenius_mod_p())?;
            pairing = pairing.add(&theta_pulled.scale(&h)?);
        }
        let exp = exp_nilpotent(&pairing)?;
        let t0 = ov.transition.reduce_to(&rp);
        let t_pulled = t0.map(|e| e.frobenius_mod_p())?;
        let matrix = t_pulled.mul(&exp)?;
        let det_pullback = t0.det()?.frobenius_mod_p()?;
        transitions.push(TwistedTransition {
            label: format!("{}-{}", first.id, second.id),
            overlap_index: idx,
            matrix,
            det_pullback,
            original_det_degree: transition_degree(&t0.det()?).ok(),
        });
    }
    Ok(TwistedGlued { connections, transitions })
}

impl TwistedGlued {
    /// Integrability of each twisted local connection.
    pub fn integrability_holds(&self) -> Result<bool> {
        for (_, conn) in &self.connections {
            for k in 0..conn.len() {
                for l in k + 1..conn.len() {
                    let curv = conn[l]
                        .derivative(k)?
                        .sub(&conn[k].derivative(l)?)
                        .add(&conn[k].mul(&conn[l])?)
                        .sub(&conn[l].mul(&conn[k])?);
                    if !curv.is_zero() {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Transition compatibility of the glued twisted connection:
    /// dT + phi' phi#(B_second) T = T B_first on each overlap, mod p.
    pub fn transitions_compatible(&self, glued: &GluedObject) -> Result<bool> {
        for tw in &self.transitions {
            let ov = &glued.overlaps[tw.overlap_index];
            let rp = ov.ring.mod_p();
            let b_first: Vec<Mat> = self.connections[ov.first]
                .1
                .iter()
                .map(|b| b.include_into(&rp))
                .collect::<Result<Vec<_>>>()?;
            let b_second_pulled: Vec<Mat> = self.connections[ov.second]
                .1
                .iter()
                .map(|b| ov.pull_second(b))
                .collect::<Result<Vec<_>>>()?;
            let phi_prime = ov.change_derivative(&rp)?;
            for l in 0..rp.dim() {
                let lhs = tw
                    .matrix
                    .derivative(l)?
                    .add(&b_second_pulled[l].scale(&phi_prime)?.mul(&tw.matrix)?);
                let rhs = tw.matrix.mul(&b_first[l])?;
                if lhs != rhs {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// det(twisted transition) = F^#(det original): the exponential factor
    /// has determinant one.
    pub fn determinant_formula_holds(&self) -> Result<bool> {
        for tw in &self.transitions {
            if tw.matrix.det()? != tw.det_pullback {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// (degree of det of twisted transition, p * degree of det original)
    /// per overlap; the two agree when the degree formula holds.
    pub fn degree_pairs(&self, p: u64) -> Result<Vec<(String, i64, i64)>> {
        let mut out = Vec::new();
        for tw in &self.transitions {
            let twisted = transition_degree(&tw.matrix.det()?)?;
            let original = tw.original_det_degree.ok_or(Error::NotAUnit)?;
            out.push((tw.label.clone(), twisted, p as i64 * original));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::tests_support::kummer;
    use crate::random::{random_element, seeded_rng};

    fn e(r: &Arc<ChartRing>, s: &str) -> RingElement {
        RingElement::parse(r, s).unwrap()
    }

    #[test]
    fn kummer_p_curvature() {
        let c = kummer(5, 2);
        let rp = c.ring().mod_p();
        let conn: Vec<Mat> = c.conn().iter().map(|a| a.reduce_to(&rp)).collect();
        let psi = p_curvature(&rp, &conn).unwrap();
        let expected = Mat::from_rows(
            &rp,
            vec![vec![e(&rp, "0"), e(&rp, "4*t^-5")], vec![e(&rp, "0"), e(&rp, "0")]],
        );
        assert_eq!(psi.psi[0], expected);
        assert!(psi.nilpotency_holds(2).unwrap());

        let mut rng = seeded_rng(0);
        for _ in 0..5 {
            let f = random_element(&rp, &mut rng, 3, 3);
            let v = vec![random_element(&rp, &mut rng, 3, 2), random_element(&rp, &mut rng, 3, 2)];
            assert!(psi.linearity_holds(&conn, &f, &v).unwrap());
        }
    }

    #[test]
    fn rank_one_p_curvature() {
        // nabla = d + c dt with constant c: psi = c^p = c
        let rp = ChartRing::make(5, 1, &["t"], &[], &[]).unwrap();
        let conn = vec![Mat::from_rows(&rp, vec![vec![e(&rp, "3")]])];
        let psi = p_curvature(&rp, &conn).unwrap();
        assert_eq!(psi.psi[0], Mat::from_rows(&rp, vec![vec![e(&rp, "3")]]));

        // zero connection: psi = 0
        let conn0 = vec![Mat::zero(&rp, 1, 1)];
        let psi0 = p_curvature(&rp, &conn0).unwrap();
        assert!(psi0.psi[0].is_zero());
    }

    #[test]
    fn conjugate_filtration_kummer() {
        let c = kummer(5, 2);
        let conj = conjugate_filtration(&c).unwrap();
        let rp = c.ring().mod_p();
        assert_eq!(conj.steps.len(), 3);
        assert_eq!(conj.steps[0].rank(), 2);
        let e0 = SubmodulePresentation::new(
            &rp,
            2,
            vec![vec![RingElement::one(&rp), RingElement::zero(&rp)]],
        )
        .unwrap();
        assert!(conj.steps[1].equals(&e0).unwrap());
        assert_eq!(conj.steps[2].rank(), 0);
    }

    #[test]
    fn flat_descent_dlog() {
        // rank 1 on the torus, nabla = d + dt/t: flat sections generated by t^-1
        let rp = ChartRing::make(5, 1, &["t"], &["t"], &[]).unwrap();
        let conn = vec![Mat::from_rows(&rp, vec![vec![e(&rp, "t^-1")]])];
        let w = SubmodulePresentation::full(&rp, 1);
        let flats = cartier_descend_flat(&conn, &w, None).unwrap();
        assert_eq!(flats.len(), 1);
        assert_eq!(flats[0][0], e(&rp, "t^-1"));

        // a bound too small to reach the flat generator fails loudly
        assert!(matches!(
            cartier_descend_flat(&conn, &w, Some(0)),
            Err(Error::DegreeBoundExceeded(_))
        ));

        // nonzero constant connection on the affine line: nonzero p-curvature
        let rp2 = ChartRing::make(5, 1, &["t"], &[], &[]).unwrap();
        let conn2 = vec![Mat::from_rows(&rp2, vec![vec![e(&rp2, "3")]])];
        let w2 = SubmodulePresentation::full(&rp2, 1);
        assert!(matches!(
            cartier_descend_flat(&conn2, &w2, None),
            Err(Error::NotPCurvatureZero(_))
        ));
    }

    #[test]
    fn katz_descent_kummer() {
        let c = kummer(5, 2);
        let rp = c.ring().mod_p();
        let w = SubmodulePresentation::new(
            &rp,
            2,
            vec![vec![RingElement::one(&rp), RingElement::zero(&rp)]],
        )
        .unwrap();
        let descended = cartier_katz_descent(&c, &w).unwrap();
        assert!(descended.equals(&w).unwrap());

        let full = SubmodulePresentation::full(&rp, 2);
        let descended_full = cartier_katz_descent(&c, &full).unwrap();
        assert!(descended_full.equals(&full).unwrap());

        let w1 = SubmodulePresentation::new(
            &rp,
            2,
            vec![vec![RingElement::zero(&rp), RingElement::one(&rp)]],
        )
        .unwrap();
        assert!(matches!(cartier_katz_descent(&c, &w1), Err(Error::NotHorizontal(_))));
    }

    #[test]
    fn roundtrip_kummer() {
        let c = kummer(5, 2);
        let rp = c.ring().mod_p();
        let g0 = SubmodulePresentation::new(
            &rp,
            2,
            vec![vec![RingElement::one(&rp), RingElement::zero(&rp)]],
        )
        .unwrap();
        assert!(roundtrip_check(&c, &g0).unwrap());
        let full = SubmodulePresentation::full(&rp, 2);
        assert!(roundtrip_check(&c, &full).unwrap());
    }

    #[test]
    fn twist_recovers_kummer_connection() {
        let c = kummer(5, 2);
        let higgs = c.gr_fil().unwrap();
        let twisted = twist_connection(&higgs, c.lifting()).unwrap();
        let rp = c.ring().mod_p();
        let expected = c.conn()[0].reduce_to(&rp);
        assert_eq!(twisted[0], expected);
    }

    #[test]
    fn twist_zero_higgs_is_canonical() {
        let r = ChartRing::make(5, 2, &["t"], &["t"], &[]).unwrap();
        let rp = r.mod_p();
        let higgs = HiggsChart::new(&rp, vec![0, 0], vec![Mat::zero(&rp, 2, 2)]).unwrap();
        let lifting = FrobeniusLifting::standard(&r).unwrap();
        let twisted = twist_connection(&higgs, &lifting).unwrap();
        assert!(twisted[0].is_zero());
    }

    #[test]
    fn exp_nilpotent_example() {
        let rp = ChartRing::make(5, 1, &["t"], &["t"], &[]).unwrap();
        let n = Mat::from_rows(
            &rp,
            vec![vec![e(&rp, "0"), e(&rp, "-1*t")], vec![e(&rp, "0"), e(&rp, "0")]],
        );
        let exp = exp_nilpotent(&n).unwrap();
        let expected = Mat::from_rows(
            &rp,
            vec![vec![e(&rp, "1"), e(&rp, "-1*t")], vec![e(&rp, "0"), e(&rp, "1")]],
        );
        assert_eq!(exp, expected);
        // identity is not nilpotent
        assert!(matches!(
            exp_nilpotent(&Mat::identity(&rp, 2)),
            Err(Error::NilpotencyTooDeep(_))
        ));
    }
}
