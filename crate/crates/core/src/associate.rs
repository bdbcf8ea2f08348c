//! The de Rham subsheaf associated to a theta-stable Higgs subsheaf:
//! divided Frobenius operators, the mod-p isomorphism assembled from
//! them, change-of-lifting residual identities, horizontality
//! certificates, and gluing across charts.

use std::sync::Arc;

use crate::chart::{FilteredDeRhamChart, FrobeniusLifting, HiggsChart};
use crate::error::{Error, Result};
use crate::glued::GluedObject;
use crate::matrix::Mat;
use crate::ring::{ChartRing, RingElement};
use crate::scalar::{factorial_inverse, MultiIndex};
use crate::submodule::SubmodulePresentation;

/// The mod-p isomorphism F^*E_0 -> H_0 assembled from the divided
/// Frobenius operators, with a certified inverse.
#[derive(Clone, Debug)]
pub struct PhiTilde {
    pub mat: Mat,
    pub inverse: Mat,
}

/// Column a of Phi divided by p^i on the level-i columns, mod p; other
/// columns are zero.
pub fn phi_div(chart: &FilteredDeRhamChart, level: u32) -> Result<Mat> {
    let m = chart.ring().precision();
    if m < chart.weight() + 1 {
        return Err(Error::PrecisionTooLow(format!(
            "divided Frobenius needs precision >= {}",
            chart.weight() + 1
        )));
    }
    let full = chart.phi_tilde_matrix()?;
    let rp = chart.ring().mod_p();
    Ok(Mat::from_fn(&rp, chart.rank(), chart.rank(), |r, c| {
        if chart.fil()[c] == level {
            full.at(r, c).clone()
        } else {
            RingElement::zero(&rp)
        }
    }))
}

pub fn phi_tilde(chart: &FilteredDeRhamChart) -> Result<PhiTilde> {
    let mat = chart
        .phi_tilde_matrix()
        .map_err(|e| Error::StrongDivisibilityFailure(e.to_string()))?;
    let det = mat.det()?;
    det.unit_check().map_err(|_| {
        Error::StrongDivisibilityFailure(format!(
            "determinant {} of the divided Frobenius is not a unit",
            det.render()
        ))
    })?;
    let inverse = mat.inverse()?;
    Ok(PhiTilde { mat, inverse })
}

/// Apply the mod-p Frobenius pullback to coordinates: t -> t^p.
fn frobenius_coords(v: &[RingElement]) -> Result<Vec<RingElement>> {
    v.iter().map(|e| e.frobenius_mod_p()).collect()
}

/// Phi-tilde applied to a section of E_0: coefficients pass through the
/// mod-p Frobenius before the matrix acts.
pub fn phi_tilde_apply(tilde: &Mat, e: &[RingElement]) -> Result<Vec<RingElement>> {
    tilde.mul_vec(&frobenius_coords(e)?)
}

#[derive(Clone, Debug)]
pub struct HorizontalityWitness {
    pub generator: usize,
    pub var: usize,
    /// nabla-image of the generator's section, in ambient coordinates.
    pub image: Vec<String>,
    /// its expansion in the normal-form generators of S
    pub coefficients: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct IndependenceWitness {
    pub other_lifting: Vec<String>,
    pub equal: bool,
    pub first_normal_form: Vec<Vec<String>>,
    pub second_normal_form: Vec<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct AssociationCertificate {
    pub subsheaf: SubmodulePresentation,
    pub lifting: Vec<String>,
    pub horizontality: Vec<HorizontalityWitness>,
    pub independence: Option<IndependenceWitness>,
}

/// The associated de Rham subsheaf S(G) = span of the divided-Frobenius
/// images of the Frobenius pullback of G's generators.
pub fn associate_subsheaf(
    chart: &FilteredDeRhamChart,
    g: &SubmodulePresentation,
    saturate: bool,
) -> Result<SubmodulePresentation> {
    let higgs = chart.gr_fil()?;
    check_ambient(chart, g)?;
    if !g.is_theta_stable(higgs.theta())? {
        return Err(Error::ThetaUnstable(
            "the submodule is not stable under the Higgs field".into(),
        ));
    }
    let tilde = phi_tilde(chart)?;
    let pulled = g.frobenius_pullback()?;
    let s = pulled.apply(&tilde.mat)?;
    if saturate {
        s.saturate()
    } else {
        Ok(s)
    }
}

fn check_ambient(chart: &FilteredDeRhamChart, g: &SubmodulePresentation) -> Result<()> {
    let rp = chart.ring().mod_p();
    if g.ring().as_ref() != rp.as_ref() || g.ambient_rank() != chart.rank() {
        return Err(Error::AmbientMismatch(
            "submodule does not live in the chart's mod-p fiber".into(),
        ));
    }
    Ok(())
}

/// Full certificate: S(G), horizontality witnesses for every generator and
/// variable, and (optionally) the lifting-independence comparison.
pub fn associate_with_certificate(
    chart: &FilteredDeRhamChart,
    g: &SubmodulePresentation,
    saturate: bool,
    compare_lifting: Option<&FrobeniusLifting>,
) -> Result<AssociationCertificate> {
    let s = associate_subsheaf(chart, g, saturate)?;
    let horizontality = horizontality_certificate(chart, &s, g)?;
    let independence = match compare_lifting {
        None => None,
        Some(f2) => {
            let moved = chart.transport_frobenius(f2)?;
            let s2 = associate_subsheaf(&moved, g, saturate)?;
            Some(IndependenceWitness {
                other_lifting: f2.render(),
                equal: s.equals(&s2)?,
                first_normal_form: s.render_generators(),
                second_normal_form: s2.render_generators(),
            })
        }
    };
    Ok(AssociationCertificate {
        subsheaf: s,
        lifting: chart.lifting().render(),
        horizontality,
        independence,
    })
}

/// w_l = (F(t_l) - F'(t_l)) / p, mod p: the divided difference of two
/// liftings, in the orientation of the change-of-lifting formulas.
fn divided_difference_mod_p(
    chart: &FilteredDeRhamChart,
    f2: &FrobeniusLifting,
) -> Result<Vec<RingElement>> {
    let ring = chart.ring();
    let lower = ring.with_precision(ring.precision() - 1);
    let rp = ring.mod_p();
    (0..ring.dim())
        .map(|l| {
            let z = chart.lifting().images()[l].sub(&f2.images()[l]);
            Ok(z
                .exact_div_pow(1, &lower)
                .map_err(|_| Error::InvalidLifting("lifting difference not divisible by p".into()))?
                .reduce_to(&rp))
        })
        .collect()
}

/// The change-of-lifting correction: the sum over multi-indices
/// 1 <= |j| <= n of the other lifting's divided Frobenius applied to
/// theta^j(e), weighted by the divided power of the lifting difference.
/// Equals phi_tilde_F(e) - phi_tilde_F'(e).
pub fn change_of_frobenius_residual(
    chart: &FilteredDeRhamChart,
    e: &[RingElement],
    f2: &FrobeniusLifting,
) -> Result<Vec<RingElement>> {
    let ring = chart.ring();
    let n = chart.weight();
    if ring.precision() < n + 1 {
        return Err(Error::PrecisionTooLow(format!(
            "residual needs precision >= {}",
            n + 1
        )));
    }
    let rp = ring.mod_p();
    if n == 0 {
        return Ok(vec![RingElement::zero(&rp); chart.rank()]);
    }
    let higgs = chart.gr_fil()?;
    let moved = chart.transport_frobenius(f2)?;
    let tilde2 = phi_tilde(&moved)?;
    let w = divided_difference_mod_p(chart, f2)?;
    let mut acc = vec![RingElement::zero(&rp); chart.rank()];
    for j in MultiIndex::all_up_to(ring.dim(), n) {
        if j.is_zero() {
            continue;
        }
        let theta_j = higgs.theta_iterate(&j, e)?;
        let image = phi_tilde_apply(&tilde2.mat, &theta_j)?;
        let mut coeff = RingElement::constant(&rp, factorial_inverse(&j, ring.p())?);
        for (l, &count) in j.entries().iter().enumerate() {
            coeff = coeff.mul(&w[l].pow(count as i64)?)?;
        }
        for (slot, x) in acc.iter_mut().zip(image) {
            *slot = slot.add(&x.mul(&coeff)?);
        }
    }
    Ok(acc)
}

/// Check phi_tilde_F(e) - phi_tilde_F'(e) = residual, exactly.
pub fn residual_identity_holds(
    chart: &FilteredDeRhamChart,
    e: &[RingElement],
    f2: &FrobeniusLifting,
) -> Result<bool> {
    ResidualChecker::new(chart, f2)?.holds(e)
}

/// Precomputed data for checking the change-of-lifting identity on many
/// sections: the transport to the second lifting happens once.
pub struct ResidualChecker {
    chart: FilteredDeRhamChart,
    higgs: HiggsChart,
    tilde1: PhiTilde,
    tilde2: PhiTilde,
    w: Vec<RingElement>,
}

impl ResidualChecker {
    pub fn new(chart: &FilteredDeRhamChart, f2: &FrobeniusLifting) -> Result<Self> {
        let higgs = chart.gr_fil()?;
        let tilde1 = phi_tilde(chart)?;
        let moved = chart.transport_frobenius(f2)?;
        let tilde2 = phi_tilde(&moved)?;
        let w = divided_difference_mod_p(chart, f2)?;
        Ok(ResidualChecker { chart: chart.clone(), higgs, tilde1, tilde2, w })
    }

    /// The correction sum for a section of the graded fiber.
    pub fn residual(&self, e: &[RingElement]) -> Result<Vec<RingElement>> {
        let ring = self.chart.ring();
        let rp = ring.mod_p();
        let n = self.chart.weight();
        let mut acc = vec![RingElement::zero(&rp); self.chart.rank()];
        for j in MultiIndex::all_up_to(ring.dim(), n) {
            if j.is_zero() {
                continue;
            }
            let theta_j = self.higgs.theta_iterate(&j, e)?;
            let image = phi_tilde_apply(&self.tilde2.mat, &theta_j)?;
            let mut coeff = RingElement::constant(&rp, factorial_inverse(&j, ring.p())?);
            for (l, &count) in j.entries().iter().enumerate() {
                coeff = coeff.mul(&self.w[l].pow(count as i64)?)?;
            }
            for (slot, x) in acc.iter_mut().zip(image) {
                *slot = slot.add(&x.mul(&coeff)?);
            }
        }
        Ok(acc)
    }

    pub fn holds(&self, e: &[RingElement]) -> Result<bool> {
        let lhs: Vec<RingElement> = phi_tilde_apply(&self.tilde1.mat, e)?
            .into_iter()
            .zip(phi_tilde_apply(&self.tilde2.mat, e)?)
            .map(|(a, b)| a.sub(&b))
            .collect();
        Ok(lhs == self.residual(e)?)
    }
}

/// The per-level identity: for a section supported in level i, the divided
/// Frobenius difference at level i equals the correction truncated at
/// |j| <= i, each summand taken at level i - |j|.
pub fn level_residual_holds(
    chart: &FilteredDeRhamChart,
    level: u32,
    e: &[RingElement],
    f2: &FrobeniusLifting,
) -> Result<bool> {
    let rp = chart.ring().mod_p();
    for (idx, coord) in e.iter().enumerate() {
        if !coord.is_zero() && chart.fil()[idx] != level {
            return Err(Error::InvalidInput(format!(
                "section has a coordinate at level {} but level {level} was requested",
                chart.fil()[idx]
            )));
        }
    }
    let higgs = chart.gr_fil()?;
    let moved = chart.transport_frobenius(f2)?;
    let lhs: Vec<RingElement> = phi_div(chart, level)?
        .mul_vec(&frobenius_coords(e)?)?
        .into_iter()
        .zip(phi_div(&moved, level)?.mul_vec(&frobenius_coords(e)?)?)
        .map(|(a, b)| a.sub(&b))
        .collect();
    let w = divided_difference_mod_p(chart, f2)?;
    let mut rhs = vec![RingElement::zero(&rp); chart.rank()];
    for j in MultiIndex::all_up_to(chart.ring().dim(), level) {
        if j.is_zero() {
            continue;
        }
        let theta_j = higgs.theta_iterate(&j, e)?;
        let op = phi_div(&moved, level - j.total())?;
        let image = op.mul_vec(&frobenius_coords(&theta_j)?)?;
        let mut coeff = RingElement::constant(&rp, factorial_inverse(&j, chart.ring().p())?);
        for (l, &count) in j.entries().iter().enumerate() {
            coeff = coeff.mul(&w[l].pow(count as i64)?)?;
        }
        for (slot, x) in rhs.iter_mut().zip(image) {
            *slot = slot.add(&x.mul(&coeff)?);
        }
    }
    Ok(lhs == rhs)
}

/// A level-(i+1) lift added to the input of the level-i divided Frobenius
/// changes nothing mod p: its Phi column is divisible by p^{i+1} and so
/// dies after division by p^i and reduction. p-multiples of level-i lifts
/// die for the same reason.
pub fn phi_div_well_defined(chart: &FilteredDeRhamChart, level: u32) -> Result<bool> {
    let ring = chart.ring();
    let rp = ring.mod_p();
    for b in 0..chart.rank() {
        if chart.fil()[b] != level + 1 {
            continue;
        }
        let lower = ring.with_precision(ring.precision() - level);
        for r in 0..chart.rank() {
            let divided = chart.phi().at(r, b).exact_div_pow(level, &lower)?;
            if !divided.reduce_to(&rp).is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Horizontality: nabla_k of each associated generator equals the divided
/// Frobenius of theta(g) weighted by the divided lifting derivative, and
/// lies in S. Returns the membership witnesses.
pub fn horizontality_certificate(
    chart: &FilteredDeRhamChart,
    s: &SubmodulePresentation,
    g: &SubmodulePresentation,
) -> Result<Vec<HorizontalityWitness>> {
    let higgs = chart.gr_fil()?;
    let tilde = phi_tilde(chart)?;
    let rp = chart.ring().mod_p();
    let conn_p: Vec<Mat> = chart.conn().iter().map(|a| a.reduce_to(&rp)).collect();
    let mut witnesses = Vec::new();
    for (gi, gen) in g.normal_form().columns().iter().enumerate() {
        let section = phi_tilde_apply(&tilde.mat, gen)?;
        for k in 0..rp.dim() {
            // nabla_k (Phi~ (F* g))
            let mut lhs: Vec<RingElement> = Vec::with_capacity(section.len());
            let a_v = conn_p[k].mul_vec(&section)?;
            for (x, av) in section.iter().zip(a_v) {
                lhs.push(x.partial_derivative(k)?.add(&av));
            }
            // sum_l Phi~ (F*(theta_l g)) * f_{l,k}
            let mut rhs = vec![RingElement::zero(&rp); section.len()];
            for l in 0..rp.dim() {
                let theta_g = higgs.theta_apply(l, gen)?;
                let image = phi_tilde_apply(&tilde.mat, &theta_g)?;
                let f = chart.lifting().divided_derivative_mod_p(l, k)?;
                for (slot, x) in rhs.iter_mut().zip(image) {
                    *slot = slot.add(&x.mul(&f)?);
                }
            }
            if lhs != rhs {
                let diff: Vec<String> = lhs
                    .iter()
                    .zip(&rhs)
                    .map(|(a, b)| format!("{} vs {}", a.render(), b.render()))
                    .collect();
                return Err(Error::HorizontalityViolation(format!(
                    "generator {gi}, direction {k}: {}",
                    diff.join("; ")
                )));
            }
            match s.membership(&lhs)? {
                Some(coeffs) => witnesses.push(HorizontalityWitness {
                    generator: gi,
                    var: k,
                    image: lhs.iter().map(|e| e.render()).collect(),
                    coefficients: coeffs.iter().map(|e| e.render()).collect(),
                }),
                None => {
                    return Err(Error::HorizontalityViolation(format!(
                        "generator {gi}, direction {k}: nabla image escapes the subsheaf"
                    )))
                }
            }
        }
    }
    Ok(witnesses)
}

/// nabla(S) subset S tensor Omega, checked generator by generator.
pub fn nabla_stable(chart: &FilteredDeRhamChart, s: &SubmodulePresentation) -> Result<bool> {
    let rp = chart.ring().mod_p();
    let conn_p: Vec<Mat> = chart.conn().iter().map(|a| a.reduce_to(&rp)).collect();
    for col in s.normal_form().columns() {
        for k in 0..rp.dim() {
            let mut image = conn_p[k].mul_vec(&col)?;
            for (slot, x) in image.iter_mut().zip(&col) {
                *slot = slot.add(&x.partial_derivative(k)?);
            }
            if !s.contains_vector(&image)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Debug)]
pub struct GluingReport {
    pub per_chart: Vec<(String, SubmodulePresentation)>,
    pub matched_overlaps: Vec<String>,
}

/// Compute S(G) on every chart of a glued de Rham object and check that
/// the results agree across each overlap under the transition.
pub fn glue_associated(
    glued: &GluedObject,
    submodules: &[SubmodulePresentation],
    saturate: bool,
) -> Result<GluingReport> {
    if submodules.len() != glued.charts.len() {
        return Err(Error::InvalidInput("one submodule per chart required".into()));
    }
    let mut results = Vec::new();
    for (chart, g) in glued.charts.iter().zip(submodules) {
        let de_rham = chart.data.as_de_rham().ok_or_else(|| {
            Error::InvalidInput("gluing the associated subsheaf needs de Rham charts".into())
        })?;
        let s = associate_subsheaf(de_rham, g, saturate)?;
        results.push((chart.id.clone(), s));
    }
    let mut matched = Vec::new();
    for ov in &glued.overlaps {
        let label = format!("{}-{}", glued.charts[ov.first].id, glued.charts[ov.second].id);
        let rp = ov.ring.mod_p();
        let s_first = results[ov.first].1.include_into(&rp)?;
        let expected = s_first.apply(&ov.transition.reduce_to(&rp))?;
        let second_cols = results[ov.second]
            .1
            .normal_form()
            .columns()
            .into_iter()
            .map(|col| ov.pull_second_vec(&col))
            .collect::<Result<Vec<_>>>()?;
        let computed = SubmodulePresentation::new(&rp, expected.ambient_rank(), second_cols)?;
        if !expected.equals(&computed)? {
            return Err(Error::GluingMismatch(format!(
                "overlap {label}: transition image {:?} differs from the second chart's subsheaf {:?}",
                expected.render_generators(),
                computed.render_generators()
            )));
        }
        matched.push(label);
    }
    Ok(GluingReport { per_chart: results, matched_overlaps: matched })
}

/// Build a submodule over a chart's mod-p fiber from parsed generators.
pub fn submodule_on_chart(
    ring: &Arc<ChartRing>,
    rank: usize,
    generators: &[Vec<String>],
) -> Result<SubmodulePresentation> {
    let rp = ring.mod_p();
    let cols = generators
        .iter()
        .map(|col| col.iter().map(|s| RingElement::parse(&rp, s)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    SubmodulePresentation::new(&rp, rank, cols)
}

/// Convenience: the Higgs chart of a de Rham chart, for theta checks.
pub fn higgs_of(chart: &FilteredDeRhamChart) -> Result<HiggsChart> {
    chart.gr_fil()
}
