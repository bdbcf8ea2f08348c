//! Charts glued along overlaps, with cocycle and compatibility checks and
//! two-chart projective-line degree computations.
//!
//! An overlap names an ordered pair of charts (first, second). Its ring is
//! a localization written in the first chart's coordinates; the second
//! chart maps in through `second_images` (the images of its variables).
//! The transition matrix T converts coordinates: for a section with
//! first-chart coordinate column v and second-chart column w, the pulled
//! relation on the overlap is phi#(w) = T * v. With the charts listed as
//! (t-chart, s-chart) on a projective line and a line-bundle transition
//! c * t^k, the degree is -k.

use std::sync::Arc;

use crate::chart::{FilteredDeRhamChart, FrobeniusLifting, HiggsChart};
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::report::CheckResult;
use crate::ring::{ChartRing, RingElement};
use crate::submodule::{transition_degree, Rational};

#[derive(Clone, Debug)]
pub enum ChartData {
    DeRham(FilteredDeRhamChart),
    Higgs(HiggsChart),
}

impl ChartData {
    pub fn rank(&self) -> usize {
        match self {
            ChartData::DeRham(c) => c.rank(),
            ChartData::Higgs(h) => h.rank(),
        }
    }

    pub fn levels(&self) -> Vec<u32> {
        match self {
            ChartData::DeRham(c) => c.fil().to_vec(),
            ChartData::Higgs(h) => h.levels().to_vec(),
        }
    }

    pub fn as_de_rham(&self) -> Option<&FilteredDeRhamChart> {
        match self {
            ChartData::DeRham(c) => Some(c),
            ChartData::Higgs(_) => None,
        }
    }

    pub fn as_higgs(&self) -> Option<&HiggsChart> {
        match self {
            ChartData::DeRham(_) => None,
            ChartData::Higgs(h) => Some(h),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NamedChart {
    pub id: String,
    /// Chart ring at the document precision m (Higgs data lives on its
    /// mod-p reduction).
    pub ring: Arc<ChartRing>,
    pub data: ChartData,
}

#[derive(Clone, Debug)]
pub struct Overlap {
    pub first: usize,
    pub second: usize,
    /// Overlap ring at document precision, in the first chart's variables.
    pub ring: Arc<ChartRing>,
    /// Images of the second chart's variables in the overlap ring.
    pub second_images: Vec<RingElement>,
    /// Transition at document precision: pulled-second = T * first.
    pub transition: Mat,
}

#[derive(Clone, Debug)]
pub struct GluedObject {
    pub charts: Vec<NamedChart>,
    pub overlaps: Vec<Overlap>,
    pub projective_line: bool,
}

impl Overlap {
    /// d(second_images[0]) / dt, the coordinate-change derivative.
    pub fn change_derivative(&self, target: &Arc<ChartRing>) -> Result<RingElement> {
        Ok(self.second_images[0].partial_derivative(0)?.reduce_to(target))
    }

    pub fn second_images_mod_p(&self) -> Vec<RingElement> {
        let rp = self.ring.mod_p();
        self.second_images.iter().map(|i| i.reduce_to(&rp)).collect()
    }

    /// Pull a matrix over the second chart's ring to the overlap ring at
    /// the matrix's own precision.
    pub fn pull_second(&self, m: &Mat) -> Result<Mat> {
        let target = self.ring.with_precision(m.ring().precision());
        let images: Vec<RingElement> = self
            .second_images
            .iter()
            .map(|i| i.reduce_to(&target))
            .collect();
        m.substitute(&target, &images)
    }

    pub fn pull_second_vec(&self, v: &[RingElement]) -> Result<Vec<RingElement>> {
        if v.is_empty() {
            return Ok(vec![]);
        }
        let target = self.ring.with_precision(v[0].ring().precision());
        let images: Vec<RingElement> = self
            .second_images
            .iter()
            .map(|i| i.reduce_to(&target))
            .collect();
        v.iter().map(|e| e.substitute(&target, &images)).collect()
    }

    /// The Frobenius lifting induced on the overlap by a chart lifting.
    /// For the first chart this is plain inclusion; for the second chart
    /// the coordinate change must be the identity or t -> t^-1.
    pub fn induce_lifting(
        &self,
        lifting: &FrobeniusLifting,
        second_side: bool,
    ) -> Result<FrobeniusLifting> {
        if !second_side {
            return lifting.include_into(&self.ring);
        }
        if self.ring.dim() == 1 {
            let pulled = lifting.images()[0].substitute(&self.ring, &self.second_images)?;
            let t = RingElement::var(&self.ring, 0);
            let t_inv = t.pow(-1).ok();
            if self.second_images[0] == t {
                return FrobeniusLifting::new(&self.ring, vec![pulled]);
            }
            if Some(self.second_images[0].clone()) == t_inv {
                return FrobeniusLifting::new(&self.ring, vec![pulled.invert()?]);
            }
            return Err(Error::InvalidInput(
                "supported coordinate changes are the identity and t -> t^-1".into(),
            ));
        }
        // two variables: identity coordinate change only
        let ids: Vec<RingElement> =
            (0..self.ring.dim()).map(|l| RingElement::var(&self.ring, l)).collect();
        if self.second_images != ids {
            return Err(Error::InvalidInput(
                "two-variable overlaps support the identity coordinate change only".into(),
            ));
        }
        let images = lifting
            .images()
            .iter()
            .map(|i| i.substitute(&self.ring, &self.second_images))
            .collect::<Result<Vec<_>>>()?;
        FrobeniusLifting::new(&self.ring, images)
    }
}

impl GluedObject {
    pub fn chart_index(&self, id: &str) -> Option<usize> {
        self.charts.iter().position(|c| c.id == id)
    }

    pub fn single_de_rham(&self) -> Option<&FilteredDeRhamChart> {
        if self.charts.len() == 1 {
            self.charts[0].data.as_de_rham()
        } else {
            None
        }
    }

    /// Validation: each chart's own axioms plus, per overlap, that the
    /// transition intertwines all structure.
    pub fn validate(&self) -> Vec<CheckResult> {
        let mut out = Vec::new();
        for chart in &self.charts {
            let prefix = &chart.id;
            let inner = match &chart.data {
                ChartData::DeRham(c) => c.validate(),
                ChartData::Higgs(h) => h.validate(),
            };
            for check in inner {
                out.push(CheckResult {
                    check: format!("{prefix}/{}", check.check),
                    status: check.status,
                    witness: check.witness,
                });
            }
        }
        for ov in &self.overlaps {
            let name = format!(
                "overlap {}-{}",
                self.charts[ov.first].id, self.charts[ov.second].id
            );
            match self.validate_overlap(ov) {
                Ok(checks) => {
                    for (check, outcome) in checks {
                        out.push(CheckResult::from_outcome(format!("{name}/{check}"), outcome));
                    }
                }
                Err(e) => out.push(CheckResult::error(name, e.to_string())),
            }
        }
        out
    }

    #[allow(clippy::type_complexity)]
    fn validate_overlap(
        &self,
        ov: &Overlap,
    ) -> Result<Vec<(String, std::result::Result<(), String>)>> {
        let mut checks = Vec::new();
        let first = &self.charts[ov.first];
        let second = &self.charts[ov.second];
        let rp = ov.ring.mod_p();

        // invertibility of the transition
        let t_mod_p = ov.transition.reduce_to(&rp);
        let invertible = match t_mod_p.det().and_then(|d| d.unit_check()) {
            Ok(_) => Ok(()),
            Err(_) => Err("transition determinant is not a unit".to_string()),
        };
        checks.push(("transition-invertible".to_string(), invertible));

        // grading / filtration compatibility
        let lv1 = first.data.levels();
        let lv2 = second.data.levels();
        let strict = matches!(
            (&first.data, &second.data),
            (ChartData::Higgs(_), ChartData::Higgs(_))
        );
        let mut grading = Ok(());
        'g: for a in 0..ov.transition.rows() {
            for b in 0..ov.transition.cols() {
                if ov.transition.at(a, b).is_zero() {
                    continue;
                }
                let bad = if strict { lv2[a] != lv1[b] } else { lv2[a] < lv1[b] };
                if bad {
                    grading = Err(format!(
                        "transition entry ({a},{b}) mixes levels {} and {}",
                        lv2[a], lv1[b]
                    ));
                    break 'g;
                }
            }
        }
        if grading.is_ok() {
            if let Ok(inv) = t_mod_p.inverse() {
                'g2: for a in 0..inv.rows() {
                    for b in 0..inv.cols() {
                        if inv.at(a, b).is_zero() {
                            continue;
                        }
                        let bad = if strict { lv1[a] != lv2[b] } else { lv1[a] < lv2[b] };
                        if bad {
                            grading = Err(format!(
                                "inverse transition entry ({a},{b}) mixes levels {} and {}",
                                lv1[a], lv2[b]
                            ));
                            break 'g2;
                        }
                    }
                }
            }
        }
        checks.push(("transition-respects-levels".to_string(), grading));

        match (&first.data, &second.data) {
            (ChartData::Higgs(h1), ChartData::Higgs(h2)) => {
                // phi' phi#(theta_2) T = T theta_1 per variable, mod p
                let t0 = ov.transition.reduce_to(&rp);
                let mut compat = Ok(());
                for l in 0..rp.dim() {
                    let th1 = h1.theta()[l].include_into(&rp)?;
                    let th2_pulled = ov.pull_second(&h2.theta()[l])?;
                    let phi_prime = ov.change_derivative(&rp)?;
                    let lhs = th2_pulled.scale(&phi_prime)?.mul(&t0)?;
                    let rhs = t0.mul(&th1)?;
                    if let Some((r, c, a, b)) = lhs.first_difference(&rhs) {
                        compat = Err(format!(
                            "Higgs fields disagree in direction {l} at ({r},{c}): {a} vs {b}"
                        ));
                        break;
                    }
                }
                checks.push(("higgs-compat".to_string(), compat));
            }
            (ChartData::DeRham(c1), ChartData::DeRham(c2)) => {
                // connection: dT + phi' phi#(A_2) T = T A_1 at full precision
                let t_full = &ov.transition;
                let mut compat = Ok(());
                for l in 0..ov.ring.dim() {
                    let a1 = c1.conn()[l].include_into(&ov.ring)?;
                    let a2_pulled = ov.pull_second(&c2.conn()[l])?;
                    let phi_prime = ov.change_derivative(&ov.ring)?;
                    let lhs = t_full
                        .derivative(l)?
                        .add(&a2_pulled.scale(&phi_prime)?.mul(t_full)?);
                    let rhs = t_full.mul(&a1)?;
                    if let Some((r, c, x, y)) = lhs.first_difference(&rhs) {
                        compat = Err(format!(
                            "connections disagree in direction {l} at ({r},{c}): {x} vs {y}"
                        ));
                        break;
                    }
                }
                checks.push(("connection-compat".to_string(), compat));

                // Frobenius: transport the pulled second chart to the first
                // chart's induced lifting, then require
                // Phi_2->1 * F#(T) = T * Phi_1.
                let frob = self.check_frobenius_compat(ov, c1, c2);
                checks.push((
                    "frobenius-compat".to_string(),
                    frob.unwrap_or_else(|e| Err(e.to_string())),
                ));
            }
            _ => {
                checks.push((
                    "kind-match".to_string(),
                    Err("overlap mixes a de Rham chart with a Higgs chart".to_string()),
                ));
            }
        }
        Ok(checks)
    }

    fn check_frobenius_compat(
        &self,
        ov: &Overlap,
        c1: &FilteredDeRhamChart,
        c2: &FilteredDeRhamChart,
    ) -> Result<std::result::Result<(), String>> {
        let lift1 = ov.induce_lifting(c1.lifting(), false)?;
        let lift2 = ov.induce_lifting(c2.lifting(), true)?;
        let phi_prime = ov.change_derivative(&ov.ring)?;
        let conn2_pulled = c2
            .conn()
            .iter()
            .map(|a| ov.pull_second(a)?.scale(&phi_prime))
            .collect::<Result<Vec<_>>>()?;
        let pulled_second = FilteredDeRhamChart::new(
            &ov.ring,
            c2.weight(),
            c2.fil().to_vec(),
            conn2_pulled,
            lift2,
            ov.pull_second(c2.phi())?,
        )?;
        let transported = pulled_second.transport_frobenius(&lift1)?;
        let phi1 = c1.phi().include_into(&ov.ring)?;
        let lhs = transported.phi().mul(&lift1.pullback_mat(&ov.transition)?)?;
        let rhs = ov.transition.mul(&phi1)?;
        if let Some((r, c, a, b)) = lhs.first_difference(&rhs) {
            return Ok(Err(format!(
                "Frobenius matrices disagree at ({r},{c}): {a} vs {b}"
            )));
        }
        Ok(Ok(()))
    }

    fn two_chart_overlap(&self) -> Result<&Overlap> {
        if !self.projective_line {
            return Err(Error::InvalidInput(
                "degree computations need the projective-line cover tag".into(),
            ));
        }
        if self.charts.len() != 2 || self.overlaps.len() != 1 {
            return Err(Error::InvalidInput(
                "degree computations need exactly two charts and one overlap".into(),
            ));
        }
        Ok(&self.overlaps[0])
    }

    /// Degree of a rank-1 transition on a two-chart projective line.
    pub fn degree(&self) -> Result<i64> {
        let ov = self.two_chart_overlap()?;
        if ov.transition.rows() != 1 {
            return Err(Error::InvalidInput("degree of a line datum needs rank 1".into()));
        }
        transition_degree(ov.transition.at(0, 0))
    }

    /// Degree of the determinant of the transition.
    pub fn det_degree(&self) -> Result<i64> {
        let ov = self.two_chart_overlap()?;
        transition_degree(&ov.transition.det()?)
    }

    pub fn slope(&self) -> Result<Rational> {
        let ov = self.two_chart_overlap()?;
        let rank = ov.transition.rows() as i64;
        Ok(Rational::new(self.det_degree()?, rank))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::ChartRing;

    fn el(r: &Arc<ChartRing>, s: &str) -> RingElement {
        RingElement::parse(r, s).unwrap()
    }

    /// Rank-1 zero-Higgs line datum on the projective line with transition
    /// t^k on the overlap.
    fn line_bundle(k: i64) -> GluedObject {
        let ru = ChartRing::make(5, 2, &["t"], &[], &[]).unwrap();
        let rv = ChartRing::make(5, 2, &["s"], &[], &[]).unwrap();
        let overlap = ChartRing::make(5, 2, &["t"], &["t"], &[]).unwrap();
        let hu = HiggsChart::new(&ru.mod_p(), vec![0], vec![Mat::zero(&ru.mod_p(), 1, 1)]).unwrap();
        let hv = HiggsChart::new(&rv.mod_p(), vec![0], vec![Mat::zero(&rv.mod_p(), 1, 1)]).unwrap();
        let transition = Mat::from_rows(
            &overlap,
            vec![vec![RingElement::var(&overlap, 0).pow(k).unwrap()]],
        );
        GluedObject {
            charts: vec![
                NamedChart { id: "U".into(), ring: ru, data: ChartData::Higgs(hu) },
                NamedChart { id: "V".into(), ring: rv, data: ChartData::Higgs(hv) },
            ],
            overlaps: vec![Overlap {
                first: 0,
                second: 1,
                ring: overlap.clone(),
                second_images: vec![el(&overlap, "t^-1")],
                transition,
            }],
            projective_line: true,
        }
    }

    #[test]
    fn degree_anchor() {
        assert_eq!(line_bundle(-1).degree().unwrap(), 1);
        assert_eq!(line_bundle(-5).degree().unwrap(), 5);
        assert_eq!(line_bundle(2).degree().unwrap(), -2);
        assert_eq!(line_bundle(-1).slope().unwrap(), Rational::new(1, 1));
    }

    #[test]
    fn line_bundle_validates() {
        let g = line_bundle(-1);
        for c in g.validate() {
            assert!(c.passed(), "{}: {:?}", c.check, c.witness);
        }
    }

    #[test]
    fn induced_lifting_inverts_coordinate() {
        let g = line_bundle(-1);
        let ov = &g.overlaps[0];
        let rv = &g.charts[1].ring;
        let lift_v = FrobeniusLifting::standard(rv).unwrap();
        let induced = ov.induce_lifting(&lift_v, true).unwrap();
        // s = t^-1, F_V(s) = s^5 induces F(t) = t^5
        assert_eq!(induced.images()[0], el(&ov.ring, "t^5"));

        let lift_v2 = FrobeniusLifting::new(rv, vec![el(rv, "s^5 + 5*s^6")]).unwrap();
        let induced2 = ov.induce_lifting(&lift_v2, true).unwrap();
        // (t^-5 + 5 t^-6)^{-1} = t^5 - 5 t^4 mod 25
        assert_eq!(induced2.images()[0], el(&ov.ring, "t^5 - 5*t^4"));
    }
}
