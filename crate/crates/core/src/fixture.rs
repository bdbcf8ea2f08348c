//! The on-disk `mfv1` fixture format.
//!
//! A fixture is a JSON document carrying global (p, m, n), a list of
//! charts (de Rham or Higgs), overlaps with coordinate changes and
//! transition matrices, named submodules, and named liftings. Polynomial
//! entries use the element grammar of docs/grammar.md.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chart::{FilteredDeRhamChart, FrobeniusLifting, HiggsChart};
use crate::error::{Error, Result};
use crate::glued::{ChartData, GluedObject, NamedChart, Overlap};
use crate::matrix::Mat;
use crate::report::CheckResult;
use crate::ring::{ChartRing, RingElement};
use crate::submodule::SubmodulePresentation;

pub const FORMAT_VERSION: &str = "mfv1";

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct FixtureDoc {
    pub format: String,
    pub p: u64,
    pub m: u32,
    pub n: u32,
    pub charts: Vec<ChartDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overlaps: Vec<OverlapDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub submodules: BTreeMap<String, SubmoduleDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub liftings: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<String>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ChartDoc {
    pub id: String,
    pub vars: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inverted: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub denominators: Vec<String>,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fil: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "A")]
    pub a: Option<MatListDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "F")]
    pub f: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "Phi")]
    pub phi: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<MatListDoc>,
}

/// A matrix field that is either a single r x r matrix (one-variable
/// charts) or one matrix per variable.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(untagged)]
pub enum MatListDoc {
    Single(Vec<Vec<String>>),
    PerVar(Vec<Vec<Vec<String>>>),
}

impl MatListDoc {
    fn per_var(&self, dim: usize) -> Result<Vec<&Vec<Vec<String>>>> {
        match self {
            MatListDoc::Single(m) => {
                if dim != 1 {
                    return Err(Error::InvalidInput(
                        "a single matrix needs a one-variable chart".into(),
                    ));
                }
                Ok(vec![m])
            }
            MatListDoc::PerVar(ms) => {
                if ms.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "expected {dim} matrices, found {}",
                        ms.len()
                    )));
                }
                Ok(ms.iter().collect())
            }
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct OverlapDoc {
    pub charts: [String; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inverted: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub denominators: Vec<String>,
    pub coordinate_change: Vec<String>,
    pub transition: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SubmoduleDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<String>,
    pub ambient_rank: usize,
    /// columns of generators, one inner list per generator
    pub generators: Vec<Vec<String>>,
}

/// A loaded fixture: the raw document plus the constructed glued object.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub doc: FixtureDoc,
    pub glued: GluedObject,
}

fn parse_mat(ring: &Arc<ChartRing>, rows: &[Vec<String>], rank: usize) -> Result<Mat> {
    if rows.len() != rank || rows.iter().any(|r| r.len() != rank) {
        return Err(Error::InvalidInput(format!("matrix must be {rank} x {rank}")));
    }
    let parsed = rows
        .iter()
        .map(|row| row.iter().map(|s| RingElement::parse(ring, s)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Mat::from_rows(ring, parsed))
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Fixture> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        let doc: FixtureDoc = serde_json::from_str(&text).map_err(|e| {
            Error::InvalidInput(format!(
                "{}: line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        Self::from_doc(doc)
    }

    pub fn from_doc(doc: FixtureDoc) -> Result<Fixture> {
        if doc.format != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported format `{}`, expected `{FORMAT_VERSION}`",
                doc.format
            )));
        }
        let mut charts = Vec::new();
        for cd in &doc.charts {
            let inverted: Vec<&str> = cd.inverted.iter().map(|s| s.as_str()).collect();
            let dens: Vec<&str> = cd.denominators.iter().map(|s| s.as_str()).collect();
            let vars: Vec<&str> = cd.vars.iter().map(|s| s.as_str()).collect();
            let ring = ChartRing::make(doc.p, doc.m, &vars, &inverted, &dens)?;
            let data = match (&cd.fil, &cd.levels) {
                (Some(fil), None) => {
                    if doc.m < 2 {
                        return Err(Error::PrecisionTooLow(
                            "de Rham charts need m >= 2 to carry a Frobenius lifting".into(),
                        ));
                    }
                    let a = cd.a.as_ref().ok_or_else(|| {
                        Error::InvalidInput(format!("chart {}: missing A", cd.id))
                    })?;
                    let f = cd.f.as_ref().ok_or_else(|| {
                        Error::InvalidInput(format!("chart {}: missing F", cd.id))
                    })?;
                    let phi_rows = cd.phi.as_ref().ok_or_else(|| {
                        Error::InvalidInput(format!("chart {}: missing Phi", cd.id))
                    })?;
                    let conn = a
                        .per_var(ring.dim())?
                        .into_iter()
                        .map(|rows| parse_mat(&ring, rows, cd.rank))
                        .collect::<Result<Vec<_>>>()?;
                    let lifting = FrobeniusLifting::parse(&ring, f)?;
                    let phi = parse_mat(&ring, phi_rows, cd.rank)?;
                    if fil.len() != cd.rank {
                        return Err(Error::InvalidInput(format!(
                            "chart {}: fil length != rank",
                            cd.id
                        )));
                    }
                    ChartData::DeRham(FilteredDeRhamChart::new(
                        &ring,
                        doc.n,
                        fil.clone(),
                        conn,
                        lifting,
                        phi,
                    )?)
                }
                (None, Some(levels)) => {
                    let theta = cd.theta.as_ref().ok_or_else(|| {
                        Error::InvalidInput(format!("chart {}: missing theta", cd.id))
                    })?;
                    let rp = ring.mod_p();
                    let theta_mats = theta
                        .per_var(ring.dim())?
                        .into_iter()
                        .map(|rows| parse_mat(&rp, rows, cd.rank))
                        .collect::<Result<Vec<_>>>()?;
                    ChartData::Higgs(HiggsChart::new(&rp, levels.clone(), theta_mats)?)
                }
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "chart {}: provide either fil/A/F/Phi or levels/theta",
                        cd.id
                    )))
                }
            };
            charts.push(NamedChart { id: cd.id.clone(), ring, data });
        }

        let mut overlaps = Vec::new();
        for od in &doc.overlaps {
            let first = charts
                .iter()
                .position(|c| c.id == od.charts[0])
                .ok_or_else(|| Error::InvalidInput(format!("unknown chart {}", od.charts[0])))?;
            let second = charts
                .iter()
                .position(|c| c.id == od.charts[1])
                .ok_or_else(|| Error::InvalidInput(format!("unknown chart {}", od.charts[1])))?;
            let base = &charts[first].ring;
            let extra_inv: Vec<usize> = od
                .inverted
                .iter()
                .map(|name| {
                    base.var_index(name).ok_or_else(|| {
                        Error::InvalidInput(format!("unknown overlap variable {name}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut extra_dens = Vec::new();
            {
                let plain_vars: Vec<&str> = base.vars().iter().map(|s| s.as_str()).collect();
                let plain = ChartRing::make(doc.p, doc.m, &plain_vars, &[], &[])?;
                for d in &od.denominators {
                    extra_dens.push(RingElement::parse(&plain, d)?.to_dense_poly()?);
                }
            }
            let ring = base.localize(&extra_inv, extra_dens)?;
            let rank = charts[first].data.rank();
            if charts[second].data.rank() != rank {
                return Err(Error::InvalidInput("overlapping charts have different ranks".into()));
            }
            let second_dim = charts[second].ring.dim();
            if od.coordinate_change.len() != second_dim {
                return Err(Error::InvalidInput(
                    "coordinate_change needs one image per second-chart variable".into(),
                ));
            }
            let second_images = od
                .coordinate_change
                .iter()
                .map(|s| RingElement::parse(&ring, s))
                .collect::<Result<Vec<_>>>()?;
            let transition = parse_mat(&ring, &od.transition, rank)?;
            overlaps.push(Overlap { first, second, ring, second_images, transition });
        }

        // submodule cross-references
        for (name, sd) in &doc.submodules {
            if let Some(chart) = &sd.chart {
                if !charts.iter().any(|c| &c.id == chart) {
                    return Err(Error::InvalidInput(format!(
                        "submodule {name} references unknown chart {chart}"
                    )));
                }
            }
        }

        let projective_line = doc.cover.as_deref() == Some("projective-line");
        if let Some(tag) = &doc.cover {
            if tag != "projective-line" {
                return Err(Error::InvalidInput(format!("unknown cover tag `{tag}`")));
            }
        }
        Ok(Fixture {
            doc,
            glued: GluedObject { charts, overlaps, projective_line },
        })
    }

    /// Structural checks reported by the validate command.
    pub fn structural_checks(&self) -> Vec<CheckResult> {
        let mut out = Vec::new();
        let p = self.doc.p;
        out.push(CheckResult::from_outcome(
            "structure/weight-in-range",
            if self.doc.n as u64 <= p - 2 {
                Ok(())
            } else {
                Err(format!("n = {} exceeds p - 2 = {}", self.doc.n, p - 2))
            },
        ));
        let has_de_rham = self.glued.charts.iter().any(|c| c.data.as_de_rham().is_some());
        if has_de_rham {
            out.push(CheckResult::from_outcome(
                "structure/precision",
                if self.doc.m >= self.doc.n + 1 {
                    Ok(())
                } else {
                    Err(format!("m = {} is below n + 1 = {}", self.doc.m, self.doc.n + 1))
                },
            ));
        }
        out
    }

    pub fn chart_ids(&self) -> Vec<String> {
        self.glued.charts.iter().map(|c| c.id.clone()).collect()
    }

    /// Parse a named submodule over the mod-p fiber of the given chart.
    pub fn submodule_on(&self, name: &str, chart_index: usize) -> Result<SubmodulePresentation> {
        let sd = self
            .doc
            .submodules
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown submodule `{name}`")))?;
        let chart = &self.glued.charts[chart_index];
        if sd.ambient_rank != chart.data.rank() {
            return Err(Error::AmbientMismatch(format!(
                "submodule `{name}` has ambient rank {}, chart {} has rank {}",
                sd.ambient_rank,
                chart.id,
                chart.data.rank()
            )));
        }
        crate::associate::submodule_on_chart(&chart.ring, sd.ambient_rank, &sd.generators)
    }

    /// The chart a named submodule belongs to (default: the first chart).
    pub fn submodule_home(&self, name: &str) -> Result<usize> {
        let sd = self
            .doc
            .submodules
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown submodule `{name}`")))?;
        match &sd.chart {
            None => Ok(0),
            Some(id) => self
                .glued
                .chart_index(id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown chart {id}"))),
        }
    }

    /// Resolve a lifting argument: a name from the fixture's lifting table,
    /// or an inline expression (one-variable charts only).
    pub fn resolve_lifting(&self, arg: &str, chart_index: usize) -> Result<FrobeniusLifting> {
        let ring = &self.glued.charts[chart_index].ring;
        if let Some(images) = self.doc.liftings.get(arg) {
            return FrobeniusLifting::parse(ring, images);
        }
        if ring.dim() == 1 {
            return FrobeniusLifting::parse(ring, &[arg.to_string()]);
        }
        Err(Error::InvalidInput(format!(
            "`{arg}` is not a named lifting, and inline liftings need a one-variable chart"
        )))
    }
}

/// A liftings file: per-chart images for the twisting command.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct LiftingsDoc {
    pub liftings: BTreeMap<String, Vec<String>>,
}

impl LiftingsDoc {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::InvalidInput(format!(
                "{}: line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    pub fn resolve(
        &self,
        fixture: &Fixture,
    ) -> Result<BTreeMap<String, FrobeniusLifting>> {
        let mut out = BTreeMap::new();
        for chart in &fixture.glued.charts {
            let images = self
                .liftings
                .get(&chart.id)
                .ok_or_else(|| Error::MissingLifting(format!("chart {}", chart.id)))?;
            out.insert(chart.id.clone(), FrobeniusLifting::parse(&chart.ring, images)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kummer_doc() -> serde_json::Value {
        serde_json::json!({
            "format": "mfv1",
            "p": 5, "m": 2, "n": 1,
            "charts": [{
                "id": "U",
                "vars": ["t"],
                "inverted": ["t"],
                "rank": 2,
                "fil": [0, 1],
                "A": [["0", "t^-1"], ["0", "0"]],
                "F": ["t^5"],
                "Phi": [["1", "0"], ["0", "5"]]
            }],
            "submodules": {
                "G0": { "ambient_rank": 2, "generators": [["1", "0"]] }
            },
            "liftings": { "alt": ["t^5 + 5*t^6"] }
        })
    }

    #[test]
    fn parse_and_validate_kummer() {
        let doc: FixtureDoc = serde_json::from_value(kummer_doc()).unwrap();
        let fixture = Fixture::from_doc(doc).unwrap();
        let chart = fixture.glued.charts[0].data.as_de_rham().unwrap();
        assert!(chart.is_valid());
        let g0 = fixture.submodule_on("G0", 0).unwrap();
        assert_eq!(g0.rank(), 1);
        let lift = fixture.resolve_lifting("alt", 0).unwrap();
        assert!(lift.check_valid().is_ok());
        let inline = fixture.resolve_lifting("t^5 + 5*t^2", 0).unwrap();
        assert!(inline.check_valid().is_ok());
    }

    #[test]
    fn document_roundtrip() {
        let doc: FixtureDoc = serde_json::from_value(kummer_doc()).unwrap();
        let serialized = serde_json::to_value(&doc).unwrap();
        let reparsed: FixtureDoc = serde_json::from_value(serialized).unwrap();
        assert_eq!(doc, reparsed);
    }

    #[test]
    fn liftings_doc_requires_every_chart() {
        let doc: FixtureDoc = serde_json::from_value(kummer_doc()).unwrap();
        let fixture = Fixture::from_doc(doc).unwrap();
        let lifts = LiftingsDoc { liftings: BTreeMap::new() };
        assert!(matches!(lifts.resolve(&fixture), Err(Error::MissingLifting(_))));
    }

    #[test]
    fn version_enforced() {
        let mut v = kummer_doc();
        v["format"] = serde_json::json!("mfv2");
        let doc: FixtureDoc = serde_json::from_value(v).unwrap();
        assert!(matches!(Fixture::from_doc(doc), Err(Error::InvalidInput(_))));
    }
}
