//! Command implementations. Input problems surface as `anyhow` errors
//! (exit 2); mathematical verdicts are check entries in the report
//! (exit 1 when any fails).

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context};

use mfv_core::associate::{
    associate_with_certificate, glue_associated, level_residual_holds, nabla_stable,
    phi_div_well_defined, residual_identity_holds,
};
use mfv_core::descent::{
    cartier_katz_descent_bounded, conjugate_filtration, inverse_cartier_exponential_twisting,
    p_curvature, remark_identity_holds, roundtrip_check as roundtrip_core,
};
use mfv_core::fixture::{Fixture, LiftingsDoc};
use mfv_core::random::{random_section, seeded_rng};
use mfv_core::ring::RingElement;
use mfv_core::{CheckResult, Error, FilteredDeRhamChart, Report};

fn load(file: &Path) -> anyhow::Result<Fixture> {
    Fixture::load(file).with_context(|| format!("loading {}", file.display()))
}

fn fixture_name(file: &Path) -> String {
    file.display().to_string()
}

/// Record an engine outcome as a named check: engine errors become
/// failures with the error text as witness.
fn record<T>(
    report: &mut Report,
    name: impl Into<String>,
    outcome: Result<T, Error>,
    describe: impl FnOnce(&T) -> Option<String>,
) -> Option<T> {
    match outcome {
        Ok(value) => {
            match describe(&value) {
                Some(w) => report.push(CheckResult::pass_with(name, w)),
                None => report.push(CheckResult::pass(name)),
            }
            Some(value)
        }
        Err(e) => {
            report.push(CheckResult::fail(name, e.to_string()));
            None
        }
    }
}

fn record_bool(report: &mut Report, name: impl Into<String>, outcome: Result<bool, Error>) {
    match outcome {
        Ok(true) => report.push(CheckResult::pass(name)),
        Ok(false) => report.push(CheckResult::fail(name, "identity does not hold")),
        Err(e) => report.push(CheckResult::fail(name, e.to_string())),
    }
}

pub fn validate(file: &Path) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    let mut report = Report::new("validate", fixture_name(file));
    report.extend(fixture.structural_checks());
    report.extend(fixture.glued.validate());
    Ok(report)
}

pub fn grade(file: &Path) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    let mut report = Report::new("grade", fixture_name(file));
    let mut graded_any = false;
    for chart in &fixture.glued.charts {
        let Some(de_rham) = chart.data.as_de_rham() else { continue };
        graded_any = true;
        match de_rham.gr_fil() {
            Ok(higgs) => {
                report.push(CheckResult::pass_with(
                    format!("{}/graded", chart.id),
                    format!("levels {:?}", higgs.levels()),
                ));
                for check in higgs.validate() {
                    report.push(CheckResult {
                        check: format!("{}/{}", chart.id, check.check),
                        status: check.status,
                        witness: check.witness,
                    });
                }
                println!("chart {}: levels {:?}", chart.id, higgs.levels());
                for (l, th) in higgs.theta().iter().enumerate() {
                    println!("  theta_{l} = {:?}", th.render_rows());
                }
            }
            Err(e) => {
                report.push(CheckResult::fail(format!("{}/graded", chart.id), e.to_string()))
            }
        }
    }
    if !graded_any {
        bail!("the fixture has no de Rham charts to grade");
    }
    Ok(report)
}

/// Sections supported on a single filtration level, for the per-level
/// residual identity.
fn level_sections(
    chart: &FilteredDeRhamChart,
    level: u32,
    seed: u64,
) -> Vec<Vec<RingElement>> {
    let rp = chart.ring().mod_p();
    let mut rng = seeded_rng(seed ^ 0x5eed);
    let mut out = Vec::new();
    for sample in 0..3 {
        let mut section = if sample == 0 {
            // basis vectors of the level
            (0..chart.rank())
                .map(|i| {
                    if chart.fil()[i] == level {
                        RingElement::one(&rp)
                    } else {
                        RingElement::zero(&rp)
                    }
                })
                .collect()
        } else {
            random_section(&rp, chart.rank(), &mut rng)
        };
        for (i, slot) in section.iter_mut().enumerate() {
            if chart.fil()[i] != level {
                *slot = RingElement::zero(&rp);
            }
        }
        if section.iter().any(|x| !x.is_zero()) {
            out.push(section);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn associate_on_chart(
    report: &mut Report,
    fixture: &Fixture,
    chart_index: usize,
    sub_name: &str,
    lifting: Option<&str>,
    compare: Option<&str>,
    saturate: bool,
    seed: u64,
) -> anyhow::Result<()> {
    let chart_id = fixture.glued.charts[chart_index].id.clone();
    let Some(base) = fixture.glued.charts[chart_index].data.as_de_rham() else {
        bail!("chart {chart_id} is not a de Rham chart");
    };
    let g = fixture
        .submodule_on(sub_name, chart_index)
        .with_context(|| format!("resolving submodule {sub_name} on chart {chart_id}"))?;

    // optionally move the whole chart to another lifting first
    let chart = match lifting {
        None => base.clone(),
        Some(arg) => {
            let target = fixture
                .resolve_lifting(arg, chart_index)
                .with_context(|| format!("resolving lifting `{arg}`"))?;
            match record(
                report,
                format!("{chart_id}/transport-validates"),
                base.transport_frobenius(&target),
                |_| None,
            ) {
                Some(moved) => moved,
                None => return Ok(()),
            }
        }
    };

    let compare_lifting = match compare {
        None => None,
        Some(arg) => Some(
            fixture
                .resolve_lifting(arg, chart_index)
                .with_context(|| format!("resolving lifting `{arg}`"))?,
        ),
    };

    let cert = record(
        report,
        format!("{chart_id}/associate"),
        associate_with_certificate(&chart, &g, saturate, compare_lifting.as_ref()),
        |c| Some(format!("S generated by {:?}", c.subsheaf.render_generators())),
    );
    let Some(cert) = cert else { return Ok(()) };
    println!(
        "chart {chart_id}: S({sub_name}) = {:?}",
        cert.subsheaf.render_generators()
    );

    report.push(CheckResult::pass_with(
        format!("{chart_id}/horizontality-identity"),
        format!("{} generator/direction witnesses", cert.horizontality.len()),
    ));
    record_bool(
        report,
        format!("{chart_id}/nabla-stable"),
        nabla_stable(&chart, &cert.subsheaf),
    );
    for level in BTreeSet::from_iter(chart.fil().iter().copied()) {
        record_bool(
            report,
            format!("{chart_id}/divided-frobenius-well-defined-level-{level}"),
            phi_div_well_defined(&chart, level),
        );
    }

    if let Some(ind) = &cert.independence {
        if ind.equal {
            report.push(CheckResult::pass(format!("{chart_id}/lifting-independence")));
        } else {
            report.push(CheckResult::fail(
                format!("{chart_id}/lifting-independence"),
                format!("{:?} vs {:?}", ind.first_normal_form, ind.second_normal_form),
            ));
        }
    }
    if let Some(f2) = &compare_lifting {
        let rp = chart.ring().mod_p();
        let mut rng = seeded_rng(seed);
        let mut residual_ok = Ok(true);
        let mut sections: Vec<Vec<RingElement>> = g.normal_form().columns();
        for _ in 0..10 {
            sections.push(random_section(&rp, chart.rank(), &mut rng));
        }
        for section in &sections {
            match residual_identity_holds(&chart, section, f2) {
                Ok(true) => {}
                Ok(false) => {
                    residual_ok = Ok(false);
                    break;
                }
                Err(e) => {
                    residual_ok = Err(e);
                    break;
                }
            }
        }
        record_bool(report, format!("{chart_id}/residual-identity"), residual_ok);

        let mut level_ok = Ok(true);
        'levels: for level in BTreeSet::from_iter(chart.fil().iter().copied()) {
            for section in level_sections(&chart, level, seed) {
                match level_residual_holds(&chart, level, &section, f2) {
                    Ok(true) => {}
                    Ok(false) => {
                        level_ok = Ok(false);
                        break 'levels;
                    }
                    Err(e) => {
                        level_ok = Err(e);
                        break 'levels;
                    }
                }
            }
        }
        record_bool(report, format!("{chart_id}/per-level-residual"), level_ok);
    }
    Ok(())
}

pub fn associate(
    file: &Path,
    sub_name: &str,
    lifting: Option<&str>,
    compare: Option<&str>,
    saturate: bool,
    seed: u64,
) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    let mut report = Report::new("associate", fixture_name(file));
    if !fixture.doc.submodules.contains_key(sub_name) {
        bail!("unknown submodule `{sub_name}`");
    }
    if fixture.glued.overlaps.is_empty() {
        let home = fixture.submodule_home(sub_name)?;
        associate_on_chart(
            &mut report,
            &fixture,
            home,
            sub_name,
            lifting,
            compare,
            saturate,
            seed,
        )?;
    } else {
        // multi-chart: associate on every chart with its own lifting, then glue
        for idx in 0..fixture.glued.charts.len() {
            associate_on_chart(&mut report, &fixture, idx, sub_name, None, compare, saturate, seed)?;
        }
        let subs = (0..fixture.glued.charts.len())
            .map(|i| fixture.submodule_on(sub_name, i))
            .collect::<Result<Vec<_>, _>>()?;
        record(
            &mut report,
            "gluing",
            glue_associated(&fixture.glued, &subs, saturate),
            |g| Some(format!("overlaps matched: {:?}", g.matched_overlaps)),
        );
    }
    Ok(report)
}

pub fn pcurv(file: &Path, seed: u64) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    let mut report = Report::new("pcurv", fixture_name(file));
    let mut rng = seeded_rng(seed);
    let mut seen = false;
    for chart in &fixture.glued.charts {
        let Some(de_rham) = chart.data.as_de_rham() else { continue };
        seen = true;
        let rp = de_rham.ring().mod_p();
        let conn: Vec<_> = de_rham.conn().iter().map(|a| a.reduce_to(&rp)).collect();
        let psi = match p_curvature(&rp, &conn) {
            Ok(psi) => psi,
            Err(e) => {
                report.push(CheckResult::fail(format!("{}/p-curvature", chart.id), e.to_string()));
                continue;
            }
        };
        for (l, m) in psi.psi.iter().enumerate() {
            println!("chart {}: psi_{l} = {:?}", chart.id, m.render_rows());
        }
        let mut linear = Ok(true);
        for _ in 0..3 {
            let f = mfv_core::random::random_element(&rp, &mut rng, 3, 3);
            let v = random_section(&rp, de_rham.rank(), &mut rng);
            match psi.linearity_holds(&conn, &f, &v) {
                Ok(true) => {}
                other => {
                    linear = other;
                    break;
                }
            }
        }
        record_bool(&mut report, format!("{}/psi-linearity", chart.id), linear);
        record_bool(
            &mut report,
            format!("{}/psi-nilpotent", chart.id),
            psi.nilpotency_holds(de_rham.weight() + 1),
        );
        if rp.dim() > 1 {
            record_bool(&mut report, format!("{}/psi-commute", chart.id), psi.commute());
        }
    }
    if !seen {
        bail!("the fixture has no de Rham charts");
    }
    Ok(report)
}

pub fn descend(file: &Path, sub_name: &str, bound: Option<i64>) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    let mut report = Report::new("descend", fixture_name(file));
    let home = fixture.submodule_home(sub_name)?;
    let chart_id = fixture.glued.charts[home].id.clone();
    let Some(chart) = fixture.glued.charts[home].data.as_de_rham() else {
        bail!("chart {chart_id} is not a de Rham chart");
    };
    let w = fixture.submodule_on(sub_name, home)?;
    record(
        &mut report,
        format!("{chart_id}/conjugate-filtration"),
        conjugate_filtration(chart),
        |c| Some(format!("ranks {:?}", c.steps.iter().map(|s| s.rank()).collect::<Vec<_>>())),
    );
    match cartier_katz_descent_bounded(chart, &w, bound) {
        Ok(descended) => {
            report.push(CheckResult::pass_with(
                format!("{chart_id}/cartier-katz-descent"),
                format!("{:?}", descended.render_generators()),
            ));
            println!(
                "chart {chart_id}: descent of {sub_name} = {:?}",
                descended.render_generators()
            );
        }
        Err(e) => {
            report.push(CheckResult::fail(format!("{chart_id}/cartier-katz-descent"), e.to_string()));
        }
    }
    Ok(report)
}

pub fn roundtrip(file: &Path, sub_name: &str) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    let mut report = Report::new("roundtrip", fixture_name(file));
    let home = fixture.submodule_home(sub_name)?;
    let chart_id = fixture.glued.charts[home].id.clone();
    let Some(chart) = fixture.glued.charts[home].data.as_de_rham() else {
        bail!("chart {chart_id} is not a de Rham chart");
    };
    let g = fixture.submodule_on(sub_name, home)?;
    record_bool(
        &mut report,
        format!("{chart_id}/subsystem-of-hodge"),
        g.is_subsystem_of_hodge(chart.fil()),
    );
    record_bool(&mut report, format!("{chart_id}/roundtrip"), roundtrip_core(chart, &g));
    record_bool(&mut report, format!("{chart_id}/filtration-identity"), {
        remark_identity_holds(chart, &g)
    });
    Ok(report)
}

pub fn twist(file: &Path, liftings_path: &Path) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    let liftings_doc = LiftingsDoc::load(liftings_path)
        .with_context(|| format!("loading {}", liftings_path.display()))?;
    let liftings = liftings_doc
        .resolve(&fixture)
        .context("resolving liftings")?;
    let mut report = Report::new("twist", fixture_name(file));
    let twisted = match inverse_cartier_exponential_twisting(&fixture.glued, &liftings) {
        Ok(t) => t,
        Err(e @ (Error::InvalidInput(_) | Error::MissingLifting(_))) => bail!(e.to_string()),
        Err(e) => {
            report.push(CheckResult::fail("twisting", e.to_string()));
            return Ok(report);
        }
    };
    for (id, conn) in &twisted.connections {
        for (l, b) in conn.iter().enumerate() {
            println!("chart {id}: twisted connection B_{l} = {:?}", b.render_rows());
        }
    }
    for tw in &twisted.transitions {
        println!("overlap {}: twisted transition = {:?}", tw.label, tw.matrix.render_rows());
    }
    record_bool(&mut report, "twist-integrable", twisted.integrability_holds());
    if !fixture.glued.overlaps.is_empty() {
        record_bool(
            &mut report,
            "transition-compat",
            twisted.transitions_compatible(&fixture.glued),
        );
        record_bool(&mut report, "determinant-formula", twisted.determinant_formula_holds());
        if fixture.glued.projective_line {
            match twisted.degree_pairs(fixture.doc.p) {
                Ok(pairs) => {
                    for (label, twisted_deg, expected) in pairs {
                        let name = format!("degree-multiplication {label}");
                        if twisted_deg == expected {
                            report.push(CheckResult::pass_with(
                                name,
                                format!("deg det = {twisted_deg} = p * deg det original"),
                            ));
                        } else {
                            report.push(CheckResult::fail(
                                name,
                                format!("deg det twisted = {twisted_deg}, expected {expected}"),
                            ));
                        }
                    }
                }
                Err(e) => report.push(CheckResult::fail("degree-multiplication", e.to_string())),
            }
        }
    }
    Ok(report)
}

pub fn degree(file: &Path) -> anyhow::Result<Report> {
    let fixture = load(file)?;
    if !fixture.glued.projective_line {
        bail!("degree needs a fixture tagged with the projective-line cover");
    }
    let mut report = Report::new("degree", fixture_name(file));
    match fixture.glued.det_degree() {
        Ok(d) => {
            let slope = fixture.glued.slope().map_err(|e| anyhow::anyhow!(e.to_string()))?;
            report.push(CheckResult::pass_with(
                "transition-unit",
                format!("deg det = {d}, slope = {slope}"),
            ));
            println!("deg det = {d}");
            println!("slope = {slope}");
            if fixture.glued.overlaps[0].transition.rows() == 1 {
                println!("deg = {}", fixture.glued.degree().map_err(|e| anyhow::anyhow!(e.to_string()))?);
            }
        }
        Err(e) => report.push(CheckResult::fail("transition-unit", e.to_string())),
    }
    Ok(report)
}
