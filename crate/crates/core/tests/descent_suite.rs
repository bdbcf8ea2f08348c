//! Descent properties across the corpus: p-curvature linearity and
//! nilpotency, conjugate-filtration structure, the filtration identity,
//! the round trip on subsystems of Hodge bundles, and the zero-Higgs
//! Cartier descent.

mod common;

use common::{load, ASSOCIATION_PAIRS, MF_FIXTURES};
use mfv_core::associate::{associate_subsheaf, phi_tilde, phi_tilde_apply};
use mfv_core::descent::{
    cartier_descend_flat, conjugate_filtration, nabla_power, p_curvature,
    remark_identity_holds, roundtrip_check,
};
use mfv_core::matrix::Mat;
use mfv_core::random::{random_element, random_section, seeded_rng};

#[test]
fn p_curvature_linearity_and_nilpotency() {
    for name in MF_FIXTURES {
        let fixture = load(name);
        let mut rng = seeded_rng(6);
        for chart in &fixture.glued.charts {
            let Some(de_rham) = chart.data.as_de_rham() else { continue };
            let rp = de_rham.ring().mod_p();
            let conn: Vec<Mat> = de_rham.conn().iter().map(|a| a.reduce_to(&rp)).collect();
            let psi = p_curvature(&rp, &conn).unwrap();
            assert!(
                psi.nilpotency_holds(de_rham.weight() + 1).unwrap(),
                "{name}: psi^(n+1) != 0"
            );
            assert!(psi.commute().unwrap(), "{name}");
            for _ in 0..5 {
                let f = random_element(&rp, &mut rng, 3, 3);
                let v = random_section(&rp, de_rham.rank(), &mut rng);
                assert!(psi.linearity_holds(&conn, &f, &v).unwrap(), "{name}");
            }
        }
    }
}

#[test]
fn conjugate_filtration_structure() {
    for name in MF_FIXTURES {
        let fixture = load(name);
        for chart in &fixture.glued.charts {
            let Some(de_rham) = chart.data.as_de_rham() else { continue };
            if de_rham.ring().dim() != 1 {
                continue; // submodule presentations need one variable
            }
            // the constructor asserts horizontality and freeness of steps
            let conj = conjugate_filtration(de_rham).unwrap();
            let n = de_rham.weight() as usize;
            assert_eq!(conj.steps.len(), n + 2, "{name}");
            assert_eq!(conj.steps[0].rank(), de_rham.rank(), "{name}");
            assert_eq!(conj.steps[n + 1].rank(), 0, "{name}");
            for q in 0..=n {
                assert!(conj.steps[q].contains(&conj.steps[q + 1]).unwrap(), "{name}");
            }
        }
    }
}

#[test]
fn filtration_identity_on_graded_submodules() {
    for (name, subs) in ASSOCIATION_PAIRS {
        let fixture = load(name);
        let chart = fixture.glued.charts[0].data.as_de_rham().unwrap();
        for sub_name in subs {
            let g = fixture.submodule_on(sub_name, 0).unwrap();
            if !g.is_subsystem_of_hodge(chart.fil()).unwrap() {
                continue;
            }
            assert!(
                remark_identity_holds(chart, &g).unwrap(),
                "{name}/{sub_name}"
            );
        }
    }
}

#[test]
fn roundtrip_on_all_subsystems() {
    for (name, subs) in ASSOCIATION_PAIRS {
        let fixture = load(name);
        let chart = fixture.glued.charts[0].data.as_de_rham().unwrap();
        for sub_name in subs {
            let g = fixture.submodule_on(sub_name, 0).unwrap();
            if !g.is_subsystem_of_hodge(chart.fil()).unwrap() {
                continue;
            }
            assert!(roundtrip_check(chart, &g).unwrap(), "{name}/{sub_name}");
        }
    }
}

/// Zero Higgs field on the submodule: every associated generator is a flat
/// section, and the flat-section solver recovers the associated subsheaf.
#[test]
fn zero_higgs_descent_recovers_submodule() {
    for (name, sub_name) in [("unit_root_p5.json", "E"), ("kummer_p5.json", "G0")] {
        let fixture = load(name);
        let chart = fixture.glued.charts[0].data.as_de_rham().unwrap();
        let rp = chart.ring().mod_p();
        let g = fixture.submodule_on(sub_name, 0).unwrap();
        let higgs = chart.gr_fil().unwrap();
        // theta restricted to G vanishes
        for th in higgs.theta() {
            for col in g.normal_form().columns() {
                let image = th.mul_vec(&col).unwrap();
                assert!(image.iter().all(|x| x.is_zero()), "{name}: theta|_G != 0");
            }
        }
        let s = associate_subsheaf(chart, &g, false).unwrap();
        let tilde = phi_tilde(chart).unwrap();
        let conn: Vec<Mat> = chart.conn().iter().map(|a| a.reduce_to(&rp)).collect();
        // each associated generator is flat
        for col in g.normal_form().columns() {
            let section = phi_tilde_apply(&tilde.mat, &col).unwrap();
            for l in 0..rp.dim() {
                let image = nabla_power(&conn, l, 1, &section).unwrap();
                assert!(image.iter().all(|x| x.is_zero()), "{name}: generator not flat");
            }
        }
        // and the solver recovers the subsheaf from flat sections
        let flats = cartier_descend_flat(&conn, &s, None).unwrap();
        assert_eq!(flats.len(), s.rank(), "{name}");
    }
}

mod saturation_properties {
    use mfv_core::random::{random_element, seeded_rng};
    use mfv_core::ring::{ChartRing, RingElement};
    use mfv_core::submodule::SubmodulePresentation;

    /// Independent oracle for rank-one saturation: divide the generator by
    /// the monic gcd of its coordinate cores (content extraction).
    #[test]
    fn rank_one_saturation_strips_content() {
        let ring = ChartRing::make(5, 1, &["t"], &[], &[]).unwrap();
        let e = |s: &str| RingElement::parse(&ring, s).unwrap();
        let cases: Vec<(Vec<&str>, Vec<&str>)> = vec![
            (vec!["t", "t^2", "0"], vec!["1", "t", "0"]),
            (vec!["t^2 - t", "t^3 - t^2", "t - 1"], vec!["t", "t^2", "1"]),
            (vec!["2*t", "2*t", "2*t"], vec!["1", "1", "1"]),
            (vec!["t^2", "t^3 + t^2", "0"], vec!["1", "t + 1", "0"]),
        ];
        for (gen, expected) in cases {
            let m = SubmodulePresentation::new(
                &ring,
                3,
                vec![gen.iter().map(|s| e(s)).collect()],
            )
            .unwrap();
            let sat = m.saturate().unwrap();
            let want = SubmodulePresentation::new(
                &ring,
                3,
                vec![expected.iter().map(|s| e(s)).collect()],
            )
            .unwrap();
            assert!(sat.equals(&want).unwrap(), "{gen:?}");
            assert!(sat.contains(&m).unwrap());
            assert_eq!(sat.rank(), 1);
        }
    }

    /// A full-rank submodule of a rank-matching ambient saturates to the
    /// whole ambient; random full-rank generator matrices.
    #[test]
    fn full_rank_saturation_is_ambient() {
        let ring = ChartRing::make(5, 1, &["t"], &[], &[]).unwrap();
        let mut rng = seeded_rng(12);
        let full = SubmodulePresentation::full(&ring, 2);
        let mut tested = 0;
        while tested < 10 {
            let cols: Vec<Vec<RingElement>> = (0..2)
                .map(|_| (0..2).map(|_| random_element(&ring, &mut rng, 3, 3)).collect())
                .collect();
            let m = SubmodulePresentation::new(&ring, 2, cols).unwrap();
            if m.rank() < 2 {
                continue;
            }
            tested += 1;
            let sat = m.saturate().unwrap();
            assert!(sat.equals(&full).unwrap());
            // idempotence
            assert!(sat.saturate().unwrap().equals(&sat).unwrap());
        }
    }
}

#[test]
fn flat_descent_rank_two_distinct_exponents() {
    use mfv_core::matrix::Mat;
    use mfv_core::ring::{ChartRing, RingElement};
    use mfv_core::submodule::SubmodulePresentation;

    // diagonal dlog connection d + diag(1, 2) dt/t on the torus:
    // flat sections are spanned by t^-1 e0 and t^-2 e1
    let ring = ChartRing::make(5, 1, &["t"], &["t"], &[]).unwrap();
    let e = |s: &str| RingElement::parse(&ring, s).unwrap();
    let conn = vec![Mat::from_rows(
        &ring,
        vec![vec![e("t^-1"), e("0")], vec![e("0"), e("2*t^-1")]],
    )];
    let w = SubmodulePresentation::full(&ring, 2);
    let flats = cartier_descend_flat(&conn, &w, None).unwrap();
    assert_eq!(flats.len(), 2);
    let span = SubmodulePresentation::new(&ring, 2, flats.clone()).unwrap();
    assert!(span.equals(&w).unwrap());
    for section in &flats {
        let image = nabla_power(&conn, 0, 1, section).unwrap();
        assert!(image.iter().all(|x| x.is_zero()));
    }
}

/// p-curvature of a dense two-by-two connection, frozen against an
/// independent symbolic-differentiation computation.
#[test]
fn p_curvature_matches_symbolic_oracle() {
    use mfv_core::matrix::Mat;
    use mfv_core::ring::{ChartRing, RingElement};

    let ring = ChartRing::make(5, 1, &["t"], &["t"], &[]).unwrap();
    let e = |s: &str| RingElement::parse(&ring, s).unwrap();
    let conn = vec![Mat::from_rows(
        &ring,
        vec![vec![e("t"), e("t^-1")], vec![e("2"), e("0")]],
    )];
    let psi = p_curvature(&ring, &conn).unwrap();
    let expected = Mat::from_rows(
        &ring,
        vec![
            vec![
                e("3*t^-4 + 4*t^-3 + 2*t^-2 + 2*t^-1 + 3 + 3*t^2 + t^5"),
                e("4*t^-5 + t^-4 + 2*t^-3 + t^-2 + 3*t^-1 + 1 + 2*t + t^3"),
            ],
            vec![
                e("4*t^-3 + 3*t^-2 + 4*t^-1 + 1 + 2*t + 3*t^2 + 2*t^4"),
                e("2*t^-4 + t^-3 + 3*t^-2 + 3*t^-1 + 2 + 2*t^2"),
            ],
        ],
    );
    assert_eq!(psi.psi[0], expected);
    // function-linearity holds for this connection as well
    let f = e("3*t^2 + t^-1");
    let v = vec![e("1 + t"), e("t^-2")];
    assert!(psi.linearity_holds(&conn, &f, &v).unwrap());
}
