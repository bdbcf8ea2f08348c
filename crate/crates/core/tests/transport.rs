//! Change-of-lifting properties across the shipped corpus: transported
//! charts satisfy every axiom, the graded Higgs data is unchanged, and
//! transport is involutive.

mod common;

use common::{load, MF_FIXTURES};
use mfv_core::random::{random_lifting, seeded_rng};

#[test]
fn transported_charts_validate() {
    for name in MF_FIXTURES {
        let fixture = load(name);
        let mut rng = seeded_rng(0);
        for chart in &fixture.glued.charts {
            let Some(de_rham) = chart.data.as_de_rham() else { continue };
            for round in 0..50 {
                let lifting = random_lifting(de_rham.ring(), &mut rng);
                let moved = de_rham
                    .transport_frobenius(&lifting)
                    .unwrap_or_else(|e| panic!("{name} round {round}: {e}"));
                for check in moved.validate() {
                    assert!(
                        check.passed(),
                        "{name} round {round}: {} failed: {:?}",
                        check.check,
                        check.witness
                    );
                }
            }
        }
    }
}

#[test]
fn graded_data_is_lifting_independent() {
    for name in MF_FIXTURES {
        let fixture = load(name);
        let mut rng = seeded_rng(1);
        for chart in &fixture.glued.charts {
            let Some(de_rham) = chart.data.as_de_rham() else { continue };
            let base = de_rham.gr_fil().unwrap();
            for _ in 0..10 {
                let lifting = random_lifting(de_rham.ring(), &mut rng);
                let moved = de_rham.transport_frobenius(&lifting).unwrap();
                assert_eq!(moved.gr_fil().unwrap(), base, "{name}");
            }
        }
    }
}

#[test]
fn transport_roundtrip_is_identity() {
    for name in MF_FIXTURES {
        let fixture = load(name);
        let mut rng = seeded_rng(2);
        for chart in &fixture.glued.charts {
            let Some(de_rham) = chart.data.as_de_rham() else { continue };
            for _ in 0..5 {
                let lifting = random_lifting(de_rham.ring(), &mut rng);
                let moved = de_rham.transport_frobenius(&lifting).unwrap();
                let back = moved.transport_frobenius(de_rham.lifting()).unwrap();
                assert_eq!(back.phi(), de_rham.phi(), "{name}");
            }
        }
    }
}

mod oracle_frozen {
    //! Expected transport outputs computed by an independent divided-power
    //! Taylor evaluation over exact integers (docs/worked-examples.md has
    //! the p = 5 derivation; the p = 3 values exercise contributions from
    //! multi-indices up to |j| = 6).

    use std::sync::Arc;

    use mfv_core::chart::{FilteredDeRhamChart, FrobeniusLifting};
    use mfv_core::matrix::Mat;
    use mfv_core::ring::{ChartRing, RingElement};

    fn kummer(p: u64, m: u32) -> FilteredDeRhamChart {
        let r = ChartRing::make(p, m, &["t"], &["t"], &[]).unwrap();
        let e = |s: &str| RingElement::parse(&r, s).unwrap();
        FilteredDeRhamChart::new(
            &r,
            1,
            vec![0, 1],
            vec![Mat::from_rows(&r, vec![vec![e("0"), e("t^-1")], vec![e("0"), e("0")]])],
            FrobeniusLifting::standard(&r).unwrap(),
            Mat::from_rows(&r, vec![vec![e("1"), e("0")], vec![e("0"), e(&p.to_string())]]),
        )
        .unwrap()
    }

    fn check(p: u64, m: u32, lifting: &str, expected_e1_col: [&str; 2]) {
        let chart = kummer(p, m);
        let r = chart.ring().clone();
        let f2 =
            FrobeniusLifting::new(&r, vec![RingElement::parse(&r, lifting).unwrap()]).unwrap();
        let moved = chart.transport_frobenius(&f2).unwrap();
        let expect = |s: &str| RingElement::parse(&r, s).unwrap();
        assert_eq!(moved.phi().at(0, 1), &expect(expected_e1_col[0]), "p={p} m={m}");
        assert_eq!(moved.phi().at(1, 1), &expect(expected_e1_col[1]), "p={p} m={m}");
        assert!(moved.is_valid(), "p={p} m={m}");
        let back = moved.transport_frobenius(chart.lifting()).unwrap();
        assert_eq!(back.phi(), chart.phi(), "p={p} m={m} round trip");
        let _ = Arc::strong_count(&r);
    }

    #[test]
    fn transport_matches_integer_oracle() {
        check(5, 2, "t^5 + 5*t^2 + 10*t^3", ["5*t^-3 + 10*t^-2", "5"]);
        check(
            3,
            5,
            "t^3 + 3*t^4",
            ["3*t + 117*t^2 + 9*t^3 + 162*t^4", "3"],
        );
        check(
            3,
            5,
            "t^3 + 3*t + 3*t^2",
            [
                "162*t^-8 + 162*t^-7 + 9*t^-6 + 189*t^-5 + 63*t^-4 + 120*t^-2 + 3*t^-1",
                "3",
            ],
        );
        // high precision relative to the weight: divided powers past the
        // naive cutoff participate in the sum
        check(
            3,
            6,
            "t^3 + 3*t",
            [
                "243*t^-12 + 486*t^-10 + 162*t^-8 + 9*t^-6 + 360*t^-4 + 3*t^-2",
                "3",
            ],
        );
    }
}
