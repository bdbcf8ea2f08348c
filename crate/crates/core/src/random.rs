//! Seeded generators for property suites.
//!
//! The PRNG contract: all randomized checks derive from ChaCha8 seeded
//! with a u64 (default 0), so CI runs are reproducible. The generator
//! identity is not part of any file format.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::chart::FrobeniusLifting;
use crate::ring::{ChartRing, RingElement};
use crate::scalar::PadicScalar;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random Frobenius lifting t_l -> t_l^p + p*g_l with deg g_l <= 5.
pub fn random_lifting(ring: &Arc<ChartRing>, rng: &mut ChaCha8Rng) -> FrobeniusLifting {
    assert!(ring.precision() >= 2, "liftings need precision >= 2");
    let p = ring.p();
    let reduced = ring.with_precision(ring.precision() - 1);
    let mut images = Vec::new();
    for l in 0..ring.dim() {
        let mut g = RingElement::zero(&reduced);
        let n_terms = rng.gen_range(0..=3);
        for _ in 0..n_terms {
            let coeff = rng.gen_range(0..reduced.modulus());
            let mut exps = vec![0i64; ring.dim()];
            // total degree at most 5
            let d1 = rng.gen_range(0..=5i64);
            if ring.dim() == 2 {
                let d2 = rng.gen_range(0..=(5 - d1));
                exps[0] = d1;
                exps[1] = d2;
            } else {
                exps[0] = d1;
            }
            let c = PadicScalar::new(p, reduced.precision(), coeff);
            if let Ok(mono) = RingElement::monomial(&reduced, exps, c) {
                g = g.add(&mono);
            }
        }
        let tp = RingElement::var(ring, l).pow(p as i64).expect("plain power");
        images.push(tp.add(&g.mul_by_pow_p(1, ring)));
    }
    FrobeniusLifting::new(ring, images).expect("t^p + p*g is always a valid lifting shape")
}

/// Random coordinates for a section: sparse Laurent polynomials with
/// exponents bounded by 4 (negative only on inverted variables).
pub fn random_section(ring: &Arc<ChartRing>, rank: usize, rng: &mut ChaCha8Rng) -> Vec<RingElement> {
    (0..rank).map(|_| random_element(ring, rng, 4, 3)).collect()
}

pub fn random_element(
    ring: &Arc<ChartRing>,
    rng: &mut ChaCha8Rng,
    max_deg: i64,
    max_terms: usize,
) -> RingElement {
    let mut out = RingElement::zero(ring);
    let n_terms = rng.gen_range(0..=max_terms);
    for _ in 0..n_terms {
        let coeff = rng.gen_range(0..ring.modulus());
        let mut exps = vec![0i64; ring.dim()];
        for (l, e) in exps.iter_mut().enumerate() {
            let lo = if ring.inverted()[l] { -max_deg } else { 0 };
            *e = rng.gen_range(lo..=max_deg);
        }
        let c = PadicScalar::new(ring.p(), ring.precision(), coeff);
        if let Ok(mono) = RingElement::monomial(ring, exps, c) {
            out = out.add(&mono);
        }
    }
    out
}
