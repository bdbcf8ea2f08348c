//! Dense univariate polynomial helpers over Z/p^m, used for denominator
//! bookkeeping and for the PID algebra behind submodule normal forms.
//!
//! Polynomials are coefficient vectors in ascending degree with no
//! trailing zeros (the zero polynomial is the empty vector).

use crate::error::{Error, Result};

pub fn trim(mut v: Vec<u64>) -> Vec<u64> {
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

pub fn deg(v: &[u64]) -> Option<usize> {
    if v.is_empty() {
        None
    } else {
        Some(v.len() - 1)
    }
}

pub fn is_monic(v: &[u64]) -> bool {
    v.last() == Some(&1)
}

pub fn add(a: &[u64], b: &[u64], modulus: u64) -> Vec<u64> {
    let mut out = vec![0u64; a.len().max(b.len())];
    for (i, slot) in out.iter_mut().enumerate() {
        let x = a.get(i).copied().unwrap_or(0) as u128;
        let y = b.get(i).copied().unwrap_or(0) as u128;
        *slot = ((x + y) % modulus as u128) as u64;
    }
    trim(out)
}

pub fn neg(a: &[u64], modulus: u64) -> Vec<u64> {
    trim(a.iter().map(|&x| (modulus - x) % modulus).collect())
}

pub fn sub(a: &[u64], b: &[u64], modulus: u64) -> Vec<u64> {
    add(a, &neg(b, modulus), modulus)
}

pub fn mul(a: &[u64], b: &[u64], modulus: u64) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0u128; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x as u128 * y as u128) % modulus as u128;
        }
    }
    trim(out.into_iter().map(|x| x as u64).collect())
}

pub fn scale(a: &[u64], c: u64, modulus: u64) -> Vec<u64> {
    trim(a.iter().map(|&x| (x as u128 * c as u128 % modulus as u128) as u64).collect())
}

fn inv_mod(v: u64, modulus: u64) -> Option<u64> {
    let (mut r0, mut r1) = (v as i128, modulus as i128);
    let (mut s0, mut s1) = (1i128, 0i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 == 1 {
        Some(s0.rem_euclid(modulus as i128) as u64)
    } else {
        None
    }
}

/// Division with remainder by a divisor whose leading coefficient is a
/// unit mod p. Works over Z/p^m for any m.
pub fn div_rem(a: &[u64], b: &[u64], modulus: u64, p: u64) -> Result<(Vec<u64>, Vec<u64>)> {
    if b.is_empty() {
        return Err(Error::ZeroElement);
    }
    let lc = *b.last().unwrap();
    if lc % p == 0 {
        return Err(Error::NotAUnit);
    }
    let lc_inv = inv_mod(lc, modulus).expect("leading coefficient must be a unit");
    let mut rem: Vec<u64> = a.to_vec();
    let db = b.len() - 1;
    let mut quot = vec![0u64; a.len().saturating_sub(db)];
    while let Some(dr) = deg(&rem) {
        if dr < db {
            break;
        }
        let c = (rem[dr] as u128 * lc_inv as u128 % modulus as u128) as u64;
        quot[dr - db] = c;
        for (i, &bc) in b.iter().enumerate() {
            let sub_term = c as u128 * bc as u128 % modulus as u128;
            let idx = dr - db + i;
            let cur = rem[idx] as u128;
            rem[idx] = ((cur + modulus as u128 - sub_term) % modulus as u128) as u64;
        }
        rem = trim(rem);
    }
    Ok((trim(quot), trim(rem)))
}

/// Exact division: returns the quotient only when the remainder is zero.
pub fn try_div_exact(a: &[u64], b: &[u64], modulus: u64, p: u64) -> Result<Option<Vec<u64>>> {
    let (q, r) = div_rem(a, b, modulus, p)?;
    if r.is_empty() {
        Ok(Some(q))
    } else {
        Ok(None)
    }
}

pub fn make_monic(a: &[u64], modulus: u64) -> Vec<u64> {
    match a.last() {
        None => vec![],
        Some(&lc) => {
            let inv = inv_mod(lc, modulus).expect("leading coefficient must be a unit");
            scale(a, inv, modulus)
        }
    }
}

/// Extended Euclid over F_p: returns (g, x, y) with x*a + y*b = g, g monic.
pub fn ext_gcd_fp(a: &[u64], b: &[u64], p: u64) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let (mut r0, mut r1) = (trim(a.to_vec()), trim(b.to_vec()));
    let (mut s0, mut s1) = (vec![1u64], vec![]);
    let (mut t0, mut t1) = (vec![], vec![1u64]);
    while !r1.is_empty() {
        let (q, r) = div_rem(&r0, &r1, p, p).expect("field division");
        let ns = sub(&s0, &mul(&q, &s1, p), p);
        let nt = sub(&t0, &mul(&q, &t1, p), p);
        (r0, r1) = (r1, r);
        (s0, s1) = (s1, ns);
        (t0, t1) = (t1, nt);
    }
    if r0.is_empty() {
        return (vec![], s0, t0);
    }
    let lc = *r0.last().unwrap();
    let inv = inv_mod(lc, p).unwrap();
    (scale(&r0, inv, p), scale(&s0, inv, p), scale(&t0, inv, p))
}

/// Inverse of `a` modulo the monic polynomial `m` over F_p, when coprime.
pub fn inverse_mod_poly_fp(a: &[u64], m: &[u64], p: u64) -> Option<Vec<u64>> {
    let (g, x, _) = ext_gcd_fp(a, m, p);
    if g == vec![1u64] {
        let (_, r) = div_rem(&x, m, p, p).expect("field division");
        Some(r)
    } else {
        None
    }
}

/// Irreducibility over F_p by trial division; degrees here are tiny.
pub fn is_irreducible_fp(a: &[u64], p: u64) -> bool {
    let d = match deg(a) {
        None | Some(0) => return false,
        Some(d) => d,
    };
    if d == 1 {
        return true;
    }
    // enumerate monic divisors of degree 1..=d/2
    let mut candidate = vec![0u64; 2];
    fn enumerate(prefix: &mut Vec<u64>, pos: usize, dd: usize, p: u64, a: &[u64], found: &mut bool) {
        if *found {
            return;
        }
        if pos == dd {
            let mut cand = prefix.clone();
            cand.push(1);
            if let Ok(Some(_)) = try_div_exact(a, &cand, p, p) {
                *found = true;
            }
            return;
        }
        for c in 0..p {
            prefix.push(c);
            enumerate(prefix, pos + 1, dd, p, a, found);
            prefix.pop();
        }
    }
    for dd in 1..=d / 2 {
        candidate.resize(dd + 1, 0);
        let mut found = false;
        let mut prefix = Vec::new();
        enumerate(&mut prefix, 0, dd, p, a, &mut found);
        if found {
            return false;
        }
    }
    true
}

pub fn reduce_mod(a: &[u64], modulus: u64) -> Vec<u64> {
    trim(a.iter().map(|&x| x % modulus).collect())
}
