//! Residues modulo p^m with tracked precision, and the p-adic valuation
//! bookkeeping for divided-power coefficients.
//!
//! Every scalar knows its prime and its precision m; binary operations
//! require equal primes and produce the minimum of the two precisions.
//! Reduction to lower precision is always allowed, promotion never is —
//! the only precision-raising operation is exact multiplication by a
//! power of p, which invents no digits.

use std::fmt;

use crate::error::{Error, Result};

/// Trial-division primality check; inputs here are tiny.
pub fn is_odd_prime(n: u64) -> bool {
    if n < 3 || n % 2 == 0 {
        return false;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn pow_u64(base: u64, exp: u32) -> u64 {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base).expect("modulus overflow");
    }
    acc
}

/// A residue in Z/p^m, carrying p and the precision m.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PadicScalar {
    p: u64,
    precision: u32,
    value: u64,
}

impl PadicScalar {
    pub fn new(p: u64, precision: u32, value: u64) -> Self {
        assert!(is_odd_prime(p), "p must be an odd prime >= 3, got {p}");
        assert!(precision >= 1, "precision must be >= 1");
        let m = pow_u64(p, precision);
        PadicScalar { p, precision, value: value % m }
    }

    pub fn from_i64(p: u64, precision: u32, value: i64) -> Self {
        let m = pow_u64(p, precision) as i64;
        let v = value.rem_euclid(m) as u64;
        Self::new(p, precision, v)
    }

    pub fn zero(p: u64, precision: u32) -> Self {
        Self::new(p, precision, 0)
    }

    pub fn one(p: u64, precision: u32) -> Self {
        Self::new(p, precision, 1)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> u64 {
        pow_u64(self.p, self.precision)
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    /// p-adic valuation of the canonical representative, capped at the
    /// precision (the zero residue reports the full precision).
    pub fn valuation(&self) -> u32 {
        if self.value == 0 {
            return self.precision;
        }
        let mut v = self.value;
        let mut ord = 0;
        while v % self.p == 0 {
            v /= self.p;
            ord += 1;
        }
        ord
    }

    /// Reduce to a lower precision. Panics if `precision` exceeds the
    /// current one: promotion is forbidden.
    pub fn reduce(&self, precision: u32) -> Self {
        assert!(
            precision >= 1 && precision <= self.precision,
            "cannot promote precision {} to {}",
            self.precision,
            precision
        );
        Self::new(self.p, precision, self.value)
    }

    fn common(&self, other: &Self) -> u32 {
        assert_eq!(self.p, other.p, "mixed primes {} and {}", self.p, other.p);
        self.precision.min(other.precision)
    }

    pub fn add(&self, other: &Self) -> Self {
        let m = self.common(other);
        let md = pow_u64(self.p, m) as u128;
        let v = (self.value as u128 + other.value as u128) % md;
        Self::new(self.p, m, v as u64)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let md = self.modulus();
        Self::new(self.p, self.precision, (md - self.value) % md)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let m = self.common(other);
        let md = pow_u64(self.p, m) as u128;
        let v = (self.value as u128 * other.value as u128) % md;
        Self::new(self.p, m, v as u64)
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut acc = Self::one(self.p, self.precision);
        let mut base = *self;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    /// Inverse in Z/p^m; defined exactly when p does not divide the value.
    pub fn inverse(&self) -> Result<Self> {
        if self.value % self.p == 0 {
            return Err(Error::NotAUnit);
        }
        // extended Euclid on (value, p^m)
        let md = self.modulus() as i128;
        let (mut r0, mut r1) = (self.value as i128, md);
        let (mut s0, mut s1) = (1i128, 0i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (s0, s1) = (s1, s0 - q * s1);
        }
        debug_assert_eq!(r0, 1);
        Ok(Self::new(self.p, self.precision, s0.rem_euclid(md) as u64))
    }

    /// Exact division by p^i: the unique y of precision m - i with
    /// p^i * y congruent to the input mod p^m.
    pub fn exact_div_pow(&self, i: u32) -> Result<Self> {
        if i == 0 {
            return Ok(*self);
        }
        if i >= self.precision {
            return Err(Error::PrecisionExhausted { precision: self.precision, pow: i });
        }
        let q = pow_u64(self.p, i);
        if self.value % q != 0 {
            return Err(Error::NotDivisible { value: self.value, pow: i });
        }
        Ok(Self::new(self.p, self.precision - i, self.value / q))
    }

    /// Exact multiplication by p^e. The product of p^e with a residue
    /// known mod p^m is determined mod p^{m+e}; the result precision is
    /// min(m + e, cap).
    pub fn mul_by_pow_p(&self, e: u32, cap: u32) -> Self {
        let target = (self.precision + e).min(cap);
        assert!(target >= 1);
        let md = pow_u64(self.p, target) as u128;
        let v = (self.value as u128 * pow_u64(self.p, e) as u128) % md;
        Self::new(self.p, target, v as u64)
    }
}

impl fmt::Debug for PadicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {}^{})", self.value, self.p, self.precision)
    }
}

impl fmt::Display for PadicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// A multi-index with one or two entries, as used in iterated
/// derivative and Higgs-field powers.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        assert!(
            entries.len() == 1 || entries.len() == 2,
            "multi-index dimension must be 1 or 2"
        );
        MultiIndex(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// |j| = sum of the entries.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.total() == 0
    }

    /// All multi-indices of the given dimension with |j| <= bound,
    /// ordered by |j| and then lexicographically.
    pub fn all_up_to(dim: usize, bound: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        match dim {
            1 => {
                for a in 0..=bound {
                    out.push(MultiIndex::new(vec![a]));
                }
            }
            2 => {
                for total in 0..=bound {
                    for a in 0..=total {
                        out.push(MultiIndex::new(vec![a, total - a]));
                    }
                }
            }
            _ => panic!("multi-index dimension must be 1 or 2"),
        }
        out
    }
}

/// ord_p(n!) via Legendre's formula.
pub fn legendre_factorial_valuation(n: u32, p: u64) -> u32 {
    let mut acc = 0u32;
    let mut q = p;
    while (n as u64) >= q {
        acc += (n as u64 / q) as u32;
        q *= p;
    }
    acc
}

/// ord_p(p^{|j|} / j!), computed exactly. Equals |j| whenever |j| <= p-1.
pub fn ord_factorial_ratio(j: &MultiIndex, p: u64) -> u32 {
    let ord_fact: u32 = j.entries().iter().map(|&e| legendre_factorial_valuation(e, p)).sum();
    j.total() - ord_fact
}

/// (j!)^{-1} mod p. Every entry must be < p.
pub fn factorial_inverse(j: &MultiIndex, p: u64) -> Result<PadicScalar> {
    let mut acc = PadicScalar::one(p, 1);
    for &e in j.entries() {
        if e as u64 >= p {
            return Err(Error::FactorialNotInvertible { entry: e, p });
        }
        for k in 2..=e as u64 {
            acc = acc.mul(&PadicScalar::new(p, 1, k));
        }
    }
    acc.inverse()
}

/// The unit part j!/p^{ord_p(j!)} as a residue at the requested precision.
pub fn factorial_unit_part(j: &MultiIndex, p: u64, precision: u32) -> PadicScalar {
    let md = pow_u64(p, precision) as u128;
    let mut acc: u128 = 1;
    for &e in j.entries() {
        for k in 2..=e as u64 {
            let mut k = k as u128;
            while k % p as u128 == 0 {
                k /= p as u128;
            }
            acc = acc * k % md;
            // strip p factors that appear across the running product
        }
    }
    // The loop above strips p from each factor individually, which is the
    // complete p-part since valuations add over the product.
    PadicScalar::new(p, precision, acc as u64)
}
