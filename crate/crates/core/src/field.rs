//! Prime-field arithmetic.
//!
//! A [`PrimeField`] is a small `Copy` context holding the modulus. Elements
//! carry their field so that mixing contexts is caught at runtime instead of
//! silently producing garbage. Matrix code works on raw reduced `u64` values
//! through the `*_raw` helpers and checks the context once per operation.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is too large (must be below 2^63)")]
    ModulusTooLarge(u64),
    #[error("mixed field contexts: modulus {left} vs {right}")]
    ContextMismatch { left: u64, right: u64 },
    #[error("division by zero in F_{0}")]
    DivisionByZero(u64),
}

/// Exclusive upper bound on supported moduli; keeps `a + b` inside a `u64`.
pub const MODULUS_LIMIT: u64 = 1 << 63;

/// An immutable prime-field context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    modulus: u64,
}

impl PrimeField {
    pub fn new(modulus: u64) -> Result<Self, FieldError> {
        if modulus >= MODULUS_LIMIT {
            return Err(FieldError::ModulusTooLarge(modulus));
        }
        if !is_prime(modulus) {
            return Err(FieldError::NotPrime(modulus));
        }
        Ok(Self { modulus })
    }

    /// The largest prime below 2^62, located and verified on first use.
    pub fn production() -> Self {
        static PRODUCTION: OnceLock<PrimeField> = OnceLock::new();
        *PRODUCTION.get_or_init(|| {
            let mut candidate = (1u64 << 62) - 1;
            while !is_prime(candidate) {
                candidate -= 2;
            }
            PrimeField { modulus: candidate }
        })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Number of elements, `q`.
    #[inline]
    pub fn order(&self) -> u64 {
        self.modulus
    }

    /// Wraps `value`, reducing it modulo `q`.
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.modulus,
            field: *self,
        }
    }

    pub fn from_i64(&self, value: i64) -> FieldElement {
        let q = self.modulus as i128;
        let v = (value as i128).rem_euclid(q) as u64;
        FieldElement {
            value: v,
            field: *self,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    /// Draws a uniformly distributed element. The range sampler in `rand`
    /// rejects the biased tail, so every residue has probability exactly 1/q.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement {
            value: self.sample_raw(rng),
            field: *self,
        }
    }

    #[inline]
    pub fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.modulus)
    }

    /// Iterates over every element in ascending order.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.modulus).map(move |v| FieldElement {
            value: v,
            field: *self,
        })
    }

    pub fn ensure_same(&self, other: &PrimeField) -> Result<(), FieldError> {
        if self.modulus == other.modulus {
            Ok(())
        } else {
            Err(FieldError::ContextMismatch {
                left: self.modulus,
                right: other.modulus,
            })
        }
    }

    #[inline]
    pub fn reduce(&self, value: u64) -> u64 {
        value % self.modulus
    }

    #[inline]
    pub fn add_raw(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.modulus && b < self.modulus);
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn sub_raw(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.modulus && b < self.modulus);
        if a >= b {
            a - b
        } else {
            self.modulus - (b - a)
        }
    }

    #[inline]
    pub fn neg_raw(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    pub fn mul_raw(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    /// Square-and-multiply; `0^0 = 1`.
    pub fn pow_raw(&self, base: u64, mut exp: u64) -> u64 {
        let mut result = 1 % self.modulus;
        let mut b = base % self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                result = self.mul_raw(result, b);
            }
            b = self.mul_raw(b, b);
            exp >>= 1;
        }
        result
    }

    /// Inverse via Fermat's little theorem, `a^(q-2)`.
    pub fn inv_raw(&self, a: u64) -> Result<u64, FieldError> {
        if a.is_multiple_of(self.modulus) {
            return Err(FieldError::DivisionByZero(self.modulus));
        }
        Ok(self.pow_raw(a, self.modulus - 2))
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.modulus)
    }
}

/// An element of a [`PrimeField`]; `value` is always in `[0, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    field: PrimeField,
}

impl FieldElement {
    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn with(&self, value: u64) -> Self {
        Self {
            value,
            field: self.field,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Self) -> Result<Self, FieldError> {
        self.field.ensure_same(&other.field)?;
        Ok(self.with(self.field.add_raw(self.value, other.value)))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: Self) -> Result<Self, FieldError> {
        self.field.ensure_same(&other.field)?;
        Ok(self.with(self.field.sub_raw(self.value, other.value)))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Self) -> Result<Self, FieldError> {
        self.field.ensure_same(&other.field)?;
        Ok(self.with(self.field.mul_raw(self.value, other.value)))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Self {
        self.with(self.field.neg_raw(self.value))
    }

    pub fn inv(self) -> Result<Self, FieldError> {
        Ok(self.with(self.field.inv_raw(self.value)?))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, other: Self) -> Result<Self, FieldError> {
        self.mul(other.inv()?)
    }

    pub fn pow(self, exp: u64) -> Self {
        self.with(self.field.pow_raw(self.value, exp))
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut result = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_mod(result, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    result
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn f(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    #[test]
    fn rejects_composites_and_small_values() {
        for q in [0u64, 1, 4, 9, 91, 561, 1 << 40] {
            assert_eq!(PrimeField::new(q), Err(FieldError::NotPrime(q)));
        }
        assert_eq!(
            PrimeField::new(MODULUS_LIMIT + 1),
            Err(FieldError::ModulusTooLarge(MODULUS_LIMIT + 1))
        );
    }

    #[test]
    fn primality_matches_trial_division() {
        for n in 0u64..5000 {
            let trial = n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
            assert_eq!(is_prime(n), trial, "n = {n}");
        }
        // Strong pseudoprimes to several small bases.
        assert!(!is_prime(3_215_031_751));
        assert!(!is_prime(3_825_123_056_546_413_051));
    }

    #[test]
    fn production_modulus_is_largest_prime_below_2_62() {
        let p = PrimeField::production().modulus();
        assert_eq!(p, 4_611_686_018_427_387_847);
        assert!(((p + 1)..(1u64 << 62)).all(|n| !is_prime(n)));
    }

    #[test]
    fn add_examples() {
        let q7 = f(7);
        assert_eq!(q7.element(3).add(q7.element(5)).unwrap().value(), 1);
        for x in q7.elements() {
            assert_eq!(x.add(q7.zero()).unwrap(), x);
        }
        let q97 = f(97);
        let expected = (BigUint::from(96u32) + BigUint::from(96u32)) % BigUint::from(97u32);
        assert_eq!(
            BigUint::from(q97.element(96).add(q97.element(96)).unwrap().value()),
            expected
        );
        assert_eq!(expected, BigUint::from(95u32));
    }

    #[test]
    fn mul_examples() {
        let q7 = f(7);
        assert_eq!(q7.element(3).mul(q7.element(5)).unwrap().value(), 1);
        for x in q7.elements() {
            assert_eq!(x.mul(q7.one()).unwrap(), x);
        }
        let q101 = f(101);
        let expected = (BigUint::from(100u32) * BigUint::from(100u32)) % BigUint::from(101u32);
        assert_eq!(expected, BigUint::from(1u32));
        assert_eq!(q101.element(100).mul(q101.element(100)).unwrap().value(), 1);
    }

    #[test]
    fn mismatched_contexts_error() {
        let a = f(7).element(3);
        let b = f(11).element(3);
        let err = FieldError::ContextMismatch { left: 7, right: 11 };
        assert_eq!(a.add(b), Err(err.clone()));
        assert_eq!(a.mul(b), Err(err.clone()));
        assert_eq!(a.sub(b), Err(err));
    }

    #[test]
    fn inverse_examples() {
        let q7 = f(7);
        assert_eq!(q7.one().inv().unwrap().value(), 1);
        assert_eq!(q7.element(3).inv().unwrap().value(), 5);
        assert_eq!(q7.zero().inv(), Err(FieldError::DivisionByZero(7)));
        let q97 = f(97);
        let mut seen = std::collections::HashSet::new();
        for x in q97.elements().skip(1) {
            let y = x.inv().unwrap();
            assert_eq!(x.mul(y).unwrap().value(), 1);
            assert!(seen.insert(y.value()), "inverse not injective");
        }
        assert_eq!(seen.len(), 96);
    }

    #[test]
    fn pow_examples() {
        let q7 = f(7);
        assert_eq!(q7.element(2).pow(3).value(), 1);
        for x in q7.elements() {
            assert_eq!(x.pow(0).value(), 1);
        }
        let q13 = f(13);
        for g in q13.elements() {
            let mut naive = q13.one();
            for e in 0..=30u64 {
                assert_eq!(g.pow(e), naive, "g={g} e={e}");
                naive = naive.mul(g).unwrap();
            }
        }
    }

    #[test]
    fn binary_field_sampling_is_balanced() {
        let q2 = f(2);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| q2.sample_uniform(&mut rng).value() == 1)
            .count();
        let freq = ones as f64 / draws as f64;
        assert!((0.49..=0.51).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn sampling_passes_chi_square_at_one_percent() {
        let q5 = f(5);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let draws = 100_000u64;
        let mut counts = [0u64; 5];
        for _ in 0..draws {
            let v = q5.sample_uniform(&mut rng).value();
            assert!(v < 5);
            counts[v as usize] += 1;
        }
        let expected = draws as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // Critical value of chi-square with 4 degrees of freedom at alpha = 0.01.
        assert!(chi2 < 13.2767, "chi2 = {chi2}");
    }

    fn modulus_strategy() -> impl Strategy<Value = u64> {
        prop_oneof![Just(2u64), Just(5), Just(97), Just((1u64 << 31) - 1)]
    }

    fn triple() -> impl Strategy<Value = (u64, u64, u64, u64)> {
        modulus_strategy().prop_flat_map(|q| (Just(q), 0..q, 0..q, 0..q))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn field_axioms_hold((q, a, b, c) in triple()) {
            let fq = f(q);
            let (a, b, c) = (fq.element(a), fq.element(b), fq.element(c));
            prop_assert_eq!(a.add(b)?.add(c)?, a.add(b.add(c)?)?);
            prop_assert_eq!(a.mul(b)?.mul(c)?, a.mul(b.mul(c)?)?);
            prop_assert_eq!(a.add(b)?, b.add(a)?);
            prop_assert_eq!(a.mul(b)?, b.mul(a)?);
            prop_assert_eq!(a.mul(b.add(c)?)?, a.mul(b)?.add(a.mul(c)?)?);
            prop_assert_eq!(a.sub(b)?.add(b)?, a);
            prop_assert_eq!(a.add(a.neg())?, fq.zero());
        }

        #[test]
        fn add_mul_match_bigint((q, a, b, _c) in triple()) {
            let fq = f(q);
            let big_q = BigUint::from(q);
            let sum = (BigUint::from(a) + BigUint::from(b)) % &big_q;
            let prod = (BigUint::from(a) * BigUint::from(b)) % &big_q;
            prop_assert_eq!(BigUint::from(fq.element(a).add(fq.element(b))?.value()), sum);
            prop_assert_eq!(BigUint::from(fq.element(a).mul(fq.element(b))?.value()), prod);
        }

        #[test]
        fn large_modulus_mul_matches_bigint(a in any::<u64>(), b in any::<u64>()) {
            let fq = PrimeField::production();
            let q = BigUint::from(fq.modulus());
            let expected = (BigUint::from(a) * BigUint::from(b)) % &q;
            let got = fq.element(a).mul(fq.element(b))?.value();
            prop_assert_eq!(BigUint::from(got), expected);
            let expected_sum = (BigUint::from(a) % &q + BigUint::from(b) % &q) % &q;
            prop_assert_eq!(BigUint::from(fq.element(a).add(fq.element(b))?.value()), expected_sum);
        }
    }
}
