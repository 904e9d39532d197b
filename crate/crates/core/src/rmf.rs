//! Seeded random multiplicative functions.
//!
//! Each prime gets its value from a counter-mode PRF (ChaCha8) keyed by the
//! assignment seed and addressed by the prime's index, so any α(p) can be
//! regenerated on demand and bulk generation is a sequential keystream read.
//!
//! Phases are stored in 32-bit fixed point: α(p) = e(φ(p)) with
//! φ(p) = k/2³² for a uniform `k: u32`. Complete multiplicativity then reduces
//! to wrapping integer addition of phases, which is exact.

use crate::primes::FactorTable;
use crate::{Complex64, Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

const WORDS_PER_PRIME: u128 = 4;
const TURN: f64 = 1.0 / 4_294_967_296.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Steinhaus,
    GaussianAnalog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Twist {
    One,
    Moebius,
    MoebiusSquared,
}

impl Twist {
    /// f(p^k).
    pub fn at_prime_power(self, k: u32) -> f64 {
        match (self, k) {
            (_, 0) => 1.0,
            (Twist::One, _) => 1.0,
            (Twist::Moebius, 1) => -1.0,
            (Twist::MoebiusSquared, 1) => 1.0,
            _ => 0.0,
        }
    }

    /// f(n) from a factorization.
    pub fn at(self, factors: &[(u64, u32)]) -> f64 {
        factors.iter().map(|&(_, e)| self.at_prime_power(e)).product()
    }
}

/// Value of α at one prime: modulus (1 for Steinhaus) and fixed-point phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimeValue {
    pub phase: u32,
    pub modulus: f64,
}

impl PrimeValue {
    pub fn turns(&self) -> f64 {
        self.phase as f64 * TURN
    }

    pub fn complex(&self) -> Complex64 {
        Complex64::from_polar(self.modulus, TAU * self.turns())
    }
}

pub fn phase_to_turns(phase: u32) -> f64 {
    phase as f64 * TURN
}

/// Rounds a phase in turns to the fixed-point lattice.
pub fn turns_to_phase(turns: f64) -> u32 {
    let f = turns - turns.floor();
    ((f * 4_294_967_296.0).round() as u64 & 0xffff_ffff) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssignment {
    pub model: Model,
    pub seed: u64,
    /// `(threshold, seed)`: primes `>= threshold` draw from `seed` instead.
    /// Later entries take precedence.
    reseeds: Vec<(u64, u64)>,
    /// Explicit per-prime phases, taking precedence over everything else.
    overrides: Vec<(u64, u32)>,
}

impl PhaseAssignment {
    pub fn new(model: Model, seed: u64) -> Self {
        PhaseAssignment { model, seed, reseeds: Vec::new(), overrides: Vec::new() }
    }

    pub fn steinhaus(seed: u64) -> Self {
        Self::new(Model::Steinhaus, seed)
    }

    /// Keeps α(p) for `p < threshold` and resamples every larger prime.
    pub fn resample_from(&self, threshold: u64, seed: u64) -> Self {
        let mut out = self.clone();
        out.reseeds.push((threshold, seed));
        out
    }

    /// Replaces the phase of a single prime.
    pub fn with_phase(&self, p: u64, phase: u32) -> Self {
        let mut out = self.clone();
        out.overrides.retain(|&(q, _)| q != p);
        out.overrides.push((p, phase));
        out
    }

    fn seed_for(&self, p: u64) -> u64 {
        self.reseeds
            .iter()
            .rev()
            .find(|&&(thr, _)| p >= thr)
            .map(|&(_, s)| s)
            .unwrap_or(self.seed)
    }

    fn override_for(&self, p: u64) -> Option<u32> {
        self.overrides.iter().find(|&&(q, _)| q == p).map(|&(_, ph)| ph)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> PrimeValue {
        let phase = rng.next_u32();
        let hi = rng.next_u32() as u64;
        let lo = rng.next_u32() as u64;
        let _ = rng.next_u32();
        match self.model {
            Model::Steinhaus => PrimeValue { phase, modulus: 1.0 },
            Model::GaussianAnalog => {
                // |z|^2 ~ Exp(1) with an independent uniform angle gives a
                // standard complex Gaussian; u lies in (0, 1].
                let bits = ((hi << 32) | lo) >> 11;
                let u = (bits as f64 + 1.0) / 9_007_199_254_740_992.0;
                PrimeValue { phase, modulus: (-u.ln()).sqrt() }
            }
        }
    }

    /// α at the prime with zero-based index `index` in the prime list.
    pub fn value_at_index(&self, p: u64, index: usize) -> PrimeValue {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_for(p));
        rng.set_word_pos(WORDS_PER_PRIME * index as u128);
        let mut v = self.draw(&mut rng);
        if let Some(ph) = self.override_for(p) {
            v.phase = ph;
        }
        v
    }

    /// α(p), looking up the prime index in `table`.
    pub fn value(&self, table: &FactorTable, p: u64) -> Result<PrimeValue> {
        let idx = table
            .prime_index(p)
            .ok_or_else(|| Error::InvalidArgument(format!("{p} is not a tabulated prime")))?;
        Ok(self.value_at_index(p, idx))
    }

    /// Values for an initial segment of the prime list, by sequential keystream
    /// reads. `primes` must be `table.primes()[..len]`.
    pub fn values_for_prefix(&self, primes: &[u32]) -> Vec<PrimeValue> {
        let mut out = Vec::with_capacity(primes.len());
        let mut i = 0usize;
        while i < primes.len() {
            let seed = self.seed_for(primes[i] as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_word_pos(WORDS_PER_PRIME * i as u128);
            while i < primes.len() && self.seed_for(primes[i] as u64) == seed {
                out.push(self.draw(&mut rng));
                i += 1;
            }
        }
        for &(p, ph) in &self.overrides {
            if let Ok(k) = primes.binary_search(&(p as u32)) {
                out[k].phase = ph;
            }
        }
        out
    }

    /// α(n) for `1 <= n <= table.limit()`.
    pub fn alpha(&self, table: &FactorTable, n: u64) -> Result<Complex64> {
        let factors = table.factorize(n)?;
        let mut phase = 0u32;
        let mut modulus = 1.0;
        for (p, e) in factors {
            let v = self.value(table, p)?;
            phase = phase.wrapping_add(v.phase.wrapping_mul(e));
            modulus *= v.modulus.powi(e as i32);
        }
        Ok(Complex64::from_polar(modulus, TAU * phase_to_turns(phase)))
    }

    /// f(n)α(n).
    pub fn twisted_alpha(&self, table: &FactorTable, twist: Twist, n: u64) -> Result<Complex64> {
        let f = twist.at(&table.factorize(n)?);
        if f == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.alpha(table, n)? * f)
    }
}

/// Seed of trial `index` in an ensemble rooted at `base`.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Fixed-point phases of α(n) for all `n <= n_max` (Steinhaus only).
/// Entry 0 is unused.
pub fn phase_table(assign: &PhaseAssignment, table: &FactorTable, n_max: u64) -> Result<Vec<u32>> {
    if assign.model != Model::Steinhaus {
        return Err(Error::Unsupported("bulk phase table needs the Steinhaus model".into()));
    }
    if n_max > table.limit() {
        return Err(Error::OutOfRange { n: n_max, limit: table.limit() });
    }
    let len = n_max as usize + 1;
    let primes = table.primes_upto(n_max as f64);
    let values = assign.values_for_prefix(primes);
    let mut ph = vec![0u32; len.max(2)];
    for (&p, v) in primes.iter().zip(&values) {
        ph[p as usize] = v.phase;
    }
    for i in 2..len {
        let si = table.spf_unchecked(i);
        let base = ph[i];
        for &p in primes {
            let m = i * p as usize;
            if p > si || m >= len {
                break;
            }
            ph[m] = ph[p as usize].wrapping_add(base);
        }
    }
    ph.truncate(len);
    Ok(ph)
}

/// Exact e(k/2³²) via two 2¹⁶-entry tables.
pub struct CisTable {
    hi: Vec<Complex64>,
    lo: Vec<Complex64>,
}

impl Default for CisTable {
    fn default() -> Self {
        Self::new()
    }
}

impl CisTable {
    pub fn new() -> Self {
        let hi = (0..65536u32)
            .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / 65536.0))
            .collect();
        let lo = (0..65536u32)
            .map(|j| Complex64::from_polar(1.0, TAU * j as f64 * TURN))
            .collect();
        CisTable { hi, lo }
    }

    #[inline]
    pub fn cis(&self, phase: u32) -> Complex64 {
        self.hi[(phase >> 16) as usize] * self.lo[(phase & 0xffff) as usize]
    }

    /// Shared instance.
    pub fn global() -> &'static CisTable {
        use std::sync::OnceLock;
        static T: OnceLock<CisTable> = OnceLock::new();
        T.get_or_init(CisTable::new)
    }
}

/// `sum_{n <= x} α(n)` at each checkpoint `x` (increasing, within the table).
pub fn partial_sums(phases: &[u32], checkpoints: &[u64]) -> Vec<Complex64> {
    let cis = CisTable::global();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc = Complex64::new(0.0, 0.0);
    let mut n = 1usize;
    for &x in checkpoints {
        let x = x as usize;
        while n <= x {
            acc += cis.cis(phases[n]);
            n += 1;
        }
        out.push(acc);
    }
    out
}

/// Monte Carlo estimate of E[α(n) conj α(m)] with its standard error.
pub fn orthogonality_mc(
    model: Model,
    base_seed: u64,
    table: &FactorTable,
    n: u64,
    m: u64,
    trials: usize,
) -> Result<(Complex64, f64)> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let mut samples = Vec::with_capacity(trials);
    for j in 0..trials {
        let a = PhaseAssignment::new(model, trial_seed(base_seed, j as u64));
        samples.push(a.alpha(table, n)? * a.alpha(table, m)?.conj());
    }
    let k = trials as f64;
    let mean = samples.iter().sum::<Complex64>() / k;
    let var = if trials > 1 {
        samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / k).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::build_factor_table;
    use proptest::prelude::*;

    fn table() -> &'static FactorTable {
        use std::sync::OnceLock;
        static T: OnceLock<FactorTable> = OnceLock::new();
        T.get_or_init(|| build_factor_table(100_000).unwrap())
    }

    #[test]
    fn alpha_basics() {
        let t = table();
        let a = PhaseAssignment::steinhaus(7);
        assert_eq!(a.alpha(t, 1).unwrap(), Complex64::new(1.0, 0.0));
        let a3 = a.alpha(t, 3).unwrap();
        let a9 = a.alpha(t, 9).unwrap();
        assert!((a9 - a3 * a3).norm() < 1e-14);
        for n in 1..2000 {
            assert!((a.alpha(t, n).unwrap().norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn twisted_values() {
        let t = table();
        let a = PhaseAssignment::steinhaus(3);
        assert_eq!(a.twisted_alpha(t, Twist::Moebius, 4).unwrap(), Complex64::new(0.0, 0.0));
        assert!((a.twisted_alpha(t, Twist::Moebius, 6).unwrap() - a.alpha(t, 6).unwrap()).norm() < 1e-15);
        assert!((a.twisted_alpha(t, Twist::Moebius, 30).unwrap() + a.alpha(t, 30).unwrap()).norm() < 1e-15);
        assert_eq!(a.twisted_alpha(t, Twist::MoebiusSquared, 12).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(a.twisted_alpha(t, Twist::One, 12).unwrap(), a.alpha(t, 12).unwrap());
    }

    #[test]
    fn deterministic_and_random_access_matches_bulk() {
        let t = table();
        let a = PhaseAssignment::steinhaus(11);
        let b = PhaseAssignment::steinhaus(11);
        let primes = t.primes_upto(5000.0);
        let bulk = a.values_for_prefix(primes);
        for (i, &p) in primes.iter().enumerate() {
            assert_eq!(bulk[i], b.value(t, p as u64).unwrap());
        }
    }

    #[test]
    fn resampling_keeps_small_primes() {
        let t = table();
        let a = PhaseAssignment::steinhaus(5);
        let r = a.resample_from(100, 999);
        for &p in t.primes_upto(1000.0) {
            let (va, vr) = (a.value(t, p as u64).unwrap(), r.value(t, p as u64).unwrap());
            if p < 100 {
                assert_eq!(va, vr);
            } else {
                assert_ne!(va.phase, vr.phase);
            }
        }
        let bulk = r.values_for_prefix(t.primes_upto(1000.0));
        for (i, &p) in t.primes_upto(1000.0).iter().enumerate() {
            assert_eq!(bulk[i], r.value(t, p as u64).unwrap());
        }
        let o = a.with_phase(7, 12345);
        assert_eq!(o.value(t, 7).unwrap().phase, 12345);
        assert_eq!(o.values_for_prefix(t.primes_upto(10.0))[3].phase, 12345);
    }

    #[test]
    fn phase_table_matches_pointwise_alpha() {
        let t = table();
        let a = PhaseAssignment::steinhaus(21);
        let ph = phase_table(&a, t, 20_000).unwrap();
        let cis = CisTable::new();
        for n in 1..=20_000u64 {
            let z = cis.cis(ph[n as usize]);
            assert!((z - a.alpha(t, n).unwrap()).norm() < 1e-13, "n={n}");
        }
        let sums = partial_sums(&ph, &[10, 20_000]);
        let direct: Complex64 = (1..=10).map(|n| a.alpha(t, n).unwrap()).sum();
        assert!((sums[0] - direct).norm() < 1e-12);
    }

    #[test]
    fn cis_table_is_exact() {
        let cis = CisTable::new();
        for &k in &[0u32, 1, 65535, 65536, 0x8000_0000, 0xdead_beef, u32::MAX] {
            let z = Complex64::from_polar(1.0, TAU * phase_to_turns(k));
            assert!((cis.cis(k) - z).norm() < 2e-15);
        }
    }

    #[test]
    fn orthogonality() {
        let t = table();
        let (e, se) = orthogonality_mc(Model::Steinhaus, 1, t, 5, 5, 100).unwrap();
        assert!((e - 1.0).norm() < 1e-12 && se < 1e-12);
        let (e, _) = orthogonality_mc(Model::Steinhaus, 1, t, 6, 6, 10).unwrap();
        assert!((e - 1.0).norm() < 1e-12);
        let (e, se) = orthogonality_mc(Model::Steinhaus, 1, t, 2, 3, 10_000).unwrap();
        assert!(e.norm() < 3.0 * se * std::f64::consts::SQRT_2, "{e} se {se}");
    }

    #[test]
    fn gaussian_second_moment() {
        let t = table();
        let primes = t.primes_upto(100.0);
        let trials = 4000;
        let mut acc = vec![0.0; primes.len()];
        for j in 0..trials {
            let a = PhaseAssignment::new(Model::GaussianAnalog, trial_seed(9, j));
            for (k, v) in a.values_for_prefix(primes).iter().enumerate() {
                acc[k] += v.modulus * v.modulus;
            }
        }
        // |z|^2 ~ Exp(1): sd 1, so the mean has SE 1/sqrt(trials).
        let se = 1.0 / (trials as f64).sqrt();
        for m in acc {
            assert!((m / trials as f64 - 1.0).abs() < 4.0 * se);
        }
    }

    proptest! {
        #[test]
        fn multiplicative_on_coprime_pairs(m in 1u64..300, n in 1u64..300, seed in any::<u64>()) {
            let t = table();
            prop_assume!(gcd(m, n) == 1);
            let a = PhaseAssignment::steinhaus(seed);
            let lhs = a.alpha(t, m * n).unwrap();
            let rhs = a.alpha(t, m).unwrap() * a.alpha(t, n).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-13);
        }

        #[test]
        fn turns_round_trip(k in any::<u32>()) {
            prop_assert_eq!(turns_to_phase(phase_to_turns(k)), k);
        }
    }

    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
}
