//! Bernstein tails, nested dyadic nets on a cube and the chaining functionals
//! γ₁, γ₂ that control suprema of processes with mixed sub-Gaussian and
//! sub-exponential increments.

use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `2 exp(-x² / (2(v + c x)))`.
pub fn bernstein_tail(v: f64, c: f64, x: f64) -> f64 {
    2.0 * (-x * x / (2.0 * (v + c * x))).exp()
}

/// `max(5C, e²) exp(-x² / (16γ₂² + 8γ₁x))`. With γ₁ = γ₂ = 0 the set has zero
/// diameter: the bound is `max(5C, e²)` at x = 0 and 0 beyond.
pub fn chaining_tail(gamma1: f64, gamma2: f64, c: f64, x: f64) -> f64 {
    let lead = (5.0 * c).max(std::f64::consts::E.powi(2));
    let den = 16.0 * gamma2 * gamma2 + 8.0 * gamma1 * x;
    if den == 0.0 {
        return if x == 0.0 { lead } else { 0.0 };
    }
    lead * (-x * x / den).exp()
}

/// Nested dyadic nets on `[a, b]³`: `T_0 = T_1 = {(a, a, a)}` and, for n ≥ 2,
/// the product grid with `N_n = 2^{2^{n-2}}` equally spaced points per axis,
/// endpoints included. Since `N_{n+1} - 1 = (N_n - 1)(N_n + 1)` the levels are
/// nested, and `|T_n| = 2^{3·2^{n-2}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicSequence {
    pub a: f64,
    pub b: f64,
}

pub const DIM: usize = 3;

impl DyadicSequence {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(b >= a) {
            return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
        }
        Ok(DyadicSequence { a, b })
    }

    /// log₂ of the number of points per axis at level `n`.
    pub fn log2_axis_points(n: u32) -> u64 {
        if n < 2 {
            0
        } else {
            1u64 << (n - 2)
        }
    }

    /// log₂ |T_n|.
    pub fn log2_cardinality(n: u32) -> u64 {
        DIM as u64 * Self::log2_axis_points(n)
    }

    fn axis_project(&self, n: u32, t: f64) -> f64 {
        if n < 2 || self.b == self.a {
            return self.a;
        }
        let segments = (Self::log2_axis_points(n) as f64).exp2() - 1.0;
        let h = (self.b - self.a) / segments;
        let s = ((t - self.a) / h).clamp(0.0, segments);
        let lo = s.floor();
        // Ties go to the smaller index.
        let j = if s - lo > 0.5 { lo + 1.0 } else { lo };
        self.a + j * h
    }

    /// π_n(t): the nearest point of T_n, per axis.
    pub fn project(&self, n: u32, t: [f64; DIM]) -> [f64; DIM] {
        let mut out = [0.0; DIM];
        for (o, &x) in out.iter_mut().zip(&t) {
            *o = self.axis_project(n, x);
        }
        out
    }

    /// `|T_n|² <= |T_{n+1}|`, `|T_n| <= 2^{2^n}`, and T_n ⊆ T_{n+1}.
    pub fn is_admissible_at(&self, n: u32) -> bool {
        let c = Self::log2_cardinality(n);
        let c1 = Self::log2_cardinality(n + 1);
        let size_ok = (n >= 63 || c <= 1u64 << n) && 2 * c <= c1;
        let nested = if n < 2 {
            true
        } else {
            let m = Self::log2_axis_points(n);
            let m1 = Self::log2_axis_points(n + 1);
            // (2^{m1} - 1) / (2^m - 1) = 2^m + 1 exactly when m1 = 2m.
            m1 == 2 * m
        };
        size_ok && nested
    }
}

fn distance(a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// γ_k over the cube: sup over an `m³` lattice of
/// `∑_{n=1}^{n_max} 2^{n/k} K |π_n(t) - π_{n-1}(t)|`.
pub fn gamma_functional(seq: &DyadicSequence, scale_k: f64, k: u32, n_max: u32, lattice: usize) -> f64 {
    let m = lattice.max(1);
    let coord = |i: usize| {
        if m == 1 {
            seq.a
        } else {
            seq.a + (seq.b - seq.a) * i as f64 / (m - 1) as f64
        }
    };
    let weights: Vec<f64> = (1..=n_max).map(|n| (n as f64 / k as f64).exp2()).collect();
    (0..m * m * m)
        .into_par_iter()
        .map(|idx| {
            let t = [coord(idx / (m * m)), coord((idx / m) % m), coord(idx % m)];
            let mut prev = seq.project(0, t);
            let mut s = 0.0;
            for n in 1..=n_max {
                let cur = seq.project(n, t);
                s += weights[n as usize - 1] * distance(&cur, &prev);
                prev = cur;
            }
            scale_k * s
        })
        .reduce(|| 0.0, f64::max)
}

/// Smallest scale D such that `4 exp(-min(x²/D², x/D)) >= P̂(x)` at every
/// sampled threshold, given the empirical exceedance fractions.
pub fn required_scale(thresholds: &[f64], exceedance: &[f64]) -> f64 {
    thresholds
        .iter()
        .zip(exceedance)
        .filter(|&(_, &p)| p > 0.0)
        .map(|(&x, &p)| x / (4.0 / p).ln())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tail_formulas() {
        assert_eq!(bernstein_tail(1.0, 1.0, 0.0), 2.0);
        assert!(bernstein_tail(1.0, 1.0, 2.0) < bernstein_tail(1.0, 1.0, 1.0));
        assert!(bernstein_tail(2.0, 1.0, 1.0) > bernstein_tail(1.0, 1.0, 1.0));
        assert!(bernstein_tail(1.0, 2.0, 1.0) > bernstein_tail(1.0, 1.0, 1.0));
        assert_eq!(chaining_tail(1.0, 1.0, 4.0, 0.0), 20.0);
        assert_eq!(chaining_tail(1.0, 1.0, 1.0, 0.0), std::f64::consts::E.powi(2));
        assert_eq!(chaining_tail(0.0, 0.0, 4.0, 0.0), 20.0);
        assert_eq!(chaining_tail(0.0, 0.0, 4.0, 0.1), 0.0);
    }

    #[test]
    fn bernstein_dominates_rademacher_sums() {
        // n = 9984 signs per trial, 10^5 trials.
        let words = 156;
        let n = (words * 64) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 100_000;
        let sums: Vec<f64> = (0..trials)
            .map(|_| {
                let ones: u32 = (0..words).map(|_| rng.next_u64().count_ones()).sum();
                2.0 * ones as f64 - n
            })
            .collect();
        let (v, c) = (n, 1.0 / 3.0);
        for m in [1.0, 2.0, 3.0] {
            let x = m * v.sqrt();
            let obs = sums.iter().filter(|s| s.abs() > x).count() as f64 / trials as f64;
            assert!(obs <= bernstein_tail(v, c, x), "x={x}: {obs}");
        }
    }

    #[test]
    fn admissibility() {
        let s = DyadicSequence::new(-0.5, 0.5).unwrap();
        assert_eq!(DyadicSequence::log2_cardinality(0), 0);
        assert_eq!(DyadicSequence::log2_cardinality(1), 0);
        assert_eq!(DyadicSequence::log2_cardinality(2), 3);
        for n in 0..8 {
            assert!(s.is_admissible_at(n), "level {n}");
        }
        // Explicit nesting at small levels.
        for n in 2..5u32 {
            let pts = (DyadicSequence::log2_axis_points(n) as f64).exp2() as usize;
            for j in 0..pts {
                let x = s.a + j as f64 / (pts - 1) as f64;
                assert!((s.axis_project(n + 1, x) - x).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn projections_converge_and_break_ties_low() {
        let s = DyadicSequence::new(0.0, 1.0).unwrap();
        let t = [0.123, 0.987, 0.5];
        assert_eq!(s.project(0, t), [0.0; 3]);
        assert_eq!(s.project(1, t), [0.0; 3]);
        assert_eq!(s.project(2, t), [0.0, 1.0, 0.0]);
        let mut prev = f64::INFINITY;
        for n in 2..9 {
            let d = distance(&s.project(n, t), &t);
            assert!(d <= prev);
            prev = d;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn gamma_scaling() {
        let s = DyadicSequence::new(0.0, 1.0).unwrap();
        let g = gamma_functional(&s, 1.0, 2, 6, 16);
        assert!(g > 0.0);
        assert!((gamma_functional(&s, 2.0, 2, 6, 16) - 2.0 * g).abs() < 1e-12 * g);
        let point = DyadicSequence::new(0.3, 0.3).unwrap();
        assert_eq!(gamma_functional(&point, 1.0, 1, 6, 16), 0.0);
        let mut prev = 0.0;
        for n_max in 1..8 {
            let v = gamma_functional(&s, 1.0, 1, n_max, 16);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn gamma_linear_in_side_and_scale() {
        for k in [1, 2] {
            let base = gamma_functional(&DyadicSequence::new(0.0, 1.0).unwrap(), 1.0, k, 7, 16);
            for &len in &[1.0, 2.0, 4.0] {
                for &k_scale in &[0.1, 1.0, 10.0] {
                    let s = DyadicSequence::new(0.0, len).unwrap();
                    let c = gamma_functional(&s, k_scale, k, 7, 16) / (k_scale * len);
                    assert!((c / base - 1.0).abs() < 1e-9, "k={k} len={len} K={k_scale}");
                }
            }
        }
    }

    #[test]
    fn required_scale_makes_bound_hold() {
        let xs = [0.5, 1.0, 2.0];
        let ps = [0.3, 0.05, 0.0];
        let d = required_scale(&xs, &ps);
        for (&x, &p) in xs.iter().zip(&ps) {
            let bound = 4.0 * (-(x * x / (d * d)).min(x / d)).exp();
            assert!(bound >= p * (1.0 - 1e-12));
        }
    }

    proptest! {
        #[test]
        fn projection_is_on_grid_and_close(x in 0.0f64..1.0, n in 2u32..7) {
            let s = DyadicSequence::new(0.0, 1.0).unwrap();
            let pts = (DyadicSequence::log2_axis_points(n) as f64).exp2() - 1.0;
            let p = s.axis_project(n, x);
            prop_assert!((p * pts - (p * pts).round()).abs() < 1e-6);
            prop_assert!((p - x).abs() <= 0.5 / pts + 1e-12);
        }
    }
}
