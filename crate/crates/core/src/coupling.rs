//! Monotone coupling of phases under the exponential tilt, the differences Δ
//! and Δ̃, the residual field 𝒢̃ and the mean-shifted field.
//!
//! The tilted density at p is `d(φ) = exp(κ cos(2πφ + θ)) / I0(κ)` where
//! `κ e^{iθ} = 2 c_p`, `c_p = ∑_j f(p) ε_{y,u_j}(p) p^{-1/2 - i t_j}`. Its CDF has
//! the Fourier–Bessel expansion
//! `D(φ) = φ + ∑_{n≥1} r_n (sin(n(2πφ+θ)) - sin(nθ)) / (πn)`, `r_n = I_n(κ)/I0(κ)`,
//! which is inverted by safeguarded Newton iteration.

use crate::euler::epsilon;
use crate::primes::FactorTable;
use crate::rmf::{PhaseAssignment, Twist};
use crate::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

const INVERSE_TOL: f64 = 1e-13;
const RATIO_CUTOFF: f64 = 1e-18;

/// Shift pair `u`, frequency pair `t` and the cut-off `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub twist: Twist,
    pub y: f64,
    pub u: [f64; 2],
    pub t: [f64; 2],
}

impl CouplingParams {
    pub fn new(twist: Twist, y: f64, u: [f64; 2], t: [f64; 2]) -> Result<Self> {
        if !(y >= 3.0) || u.iter().any(|&v| !(v >= 0.0)) || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("coupling needs y >= 3, u >= 0 (y={y}, u={u:?})")));
        }
        Ok(CouplingParams { twist, y, u, t })
    }

    /// c_p = ∑_j f(p) ε_{y,u_j}(p) p^{-1/2-it_j}.
    pub fn coefficient(&self, p: f64) -> Complex64 {
        let f = self.twist.at_prime_power(1);
        let lp = p.ln();
        (0..2)
            .map(|j| Complex64::from_polar(f * epsilon(p, self.y, self.u[j]) / p.sqrt(), -self.t[j] * lp))
            .sum()
    }

    pub fn density(&self, p: f64) -> TiltedPhaseDensity {
        TiltedPhaseDensity::from_coefficient(self.coefficient(p))
    }
}

/// I_n(κ)/I_0(κ) for n = 1.. until negligible, by the power series of I_n.
fn bessel_ratios(kappa: f64) -> Vec<f64> {
    let series = |n: usize| -> f64 {
        let q = 0.25 * kappa * kappa;
        let mut term = 1.0;
        for k in 1..=n {
            term *= 0.5 * kappa / k as f64;
        }
        let mut sum = term;
        for k in 1..400 {
            term *= q / (k as f64 * (k + n) as f64);
            sum += term;
            if term <= 1e-17 * sum {
                break;
            }
        }
        sum
    };
    let i0 = series(0);
    let mut out = Vec::new();
    for n in 1..200 {
        let r = series(n) / i0;
        if r < RATIO_CUTOFF {
            break;
        }
        out.push(r);
    }
    out
}

/// Density of the tilted phase on [0, 1).
#[derive(Debug, Clone)]
pub struct TiltedPhaseDensity {
    pub kappa: f64,
    pub theta: f64,
    ratios: Vec<f64>,
}

impl TiltedPhaseDensity {
    /// Density proportional to `exp(2 Re(c e(φ)))`.
    pub fn from_coefficient(c: Complex64) -> Self {
        let kappa = 2.0 * c.norm();
        let theta = if kappa > 0.0 { c.arg() } else { 0.0 };
        TiltedPhaseDensity { kappa, theta, ratios: bessel_ratios(kappa) }
    }

    pub fn is_uniform(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn density(&self, phi: f64) -> f64 {
        let z = Complex64::from_polar(1.0, TAU * phi + self.theta);
        let mut w = Complex64::new(1.0, 0.0);
        let mut s = 1.0;
        for r in &self.ratios {
            w *= z;
            s += 2.0 * r * w.re;
        }
        s
    }

    pub fn cdf(&self, phi: f64) -> f64 {
        self.cdf_and_density(phi).0
    }

    fn cdf_and_density(&self, phi: f64) -> (f64, f64) {
        let z = Complex64::from_polar(1.0, TAU * phi + self.theta);
        let z0 = Complex64::from_polar(1.0, self.theta);
        let (mut w, mut w0) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        let (mut c, mut d) = (phi, 1.0);
        for (k, r) in self.ratios.iter().enumerate() {
            w *= z;
            w0 *= z0;
            let n = (k + 1) as f64;
            c += r * (w.im - w0.im) / (PI * n);
            d += 2.0 * r * w.re;
        }
        (c, d)
    }

    /// φ' = D⁻¹(x) for x ∈ [0, 1).
    pub fn coupled_phase(&self, x: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::InvalidArgument(format!("phase {x} outside [0, 1)")));
        }
        if self.is_uniform() || x == 0.0 {
            return Ok(x);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut phi = x;
        for _ in 0..200 {
            let (c, d) = self.cdf_and_density(phi);
            let g = c - x;
            if g.abs() <= INVERSE_TOL * 0.1 {
                return Ok(phi);
            }
            if g > 0.0 {
                hi = phi;
            } else {
                lo = phi;
            }
            let next = phi - g / d;
            phi = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < INVERSE_TOL {
                return Ok(phi);
            }
        }
        Err(Error::QuadratureBudget(format!("CDF inversion stalled at x={x}")))
    }

    /// E[e(φ')] = e^{-iθ} I1(κ)/I0(κ).
    pub fn mean_alpha(&self) -> Complex64 {
        match self.ratios.first() {
            Some(&r1) => Complex64::from_polar(r1, -self.theta),
            None => Complex64::new(0.0, 0.0),
        }
    }
}

/// (Δ, Δ̃) at a prime whose uniform phase is `phi` (in turns).
pub fn delta_at_phase(density: &TiltedPhaseDensity, phi: f64) -> Result<(Complex64, Complex64)> {
    let phi2 = density.coupled_phase(phi)?;
    let delta = Complex64::from_polar(1.0, TAU * phi2) - Complex64::from_polar(1.0, TAU * phi);
    Ok((delta, delta - density.mean_alpha()))
}

/// (Δ(p), Δ̃(p)) for the realization `assign`.
pub fn delta_fields(
    assign: &PhaseAssignment,
    table: &FactorTable,
    params: &CouplingParams,
    p: u64,
) -> Result<(Complex64, Complex64)> {
    if p as f64 > params.y {
        return Err(Error::InvalidArgument(format!("prime {p} exceeds y = {}", params.y)));
    }
    let v = assign.value(table, p)?;
    delta_at_phase(&params.density(p as f64), v.turns())
}

/// 𝒢̃(t0) = 2 Re ∑_{p≤y} f(p) Δ̃(p) p^{-1/2-it0}.
pub fn residual_field(assign: &PhaseAssignment, table: &FactorTable, params: &CouplingParams, t0: f64) -> Result<f64> {
    let primes = table.primes_upto(params.y);
    let values = assign.values_for_prefix(primes);
    let f = params.twist.at_prime_power(1);
    let mut s = 0.0;
    for (&p, v) in primes.iter().zip(&values) {
        let pf = p as f64;
        let (_, dt) = delta_at_phase(&params.density(pf), v.turns())?;
        s += 2.0 * f * (dt * Complex64::from_polar(pf.powf(-0.5), -t0 * pf.ln())).re;
    }
    Ok(s)
}

/// 𝒢̃ on the lattice `points³` of `interval`, indexed `[(i1 * m + i2) * m + i0]`
/// with `t_j = points[i_j]`. Phases are taken from `turns` (one per prime ≤ y).
pub fn residual_lattice(
    table: &FactorTable,
    twist: Twist,
    y: f64,
    u: [f64; 2],
    points: &[f64],
    turns: &[f64],
) -> Result<Vec<f64>> {
    let primes = table.primes_upto(y);
    if turns.len() < primes.len() {
        return Err(Error::InvalidArgument("one phase per prime <= y required".into()));
    }
    let m = points.len();
    let f = twist.at_prime_power(1);
    // p^{-1/2 - i t0} for every prime and t0.
    let basis: Vec<Vec<Complex64>> = primes
        .iter()
        .map(|&p| {
            let pf = p as f64;
            points.iter().map(|&t0| Complex64::from_polar(2.0 * f / pf.sqrt(), -t0 * pf.ln())).collect()
        })
        .collect();
    let mut out = vec![0.0; m * m * m];
    for i1 in 0..m {
        for i2 in 0..m {
            let params = CouplingParams { twist, y, u, t: [points[i1], points[i2]] };
            let slot = &mut out[(i1 * m + i2) * m..(i1 * m + i2 + 1) * m];
            for (k, &p) in primes.iter().enumerate() {
                let (_, dt) = delta_at_phase(&params.density(p as f64), turns[k])?;
                for (s, b) in slot.iter_mut().zip(&basis[k]) {
                    *s += (dt * b).re;
                }
            }
        }
    }
    Ok(out)
}

/// Mean-shifted field 𝒢_{y,0}(t0; E[α']) evaluated exactly, its two-term
/// cosine approximation ∑_j 2 C_y(|t0 - t_j|; ε_{y,u_j}), and the cubic error
/// envelope ∑_j ∑_p |f(p)|³ p^{-3/2} ε_{y,u_j}(p)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanShift {
    pub exact: f64,
    pub leading: f64,
    pub envelope: f64,
}

pub fn mean_shift(table: &FactorTable, params: &CouplingParams, t0: f64) -> MeanShift {
    let f = params.twist.at_prime_power(1);
    let (mut exact, mut leading, mut envelope) = (0.0, 0.0, 0.0);
    for &p in table.primes_upto(params.y) {
        let pf = p as f64;
        let lp = pf.ln();
        let mean = params.density(pf).mean_alpha();
        exact += 2.0 * f * (mean * Complex64::from_polar(pf.powf(-0.5), -t0 * lp)).re;
        for j in 0..2 {
            let e = epsilon(pf, params.y, params.u[j]);
            leading += 2.0 * f * f / pf * ((t0 - params.t[j]).abs() * lp).cos() * e;
            envelope += f.abs().powi(3) * pf.powf(-1.5) * e * e;
        }
    }
    MeanShift { exact, leading, envelope }
}

/// Normalized sizes of the coupling differences at one prime and phase:
/// `|Δ̃| / s`, `|Δ(t) - Δ(t')| / (|t - t'| s log p)` and
/// `|Δ(u) - Δ(u')| / (|u - u'| s / (u1 + u2))` where
/// `s = (u1+u2) |f(p)| log p / (√p log y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingScales {
    pub pointwise: f64,
    pub t_lipschitz: f64,
    pub u_lipschitz: f64,
}

pub fn coupling_scales(params: &CouplingParams, p: u64, phi: f64, dt: f64, du: f64) -> Result<CouplingScales> {
    let pf = p as f64;
    let lp = pf.ln();
    let usum = params.u[0] + params.u[1];
    let s = usum * params.twist.at_prime_power(1).abs() * lp / (pf.sqrt() * params.y.ln());
    if s == 0.0 {
        return Ok(CouplingScales { pointwise: 0.0, t_lipschitz: 0.0, u_lipschitz: 0.0 });
    }
    let (d0, dtil) = delta_at_phase(&params.density(pf), phi)?;
    let mut shifted_t = *params;
    shifted_t.t[0] += dt;
    let (d1, _) = delta_at_phase(&shifted_t.density(pf), phi)?;
    let mut shifted_u = *params;
    shifted_u.u[0] += du;
    let (d2, _) = delta_at_phase(&shifted_u.density(pf), phi)?;
    Ok(CouplingScales {
        pointwise: dtil.norm() / s,
        t_lipschitz: (d1 - d0).norm() / (dt.abs() * s * lp),
        u_lipschitz: (d2 - d0).norm() / (du.abs() * s / usum),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::build_factor_table;
    use crate::quad::{adaptive_simpson, periodic_mean};
    use crate::rmf::trial_seed;
    use crate::stats::ks_one_sample;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table() -> &'static FactorTable {
        use std::sync::OnceLock;
        static T: OnceLock<FactorTable> = OnceLock::new();
        T.get_or_init(|| build_factor_table(20_000).unwrap())
    }

    fn raw_density(d: &TiltedPhaseDensity, phi: f64) -> f64 {
        let i0 = periodic_mean(512, |x| (d.kappa * (TAU * x).cos()).exp());
        (d.kappa * (TAU * phi + d.theta).cos()).exp() / i0
    }

    fn sample_params(rng: &mut ChaCha8Rng) -> (CouplingParams, u64) {
        let y: f64 = [100.0, 1000.0, 10_000.0][rng.gen_range(0..3)];
        let p = *table().primes_upto(y.min(200.0)).get(rng.gen_range(0..20)).unwrap() as u64;
        let params = CouplingParams::new(
            Twist::One,
            y,
            [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)],
            [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        )
        .unwrap();
        (params, p)
    }

    #[test]
    fn zero_shift_is_identity() {
        let params = CouplingParams::new(Twist::One, 1000.0, [0.0, 0.0], [0.1, -0.3]).unwrap();
        let d = params.density(7.0);
        assert!(d.is_uniform());
        for x in [0.0, 0.25, 0.999] {
            assert_eq!(d.coupled_phase(x).unwrap(), x);
        }
        let a = PhaseAssignment::steinhaus(3);
        let (dl, dt) = delta_fields(&a, table(), &params, 7).unwrap();
        assert_eq!((dl.norm(), dt.norm()), (0.0, 0.0));
        assert_eq!(residual_field(&a, table(), &params, 0.2).unwrap(), 0.0);
        let ms = mean_shift(table(), &params, 0.1);
        assert_eq!((ms.exact, ms.leading), (0.0, 0.0));
    }

    #[test]
    fn density_matches_closed_form_and_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (params, p) = sample_params(&mut rng);
            let d = params.density(p as f64);
            for k in 0..10 {
                let phi = k as f64 / 10.0 + 0.013;
                assert!((d.density(phi) - raw_density(&d, phi)).abs() < 1e-12);
                assert!(d.density(phi) > 0.0);
            }
            assert!((periodic_mean(257, |x| d.density(x)) - 1.0).abs() < 1e-10);
            assert_eq!(d.cdf(0.0), 0.0);
            assert!((d.cdf(1.0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cdf_matches_simpson_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let (params, p) = sample_params(&mut rng);
            let d = params.density(p as f64);
            for k in 1..8 {
                let phi = k as f64 / 8.0 - 0.01;
                let oracle = adaptive_simpson(0.0, phi, 1e-13, &|x| raw_density(&d, x));
                assert!((d.cdf(phi) - oracle).abs() < 1e-10);
                // Bisection oracle for the inverse.
                let target = oracle;
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if adaptive_simpson(0.0, mid, 1e-14, &|x| raw_density(&d, x)) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                assert!((d.coupled_phase(target).unwrap() - 0.5 * (lo + hi)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mean_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (params, p) = sample_params(&mut rng);
            let d = params.density(p as f64);
            let re = periodic_mean(1024, |x| (TAU * x).cos() * raw_density(&d, x));
            let im = periodic_mean(1024, |x| (TAU * x).sin() * raw_density(&d, x));
            assert!((d.mean_alpha() - Complex64::new(re, im)).norm() < 1e-12);
        }
    }

    #[test]
    fn coupled_marginal_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let d = TiltedPhaseDensity::from_coefficient(Complex64::from_polar(
                rng.gen_range(0.05..0.8),
                rng.gen_range(-PI..PI),
            ));
            let xs: Vec<f64> =
                (0..10_000).map(|_| d.coupled_phase(rng.gen_range(0.0..1.0)).unwrap()).collect();
            assert!(ks_one_sample(&xs, |x| d.cdf(x)) < 0.02);
        }
    }

    #[test]
    fn monotone_beats_independent_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let d = TiltedPhaseDensity::from_coefficient(Complex64::from_polar(rng.gen_range(0.05..1.0), 0.7));
            let n = 4000;
            let xs: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
            let coupled: Vec<f64> = xs.iter().map(|&x| d.coupled_phase(x).unwrap()).collect();
            let mono: f64 = xs.iter().zip(&coupled).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
            let indep: f64 = (0..n)
                .map(|_| (rng.gen_range(0.0..1.0) - coupled[rng.gen_range(0..n)]).abs())
                .sum::<f64>()
                / n as f64;
            assert!(mono <= indep);
        }
    }

    #[test]
    fn mean_shift_tracks_cosine_approximation() {
        for &y in &[1e3, 1e4] {
            let params = CouplingParams::new(Twist::One, y, [1.0, 2.0], [0.2, -0.3]).unwrap();
            let ms = mean_shift(table(), &params, 0.1);
            assert!((ms.exact - ms.leading).abs() <= ms.envelope, "{ms:?}");
        }
    }

    #[test]
    fn residual_lattice_matches_pointwise() {
        let y = 200.0;
        let a = PhaseAssignment::steinhaus(trial_seed(9, 1));
        let primes = table().primes_upto(y);
        let turns: Vec<f64> = a.values_for_prefix(primes).iter().map(|v| v.turns()).collect();
        let pts = [-0.5, 0.0, 0.5];
        let lat = residual_lattice(table(), Twist::One, y, [1.0, 1.0], &pts, &turns).unwrap();
        let params = CouplingParams::new(Twist::One, y, [1.0, 1.0], [pts[2], pts[0]]).unwrap();
        let direct = residual_field(&a, table(), &params, pts[1]).unwrap();
        assert!((lat[(2 * 3) * 3 + 1] - direct).abs() < 1e-12);
    }

    #[test]
    fn residual_has_mean_zero() {
        let params = CouplingParams::new(Twist::One, 500.0, [1.0, 2.0], [0.1, 0.4]).unwrap();
        let xs: Vec<f64> = (0..800)
            .map(|j| residual_field(&PhaseAssignment::steinhaus(trial_seed(11, j)), table(), &params, 0.0).unwrap())
            .collect();
        let m = crate::stats::mean_se(&xs);
        assert!(m.mean.abs() < 3.5 * m.se, "{m:?}");
    }

    #[test]
    fn scaling_constants_do_not_grow_with_y() {
        let mut sups = Vec::new();
        for &y in &[1e3, 2e3, 4e3, 8e3] {
            let mut s: f64 = 0.0;
            for &p in &[2u64, 3, 5, 11, 101, 997] {
                for k in 0..16 {
                    let params = CouplingParams::new(Twist::One, y, [1.0, 2.0], [0.3, -0.2]).unwrap();
                    let c = coupling_scales(&params, p, (k as f64 + 0.3) / 16.0, 1e-4, 1e-4).unwrap();
                    s = s.max(c.pointwise).max(c.t_lipschitz).max(c.u_lipschitz);
                }
            }
            sups.push(s);
        }
        for w in sups.windows(2) {
            assert!(w[1] < 1.05 * w[0], "{sups:?}");
        }
        assert!(sups[0].is_finite() && sups[0] > 0.0);
    }

    proptest! {
        #[test]
        fn inverse_round_trip(r in 0.0f64..1.2, th in -3.1f64..3.1, x in 0.0f64..1.0) {
            let d = TiltedPhaseDensity::from_coefficient(Complex64::from_polar(r, th));
            let phi = d.coupled_phase(x).unwrap();
            prop_assert!((0.0..=1.0).contains(&phi));
            prop_assert!((d.cdf(phi) - x).abs() < 1e-10);
        }

        #[test]
        fn cdf_is_increasing(r in 0.0f64..1.2, th in -3.1f64..3.1, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let d = TiltedPhaseDensity::from_coefficient(Complex64::from_polar(r, th));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(d.cdf(lo) <= d.cdf(hi) + 1e-15);
        }
    }
}
