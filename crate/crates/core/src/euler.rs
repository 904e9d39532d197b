//! Random Euler products on the shifted line σ_y(u) + it, the prime field
//! 𝒢_{y,u}, and the chaos measures m_{y,u} and ν_{y,u}.
//!
//! Grids are evaluated prime by prime: along a uniform t-grid the factor
//! p^{-it} advances by a fixed rotation, resynchronised exactly every
//! [`RESYNC`] steps, and products of |local factor|² are folded into logs in
//! blocks of [`LOG_BLOCK`] primes.

use crate::primes::FactorTable;
use crate::quad::phase_mgf;
use crate::rmf::{Model, PhaseAssignment, PrimeValue, Twist};
use crate::stats::{mean_se, MeanSe};
use crate::{Complex64, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

const RESYNC: usize = 64;
const LOG_BLOCK: usize = 128;
const POLE_TOL: f64 = 1e-12;

pub fn sigma(y: f64, u: f64) -> f64 {
    0.5 * (1.0 + u / y.ln())
}

/// ε_{y,u}(p) = p^{-u/(2 log y)} - 1.
pub fn epsilon(p: f64, y: f64, u: f64) -> f64 {
    (-u * p.ln() / (2.0 * y.ln())).exp() - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftParams {
    pub y: f64,
    pub u: f64,
}

impl ShiftParams {
    pub fn new(y: f64, u: f64) -> Result<Self> {
        if !(y >= 3.0) || !(u >= 0.0) || !u.is_finite() || !y.is_finite() {
            return Err(Error::InvalidArgument(format!("shift parameters need y >= 3, u >= 0 (y={y}, u={u})")));
        }
        Ok(ShiftParams { y, u })
    }

    pub fn sigma(&self) -> f64 {
        sigma(self.y, self.u)
    }

    pub fn eps(&self, p: f64) -> f64 {
        epsilon(p, self.y, self.u)
    }

    pub fn sqrt_loglog(&self) -> f64 {
        self.y.ln().ln().sqrt()
    }
}

/// Default t-grid spacing: resolves the correlation scale 1/log y.
pub fn default_spacing(y: f64) -> f64 {
    (1.0 / (4.0 * y.ln())).min(0.01)
}

/// Uniform grid `a + j (b - a)/n`, `j = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TGrid {
    pub a: f64,
    pub b: f64,
    pub intervals: usize,
}

impl TGrid {
    /// Finest uniform grid on [a, b] with spacing at most `max_step`.
    pub fn covering(a: f64, b: f64, max_step: f64) -> Self {
        let n = (((b - a) / max_step) - 1e-9).ceil().max(1.0) as usize;
        TGrid { a, b, intervals: n }
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / self.intervals as f64
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, j: usize) -> f64 {
        self.a + j as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    /// Trapezoid weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.intervals {
            0.5 * self.step()
        } else {
            self.step()
        }
    }
}

/// Deterministic per-(y, u, twist, model) data shared across realizations.
#[derive(Debug, Clone)]
pub struct EulerSetup {
    pub twist: Twist,
    pub model: Model,
    pub params: ShiftParams,
    pub primes: Vec<u32>,
    log_p: Vec<f64>,
    p_sigma: Vec<f64>,
    /// ln E|A_y(σ+it)|².
    pub log_mean_a2: f64,
    /// ln M_y(u).
    pub log_m: f64,
}

impl EulerSetup {
    pub fn new(table: &FactorTable, twist: Twist, model: Model, params: ShiftParams) -> Result<Self> {
        let primes = table.primes_upto(params.y).to_vec();
        let s = params.sigma();
        let log_p: Vec<f64> = primes.iter().map(|&p| (p as f64).ln()).collect();
        let p_sigma: Vec<f64> = log_p.iter().map(|l| (-s * l).exp()).collect();
        let log_mean_a2 = log_mean_square(twist, model, &p_sigma)?;
        let log_m = log_normalizer(twist, model, &p_sigma);
        Ok(EulerSetup { twist, model, params, primes, log_p, p_sigma, log_mean_a2, log_m })
    }

    pub fn prime_values(&self, assign: &PhaseAssignment) -> Result<Vec<PrimeValue>> {
        if assign.model != self.model {
            return Err(Error::InvalidArgument("assignment model differs from setup model".into()));
        }
        Ok(assign.values_for_prefix(&self.primes))
    }

    /// Evaluates ln|A_y|² and 𝒢_{y,u} along `grid`.
    pub fn evaluate(&self, values: &[PrimeValue], grid: TGrid) -> Result<EulerGrid> {
        let n = grid.len();
        let step = grid.step();
        let mut log_a2 = vec![0.0; n];
        let mut field = vec![0.0; n];
        let mut block = vec![1.0; n];
        let f1 = self.twist.at_prime_power(1);
        for (k, v) in values.iter().enumerate().take(self.primes.len()) {
            let lp = self.log_p[k];
            let r = v.modulus * self.p_sigma[k];
            let z0 = Complex64::from_polar(r, TAU * v.turns());
            let rot = Complex64::from_polar(1.0, -step * lp);
            let r2 = r * r;
            let mut w = Complex64::new(0.0, 0.0);
            let mut min_q = f64::INFINITY;
            for j in 0..n {
                if j % RESYNC == 0 {
                    w = z0 * Complex64::from_polar(1.0, -grid.point(j) * lp);
                }
                let q = match self.twist {
                    Twist::One | Twist::Moebius => 1.0 - 2.0 * w.re + r2,
                    Twist::MoebiusSquared => 1.0 + 2.0 * w.re + r2,
                };
                min_q = min_q.min(q);
                block[j] *= q;
                field[j] += 2.0 * f1 * w.re;
                w *= rot;
            }
            if self.twist == Twist::One && min_q < POLE_TOL * POLE_TOL {
                return Err(Error::Pole { p: self.primes[k] as u64, modulus: min_q.sqrt() });
            }
            if (k + 1) % LOG_BLOCK == 0 {
                fold_block(&mut log_a2, &mut block, self.twist);
            }
        }
        fold_block(&mut log_a2, &mut block, self.twist);
        Ok(EulerGrid {
            grid,
            log_a2,
            field,
            log_mean_a2: self.log_mean_a2,
            log_m: self.log_m,
            sqrt_loglog: self.params.sqrt_loglog(),
        })
    }

    /// 𝒢_{y,u}(t) summed directly.
    pub fn field_at(&self, values: &[PrimeValue], t: f64) -> f64 {
        let f1 = self.twist.at_prime_power(1);
        values
            .iter()
            .zip(&self.primes)
            .enumerate()
            .map(|(k, (v, _))| {
                let z = Complex64::from_polar(v.modulus * self.p_sigma[k], TAU * v.turns() - t * self.log_p[k]);
                2.0 * f1 * z.re
            })
            .sum()
    }

    /// X_{y,u}(t) and its three factors, each accumulated prime by prime.
    pub fn density_factor(&self, values: &[PrimeValue], t: f64) -> DensityFactor {
        let (mut l1, mut l2, mut l3) = (0.0, 0.0, 0.0);
        let f1 = self.twist.at_prime_power(1);
        let f2 = self.twist.at_prime_power(2);
        for (k, v) in values.iter().enumerate().take(self.primes.len()) {
            let ps = self.p_sigma[k];
            let z = Complex64::from_polar(v.modulus * ps, TAU * v.turns() - t * self.log_p[k]);
            let local2 = local_factor(self.twist, z).norm_sqr();
            let trunc2 = (1.0 + f1 * z + f2 * z * z).norm_sqr();
            l1 += prime_log_mgf(self.model, f1.abs() * ps) - local_mean_square(self.twist, self.model, ps).ln();
            l2 += local2.ln() - trunc2.ln();
            l3 += -2.0 * f1 * z.re + trunc2.ln();
        }
        DensityFactor { x1: l1.exp(), x2: l2.exp(), x3: l3.exp(), x: (l1 + l2 + l3).exp() }
    }
}

fn fold_block(log_a2: &mut [f64], block: &mut [f64], twist: Twist) {
    let sign = if twist == Twist::One { -1.0 } else { 1.0 };
    for (l, b) in log_a2.iter_mut().zip(block.iter_mut()) {
        *l += sign * b.ln();
        *b = 1.0;
    }
}

/// Local Euler factor ∑_k f(p^k) z^k in closed form.
fn local_factor(twist: Twist, z: Complex64) -> Complex64 {
    match twist {
        Twist::One => 1.0 / (1.0 - z),
        Twist::Moebius => 1.0 - z,
        Twist::MoebiusSquared => 1.0 + z,
    }
}

/// E|∑_k f(p^k) α(p)^k p^{-kσ}|² by orthogonality of the powers α(p)^k.
fn local_mean_square(twist: Twist, model: Model, ps: f64) -> f64 {
    let x = ps * ps;
    match (twist, model) {
        (Twist::One, _) => 1.0 / (1.0 - x),
        _ => 1.0 + x,
    }
}

fn log_mean_square(twist: Twist, model: Model, p_sigma: &[f64]) -> Result<f64> {
    if twist == Twist::One && model == Model::GaussianAnalog {
        // E|α̃|^{2k} = k!, so the local series has infinite second moment.
        return Err(Error::Unsupported("E|A_y|² diverges for the Gaussian analog with f = 1".into()));
    }
    Ok(p_sigma.iter().map(|&ps| local_mean_square(twist, model, ps).ln()).sum())
}

/// ln E exp(2 Re(c α(p))) for |c| = a.
fn prime_log_mgf(model: Model, a: f64) -> f64 {
    match model {
        Model::Steinhaus => phase_mgf(a).ln(),
        Model::GaussianAnalog => a * a,
    }
}

fn log_normalizer(twist: Twist, model: Model, p_sigma: &[f64]) -> f64 {
    let f = twist.at_prime_power(1).abs();
    p_sigma.iter().map(|&ps| prime_log_mgf(model, f * ps)).sum()
}

/// M_y(u) = E exp 𝒢_{y,u}(t).
pub fn normalizer_m(table: &FactorTable, twist: Twist, model: Model, params: ShiftParams) -> f64 {
    let s = params.sigma();
    let ps: Vec<f64> = table.primes_upto(params.y).iter().map(|&p| (p as f64).powf(-s)).collect();
    log_normalizer(twist, model, &ps).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityFactor {
    pub x: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

/// A_y(s) for one realization. `order = None` uses closed-form local factors;
/// `Some(k)` truncates each local series at `α(p)^k`.
pub fn euler_product(
    assign: &PhaseAssignment,
    table: &FactorTable,
    twist: Twist,
    y: f64,
    s: Complex64,
    order: Option<u32>,
) -> Result<Complex64> {
    if s.re <= 0.0 {
        return Err(Error::InvalidArgument(format!("Euler product needs Re s > 0, got {s}")));
    }
    let primes = table.primes_upto(y);
    let values = assign.values_for_prefix(primes);
    let mut log = Complex64::new(0.0, 0.0);
    for (&p, v) in primes.iter().zip(&values) {
        let z = v.complex() * Complex64::new(p as f64, 0.0).powc(-s);
        let factor = match order {
            None => {
                if twist == Twist::One && (1.0 - z).norm() < POLE_TOL {
                    return Err(Error::Pole { p: p as u64, modulus: (1.0 - z).norm() });
                }
                local_factor(twist, z)
            }
            Some(k) => {
                let mut acc = Complex64::new(1.0, 0.0);
                let mut zk = Complex64::new(1.0, 0.0);
                for j in 1..=k {
                    zk *= z;
                    acc += twist.at_prime_power(j) * zk;
                }
                acc
            }
        };
        log += factor.ln();
    }
    Ok(log.exp())
}

/// 𝒢_{y,u}(t) for one realization; 0 when no prime is ≤ y.
pub fn field_g(assign: &PhaseAssignment, table: &FactorTable, twist: Twist, params: ShiftParams, t: f64) -> f64 {
    let s = params.sigma();
    let f1 = twist.at_prime_power(1);
    let primes = table.primes_upto(params.y);
    let values = assign.values_for_prefix(primes);
    primes
        .iter()
        .zip(&values)
        .map(|(&p, v)| {
            let lp = (p as f64).ln();
            2.0 * f1 * v.modulus * (-s * lp).exp() * (TAU * v.turns() - t * lp).cos()
        })
        .sum()
}

/// ln|A|² and 𝒢 on a t-grid for one realization, with the normalizers.
#[derive(Debug, Clone)]
pub struct EulerGrid {
    pub grid: TGrid,
    pub log_a2: Vec<f64>,
    pub field: Vec<f64>,
    pub log_mean_a2: f64,
    pub log_m: f64,
    pub sqrt_loglog: f64,
}

impl EulerGrid {
    /// ∫ h dm_{y,u} with `h` sampled on the grid (trapezoid rule).
    pub fn measure_m(&self, h: &[f64]) -> Result<f64> {
        self.check(h)?;
        Ok(self.sqrt_loglog
            * (0..self.grid.len())
                .map(|j| self.grid.weight(j) * h[j] * (self.log_a2[j] - self.log_mean_a2).exp())
                .sum::<f64>())
    }

    /// ∫ h dν_{y,u} with `h` sampled on the grid.
    pub fn measure_nu(&self, h: &[f64]) -> Result<f64> {
        self.check(h)?;
        Ok(self.sqrt_loglog
            * (0..self.grid.len())
                .map(|j| self.grid.weight(j) * h[j] * (self.field[j] - self.log_m).exp())
                .sum::<f64>())
    }

    /// m_{y,u} of the whole grid interval.
    pub fn mass_m(&self) -> f64 {
        self.measure_m(&vec![1.0; self.grid.len()]).unwrap()
    }

    pub fn mass_nu(&self) -> f64 {
        self.measure_nu(&vec![1.0; self.grid.len()]).unwrap()
    }

    /// X_{y,u}(t_j) = (M/E|A|²)|A|²/exp 𝒢 at every node.
    pub fn density_factor(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|j| (self.log_m - self.log_mean_a2 + self.log_a2[j] - self.field[j]).exp())
            .collect()
    }

    fn check(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.grid.len() {
            return Err(Error::InvalidArgument(format!(
                "test function has {} samples, grid has {}",
                h.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }
}

/// ν_{y,u}(I) for one realization at the given spacing.
pub fn measure_nu(
    assign: &PhaseAssignment,
    table: &FactorTable,
    twist: Twist,
    params: ShiftParams,
    interval: (f64, f64),
    spacing: f64,
) -> Result<f64> {
    let setup = EulerSetup::new(table, twist, assign.model, params)?;
    let values = setup.prime_values(assign)?;
    Ok(setup.evaluate(&values, TGrid::covering(interval.0, interval.1, spacing))?.mass_nu())
}

/// Monte Carlo estimate of E[|ν_{y,0}(I) - ν_{y,u}(I)|² e^{-L ν_{y,0}(I)}].
/// Returns the estimate and the per-trial values.
#[allow(clippy::too_many_arguments)]
pub fn modified_second_moment(
    table: &FactorTable,
    twist: Twist,
    model: Model,
    y: f64,
    u: f64,
    l: f64,
    interval: (f64, f64),
    trials: usize,
    base_seed: u64,
) -> Result<(MeanSe, Vec<f64>)> {
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
    }
    let s0 = EulerSetup::new(table, twist, model, ShiftParams::new(y, 0.0)?)?;
    let su = EulerSetup::new(table, twist, model, ShiftParams::new(y, u)?)?;
    let grid = TGrid::covering(interval.0, interval.1, default_spacing(y));
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|j| {
            let a = PhaseAssignment::new(model, crate::rmf::trial_seed(base_seed, j as u64));
            let values = a.values_for_prefix(&s0.primes);
            let n0 = s0.evaluate(&values, grid)?.mass_nu();
            let nu = su.evaluate(&values, grid)?.mass_nu();
            Ok((n0 - nu).powi(2) * (-l * n0).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((mean_se(&samples), samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OscWeight {
    EpsU1,
    EpsU1EpsU2,
}

/// C_y(h; v) = ∑_{p≤y} |f(p)|²/p · v(p) cos(|h| log p).
pub fn oscillatory_sum_c(table: &FactorTable, twist: Twist, y: f64, h: f64, weight: OscWeight, u1: f64, u2: f64) -> f64 {
    let f2 = twist.at_prime_power(1).powi(2);
    table
        .primes_upto(y)
        .iter()
        .map(|&p| {
            let pf = p as f64;
            let v = match weight {
                OscWeight::EpsU1 => epsilon(pf, y, u1),
                OscWeight::EpsU1EpsU2 => epsilon(pf, y, u1) * epsilon(pf, y, u2),
            };
            f2 / pf * v * (h.abs() * pf.ln()).cos()
        })
        .sum()
}

/// ln E_y(u, t) = ln E exp(∑_j 𝒢_{y,0}(t_j; ε_{y,u_j} α)) (Steinhaus).
pub fn log_mgf_e(table: &FactorTable, twist: Twist, y: f64, u: [f64; 2], t: [f64; 2]) -> f64 {
    let f1 = twist.at_prime_power(1);
    table
        .primes_upto(y)
        .iter()
        .map(|&p| {
            let pf = p as f64;
            let lp = pf.ln();
            let c: Complex64 = (0..2)
                .map(|j| f1 * epsilon(pf, y, u[j]) * pf.powf(-0.5) * Complex64::from_polar(1.0, -t[j] * lp))
                .sum();
            phase_mgf(c.norm()).ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::build_factor_table;
    use crate::rmf::trial_seed;

    fn table() -> &'static FactorTable {
        use std::sync::OnceLock;
        static T: OnceLock<FactorTable> = OnceLock::new();
        T.get_or_init(|| build_factor_table(200_000).unwrap())
    }

    // Modified Bessel I0 by its power series, used as an independent oracle.
    fn bessel_i0(x: f64) -> f64 {
        let q = x * x / 4.0;
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..200 {
            term *= q / (k * k) as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        sum
    }

    #[test]
    fn shift_params() {
        let p = ShiftParams::new(100.0, 0.0).unwrap();
        assert_eq!(p.sigma(), 0.5);
        assert_eq!(p.eps(7.0), 0.0);
        let q = ShiftParams::new(100.0, 2.0).unwrap();
        assert!(q.sigma() > 0.5);
        assert!(q.eps(97.0) < 0.0 && q.eps(97.0) > -1.0);
        assert!(ShiftParams::new(2.0, 0.0).is_err());
        assert!(ShiftParams::new(10.0, -1.0).is_err());
    }

    #[test]
    fn single_prime_products() {
        let t = table();
        let a = PhaseAssignment::steinhaus(3);
        let s = Complex64::new(0.7, 1.3);
        let a2 = a.alpha(t, 2).unwrap();
        let z = a2 * Complex64::new(2.0, 0.0).powc(-s);
        let one = euler_product(&a, t, Twist::One, 2.0, s, None).unwrap();
        assert!((one - 1.0 / (1.0 - z)).norm() < 1e-14);
        let mu = euler_product(&a, t, Twist::Moebius, 2.0, s, None).unwrap();
        assert!((mu - (1.0 - z)).norm() < 1e-14);
        let series = euler_product(&a, t, Twist::One, 2.0, s, Some(60)).unwrap();
        assert!((series - one).norm() < 1e-12);
    }

    #[test]
    fn log_space_matches_direct_product() {
        let t = table();
        let a = PhaseAssignment::steinhaus(8);
        for &twist in &[Twist::One, Twist::Moebius, Twist::MoebiusSquared] {
            let params = ShiftParams::new(1000.0, 1.0).unwrap();
            let setup = EulerSetup::new(t, twist, Model::Steinhaus, params).unwrap();
            let values = setup.prime_values(&a).unwrap();
            let grid = TGrid::covering(-3.0, 3.0, 0.01);
            let eg = setup.evaluate(&values, grid).unwrap();
            for &j in &[0usize, 1, 63, 64, 65, 333, grid.len() - 1] {
                let tt = grid.point(j);
                let s = Complex64::new(params.sigma(), tt);
                let direct = euler_product(&a, t, twist, 1000.0, s, None).unwrap().norm_sqr();
                let rel = (eg.log_a2[j].exp() - direct).abs() / direct;
                assert!(rel < 1e-10, "twist {twist:?} j {j}: rel {rel}");
                let g = field_g(&a, t, twist, params, tt);
                assert!((eg.field[j] - g).abs() < 1e-10);
                assert!((setup.field_at(&values, tt) - g).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn field_small_cases() {
        let t = table();
        let a = PhaseAssignment::steinhaus(4);
        let p3 = ShiftParams::new(3.0, 0.0).unwrap();
        let a2 = a.alpha(t, 2).unwrap();
        let a3 = a.alpha(t, 3).unwrap();
        let g = field_g(&a, t, Twist::One, p3, 0.0);
        assert!((g - 2.0 * (a2 / 2f64.sqrt() + a3 / 3f64.sqrt()).re).abs() < 1e-14);
    }

    #[test]
    fn normalizer_oracles() {
        let t = table();
        assert_eq!(
            normalizer_m(t, Twist::One, Model::Steinhaus, ShiftParams { y: 1.5, u: 0.0 }),
            1.0
        );
        let params = ShiftParams::new(1000.0, 1.0).unwrap();
        let s = params.sigma();
        let oracle: f64 = t.primes_upto(1000.0).iter().map(|&p| bessel_i0(2.0 * (p as f64).powf(-s)).ln()).sum();
        let m = normalizer_m(t, Twist::Moebius, Model::Steinhaus, params);
        assert!((m.ln() - oracle).abs() < 1e-12);
    }

    #[test]
    fn normalizer_ratio_tracks_epsilon_expansion() {
        let t = table();
        let y = 1e4;
        let m0 = normalizer_m(t, Twist::One, Model::Steinhaus, ShiftParams::new(y, 0.0).unwrap()).ln();
        let m1 = normalizer_m(t, Twist::One, Model::Steinhaus, ShiftParams::new(y, 1.0).unwrap()).ln();
        let mut approx = 0.0;
        let mut envelope = 0.0;
        for &p in t.primes_upto(y) {
            let pf = p as f64;
            let e = epsilon(pf, y, 1.0);
            approx += (e * e + 2.0 * e) / pf;
            envelope += e.abs() * pf.powf(-1.5);
        }
        assert!((m1 - m0 - approx).abs() <= envelope, "{} vs {approx}, env {envelope}", m1 - m0);
    }

    #[test]
    fn density_factor_identity() {
        let t = table();
        for &twist in &[Twist::One, Twist::Moebius, Twist::MoebiusSquared] {
            for &u in &[0.0, 1.5] {
                let params = ShiftParams::new(3000.0, u).unwrap();
                let setup = EulerSetup::new(t, twist, Model::Steinhaus, params).unwrap();
                let values = setup.prime_values(&PhaseAssignment::steinhaus(17)).unwrap();
                let grid = TGrid::covering(-0.5, 0.5, 0.05);
                let eg = setup.evaluate(&values, grid).unwrap();
                let xs = eg.density_factor();
                for j in [0usize, 7, 20] {
                    let d = setup.density_factor(&values, grid.point(j));
                    assert!(((d.x1 * d.x2 * d.x3) / d.x - 1.0).abs() < 1e-10);
                    let lhs = d.x * (eg.field[j] - eg.log_m).exp();
                    let rhs = (eg.log_a2[j] - eg.log_mean_a2).exp();
                    assert!((lhs / rhs - 1.0).abs() < 1e-8, "{twist:?} u={u}");
                    assert!((xs[j] / d.x - 1.0).abs() < 1e-8);
                    if twist == Twist::Moebius {
                        assert!((d.x2 - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn measure_expectations() {
        let t = table();
        let y = 1000.0;
        let params = ShiftParams::new(y, 1.0).unwrap();
        let setup = EulerSetup::new(t, Twist::One, Model::Steinhaus, params).unwrap();
        let grid = TGrid::covering(-0.5, 0.5, default_spacing(y));
        let shifted = TGrid::covering(4.5, 5.5, default_spacing(y));
        let (mut ms, mut nus, mut far) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..1500 {
            let values = setup.prime_values(&PhaseAssignment::steinhaus(trial_seed(77, j))).unwrap();
            let eg = setup.evaluate(&values, grid).unwrap();
            ms.push(eg.mass_m());
            nus.push(eg.mass_nu());
            far.push(setup.evaluate(&values, shifted).unwrap().mass_m());
        }
        let target = params.sqrt_loglog();
        for s in [&ms, &nus, &far] {
            let m = mean_se(s);
            assert!((m.mean - target).abs() < 3.5 * m.se, "{m:?} vs {target}");
        }
    }

    #[test]
    fn measure_linearity_and_guards() {
        let t = table();
        let setup = EulerSetup::new(t, Twist::One, Model::Steinhaus, ShiftParams::new(500.0, 0.0).unwrap()).unwrap();
        let values = setup.prime_values(&PhaseAssignment::steinhaus(1)).unwrap();
        let eg = setup.evaluate(&values, TGrid::covering(-1.0, 1.0, 0.01)).unwrap();
        let n = eg.grid.len();
        assert_eq!(eg.measure_m(&vec![0.0; n]).unwrap(), 0.0);
        let c = eg.measure_m(&vec![2.5; n]).unwrap();
        assert!((c - 2.5 * eg.mass_m()).abs() < 1e-12 * c);
        assert!(eg.measure_m(&[1.0]).is_err());
        // Additivity over [-1, 0] and [0, 1] (shared node at 0).
        let left: Vec<f64> = eg.grid.points().iter().map(|&x| if x < -1e-12 { 1.0 } else if x.abs() <= 1e-12 { 0.5 } else { 0.0 }).collect();
        let right: Vec<f64> = left.iter().rev().cloned().collect();
        let sum = eg.measure_nu(&left).unwrap() + eg.measure_nu(&right).unwrap();
        assert!((sum - eg.mass_nu()).abs() < 1e-12 * sum);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let t = table();
        let y = 1e4;
        let setup = EulerSetup::new(t, Twist::One, Model::Steinhaus, ShiftParams::new(y, 0.0).unwrap()).unwrap();
        for seed in 0..5 {
            let values = setup.prime_values(&PhaseAssignment::steinhaus(seed)).unwrap();
            let h = default_spacing(y);
            let coarse = setup.evaluate(&values, TGrid::covering(-0.5, 0.5, h)).unwrap().mass_m();
            let fine = setup.evaluate(&values, TGrid::covering(-0.5, 0.5, h / 2.0)).unwrap().mass_m();
            assert!(((coarse - fine) / fine).abs() < 1e-3);
        }
    }

    #[test]
    fn gaussian_analog_mgf() {
        let t = table();
        let params = ShiftParams::new(10.0, 0.0).unwrap();
        let samples: Vec<f64> = (0..20_000)
            .map(|j| {
                let a = PhaseAssignment::new(Model::GaussianAnalog, trial_seed(5, j));
                field_g(&a, t, Twist::One, params, 0.0).exp()
            })
            .collect();
        let m = mean_se(&samples);
        let k: f64 = 2.0 * t.primes_upto(10.0).iter().map(|&p| 1.0 / p as f64).sum::<f64>();
        let target = (0.5 * k).exp();
        assert!((m.mean - target).abs() < 3.0 * m.se, "{m:?} vs {target}");
        assert!((normalizer_m(t, Twist::One, Model::GaussianAnalog, params) - target).abs() < 1e-12);
    }

    #[test]
    fn modified_moment_zero_at_u0() {
        let t = table();
        let (m, samples) =
            modified_second_moment(t, Twist::One, Model::Steinhaus, 100.0, 0.0, 1.0, (-0.5, 0.5), 20, 1).unwrap();
        assert_eq!(m.mean, 0.0);
        assert!(samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oscillatory_sum_cases() {
        let t = table();
        assert_eq!(oscillatory_sum_c(t, Twist::One, 1e4, 0.5, OscWeight::EpsU1, 0.0, 0.0), 0.0);
        let direct: f64 = t.primes_upto(1e4).iter().map(|&p| epsilon(p as f64, 1e4, 1.0) / p as f64).sum();
        let c = oscillatory_sum_c(t, Twist::One, 1e4, 0.0, OscWeight::EpsU1, 1.0, 0.0);
        assert!((c - direct).abs() < 1e-14);
        // Bounded over y ∈ {10³, …, 10⁶}; the decay is oscillatory at this
        // scale, so only the endpoints are compared.
        let big = build_factor_table(1_000_000).unwrap();
        let cs: Vec<f64> = [1e3, 1e4, 1e5, 1e6]
            .iter()
            .map(|&y| oscillatory_sum_c(&big, Twist::One, y, 0.5, OscWeight::EpsU1, 1.0, 0.0).abs())
            .collect();
        assert!(cs.iter().all(|&c| c < 0.2), "{cs:?}");
        assert!(cs[3] < cs[0], "{cs:?}");
        assert!(log_mgf_e(t, Twist::One, 1e3, [0.0, 0.0], [0.1, -0.2]).abs() < 1e-15);
    }
}
