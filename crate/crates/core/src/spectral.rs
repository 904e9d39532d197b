//! Step functions Φ, their Mellin transforms K_Φ, the smooth sums s_{x,y}, the
//! Plancherel identity linking them to A_y, and the finite-y proxy for V_∞.

use crate::euler::{default_spacing, EulerSetup, TGrid};
use crate::primes::{for_each_smooth, FactorTable};
use crate::quad::gl20;
use crate::rmf::{phase_to_turns, Model, PhaseAssignment, PrimeValue};
use crate::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// `Φ = c_j` on `(b_{j-1}, b_j]` for `j = 1..=m`, `Φ(0) = c_1`, zero beyond `b_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<Complex64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if breaks.len() != values.len() {
            return Err(Error::InvalidArgument("one value per breakpoint required".into()));
        }
        let mut prev = 0.0;
        for &b in &breaks {
            if !(b > prev) || !b.is_finite() {
                return Err(Error::InvalidArgument(format!("breakpoints must increase from 0: {breaks:?}")));
            }
            prev = b;
        }
        Ok(StepFunction { breaks, values })
    }

    /// Real-valued convenience constructor.
    pub fn real(breaks: &[f64], values: &[f64]) -> Result<Self> {
        Self::new(breaks.to_vec(), values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// 1_{[0,1]}.
    pub fn unit() -> Self {
        StepFunction { breaks: vec![1.0], values: vec![Complex64::new(1.0, 0.0)] }
    }

    pub fn zero() -> Self {
        StepFunction { breaks: Vec::new(), values: Vec::new() }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Support bound A (0 for the zero function).
    pub fn support(&self) -> f64 {
        self.breaks.last().copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|c| c.norm() == 0.0)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        if x < 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let j = self.breaks.partition_point(|&b| b < x);
        self.values.get(j).copied().unwrap_or_default()
    }

    /// ‖Φ‖₂².
    pub fn norm2_sq(&self) -> f64 {
        let mut prev = 0.0;
        let mut s = 0.0;
        for (b, c) in self.breaks.iter().zip(&self.values) {
            s += c.norm_sqr() * (b - prev);
            prev = *b;
        }
        s
    }

    /// ∫ |Φ(x)|² x^r dx.
    pub fn weighted_norm_sq(&self, r: f64) -> f64 {
        let mut prev = 0.0f64;
        let mut s = 0.0;
        for (b, c) in self.breaks.iter().zip(&self.values) {
            s += c.norm_sqr() * (b.powf(1.0 + r) - prev.powf(1.0 + r)) / (1.0 + r);
            prev = *b;
        }
        s
    }

    /// Jumps `(b_l, d_l)` with `d_l = c_l - c_{l+1}` (`c_{m+1} = 0`), so that
    /// `Φ(x) = ∑_l d_l 1{x <= b_l}`.
    pub fn jumps(&self) -> Vec<(f64, Complex64)> {
        let m = self.values.len();
        (0..m)
            .map(|l| {
                let next = if l + 1 < m { self.values[l + 1] } else { Complex64::new(0.0, 0.0) };
                (self.breaks[l], self.values[l] - next)
            })
            .collect()
    }

    /// x ↦ Φ(x/λ).
    pub fn dilate(&self, lambda: f64) -> Self {
        StepFunction { breaks: self.breaks.iter().map(|b| b * lambda).collect(), values: self.values.clone() }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        StepFunction { breaks: self.breaks.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks.iter().map(|&b| self.eval(b) + other.eval(b)).collect();
        StepFunction { breaks, values }
    }

    /// K_Φ(s) = ∑_j c_j (b_j^s - b_{j-1}^s)/s. Pieces away from 0 switch to the
    /// series in s when |s| < 10⁻⁶.
    pub fn mellin(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut prev = 0.0f64;
        for (&b, &c) in self.breaks.iter().zip(&self.values) {
            let piece = if prev == 0.0 {
                Complex64::new(b, 0.0).powc(s) / s
            } else if s.norm() < 1e-6 {
                // (b^s - a^s)/s = ∑_{k>=1} s^{k-1} (ln^k b - ln^k a)/k!
                let (lb, la) = (b.ln(), prev.ln());
                let mut term = Complex64::new(1.0, 0.0);
                let mut sum = Complex64::new(0.0, 0.0);
                let (mut pb, mut pa) = (1.0, 1.0);
                let mut fact = 1.0;
                for k in 1..12 {
                    pb *= lb;
                    pa *= la;
                    fact *= k as f64;
                    sum += term * (pb - pa) / fact;
                    term *= s;
                }
                sum
            } else {
                (Complex64::new(b, 0.0).powc(s) - Complex64::new(prev, 0.0).powc(s)) / s
            };
            acc += c * piece;
            prev = b;
        }
        acc
    }

    /// C with |K_Φ(σ+it)| <= C/|σ+it|: ∑_l |d_l| b_l^σ.
    pub fn mellin_bound(&self, sigma: f64) -> f64 {
        self.jumps().iter().map(|(b, d)| d.norm() * b.powf(sigma)).sum()
    }
}

/// Visits every y-smooth n <= bound with its phase; `primes` must be the
/// increasing list of primes <= y.
fn for_each_smooth_phase(primes: &[u32], values: &[PrimeValue], bound: u64, mut f: impl FnMut(u64, u32)) {
    let ps: Vec<u64> = primes.iter().map(|&p| p as u64).collect();
    let step = |acc: u32, i: usize| acc.wrapping_add(values[i].phase);
    for_each_smooth(&ps, bound, 0u32, &step, &mut f);
}

fn steinhaus_only(assign: &PhaseAssignment) -> Result<()> {
    if assign.model != Model::Steinhaus {
        return Err(Error::Unsupported("smooth sums use the Steinhaus model".into()));
    }
    Ok(())
}

/// s_{x,y} = x^{-1/2} ∑_{P(n)≤y} α(n) Φ(n/x).
pub fn smooth_sum_s(assign: &PhaseAssignment, table: &FactorTable, step: &StepFunction, x: f64, y: f64) -> Result<Complex64> {
    steinhaus_only(assign)?;
    if !(x >= 1.0) {
        return Err(Error::InvalidArgument(format!("x must be >= 1, got {x}")));
    }
    let bound = (step.support() * x).floor() as u64;
    if bound > table.limit() {
        return Err(Error::Capacity { requested: bound, limit: table.limit() });
    }
    let primes = table.primes_upto(y.min(bound as f64));
    let values = assign.values_for_prefix(primes);
    let mut acc = Complex64::new(0.0, 0.0);
    for_each_smooth_phase(primes, &values, bound, |n, ph| {
        acc += Complex64::from_polar(1.0, TAU * phase_to_turns(ph)) * step.eval(n as f64 / x);
    });
    Ok(acc / x.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlancherelOptions {
    /// The t-integral on the left is cut at `x_max`.
    pub x_max: f64,
    pub t_start: f64,
    pub t_cap: f64,
    pub panel_width: f64,
    /// Stop doubling T once the tail bound is below this fraction of the head.
    pub tail_ratio: f64,
}

impl Default for PlancherelOptions {
    fn default() -> Self {
        PlancherelOptions { x_max: 1e10, t_start: 50.0, t_cap: 1.6e7, panel_width: 1.0, tail_ratio: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlancherelReport {
    /// ∫₀^{x_max} |s_{t,y}|² t^{-1-r} dt, exact.
    pub lhs: f64,
    /// Expected contribution of t > x_max (orthogonality, Euler product).
    pub lhs_tail: f64,
    /// (1/2π) ∫_{-T}^{T} |A_y K_Φ|² at σ = (1+r)/2.
    pub rhs: f64,
    /// Rigorous bound for the part of the right side with |t| > T.
    pub rhs_tail_bound: f64,
    pub t_max: f64,
    pub smooth_terms: u64,
}

impl PlancherelReport {
    pub fn discrepancy(&self) -> f64 {
        (self.lhs + self.lhs_tail - self.rhs).abs()
    }

    pub fn holds(&self, rel_tol: f64) -> bool {
        self.discrepancy() <= self.rhs_tail_bound + rel_tol * self.rhs.abs()
    }
}

/// Exact ∫₀^{x_max} |s_{t,y}|² t^{-1-r} dt: `√t s_{t,y}` is constant between the
/// points n/b_j, so each piece integrates t^{-2-r} in closed form.
pub fn plancherel_lhs(
    primes: &[u32],
    values: &[PrimeValue],
    step: &StepFunction,
    r: f64,
    x_max: f64,
) -> (f64, u64) {
    let jumps = step.jumps();
    let bound = (step.support() * x_max).floor() as u64;
    let mut events: Vec<(f64, Complex64)> = Vec::new();
    let mut terms = 0u64;
    for_each_smooth_phase(primes, values, bound, |n, ph| {
        terms += 1;
        let a = Complex64::from_polar(1.0, TAU * phase_to_turns(ph));
        for &(b, d) in &jumps {
            let t = n as f64 / b;
            if t <= x_max {
                events.push((t, a * d));
            }
        }
    });
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let e = -1.0 - r;
    let mut g = Complex64::new(0.0, 0.0);
    let mut total = 0.0;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            g += events[i].1;
            i += 1;
        }
        let next = if i < events.len() { events[i].0 } else { x_max };
        if next > t {
            total += g.norm_sqr() * (t.powf(e) - next.powf(e)) / (1.0 + r);
        }
    }
    (total, terms)
}

/// E ∫_{x_max}^∞ |s_{t,y}|² t^{-1-r} dt = ∑_{P(n)≤y} ∫_{x_max}^∞ |Φ(n/t)|² t^{-2-r} dt,
/// with n beyond the enumeration handled through ∏(1 - p^{-1-r})^{-1}.
pub fn plancherel_lhs_tail(primes: &[u32], step: &StepFunction, r: f64, x_max: f64) -> f64 {
    let bound = (step.support() * x_max).floor() as u64;
    let ps: Vec<u64> = primes.iter().map(|&p| p as u64).collect();
    let e = -1.0 - r;
    let breaks = step.breaks();
    let vals = step.values();
    let w = step.weighted_norm_sq(r);
    let mut partial_zeta = 0.0;
    let mut tail = 0.0;
    for_each_smooth(&ps, bound, (), &|_, _| (), &mut |n, _| {
        let nf = n as f64;
        partial_zeta += nf.powf(e);
        // Pieces t ∈ [n/b_j, n/b_{j-1}) intersected with [x_max, ∞).
        let mut prev = 0.0f64;
        for (b, c) in breaks.iter().zip(vals) {
            let lo = (nf / b).max(x_max);
            let hi = if prev == 0.0 { f64::INFINITY } else { nf / prev };
            if hi > lo {
                let hi_term = if hi.is_infinite() { 0.0 } else { hi.powf(e) };
                tail += c.norm_sqr() * (lo.powf(e) - hi_term) / (1.0 + r);
            }
            prev = *b;
        }
    });
    let zeta: f64 = primes.iter().map(|&p| -(-(p as f64).powf(e)).ln_1p()).sum::<f64>().exp();
    tail + (zeta - partial_zeta).max(0.0) * w
}

/// Oscillators `amp · e^{i(phase + freq t)}` evaluated on Gauss–Legendre panels,
/// advancing each by a fixed rotation from panel to panel.
struct PanelBasis {
    centers: Vec<Complex64>,
    steps: Vec<Complex64>,
    offsets: Vec<[Complex64; 20]>,
    freqs: Vec<f64>,
    amps: Vec<Complex64>,
}

impl PanelBasis {
    fn new(amps: Vec<Complex64>, freqs: Vec<f64>, width: f64) -> Self {
        let g = gl20();
        let offsets = freqs
            .iter()
            .map(|&f| {
                let mut o = [Complex64::new(0.0, 0.0); 20];
                for (k, x) in g.nodes.iter().enumerate() {
                    o[k] = Complex64::from_polar(1.0, f * 0.5 * width * x);
                }
                o
            })
            .collect();
        let steps = freqs.iter().map(|&f| Complex64::from_polar(1.0, f * width)).collect();
        PanelBasis { centers: vec![Complex64::new(0.0, 0.0); freqs.len()], steps, offsets, freqs, amps }
    }

    fn sync(&mut self, center: f64) {
        for k in 0..self.freqs.len() {
            self.centers[k] = self.amps[k] * Complex64::from_polar(1.0, self.freqs[k] * center);
        }
    }

    fn advance(&mut self) {
        for (c, s) in self.centers.iter_mut().zip(&self.steps) {
            *c *= s;
        }
    }
}

/// (1/2π) ∫_a^b |A_y(σ+it) K_Φ(σ+it)|² dt over whole panels of `width`.
fn rhs_range(
    primes: &[u32],
    values: &[PrimeValue],
    step: &StepFunction,
    sigma: f64,
    a: f64,
    b: f64,
    width: f64,
) -> f64 {
    let panels = ((b - a) / width).round().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let g = gl20();
    let mut pb = PanelBasis::new(
        primes
            .iter()
            .zip(values)
            .map(|(&p, v)| Complex64::from_polar(v.modulus * (p as f64).powf(-sigma), TAU * v.turns()))
            .collect(),
        primes.iter().map(|&p| -(p as f64).ln()).collect(),
        width,
    );
    let r2: Vec<f64> = pb.amps.iter().map(|z| z.norm_sqr()).collect();
    let jumps = step.jumps();
    let mut kb = PanelBasis::new(
        jumps.iter().map(|(bl, d)| d * bl.powf(sigma)).collect(),
        jumps.iter().map(|(bl, _)| bl.ln()).collect(),
        width,
    );
    let mut total = 0.0;
    for i in 0..panels {
        let c = a + (i as f64 + 0.5) * width;
        if i % 256 == 0 {
            pb.sync(c);
            kb.sync(c);
        }
        let mut a2 = [1.0f64; 20];
        for k in 0..pb.freqs.len() {
            let z = pb.centers[k];
            let off = &pb.offsets[k];
            for j in 0..20 {
                let re = z.re * off[j].re - z.im * off[j].im;
                a2[j] *= 1.0 - 2.0 * re + r2[k];
            }
        }
        let mut s = 0.0;
        for j in 0..20 {
            let t = c + 0.5 * width * g.nodes[j];
            let mut num = Complex64::new(0.0, 0.0);
            for k in 0..kb.freqs.len() {
                num += kb.centers[k] * kb.offsets[k][j];
            }
            let k2 = num.norm_sqr() / (sigma * sigma + t * t);
            s += g.weights[j] * k2 / a2[j];
        }
        total += 0.5 * width * s;
        pb.advance();
        kb.advance();
    }
    total / TAU
}

/// sup_t |A_y(σ+it)|² for unimodular α(p): ∏(1 - p^{-σ})^{-2}.
fn sup_a2(primes: &[u32], values: &[PrimeValue], sigma: f64) -> f64 {
    primes
        .iter()
        .zip(values)
        .map(|(&p, v)| -2.0 * (-(v.modulus * (p as f64).powf(-sigma))).ln_1p())
        .sum::<f64>()
        .exp()
}

/// Right side of the Plancherel identity with its tail bound, doubling T from
/// `t_start` until the bound drops below `tail_ratio` of the head.
pub fn plancherel_rhs(
    primes: &[u32],
    values: &[PrimeValue],
    step: &StepFunction,
    r: f64,
    opts: &PlancherelOptions,
) -> Result<(f64, f64, f64)> {
    let sigma = 0.5 * (1.0 + r);
    let c = step.mellin_bound(sigma);
    let sup = sup_a2(primes, values, sigma);
    let tail = |t: f64| sup * c * c * 2.0 / (t * TAU);
    let mut t = opts.t_start;
    let mut head = rhs_range(primes, values, step, sigma, -t, t, opts.panel_width);
    while tail(t) > opts.tail_ratio * head {
        if 2.0 * t > opts.t_cap {
            return Err(Error::QuadratureBudget(format!(
                "Plancherel tail {:.3e} above {:.1e} of head {head:.6e} at T = {t}",
                tail(t),
                opts.tail_ratio
            )));
        }
        head += rhs_range(primes, values, step, sigma, t, 2.0 * t, opts.panel_width);
        head += rhs_range(primes, values, step, sigma, -2.0 * t, -t, opts.panel_width);
        t *= 2.0;
    }
    Ok((head, tail(t), t))
}

/// Both sides of ∫₀^∞ |s_{t,y}|² t^{-1-r} dt = (1/2π) ∫ |A_y K_Φ|²((1+r)/2 + it) dt.
pub fn plancherel_check(
    assign: &PhaseAssignment,
    table: &FactorTable,
    step: &StepFunction,
    y: f64,
    r: f64,
    opts: &PlancherelOptions,
) -> Result<PlancherelReport> {
    steinhaus_only(assign)?;
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("r must be >= 0, got {r}")));
    }
    if step.is_zero() {
        return Ok(PlancherelReport {
            lhs: 0.0,
            lhs_tail: 0.0,
            rhs: 0.0,
            rhs_tail_bound: 0.0,
            t_max: 0.0,
            smooth_terms: 0,
        });
    }
    let primes = table.primes_upto(y);
    let values = assign.values_for_prefix(primes);
    let (lhs, terms) = plancherel_lhs(primes, &values, step, r, opts.x_max);
    let lhs_tail = plancherel_lhs_tail(primes, step, r, opts.x_max);
    let (rhs, rhs_tail_bound, t_max) = plancherel_rhs(primes, &values, step, r, opts)?;
    Ok(PlancherelReport { lhs, lhs_tail, rhs, rhs_tail_bound, t_max, smooth_terms: terms })
}

/// (1/2π) ∫_{-T}^{T} |K_Φ(1/2+it)|² dt by panelled quadrature, and its tail bound.
pub fn parseval_numeric(step: &StepFunction, t_max: f64) -> (f64, f64) {
    let head = rhs_range(&[], &[], step, 0.5, -t_max, t_max, 0.5);
    let c = step.mellin_bound(0.5);
    (head, c * c * 2.0 / (t_max * TAU))
}

/// V proxy (1/2π) ∫_{-T}^{T} |K_Φ(1/2+it)|² m_{y,0}(dt) on a fixed t-grid.
#[derive(Debug, Clone)]
pub struct VProxy {
    pub grid: TGrid,
    weights: Vec<f64>,
    /// Bound on the expected contribution of |t| > T.
    pub tail_bound: f64,
}

impl VProxy {
    pub fn new(step: &StepFunction, y: f64, t_max: f64) -> Self {
        let grid = TGrid::covering(-t_max, t_max, default_spacing(y));
        let weights = grid
            .points()
            .iter()
            .map(|&t| step.mellin(Complex64::new(0.5, t)).norm_sqr() / TAU)
            .collect();
        let c = step.mellin_bound(0.5);
        let tail_bound = (y.ln().ln()).sqrt() * c * c * 2.0 / (t_max * TAU);
        VProxy { grid, weights, tail_bound }
    }

    pub fn eval(&self, setup: &EulerSetup, values: &[PrimeValue]) -> Result<f64> {
        setup.evaluate(values, self.grid)?.measure_m(&self.weights)
    }

    /// E[proxy] = √(log log y) · (trapezoid of |K|²/2π over the grid).
    pub fn expectation(&self, y: f64) -> f64 {
        let s: f64 = (0..self.grid.len()).map(|j| self.grid.weight(j) * self.weights[j]).sum();
        (y.ln().ln()).sqrt() * s
    }
}

/// Closed-form ∫_R |K_Φ(1/2+it)|² dt = 2π ∑_{l,m} d_l conj(d_m) min(b_l, b_m).
pub fn parseval_closed_form(step: &StepFunction) -> f64 {
    let j = step.jumps();
    let mut s = Complex64::new(0.0, 0.0);
    for (bl, dl) in &j {
        for (bm, dm) in &j {
            s += dl * dm.conj() * bl.min(*bm);
        }
    }
    2.0 * PI * s.re
}
