//! Ensembles and trend verdicts: moment trends, limit-distribution and
//! stable-convergence comparisons, the bracket report, the universality probe
//! and the residual-field suprema with their chaining bound.

use crate::concentration::{chaining_tail, gamma_functional, required_scale, DyadicSequence};
use crate::coupling::residual_lattice;
use crate::dickman::DickmanTable;
use crate::euler::{default_spacing, EulerSetup, ShiftParams, TGrid};
use crate::primes::FactorTable;
use crate::rmf::{partial_sums, phase_table, trial_seed, CisTable, Model, PhaseAssignment, Twist};
use crate::spectral::{StepFunction, VProxy};
use crate::stats::{ks_two_sample, mean_se, median, quantile, self_split_null, MeanSe};
use crate::truncation::{default_t_param, TruncationContext, TruncationPlan};
use crate::{Complex64, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Seed of sub-stream `stream` of an experiment rooted at `base`.
pub fn stream_seed(base: u64, stream: u64) -> u64 {
    trial_seed(base ^ 0xD1B5_4A32_D192_ED03, stream.wrapping_add(1))
}

/// Standard complex Gaussian: independent real and imaginary parts of variance 1/2.
pub fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// (x / (1 + (1-q)√(log log x)))^q.
pub fn harper_envelope(x: f64, q: f64) -> f64 {
    (x / (1.0 + (1.0 - q) * x.ln().ln().sqrt())).powf(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub x: u64,
    pub q: f64,
    /// E|∑_{n≤x} α(n)|^{2q}.
    pub estimate: MeanSe,
    pub envelope: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

/// Per-trial partial sums ∑_{n≤x} α(n) at each x of `xs` (increasing).
pub fn partial_sum_ensemble(table: &FactorTable, xs: &[u64], trials: u64, base_seed: u64) -> Result<Vec<Vec<Complex64>>> {
    if xs.windows(2).any(|w| w[0] >= w[1]) || xs.is_empty() {
        return Err(Error::InvalidArgument("x grid must be non-empty and increasing".into()));
    }
    let top = *xs.last().unwrap();
    (0..trials)
        .into_par_iter()
        .map(|j| {
            let ph = phase_table(&PhaseAssignment::steinhaus(trial_seed(base_seed, j)), table, top)?;
            Ok(partial_sums(&ph, xs))
        })
        .collect()
}

/// Fractional moments of the partial sums against the envelope, one row per (q, x).
pub fn moment_trend(xs: &[u64], sums: &[Vec<Complex64>], qs: &[f64]) -> Result<Vec<MomentRow>> {
    let mut rows = Vec::new();
    for &q in qs {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!("q must lie in (0, 1], got {q}")));
        }
        for (i, &x) in xs.iter().enumerate() {
            let v: Vec<f64> = sums.iter().map(|s| s[i].norm_sqr().powf(q)).collect();
            let estimate = mean_se(&v);
            let envelope = harper_envelope(x as f64, q);
            rows.push(MomentRow {
                x,
                q,
                estimate,
                envelope,
                ratio: estimate.mean / envelope,
                ratio_se: estimate.se / envelope,
            });
        }
    }
    Ok(rows)
}

/// max/min of the ratios in `rows`.
pub fn ratio_spread(rows: &[MomentRow]) -> f64 {
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    max / min
}

/// One trial of the CLT ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub s_full: Complex64,
    pub s_truncated: Complex64,
    pub bracket: f64,
    pub v_proxy: f64,
    /// Y = Re α(2).
    pub selector: f64,
    /// Independent standard complex Gaussian for the reference √(C V) G.
    pub gaussian: Complex64,
    /// Independent rotation e(θ) for the rotation-invariance check.
    pub rotation: Complex64,
}

impl TrialRecord {
    pub fn reference(&self, c: f64) -> Complex64 {
        self.gaussian * (c * self.v_proxy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltConfig {
    pub x: f64,
    pub eps: f64,
    pub delta: f64,
    pub trials: u64,
    pub seed: u64,
    /// V proxy cut-off y = exp((log x)^{y_exponent}).
    pub y_exponent: f64,
    pub t_max: f64,
}

impl CltConfig {
    pub fn y_ref(&self) -> f64 {
        self.x.ln().powf(self.y_exponent).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub c_eps_delta: f64,
    pub y_ref: f64,
    pub abs_s_full: MeanSe,
    pub abs2_s_full: MeanSe,
    pub abs2_s_truncated: MeanSe,
    pub bracket: MeanSe,
    pub v_proxy: MeanSe,
    /// E|S_{x,ε,δ}|^q for q ∈ {1/2, 1, 3/2}.
    pub fractional: Vec<(f64, MeanSe)>,
    pub ks_abs: f64,
    pub ks_re: f64,
    pub ks_bracket: f64,
}

impl Aggregates {
    /// Recomputes every aggregate from the records, in trial order.
    pub fn from_records(records: &[TrialRecord], c: f64, y_ref: f64) -> Self {
        let col = |f: &dyn Fn(&TrialRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
        let abs_t = col(&|r| r.s_truncated.norm());
        let reference: Vec<Complex64> = records.iter().map(|r| r.reference(c)).collect();
        let ref_abs: Vec<f64> = reference.iter().map(|z| z.norm()).collect();
        let ref_re: Vec<f64> = reference.iter().map(|z| z.re).collect();
        let cv = col(&|r| c * r.v_proxy);
        Aggregates {
            c_eps_delta: c,
            y_ref,
            abs_s_full: mean_se(&col(&|r| r.s_full.norm())),
            abs2_s_full: mean_se(&col(&|r| r.s_full.norm_sqr())),
            abs2_s_truncated: mean_se(&col(&|r| r.s_truncated.norm_sqr())),
            bracket: mean_se(&col(&|r| r.bracket)),
            v_proxy: mean_se(&col(&|r| r.v_proxy)),
            fractional: [0.5, 1.0, 1.5]
                .iter()
                .map(|&q| (q, mean_se(&abs_t.iter().map(|a| a.powf(q)).collect::<Vec<_>>())))
                .collect(),
            ks_abs: ks_two_sample(&abs_t, &ref_abs),
            ks_re: ks_two_sample(&col(&|r| r.s_truncated.re), &ref_re),
            ks_bracket: ks_two_sample(&col(&|r| r.bracket), &cv),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult<C> {
    pub config: C,
    pub records: Vec<TrialRecord>,
    pub aggregates: Aggregates,
}

/// Runs the CLT ensemble at one x: full and truncated sums, bracket, V proxy at
/// y_ref from the same realization, and the auxiliary draws.
pub fn clt_ensemble(table: &FactorTable, step: &StepFunction, cfg: &CltConfig) -> Result<EnsembleResult<CltConfig>> {
    let plan = TruncationPlan::new(cfg.x, cfg.eps, cfg.delta, step.support())?;
    let ctx = TruncationContext::new(table, plan, step.clone(), default_t_param(cfg.x))?;
    let c = DickmanTable::global().bracket_total(cfg.eps, cfg.delta)?;
    let y_ref = cfg.y_ref();
    let setup = EulerSetup::new(table, Twist::One, Model::Steinhaus, ShiftParams::new(y_ref, 0.0)?)?;
    let vp = VProxy::new(step, y_ref, cfg.t_max);
    let cis = CisTable::global();
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|j| {
            let seed = trial_seed(cfg.seed, j);
            let assign = PhaseAssignment::steinhaus(seed);
            let ph = ctx.phases(&assign, table)?;
            let sums = ctx.sums(&ph);
            let values = setup.prime_values(&assign)?;
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
            let gaussian = complex_gaussian(&mut rng);
            let theta: f64 = rng.gen();
            Ok(TrialRecord {
                trial: j,
                seed,
                s_full: sums.full,
                s_truncated: sums.truncated,
                bracket: ctx.bracket(&ph),
                v_proxy: vp.eval(&setup, &values)?,
                selector: cis.cis(ph[2]).re,
                gaussian,
                rotation: Complex64::from_polar(1.0, std::f64::consts::TAU * theta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = Aggregates::from_records(&records, c, y_ref);
    Ok(EnsembleResult { config: *cfg, records, aggregates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsBand {
    pub ks: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitTest {
    pub ks_abs: KsBand,
    pub ks_re: KsBand,
}

fn resample(xs: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| xs[i]).collect()
}

fn draw_indices(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..len)).collect()
}

/// KS distances on |S| and Re S against a reference sample, with paired
/// bootstrap bands (sample and reference resampled by the same indices).
pub fn limit_distribution_test(sample: &[Complex64], reference: &[Complex64], resamples: usize, seed: u64, level: f64) -> LimitTest {
    let band = |a: Vec<f64>, b: Vec<f64>, stream: u64| {
        let ks = ks_two_sample(&a, &b);
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, stream));
        let values: Vec<f64> = (0..resamples)
            .map(|_| {
                let idx = draw_indices(&mut rng, a.len().min(b.len()));
                ks_two_sample(&resample(&a, &idx), &resample(&b, &idx))
            })
            .collect();
        let tail = 0.5 * (1.0 - level);
        KsBand { ks, lo: quantile(&values, tail), hi: quantile(&values, 1.0 - tail) }
    };
    LimitTest {
        ks_abs: band(sample.iter().map(|z| z.norm()).collect(), reference.iter().map(|z| z.norm()).collect(), 1),
        ks_re: band(sample.iter().map(|z| z.re).collect(), reference.iter().map(|z| z.re).collect(), 2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub ks: Vec<f64>,
    /// Bootstrap band of KS_i − KS_{i+1} for each consecutive pair.
    pub diff_bands: Vec<(f64, f64)>,
    pub monotone: bool,
    pub separated: bool,
}

/// Three-point (or longer) trend check on KS(sample_i, reference_i): strictly
/// decreasing point estimates, and every consecutive difference with a bootstrap
/// band above zero.
pub fn ks_trend(pairs: &[(Vec<f64>, Vec<f64>)], resamples: usize, seed: u64, level: f64) -> TrendVerdict {
    let ks: Vec<f64> = pairs.iter().map(|(a, b)| ks_two_sample(a, b)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 7));
    let boot: Vec<Vec<f64>> = pairs
        .iter()
        .map(|(a, b)| {
            (0..resamples)
                .map(|_| {
                    let idx = draw_indices(&mut rng, a.len().min(b.len()));
                    ks_two_sample(&resample(a, &idx), &resample(b, &idx))
                })
                .collect()
        })
        .collect();
    let tail = 0.5 * (1.0 - level);
    let diff_bands: Vec<(f64, f64)> = boot
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
            (quantile(&d, tail), quantile(&d, 1.0 - tail))
        })
        .collect();
    TrendVerdict {
        monotone: ks.windows(2).all(|w| w[0] > w[1]),
        separated: diff_bands.iter().all(|&(lo, _)| lo > 0.0),
        ks,
        diff_bands,
    }
}

/// KS between Re S and Re(e(θ)S) for independent uniform θ, against the
/// self-split null of Re S.
pub fn rotation_check(sample: &[Complex64], rotations: &[Complex64], splits: usize, seed: u64, level: f64) -> (f64, f64) {
    let re: Vec<f64> = sample.iter().map(|z| z.re).collect();
    let rot: Vec<f64> = sample.iter().zip(rotations).map(|(z, w)| (z * w).re).collect();
    (ks_two_sample(&re, &rot), self_split_null(&re, splits, seed, level))
}

/// Bounded Lipschitz test functions for the stable-convergence probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    One,
    /// min(|z|, c)
    CapAbs(f64),
    /// clamp(Re z, -c, c)
    ClipRe(f64),
}

impl TestFunction {
    pub fn eval(&self, z: Complex64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::CapAbs(c) => z.norm().min(c),
            TestFunction::ClipRe(c) => z.re.clamp(-c, c),
        }
    }

    pub fn panel() -> Vec<TestFunction> {
        vec![TestFunction::One, TestFunction::CapAbs(1.0), TestFunction::CapAbs(2.0), TestFunction::ClipRe(1.0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableRow {
    pub h: TestFunction,
    /// E[Y h(S)]
    pub lhs: f64,
    /// E[Y h(√(c V) G)]
    pub rhs: f64,
    pub gap: f64,
}

/// E[Y h(S)] against E[Y h(√(c V) G)], with V and Y from the same trial.
/// `use_selector = false` takes Y ≡ 1.
pub fn stable_convergence_probe(records: &[TrialRecord], truncated: bool, c: f64, use_selector: bool, panel: &[TestFunction]) -> Vec<StableRow> {
    let n = records.len() as f64;
    panel
        .iter()
        .map(|&h| {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for r in records {
                let y = if use_selector { r.selector } else { 1.0 };
                let s = if truncated { r.s_truncated } else { r.s_full };
                lhs += y * h.eval(s);
                rhs += y * h.eval(r.reference(c));
            }
            let (lhs, rhs) = (lhs / n, rhs / n);
            StableRow { h, lhs, rhs, gap: (lhs - rhs).abs() }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketRow {
    pub x: f64,
    pub y_ref: f64,
    pub c_eps_delta: f64,
    pub ks: f64,
    pub bracket: MeanSe,
    pub scaled_v: MeanSe,
    pub median_ratio: f64,
}

/// KS between T_{x,ε,δ} and C_{ε,δ}·V proxy at each x of the ensembles.
pub fn bracket_convergence_report(ensembles: &[EnsembleResult<CltConfig>]) -> Vec<BracketRow> {
    ensembles
        .iter()
        .map(|e| {
            let c = e.aggregates.c_eps_delta;
            let t: Vec<f64> = e.records.iter().map(|r| r.bracket).collect();
            let cv: Vec<f64> = e.records.iter().map(|r| c * r.v_proxy).collect();
            let ratio: Vec<f64> = t.iter().zip(&cv).filter(|(_, v)| **v > 0.0).map(|(a, b)| a / b).collect();
            BracketRow {
                x: e.config.x,
                y_ref: e.aggregates.y_ref,
                c_eps_delta: c,
                ks: ks_two_sample(&t, &cv),
                bracket: mean_se(&t),
                scaled_v: mean_se(&cv),
                median_ratio: median(&ratio),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityProbe {
    pub y: f64,
    pub us: Vec<f64>,
    pub interval: (f64, f64),
    /// m_{y,u}(h) per trial, one row per u.
    pub samples: Vec<Vec<f64>>,
    /// (u_a, u_b, KS).
    pub pairwise: Vec<(f64, f64, f64)>,
    /// `level` quantile of the KS between random halves of the u = 0 sample.
    pub null: f64,
    pub pass: bool,
}

/// m_{y,u}(1_I) for each u, independent realizations per u.
#[allow(clippy::too_many_arguments)]
pub fn universality_probe(
    table: &FactorTable,
    twist: Twist,
    model: Model,
    y: f64,
    us: &[f64],
    interval: (f64, f64),
    trials: u64,
    base_seed: u64,
    null_splits: usize,
    level: f64,
) -> Result<UniversalityProbe> {
    let grid = TGrid::covering(interval.0, interval.1, default_spacing(y));
    let mut samples = Vec::new();
    for (i, &u) in us.iter().enumerate() {
        let setup = EulerSetup::new(table, twist, model, ShiftParams::new(y, u)?)?;
        let base = stream_seed(base_seed, 100 + i as u64);
        let v = (0..trials)
            .into_par_iter()
            .map(|j| {
                let values = setup.prime_values(&PhaseAssignment::new(model, trial_seed(base, j)))?;
                Ok(setup.evaluate(&values, grid)?.mass_m())
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(v);
    }
    let mut pairwise = Vec::new();
    for a in 0..us.len() {
        for b in a + 1..us.len() {
            pairwise.push((us[a], us[b], ks_two_sample(&samples[a], &samples[b])));
        }
    }
    let null = self_split_null(&samples[0], null_splits, stream_seed(base_seed, 99), level);
    let pass = pairwise.iter().all(|p| p.2 <= null);
    Ok(UniversalityProbe { y, us: us.to_vec(), interval, samples, pairwise, null, pass })
}

/// Residual field 𝒢̃ on the `m³` lattice of `interval` for each trial.
#[allow(clippy::too_many_arguments)]
pub fn residual_lattices(
    table: &FactorTable,
    twist: Twist,
    y: f64,
    u: [f64; 2],
    interval: (f64, f64),
    m: usize,
    trials: u64,
    base_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if m < 2 {
        return Err(Error::InvalidArgument("lattice needs at least 2 points per axis".into()));
    }
    let points: Vec<f64> = (0..m).map(|i| interval.0 + (interval.1 - interval.0) * i as f64 / (m - 1) as f64).collect();
    let primes = table.primes_upto(y);
    (0..trials)
        .into_par_iter()
        .map(|j| {
            let values = PhaseAssignment::steinhaus(trial_seed(base_seed, j)).values_for_prefix(primes);
            let turns: Vec<f64> = values.iter().map(|v| v.turns()).collect();
            residual_lattice(table, twist, y, u, &points, &turns)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSupRow {
    pub y: f64,
    pub median_sup: f64,
    pub mean_sup: MeanSe,
    /// E exp(sup |𝒢̃|).
    pub exp_moment: MeanSe,
}

pub fn residual_sup_row(y: f64, lattices: &[Vec<f64>]) -> ResidualSupRow {
    let sups: Vec<f64> = lattices.iter().map(|l| l.iter().fold(0.0f64, |a, v| a.max(v.abs()))).collect();
    ResidualSupRow {
        y,
        median_sup: median(&sups),
        mean_sup: mean_se(&sups),
        exp_moment: mean_se(&sups.iter().map(|s| s.exp()).collect::<Vec<_>>()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainingReport {
    pub y: f64,
    pub u: [f64; 2],
    pub interval: (f64, f64),
    /// Fitted K in d = K·|·|: smallest scale for which the two-point tails hold.
    pub k_scale: f64,
    /// C_f = K log y / (u1 + u2).
    pub c_f: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub thresholds: Vec<f64>,
    /// Empirical P(max 𝒢̃ − min 𝒢̃ > x) over the lattice.
    pub mc_tail: Vec<f64>,
    pub bound: Vec<f64>,
    pub dominated: bool,
}

/// Fits the increment scale from lattice pairs, evaluates γ₁, γ₂ on the cube and
/// compares the chaining tail with the empirical tail of the lattice oscillation.
pub fn chaining_dominance(
    lattices: &[Vec<f64>],
    m: usize,
    y: f64,
    u: [f64; 2],
    interval: (f64, f64),
    n_max: u32,
    gamma_lattice: usize,
) -> Result<ChainingReport> {
    if lattices.is_empty() || lattices.iter().any(|l| l.len() != m * m * m) {
        return Err(Error::InvalidArgument("lattice samples must have m³ entries".into()));
    }
    let h = (interval.1 - interval.0) / (m - 1) as f64;
    let coords = |idx: usize| [(idx % m) as f64 * h, ((idx / m) % m) as f64 * h, (idx / (m * m)) as f64 * h];
    // Pairs: each lattice point against the origin corner and the centre.
    let anchors = [0usize, (m / 2) * (m * m + m + 1)];
    let mut k_scale: f64 = 0.0;
    let levels = [0.5, 0.8, 0.9, 0.95, 0.99];
    for &a in &anchors {
        for b in 0..m * m * m {
            if b == a {
                continue;
            }
            let (ca, cb) = (coords(a), coords(b));
            let d = ca.iter().zip(&cb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let inc: Vec<f64> = lattices.iter().map(|l| (l[a] - l[b]).abs()).collect();
            let xs: Vec<f64> = levels.iter().map(|&q| quantile(&inc, q)).filter(|&x| x > 0.0).collect();
            let ps: Vec<f64> = xs.iter().map(|&x| inc.iter().filter(|&&v| v > x).count() as f64 / inc.len() as f64).collect();
            k_scale = k_scale.max(required_scale(&xs, &ps) / d);
        }
    }
    let seq = DyadicSequence::new(interval.0, interval.1)?;
    let gamma1 = gamma_functional(&seq, k_scale, 1, n_max, gamma_lattice);
    let gamma2 = gamma_functional(&seq, k_scale, 2, n_max, gamma_lattice);
    let osc: Vec<f64> = lattices
        .iter()
        .map(|l| {
            let max = l.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let min = l.iter().fold(f64::INFINITY, |a, &v| a.min(v));
            max - min
        })
        .collect();
    let thresholds: Vec<f64> = [0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99].iter().map(|&q| quantile(&osc, q)).collect();
    let mc_tail: Vec<f64> = thresholds.iter().map(|&x| osc.iter().filter(|&&v| v > x).count() as f64 / osc.len() as f64).collect();
    let bound: Vec<f64> = thresholds.iter().map(|&x| chaining_tail(gamma1, gamma2, 4.0, x)).collect();
    let dominated = mc_tail.iter().zip(&bound).all(|(p, b)| p <= b);
    Ok(ChainingReport {
        y,
        u,
        interval,
        k_scale,
        c_f: k_scale * y.ln() / (u[0] + u[1]),
        gamma1,
        gamma2,
        thresholds,
        mc_tail,
        bound,
        dominated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::build_factor_table;
    use std::sync::OnceLock;

    fn table() -> &'static FactorTable {
        static T: OnceLock<FactorTable> = OnceLock::new();
        T.get_or_init(|| build_factor_table(200_000).unwrap())
    }

    #[test]
    fn envelope_and_moment_rows() {
        assert!((harper_envelope(1e4, 1.0) - 1e4).abs() < 1e-9);
        let xs = [100u64, 1000];
        let sums = partial_sum_ensemble(table(), &xs, 3000, 5).unwrap();
        let rows = moment_trend(&xs, &sums, &[1.0, 0.5]).unwrap();
        for r in rows.iter().filter(|r| r.q == 1.0) {
            assert!((r.estimate.mean - r.x as f64).abs() < 3.0 * r.estimate.se, "{r:?}");
        }
        assert!(moment_trend(&xs, &sums, &[0.0]).is_err());
        // q → 0⁺: |·|^{2q} → 1.
        let tiny = moment_trend(&xs, &sums, &[1e-9]).unwrap();
        assert!(tiny.iter().all(|r| (r.estimate.mean - 1.0).abs() < 1e-6));
        assert!(partial_sum_ensemble(table(), &[10, 5], 1, 0).is_err());
    }

    #[test]
    fn gaussian_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<Complex64> = (0..20_000).map(|_| complex_gaussian(&mut rng)).collect();
        let m = mean_se(&z.iter().map(|w| w.norm_sqr()).collect::<Vec<_>>());
        assert!((m.mean - 1.0).abs() < 3.0 * m.se);
    }

    #[test]
    fn limit_test_self_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<Complex64> = (0..2000).map(|_| complex_gaussian(&mut rng)).collect();
        let b: Vec<Complex64> = (0..2000).map(|_| complex_gaussian(&mut rng)).collect();
        let same = limit_distribution_test(&a[..1000], &a[1000..], 100, 3, 0.95);
        let null = self_split_null(&a.iter().map(|z| z.norm()).collect::<Vec<_>>(), 200, 4, 0.95);
        assert!(same.ks_abs.ks <= null);
        let scaled: Vec<Complex64> = b.iter().map(|z| z * 2.0).collect();
        let far = limit_distribution_test(&a, &scaled, 100, 3, 0.95);
        assert!(far.ks_abs.lo > same.ks_abs.hi);
    }

    #[test]
    fn trend_verdicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pairs = Vec::new();
        for scale in [2.0, 1.5, 1.1] {
            let a: Vec<f64> = (0..1500).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
            let b: Vec<f64> = (0..1500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            pairs.push((a, b));
        }
        let v = ks_trend(&pairs, 100, 1, 0.95);
        assert!(v.monotone && v.separated, "{v:?}");
        pairs.reverse();
        let v = ks_trend(&pairs, 100, 1, 0.95);
        assert!(!v.monotone && !v.separated);
    }

    #[test]
    fn stable_probe_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records: Vec<TrialRecord> = (0..500)
            .map(|j| TrialRecord {
                trial: j,
                seed: j,
                s_full: complex_gaussian(&mut rng),
                s_truncated: complex_gaussian(&mut rng),
                bracket: 1.0,
                v_proxy: 1.0,
                selector: rng.gen_range(-1.0..1.0),
                gaussian: complex_gaussian(&mut rng),
                rotation: Complex64::new(1.0, 0.0),
            })
            .collect();
        let rows = stable_convergence_probe(&records, false, 1.0, true, &TestFunction::panel());
        assert_eq!(rows[0].gap, 0.0);
        let plain = stable_convergence_probe(&records, false, 1.0, false, &[TestFunction::One]);
        assert_eq!((plain[0].lhs, plain[0].rhs), (1.0, 1.0));
    }

    #[test]
    fn clt_ensemble_small() {
        let cfg = CltConfig { x: 3000.0, eps: 0.2, delta: 0.2, trials: 40, seed: 11, y_exponent: 0.9, t_max: 10.0 };
        let unit = StepFunction::unit();
        let e = clt_ensemble(table(), &unit, &cfg).unwrap();
        assert_eq!(e.records.len(), 40);
        assert_eq!(Aggregates::from_records(&e.records, e.aggregates.c_eps_delta, e.aggregates.y_ref), e.aggregates);
        assert!(e.records.iter().all(|r| r.bracket > 0.0 && r.v_proxy > 0.0));
        // Φ ← 2Φ scales every quadratic functional by 4.
        let twice = clt_ensemble(table(), &unit.scale(Complex64::new(2.0, 0.0)), &cfg).unwrap();
        for (a, b) in e.records.iter().zip(&twice.records) {
            assert!((b.bracket - 4.0 * a.bracket).abs() < 1e-12 * b.bracket);
            assert!((b.v_proxy - 4.0 * a.v_proxy).abs() < 1e-12 * b.v_proxy);
            assert!((b.s_full.norm_sqr() - 4.0 * a.s_full.norm_sqr()).abs() < 1e-12 * b.s_full.norm_sqr().max(1e-300));
        }
        // Deterministic reruns.
        assert_eq!(clt_ensemble(table(), &unit, &cfg).unwrap(), e);
        let zero = clt_ensemble(table(), &StepFunction::zero().add(&StepFunction::real(&[1.0], &[0.0]).unwrap()), &cfg).unwrap();
        assert!(zero.records.iter().all(|r| r.bracket == 0.0 && r.v_proxy == 0.0));
        let rows = bracket_convergence_report(&[zero]);
        assert_eq!(rows[0].bracket.mean, 0.0);
        assert_eq!(rows[0].scaled_v.mean, 0.0);
    }

    #[test]
    fn residual_and_chaining_small() {
        let m = 4;
        let lat = residual_lattices(table(), Twist::One, 100.0, [1.0, 1.0], (-0.5, 0.5), m, 60, 3).unwrap();
        assert_eq!(lat.len(), 60);
        let row = residual_sup_row(100.0, &lat);
        assert!(row.median_sup > 0.0 && row.exp_moment.mean >= 1.0);
        let rep = chaining_dominance(&lat, m, 100.0, [1.0, 1.0], (-0.5, 0.5), 5, 8).unwrap();
        assert!(rep.k_scale > 0.0 && rep.gamma2 > 0.0 && rep.gamma1 > rep.gamma2);
        assert!(rep.bound.iter().zip(&rep.bound[1..]).all(|(a, b)| a >= b));
    }

    #[test]
    fn universality_small() {
        let p = universality_probe(table(), Twist::One, Model::Steinhaus, 1000.0, &[0.0, 1.0], (-0.5, 0.5), 60, 5, 50, 0.95).unwrap();
        assert_eq!(p.samples.len(), 2);
        assert!(p.samples.iter().flatten().all(|&v| v > 0.0));
        assert_eq!(p.pairwise.len(), 1);
    }
}
