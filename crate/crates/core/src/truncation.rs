//! Truncation of the normalized sum S^Φ_x: cut points x_k = x^{ε+kδ}, the
//! keep rule, martingale increments Z'_{x,p}, the bracket T_{x,ε,δ} and the
//! decomposition of the discarded mass into b_{k,1}, b_{k,2}, b_3.

use crate::primes::{for_each_smooth, FactorTable};
use crate::rmf::{phase_table, trial_seed, CisTable, PhaseAssignment};
use crate::spectral::StepFunction;
use crate::stats::{mean_se, MeanSe};
use crate::{Complex64, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPlan {
    pub x: f64,
    pub eps: f64,
    pub delta: f64,
    /// Support bound A of Φ.
    pub support: f64,
    cuts: Vec<f64>,
}

/// Rounds values within 10⁻⁹ relative of an integer, so that e.g. x^{1/2} at
/// x = 10⁴ is exactly 100.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.max(1.0) {
        r
    } else {
        v
    }
}

impl TruncationPlan {
    pub fn new(x: f64, eps: f64, delta: f64, support: f64) -> Result<Self> {
        if !(x >= 3.0) || !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) || !(support > 0.0 && support.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "plan needs x >= 3, eps and delta in (0, 1), A > 0; got x={x} eps={eps} delta={delta} A={support}"
            )));
        }
        let top = support * x;
        let mut cuts = vec![snap(x.powf(eps))];
        let mut k = 1u32;
        loop {
            let c = snap(x.powf(eps + k as f64 * delta));
            cuts.push(c);
            if c >= top {
                break;
            }
            k += 1;
        }
        Ok(TruncationPlan { x, eps, delta, support, cuts })
    }

    /// K, the last bucket index.
    pub fn k_max(&self) -> usize {
        self.cuts.len() - 2
    }

    /// x_k for k = 0..=K+1.
    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// k with p ∈ I_k = (x_k, x_{k+1}], if any.
    pub fn bucket(&self, p: u64) -> Option<usize> {
        let pf = p as f64;
        if pf <= self.cuts[0] || pf > *self.cuts.last().unwrap() {
            return None;
        }
        Some(self.cuts.partition_point(|&c| c < pf) - 1)
    }

    /// ⌊A x⌋.
    pub fn n_max(&self) -> u64 {
        snap(self.support * self.x).floor() as u64
    }

    /// (log log x)^{1/4} / √x.
    pub fn normalization(&self) -> f64 {
        self.x.ln().ln().powf(0.25) / self.x.sqrt()
    }
}

/// T(x) = x^{1/log log x}.
pub fn default_t_param(x: f64) -> f64 {
    x.powf(1.0 / x.ln().ln())
}

/// The three discard rules, evaluated from the factorization of n.
pub fn keep_predicate(plan: &TruncationPlan, table: &FactorTable, n: u64) -> Result<bool> {
    let p = table.largest_prime_factor(n)?;
    let Some(k) = plan.bucket(p) else {
        return Ok(false);
    };
    let m = n / p;
    if m.is_multiple_of(p) {
        return Ok(false);
    }
    let q = if m == 1 { 1 } else { table.largest_prime_factor(m)? };
    Ok(q as f64 <= plan.cuts[k])
}

const SMALL: u16 = 0;
const REPEATED: u16 = 1;
const KEEP: u16 = 2;
const B1: u16 = 3;
const B2: u16 = 4;
const B3: u16 = 5;

fn code(kind: u16, k: usize) -> u16 {
    kind + 4 * k as u16
}

/// Splits a code ≥ 2 into (kind, k).
fn decode(c: u16) -> (u16, usize) {
    (2 + (c - 2) % 4, ((c - 2) / 4) as usize)
}

/// Counts for the at-most-one-pair property behind b_3 at small x.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct B3Flags {
    /// n with two or more pairs q < p in a common I_k, pq > x/T, pq | n.
    pub multi_pair: u64,
    /// n with at least one such pair that the classification does not place in b_3.
    pub outside_b3: u64,
}

/// Per-trial sums; `full`, `eps_sum` and `truncated` carry the (log log x)^{1/4}/√x
/// normalization, the b terms only 1/√x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSums {
    pub full: Complex64,
    /// S_{x,ε}: P(n) > x^ε and P(n)² ∤ n.
    pub eps_sum: Complex64,
    pub truncated: Complex64,
    pub b1: Vec<Complex64>,
    pub b2: Vec<Complex64>,
    pub b3: Complex64,
    /// b_3 summed literally over qualifying pairs (each n counted once per pair).
    pub b3_pairs: Complex64,
    pub loglog_quarter: f64,
}

impl TrialSums {
    /// |S_{x,ε} − S_{x,ε,δ} − (log log x)^{1/4}(∑_k (b_{k,1} + b_{k,2}) + b_3)|.
    pub fn reassembly_error(&self) -> f64 {
        let b: Complex64 = self.b1.iter().chain(&self.b2).sum::<Complex64>() + self.b3;
        (self.eps_sum - self.truncated - b * self.loglog_quarter).norm()
    }
}

/// Everything about a plan that does not depend on the realization: the class
/// of each n ≤ Ax, the primes carrying increments and the per-k smooth lists.
pub struct TruncationContext {
    pub plan: TruncationPlan,
    pub t_param: f64,
    pub step: StepFunction,
    pub flags: B3Flags,
    lpf: Vec<u32>,
    codes: Vec<u16>,
    pair_count: Vec<u8>,
    phi: Vec<Complex64>,
    primes: Vec<u32>,
    prime_bucket: Vec<u16>,
    smooth: Vec<Vec<u32>>,
}

impl TruncationContext {
    pub fn new(table: &FactorTable, plan: TruncationPlan, step: StepFunction, t_param: f64) -> Result<Self> {
        if (step.support() - plan.support).abs() > 1e-12 * plan.support && !step.is_zero() {
            return Err(Error::InvalidArgument(format!(
                "plan support {} differs from Φ support {}",
                plan.support,
                step.support()
            )));
        }
        let n_max = plan.n_max();
        if n_max > table.limit() {
            return Err(Error::Capacity { requested: n_max, limit: table.limit() });
        }
        if plan.k_max() > 4000 {
            return Err(Error::InvalidArgument(format!("too many buckets: K = {}", plan.k_max())));
        }
        let lpf = table.largest_prime_factors(n_max)?;
        let len = n_max as usize + 1;
        let x0 = plan.cuts[0];
        let pair_cut = plan.x / t_param;
        let mut codes = vec![SMALL; len];
        let mut pair_count = vec![0u8; len];
        let mut flags = B3Flags::default();
        let mut distinct: Vec<(u64, usize)> = Vec::new();
        for n in 2..len {
            let p = lpf[n] as u64;
            let Some(k) = plan.bucket(p) else { continue };
            let m = n / p as usize;
            let c = if (m as u64).is_multiple_of(p) {
                REPEATED
            } else {
                let q = lpf[m] as u64;
                if q as f64 <= plan.cuts[k] {
                    code(KEEP, k)
                } else if (m as u64 / q).is_multiple_of(q) {
                    code(B1, k)
                } else if ((p * q) as f64) <= pair_cut {
                    code(B2, k)
                } else {
                    code(B3, k)
                }
            };
            codes[n] = c;
            // Pairs q < p > x^ε in a common bucket with pq > x/T dividing n.
            distinct.clear();
            let mut r = n as u64;
            while r > 1 {
                let f = lpf[r as usize] as u64;
                if (f as f64) <= x0 {
                    break;
                }
                while r.is_multiple_of(f) {
                    r /= f;
                }
                distinct.push((f, plan.bucket(f).unwrap()));
            }
            let mut pairs = 0u32;
            for i in 0..distinct.len() {
                for j in i + 1..distinct.len() {
                    let ((a, ka), (b, kb)) = (distinct[i], distinct[j]);
                    if ka == kb && (a * b) as f64 > pair_cut {
                        pairs += 1;
                    }
                }
            }
            pair_count[n] = pairs.min(255) as u8;
            if pairs >= 2 {
                flags.multi_pair += 1;
            }
            if pairs >= 1 && (c < 2 || decode(c).0 != B3) {
                flags.outside_b3 += 1;
            }
        }
        let phi = (0..len).map(|n| if n == 0 { Complex64::default() } else { step.eval(n as f64 / plan.x) }).collect();
        let mut primes = Vec::new();
        let mut prime_bucket = Vec::new();
        for &p in table.primes_upto(n_max as f64) {
            if let Some(k) = plan.bucket(p as u64) {
                primes.push(p);
                prime_bucket.push(k as u16);
            }
        }
        let smooth = (0..=plan.k_max())
            .map(|k| {
                let xk = plan.cuts[k];
                let top = ((n_max as f64) / xk).floor() as usize;
                (1..=top.min(n_max as usize)).filter(|&m| lpf[m] as f64 <= xk).map(|m| m as u32).collect()
            })
            .collect();
        Ok(TruncationContext { plan, t_param, step, flags, lpf, codes, pair_count, phi, primes, prime_bucket, smooth })
    }

    pub fn n_max(&self) -> usize {
        self.codes.len() - 1
    }

    /// Primes p with x^ε < p ≤ Ax, the index set of the increments.
    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Phases for α(n), n ≤ Ax.
    pub fn phases(&self, assign: &PhaseAssignment, table: &FactorTable) -> Result<Vec<u32>> {
        phase_table(assign, table, self.n_max() as u64)
    }

    pub fn is_kept(&self, n: u64) -> bool {
        let c = self.codes[n as usize];
        c >= 2 && decode(c).0 == KEEP
    }

    /// All sums of one realization, in a single pass over n ≤ Ax.
    pub fn sums(&self, phases: &[u32]) -> TrialSums {
        let cis = CisTable::global();
        let kk = self.plan.k_max() + 1;
        let mut full = Complex64::default();
        let mut eps_sum = Complex64::default();
        let mut truncated = Complex64::default();
        let mut b1 = vec![Complex64::default(); kk];
        let mut b2 = vec![Complex64::default(); kk];
        let mut b3 = Complex64::default();
        let mut b3_pairs = Complex64::default();
        for n in 1..=self.n_max() {
            let f = self.phi[n];
            if f == Complex64::default() {
                continue;
            }
            let term = cis.cis(phases[n]) * f;
            full += term;
            if self.pair_count[n] > 0 {
                b3_pairs += term * self.pair_count[n] as f64;
            }
            let c = self.codes[n];
            if c < 2 {
                continue;
            }
            eps_sum += term;
            let (kind, k) = decode(c);
            match kind {
                KEEP => truncated += term,
                B1 => b1[k] += term,
                B2 => b2[k] += term,
                _ => b3 += term,
            }
        }
        let norm = self.plan.normalization();
        let root = self.plan.x.sqrt();
        TrialSums {
            full: full * norm,
            eps_sum: eps_sum * norm,
            truncated: truncated * norm,
            b1: b1.into_iter().map(|b| b / root).collect(),
            b2: b2.into_iter().map(|b| b / root).collect(),
            b3: b3 / root,
            b3_pairs: b3_pairs / root,
            loglog_quarter: self.plan.x.ln().ln().powf(0.25),
        }
    }

    /// ∑_{P(m) ≤ x_k} α(m) Φ(mp/x) for each increment prime p ∈ I_k, from
    /// prefix sums over the sorted per-k smooth lists.
    pub fn inner_sums(&self, phases: &[u32]) -> Vec<Complex64> {
        let cis = CisTable::global();
        let prefixes: Vec<Vec<Complex64>> = self
            .smooth
            .iter()
            .map(|list| {
                let mut acc = Complex64::default();
                let mut out = Vec::with_capacity(list.len() + 1);
                out.push(acc);
                for &m in list {
                    acc += cis.cis(phases[m as usize]);
                    out.push(acc);
                }
                out
            })
            .collect();
        let breaks = self.step.breaks();
        let values = self.step.values();
        let x = self.plan.x;
        self.primes
            .iter()
            .zip(&self.prime_bucket)
            .map(|(&p, &k)| {
                let list = &self.smooth[k as usize];
                let pre = &prefixes[k as usize];
                let p = p as u64;
                let mut prev = 0usize;
                let mut acc = Complex64::default();
                for (&b, &c) in breaks.iter().zip(values) {
                    let idx = list.partition_point(|&m| (m as u64 * p) as f64 / x <= b);
                    acc += c * (pre[idx] - pre[prev]);
                    prev = idx;
                }
                acc
            })
            .collect()
    }

    /// Z'_{x,p} for each increment prime, in the order of [`Self::primes`].
    pub fn increments(&self, phases: &[u32]) -> Vec<Complex64> {
        let cis = CisTable::global();
        let norm = self.plan.normalization();
        self.inner_sums(phases)
            .into_iter()
            .zip(&self.primes)
            .map(|(s, &p)| cis.cis(phases[p as usize]) * s * norm)
            .collect()
    }

    /// T_{x,ε,δ} = (√(log log x)/x) ∑_k ∑_{p∈I_k} |∑_{P(m)≤x_k} α(m)Φ(mp/x)|².
    pub fn bracket(&self, phases: &[u32]) -> f64 {
        let n2 = self.plan.normalization().powi(2);
        self.inner_sums(phases).iter().map(|s| s.norm_sqr()).sum::<f64>() * n2
    }

    /// ∑_p E[|Z'_{x,p}|² | F_{p⁻}], assembling each Z'_{x,p} from the kept n
    /// with P(n) = p and integrating out α(p), which enters linearly.
    pub fn bracket_by_grouping(&self, phases: &[u32]) -> f64 {
        let cis = CisTable::global();
        let mut z = vec![Complex64::default(); self.primes.len()];
        for n in 2..=self.n_max() {
            if !self.is_kept(n as u64) {
                continue;
            }
            let p = self.lpf[n];
            let i = self.primes.binary_search(&p).expect("kept n has an increment prime");
            z[i] += cis.cis(phases[n]) * self.phi[n];
        }
        // |α(p)| = 1, so E[|α(p) w|² | F_{p⁻}] = |α(p) w|².
        let n2 = self.plan.normalization().powi(2);
        z.iter().map(|w| w.norm_sqr()).sum::<f64>() * n2
    }

    /// ∑_p |Z'_{x,p}|⁴ for one realization.
    pub fn lindeberg_sum(&self, phases: &[u32]) -> f64 {
        let n4 = self.plan.normalization().powi(4);
        self.inner_sums(phases).iter().map(|s| s.norm_sqr().powi(2)).sum::<f64>() * n4
    }

    /// Runs `f` on the phases of trials `0..trials` rooted at `base_seed`, in parallel,
    /// returning results in trial order.
    pub fn ensemble<T: Send>(
        &self,
        table: &FactorTable,
        trials: u64,
        base_seed: u64,
        f: impl Fn(&[u32]) -> T + Sync,
    ) -> Result<Vec<T>> {
        (0..trials)
            .into_par_iter()
            .map(|j| {
                let ph = self.phases(&PhaseAssignment::steinhaus(trial_seed(base_seed, j)), table)?;
                Ok(f(&ph))
            })
            .collect()
    }
}

/// S^Φ_x = (log log x)^{1/4} x^{-1/2} ∑_n α(n) Φ(n/x).
pub fn full_sum(assign: &PhaseAssignment, table: &FactorTable, step: &StepFunction, x: f64) -> Result<Complex64> {
    if !(x >= 3.0) {
        return Err(Error::InvalidArgument(format!("x must be >= 3, got {x}")));
    }
    let n_max = snap(step.support() * x).floor() as u64;
    if n_max > table.limit() {
        return Err(Error::Capacity { requested: n_max, limit: table.limit() });
    }
    let ph = phase_table(assign, table, n_max.max(1))?;
    let cis = CisTable::global();
    let s: Complex64 = (1..=n_max as usize).map(|n| cis.cis(ph[n]) * step.eval(n as f64 / x)).sum();
    Ok(s * x.ln().ln().powf(0.25) / x.sqrt())
}

fn context(table: &FactorTable, step: &StepFunction, plan: &TruncationPlan) -> Result<TruncationContext> {
    TruncationContext::new(table, plan.clone(), step.clone(), default_t_param(plan.x))
}

/// S^Φ_{x,ε,δ}.
pub fn truncated_sum(assign: &PhaseAssignment, table: &FactorTable, step: &StepFunction, plan: &TruncationPlan) -> Result<Complex64> {
    let ctx = context(table, step, plan)?;
    Ok(ctx.sums(&ctx.phases(assign, table)?).truncated)
}

/// Z'_{x,p}; zero when p is outside (x^ε, Ax].
pub fn martingale_increment_z(
    assign: &PhaseAssignment,
    table: &FactorTable,
    step: &StepFunction,
    plan: &TruncationPlan,
    p: u64,
) -> Result<Complex64> {
    if p > plan.n_max() {
        return Ok(Complex64::default());
    }
    let Some(k) = plan.bucket(p) else {
        return Ok(Complex64::default());
    };
    let alpha_p = assign.value(table, p)?.complex();
    let bound = plan.n_max() / p;
    let xk = plan.cuts[k];
    let ps: Vec<u64> = table.primes_upto(xk.min(bound as f64)).iter().map(|&q| q as u64).collect();
    let mut acc = Complex64::default();
    let mut err = None;
    for_each_smooth(&ps, bound, (), &|_, _| (), &mut |m, _| match assign.alpha(table, m) {
        Ok(a) => acc += a * step.eval((m * p) as f64 / plan.x),
        Err(e) => err = Some(e),
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(alpha_p * acc * plan.normalization())
}

/// T_{x,ε,δ} for one realization.
pub fn bracket_process(assign: &PhaseAssignment, table: &FactorTable, step: &StepFunction, plan: &TruncationPlan) -> Result<f64> {
    let ctx = context(table, step, plan)?;
    Ok(ctx.bracket(&ctx.phases(assign, table)?))
}

/// The decomposition of S_{x,ε} − S_{x,ε,δ}, with the b_3 flag counts.
pub fn discard_diagnostics(
    assign: &PhaseAssignment,
    table: &FactorTable,
    step: &StepFunction,
    plan: &TruncationPlan,
    t_param: f64,
) -> Result<(TrialSums, B3Flags)> {
    let ctx = TruncationContext::new(table, plan.clone(), step.clone(), t_param)?;
    Ok((ctx.sums(&ctx.phases(assign, table)?), ctx.flags))
}

/// MC estimate of ∑_{p > x^ε} E|Z'_{x,p}|⁴.
pub fn lindeberg_quantity(ctx: &TruncationContext, table: &FactorTable, trials: u64, base_seed: u64) -> Result<MeanSe> {
    let v = ctx.ensemble(table, trials, base_seed, |ph| ctx.lindeberg_sum(ph))?;
    Ok(mean_se(&v))
}

/// The Lindeberg sum rescaled by its expected order: q · x^ε / (log x)⁵.
pub fn lindeberg_normalized(q: f64, x: f64, eps: f64) -> f64 {
    q * x.powf(eps) / x.ln().powi(5)
}

/// Sorted y-smooth n ≤ bound with prefix sums of α(n).
struct SmoothPrefix {
    n: Vec<u64>,
    prefix: Vec<Complex64>,
}

impl SmoothPrefix {
    fn new(assign: &PhaseAssignment, table: &FactorTable, y: f64, bound: u64) -> Self {
        let primes = table.primes_upto(y.min(bound as f64));
        let values = assign.values_for_prefix(primes);
        let ps: Vec<u64> = primes.iter().map(|&p| p as u64).collect();
        let step = |acc: u32, i: usize| acc.wrapping_add(values[i].phase);
        let mut items: Vec<(u64, u32)> = Vec::new();
        for_each_smooth(&ps, bound, 0u32, &step, &mut |n, ph| items.push((n, ph)));
        items.sort_unstable();
        let cis = CisTable::global();
        let mut acc = Complex64::default();
        let mut prefix = vec![acc];
        for &(_, ph) in &items {
            acc += cis.cis(ph);
            prefix.push(acc);
        }
        SmoothPrefix { n: items.into_iter().map(|(n, _)| n).collect(), prefix }
    }

    /// ∑_{P(n)≤y} α(n) Φ(n m / x).
    fn dilated(&self, step: &StepFunction, m: u64, x: f64) -> Complex64 {
        let mut prev = 0;
        let mut acc = Complex64::default();
        for (&b, &c) in step.breaks().iter().zip(step.values()) {
            let idx = self.n.partition_point(|&n| (n * m) as f64 / x <= b);
            acc += c * (self.prefix[idx] - self.prefix[prev]);
            prev = idx;
        }
        acc
    }
}

fn steinhaus(assign: &PhaseAssignment) -> Result<()> {
    if assign.model != crate::rmf::Model::Steinhaus {
        return Err(Error::Unsupported("truncation diagnostics use the Steinhaus model".into()));
    }
    Ok(())
}

/// E[|s_{x,z}|² | F_y] = ∑_m m^{-1} |s_{x/m,y}|² over y-rough, z-smooth m ≤ Ax.
pub fn conditional_second_moment(
    assign: &PhaseAssignment,
    table: &FactorTable,
    step: &StepFunction,
    x: f64,
    y: f64,
    z: f64,
) -> Result<f64> {
    steinhaus(assign)?;
    let bound = snap(step.support() * x).floor() as u64;
    if !(y >= 2.0 && y < z && z <= step.support() * x) {
        return Err(Error::InvalidArgument(format!("need 2 <= y < z <= Ax, got y={y}, z={z}")));
    }
    if bound > table.limit() {
        return Err(Error::Capacity { requested: bound, limit: table.limit() });
    }
    let sp = SmoothPrefix::new(assign, table, y, bound);
    let lo = table.prime_pi(y);
    let rough: Vec<u64> = table.primes_upto(z)[lo..].iter().map(|&p| p as u64).collect();
    let mut total = 0.0;
    for_each_smooth(&rough, bound, (), &|_, _| (), &mut |m, _| {
        total += sp.dilated(step, m, x).norm_sqr();
    });
    Ok(total / x)
}

/// R_{a,b} = ∑_{p∈(x^a,x^b]} p^{-1} |s_{x/p,x^a}|² and its surrogate
/// ∫_{x^a}^{x^b} |s_{x/t,x^a}|² dt/(t log t), both exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabPair {
    pub sum: f64,
    pub integral: f64,
}

/// li(b) − li(a) for 1 < a <= b, via Ei(u) = γ + ln u + ∑ u^k/(k·k!).
fn li_diff(a: f64, b: f64) -> f64 {
    fn ei(u: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            term *= u / k as f64;
            let add = term / k as f64;
            sum += add;
            if add < 1e-17 * sum {
                break;
            }
        }
        crate::dickman::EULER_GAMMA + u.ln() + sum
    }
    if b - a < 1e-3 * a {
        // Short pieces: three-point Gauss–Legendre avoids the cancellation.
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        let r = (0.6f64).sqrt();
        return h * (5.0 / (m - h * r).ln() + 8.0 / m.ln() + 5.0 / (m + h * r).ln()) / 9.0;
    }
    ei(b.ln()) - ei(a.ln())
}

pub fn r_ab(assign: &PhaseAssignment, table: &FactorTable, step: &StepFunction, x: f64, a: f64, b: f64) -> Result<RabPair> {
    steinhaus(assign)?;
    if !(0.0 < a && a < b && b <= 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < a < b <= 1, got a={a}, b={b}")));
    }
    let (lo, hi) = (x.powf(a), x.powf(b));
    let bound = (step.support() * x / lo).floor() as u64;
    if (hi as u64) > table.limit() {
        return Err(Error::Capacity { requested: hi as u64, limit: table.limit() });
    }
    let sp = SmoothPrefix::new(assign, table, lo, bound);
    let first = table.prime_pi(lo);
    let sum = table.primes_upto(hi)[first..]
        .iter()
        .map(|&p| sp.dilated(step, p as u64, x).norm_sqr())
        .sum::<f64>()
        / x;
    // G(t) = ∑ α(m) Φ(mt/x) loses the term (m, l) once t > b_l x/m.
    let alpha: Vec<Complex64> = (0..sp.n.len()).map(|i| sp.prefix[i + 1] - sp.prefix[i]).collect();
    let mut events: Vec<(f64, Complex64)> = Vec::new();
    let mut g = Complex64::default();
    for (&n, a_n) in sp.n.iter().zip(&alpha) {
        for (bl, d) in step.jumps() {
            let t = bl * x / n as f64;
            if t >= lo {
                g += a_n * d;
                if t < hi {
                    events.push((t, a_n * d));
                }
            }
        }
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut integral = 0.0;
    let mut t = lo;
    let mut i = 0;
    loop {
        let next = if i < events.len() { events[i].0 } else { hi };
        if next > t {
            integral += g.norm_sqr() * li_diff(t, next);
        }
        if i >= events.len() {
            break;
        }
        t = next;
        while i < events.len() && events[i].0 == t {
            g -= events[i].1;
            i += 1;
        }
    }
    Ok(RabPair { sum, integral: integral / x })
}

/// X_{x₁,x₂} = √x₁ s_{x₁,y} − √x₂ s_{x₂,y} = ∑_{P(n)≤y} α(n)(Φ(n/x₁) − Φ(n/x₂)),
/// with its exact second moment ∑ |Φ(n/x₁) − Φ(n/x₂)|².
pub fn lipschitz_remainder(
    assign: &PhaseAssignment,
    table: &FactorTable,
    step: &StepFunction,
    x1: f64,
    x2: f64,
    y: f64,
) -> Result<(Complex64, f64)> {
    steinhaus(assign)?;
    if !(1.0 <= x1 && x1 <= x2) {
        return Err(Error::InvalidArgument(format!("need 1 <= x1 <= x2, got {x1}, {x2}")));
    }
    let bound = (step.support() * x2).floor() as u64;
    if bound > table.limit() {
        return Err(Error::Capacity { requested: bound, limit: table.limit() });
    }
    let sp = SmoothPrefix::new(assign, table, y, bound);
    let mut x = Complex64::default();
    let mut second = 0.0;
    for (i, &n) in sp.n.iter().enumerate() {
        let d = step.eval(n as f64 / x1) - step.eval(n as f64 / x2);
        x += (sp.prefix[i + 1] - sp.prefix[i]) * d;
        second += d.norm_sqr();
    }
    Ok((x, second))
}
