//! Smallest-prime-factor sieve and the counting functions built on it.
//!
//! The table stores `spf[n]` as `u32` for every `n <= limit`, so factoring any
//! tabulated integer costs `O(log n)` lookups. Tables up to
//! [`LINEAR_SIEVE_LIMIT`] are built with a linear sieve; larger ones are filled
//! segment by segment so the working set stays cache sized.

use crate::Error;

/// Largest table the sieve will allocate (800 MB of `u32`).
pub const MAX_TABLE_LIMIT: u64 = 200_000_000;

/// Above this bound the table is filled in segments.
pub const LINEAR_SIEVE_LIMIT: u64 = 10_000_000;

const SEGMENT_LEN: usize = 1 << 18;

/// Meissel–Mertens constant, used only as a reference value in reports.
pub const MERTENS_CONSTANT: f64 = 0.261_497_212_847_642_783_755_426_838_608_7;

#[derive(Debug, Clone)]
pub struct FactorTable {
    limit: u64,
    spf: Vec<u32>,
    primes: Vec<u32>,
}

/// Floors a real bound the way every "n <= x" range in the crate does.
pub fn floor_bound(x: f64) -> u64 {
    if x < 0.0 || x.is_nan() {
        0
    } else {
        x.floor() as u64
    }
}

pub fn build_factor_table(n: u64) -> Result<FactorTable, Error> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("factor table limit {n} < 2")));
    }
    if n > MAX_TABLE_LIMIT {
        return Err(Error::Capacity { requested: n, limit: MAX_TABLE_LIMIT });
    }
    if n <= LINEAR_SIEVE_LIMIT {
        Ok(linear_sieve(n))
    } else {
        Ok(segmented_sieve(n, SEGMENT_LEN))
    }
}

fn linear_sieve(n: u64) -> FactorTable {
    let len = n as usize + 1;
    let mut spf = vec![0u32; len];
    let mut primes: Vec<u32> = Vec::with_capacity(approx_prime_count(n));
    spf[1] = 1;
    for i in 2..len {
        if spf[i] == 0 {
            spf[i] = i as u32;
            primes.push(i as u32);
        }
        let si = spf[i];
        for &p in &primes {
            let m = i * p as usize;
            if p > si || m >= len {
                break;
            }
            spf[m] = p;
        }
    }
    FactorTable { limit: n, spf, primes }
}

/// Same table as [`linear_sieve`], filled in segments of `segment` entries using
/// the base primes up to `sqrt(n)`. Exposed for cross-checking.
pub fn segmented_sieve(n: u64, segment: usize) -> FactorTable {
    let root = (n as f64).sqrt() as u64 + 2;
    let base = linear_sieve(root.max(2));
    let len = n as usize + 1;
    let mut spf = vec![0u32; len];
    spf[1] = 1;
    let mut lo = 2usize;
    while lo < len {
        let hi = (lo + segment).min(len);
        for &p in &base.primes {
            let p = p as usize;
            if p * p >= hi {
                break;
            }
            let mut m = (lo.div_ceil(p) * p).max(p * p);
            while m < hi {
                if spf[m] == 0 {
                    spf[m] = p as u32;
                }
                m += p;
            }
        }
        for (i, s) in spf.iter_mut().enumerate().take(hi).skip(lo) {
            if *s == 0 {
                *s = i as u32;
            }
        }
        lo = hi;
    }
    let mut primes = Vec::with_capacity(approx_prime_count(n));
    for (i, &s) in spf.iter().enumerate().skip(2) {
        if s as usize == i {
            primes.push(i as u32);
        }
    }
    FactorTable { limit: n, spf, primes }
}

fn approx_prime_count(n: u64) -> usize {
    let x = n.max(3) as f64;
    (1.3 * x / x.ln()) as usize + 16
}

impl FactorTable {
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Primes `<= x` as a prefix slice of [`Self::primes`].
    pub fn primes_upto(&self, x: f64) -> &[u32] {
        let b = floor_bound(x);
        let end = self.primes.partition_point(|&p| (p as u64) <= b);
        &self.primes[..end]
    }

    /// Number of primes `<= x` (restricted to the table range).
    pub fn prime_pi(&self, x: f64) -> usize {
        self.primes_upto(x).len()
    }

    /// Zero-based index of `p` in the prime list, if `p` is a tabulated prime.
    pub fn prime_index(&self, p: u64) -> Option<usize> {
        if p > self.limit {
            return None;
        }
        self.primes.binary_search(&(p as u32)).ok()
    }

    pub fn spf(&self, n: u64) -> Result<u64, Error> {
        self.check(n)?;
        Ok(self.spf[n as usize] as u64)
    }

    /// Raw access for hot loops; `n` must be in `1..=limit`.
    #[inline]
    pub fn spf_unchecked(&self, n: usize) -> u32 {
        self.spf[n]
    }

    pub fn is_prime(&self, n: u64) -> Result<bool, Error> {
        self.check(n)?;
        Ok(n >= 2 && self.spf[n as usize] as u64 == n)
    }

    fn check(&self, n: u64) -> Result<(), Error> {
        if n == 0 || n > self.limit {
            return Err(Error::OutOfRange { n, limit: self.limit });
        }
        Ok(())
    }

    /// Prime factorization as `(p, exponent)` pairs in increasing `p`.
    pub fn factorize(&self, n: u64) -> Result<Vec<(u64, u32)>, Error> {
        self.check(n)?;
        let mut out: Vec<(u64, u32)> = Vec::new();
        let mut m = n as usize;
        while m > 1 {
            let p = self.spf[m] as usize;
            let mut e = 0;
            while m.is_multiple_of(p) {
                m /= p;
                e += 1;
            }
            out.push((p as u64, e));
        }
        Ok(out)
    }

    pub fn largest_prime_factor(&self, n: u64) -> Result<u64, Error> {
        self.check(n)?;
        let mut m = n as usize;
        let mut last = 1usize;
        while m > 1 {
            last = self.spf[m] as usize;
            m /= last;
        }
        Ok(last as u64)
    }

    /// `P(n / P(n))`, with the convention that this is 1 when `n` is prime.
    pub fn second_largest_prime_factor(&self, n: u64) -> Result<u64, Error> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("second largest prime factor of {n}")));
        }
        let p = self.largest_prime_factor(n)?;
        self.largest_prime_factor(n / p)
    }

    /// `P(n)` for every `0 <= n <= x`, with `P(0) = 0` and `P(1) = 1`.
    pub fn largest_prime_factors(&self, x: u64) -> Result<Vec<u32>, Error> {
        if x > self.limit {
            return Err(Error::OutOfRange { n: x, limit: self.limit });
        }
        let len = x as usize + 1;
        let mut lpf = vec![0u32; len];
        if len > 1 {
            lpf[1] = 1;
        }
        for n in 2..len {
            let p = self.spf[n];
            let q = lpf[n / p as usize];
            lpf[n] = p.max(q);
        }
        Ok(lpf)
    }

    /// Exact `sum_{p <= x} 1/p`.
    pub fn mertens_prime_sum(&self, x: f64) -> Result<f64, Error> {
        if x < 2.0 {
            return Err(Error::InvalidArgument(format!("mertens sum needs x >= 2, got {x}")));
        }
        let b = floor_bound(x);
        if b > self.limit {
            return Err(Error::OutOfRange { n: b, limit: self.limit });
        }
        Ok(self.primes_upto(x).iter().map(|&p| 1.0 / p as f64).sum())
    }

    /// `Psi(x, y) = #{n <= x : P(n) <= y}`.
    pub fn count_smooth(&self, x: f64, y: f64) -> Result<u64, Error> {
        let xb = floor_bound(x);
        if xb == 0 {
            return Ok(0);
        }
        let yb = floor_bound(y);
        if yb >= xb {
            return Ok(xb);
        }
        if xb > self.limit {
            return Err(Error::OutOfRange { n: xb, limit: self.limit });
        }
        let lpf = self.largest_prime_factors(xb)?;
        Ok(lpf[1..].iter().filter(|&&p| (p as u64) <= yb).count() as u64)
    }

    /// `#{m in [lo, hi] : m is y-rough and z-smooth}`. Roughness is vacuous for
    /// `y < 2`; `m = 1` is both rough and smooth.
    pub fn count_rough_smooth_interval(&self, lo: f64, hi: f64, y: f64, z: f64) -> Result<u64, Error> {
        let a = lo.ceil().max(1.0) as u64;
        let b = floor_bound(hi);
        if b > self.limit {
            return Err(Error::OutOfRange { n: b, limit: self.limit });
        }
        if y >= z {
            return Err(Error::InvalidArgument(format!("need y < z, got y={y}, z={z}")));
        }
        let yb = floor_bound(y);
        let zb = floor_bound(z);
        let mut count = 0;
        for m in a..=b {
            if m == 1 {
                count += 1;
                continue;
            }
            let small = self.spf[m as usize] as u64;
            if small <= yb {
                continue;
            }
            if self.largest_prime_factor(m)? <= zb {
                count += 1;
            }
        }
        Ok(count)
    }
}

/// Calls `f(p)` for every prime `p <= limit` in increasing order without
/// materialising a full table (segmented Eratosthenes).
pub fn for_each_prime(limit: u64, mut f: impl FnMut(u64)) {
    if limit < 2 {
        return;
    }
    let root = (limit as f64).sqrt() as u64 + 2;
    let base = linear_sieve(root.max(2));
    let seg = SEGMENT_LEN as u64;
    let mut composite = vec![false; SEGMENT_LEN];
    let mut lo = 2u64;
    while lo <= limit {
        let hi = (lo + seg).min(limit + 1);
        composite.iter_mut().for_each(|c| *c = false);
        for &p in &base.primes {
            let p = p as u64;
            if p * p >= hi {
                break;
            }
            let mut m = (lo.div_ceil(p) * p).max(p * p);
            while m < hi {
                composite[(m - lo) as usize] = true;
                m += p;
            }
        }
        for n in lo..hi {
            if !composite[(n - lo) as usize] {
                f(n);
            }
        }
        lo = hi;
    }
}

/// `sum_{p <= x} 1/p - log log x` at each checkpoint, streaming over primes.
pub fn mertens_remainders(checkpoints: &[u64]) -> Vec<f64> {
    let mut sorted: Vec<u64> = checkpoints.to_vec();
    sorted.sort_unstable();
    let max = sorted.last().copied().unwrap_or(0);
    let mut out = Vec::with_capacity(sorted.len());
    let mut sum = 0.0f64;
    let mut next = 0usize;
    let mut compensation = 0.0f64;
    for_each_prime(max, |p| {
        while next < sorted.len() && sorted[next] < p {
            let x = sorted[next] as f64;
            out.push(sum - x.ln().ln());
            next += 1;
        }
        // Kahan summation: ~5.7 million terms at 10^8.
        let term = 1.0 / p as f64 - compensation;
        let t = sum + term;
        compensation = (t - sum) - term;
        sum = t;
    });
    while next < sorted.len() {
        let x = sorted[next] as f64;
        out.push(sum - x.ln().ln());
        next += 1;
    }
    out
}

/// Visits every `n <= bound` whose prime factors all lie in `primes` (which must
/// be increasing), carrying a multiplicative accumulator. `step(acc, i)` returns
/// the accumulator after multiplying by `primes[i]`.
pub fn for_each_smooth<T: Copy>(
    primes: &[u64],
    bound: u64,
    init: T,
    step: &impl Fn(T, usize) -> T,
    f: &mut impl FnMut(u64, T),
) {
    fn rec<T: Copy>(
        primes: &[u64],
        start: usize,
        n: u64,
        acc: T,
        bound: u64,
        step: &impl Fn(T, usize) -> T,
        f: &mut impl FnMut(u64, T),
    ) {
        f(n, acc);
        for i in start..primes.len() {
            let p = primes[i];
            match n.checked_mul(p) {
                Some(m) if m <= bound => rec(primes, i, m, step(acc, i), bound, step, f),
                _ => break,
            }
        }
    }
    if bound >= 1 {
        rec(primes, 0, 1, init, bound, step, f);
    }
}

/// All `y`-smooth integers `<= bound` in increasing order.
pub fn smooth_numbers(primes: &[u64], bound: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for_each_smooth(primes, bound, (), &|_, _| (), &mut |n, _| out.push(n));
    out.sort_unstable();
    out
}

/// Fits the constant `c` in `Psi(x, y) <= x exp(-c log x / log y)` as the
/// smallest value consistent with the supplied counts.
pub fn fit_de_bruijn_constant(samples: &[(f64, f64, u64)]) -> f64 {
    samples
        .iter()
        .filter(|(_, _, psi)| *psi > 0)
        .map(|&(x, y, psi)| {
            let u = x.ln() / y.ln();
            -(psi as f64 / x).ln() / u
        })
        .fold(f64::INFINITY, f64::min)
}
