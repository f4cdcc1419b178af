//! Exact spectral and distributional analysis of the walk driven by the
//! uniform measure on a symmetric lazy generating set of `Z/pZ`.
//!
//! The `n`-step law is synthesized from the `n`-th power of the Fourier
//! profile with one length-`p` transform, so each evaluation costs
//! `O(p log p)` regardless of `n`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::arith::mul_mod;
use crate::error::{Error, Result};
use crate::genset::GenSet;
use crate::numeric::KahanSum;

/// Nonzero-frequency terms below this magnitude are treated as exactly zero.
pub const FLUSH_THRESHOLD: f64 = 1e-18;

/// Coefficients smaller than this are round-off from an exact zero sum.
const ZERO_SNAP: f64 = 1e-14;

/// Default tolerance for the standard mixing time, `1/e`.
pub const DEFAULT_EPS: f64 = 1.0 / std::f64::consts::E;

/// A probability measure on `Z/pZ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicMeasure {
    p: u64,
    weights: Vec<f64>,
}

impl CyclicMeasure {
    /// Validates total mass `1 ± 1e-12` and entries `>= -1e-15`; tiny
    /// negative entries are clamped to zero.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let p = weights.len() as u64;
        if p == 0 {
            return Err(Error::invalid("a measure needs at least one point"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= -1e-15)) {
            return Err(Error::invalid(format!("negative weight {w}")));
        }
        let total: KahanSum = weights.iter().copied().sum();
        if (total.value() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("total mass {} != 1", total.value())));
        }
        let weights = weights.into_iter().map(|w| w.max(0.0)).collect();
        Ok(CyclicMeasure { p, weights })
    }

    pub fn point_mass(p: u64) -> Self {
        let mut weights = vec![0.0; p as usize];
        weights[0] = 1.0;
        CyclicMeasure { p, weights }
    }

    pub fn uniform(p: u64) -> Self {
        CyclicMeasure {
            p,
            weights: vec![1.0 / p as f64; p as usize],
        }
    }

    /// The driving measure `μ_A`.
    pub fn of_set(set: &GenSet) -> Self {
        let p = set.p();
        let mut weights = vec![0.0; p as usize];
        let w = 1.0 / set.size() as f64;
        for x in set.elements() {
            weights[x as usize] += w;
        }
        CyclicMeasure { p, weights }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Plain `O(p · |support of other|)` convolution.
    pub fn convolve(&self, other: &CyclicMeasure) -> CyclicMeasure {
        assert_eq!(self.p, other.p, "moduli differ");
        let p = self.p as usize;
        let mut out = vec![0.0; p];
        for (y, &wy) in other.weights.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            for (x, &wx) in self.weights.iter().enumerate() {
                out[(x + y) % p] += wx * wy;
            }
        }
        CyclicMeasure { p: self.p, weights: out }
    }
}

/// Fourier coefficients of `μ_A`; real because `A` is symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    p: u64,
    set_size: usize,
    coeff: Vec<f64>,
}

impl SpectralProfile {
    pub fn p(&self) -> u64 {
        self.p
    }

    /// `|A| = 2k + 1`.
    pub fn set_size(&self) -> usize {
        self.set_size
    }

    pub fn coeff(&self) -> &[f64] {
        &self.coeff
    }

    pub fn at(&self, xi: u64) -> f64 {
        self.coeff[(xi % self.p) as usize]
    }

    /// Largest nontrivial eigenvalue modulus `max_{ξ≠0} |coeff[ξ]|`.
    pub fn second_modulus(&self) -> f64 {
        self.coeff[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// The frequencies attaining [`second_modulus`](Self::second_modulus).
    pub fn gap_frequencies(&self) -> Vec<u64> {
        let m = self.second_modulus();
        (1..self.p)
            .filter(|&xi| self.coeff[xi as usize].abs() == m)
            .collect()
    }

    /// `coeff^n` for every frequency.
    pub fn powered(&self, n: u64) -> Vec<f64> {
        self.coeff.iter().map(|&c| spectral_power(c, n)).collect()
    }
}

/// `c^n` evaluated as `sign · exp(n log|c|)`.
pub fn spectral_power(c: f64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if c == 0.0 {
        return 0.0;
    }
    let mag = (n as f64 * c.abs().ln()).exp();
    if c < 0.0 && n % 2 == 1 {
        -mag
    } else {
        mag
    }
}

/// `coeff[ξ] = (1/|A|) Σ_{x∈A} cos(2πξx/p)` for all `ξ`, in `O(p·k)`.
pub fn fourier_profile(set: &GenSet) -> SpectralProfile {
    let p = set.p();
    let pu = p as usize;
    let cos_table: Vec<f64> = (0..pu)
        .map(|j| (2.0 * PI * j as f64 / p as f64).cos())
        .collect();
    let norm = 1.0 / set.size() as f64;
    let mut coeff = vec![0.0; pu];
    coeff[0] = 1.0;
    for xi in 1..=(pu - 1) / 2 {
        let mut s = 1.0;
        for &a in set.half() {
            s += 2.0 * cos_table[mul_mod(xi as u64, a, p) as usize];
        }
        let c = s * norm;
        let c = if c.abs() < ZERO_SNAP { 0.0 } else { c };
        coeff[xi] = c;
        coeff[pu - xi] = c;
    }
    SpectralProfile {
        p,
        set_size: set.size(),
        coeff,
    }
}

/// A generating set together with its spectral profile and a planned
/// length-`p` transform; evaluates the walk at arbitrary step counts.
#[derive(Clone)]
pub struct Walk {
    set: GenSet,
    profile: SpectralProfile,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Walk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Walk").field("set", &self.set).finish()
    }
}

impl Walk {
    pub fn new(set: &GenSet) -> Self {
        let profile = fourier_profile(set);
        let fft = FftPlanner::new().plan_fft_forward(set.p() as usize);
        Walk {
            set: set.clone(),
            profile,
            fft,
        }
    }

    pub fn set(&self) -> &GenSet {
        &self.set
    }

    pub fn profile(&self) -> &SpectralProfile {
        &self.profile
    }

    fn flushed(&self, n: u64) -> bool {
        n > 0 && spectral_power(self.profile.second_modulus(), n) < FLUSH_THRESHOLD
    }

    /// `Σ_ξ w[ξ] cos(2πξx/p) / p` for a symmetric real `w`.
    fn synthesize(&self, spectrum: impl Iterator<Item = f64>) -> Vec<f64> {
        let p = self.set.p() as usize;
        let mut buf: Vec<Complex<f64>> = spectrum.map(|w| Complex::new(w, 0.0)).collect();
        debug_assert_eq!(buf.len(), p);
        self.fft.process(&mut buf);
        let inv = 1.0 / p as f64;
        buf.into_iter().map(|z| z.re * inv).collect()
    }

    /// `μ^{*n}(x) - 1/p` for every `x`, or `None` once all nonzero
    /// frequencies have decayed below [`FLUSH_THRESHOLD`].
    pub fn deviation(&self, n: u64) -> Option<Vec<f64>> {
        if self.flushed(n) {
            return None;
        }
        if n == 0 {
            let p = self.set.p() as usize;
            let inv = 1.0 / p as f64;
            let mut d = vec![-inv; p];
            d[0] = 1.0 - inv;
            return Some(d);
        }
        let spectrum = self
            .profile
            .coeff
            .iter()
            .enumerate()
            .map(|(xi, &c)| if xi == 0 { 0.0 } else { spectral_power(c, n) });
        Some(self.synthesize(spectrum))
    }

    /// The law `μ_A^{*n}`.
    pub fn distribution(&self, n: u64) -> CyclicMeasure {
        let p = self.set.p();
        if n == 0 {
            return CyclicMeasure::point_mass(p);
        }
        match self.deviation(n) {
            None => CyclicMeasure::uniform(p),
            Some(dev) => {
                let inv = 1.0 / p as f64;
                CyclicMeasure {
                    p,
                    weights: dev.into_iter().map(|d| (d + inv).max(0.0)).collect(),
                }
            }
        }
    }

    /// `‖μ_A^{*n} - U‖_TV`.
    pub fn tv(&self, n: u64) -> f64 {
        match self.deviation(n) {
            None => 0.0,
            Some(dev) => 0.5 * dev.iter().map(|d| d.abs()).sum::<KahanSum>().value(),
        }
    }

    /// `(1/2) (Σ_{ξ≠0} coeff^{2n})^{1/2}`, an upper bound for [`tv`](Self::tv).
    pub fn l2(&self, n: u64) -> f64 {
        l2_to_uniform(&self.profile, n)
    }

    /// Least `n` with `TV(n) <= eps`. The bracket comes from the bounds
    /// `λ^n/2 <= TV(n) <= l2(n)`, with `λ` the second modulus, and is then
    /// bisected on the exact TV.
    pub fn mixing_time(&self, eps: f64) -> Result<u64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid(format!("eps = {eps} must lie in (0, 1)")));
        }
        let p = self.set.p() as f64;
        if eps >= 1.0 - 1.0 / p {
            return Ok(0);
        }
        if self.profile.second_modulus() >= 1.0 {
            return Err(Error::ZeroGap);
        }
        let mut lo = self.spectral_lower_bracket(eps);
        let mut hi = self.l2_upper_bracket(eps, lo)?;
        if self.tv(hi) > eps {
            lo = hi;
            while self.tv(hi) > eps {
                lo = hi;
                hi = hi
                    .checked_mul(2)
                    .ok_or_else(|| Error::invalid("mixing time overflowed u64"))?;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.tv(mid) <= eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Largest `n` with `λ^n/2 > eps`, or 0.
    fn spectral_lower_bracket(&self, eps: f64) -> u64 {
        let lambda = self.profile.second_modulus();
        if lambda <= 0.0 {
            return 0;
        }
        let guess = ((2.0 * eps).ln() / lambda.ln()).ceil().max(1.0) as u64;
        (guess.saturating_sub(2)..=guess)
            .rev()
            .find(|&n| 0.5 * spectral_power(lambda, n) > eps)
            .unwrap_or(0)
    }

    /// Least `n > lo` with `l2(n) <= eps`, found on the cheap bound.
    fn l2_upper_bracket(&self, eps: f64, lo: u64) -> Result<u64> {
        let logs: Vec<f64> = self.profile.coeff[1..].iter().map(|&c| c.abs().ln()).collect();
        let bound = |n: u64| -> f64 {
            let s: KahanSum = logs
                .iter()
                .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (2.0 * n as f64 * l).exp() })
                .sum();
            0.5 * s.value().sqrt()
        };
        let mut a = lo;
        let mut b = lo.max(1);
        while bound(b) > eps {
            a = b;
            b = b
                .checked_mul(2)
                .ok_or_else(|| Error::invalid("mixing time overflowed u64"))?;
        }
        while b - a > 1 {
            let mid = a + (b - a) / 2;
            if bound(mid) <= eps {
                b = mid;
            } else {
                a = mid;
            }
        }
        Ok(b.max(lo + 1))
    }

    pub fn window(&self, eps: f64) -> Result<WindowReport> {
        if !(eps > 0.0 && eps < DEFAULT_EPS) {
            return Err(Error::invalid(format!("eps = {eps} must lie in (0, 1/e)")));
        }
        let t_low = self.mixing_time(1.0 - eps)?;
        let t_high = self.mixing_time(eps)?;
        let t_mix = self.mixing_time(DEFAULT_EPS)?;
        let width = t_high.saturating_sub(t_low);
        Ok(WindowReport {
            eps,
            t_low,
            t_high,
            t_mix,
            width,
            normalized_width: width as f64 * self.set.k() as f64 / t_mix as f64,
        })
    }

    /// Spectral summary, the mixing times for each `eps`, and a TV profile
    /// on an evenly spaced grid of `points` step counts up to twice the
    /// slowest mixing time.
    pub fn report(&self, eps: &[f64], points: usize) -> Result<MixingReport> {
        let gap = spectral_gap(&self.profile)?;
        let t_rel = relaxation_time(gap)?;
        let mut sorted: Vec<f64> = eps.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        let mut t_mix = Vec::with_capacity(sorted.len());
        for &e in &sorted {
            t_mix.push((e, self.mixing_time(e)?));
        }
        let horizon = 2 * t_mix.iter().map(|&(_, n)| n).max().unwrap_or(1).max(1);
        let points = points.max(2) as u64;
        let mut steps: Vec<u64> = (0..points).map(|i| i * horizon / (points - 1)).collect();
        steps.dedup();
        let tv_profile = steps.into_iter().map(|n| (n, self.tv(n))).collect();
        Ok(MixingReport {
            gap,
            t_rel,
            t_mix,
            tv_profile,
            predicted: None,
        })
    }
}

/// Transition window `t_mix(1-ε) .. t_mix(ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub eps: f64,
    pub t_low: u64,
    pub t_high: u64,
    pub t_mix: u64,
    pub width: u64,
    /// `width · k / t_mix`.
    pub normalized_width: f64,
}

/// Quantities predicted from the dual lattice of the set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticePrediction {
    /// Length of the shortest nonzero dual vector.
    pub ell: f64,
    /// `(2k+1) / (4π² ℓ²)`.
    pub t_rel_lattice: f64,
    /// `τ₀ · t_rel`.
    pub tau0_t_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub gap: f64,
    pub t_rel: f64,
    /// `(ε, t_mix(ε))`, ascending in `ε`.
    pub t_mix: Vec<(f64, u64)>,
    /// `(n, TV(n))`, ascending in `n`.
    pub tv_profile: Vec<(u64, f64)>,
    pub predicted: Option<LatticePrediction>,
}

/// `μ_A^{*n}` (see [`Walk::distribution`]).
pub fn distribution_at(set: &GenSet, n: u64) -> CyclicMeasure {
    Walk::new(set).distribution(n)
}

pub fn tv_to_uniform(m: &CyclicMeasure) -> f64 {
    let u = 1.0 / m.p as f64;
    0.5 * m.weights.iter().map(|w| (w - u).abs()).sum::<KahanSum>().value()
}

pub fn l2_to_uniform(prof: &SpectralProfile, n: u64) -> f64 {
    let s: KahanSum = prof.coeff[1..]
        .iter()
        .map(|&c| spectral_power(c, n).powi(2))
        .sum();
    0.5 * s.value().sqrt()
}

/// `1 - max_{ξ≠0} |coeff[ξ]|`.
pub fn spectral_gap(prof: &SpectralProfile) -> Result<f64> {
    let gap = 1.0 - prof.second_modulus();
    if gap <= 0.0 {
        return Err(Error::ZeroGap);
    }
    Ok(gap)
}

/// `1 / (-log(1 - gap))`; zero when the walk is uniform after one step.
pub fn relaxation_time(gap: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::ZeroGap);
    }
    if gap >= 1.0 {
        return Ok(0.0);
    }
    Ok(1.0 / -(-gap).ln_1p())
}

pub fn mixing_time(set: &GenSet, eps: f64) -> Result<u64> {
    Walk::new(set).mixing_time(eps)
}

pub fn window_report(set: &GenSet, eps: f64) -> Result<WindowReport> {
    Walk::new(set).window(eps)
}

/// Second-moment statistics for a symmetric frequency family `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevDiagnostic {
    /// `|B|^{-1/2} Σ_{ξ∈B} coeff[ξ]^n`.
    pub normalized_mean: f64,
    /// `Σ_{ξ1,ξ2∈B} coeff[ξ1-ξ2]^n / (Σ_{ξ∈B} coeff[ξ]^n)^2`; at least 1.
    pub correlation_ratio: f64,
}

pub fn chebyshev_diagnostic(
    prof: &SpectralProfile,
    family: &[u64],
    n: u64,
) -> Result<ChebyshevDiagnostic> {
    let p = prof.p;
    let set: BTreeSet<u64> = family.iter().map(|&x| x % p).collect();
    if set.is_empty() {
        return Err(Error::invalid("frequency family is empty"));
    }
    if set.contains(&0) {
        return Err(Error::invalid("frequency family contains 0"));
    }
    if let Some(x) = set.iter().find(|&&x| !set.contains(&(p - x))) {
        return Err(Error::invalid(format!(
            "frequency family is not symmetric: {x} present but {} missing",
            p - x
        )));
    }
    let members: Vec<u64> = set.into_iter().collect();
    let pow = |xi: u64| spectral_power(prof.coeff[xi as usize], n);
    let mean_sum: KahanSum = members.iter().map(|&xi| pow(xi)).sum();
    let mean_sum = mean_sum.value();
    let mut cross = KahanSum::default();
    for &x1 in &members {
        for &x2 in &members {
            cross.add(pow((x1 + p - x2) % p));
        }
    }
    if mean_sum == 0.0 {
        return Err(Error::invalid("Σ coeff^n over the family vanishes"));
    }
    Ok(ChebyshevDiagnostic {
        normalized_mean: mean_sum / (members.len() as f64).sqrt(),
        correlation_ratio: cross.value() / (mean_sum * mean_sum),
    })
}
