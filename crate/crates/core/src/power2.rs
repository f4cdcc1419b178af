//! The walk driven by `{0} ∪ {±2^i : 0 <= i < ℓ}` with `ℓ = ⌈log₂ p⌉`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, sym_rep};
use crate::error::{Error, Result};
use crate::genset::GenSet;
use crate::walk::{chebyshev_diagnostic, fourier_profile, ChebyshevDiagnostic, SpectralProfile, Walk, DEFAULT_EPS};

/// `⌈log₂ p⌉`, computed exactly.
pub fn log2_ceil(p: u64) -> u32 {
    assert!(p >= 2);
    64 - (p - 1).leading_zeros()
}

/// The power-of-two generating set. Fails when two powers agree up to sign.
pub fn power2_set(p: u64) -> Result<GenSet> {
    if p < 5 || !is_prime(p) {
        return Err(Error::invalid(format!("modulus {p} must be a prime >= 5")));
    }
    let ell = log2_ceil(p);
    let mut seen: Vec<(u64, u32)> = Vec::with_capacity(ell as usize);
    for i in 0..ell {
        let r = sym_rep(1u64 << i, p);
        if let Some(&(_, j)) = seen.iter().find(|(s, _)| *s == r) {
            return Err(Error::PowerCollision { p, i: j, j: i, residue: r });
        }
        seen.push((r, i));
    }
    GenSet::new(p, seen.into_iter().map(|(r, _)| r).collect::<Vec<_>>())
}

/// `c₀ = Σ_{j≥1} (1 - cos 2π/2^j)`, summed until the tail bound
/// `2π² 4^{-J}/3` falls below `tol`.
pub fn c0(tol: f64) -> Result<f64> {
    if !(tol >= 1e-14) {
        return Err(Error::invalid(format!("tolerance {tol} must be at least 1e-14")));
    }
    Ok(c0_partial_sums(tol).last().copied().expect("at least one term"))
}

/// Partial sums of `c₀` up to the first one whose tail bound is below `tol`.
pub fn c0_partial_sums(tol: f64) -> Vec<f64> {
    let mut sums = Vec::new();
    let mut total = 0.0;
    for j in 1..=60 {
        let s = (PI / 2f64.powi(j)).sin();
        total += 2.0 * s * s;
        sums.push(total);
        if 2.0 * PI * PI / (3.0 * 4f64.powi(j)) < tol {
            break;
        }
    }
    sums
}

fn c0_value() -> f64 {
    c0(1e-14).expect("valid tolerance")
}

/// `ℓ ln ℓ / (2 c₀)`.
pub fn predicted_tmix(p: u64) -> f64 {
    let ell = log2_ceil(p) as f64;
    ell * ell.ln() / (2.0 * c0_value())
}

/// `⌈2 log₂ log₂ p⌉`.
pub fn diagnostic_j(p: u64) -> u32 {
    (2.0 * (p as f64).log2().log2()).ceil() as u32
}

/// Frequencies `ξ` with `‖ξ/p - 2^{-j1} + 2^{-j2}‖ <= 2^{-ℓ-J}` for some
/// `1 <= j1 ≠ j2 <= ℓ`, sorted. Exact integer arithmetic.
pub fn bp_set(p: u64, j: u32) -> Result<Vec<u64>> {
    let ell = log2_ceil(p);
    if j > ell {
        return Err(Error::invalid(format!("J = {j} exceeds ℓ = {ell}")));
    }
    let d: i128 = 1i128 << (ell + j);
    let pi = p as i128;
    let mut out = Vec::new();
    for j1 in 1..=ell {
        for j2 in 1..=ell {
            if j1 == j2 {
                continue;
            }
            let m = (1i128 << (ell + j - j1)) - (1i128 << (ell + j - j2));
            let centre = pi * m;
            let lo = (centre - pi).div_euclid(d);
            let hi = (centre + pi).div_euclid(d) + 1;
            for xi in lo..=hi {
                if (xi * d - centre).abs() <= pi {
                    let x = xi.rem_euclid(pi) as u64;
                    if x != 0 {
                        out.push(x);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// `ξ/p ≡ ε Σ_j (-1)^j 2^{-i_j}`, with the indices grouped into maximal
/// runs whose consecutive gaps are at most `J`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClumpDecomposition {
    pub sign: i8,
    /// Increasing indices up to the truncation depth.
    pub indices: Vec<u32>,
    pub j: u32,
    /// Partition of the indices in `(0, ℓ]`.
    pub clumps: Vec<Vec<u32>>,
    /// Number of indices in `(0, ℓ]`.
    pub sigma: usize,
}

impl ClumpDecomposition {
    /// `ε Σ_j (-1)^j 2^{-i_j}` reduced to `[0, 1)`.
    pub fn reconstruct(&self) -> f64 {
        let mut s = 0.0;
        for (n, &i) in self.indices.iter().enumerate() {
            let sgn = if n % 2 == 0 { -1.0 } else { 1.0 };
            s += sgn * 2f64.powi(-(i as i32));
        }
        let v = self.sign as f64 * s;
        v - v.floor()
    }
}

/// Alternating binary expansion of `ξ/p`, from the bits `s_i` of `-ξ/p`:
/// the nonzero differences `s_i - s_{i+1}` sit at the indices and alternate
/// in sign.
pub fn alt_binary_expansion(xi: u64, p: u64, depth: u32, j: u32) -> Result<ClumpDecomposition> {
    if xi % p == 0 {
        return Err(Error::invalid("ξ must be nonzero mod p"));
    }
    let ell = log2_ceil(p);
    if depth < ell {
        return Err(Error::invalid(format!("depth {depth} must be at least ℓ = {ell}")));
    }
    let mut r = p - xi % p;
    let mut bits = Vec::with_capacity(depth as usize + 1);
    for _ in 0..=depth {
        r *= 2;
        if r >= p {
            bits.push(1i8);
            r -= p;
        } else {
            bits.push(0i8);
        }
    }
    let mut indices = Vec::new();
    let mut sign = 0i8;
    for i in 0..depth as usize {
        let d = bits[i] - bits[i + 1];
        if d != 0 {
            if indices.is_empty() {
                sign = -d;
            }
            indices.push(i as u32 + 1);
        }
    }
    if indices.is_empty() {
        return Err(Error::invalid("expansion has no index within the depth"));
    }
    let head: Vec<u32> = indices.iter().copied().filter(|&i| i <= ell).collect();
    let mut clumps: Vec<Vec<u32>> = Vec::new();
    for &i in &head {
        match clumps.last_mut() {
            Some(c) if i - c.last().expect("nonempty") <= j => c.push(i),
            _ => clumps.push(vec![i]),
        }
    }
    Ok(ClumpDecomposition {
        sign,
        sigma: head.len(),
        indices,
        j,
        clumps,
    })
}

/// `(2ℓ+1)/2 · (1 - coeff[ξ])`.
pub fn savings(prof: &SpectralProfile, xi: u64) -> Result<f64> {
    if xi % prof.p() == 0 {
        return Err(Error::invalid("ξ must be nonzero mod p"));
    }
    Ok(prof.set_size() as f64 / 2.0 * (1.0 - prof.at(xi)))
}

/// Measured TV at `n = ⌈(ℓ/2c₀)(ln ℓ + β)⌉` against the upper bound shape
/// `e^{-β} + e^{-β/c₀} ln ℓ / ℓ^{1/c₀}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaCheck {
    pub beta: f64,
    pub n: u64,
    pub tv: f64,
    pub bound: f64,
    /// `tv² / bound`.
    pub fitted_constant: f64,
    /// Whether `β < ln ℓ`.
    pub in_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub p: u64,
    pub ell: u32,
    pub c0: f64,
    pub eps: f64,
    pub predicted: f64,
    /// `t_mix(1/e)`.
    pub t_mix: u64,
    pub t_mix_eps: u64,
    pub t_mix_one_minus_eps: u64,
    /// `t_mix / predicted`.
    pub ratio: f64,
    /// `t_mix(ε) / t_mix(1-ε)`.
    pub window_ratio: f64,
    pub j: u32,
    pub bp_size: usize,
    pub diagnostic_n: u64,
    /// `None` when the frequency family is empty.
    pub diagnostic: Option<ChebyshevDiagnostic>,
    pub beta_checks: Vec<BetaCheck>,
}

pub fn cutoff_check(p: u64, eps: f64) -> Result<CutoffReport> {
    cutoff_check_with(p, eps, diagnostic_j(p))
}

pub fn cutoff_check_with(p: u64, eps: f64, j: u32) -> Result<CutoffReport> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("eps = {eps} must lie in (0, 1/2)")));
    }
    let set = power2_set(p)?;
    let walk = Walk::new(&set);
    let prof = fourier_profile(&set);
    let c0 = c0_value();
    let ell = log2_ceil(p);
    let predicted = predicted_tmix(p);
    let t_mix = walk.mixing_time(DEFAULT_EPS)?;
    let t_mix_eps = walk.mixing_time(eps)?;
    let t_mix_one_minus_eps = walk.mixing_time(1.0 - eps)?;
    let b = bp_set(p, j.min(ell))?;
    let diagnostic_n = ((1.0 - eps) * predicted).floor() as u64;
    let diagnostic = if b.is_empty() {
        None
    } else {
        Some(chebyshev_diagnostic(&prof, &b, diagnostic_n)?)
    };
    let ellf = ell as f64;
    let beta_checks = [1.0, 2.0, 4.0]
        .iter()
        .map(|&beta| {
            let n = (ellf / (2.0 * c0) * (ellf.ln() + beta)).ceil() as u64;
            let tv = walk.tv(n);
            let bound = (-beta).exp() + (-beta / c0).exp() * ellf.ln() / ellf.powf(1.0 / c0);
            BetaCheck {
                beta,
                n,
                tv,
                bound,
                fitted_constant: tv * tv / bound,
                in_range: beta < ellf.ln(),
            }
        })
        .collect();
    Ok(CutoffReport {
        p,
        ell,
        c0,
        eps,
        predicted,
        t_mix,
        t_mix_eps,
        t_mix_one_minus_eps,
        ratio: t_mix as f64 / predicted,
        window_ratio: t_mix_eps as f64 / t_mix_one_minus_eps.max(1) as f64,
        j,
        bp_size: b.len(),
        diagnostic_n,
        diagnostic,
        beta_checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log2_ceil_exact() {
        assert_eq!(log2_ceil(5), 3);
        assert_eq!(log2_ceil(11), 4);
        assert_eq!(log2_ceil(1021), 10);
        assert_eq!(log2_ceil(65537), 17);
        assert_eq!(log2_ceil(65521), 16);
    }

    #[test]
    fn power2_examples() {
        assert_eq!(power2_set(11).unwrap().half(), &[1, 2, 3, 4]);
        assert!(matches!(
            power2_set(5),
            Err(Error::PowerCollision { i: 0, j: 2, residue: 1, .. })
        ));
        let s = power2_set(1021).unwrap();
        assert_eq!(s.size(), 2 * 10 + 1);
    }

    #[test]
    fn c0_value_and_sums() {
        let sums = c0_partial_sums(1e-14);
        assert!((sums[0] - 2.0).abs() < 1e-15);
        assert!(sums.windows(2).all(|w| w[1] > w[0]));
        assert!((c0(1e-12).unwrap() - 3.394_649_802).abs() < 5e-9);
        assert!(c0(1e-16).is_err());
    }

    #[test]
    fn predicted_values() {
        let v = predicted_tmix(65537);
        assert!((v - 17.0 * 17f64.ln() / (2.0 * c0_value())).abs() < 1e-12);
        assert!((v - 7.09).abs() < 0.01);
        assert!(predicted_tmix(4093) < predicted_tmix(65521));
    }

    #[test]
    fn bp_set_is_symmetric() {
        for &p in &[1021u64, 16381] {
            let b = bp_set(p, 2).unwrap();
            assert!(!b.is_empty());
            for &x in &b {
                assert!(b.binary_search(&(p - x)).is_ok());
            }
        }
        assert!(bp_set(1021, 11).is_err());
    }

    #[test]
    fn bp_set_matches_float_window() {
        let p = 4093u64;
        let ell = log2_ceil(p);
        let j = 3;
        let b = bp_set(p, j).unwrap();
        let w = 2f64.powi(-((ell + j) as i32));
        let naive: Vec<u64> = (1..p)
            .filter(|&xi| {
                (1..=ell).any(|j1| {
                    (1..=ell).any(|j2| {
                        if j1 == j2 {
                            return false;
                        }
                        let v = xi as f64 / p as f64 - 2f64.powi(-(j1 as i32)) + 2f64.powi(-(j2 as i32));
                        (v - v.round()).abs() <= w * (1.0 + 1e-12)
                    })
                })
            })
            .collect();
        assert_eq!(b, naive);
    }

    #[test]
    fn expansion_reconstructs() {
        for &p in &[11u64, 1009, 65521] {
            for xi in [1, 2, 3, p / 2, p / 2 + 1, p - 1] {
                let e = alt_binary_expansion(xi, p, 40, 2).unwrap();
                let target = xi as f64 / p as f64;
                let got = e.reconstruct();
                let diff = (got - target).abs();
                assert!(diff.min(1.0 - diff) <= 2f64.powi(-(*e.indices.last().unwrap() as i32)));
            }
        }
        let half = alt_binary_expansion(505, 1009, 20, 2).unwrap();
        assert_eq!(half.indices[0], 1);
        assert!(alt_binary_expansion(0, 11, 10, 2).is_err());
    }

    #[test]
    fn clumps_respect_gaps() {
        let p = 65521;
        for xi in [7u64, 1234, 40000] {
            let e = alt_binary_expansion(xi, p, 40, 2).unwrap();
            for c in &e.clumps {
                assert!(c.windows(2).all(|w| w[1] - w[0] <= 2));
            }
            for w in e.clumps.windows(2) {
                assert!(w[1][0] - w[0].last().unwrap() > 2);
            }
            assert_eq!(e.clumps.iter().map(Vec::len).sum::<usize>(), e.sigma);
        }
    }

    #[test]
    fn savings_identity() {
        let set = power2_set(1021).unwrap();
        let prof = fourier_profile(&set);
        for xi in 1..1021 {
            let s = savings(&prof, xi).unwrap();
            assert!(s >= 0.0);
            assert_eq!(s, 21.0 / 2.0 * (1.0 - prof.at(xi)));
        }
        assert!(savings(&prof, 0).is_err());
    }
    #[test]
    fn savings_dominate_digit_count() {
        let mut checked = 0;
        for p in (11..2048u64).filter(|&p| is_prime(p)) {
            let Ok(set) = power2_set(p) else { continue };
            let prof = fourier_profile(&set);
            let ell = log2_ceil(p);
            for xi in 1..p {
                let e = alt_binary_expansion(xi, p, ell + 8, 2).unwrap();
                assert!(savings(&prof, xi).unwrap() >= e.sigma as f64 - 1.0, "p={p} xi={xi}");
            }
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn bp_members_near_the_top_of_the_spectrum() {
        let p = 16381;
        let ell = log2_ceil(p) as f64;
        let c0 = c0_value();
        let prof = fourier_profile(&power2_set(p).unwrap());
        for j in 1..=8 {
            let b = bp_set(p, j).unwrap();
            assert!(b.len() as f64 >= ell * ell / 2f64.powi(j as i32 + 3) - ell);
            let floor = 1.0 - 4.0 * c0 / (2.0 * ell + 1.0) - 5.0 / (2f64.powi(j as i32) * ell);
            for &x in &b {
                assert!(prof.at(x) >= floor);
                assert!(savings(&prof, x).unwrap() <= 2.0 * c0 + 1.0);
            }
        }
    }

    #[test]
    fn cutoff_report_near_2_14() {
        let r = cutoff_check(16381, 0.25).unwrap();
        assert_eq!(r.ell, 14);
        assert_eq!(r.j, 8);
        assert!(r.ratio > 0.5 && r.ratio < 1.5);
        assert!(r.t_mix_eps >= r.t_mix && r.t_mix >= r.t_mix_one_minus_eps);
        assert!(r.diagnostic.unwrap().normalized_mean > 1.0);
        assert!(r.diagnostic.unwrap().correlation_ratio >= 1.0);
        assert!(cutoff_check(16381, 0.5).is_err());
        assert!(cutoff_check(5, 0.25).is_err());
    }

    #[test]
    fn upper_bound_shape_has_small_constant() {
        let k = [4093u64, 16381, 65521]
            .iter()
            .flat_map(|&p| cutoff_check(p, 0.25).unwrap().beta_checks)
            .map(|b| b.fitted_constant)
            .fold(0.0, f64::max);
        assert!(k > 0.0 && k <= 50.0);
    }
}
