//! Gaussian diffusion on the circle `R/Z` and on tori `R^k/Λ`.
//!
//! `θ(x, t) = Σ_j exp(-(x-j)²/2t)/√(2πt) = 1 + 2 Σ_{j≥1} e^{-2π²tj²} cos 2πjx`.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::mul_mod;
use crate::error::{Error, Result};
use crate::genset::GenSet;
use crate::lattice::{ball_volume, dual_short_vectors, lattice_of, shortest_dual, IndexPLattice};
use crate::numeric::{bisect, gaussian_density, integrate, KahanSum};
use crate::rng::{keyed_rng, stream};

/// Terms with Gaussian exponent above this are dropped (`e^{-45} < 3e-20`).
pub const EXPONENT_CUTOFF: f64 = 45.0;

/// Default truncation tolerance for lattice theta functions.
pub const DEFAULT_TOL: f64 = 1e-9;

const MC_BLOCK: usize = 4096;

/// `θ(x, t)` by direct summation over the images `x - j`.
pub fn theta_circle_spatial(x: f64, t: f64) -> f64 {
    let x = x - x.floor();
    let w = (2.0 * t * 50.0).sqrt();
    let lo = (x - w).floor() as i64;
    let hi = (x + w).ceil() as i64;
    let norm = 1.0 / (2.0 * PI * t).sqrt();
    (lo..=hi)
        .map(|j| {
            let d = x - j as f64;
            (-d * d / (2.0 * t)).exp()
        })
        .sum::<KahanSum>()
        .value()
        * norm
}

/// `θ(x, t)` by its Fourier series.
pub fn theta_circle_frequency(x: f64, t: f64) -> f64 {
    let mut s = KahanSum::default();
    s.add(1.0);
    let mut j = 1.0f64;
    loop {
        let e = 2.0 * PI * PI * t * j * j;
        if e > 50.0 {
            break;
        }
        s.add(2.0 * (-e).exp() * (2.0 * PI * j * x).cos());
        j += 1.0;
    }
    s.value()
}

/// `θ(x, t)`, using whichever form converges faster.
pub fn theta_circle(x: f64, t: f64) -> f64 {
    if t < 1.0 / (2.0 * PI) {
        theta_circle_spatial(x, t)
    } else {
        theta_circle_frequency(x, t)
    }
}

/// The point of `(0, 1/2)` where `θ(·, t)` crosses 1.
fn crossing(t: f64) -> f64 {
    bisect(|x| theta_circle(x, t) - 1.0, 0.0, 0.5, 1e-15)
}

/// `‖θ(·, t) - 1‖_TV` on `R/Z`, i.e. `2 ∫_0^{x0} (θ - 1)`.
pub fn tv_circle(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("time {t} must be positive")));
    }
    if 2.0 * PI * PI * t > 60.0 {
        return Ok(2.0 * (-2.0 * PI * PI * t).exp() / PI);
    }
    let x0 = crossing(t);
    let mass = integrate(|x| theta_circle(x, t) - 1.0, 0.0, x0, 1e-13);
    Ok((2.0 * mass).clamp(0.0, 1.0))
}

/// The constant `τ₀ = 2π²t` at which `tv_circle(t) = 1/e`.
pub fn tau0(tol: f64) -> Result<f64> {
    if !(tol >= 1e-12) {
        return Err(Error::invalid(format!("tolerance {tol} must be at least 1e-12")));
    }
    let target = (-1.0f64).exp();
    let f = |tau: f64| tv_circle(tau / (2.0 * PI * PI)).expect("positive time") - target;
    Ok(bisect(f, 0.4, 0.7, (tol / 10.0).max(1e-14)))
}

/// Arguments of a lattice theta evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaQuery {
    pub lattice: IndexPLattice,
    pub t: f64,
    pub x: Vec<f64>,
    pub tol: f64,
}

impl ThetaQuery {
    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::invalid(format!("time {} must be positive", self.t)));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-6) {
            return Err(Error::invalid(format!("tolerance {} must lie in (0, 1e-6]", self.tol)));
        }
        if self.x.len() != self.lattice.k() {
            return Err(Error::invalid("point dimension differs from lattice dimension"));
        }
        Ok(())
    }
}

/// Bound on `(1/p) Σ_{‖λ‖>r} e^{-2π²t‖λ‖²}` using `#{λ : ‖λ‖ <= s} <= p (2s+1)^k`.
fn frequency_tail(k: usize, t: f64, r: f64) -> f64 {
    let mut total = 0.0;
    for m in 0.. {
        let inner = r + m as f64;
        let term = (2.0 * (inner + 1.0) + 1.0).powi(k as i32) * (-2.0 * PI * PI * t * inner * inner).exp();
        total += term;
        if term < 1e-30 * total.max(1e-300) || m > 100_000 {
            break;
        }
    }
    total
}

/// `Θ(·, t; Λ)` prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct LatticeTheta {
    lattice: IndexPLattice,
    t: f64,
    form: Form,
}

#[derive(Debug, Clone)]
enum Form {
    /// Half of the dual vectors (one of each `±λ`) with their weights.
    Frequency { vectors: Vec<(Vec<f64>, f64)> },
    /// Images within `radius` of the evaluation point.
    Spatial { radius: f64 },
}

impl LatticeTheta {
    /// Chooses the frequency form unless the spatial form needs far fewer
    /// terms.
    pub fn new(lattice: &IndexPLattice, t: f64, tol: f64) -> Result<Self> {
        let k = lattice.k();
        let p = lattice.p() as f64;
        let mut r = (EXPONENT_CUTOFF / (2.0 * PI * PI * t)).sqrt();
        let spatial_radius = (2.0 * t * EXPONENT_CUTOFF).sqrt();
        let freq_cost = p * ball_volume(k, r + 0.5 * (k as f64).sqrt());
        let spatial_cost = ball_volume(k, spatial_radius + (k as f64).sqrt());
        if spatial_cost < freq_cost {
            return LatticeTheta::spatial(lattice, t);
        }
        while frequency_tail(k, t, r) > tol {
            r *= 1.25;
        }
        LatticeTheta::frequency(lattice, t, r)
    }

    pub fn frequency(lattice: &IndexPLattice, t: f64, r: f64) -> Result<Self> {
        let p = lattice.p();
        let vectors = dual_short_vectors(lattice, r)?
            .into_iter()
            .filter(|v| v.numer.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0))
            .map(|v| {
                let w = 2.0 * (-2.0 * PI * PI * t * v.norm * v.norm).exp();
                (v.coords(p), w)
            })
            .collect();
        Ok(LatticeTheta {
            lattice: lattice.clone(),
            t,
            form: Form::Frequency { vectors },
        })
    }

    pub fn spatial(lattice: &IndexPLattice, t: f64) -> Result<Self> {
        Ok(LatticeTheta {
            lattice: lattice.clone(),
            t,
            form: Form::Spatial {
                radius: (2.0 * t * (EXPONENT_CUTOFF + 5.0)).sqrt(),
            },
        })
    }

    pub fn is_frequency(&self) -> bool {
        matches!(self.form, Form::Frequency { .. })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let p = self.lattice.p();
        match &self.form {
            Form::Frequency { vectors } => {
                let mut s = KahanSum::default();
                s.add(1.0);
                for (v, w) in vectors {
                    let dot: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
                    s.add(w * (2.0 * PI * dot).cos());
                }
                s.value() / p as f64
            }
            Form::Spatial { radius } => {
                let k = x.len();
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let a = self.lattice.a();
                let mut s = KahanSum::default();
                let mut cur = vec![0i64; k];
                images(&neg, radius * radius, 0, 0.0, &mut cur, &mut |n, d2| {
                    let res: i128 = n
                        .iter()
                        .zip(a)
                        .map(|(&ni, &ai)| mul_mod(ni.rem_euclid(p as i64) as u64, ai, p) as i128)
                        .sum();
                    if res % p as i128 == 0 {
                        s.add(gaussian_density(self.t.sqrt(), k, d2));
                    }
                });
                s.value()
            }
        }
    }
}

/// Integer points `n` with `‖n - c‖² <= r2`, with that squared distance.
fn images(c: &[f64], r2: f64, i: usize, partial: f64, cur: &mut Vec<i64>, visit: &mut impl FnMut(&[i64], f64)) {
    if i == c.len() {
        visit(cur, partial);
        return;
    }
    let w = (r2 - partial).max(0.0).sqrt();
    for n in (c[i] - w).ceil() as i64..=(c[i] + w).floor() as i64 {
        let d = n as f64 - c[i];
        let q = partial + d * d;
        if q <= r2 {
            cur[i] = n;
            images(c, r2, i + 1, q, cur, visit);
        }
    }
}

/// `Θ(x, t; Λ)` to absolute accuracy `tol`.
pub fn theta_lattice(q: &ThetaQuery) -> Result<f64> {
    q.validate()?;
    Ok(LatticeTheta::new(&q.lattice, q.t, q.tol)?.eval(&q.x))
}

/// `Θ(x, t; Λ)` by summing the Gaussian over lattice images.
pub fn theta_lattice_spatial(q: &ThetaQuery) -> Result<f64> {
    q.validate()?;
    Ok(LatticeTheta::spatial(&q.lattice, q.t)?.eval(&q.x))
}

/// `Θ(x, t; αZ)` with the two one-dimensional approximations and their
/// error envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBounds {
    pub value: f64,
    /// Nearest-image Gaussian term.
    pub leading: f64,
    pub leading_error: f64,
    /// `1/α`.
    pub mean: f64,
    pub mean_error: f64,
    pub within_leading: bool,
    pub within_mean: bool,
}

pub fn theta_1d_bounds_check(alpha: f64, t: f64, x: f64) -> Result<ThetaBounds> {
    if !(alpha > 0.0 && t > 0.0) {
        return Err(Error::invalid("alpha and t must be positive"));
    }
    let value = theta_circle(x / alpha, t / (alpha * alpha)) / alpha;
    let y = x / alpha;
    let dist = (y - y.round()).abs();
    let leading = (-(alpha * dist).powi(2) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
    let q1 = (-alpha * alpha / (8.0 * t)).exp();
    let leading_error = 2.0 * q1 / ((2.0 * PI * t).sqrt() * (1.0 - q1));
    let q2 = (-2.0 * PI * PI * t / (alpha * alpha)).exp();
    let mean_error = 2.0 * q2 / (alpha * (1.0 - q2));
    let slack = 1e-12 * value.abs().max(1.0);
    Ok(ThetaBounds {
        value,
        leading,
        leading_error,
        mean: 1.0 / alpha,
        mean_error,
        within_leading: (value - leading).abs() <= leading_error + slack,
        within_mean: (value - 1.0 / alpha).abs() <= mean_error + slack,
    })
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// `‖Θ(·, t; Λ) - U‖_TV` on `R^k/Λ` by sampling the fundamental domain
/// `[0,1)^k + {j e_pivot : 0 <= j < p}`. The sampled quantity is
/// `p (1/p - Θ)⁺`, which has the same mean as `(p/2)|Θ - 1/p|` but is
/// bounded, so concentrated kernels do not inflate the variance. Blocks of samples use independent
/// keyed streams, so the result does not depend on thread scheduling.
pub fn theta_tv_mc(lat: &IndexPLattice, t: f64, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::invalid(format!("need at least 1000 samples, got {samples}")));
    }
    if !(t > 0.0) {
        return Err(Error::invalid(format!("time {t} must be positive")));
    }
    let theta = LatticeTheta::new(lat, t, DEFAULT_TOL)?;
    let p = lat.p();
    let k = lat.k();
    let pivot = lat.pivot();
    let inv_p = 1.0 / p as f64;
    let blocks = samples.div_ceil(MC_BLOCK);
    let sums: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let n = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut rng = keyed_rng(seed, b as u64, stream::THETA_MC);
            let mut x = vec![0.0; k];
            let mut s = KahanSum::default();
            let mut s2 = KahanSum::default();
            for _ in 0..n {
                for xi in x.iter_mut() {
                    *xi = rng.random::<f64>();
                }
                x[pivot] += rng.random_range(0..p) as f64;
                let d = (inv_p - theta.eval(&x)).max(0.0);
                s.add(d);
                s2.add(d * d);
            }
            (s.value(), s2.value())
        })
        .collect();
    let n = samples as f64;
    let mean = sums.iter().map(|s| s.0).sum::<KahanSum>().value() / n;
    let mean2 = sums.iter().map(|s| s.1).sum::<KahanSum>().value() / n;
    let var = (mean2 - mean * mean).max(0.0) * n / (n - 1.0);
    let scale = p as f64;
    Ok(McEstimate {
        estimate: scale * mean,
        stderr: scale * (var / n).sqrt(),
    })
}

/// TV of the projection of `Θ` onto the line through the shortest dual
/// vector, which is `tv_circle(t ℓ²)`.
pub fn theta0_projection_tv(lat: &IndexPLattice, t: f64) -> Result<f64> {
    let ell = shortest_dual(lat).norm;
    tv_circle(t * ell * ell)
}

/// TV of the diffusion matched to `n` steps of the walk, at time
/// `2n/(2k+1)`.
pub fn continuous_tv_at_step(set: &GenSet, n: u64, samples: usize, seed: u64) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::invalid("step count must be at least 1"));
    }
    let t = 2.0 * n as f64 / set.size() as f64;
    theta_tv_mc(&lattice_of(set), t, samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    /// `2 Σ_{j≥1} e^{-2π²tj²} sin(2πj x0)/(πj)`, the closed form of the TV integral.
    fn tv_closed_form(t: f64) -> f64 {
        let x0 = crossing(t);
        let mut s = 0.0;
        for j in 1..200_000 {
            let jf = j as f64;
            let e = 2.0 * PI * PI * t * jf * jf;
            if e > 60.0 {
                break;
            }
            s += (-e).exp() * (2.0 * PI * jf * x0).sin() / (PI * jf);
        }
        2.0 * s
    }

    /// Same integral through normal CDF differences of the image sum.
    fn tv_by_cdf(t: f64) -> f64 {
        let x0 = crossing(t);
        let n = Normal::new(0.0, t.sqrt()).unwrap();
        let w = (2.0 * t * 50.0).sqrt().ceil() as i64 + 1;
        let mass: f64 = (-w..=w)
            .map(|j| n.cdf(x0 - j as f64) - n.cdf(-j as f64))
            .sum();
        2.0 * (mass - x0)
    }

    #[test]
    fn forms_agree() {
        for &t in &[0.01, 0.05, 0.1, 0.159, 0.2, 1.0] {
            for i in 0..20 {
                let x = i as f64 / 20.0;
                let a = theta_circle_spatial(x, t);
                let b = theta_circle_frequency(x, t);
                assert!((a - b).abs() < 1e-12 * a.max(1.0), "t={t} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn circle_basic_properties() {
        for i in 0..50 {
            let x = i as f64 / 50.0;
            assert!((theta_circle(x, 100.0) - 1.0).abs() <= 1e-10);
            let t = 0.03;
            let v = theta_circle(x, t);
            assert!((v - theta_circle(1.0 - x, t)).abs() < 1e-12);
            assert!((v - theta_circle(-x, t)).abs() < 1e-12);
        }
        for &t in &[0.001, 0.02, 0.3] {
            let total = integrate(|x| theta_circle(x, t), 0.0, 1.0, 1e-12);
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tv_circle_matches_closed_forms() {
        for &t in &[0.002, 0.01, 0.03, 0.05, 0.1, 0.3] {
            let q = tv_circle(t).unwrap();
            let f = tv_closed_form(t);
            let c = tv_by_cdf(t);
            assert!((q - f).abs() < 1e-11, "t={t}: {q} vs {f}");
            assert!((q - c).abs() < 1e-9, "t={t}: {q} vs {c}");
        }
    }

    #[test]
    fn tau0_brackets_and_root() {
        let target = 2.0 / std::f64::consts::E;
        let l1 = |tau: f64| 2.0 * tv_circle(tau / (2.0 * PI * PI)).unwrap();
        assert!(l1(0.4) > target);
        assert!(l1(0.7) < target);
        let t0 = tau0(1e-10).unwrap();
        let tv = tv_circle(t0 / (2.0 * PI * PI)).unwrap();
        assert!((tv - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn lattice_theta_poisson() {
        let lat = IndexPLattice::new(101, vec![1, 10]).unwrap();
        let t = 101.0 / 10.0;
        let mut rng = keyed_rng(5, 0, 0);
        for _ in 0..100 {
            let x = vec![rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0];
            let q = ThetaQuery { lattice: lat.clone(), t, x, tol: 1e-9 };
            let f = LatticeTheta::new(&lat, t, 1e-9).unwrap();
            assert!(f.is_frequency());
            let a = f.eval(&q.x);
            let b = theta_lattice_spatial(&q).unwrap();
            assert!((a - b).abs() <= 2e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn lattice_theta_one_dimensional_rescaling() {
        let p = 31;
        let lat = IndexPLattice::new(p, vec![1]).unwrap();
        for &t in &[1.0, 30.0, 400.0] {
            for i in 0..10 {
                let x = i as f64 * 3.1;
                let q = ThetaQuery { lattice: lat.clone(), t, x: vec![x], tol: 1e-9 };
                let v = theta_lattice(&q).unwrap();
                let expect = theta_circle(x / p as f64, t / (p * p) as f64) / p as f64;
                assert!((v - expect).abs() < 1e-10);
            }
        }
        let q = ThetaQuery { lattice: lat, t: 1e6, x: vec![4.0], tol: 1e-9 };
        assert!((theta_lattice(&q).unwrap() - 1.0 / p as f64).abs() < 1e-12);
    }

    #[test]
    fn query_validation() {
        let lat = IndexPLattice::new(7, vec![1, 2]).unwrap();
        let bad = ThetaQuery { lattice: lat.clone(), t: 1.0, x: vec![0.0, 0.0], tol: 1e-3 };
        assert!(theta_lattice(&bad).is_err());
        let bad = ThetaQuery { lattice: lat, t: -1.0, x: vec![0.0, 0.0], tol: 1e-9 };
        assert!(theta_lattice(&bad).is_err());
    }

    #[test]
    fn one_dimensional_bounds() {
        let b = theta_1d_bounds_check(1.0, 10.0, 0.0).unwrap();
        assert!(b.within_mean && b.within_leading);
        let q = (-2.0 * PI * PI * 10.0f64).exp();
        assert!((b.value - 1.0).abs() <= 2.0 * q / (1.0 - q) + 1e-15);
        let s = theta_1d_bounds_check(1.0, 0.001, 0.0).unwrap();
        assert!(s.within_leading);
        assert!((s.value - 1.0 / (2.0 * PI * 0.001f64).sqrt()).abs() <= s.leading_error);
        for &(alpha, t) in &[(2.0, 0.3), (0.5, 0.01), (3.0, 5.0)] {
            for i in 0..10 {
                let x = i as f64 * 0.37;
                let v = theta_1d_bounds_check(alpha, t, x).unwrap();
                assert!(v.within_leading && v.within_mean);
                let m = theta_1d_bounds_check(alpha, t, -x).unwrap();
                let shifted = theta_1d_bounds_check(alpha, t, x + alpha).unwrap();
                assert!((v.value - m.value).abs() < 1e-12);
                assert!((v.value - shifted.value).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mc_one_dimensional_matches_exact() {
        let p = 101u64;
        let lat = IndexPLattice::new(p, vec![1]).unwrap();
        for &t in &[200.0, 600.0, 2000.0] {
            let mc = theta_tv_mc(&lat, t, 20_000, 3).unwrap();
            let exact = tv_circle(t / (p * p) as f64).unwrap();
            assert!((mc.estimate - exact).abs() <= 3.0 * mc.stderr + 1e-12, "{mc:?} vs {exact}");
            let proj = theta0_projection_tv(&lat, t).unwrap();
            assert!((proj - exact).abs() < 1e-12);
        }
        assert!(theta_tv_mc(&lat, 1.0, 10, 0).is_err());
    }

    #[test]
    fn mc_extremes() {
        let lat = IndexPLattice::new(101, vec![1, 10]).unwrap();
        let small = theta_tv_mc(&lat, 1e-6 * 101.0, 2000, 1).unwrap();
        assert!(small.estimate >= 0.99);
        let big = theta_tv_mc(&lat, 1e4, 2000, 1).unwrap();
        assert!(big.estimate <= 3.0 * big.stderr + 1e-12, "{big:?}");
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let lat = IndexPLattice::new(101, vec![1, 10]).unwrap();
        let a = theta_tv_mc(&lat, 5.0, 10_000, 9).unwrap();
        let b = theta_tv_mc(&lat, 5.0, 10_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projection_value_at_tau0() {
        let lat = IndexPLattice::new(1009, vec![1, 31, 200]).unwrap();
        let ell = shortest_dual(&lat).norm;
        let t = tau0(1e-12).unwrap() / (2.0 * PI * PI * ell * ell);
        let v = theta0_projection_tv(&lat, t).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-9);
        assert!(theta0_projection_tv(&lat, 2.0 * t).unwrap() < v);
    }
}
