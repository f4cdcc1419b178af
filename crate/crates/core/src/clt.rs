//! The lazy nearest-neighbour walk on `Z^k` (`ν_k` uniform on `{0, ±e_i}`)
//! compared with its Gaussian limit `η_k(√(2n/(2k+1)), ·)`.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::numeric::{gaussian_density, KahanSum, GL3, GL5};

/// Largest grid `(2n+1)^k` that [`nu_power`] will allocate.
pub const CELL_LIMIT: u128 = 10_000_000;

/// Constant in the fourth-moment condition of [`pointwise_ratio`].
pub const FOURTH_MOMENT_CONSTANT: f64 = 4.0;

/// Subdivision depth for cells crossed by the level set, by dimension.
const CELL_DEPTH: [u32; 3] = [0, 4, 1];

/// Pieces carrying less mass than this are integrated as if sign-definite.
const NEGLIGIBLE: f64 = 1e-15;

/// `ν_k^{*n}` on the box `[-n, n]^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDistribution {
    k: usize,
    n: u64,
    values: Vec<f64>,
}

impl GridDistribution {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn width(&self) -> usize {
        2 * self.n as usize + 1
    }

    fn index(&self, alpha: &[i64]) -> Option<usize> {
        if alpha.len() != self.k {
            return None;
        }
        let n = self.n as i64;
        let w = self.width();
        let mut idx = 0;
        for &a in alpha.iter().rev() {
            if a.abs() > n {
                return None;
            }
            idx = idx * w + (a + n) as usize;
        }
        Some(idx)
    }

    /// `ν_k^{*n}(α)`, zero outside the box.
    pub fn get(&self, alpha: &[i64]) -> f64 {
        self.index(alpha).map_or(0.0, |i| self.values[i])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().copied().sum::<KahanSum>().value()
    }

    /// `σ = √(2n/(2k+1))`.
    pub fn sigma(&self) -> f64 {
        (2.0 * self.n as f64 / (2 * self.k + 1) as f64).sqrt()
    }

    pub fn pointwise_ratio(&self, alpha: &[i64]) -> Result<PointwiseRatio> {
        if alpha.len() != self.k {
            return Err(Error::invalid("point dimension differs from k"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        let n = self.n as f64;
        let k = self.k as f64;
        let n2: f64 = alpha.iter().map(|&a| (a * a) as f64).sum();
        let n4: f64 = alpha.iter().map(|&a| ((a * a) as f64).powi(2)).sum();
        let in_range = n2 <= 2.0 * k * n / (2.0 * k + 1.0) + n * n.ln() / k.sqrt()
            && n4 <= FOURTH_MOMENT_CONSTANT * n * n / k * (1.0 + n.ln() / k.sqrt());
        Ok(PointwiseRatio {
            ratio: self.get(alpha) / gaussian_density(self.sigma(), self.k, n2),
            in_range,
        })
    }
}

fn validate(k: usize, n: u64) -> Result<()> {
    if !(1..=3).contains(&k) {
        return Err(Error::invalid(format!("k = {k} must lie in 1..=3")));
    }
    let needed = (2 * n as u128 + 1).pow(k as u32);
    if needed > CELL_LIMIT {
        return Err(Error::Capacity {
            needed,
            limit: CELL_LIMIT,
        });
    }
    Ok(())
}

/// Exact `ν_k^{*n}` by repeated averaging over the `2k+1` steps. At step
/// `s` only the box of radius `s` is touched.
pub fn nu_power(k: usize, n: u64) -> Result<GridDistribution> {
    validate(k, n)?;
    let w = 2 * n as usize + 1;
    let c = n as usize;
    let total = w.pow(k as u32);
    let stride: Vec<usize> = (0..k).map(|i| w.pow(i as u32)).collect();
    let centre: usize = stride.iter().map(|s| s * c).sum();
    let mut cur = vec![0.0; total];
    let mut next = vec![0.0; total];
    cur[centre] = 1.0;
    let norm = 1.0 / (2 * k + 1) as f64;
    let mut dims = [(0usize, 0usize, 1usize); 3];
    for s in 1..=c {
        for (i, d) in dims.iter_mut().enumerate() {
            *d = if i < k { (c - s, c + s, stride[i]) } else { (0, 0, 0) };
        }
        for z in dims[2].0..=dims[2].1 {
            for y in dims[1].0..=dims[1].1 {
                let row = z * dims[2].2 + y * dims[1].2;
                for x in dims[0].0..=dims[0].1 {
                    let idx = row + x;
                    let coord = [x, y, z];
                    let mut acc = cur[idx];
                    for i in 0..k {
                        let st = stride[i];
                        if coord[i] > 0 {
                            acc += cur[idx - st];
                        }
                        if coord[i] + 1 < w {
                            acc += cur[idx + st];
                        }
                    }
                    next[idx] = acc * norm;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(GridDistribution { k, n, values: cur })
}

/// Per-axis quadrature rule for cell integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellRule {
    GaussLegendre5,
    GaussLegendre3,
}

impl CellRule {
    fn nodes(self) -> &'static [(f64, f64)] {
        match self {
            CellRule::GaussLegendre5 => &GL5,
            CellRule::GaussLegendre3 => &GL3,
        }
    }
}

/// Gaussian mass of `[lo, hi]` for the centred normal with `σ√2 = scale`.
fn interval_mass(lo: f64, hi: f64, scale: f64) -> f64 {
    let (lo, hi) = (lo / scale, hi / scale);
    if lo >= 0.0 {
        0.5 * (erfc(lo) - erfc(hi))
    } else if hi <= 0.0 {
        0.5 * (erfc(-hi) - erfc(-lo))
    } else {
        0.5 * (erf(hi) - erf(lo))
    }
}

/// Radius at which `η_k(σ, ·)` equals `nu`, if any.
fn level_radius(nu: f64, sigma: f64, k: usize) -> Option<f64> {
    let peak = gaussian_density(sigma, k, 0.0);
    if nu <= 0.0 || nu >= peak {
        return None;
    }
    Some(sigma * (2.0 * (peak / nu).ln()).sqrt())
}

struct CellProblem<'a> {
    sigma: f64,
    scale: f64,
    rule: &'a [(f64, f64)],
}

impl CellProblem<'_> {
    /// `∫ |ν - η|` over the cube of half-width `h` centred at `c`, where `ν`
    /// is the constant `nu`. Pieces that the level set `η = ν` misses are
    /// integrated exactly; the others are subdivided `depth` more times and
    /// then handled by the product rule.
    fn cell(&self, c: &[f64], h: f64, nu: f64, r: Option<f64>, depth: u32) -> f64 {
        let k = c.len();
        let crosses = r.is_some_and(|r| {
            let (mut lo2, mut hi2) = (0.0, 0.0);
            for &ci in c {
                let (a, b) = ((ci - h).abs(), (ci + h).abs());
                if (ci - h) * (ci + h) > 0.0 {
                    lo2 += a.min(b).powi(2);
                }
                hi2 += a.max(b).powi(2);
            }
            lo2 < r * r && r * r < hi2
        });
        let mass: f64 = c.iter().map(|&ci| interval_mass(ci - h, ci + h, self.scale)).product();
        let flat = nu * (2.0 * h).powi(k as i32);
        if !crosses || flat + mass < NEGLIGIBLE {
            return (flat - mass).abs();
        }
        if k == 1 {
            return self.segment(c[0] - h, c[0] + h, nu, r.expect("crosses"));
        }
        let mut sub = vec![0.0; k];
        let mut total = 0.0;
        for corner in 0..(1usize << k) {
            for i in 0..k {
                sub[i] = c[i] + if corner >> i & 1 == 1 { 0.5 * h } else { -0.5 * h };
            }
            total += if depth == 0 {
                self.cube_rule(&sub, 0.5 * h, nu)
            } else {
                self.cell(&sub, 0.5 * h, nu, r, depth - 1)
            };
        }
        total
    }

    /// Exact one-dimensional case: split at `±r`.
    fn segment(&self, lo: f64, hi: f64, nu: f64, r: f64) -> f64 {
        let mut cuts = vec![lo];
        for x in [-r, r] {
            if lo < x && x < hi {
                cuts.push(x);
            }
        }
        cuts.push(hi);
        cuts.windows(2)
            .map(|w| (nu * (w[1] - w[0]) - interval_mass(w[0], w[1], self.scale)).abs())
            .sum()
    }

    fn cube_rule(&self, c: &[f64], h: f64, nu: f64) -> f64 {
        let k = c.len();
        let m = self.rule.len();
        let mut total = 0.0;
        let mut idx = vec![0usize; k];
        loop {
            let mut w = 1.0;
            let mut n2 = 0.0;
            for i in 0..k {
                let (x, wi) = self.rule[idx[i]];
                let xi = c[i] + h * x;
                n2 += xi * xi;
                w *= wi * h;
            }
            total += w * (nu - gaussian_density(self.sigma, k, n2)).abs();
            let mut i = 0;
            loop {
                if i == k {
                    return total;
                }
                idx[i] += 1;
                if idx[i] < m {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }
}

/// `‖ν_k^{*n} ∗ 1_{[-1/2,1/2)^k} - η_k(σ, ·)‖_TV`.
pub fn clt_tv(k: usize, n: u64) -> Result<f64> {
    clt_tv_with(k, n, CellRule::GaussLegendre5)
}

pub fn clt_tv_with(k: usize, n: u64, rule: CellRule) -> Result<f64> {
    validate(k, n)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let dist = nu_power(k, n)?;
    let sigma = dist.sigma();
    let ni = n as i64;
    let w = 2 * n as usize + 1;
    let scale = sigma * SQRT_2;
    let axis_mass: Vec<f64> = (-ni..=ni)
        .map(|j| interval_mass(j as f64 - 0.5, j as f64 + 0.5, scale))
        .collect();
    let problem = CellProblem {
        sigma,
        scale,
        rule: rule.nodes(),
    };
    let depth = CELL_DEPTH[k - 1];
    let outer = if k == 1 { 1 } else { w.pow(k as u32 - 1) };
    let rows: Vec<f64> = (0..outer)
        .into_par_iter()
        .map(|r| {
            let mut alpha = vec![0i64; k];
            let mut rest = r;
            for a in alpha.iter_mut().skip(1) {
                *a = (rest % w) as i64 - ni;
                rest /= w;
            }
            let mut acc = KahanSum::default();
            let mut centre = vec![0.0; k];
            for x in -ni..=ni {
                alpha[0] = x;
                let l1: i64 = alpha.iter().map(|a| a.abs()).sum();
                if l1 > ni {
                    acc.add(alpha.iter().map(|&a| axis_mass[(a + ni) as usize]).product());
                    continue;
                }
                for (c, &a) in centre.iter_mut().zip(&alpha) {
                    *c = a as f64;
                }
                let nu = dist.get(&alpha);
                acc.add(problem.cell(&centre, 0.5, nu, level_radius(nu, sigma, k), depth));
            }
            acc.value()
        })
        .collect();
    let inside: f64 = rows.into_iter().sum::<KahanSum>().value();
    let e = erfc((n as f64 + 0.5) / scale);
    let outside = -(k as f64 * (-e).ln_1p()).exp_m1();
    Ok((0.5 * (inside + outside)).clamp(0.0, 1.0))
}

/// `ν_k^{*n}(α) / η_k(σ, α)` and whether `α` satisfies the range conditions
/// of the pointwise Gaussian approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRatio {
    pub ratio: f64,
    pub in_range: bool,
}

pub fn pointwise_ratio(k: usize, n: u64, alpha: &[i64]) -> Result<PointwiseRatio> {
    nu_power(k, n)?.pointwise_ratio(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_powers() {
        let d0 = nu_power(2, 0).unwrap();
        assert_eq!(d0.get(&[0, 0]), 1.0);
        let d = nu_power(1, 2).unwrap();
        for (a, e) in [(0, 3.0), (1, 2.0), (-1, 2.0), (2, 1.0), (-2, 1.0)] {
            assert!((d.get(&[a]) - e / 9.0).abs() < 1e-15);
        }
        assert_eq!(d.get(&[3]), 0.0);
    }

    #[test]
    fn naive_enumeration_oracle() {
        let steps: [[i64; 2]; 5] = [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]];
        let n = 4;
        let mut counts = std::collections::HashMap::new();
        for code in 0..5usize.pow(n) {
            let mut c = code;
            let mut pos = [0i64; 2];
            for _ in 0..n {
                let s = steps[c % 5];
                pos[0] += s[0];
                pos[1] += s[1];
                c /= 5;
            }
            *counts.entry(pos).or_insert(0u64) += 1;
        }
        let d = nu_power(2, n as u64).unwrap();
        for (pos, cnt) in counts {
            assert!((d.get(&pos) - cnt as f64 / 625.0).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetry_and_mass() {
        let d = nu_power(3, 12).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-12);
        for a in -3i64..=3 {
            for b in -3i64..=3 {
                let v = d.get(&[a, b, 1]);
                for w in [d.get(&[b, a, 1]), d.get(&[-a, b, -1]), d.get(&[1, a, b])] {
                    assert!((v - w).abs() <= 1e-14 * v);
                }
            }
        }
        assert!(d.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn capacity_and_validation() {
        assert!(matches!(nu_power(3, 500), Err(Error::Capacity { .. })));
        assert!(nu_power(4, 2).is_err());
        assert!(clt_tv(1, 0).is_err());
    }

    #[test]
    fn tv_decreases_for_k1() {
        let vals: Vec<f64> = [16, 64, 256, 1024].iter().map(|&n| clt_tv(1, n).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        assert!(vals.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn quadrature_order_is_stable() {
        let a = clt_tv_with(1, 64, CellRule::GaussLegendre5).unwrap();
        let b = clt_tv_with(1, 64, CellRule::GaussLegendre3).unwrap();
        assert!((a - b).abs() < 1e-6);
        let a2 = clt_tv_with(2, 16, CellRule::GaussLegendre5).unwrap();
        let b2 = clt_tv_with(2, 16, CellRule::GaussLegendre3).unwrap();
        assert!((a2 - b2).abs() < 1e-6);
    }

    #[test]
    fn pointwise_ratios() {
        let d = nu_power(1, 10_000).unwrap();
        let r0 = d.pointwise_ratio(&[0]).unwrap();
        assert!(r0.in_range);
        assert!((r0.ratio - 1.0).abs() < 0.01);
        let (a, b) = (d.pointwise_ratio(&[37]).unwrap(), d.pointwise_ratio(&[-37]).unwrap());
        assert!((a.ratio - b.ratio).abs() < 1e-12 && a.in_range == b.in_range);
        assert!(!d.pointwise_ratio(&[2000]).unwrap().in_range);
        let worst = |d: &GridDistribution| {
            let s = d.sigma() as i64;
            (-s..=s)
                .map(|a| (d.pointwise_ratio(&[a]).unwrap().ratio - 1.0).abs())
                .fold(0.0, f64::max)
        };
        assert!(worst(&d) < worst(&nu_power(1, 1000).unwrap()));
    }
}
