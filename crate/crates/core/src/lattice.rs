//! Index-`p` lattices `Λ(a) = {n ∈ Z^k : n·a ≡ 0 mod p}`, their duals
//! `Z^k + Z·a/p`, and the geometric quantities attached to them.
//!
//! Dual vectors are stored through their integer numerators: `v = numer / p`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::arith::{centered, gcd, inv_mod, is_prime, mul_mod, sym_rep};
use crate::error::{Error, Result};
use crate::genset::GenSet;
use crate::numeric::{bisect, gaussian_density, golden_max, KahanSum};
use crate::rng::{keyed_rng, stream};

/// Largest number of integer points a residue table may hold.
pub const TABLE_LIMIT: u128 = 20_000_000;

/// Number of samples used for the covering radius when `k >= 3`.
pub const COVERING_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexPLattice {
    p: u64,
    a: Vec<u64>,
}

impl IndexPLattice {
    /// `a` is reduced mod `p` and rescaled so its first nonzero entry is 1.
    pub fn new(p: u64, a: impl Into<Vec<u64>>) -> Result<Self> {
        if p < 3 || !is_prime(p) {
            return Err(Error::invalid(format!("modulus {p} must be an odd prime")));
        }
        let a: Vec<u64> = a.into().into_iter().map(|x| x % p).collect();
        if a.is_empty() {
            return Err(Error::invalid("lattice dimension must be at least 1"));
        }
        let Some(&lead) = a.iter().find(|&&x| x != 0) else {
            return Err(Error::invalid("coefficient vector is zero mod p"));
        };
        let inv = inv_mod(lead, p);
        Ok(IndexPLattice {
            p,
            a: a.iter().map(|&x| mul_mod(x, inv, p)).collect(),
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[u64] {
        &self.a
    }

    /// Index of the first coordinate with `a_i = 1`; `Z^k / Λ` is generated by
    /// the corresponding unit vector.
    pub fn pivot(&self) -> usize {
        self.a.iter().position(|&x| x == 1).expect("normalized")
    }

    /// True when `Λ` comes from a generating set: all `a_i` nonzero and
    /// pairwise distinct up to sign.
    pub fn is_l0(&self) -> bool {
        let mut reps: Vec<u64> = self.a.iter().map(|&x| sym_rep(x, self.p)).collect();
        if reps.contains(&0) {
            return false;
        }
        reps.sort_unstable();
        reps.windows(2).all(|w| w[0] != w[1])
    }

    pub fn contains(&self, n: &[i64]) -> bool {
        assert_eq!(n.len(), self.k());
        let s: i128 = n.iter().zip(&self.a).map(|(&x, &a)| x as i128 * a as i128).sum();
        s.rem_euclid(self.p as i128) == 0
    }

    /// The representative of the orbit under coordinate sign changes,
    /// permutations and rescaling by `F_p^×`: lexicographically least sorted
    /// vector of symmetric residues among the rescalings `a_j^{-1} a`.
    pub fn canonical(&self) -> Self {
        let p = self.p;
        let mut best: Option<Vec<u64>> = None;
        for &aj in self.a.iter().filter(|&&x| x != 0) {
            let inv = inv_mod(aj, p);
            let mut cand: Vec<u64> = self.a.iter().map(|&x| sym_rep(mul_mod(x, inv, p), p)).collect();
            cand.sort_unstable();
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
        IndexPLattice {
            p,
            a: best.expect("nonzero vector"),
        }
    }
}

/// `Λ(A)` in canonical form.
pub fn lattice_of(set: &GenSet) -> IndexPLattice {
    IndexPLattice::new(set.p(), set.half().to_vec())
        .expect("a generating set gives a valid lattice")
        .canonical()
}

/// The generating set with half `{±a_i}`; fails unless `L ∈ L⁰`.
pub fn genset_of(lat: &IndexPLattice) -> Result<GenSet> {
    if lat.a.contains(&0) {
        return Err(Error::NotInL0(format!("coefficient vector {:?} has a zero entry", lat.a)));
    }
    GenSet::from_residues(lat.p, &lat.a).map_err(|_| {
        Error::NotInL0(format!("coefficient vector {:?} repeats a residue up to sign", lat.a))
    })
}

/// A nonzero element `numer / p` of the dual lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVector {
    pub numer: Vec<i64>,
    pub norm: f64,
    /// `gcd(numer) = 1`.
    pub primitive: bool,
    /// `c` with `numer ≡ c·a mod p`; 0 for integer vectors.
    pub multiplier: u64,
}

impl DualVector {
    fn from_numer(numer: Vec<i64>, p: u64, multiplier: u64) -> Self {
        let n2 = norm2(&numer);
        let g = numer.iter().fold(0u64, |g, &x| gcd(g, x.unsigned_abs()));
        DualVector {
            norm: (n2 as f64).sqrt() / p as f64,
            primitive: g == 1,
            numer,
            multiplier,
        }
    }

    pub fn coords(&self, p: u64) -> Vec<f64> {
        self.numer.iter().map(|&x| x as f64 / p as f64).collect()
    }

    /// `‖numer‖²`, exact.
    pub fn numer_norm2(&self) -> i128 {
        norm2(&self.numer)
    }
}

fn norm2(v: &[i64]) -> i128 {
    v.iter().map(|&x| x as i128 * x as i128).sum()
}

fn by_norm_then_lex(x: &DualVector, y: &DualVector) -> Ordering {
    x.numer_norm2()
        .cmp(&y.numer_norm2())
        .then_with(|| x.numer.cmp(&y.numer))
}

/// Every dual vector with `0 < ‖v‖ <= r`, sorted by norm and then
/// lexicographically. Multiples `c·a/p` are reduced coordinatewise to
/// `(-1/2, 1/2]` and integer shifts are added when `r >= 1/2`.
pub fn dual_short_vectors(lat: &IndexPLattice, r: f64) -> Result<Vec<DualVector>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("radius {r} must be positive")));
    }
    let p = lat.p;
    let pf = p as f64;
    let lim = (r * pf) * (r * pf);
    let shift = if r < 0.5 { 0 } else { (r + 1.0).ceil() as i64 };
    let k = lat.k();
    let mut res = vec![0u64; k];
    let mut base = vec![0i64; k];
    let mut cur = vec![0i64; k];
    let mut out = Vec::new();
    for c in 0..p {
        for i in 0..k {
            base[i] = centered(res[i] as i128, p);
        }
        if shift == 0 {
            let n2: f64 = base.iter().map(|&x| (x as f64) * (x as f64)).sum();
            if c != 0 && n2 <= lim {
                out.push(DualVector::from_numer(base.clone(), p, c));
            }
        } else {
            shifts(&base, p as i64, shift, lim, 0, 0.0, &mut cur, &mut |v| {
                if v.iter().any(|&x| x != 0) {
                    out.push(DualVector::from_numer(v.to_vec(), p, c));
                }
            });
        }
        for (ri, &ai) in res.iter_mut().zip(&lat.a) {
            *ri += ai;
            if *ri >= p {
                *ri -= p;
            }
        }
    }
    out.sort_by(by_norm_then_lex);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn shifts(
    base: &[i64],
    p: i64,
    s: i64,
    lim: f64,
    i: usize,
    partial: f64,
    cur: &mut Vec<i64>,
    visit: &mut impl FnMut(&[i64]),
) {
    if i == base.len() {
        visit(cur);
        return;
    }
    for m in -s..=s {
        let x = base[i] + p * m;
        let n2 = partial + (x as f64) * (x as f64);
        if n2 <= lim {
            cur[i] = x;
            shifts(base, p, s, lim, i + 1, n2, cur, visit);
        }
    }
}

/// The shortest nonzero dual vector. Among vectors of minimal norm the
/// lexicographically least one whose first nonzero coordinate is positive
/// is returned.
pub fn shortest_dual(lat: &IndexPLattice) -> DualVector {
    let p = lat.p;
    let k = lat.k();
    let mut best_numer: Vec<i64> = vec![0; k];
    best_numer[k - 1] = p as i64;
    let mut best_n2 = norm2(&best_numer);
    let mut best_mult = 0u64;
    let mut res = lat.a.clone();
    let mut v = vec![0i64; k];
    for c in 1..=(p - 1) / 2 {
        let mut n2: i128 = 0;
        for i in 0..k {
            v[i] = centered(res[i] as i128, p);
            n2 += v[i] as i128 * v[i] as i128;
        }
        if n2 <= best_n2 {
            let mut mult = c;
            if v.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
                v.iter_mut().for_each(|x| *x = -*x);
                mult = p - c;
            }
            if n2 < best_n2 || v < best_numer {
                best_n2 = n2;
                best_numer.copy_from_slice(&v);
                best_mult = mult;
            }
        }
        for (ri, &ai) in res.iter_mut().zip(&lat.a) {
            *ri += ai;
            if *ri >= p {
                *ri -= p;
            }
        }
    }
    DualVector::from_numer(best_numer, p, best_mult)
}

/// `ℓ(A)`, the length of the shortest nonzero dual vector of `Λ(A)`.
pub fn shortest_dual_norm(set: &GenSet) -> f64 {
    shortest_dual(&lattice_of(set)).norm
}

/// Radius of the Euclidean ball of volume 1 in `R^k`.
pub fn unit_ball_radius(k: usize) -> f64 {
    let kf = k as f64;
    (gamma(kf / 2.0 + 1.0) / PI.powf(kf / 2.0)).powf(1.0 / kf)
}

pub fn ball_volume(k: usize, r: f64) -> f64 {
    let kf = k as f64;
    PI.powf(kf / 2.0) / gamma(kf / 2.0 + 1.0) * r.powf(kf)
}

/// Minkowski's bound `(2/√π)(Γ(k/2+1)/p)^{1/k}` on the shortest dual vector.
pub fn minkowski_bound(p: u64, k: usize) -> f64 {
    let kf = k as f64;
    2.0 / PI.sqrt() * (gamma(kf / 2.0 + 1.0) / p as f64).powf(1.0 / kf)
}

/// `|Z^k ∩ B(x, r)|`.
pub fn ball_point_count(x: &[f64], r: f64) -> u64 {
    fn rec(x: &[f64], i: usize, rem: f64) -> u64 {
        if i == x.len() {
            return 1;
        }
        let w = rem.max(0.0).sqrt();
        let lo = (x[i] - w).ceil() as i64;
        let hi = (x[i] + w).floor() as i64;
        let mut total = 0;
        for n in lo..=hi {
            let d = n as f64 - x[i];
            let left = rem - d * d;
            if left >= 0.0 {
                total += rec(x, i + 1, left);
            }
        }
        total
    }
    if r < 0.0 {
        return 0;
    }
    rec(x, 0, r * r)
}

/// Visits every `n ∈ Z^k` with `‖n‖² <= r2` together with `n·a mod p` and
/// `‖n‖²`.
fn for_each_ball_point(p: u64, a: &[u64], r2: u64, visit: &mut impl FnMut(&[i64], u64, u64)) {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        p: u64,
        a: &[u64],
        r2: u64,
        i: usize,
        n2: u64,
        res: u64,
        cur: &mut Vec<i64>,
        visit: &mut impl FnMut(&[i64], u64, u64),
    ) {
        if i == a.len() {
            visit(cur, res, n2);
            return;
        }
        let m = (r2 - n2).isqrt() as i64;
        let ai = a[i] % p;
        let mut r = (res + p - mul_mod(m as u64, ai, p)) % p;
        for n in -m..=m {
            cur[i] = n;
            rec(p, a, r2, i + 1, n2 + (n * n) as u64, r, cur, visit);
            r += ai;
            if r >= p {
                r -= p;
            }
        }
    }
    let mut cur = vec![0i64; a.len()];
    rec(p, a, r2, 0, 0, 0, &mut cur, visit);
}

/// `min ‖n‖²` over `n` with `n·a ≡ x`, for every residue `x`, enumerating
/// balls whose volume doubles at each stage until every residue is hit.
fn residue_min_norms(p: u64, a: &[u64]) -> Vec<u64> {
    let k = a.len();
    let r0 = unit_ball_radius(k) * (p as f64).powf(1.0 / k as f64);
    let mut mins = vec![u64::MAX; p as usize];
    for m in 0.. {
        let r = 2f64.powf(m as f64 / 2.0) * r0;
        let r2 = (r * r).floor() as u64;
        let mut missing = p as usize;
        mins.iter_mut().for_each(|x| *x = u64::MAX);
        for_each_ball_point(p, a, r2, &mut |_, res, n2| {
            let slot = &mut mins[res as usize];
            if *slot == u64::MAX {
                missing -= 1;
            }
            if n2 < *slot {
                *slot = n2;
            }
        });
        if missing == 0 {
            break;
        }
    }
    mins
}

/// `max_x min{‖n‖ : n·a ≡ x mod p}` for the half of `A`.
pub fn geometric_diameter(set: &GenSet) -> f64 {
    let mins = residue_min_norms(set.p(), set.half());
    (*mins.iter().max().expect("p > 0") as f64).sqrt()
}

/// Covering radius of `Λ`, flagged exact or sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringRadius {
    pub value: f64,
    /// False for a Monte Carlo lower bound.
    pub exact: bool,
}

/// Exact for `k <= 2`; a sampled lower bound with [`COVERING_SAMPLES`]
/// points otherwise.
pub fn covering_radius(lat: &IndexPLattice) -> Result<CoveringRadius> {
    match lat.k() {
        1 => Ok(CoveringRadius {
            value: lat.p as f64 / 2.0,
            exact: true,
        }),
        2 => Ok(CoveringRadius {
            value: covering_radius_2d(lat),
            exact: true,
        }),
        _ => Ok(CoveringRadius {
            value: covering_radius_sampled(lat, COVERING_SAMPLES, 0)?,
            exact: false,
        }),
    }
}

/// A basis of `Λ` for `k = 2`, Lagrange-reduced.
fn reduced_basis_2d(lat: &IndexPLattice) -> [[i128; 2]; 2] {
    let p = lat.p as i128;
    let (mut b1, mut b2) = if lat.a[0] == 1 {
        ([p, 0], [-(lat.a[1] as i128), 1])
    } else {
        ([1, 0], [0, p])
    };
    let dot = |u: [i128; 2], v: [i128; 2]| u[0] * v[0] + u[1] * v[1];
    loop {
        if dot(b1, b1) > dot(b2, b2) {
            std::mem::swap(&mut b1, &mut b2);
        }
        let n1 = dot(b1, b1);
        let d = dot(b1, b2);
        let mu = (2 * d + n1).div_euclid(2 * n1);
        if mu == 0 {
            break;
        }
        b2 = [b2[0] - mu * b1[0], b2[1] - mu * b1[1]];
    }
    [b1, b2]
}

fn covering_radius_2d(lat: &IndexPLattice) -> f64 {
    let [b1, b2] = reduced_basis_2d(lat);
    let f = |v: [i128; 2]| [v[0] as f64, v[1] as f64];
    let (b1, b2) = (f(b1), f(b2));
    let m = (b1[0].hypot(b1[1]) + b2[0].hypot(b2[1])) * 2.0;
    let mut poly = vec![(-m, -m), (m, -m), (m, m), (-m, m)];
    for i in -2i32..=2 {
        for j in -2i32..=2 {
            if i == 0 && j == 0 {
                continue;
            }
            let v = (
                i as f64 * b1[0] + j as f64 * b2[0],
                i as f64 * b1[1] + j as f64 * b2[1],
            );
            let c = 0.5 * (v.0 * v.0 + v.1 * v.1);
            poly = clip(&poly, v, c);
        }
    }
    poly.iter().map(|&(x, y)| x.hypot(y)).fold(0.0, f64::max)
}

/// Sutherland-Hodgman clip of a convex polygon to `{x : v·x <= c}`.
fn clip(poly: &[(f64, f64)], v: (f64, f64), c: f64) -> Vec<(f64, f64)> {
    let side = |q: (f64, f64)| v.0 * q.0 + v.1 * q.1 - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for idx in 0..poly.len() {
        let p0 = poly[idx];
        let p1 = poly[(idx + 1) % poly.len()];
        let (s0, s1) = (side(p0), side(p1));
        if s0 <= 0.0 {
            out.push(p0);
        }
        if (s0 <= 0.0) != (s1 <= 0.0) {
            let t = s0 / (s0 - s1);
            out.push((p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1)));
        }
    }
    out
}

/// Integer vectors of norm at most `r` grouped by residue `n·a mod p`.
struct ResidueTable {
    k: usize,
    offsets: Vec<usize>,
    coords: Vec<i32>,
}

impl ResidueTable {
    fn build(p: u64, a: &[u64], r: f64) -> Result<Self> {
        let k = a.len();
        let r2 = (r * r).floor() as u64;
        let estimate = ball_volume(k, r + k as f64 / 2.0) as u128;
        if estimate > TABLE_LIMIT {
            return Err(Error::Capacity {
                needed: estimate,
                limit: TABLE_LIMIT,
            });
        }
        let mut counts = vec![0usize; p as usize + 1];
        for_each_ball_point(p, a, r2, &mut |_, res, _| counts[res as usize + 1] += 1);
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut coords = vec![0i32; counts[p as usize] * k];
        for_each_ball_point(p, a, r2, &mut |n, res, _| {
            let at = fill[res as usize];
            fill[res as usize] += 1;
            for (dst, &x) in coords[at * k..(at + 1) * k].iter_mut().zip(n) {
                *dst = x as i32;
            }
        });
        Ok(ResidueTable {
            k,
            offsets: counts,
            coords,
        })
    }

    fn entries(&self, res: u64) -> impl Iterator<Item = &[i32]> {
        let lo = self.offsets[res as usize];
        let hi = self.offsets[res as usize + 1];
        self.coords[lo * self.k..hi * self.k].chunks_exact(self.k)
    }
}

/// Largest distance to `Λ` seen over `samples` uniform points of `R^k / Λ`.
pub fn covering_radius_sampled(lat: &IndexPLattice, samples: usize, seed: u64) -> Result<f64> {
    let p = lat.p;
    let k = lat.k();
    let diam = (*residue_min_norms(p, &lat.a).iter().max().expect("p > 0") as f64).sqrt();
    let table = ResidueTable::build(p, &lat.a, diam + (k as f64).sqrt())?;
    let pivot = lat.pivot();
    let mut rng = keyed_rng(seed, 0, stream::COVERING);
    let mut best = 0.0f64;
    let mut x = vec![0.0; k];
    let mut frac = vec![0.0; k];
    for _ in 0..samples {
        for xi in x.iter_mut() {
            *xi = rng.random::<f64>();
        }
        x[pivot] += rng.random_range(0..p) as f64;
        let mut res: i128 = 0;
        for i in 0..k {
            let z = x[i].round();
            frac[i] = x[i] - z;
            res += z as i128 * lat.a[i] as i128;
        }
        let target = (-res).rem_euclid(p as i128) as u64;
        let d2 = table
            .entries(target)
            .map(|w| {
                frac.iter()
                    .zip(w)
                    .map(|(&f, &wi)| (f - wi as f64).powi(2))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        best = best.max(d2.sqrt());
    }
    Ok(best)
}

/// Geometric summary of a generating set's lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub lattice: IndexPLattice,
    pub shortest_dual: DualVector,
    pub ell: f64,
    pub diam_geom: f64,
    pub covering_radius: CoveringRadius,
    pub minkowski_rhs: f64,
}

pub fn lattice_geometry(set: &GenSet) -> Result<LatticeGeometry> {
    let lattice = lattice_of(set);
    let shortest = shortest_dual(&lattice);
    Ok(LatticeGeometry {
        ell: shortest.norm,
        shortest_dual: shortest,
        diam_geom: geometric_diameter(set),
        covering_radius: covering_radius(&lattice)?,
        minkowski_rhs: minkowski_bound(set.p(), set.k()),
        lattice,
    })
}

fn kl_sin(s: f64) -> f64 {
    (2.0 * (1.0 / (2.0 * s)).asin()).sin()
}

/// `F(s)` in terms of `S = sin θ`, written to avoid cancellation for large s.
fn kl_of_sin(sn: f64) -> f64 {
    let a = (1.0 + sn) / (2.0 * sn);
    let b = (1.0 - sn) / (2.0 * sn);
    a.ln() + b * (sn.ln_1p() - (-sn).ln_1p())
}

/// The Kabatiansky-Levenshtein rate `F(s)` with `θ = 2 arcsin(1/(2s))`.
pub fn kl_rate(s: f64) -> Result<f64> {
    if !(s >= 1.0) || !s.is_finite() {
        return Err(Error::invalid(format!("kl_rate needs s >= 1, got {s}")));
    }
    Ok(kl_of_sin(kl_sin(s)))
}

/// `dF/ds`.
fn kl_rate_derivative(s: f64) -> f64 {
    let u = 1.0 / (2.0 * s);
    let sn = kl_sin(s);
    let df_dsn = -((1.0 + sn) / (1.0 - sn)).ln() / (2.0 * sn * sn);
    let dsn_du = 2.0 * (1.0 - 2.0 * u * u) / (1.0 - u * u).sqrt();
    let du_ds = -1.0 / (2.0 * s * s);
    df_dsn * dsn_du * du_ds
}

/// Maximizer and maximum of `F(s)/s²` over `s >= 1`.
pub fn kl_max() -> (f64, f64) {
    let ratio = |s: f64| kl_of_sin(kl_sin(s)) / (s * s);
    let g = golden_max(ratio, 1.0, 3.0, 1e-10);
    let slope = |s: f64| s * kl_rate_derivative(s) - 2.0 * kl_of_sin(kl_sin(s));
    let (lo, hi) = (g - 1e-6, g + 1e-6);
    let s = if slope(lo) > 0.0 && slope(hi) < 0.0 {
        bisect(slope, lo, hi, 1e-15)
    } else {
        g
    };
    (s, ratio(s))
}

/// Uniform element of `𝒜(p, k)`.
pub fn sample_genset<R: Rng + ?Sized>(p: u64, k: usize, rng: &mut R) -> Result<GenSet> {
    if p < 3 || !is_prime(p) {
        return Err(Error::invalid(format!("modulus {p} must be an odd prime")));
    }
    if k == 0 || 2 * k as u64 + 1 > p {
        return Err(Error::invalid(format!("need 1 <= k and 2k+1 <= p, got k = {k}, p = {p}")));
    }
    let half: Vec<u64> = index::sample(rng, ((p - 1) / 2) as usize, k)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect();
    GenSet::new(p, half)
}

/// Which family of index-`p` lattices to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeFamily {
    /// Lattices `Λ(A)` of generating sets.
    L0,
    /// All index-`p` sublattices of `Z^k`.
    All,
}

/// Uniform lattice from the family, drawn through its dual generator `v`.
pub fn sample_lattice<R: Rng + ?Sized>(
    p: u64,
    k: usize,
    family: LatticeFamily,
    rng: &mut R,
) -> Result<IndexPLattice> {
    if p < 3 || !is_prime(p) {
        return Err(Error::invalid(format!("modulus {p} must be an odd prime")));
    }
    if k == 0 || (family == LatticeFamily::L0 && 2 * k as u64 + 1 > p) {
        return Err(Error::invalid(format!("no lattices in this family for k = {k}, p = {p}")));
    }
    loop {
        let v: Vec<u64> = match family {
            LatticeFamily::L0 => (0..k).map(|_| rng.random_range(1..p)).collect(),
            LatticeFamily::All => (0..k).map(|_| rng.random_range(0..p)).collect(),
        };
        if v.iter().all(|&x| x == 0) {
            continue;
        }
        let lat = IndexPLattice::new(p, v)?;
        if family == LatticeFamily::All || lat.is_l0() {
            return Ok(lat);
        }
    }
}

/// `Σ_{λ1 ≠ ±λ2} η_k(σ1, λ1) η_k(σ2, λ2)` over nonzero dual vectors with
/// primitive numerators, `σ1 = 1/(ρ p^{1/k})` and `σ2 = σ1 / C`. Terms whose
/// Gaussian factor is below `1e-18` are dropped.
pub fn pair_statistic(lat: &IndexPLattice, rho: f64, c: f64) -> Result<f64> {
    if !(rho > 0.0 && c > 0.0) {
        return Err(Error::invalid("rho and C must be positive"));
    }
    let k = lat.k();
    let s1 = 1.0 / (rho * (lat.p as f64).powf(1.0 / k as f64));
    let s2 = s1 / c;
    let r = s1.max(s2) * (2.0 * 1e18f64.ln()).sqrt();
    let vectors = dual_short_vectors(lat, r)?;
    let mut sum1 = KahanSum::default();
    let mut sum2 = KahanSum::default();
    let mut diag = KahanSum::default();
    for v in vectors.iter().filter(|v| v.primitive) {
        let n2 = v.norm * v.norm;
        let e1 = gaussian_density(s1, k, n2);
        let e2 = gaussian_density(s2, k, n2);
        sum1.add(e1);
        sum2.add(e2);
        diag.add(e1 * e2);
    }
    Ok(sum1.value() * sum2.value() - 2.0 * diag.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_and_membership() {
        let l = IndexPLattice::new(7, vec![3, 6]).unwrap();
        assert_eq!(l.a(), &[1, 2]);
        assert!(l.contains(&[2, -1]));
        assert!(l.contains(&[7, 0]));
        assert!(!l.contains(&[1, 0]));
        let z = IndexPLattice::new(7, vec![0, 3]).unwrap();
        assert_eq!(z.a(), &[0, 1]);
        assert_eq!(z.pivot(), 1);
        assert!(!z.is_l0());
        assert!(IndexPLattice::new(7, vec![0, 7]).is_err());
    }

    #[test]
    fn canonical_examples() {
        let a = GenSet::new(5, vec![1, 2]).unwrap();
        assert_eq!(lattice_of(&a).a(), &[1, 2]);
        assert_eq!(lattice_of(&a.dilate(3).unwrap()), lattice_of(&a));
        let one = GenSet::new(13, vec![5]).unwrap();
        assert_eq!(lattice_of(&one).a(), &[1]);
    }

    #[test]
    fn genset_of_examples() {
        let g = |a: Vec<u64>| genset_of(&IndexPLattice::new(7, a).unwrap());
        assert_eq!(g(vec![1]).unwrap().half(), &[1]);
        assert_eq!(g(vec![1, 3]).unwrap().half(), &[1, 3]);
        assert_eq!(g(vec![1, 5]).unwrap().half(), &[1, 2]);
        assert!(matches!(g(vec![1, 6]), Err(Error::NotInL0(_))));
        assert!(matches!(g(vec![0, 1]), Err(Error::NotInL0(_))));
    }

    #[test]
    fn dual_vectors_small() {
        let l1 = IndexPLattice::new(5, vec![1]).unwrap();
        let v = dual_short_vectors(&l1, 0.45).unwrap();
        assert_eq!(v.len(), 4);
        assert!((v[0].norm - 0.2).abs() < 1e-15);
        assert!((shortest_dual(&l1).norm - 0.2).abs() < 1e-15);

        let l = IndexPLattice::new(7, vec![1, 2]).unwrap();
        let s = shortest_dual(&l);
        assert_eq!(s.numer, vec![1, 2]);
        assert!((s.norm - 5f64.sqrt() / 7.0).abs() < 1e-15);
        let all = dual_short_vectors(&l, 0.5).unwrap();
        assert_eq!(all[0].numer, vec![-1, -2]);
        assert_eq!(all[1].numer, vec![1, 2]);
        for v in &all {
            let neg: Vec<i64> = v.numer.iter().map(|x| -x).collect();
            assert!(all.iter().any(|w| w.numer == neg));
        }
    }

    #[test]
    fn dual_vectors_pair_to_integers_with_lattice() {
        let l = IndexPLattice::new(11, vec![1, 4, 9]).unwrap();
        let basis: Vec<Vec<i64>> = vec![vec![11, 0, 0], vec![-4, 1, 0], vec![-9, 0, 1]];
        for b in &basis {
            assert!(l.contains(b));
        }
        for v in dual_short_vectors(&l, 1.3).unwrap() {
            for b in &basis {
                let dot: i64 = v.numer.iter().zip(b).map(|(x, y)| x * y).sum();
                assert_eq!(dot % 11, 0);
            }
        }
    }

    #[test]
    fn geometric_diameter_examples() {
        assert_eq!(geometric_diameter(&GenSet::new(7, vec![1]).unwrap()), 3.0);
        let d = geometric_diameter(&GenSet::new(7, vec![1, 2]).unwrap());
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(geometric_diameter(&GenSet::new(5, vec![1, 2]).unwrap()), 1.0);
    }

    #[test]
    fn covering_radius_examples() {
        let l1 = IndexPLattice::new(7, vec![1]).unwrap();
        let c1 = covering_radius(&l1).unwrap();
        assert!(c1.exact);
        assert_eq!(c1.value * shortest_dual(&l1).norm, 0.5);
        let l = IndexPLattice::new(7, vec![1, 2]).unwrap();
        let c = covering_radius(&l).unwrap();
        assert!(c.exact);
        assert!(c.value >= 7.0 / (2.0 * 5f64.sqrt()) - 1e-12);
        let sampled = covering_radius_sampled(&l, 20_000, 1).unwrap();
        assert!(sampled <= c.value + 1e-9);
        assert!(sampled >= 0.95 * c.value);
    }

    #[test]
    fn square_lattice_covering_radius() {
        let l = IndexPLattice::new(13, vec![1, 5]).unwrap();
        assert!(l.contains(&[3, 2]) && l.contains(&[-2, 3]));
        let c = covering_radius(&l).unwrap();
        assert!((c.value - 13f64.sqrt() / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn point_counts() {
        assert_eq!(ball_point_count(&[0.0], 2.5), 5);
        assert_eq!(ball_point_count(&[0.0, 0.0], 1.0), 5);
        assert_eq!(ball_point_count(&[0.5, 0.5], 0.75), 4);
        assert_eq!(ball_point_count(&[0.0, 0.0, 0.0], 0.0), 1);
    }

    #[test]
    fn ball_constants() {
        for k in 1..8 {
            assert!((ball_volume(k, unit_ball_radius(k)) - 1.0).abs() < 1e-12);
        }
        assert!((unit_ball_radius(1) - 0.5).abs() < 1e-15);
        assert!((minkowski_bound(7, 1) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn kl_rate_values() {
        assert!(kl_rate(0.5).is_err());
        let s = 3f64.sqrt() / 2.0;
        let a: f64 = (1.0 + s) / (2.0 * s);
        let b: f64 = (1.0 - s) / (2.0 * s);
        let direct = a * a.ln() - b * b.ln();
        assert!((kl_rate(1.0).unwrap() - direct).abs() < 1e-14);
        let h = 1e-6;
        for s in [1.1, 1.26, 2.0, 5.0] {
            let fd = (kl_rate(s + h).unwrap() - kl_rate(s - h).unwrap()) / (2.0 * h);
            assert!((fd - kl_rate_derivative(s)).abs() < 1e-7);
        }
        assert!(kl_rate(1e6).unwrap() / 1e12 < 1e-10);
    }

    #[test]
    fn samplers() {
        let mut rng = keyed_rng(1, 0, 0);
        for _ in 0..20 {
            assert_eq!(sample_genset(7, 3, &mut rng).unwrap().half(), &[1, 2, 3]);
            let l = sample_lattice(11, 3, LatticeFamily::L0, &mut rng).unwrap();
            assert!(l.is_l0());
            assert_eq!(l.a()[0], 1);
        }
        assert!(sample_genset(7, 4, &mut rng).is_err());
    }

    #[test]
    fn pair_statistic_small_radius_is_zero() {
        let l = IndexPLattice::new(101, vec![1, 10]).unwrap();
        assert_eq!(pair_statistic(&l, 1e4, 1.0).unwrap(), 0.0);
        assert!(pair_statistic(&l, 1.0, 1.0).unwrap() > 0.0);
    }
}
