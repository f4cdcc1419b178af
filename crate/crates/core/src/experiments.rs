//! Experiment orchestration: random ensembles of generating sets, the
//! power-of-two cut-off runs and thin numeric wrappers, with JSON and CSV
//! output.
//!
//! Every trial draws from its own keyed stream, so results are identical
//! whatever the number of worker threads.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use statrs::function::gamma::gamma;

use crate::arith::is_prime;
use crate::clt::clt_tv;
use crate::error::{Error, Result};
use crate::genset::GenSet;
use crate::lattice::{
    geometric_diameter, lattice_of, sample_genset, sample_lattice, shortest_dual, unit_ball_radius,
    LatticeFamily,
};
use crate::power2::{c0, c0_partial_sums, cutoff_check, CutoffReport};
use crate::rng::{keyed_rng, stream};
use crate::theta::{tau0, theta0_projection_tv, theta_tv_mc, DEFAULT_TOL};
use crate::walk::{relaxation_time, spectral_gap, LatticePrediction, MixingReport, Walk, DEFAULT_EPS};

/// Slack below `τ₀` tolerated for `t_mix / t_rel`.
pub const TAU0_SLACK: f64 = 0.05;

/// Relative distance from `(k/2πe) p^{2/k}` within which a trial counts as typical.
pub const TYPICAL_TOLERANCE: f64 = 0.3;

/// Significant digits for the scalar wrapper commands.
pub const WRAPPER_DIGITS: usize = 12;

/// Primes near `2^10, 2^12, 2^14, 2^16` free of power collisions.
pub const POWER2_GRID: [u64; 4] = [1021, 4093, 16381, 65521];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::invalid(format!("unknown format {s:?}; expected json or csv"))),
        }
    }
}

/// How `k` is chosen for each modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum KRule {
    Fixed(usize),
    /// `⌊ln p / ln ln p⌋`.
    LogPOverLogLogP,
}

impl KRule {
    pub fn k_for(&self, p: u64) -> usize {
        match *self {
            KRule::Fixed(k) => k,
            KRule::LogPOverLogLogP => {
                let l = (p as f64).ln();
                ((l / l.ln()).floor() as usize).max(1)
            }
        }
    }
}

impl fmt::Display for KRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KRule::Fixed(k) => write!(f, "{k}"),
            KRule::LogPOverLogLogP => f.write_str("logp_over_loglogp"),
        }
    }
}

impl FromStr for KRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "logp_over_loglogp" {
            return Ok(KRule::LogPOverLogLogP);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(KRule::Fixed(k)),
            _ => Err(Error::invalid(format!(
                "k must be a positive integer or \"logp_over_loglogp\", got {s:?}"
            ))),
        }
    }
}

impl From<KRule> for String {
    fn from(r: KRule) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for KRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Random,
    Power2,
    Tau0,
    C0,
    Clt,
    Theta,
    Sweep,
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "analyze" => Command::Analyze,
            "random" => Command::Random,
            "power2" => Command::Power2,
            "tau0" => Command::Tau0,
            "c0" => Command::C0,
            "clt" => Command::Clt,
            "theta" => Command::Theta,
            "sweep" => Command::Sweep,
            _ => return Err(Error::invalid(format!("unknown command {s:?}"))),
        })
    }
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    /// A single modulus or a grid.
    pub p: Vec<u64>,
    pub k: KRule,
    pub half: Option<String>,
    pub trials: usize,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub mc_samples: usize,
    /// Radii for the shortest-vector and relaxation-time tail fractions.
    pub rho: Vec<f64>,
    /// Step counts for `clt`.
    pub n: Vec<u64>,
    /// Diffusion time for `theta`.
    pub t: Option<f64>,
    pub format: Format,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        ExperimentConfig {
            command,
            p: Vec::new(),
            k: KRule::Fixed(1),
            half: None,
            trials: 1,
            seed: 0,
            eps: vec![DEFAULT_EPS],
            mc_samples: 100_000,
            rho: vec![2.0],
            n: Vec::new(),
            t: None,
            format: Format::Json,
            out: None,
        }
    }

    fn single_p(&self) -> Result<u64> {
        match self.p.as_slice() {
            [p] => Ok(*p),
            [] => Err(Error::invalid("--p is required")),
            _ => Err(Error::invalid("this command takes a single --p")),
        }
    }

    fn validate(&self) -> Result<()> {
        for &p in &self.p {
            if p < 3 || !is_prime(p) {
                return Err(Error::invalid(format!("modulus {p} must be an odd prime")));
            }
        }
        if let Some(e) = self.eps.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::invalid(format!("eps = {e} must lie in (0, 1)")));
        }
        if let Some(r) = self.rho.iter().find(|&&r| !(r > 0.0)) {
            return Err(Error::invalid(format!("rho = {r} must be positive")));
        }
        Ok(())
    }
}

/// One random (or given) generating set and its mixing statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub p: u64,
    pub k: usize,
    /// Coefficients of the canonical lattice representative.
    pub a: Vec<u64>,
    /// Shortest nonzero dual vector length.
    pub ell: f64,
    pub gap: f64,
    pub t_rel: f64,
    /// `t_mix(1/e)`.
    pub t_mix: u64,
    /// `t_mix(ε)` for each configured `ε`, in order.
    pub t_mix_eps: Vec<u64>,
    pub diam_geom: f64,
    pub ratio_rel: f64,
    /// `t_mix / ((k/2πe) p^{2/k})`.
    pub ratio_typical: f64,
}

/// `(k/2πe) p^{2/k}`.
pub fn typical_tmix(p: u64, k: usize) -> f64 {
    k as f64 / (2.0 * PI * E) * (p as f64).powf(2.0 / k as f64)
}

/// `(2k+1) p^{2/k} / (16π Γ(k/2+1)^{2/k})`.
pub fn t_rel_floor(p: u64, k: usize) -> f64 {
    let kf = k as f64;
    (2.0 * kf + 1.0) / (16.0 * PI * gamma(kf / 2.0 + 1.0).powf(2.0 / kf)) * (p as f64).powf(2.0 / kf)
}

pub fn trial_record(trial: u64, set: &GenSet, eps: &[f64]) -> Result<TrialRecord> {
    let walk = Walk::new(set);
    let gap = spectral_gap(walk.profile())?;
    let t_rel = relaxation_time(gap)?;
    let t_mix_eps = eps.iter().map(|&e| walk.mixing_time(e)).collect::<Result<Vec<u64>>>()?;
    let t_mix = match eps.iter().position(|&e| e == DEFAULT_EPS) {
        Some(i) => t_mix_eps[i],
        None => walk.mixing_time(DEFAULT_EPS)?,
    };
    let lattice = lattice_of(set);
    let ell = shortest_dual(&lattice).norm;
    Ok(TrialRecord {
        trial,
        p: set.p(),
        k: set.k(),
        a: lattice.a().to_vec(),
        ell,
        gap,
        t_rel,
        t_mix,
        t_mix_eps,
        diam_geom: geometric_diameter(set),
        ratio_rel: t_mix as f64 / t_rel,
        ratio_typical: t_mix as f64 / typical_tmix(set.p(), set.k()),
    })
}

/// Uniform random sets in `𝒜(p, k)`; trial `i` uses stream `(seed, first + i)`.
pub fn run_trials(p: u64, k: usize, trials: usize, seed: u64, first: u64, eps: &[f64]) -> Result<Vec<TrialRecord>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let index = first + i;
            let mut rng = keyed_rng(seed, index, stream::GENSET);
            let set = sample_genset(p, k, &mut rng)?;
            trial_record(index, &set, eps)
        })
        .collect()
}

/// Nearest-rank quantile of a sorted slice: the element of rank `⌈q n⌉`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && q > 0.0 && q <= 1.0);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Empirical frequency of a rare event against its predicted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFraction {
    pub rho: f64,
    /// `(e/π) ρ² p^{2/k}`.
    pub t_rel_threshold: f64,
    pub fraction: f64,
    /// `1/(2ρ^k)`.
    pub predicted: f64,
}

/// Summary of one `(p, k)` group of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub p: u64,
    pub k: usize,
    pub trials: usize,
    pub typical_tmix: f64,
    pub t_mix_q10: f64,
    pub t_mix_median: f64,
    pub t_mix_q90: f64,
    pub ratio_typical_median: f64,
    /// Fraction with `ratio_typical` within [`TYPICAL_TOLERANCE`] of 1.
    pub fraction_typical: f64,
    pub ratio_rel_min: f64,
    pub ratio_rel_max: f64,
    pub tau0: f64,
    /// Fraction with `t_mix / t_rel < τ₀ - TAU0_SLACK`.
    pub fraction_below_tau0: f64,
    pub t_rel_floor: f64,
    /// `min t_rel / t_rel_floor`.
    pub t_rel_floor_ratio_min: f64,
    pub tails: Vec<TailFraction>,
}

pub fn summarize(records: &[TrialRecord], rho: &[f64]) -> Result<Vec<GroupSummary>> {
    let tau = tau0(DEFAULT_TOL)?;
    let mut keys: Vec<(u64, usize)> = records.iter().map(|r| (r.p, r.k)).collect();
    keys.dedup();
    let mut out = Vec::new();
    for (p, k) in keys {
        let group: Vec<&TrialRecord> = records.iter().filter(|r| r.p == p && r.k == k).collect();
        let n = group.len() as f64;
        let sorted = |f: &dyn Fn(&TrialRecord) -> f64| {
            let mut v: Vec<f64> = group.iter().map(|r| f(r)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let t_mix = sorted(&|r| r.t_mix as f64);
        let typical = sorted(&|r| r.ratio_typical);
        let rel = sorted(&|r| r.ratio_rel);
        let t_rel = sorted(&|r| r.t_rel);
        let floor = t_rel_floor(p, k);
        let frac = |pred: &dyn Fn(&TrialRecord) -> bool| group.iter().filter(|r| pred(r)).count() as f64 / n;
        let tails = rho
            .iter()
            .map(|&rho| {
                let threshold = E / PI * rho * rho * (p as f64).powf(2.0 / k as f64);
                TailFraction {
                    rho,
                    t_rel_threshold: threshold,
                    fraction: frac(&|r| r.t_rel >= threshold),
                    predicted: 0.5 / rho.powi(k as i32),
                }
            })
            .collect();
        out.push(GroupSummary {
            p,
            k,
            trials: group.len(),
            typical_tmix: typical_tmix(p, k),
            t_mix_q10: nearest_rank(&t_mix, 0.1),
            t_mix_median: nearest_rank(&t_mix, 0.5),
            t_mix_q90: nearest_rank(&t_mix, 0.9),
            ratio_typical_median: nearest_rank(&typical, 0.5),
            fraction_typical: frac(&|r| (r.ratio_typical - 1.0).abs() <= TYPICAL_TOLERANCE),
            ratio_rel_min: rel[0],
            ratio_rel_max: rel[rel.len() - 1],
            tau0: tau,
            fraction_below_tau0: frac(&|r| r.ratio_rel < tau - TAU0_SLACK),
            t_rel_floor: floor,
            t_rel_floor_ratio_min: t_rel[0] / floor,
            tails,
        });
    }
    Ok(out)
}

/// Frequency of `‖λ*‖ <= R_k / (ρ p^{1/k})` over uniform lattices in `L⁰(p, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortVectorTail {
    pub p: u64,
    pub k: usize,
    pub rho: f64,
    pub samples: usize,
    pub hits: usize,
    pub fraction: f64,
    /// `1/(2ρ^k)`.
    pub predicted: f64,
    /// Binomial standard deviation of the fraction under the prediction.
    pub sigma: f64,
    /// `(fraction - predicted) / sigma`.
    pub z: f64,
}

pub fn shortest_vector_tail(p: u64, k: usize, rho: f64, samples: usize, seed: u64) -> Result<ShortVectorTail> {
    if samples == 0 || !(rho > 0.0) {
        return Err(Error::invalid("need samples >= 1 and rho > 0"));
    }
    let radius = unit_ball_radius(k) / (rho * (p as f64).powf(1.0 / k as f64));
    let hits: Vec<bool> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_rng(seed, i, stream::LATTICE);
            let lat = sample_lattice(p, k, LatticeFamily::L0, &mut rng)?;
            Ok(shortest_dual(&lat).norm <= radius)
        })
        .collect::<Result<_>>()?;
    let hits = hits.into_iter().filter(|&h| h).count();
    let predicted = 0.5 / rho.powi(k as i32);
    let fraction = hits as f64 / samples as f64;
    let sigma = (predicted * (1.0 - predicted) / samples as f64).sqrt();
    Ok(ShortVectorTail {
        p,
        k,
        rho,
        samples,
        hits,
        fraction,
        predicted,
        sigma,
        z: (fraction - predicted) / sigma,
    })
}

/// The full report for one set, with lattice predictions filled in.
pub fn analyze(set: &GenSet, eps: &[f64]) -> Result<MixingReport> {
    let mut report = Walk::new(set).report(eps, 33)?;
    let ell = shortest_dual(&lattice_of(set)).norm;
    report.predicted = Some(LatticePrediction {
        ell,
        t_rel_lattice: set.size() as f64 / (4.0 * PI * PI * ell * ell),
        tau0_t_rel: tau0(DEFAULT_TOL)? * report.t_rel,
    });
    Ok(report)
}

/// Machine-readable result of one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Output {
    pub config: ExperimentConfig,
    pub records: Vec<Value>,
    pub summary: Value,
}

fn to_values<T: Serialize>(items: &[T]) -> Vec<Value> {
    items
        .iter()
        .map(|x| serde_json::to_value(x).expect("records serialize"))
        .collect()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("summaries serialize")
}

pub fn cmd_analyze(config: &ExperimentConfig) -> Result<Output> {
    let p = config.single_p()?;
    let half = config
        .half
        .as_deref()
        .ok_or_else(|| Error::invalid("--half is required for analyze"))?;
    let set = GenSet::parse(p, half)?;
    let record = trial_record(0, &set, &config.eps)?;
    let report = analyze(&set, &config.eps)?;
    Ok(Output {
        config: config.clone(),
        records: to_values(&[record]),
        summary: to_value(&report),
    })
}

pub fn cmd_random(config: &ExperimentConfig) -> Result<Output> {
    let p = config.single_p()?;
    random_ensemble(config, &[p])
}

/// Random ensembles over a grid of moduli, `k` from the configured rule.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Output> {
    if config.p.is_empty() {
        return Err(Error::invalid("--p is required"));
    }
    random_ensemble(config, &config.p)
}

fn random_ensemble(config: &ExperimentConfig, grid: &[u64]) -> Result<Output> {
    if config.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut records = Vec::new();
    for (g, &p) in grid.iter().enumerate() {
        let k = config.k.k_for(p);
        let first = (g * config.trials) as u64;
        records.extend(run_trials(p, k, config.trials, config.seed, first, &config.eps)?);
    }
    let summary = summarize(&records, &config.rho)?;
    Ok(Output {
        config: config.clone(),
        records: to_values(&records),
        summary: to_value(&summary),
    })
}

/// One flat row per modulus of the cut-off report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub p: u64,
    pub ell: u32,
    pub predicted: f64,
    pub t_mix: u64,
    pub t_mix_eps: u64,
    pub t_mix_one_minus_eps: u64,
    pub ratio: f64,
    pub window_ratio: f64,
    pub j: u32,
    pub bp_size: usize,
    pub diagnostic_n: u64,
    pub normalized_mean: Option<f64>,
    pub correlation_ratio: Option<f64>,
    /// Largest `TV² / bound` over the `β` checks.
    pub fitted_constant: f64,
}

impl From<&CutoffReport> for CutoffRow {
    fn from(r: &CutoffReport) -> Self {
        CutoffRow {
            p: r.p,
            ell: r.ell,
            predicted: r.predicted,
            t_mix: r.t_mix,
            t_mix_eps: r.t_mix_eps,
            t_mix_one_minus_eps: r.t_mix_one_minus_eps,
            ratio: r.ratio,
            window_ratio: r.window_ratio,
            j: r.j,
            bp_size: r.bp_size,
            diagnostic_n: r.diagnostic_n,
            normalized_mean: r.diagnostic.map(|d| d.normalized_mean),
            correlation_ratio: r.diagnostic.map(|d| d.correlation_ratio),
            fitted_constant: r.beta_checks.iter().map(|b| b.fitted_constant).fold(0.0, f64::max),
        }
    }
}

pub fn cmd_power2(config: &ExperimentConfig) -> Result<Output> {
    let grid: Vec<u64> = if config.p.is_empty() { POWER2_GRID.to_vec() } else { config.p.clone() };
    let eps = match config.eps.as_slice() {
        [e] if *e == DEFAULT_EPS => 0.25,
        [e] => *e,
        _ => return Err(Error::invalid("power2 takes a single --eps")),
    };
    let reports: Vec<CutoffReport> = grid
        .par_iter()
        .map(|&p| cutoff_check(p, eps))
        .collect::<Result<_>>()?;
    let rows: Vec<CutoffRow> = reports.iter().map(CutoffRow::from).collect();
    Ok(Output {
        config: config.clone(),
        records: to_values(&rows),
        summary: to_value(&reports),
    })
}

pub fn cmd_tau0(config: &ExperimentConfig) -> Result<Output> {
    let value = tau0(DEFAULT_TOL)?;
    Ok(Output {
        config: config.clone(),
        records: vec![serde_json::json!({ "tau0": value, "tol": DEFAULT_TOL })],
        summary: Value::Null,
    })
}

pub fn cmd_c0(config: &ExperimentConfig) -> Result<Output> {
    let tol = 1e-12;
    let value = c0(tol)?;
    Ok(Output {
        config: config.clone(),
        records: vec![serde_json::json!({
            "c0": value,
            "tol": tol,
            "terms": c0_partial_sums(tol).len(),
        })],
        summary: Value::Null,
    })
}

pub fn cmd_clt(config: &ExperimentConfig) -> Result<Output> {
    let k = match config.k {
        KRule::Fixed(k) => k,
        KRule::LogPOverLogLogP => return Err(Error::invalid("clt needs a fixed k")),
    };
    let ns: Vec<u64> = if config.n.is_empty() { vec![16, 64, 256, 1024] } else { config.n.clone() };
    let values: Vec<f64> = ns.iter().map(|&n| clt_tv(k, n)).collect::<Result<_>>()?;
    let records = ns
        .iter()
        .zip(&values)
        .map(|(&n, &tv)| serde_json::json!({ "k": k, "n": n, "clt_tv": tv }))
        .collect();
    Ok(Output {
        config: config.clone(),
        records,
        summary: serde_json::json!({ "decreasing": values.windows(2).all(|w| w[1] < w[0]) }),
    })
}

pub fn cmd_theta(config: &ExperimentConfig) -> Result<Output> {
    let p = config.single_p()?;
    let half = config
        .half
        .as_deref()
        .ok_or_else(|| Error::invalid("--half is required for theta"))?;
    let t = config.t.ok_or_else(|| Error::invalid("--t is required for theta"))?;
    let set = GenSet::parse(p, half)?;
    let lattice = lattice_of(&set);
    let mc = theta_tv_mc(&lattice, t, config.mc_samples, config.seed)?;
    let projection = theta0_projection_tv(&lattice, t)?;
    Ok(Output {
        config: config.clone(),
        records: vec![serde_json::json!({
            "p": p,
            "a": lattice.a(),
            "t": t,
            "tv": mc.estimate,
            "stderr": mc.stderr,
            "projection_tv": projection,
        })],
        summary: Value::Null,
    })
}

/// Runs the configured command. Wrapper commands are rounded to
/// [`WRAPPER_DIGITS`] significant digits.
pub fn run(config: &ExperimentConfig) -> Result<Output> {
    config.validate()?;
    let mut out = match config.command {
        Command::Analyze => cmd_analyze(config)?,
        Command::Random => cmd_random(config)?,
        Command::Sweep => cmd_sweep(config)?,
        Command::Power2 => cmd_power2(config)?,
        Command::Tau0 => cmd_tau0(config)?,
        Command::C0 => cmd_c0(config)?,
        Command::Clt => cmd_clt(config)?,
        Command::Theta => cmd_theta(config)?,
    };
    if matches!(
        config.command,
        Command::Power2 | Command::Tau0 | Command::C0 | Command::Clt | Command::Theta
    ) {
        out.records.iter_mut().for_each(|v| round_value(v, WRAPPER_DIGITS));
        round_value(&mut out.summary, WRAPPER_DIGITS);
    }
    Ok(out)
}

/// `x` rounded to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().expect("formatted float parses")
}

/// Rounds every non-integer number in `v` in place.
pub fn round_value(v: &mut Value, digits: usize) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64"), digits);
            if let Some(r) = serde_json::Number::from_f64(x) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(|x| round_value(x, digits)),
        Value::Object(m) => m.values_mut().for_each(|x| round_value(x, digits)),
        _ => {}
    }
}

impl Output {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("output serializes");
        s.push('\n');
        s
    }

    /// Header plus one row per record. Nested objects become dotted
    /// columns; arrays of scalars are joined with `;`.
    pub fn to_csv(&self) -> Result<String> {
        let rows: Vec<Vec<(String, String)>> = self
            .records
            .iter()
            .map(|r| {
                let mut cells = Vec::new();
                flatten("", r, &mut cells);
                cells
            })
            .collect();
        let mut header: Vec<String> = Vec::new();
        for row in &rows {
            for (key, _) in row {
                if !header.contains(key) {
                    header.push(key.clone());
                }
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).map_err(csv_error)?;
        for row in &rows {
            let line = header.iter().map(|h| {
                row.iter()
                    .find(|(k, _)| k == h)
                    .map(|(_, v)| v.as_str())
                    .unwrap_or("")
            });
            w.write_record(line).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv output failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => Ok(self.to_json()),
            Format::Csv => self.to_csv(),
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("csv output failed: {e}"))
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some(String::new()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => flatten_map(prefix, m, out),
        Value::Array(a) => match a.iter().map(scalar).collect::<Option<Vec<_>>>() {
            Some(cells) => out.push((prefix.to_string(), cells.join(";"))),
            None => {
                for (i, x) in a.iter().enumerate() {
                    flatten(&key(&i.to_string()), x, out);
                }
            }
        },
        _ => out.push((prefix.to_string(), scalar(v).expect("scalar"))),
    }
}

fn flatten_map(prefix: &str, m: &Map<String, Value>, out: &mut Vec<(String, String)>) {
    for (k, x) in m {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        flatten(&key, x, out);
    }
}
