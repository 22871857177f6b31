//! BPSK receivers for TMSV repetition blocks of M modes: optical parametric
//! amplifier (OPA), phase-conjugate receiver (PCR) and feed-forward
//! sum-frequency generation (FF-SFG).

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::capacities::classical_capacity;
use crate::error::{domain, numerical, Error, Result};
use crate::gaussian_core::ChannelParams;
use crate::phase_holevo::{dts_fock_element, DisplacedThermal, DtsPmfStream, PhotonDistribution, FockTruncation};
use crate::special_fn::{erfc, ln_binomial};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpaConfig {
    pub gain: f64,
    pub block_size: u64,
    pub ch: ChannelParams,
}

impl OpaConfig {
    /// OPA at the gain G = 1 + √N_S/N_B.
    pub fn optimal(block_size: u64, ch: ChannelParams) -> Self {
        Self {
            gain: optimal_gain(&ch),
            block_size,
            ch,
        }
    }

    fn validate(&self) -> Result<()> {
        self.ch.validate()?;
        if !(self.gain >= 1.0) || !self.gain.is_finite() {
            return domain("OpaConfig", format!("gain = {} must be >= 1", self.gain));
        }
        if self.block_size == 0 {
            return domain("OpaConfig", "block_size must be positive");
        }
        Ok(())
    }
}

pub fn optimal_gain(ch: &ChannelParams) -> f64 {
    if ch.n_b > 0.0 {
        1.0 + ch.n_s.sqrt() / ch.n_b
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImperfectionModel {
    pub kappa_i: f64,
    pub kappa_s: f64,
    pub eta_d: f64,
}

impl ImperfectionModel {
    pub fn new(kappa_i: f64, kappa_s: f64, eta_d: f64) -> Result<Self> {
        for (name, v) in [("kappa_i", kappa_i), ("kappa_s", kappa_s), ("eta_d", eta_d)] {
            if !(v > 0.0 && v <= 1.0) {
                return domain("ImperfectionModel", format!("{name} = {v} outside (0, 1]"));
            }
        }
        Ok(Self {
            kappa_i,
            kappa_s,
            eta_d,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Opa,
    Pcr,
    SfgBound,
    SfgMc,
    OpaMc,
    PcrMc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminationResult {
    pub p_error: f64,
    pub rate_per_mode: f64,
    pub method: Method,
    pub mc_stderr: Option<f64>,
}

impl DiscriminationResult {
    fn analytic(p_error: f64, m: u64, method: Method) -> Result<Self> {
        let p_error = p_error.clamp(0.0, 0.5);
        Ok(Self {
            p_error,
            rate_per_mode: rate_from_error(p_error, m)?,
            method,
            mc_stderr: None,
        })
    }
}

/// Per-mode rate (1 − H₂(P_E))/M of a binary symmetric channel used once per block.
pub fn rate_from_error(p_error: f64, m: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_error) {
        return domain("rate_from_error", format!("p_error = {p_error} outside [0, 1]"));
    }
    if m == 0 {
        return domain("rate_from_error", "block size must be positive");
    }
    let xlog = |p: f64| if p > 0.0 { p * p.log2() } else { 0.0 };
    let r = if (p_error - 0.5).abs() < 1e-4 {
        // 1 − H₂ near ½ loses digits; use the even series in d = P_E − ½.
        let d2 = 4.0 * (p_error - 0.5).powi(2);
        let mut s = 0.0;
        let mut t = 1.0;
        for k in 1..=8 {
            t *= d2;
            s += t / ((2 * k) as f64 * (2 * k - 1) as f64);
        }
        s / LN_2
    } else {
        1.0 + xlog(p_error) + xlog(1.0 - p_error)
    };
    Ok(r / m as f64)
}

/// Mean photon number per mode at the OPA output given encoded phase θ.
pub fn opa_mean_photon(theta: f64, cfg: &OpaConfig, imp: Option<&ImperfectionModel>) -> Result<f64> {
    let (base, cross) = opa_mean_parts(cfg)?;
    let Some(im) = imp else {
        return Ok(base + cross * theta.cos());
    };
    let g = cfg.gain;
    let ch = &cfg.ch;
    Ok(im.eta_d
        * (g * im.kappa_i * ch.n_s
            + (g - 1.0) * (im.kappa_s * ch.kappa * ch.n_s + im.kappa_s * ch.n_b + 1.0)
            + cross * theta.cos() * (im.kappa_i * im.kappa_s).sqrt()))
}

/// Ideal OPA mean split as N̄(θ) = base + cross·cos θ.
pub fn opa_mean_parts(cfg: &OpaConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let g = cfg.gain;
    let ch = &cfg.ch;
    let base = g * ch.n_s + (g - 1.0) * (ch.kappa * ch.n_s + ch.n_b + 1.0);
    Ok((base, 2.0 * (g * (g - 1.0)).sqrt() * ch.c_p()))
}

/// ln of the negative-binomial probability of n counts over M thermal modes
/// of mean `n_bar` each.
pub fn ln_negative_binomial(n: u64, m: u64, n_bar: f64) -> f64 {
    if n_bar == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_binomial(n + m - 1, n) + n as f64 * (n_bar / (1.0 + n_bar)).ln() - m as f64 * n_bar.ln_1p()
}

/// Total photon-count distribution over the M output modes.
pub fn opa_count_pmf(theta: f64, cfg: &OpaConfig, n_max: usize) -> Result<PhotonDistribution> {
    let n_bar = opa_mean_photon(theta, cfg, None)?;
    let pmf: Vec<f64> = (0..=n_max as u64)
        .map(|n| ln_negative_binomial(n, cfg.block_size, n_bar).exp())
        .collect();
    let mass: f64 = pmf.iter().sum();
    if mass < 1.0 - 1e-9 {
        return Err(Error::TruncationTooSmall {
            op: "opa_count_pmf",
            msg: format!("captured mass {mass:.3e} with n_max = {n_max}"),
        });
    }
    Ok(PhotonDistribution {
        pmf,
        dims: vec![n_max + 1],
        truncation: FockTruncation {
            n_max: vec![n_max],
            captured_mass: mass,
        },
    })
}

/// Argument x of P_E = erfc(x)/2 for the ideal OPA receiver.
pub fn opa_erfc_argument(cfg: &OpaConfig) -> Result<f64> {
    let n0 = opa_mean_photon(0.0, cfg, None)?;
    let npi = opa_mean_photon(std::f64::consts::PI, cfg, None)?;
    let mu = (n0 - npi).abs();
    let sigma = (n0 * (1.0 + n0)).sqrt() + (npi * (1.0 + npi)).sqrt();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    Ok((cfg.block_size as f64 * mu * mu / (2.0 * sigma * sigma)).sqrt())
}

/// Gaussian-approximation error probability of the OPA receiver. With an
/// imperfection model the erfc argument is scaled by √(κ_I η_D).
pub fn opa_error_prob(cfg: &OpaConfig, imp: Option<&ImperfectionModel>) -> Result<DiscriminationResult> {
    let scale = imp.map_or(1.0, |im| (im.kappa_i * im.eta_d).sqrt());
    let x = opa_erfc_argument(cfg)? * scale;
    DiscriminationResult::analytic(0.5 * erfc(x), cfg.block_size, Method::Opa)
}

/// Error probability of the variance-weighted threshold rule evaluated by
/// direct summation of the negative-binomial count distributions.
pub fn opa_error_prob_exact(cfg: &OpaConfig) -> Result<f64> {
    let n0 = opa_mean_photon(0.0, cfg, None)?;
    let npi = opa_mean_photon(std::f64::consts::PI, cfg, None)?;
    let (s0, spi) = ((n0 * (1.0 + n0)).sqrt(), (npi * (1.0 + npi)).sqrt());
    let m = cfg.block_size as f64;
    let threshold = m * (s0 * npi + spi * n0) / (s0 + spi);
    let hi_mean = m * n0.max(npi);
    let hi_sd = (m * n0.max(npi) * (1.0 + n0.max(npi))).sqrt();
    let n_top = (hi_mean + 40.0 * hi_sd + 50.0) as u64;
    let (mut below0, mut above_pi) = (0.0, 0.0);
    for n in 0..=n_top {
        let decide_zero = n as f64 >= threshold;
        if !decide_zero {
            below0 += ln_negative_binomial(n, cfg.block_size, n0).exp();
        } else {
            above_pi += ln_negative_binomial(n, cfg.block_size, npi).exp();
        }
    }
    Ok(0.5 * (below0 + above_pi))
}

/// Argument x of P_E = erfc(x)/2 for the phase-conjugate receiver.
///
/// The signal is the full separation 4C_p between the mean differences
/// (±2C_p per mode) of the two hypotheses.
pub fn pcr_erfc_argument(m: u64, ch: &ChannelParams) -> Result<f64> {
    ch.validate()?;
    let cp = ch.c_p();
    let n_i = ch.n_s;
    let n_c = ch.kappa * ch.n_s + ch.n_b + 1.0;
    let var = |sign: f64| {
        let nx = 0.5 * (n_c + n_i) + sign * cp;
        let ny = 0.5 * (n_c + n_i) - sign * cp;
        (1.0 + nx) * nx + (1.0 + ny) * ny - 0.5 * (n_c - n_i).powi(2)
    };
    let sigma = var(1.0).sqrt() + var(-1.0).sqrt();
    let mu = 4.0 * cp;
    Ok((m as f64 * mu * mu / (2.0 * sigma * sigma)).sqrt())
}

pub fn pcr_error_prob(m: u64, ch: &ChannelParams) -> Result<DiscriminationResult> {
    if m == 0 {
        return domain("pcr_error_prob", "block size must be positive");
    }
    let x = pcr_erfc_argument(m, ch)?;
    DiscriminationResult::analytic(0.5 * erfc(x), m, Method::Pcr)
}

/// Coherent amplitude² and noise of the FF-SFG effective displaced thermal
/// states for residual correlation ε.
pub fn sfg_effective_state(m: u64, ch: &ChannelParams, epsilon: f64) -> (f64, f64) {
    let a2 = (1.0 - epsilon) * m as f64 * ch.kappa * ch.n_s * (ch.n_s + 1.0) / (ch.n_b + 1.0);
    let ne = ch.n_s * (1.0 / epsilon).ln() / 2.0;
    (a2, ne)
}

/// Helstrom limit of the FF-SFG receiver.
///
/// ε = 0 gives the pure-coherent closed form ½[1 − √(1 − exp(−4MκN_S/N_B))];
/// ε > 0 gives the exact Helstrom error between the displaced thermal states
/// (±α, n_e) of [`sfg_effective_state`].
pub fn sfg_helstrom_bound(m: u64, ch: &ChannelParams, epsilon: f64) -> Result<DiscriminationResult> {
    ch.validate()?;
    if m == 0 {
        return domain("sfg_helstrom_bound", "block size must be positive");
    }
    if !(0.0..1.0).contains(&epsilon) {
        return domain("sfg_helstrom_bound", format!("epsilon = {epsilon} outside [0, 1)"));
    }
    let p = if epsilon == 0.0 {
        if ch.n_b == 0.0 {
            return domain("sfg_helstrom_bound", "closed form needs N_B > 0");
        }
        let x = 4.0 * m as f64 * ch.kappa * ch.n_s / ch.n_b;
        0.5 * (1.0 - (-(-x).exp_m1()).sqrt())
    } else {
        let (a2, ne) = sfg_effective_state(m, ch, epsilon);
        helstrom_dts_pair(a2.sqrt(), ne)?
    };
    DiscriminationResult::analytic(p, m, Method::SfgBound)
}

/// Minimum error probability for equiprobable displaced thermal states
/// with amplitudes ±α (α real) and equal noise.
pub fn helstrom_dts_pair(alpha: f64, ne: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(0.5);
    }
    let d = DisplacedThermal::real(alpha, ne)?;
    let mean = d.mean_photons();
    let mut dim = (10.0 * (1.0 + mean)).ceil() as usize + 10;
    loop {
        let mut trace = 0.0;
        for n in 0..dim {
            trace += dts_fock_element(&d, n, n)?.re;
        }
        if 1.0 - trace < 1e-13 || dim > 20_000 {
            break;
        }
        dim *= 2;
    }
    // ½(ρ₊ − ρ₋) keeps only odd n − m, so it couples even to odd indices.
    let evens: Vec<usize> = (0..dim).step_by(2).collect();
    let odds: Vec<usize> = (1..dim).step_by(2).collect();
    let mut b = DMatrix::zeros(evens.len(), odds.len());
    for (i, &n) in evens.iter().enumerate() {
        for (j, &m) in odds.iter().enumerate() {
            b[(i, j)] = dts_fock_element(&d, n, m)?.re;
        }
    }
    let trace_norm = 2.0 * b.singular_values().iter().sum::<f64>();
    if !trace_norm.is_finite() {
        return numerical("helstrom_dts_pair", "non-finite trace norm");
    }
    Ok((0.5 * (1.0 - trace_norm)).clamp(0.0, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdOutcome {
    /// κ_I η_D at which the OPA rate equals the classical capacity.
    Crossing(f64),
    /// No efficiency in (0, 1] reaches the classical capacity.
    NeverAdvantageous,
}

/// Break-even product κ_I η_D for the OPA receiver at block size M.
pub fn imperfection_threshold(m: u64, ch: &ChannelParams) -> Result<ThresholdOutcome> {
    let cfg = OpaConfig::optimal(m, *ch);
    let x = opa_erfc_argument(&cfg)?;
    let c = classical_capacity(ch)?;
    let excess = |prod: f64| -> Result<f64> {
        Ok(rate_from_error(0.5 * erfc(x * prod.sqrt()), m)? - c)
    };
    if excess(1.0)? < 0.0 {
        return Ok(ThresholdOutcome::NeverAdvantageous);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(ThresholdOutcome::Crossing(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfgConfig {
    /// Tap fraction η of each cycle.
    pub eta: f64,
    /// Maximum number of feed-forward cycles.
    pub cycles: u32,
    /// Residual correlation fraction at which the receiver stops.
    pub epsilon: f64,
    pub samples: u64,
    pub seed: u64,
    /// Fraction of the cross-correlation energy retained per cycle.
    /// `None` uses ε^{1/cycles}, which ends exactly at ε after all cycles.
    pub retention: Option<f64>,
}

impl SfgConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return domain("SfgConfig", format!("eta = {} outside (0, 1)", self.eta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return domain("SfgConfig", format!("epsilon = {} outside (0, 1)", self.epsilon));
        }
        if self.cycles == 0 || self.samples == 0 {
            return domain("SfgConfig", "cycles and samples must be positive");
        }
        if let Some(r) = self.retention {
            if !(r > 0.0 && r < 1.0) {
                return domain("SfgConfig", format!("retention = {r} outside (0, 1)"));
            }
        }
        Ok(())
    }
}

/// BPSK hypothesis: `Zero` is θ = 0, `Pi` is θ = π.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    Zero,
    Pi,
}

impl Hypothesis {
    fn sign(self) -> f64 {
        match self {
            Hypothesis::Zero => 1.0,
            Hypothesis::Pi => -1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            Hypothesis::Zero => 0,
            Hypothesis::Pi => 1,
        }
    }
}

/// Count distribution of one port: cumulative table and log-pmf.
#[derive(Debug, Clone)]
struct PortTable {
    cdf: Vec<f64>,
    ln_pmf: Vec<f64>,
}

impl PortTable {
    fn from_ln_pmf(ln_pmf: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cdf = ln_pmf
            .iter()
            .map(|lp| {
                acc += lp.exp();
                acc
            })
            .collect();
        Self { cdf, ln_pmf }
    }

    fn sample(&self, u: f64) -> usize {
        let total = *self.cdf.last().unwrap();
        let target = u * total;
        self.cdf.partition_point(|&c| c < target).min(self.cdf.len() - 1)
    }
}

/// Likelihood tables of one cycle, indexed by [current guess][true hypothesis].
#[derive(Debug, Clone)]
struct CycleTables {
    sum_port: [[PortTable; 2]; 2],
    thermal_port: [[PortTable; 2]; 2],
}

/// Per-cycle energy bookkeeping of the FF-SFG effective model.
///
/// Each port receives half of the correlation energy A released in a
/// cycle, A = MκN_S(N_S+1)/(N_B+1). The nulling displacement follows the
/// Dolinar-type rule r_k = a_k/√(1 − exp(−4(2Σ_{j<k} e_j + e_k))).
fn sfg_cycle_tables(cfg: &SfgConfig, m: u64, ch: &ChannelParams) -> Result<Vec<CycleTables>> {
    let a_total = m as f64 * ch.kappa * ch.n_s * (ch.n_s + 1.0) / (ch.n_b + 1.0);
    let retention = cfg
        .retention
        .unwrap_or_else(|| cfg.epsilon.powf(1.0 / cfg.cycles as f64));
    let noise = cfg.eta * ch.n_s * ch.n_b;
    let mut tables = Vec::new();
    let mut residual: f64 = 1.0;
    let mut cum = 0.0;
    for _ in 0..cfg.cycles {
        if residual <= cfg.epsilon * (1.0 + 1e-12) {
            break;
        }
        let next = residual * retention;
        let e_k = 0.5 * a_total * (residual - next);
        residual = next;
        let a_k = e_k.sqrt();
        let denom = (-(-4.0 * (2.0 * cum + e_k)).exp_m1()).sqrt();
        let r_k = if denom > 0.0 { a_k / denom } else { 0.0 };
        cum += e_k;

        let mut amps = [[0.0; 2]; 2];
        for guess in [Hypothesis::Zero, Hypothesis::Pi] {
            for truth in [Hypothesis::Zero, Hypothesis::Pi] {
                amps[guess.index()][truth.index()] = truth.sign() * a_k - guess.sign() * r_k;
            }
        }
        let max_amp2 = amps.iter().flatten().map(|a| a * a).fold(0.0, f64::max);
        let n_top = (max_amp2 + noise + 12.0 * (max_amp2 + noise).sqrt() + 40.0).ceil() as usize;
        let build = |f: &dyn Fn(f64) -> Vec<f64>| -> [[PortTable; 2]; 2] {
            let t = |g: usize, h: usize| PortTable::from_ln_pmf(f(amps[g][h]));
            [[t(0, 0), t(0, 1)], [t(1, 0), t(1, 1)]]
        };
        let sum_port = build(&|amp: f64| DtsPmfStream::new(amp * amp, noise).take(n_top + 1).collect());
        let thermal_port = build(&|amp: f64| {
            let per_mode = amp * amp / m as f64;
            (0..=n_top as u64).map(|n| ln_negative_binomial(n, m, per_mode)).collect()
        });
        for t in sum_port.iter().chain(thermal_port.iter()).flatten() {
            if 1.0 - t.cdf.last().unwrap() > 1e-12 {
                return numerical("sfg_simulate", "count table truncated too early");
            }
        }
        tables.push(CycleTables {
            sum_port,
            thermal_port,
        });
    }
    Ok(tables)
}

/// Outcome of one simulated FF-SFG block.
fn sfg_trajectory(tables: &[CycleTables], truth: Hypothesis, rng: &mut ChaCha8Rng) -> Hypothesis {
    let mut log_odds = 0.0_f64;
    for t in tables {
        let guess = if log_odds >= 0.0 { Hypothesis::Zero } else { Hypothesis::Pi };
        let g = guess.index();
        let h = truth.index();
        let n_sum = t.sum_port[g][h].sample(rng.random::<f64>());
        let n_th = t.thermal_port[g][h].sample(rng.random::<f64>());
        let l0 = t.sum_port[g][0].ln_pmf[n_sum] + t.thermal_port[g][0].ln_pmf[n_th];
        let l1 = t.sum_port[g][1].ln_pmf[n_sum] + t.thermal_port[g][1].ln_pmf[n_th];
        if l0 != l1 {
            log_odds += l0 - l1;
        }
    }
    if log_odds >= 0.0 {
        Hypothesis::Zero
    } else {
        Hypothesis::Pi
    }
}

/// Monte Carlo of the FF-SFG receiver in its effective displaced-thermal
/// model. With `true_theta = None` each sample draws its hypothesis
/// uniformly. Sample i uses ChaCha8 stream i of `seed`, so results do not
/// depend on the number of worker threads.
pub fn sfg_simulate(
    cfg: &SfgConfig,
    m: u64,
    ch: &ChannelParams,
    true_theta: Option<Hypothesis>,
) -> Result<DiscriminationResult> {
    cfg.validate()?;
    ch.validate()?;
    if m == 0 {
        return domain("sfg_simulate", "block size must be positive");
    }
    let tables = sfg_cycle_tables(cfg, m, ch)?;
    let errors: u64 = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i);
            let truth = true_theta.unwrap_or_else(|| draw_hypothesis(&mut rng));
            u64::from(sfg_trajectory(&tables, truth, &mut rng) != truth)
        })
        .sum();
    mc_result(errors, cfg.samples, m, Method::SfgMc)
}

/// Total counts over M thermal modes of mean `n_bar`: Poisson of a
/// Gamma(M, n̄) intensity.
pub(crate) fn sample_counts(rng: &mut ChaCha8Rng, m: u64, n_bar: f64) -> Result<u64> {
    if n_bar <= 0.0 {
        return Ok(0);
    }
    let lam = gamma(rng, m as f64, n_bar)?;
    poisson(rng, lam)
}

fn gamma(rng: &mut ChaCha8Rng, shape: f64, scale: f64) -> Result<f64> {
    if shape <= 0.0 {
        return Ok(0.0);
    }
    Gamma::new(shape, scale)
        .map(|g| g.sample(rng))
        .map_err(|e| Error::Numerical { op: "gamma", msg: e.to_string() })
}

fn poisson(rng: &mut ChaCha8Rng, lam: f64) -> Result<u64> {
    if lam <= 0.0 {
        return Ok(0);
    }
    Poisson::new(lam)
        .map(|p| p.sample(rng) as u64)
        .map_err(|e| Error::Numerical { op: "poisson", msg: e.to_string() })
}

fn mc_result(errors: u64, samples: u64, m: u64, method: Method) -> Result<DiscriminationResult> {
    let s = samples as f64;
    let p = errors as f64 / s;
    Ok(DiscriminationResult {
        p_error: p,
        rate_per_mode: rate_from_error(p.min(0.5), m)?,
        method,
        mc_stderr: Some((p * (1.0 - p) / s).sqrt()),
    })
}

fn draw_hypothesis(rng: &mut ChaCha8Rng) -> Hypothesis {
    if rng.random::<bool>() {
        Hypothesis::Pi
    } else {
        Hypothesis::Zero
    }
}

/// Monte Carlo of the OPA receiver on exact negative-binomial counts with
/// the same threshold rule as [`opa_error_prob_exact`].
pub fn opa_simulate(cfg: &OpaConfig, samples: u64, seed: u64) -> Result<DiscriminationResult> {
    if samples == 0 {
        return domain("opa_simulate", "samples must be positive");
    }
    let n0 = opa_mean_photon(0.0, cfg, None)?;
    let npi = opa_mean_photon(std::f64::consts::PI, cfg, None)?;
    let (s0, spi) = ((n0 * (1.0 + n0)).sqrt(), (npi * (1.0 + npi)).sqrt());
    let threshold = cfg.block_size as f64 * (s0 * npi + spi * n0) / (s0 + spi);
    let errors = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let truth = draw_hypothesis(&mut rng);
            let mean = if truth == Hypothesis::Zero { n0 } else { npi };
            let n = sample_counts(&mut rng, cfg.block_size, mean)?;
            let guess = if n as f64 >= threshold { Hypothesis::Zero } else { Hypothesis::Pi };
            Ok(u64::from(guess != truth))
        })
        .sum::<Result<u64>>()?;
    mc_result(errors, samples, cfg.block_size, Method::OpaMc)
}

/// Monte Carlo of the phase-conjugate receiver.
///
/// Both interferometer ports are phase-insensitive Gaussian modes with
/// covariance Γ = [[n_x, (n_c − n_I)/2], [(n_c − n_I)/2, n_y]], so summed
/// over M modes their intensities are the diagonal of a complex Wishart
/// matrix CW(M, Γ), drawn by Bartlett decomposition, and the counts are
/// Poisson given the intensities. The decision thresholds N_x − N_y at the
/// variance-weighted midpoint.
pub fn pcr_simulate(m: u64, ch: &ChannelParams, samples: u64, seed: u64) -> Result<DiscriminationResult> {
    ch.validate()?;
    if m == 0 || samples == 0 {
        return domain("pcr_simulate", "block size and samples must be positive");
    }
    let cp = ch.c_p();
    let n_i = ch.n_s;
    let n_c = ch.kappa * ch.n_s + ch.n_b + 1.0;
    let off = 0.5 * (n_c - n_i);
    let ports = |sign: f64| -> Result<(f64, f64, f64)> {
        let nx = 0.5 * (n_c + n_i) + sign * cp;
        let ny = 0.5 * (n_c + n_i) - sign * cp;
        let l11 = nx.sqrt();
        let l21 = off / l11;
        let l22sq = ny - l21 * l21;
        if !(l22sq >= -1e-12 * ny) {
            return numerical("pcr_simulate", format!("port covariance not positive ({l22sq:.3e})"));
        }
        Ok((l11, l21, l22sq.max(0.0).sqrt()))
    };
    let chol = [ports(1.0)?, ports(-1.0)?];
    let var = |sign: f64| {
        let nx = 0.5 * (n_c + n_i) + sign * cp;
        let ny = 0.5 * (n_c + n_i) - sign * cp;
        (1.0 + nx) * nx + (1.0 + ny) * ny - 2.0 * off * off
    };
    let (sp, sm) = (var(1.0).sqrt(), var(-1.0).sqrt());
    let mu = 2.0 * cp * m as f64;
    let threshold = (sm * mu - sp * mu) / (sp + sm);
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("unit normal");
    let errors = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let truth = draw_hypothesis(&mut rng);
            let (nx, ny) = pcr_port_counts(&mut rng, chol[truth.index()], m, &normal)?;
            let d = nx as f64 - ny as f64;
            let guess = if d >= threshold { Hypothesis::Zero } else { Hypothesis::Pi };
            Ok(u64::from(guess != truth))
        })
        .sum::<Result<u64>>()?;
    mc_result(errors, samples, m, Method::PcrMc)
}

/// Port counts (N_x, N_y) summed over M modes, given the Cholesky factor
/// (l₁₁, l₂₁, l₂₂) of the per-mode port covariance.
fn pcr_port_counts(rng: &mut ChaCha8Rng, chol: (f64, f64, f64), m: u64, normal: &Normal<f64>) -> Result<(u64, u64)> {
    let (l11, l21, l22) = chol;
    let a11sq = gamma(rng, m as f64, 1.0)?;
    let a22sq = gamma(rng, m as f64 - 1.0, 1.0)?;
    let (re, im): (f64, f64) = (normal.sample(rng), normal.sample(rng));
    let wxx = l11 * l11 * a11sq;
    let wyy = l21 * l21 * a11sq + 2.0 * l21 * l22 * a11sq.sqrt() * re + l22 * l22 * (re * re + im * im + a22sq);
    Ok((poisson(rng, wxx)?, poisson(rng, wyy)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig6() -> ChannelParams {
        ChannelParams::new(1e-3, 1e4, 1e-3).unwrap()
    }

    #[test]
    fn rate_endpoints() {
        assert_eq!(rate_from_error(0.0, 10).unwrap(), 0.1);
        assert_eq!(rate_from_error(0.5, 10).unwrap(), 0.0);
        assert!(rate_from_error(1.5, 10).is_err());
        let p = 0.5 - 1e-3;
        let want = 2.0 * (p - 0.5_f64).powi(2) / LN_2;
        assert!((rate_from_error(p, 1).unwrap() - want).abs() < 1e-3 * want);
    }

    #[test]
    fn rate_series_branch_is_continuous() {
        for d in [9.9e-5_f64, 1.01e-4] {
            let p = 0.5 - d;
            let direct = 1.0 + p * p.log2() + (1.0 - p) * (1.0 - p).log2();
            let r = rate_from_error(p, 1).unwrap();
            assert!((r - direct).abs() < 1e-7 * direct, "d = {d}");
        }
    }

    #[test]
    fn unit_gain_gives_source_power() {
        let cfg = OpaConfig {
            gain: 1.0,
            block_size: 1,
            ch: fig6(),
        };
        assert!((opa_mean_photon(0.3, &cfg, None).unwrap() - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn gain_below_one_rejected() {
        let cfg = OpaConfig {
            gain: 0.5,
            block_size: 1,
            ch: fig6(),
        };
        assert!(opa_mean_photon(0.0, &cfg, None).is_err());
    }

    #[test]
    fn pcr_zero_power() {
        let ch = ChannelParams::new(1e-3, 1e4, 0.0).unwrap();
        let r = pcr_error_prob(1000, &ch).unwrap();
        assert_eq!(r.p_error, 0.5);
        assert_eq!(r.rate_per_mode, 0.0);
    }

    #[test]
    fn helstrom_pure_limit() {
        // n_e → 0 reduces to the coherent-state Helstrom formula.
        let a: f64 = 0.4;
        let want = 0.5 * (1.0 - (1.0 - (-4.0 * a * a).exp()).sqrt());
        let got = helstrom_dts_pair(a, 1e-14).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn sfg_rejects_bad_config() {
        let cfg = SfgConfig {
            eta: 4e-6,
            cycles: 0,
            epsilon: 0.025,
            samples: 10,
            seed: 1,
            retention: None,
        };
        assert!(sfg_simulate(&cfg, 1000, &fig6(), None).is_err());
    }
    #[test]
    fn opa_mc_matches_exact_summation() {
        let cfg = OpaConfig::optimal(100_000_000, fig6());
        let mc = opa_simulate(&cfg, 20_000, 5).unwrap();
        let exact = opa_error_prob_exact(&cfg).unwrap();
        let se = mc.mc_stderr.unwrap();
        assert!((mc.p_error - exact).abs() < 4.0 * se, "{} vs {exact} (se {se})", mc.p_error);
        assert_eq!(mc, opa_simulate(&cfg, 20_000, 5).unwrap());
    }

    #[test]
    fn pcr_port_count_moments() {
        // Thermal-like ports: E[N_x − N_y] = M(n_x − n_y) and
        // Var = M[n_x(1+n_x) + n_y(1+n_y) − 2|Γ_xy|²].
        let (nx, ny, off, m) = (1.7_f64, 0.9_f64, 0.6_f64, 7u64);
        let l11 = nx.sqrt();
        let l21 = off / l11;
        let chol = (l11, l21, (ny - l21 * l21).sqrt());
        let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let (mut s, mut s2, mut sx) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (a, b) = pcr_port_counts(&mut rng, chol, m, &normal).unwrap();
            let d = a as f64 - b as f64;
            s += d;
            s2 += d * d;
            sx += a as f64;
        }
        let nf = n as f64;
        let mean = s / nf;
        let var = s2 / nf - mean * mean;
        let mf = m as f64;
        let want_var = mf * (nx * (1.0 + nx) + ny * (1.0 + ny) - 2.0 * off * off);
        assert!((sx / nf - mf * nx).abs() < 0.05, "{}", sx / nf);
        assert!((mean - mf * (nx - ny)).abs() < 4.0 * (want_var / nf).sqrt(), "{mean}");
        assert!((var / want_var - 1.0).abs() < 0.02, "{var} vs {want_var}");
    }

    #[test]
    fn pcr_mc_tracks_gaussian_approximation() {
        let ch = fig6();
        for m in [100_000_000u64, 1_000_000_000] {
            let mc = pcr_simulate(m, &ch, 20_000, 2).unwrap();
            let approx = pcr_error_prob(m, &ch).unwrap().p_error;
            let se = mc.mc_stderr.unwrap();
            assert!((mc.p_error - approx).abs() < 4.0 * se, "M={m}: {} vs {approx}", mc.p_error);
        }
    }
}
