//! Noisy phase estimation: quantum Fisher information of the candidate
//! probes, the OPA Fisher information, and feed-forward Bayesian estimation
//! on a periodic grid.

use std::f64::consts::{LN_2, PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, numerical, Error, Result};
use crate::gaussian_core::ChannelParams;
use crate::receivers::{opa_mean_parts, sample_counts, OpaConfig};

/// Default number of posterior grid bins.
pub const DEFAULT_GRID: usize = 4096;

/// QFI upper bound over all probes with mean photon number N_S.
pub fn qfi_upper_bound(ch: &ChannelParams) -> Result<f64> {
    ch.validate()?;
    let (k, nb, ns) = (ch.kappa, ch.n_b, ch.n_s);
    if k >= 1.0 {
        return domain("qfi_upper_bound", "kappa must be < 1");
    }
    let num = 4.0 * k * ns * (k * ns + (1.0 - k) * nb + 1.0);
    let den = (1.0 - k) * (k * ns * (2.0 * nb + 1.0) - k * nb * (nb + 1.0) + (nb + 1.0).powi(2));
    Ok(num / den)
}

/// QFI of the TMSV probe: 4κN_S(N_S+1)/(1 + N_B(1+2N_S) + N_S(1−κ)).
pub fn qfi_tmsv(ch: &ChannelParams) -> Result<f64> {
    ch.validate()?;
    let (k, nb, ns) = (ch.kappa, ch.n_b, ch.n_s);
    Ok(4.0 * k * ns * (ns + 1.0) / (1.0 + nb * (1.0 + 2.0 * ns) + ns * (1.0 - k)))
}

/// QFI of the coherent probe |√N_S⟩: 4κN_S/(1+2N_B).
pub fn qfi_coherent(ch: &ChannelParams) -> Result<f64> {
    ch.validate()?;
    Ok(4.0 * ch.kappa * ch.n_s / (1.0 + 2.0 * ch.n_b))
}

/// Classical Fisher information of the M-mode OPA photon count about θ.
pub fn opa_fisher(theta: f64, gain: f64, m: u64, ch: &ChannelParams) -> Result<f64> {
    let cfg = OpaConfig { gain, block_size: m, ch: *ch };
    let (base, cross) = opa_mean_parts(&cfg)?;
    let n_bar = base + cross * theta.cos();
    if n_bar <= 0.0 {
        return Ok(0.0);
    }
    let s = theta.sin();
    Ok(4.0 * (gain - 1.0) * gain * m as f64 * ch.kappa * ch.n_s * (1.0 + ch.n_s) * s * s
        / (n_bar * (1.0 + n_bar)))
}

/// Density over [0, 2π) on equal bins, stored as logs.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub grid_size: usize,
    /// ln of the density at each bin centre; Σ e^v · Δθ = 1.
    ln_density: Vec<f64>,
}

impl Posterior {
    pub fn uniform(grid_size: usize) -> Result<Self> {
        if grid_size < 2 || !grid_size.is_power_of_two() {
            return domain("Posterior", format!("grid_size = {grid_size} must be a power of two >= 2"));
        }
        Ok(Self {
            grid_size,
            ln_density: vec![-TAU.ln(); grid_size],
        })
    }

    /// Builds a posterior from unnormalized log-densities.
    pub fn from_ln_weights(ln_w: Vec<f64>) -> Result<Self> {
        let mut p = Self::uniform(ln_w.len())?;
        p.ln_density = ln_w;
        p.normalize()?;
        Ok(p)
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.grid_size as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width()
    }

    pub fn log_space(&self) -> bool {
        true
    }

    pub fn ln_density(&self) -> &[f64] {
        &self.ln_density
    }

    pub fn density(&self) -> Vec<f64> {
        self.ln_density.iter().map(|v| v.exp()).collect()
    }

    /// Probability mass of each bin.
    pub fn masses(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.ln_density.iter().map(|v| v.exp() * w).collect()
    }

    fn normalize(&mut self) -> Result<()> {
        let top = self.ln_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return numerical("bayes_update", "posterior degenerated (no finite weight)");
        }
        let sum: f64 = self.ln_density.iter().map(|v| (v - top).exp()).sum();
        let shift = top + (sum * self.bin_width()).ln();
        for v in &mut self.ln_density {
            *v -= shift;
        }
        Ok(())
    }

    /// Centre of the highest bin; the first one wins ties.
    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for (i, v) in self.ln_density.iter().enumerate() {
            if *v > self.ln_density[best] {
                best = i;
            }
        }
        self.theta(best)
    }

    /// E[e^{ikθ}].
    pub fn circular_moment(&self, k: i32) -> Complex64 {
        let w = self.bin_width();
        self.ln_density
            .iter()
            .enumerate()
            .map(|(i, v)| Complex64::from_polar(v.exp() * w, k as f64 * self.theta(i)))
            .sum()
    }

    /// E[wrap(θ − μ)²] about the circular mean μ, in rad².
    pub fn circular_variance(&self) -> f64 {
        let mu = self.circular_moment(1).arg();
        let w = self.bin_width();
        self.ln_density
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let d = wrap_pi(self.theta(i) - mu);
                v.exp() * w * d * d
            })
            .sum()
    }
}

/// Maps an angle to (−π, π].
pub fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// ln P_OPA(n | θ+Δθ; M_k) up to a θ-independent constant, on the grid.
fn ln_likelihood(post: &Posterior, n: u64, m_k: u64, delta_theta: f64, gain: f64, ch: &ChannelParams) -> Result<Vec<f64>> {
    let cfg = OpaConfig { gain, block_size: m_k, ch: *ch };
    let (base, cross) = opa_mean_parts(&cfg)?;
    let (n, m) = (n as f64, m_k as f64);
    let (sd, cd) = delta_theta.sin_cos();
    let w = post.bin_width();
    Ok((0..post.grid_size)
        .map(|i| {
            let (s, c) = ((i as f64 + 0.5) * w).sin_cos();
            let dn = cross * (c * cd - s * sd);
            if base == 0.0 {
                return if n == 0.0 { 0.0 } else { f64::NEG_INFINITY };
            }
            n * (dn / base).ln_1p() - (n + m) * (dn / (1.0 + base)).ln_1p()
        })
        .collect())
}

/// Multiplies the posterior by the OPA likelihood of `n_observed` counts on
/// `m_k` modes measured after a phase shift `delta_theta`.
pub fn bayes_update(
    post: &Posterior,
    n_observed: u64,
    m_k: u64,
    delta_theta: f64,
    gain: f64,
    ch: &ChannelParams,
) -> Result<Posterior> {
    let ll = ln_likelihood(post, n_observed, m_k, delta_theta, gain, ch)?;
    let ln_w = post.ln_density.iter().zip(&ll).map(|(a, b)| a + b).collect();
    let mut out = Posterior {
        grid_size: post.grid_size,
        ln_density: ln_w,
    };
    out.normalize()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    MaxFisher,
    VanTrees,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MAX_FISHER" => Ok(Self::MaxFisher),
            "VAN_TREES" => Ok(Self::VanTrees),
            other => Err(Error::Validation(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Phase shift applied before the next measurement.
pub fn choose_phase_shift(post: &Posterior, strategy: Strategy) -> f64 {
    match strategy {
        Strategy::MaxFisher => (PI / 2.0 - post.argmax()).rem_euclid(TAU),
        Strategy::VanTrees => {
            // ∫p(θ)sin²(θ+Δ) = ½ − ½Re(e^{2iΔ}m₂) is largest when e^{2iΔ}m₂ is negative real.
            let m2 = post.circular_moment(2);
            if m2.norm() < 1e-12 {
                0.0
            } else {
                ((PI - m2.arg()) / 2.0).rem_euclid(TAU)
            }
        }
    }
}

/// Split of M modes into K measurement cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub slices: Vec<u64>,
    pub strategy: Strategy,
}

impl Schedule {
    pub fn new(slices: Vec<u64>, strategy: Strategy) -> Result<Self> {
        if slices.is_empty() || slices.contains(&0) {
            return Err(Error::Validation("schedule slices must be non-empty and positive".into()));
        }
        Ok(Self { slices, strategy })
    }

    /// K nearly equal slices, the remainder spread over the first ones.
    pub fn uniform(m: u64, k: usize, strategy: Strategy) -> Result<Self> {
        if k == 0 || (k as u64) > m {
            return Err(Error::Validation(format!("cannot split M = {m} into K = {k} slices")));
        }
        let q = m / k as u64;
        let r = (m % k as u64) as usize;
        Self::new((0..k).map(|i| q + u64::from(i < r)).collect(), strategy)
    }

    pub fn total_modes(&self) -> u64 {
        self.slices.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub estimate: f64,
    /// (fraction of modes consumed, circular posterior variance) after each cycle.
    pub posterior_variance_trace: Vec<(f64, f64)>,
    pub seed: u64,
    pub stream: u64,
    pub counts: Vec<u64>,
}

/// One feed-forward trajectory on a fixed random stream.
pub fn run_adaptive_trajectory(
    schedule: &Schedule,
    ch: &ChannelParams,
    gain: f64,
    true_theta: f64,
    seed: u64,
    stream: u64,
    grid_size: usize,
) -> Result<EstimationResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let total = schedule.total_modes() as f64;
    let mut post = Posterior::uniform(grid_size)?;
    let mut used = 0u64;
    let mut trace = Vec::with_capacity(schedule.slices.len());
    let mut counts = Vec::with_capacity(schedule.slices.len());
    for (k, &m_k) in schedule.slices.iter().enumerate() {
        let shift = if k == 0 {
            0.0
        } else {
            choose_phase_shift(&post, schedule.strategy)
        };
        let cfg = OpaConfig { gain, block_size: m_k, ch: *ch };
        let (base, cross) = opa_mean_parts(&cfg)?;
        let n = sample_counts(&mut rng, m_k, base + cross * (true_theta + shift).cos())?;
        post = bayes_update(&post, n, m_k, shift, gain, ch)?;
        used += m_k;
        counts.push(n);
        trace.push((used as f64 / total, post.circular_variance()));
    }
    Ok(EstimationResult {
        estimate: post.argmax(),
        posterior_variance_trace: trace,
        seed,
        stream,
        counts,
    })
}

/// Feed-forward estimation of a fixed phase on the default grid.
pub fn run_adaptive_estimation(
    schedule: &Schedule,
    ch: &ChannelParams,
    gain: f64,
    true_theta: f64,
    seed: u64,
) -> Result<EstimationResult> {
    run_adaptive_trajectory(schedule, ch, gain, true_theta, seed, 0, DEFAULT_GRID)
}

/// Trajectory-averaged variance trace.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCurve {
    pub progress: Vec<f64>,
    pub mean_variance: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trajectories: u64,
}

/// Averages the posterior-variance trace over trajectories whose true phase
/// is drawn uniformly; trajectory i uses stream i of `seed`.
pub fn average_variance_trace(
    schedule: &Schedule,
    ch: &ChannelParams,
    gain: f64,
    trajectories: u64,
    seed: u64,
    grid_size: usize,
) -> Result<VarianceCurve> {
    averaged(schedule, trajectories, |i| {
        run_adaptive_trajectory(schedule, ch, gain, uniform_phase(seed, i), seed, i, grid_size)
    })
}

/// Same as [`average_variance_trace`] with every trajectory estimating the
/// same true phase.
pub fn average_variance_trace_at(
    schedule: &Schedule,
    ch: &ChannelParams,
    gain: f64,
    true_theta: f64,
    trajectories: u64,
    seed: u64,
    grid_size: usize,
) -> Result<VarianceCurve> {
    averaged(schedule, trajectories, |i| {
        run_adaptive_trajectory(schedule, ch, gain, true_theta, seed, i, grid_size)
    })
}

fn averaged<F>(schedule: &Schedule, trajectories: u64, run: F) -> Result<VarianceCurve>
where
    F: Fn(u64) -> Result<EstimationResult> + Sync + Send,
{
    if trajectories == 0 {
        return Err(Error::Validation("trajectories must be positive".into()));
    }
    let runs: Vec<EstimationResult> = (0..trajectories).into_par_iter().map(run).collect::<Result<_>>()?;
    let k = schedule.slices.len();
    let mut sum = vec![0.0; k];
    let mut sum2 = vec![0.0; k];
    for r in &runs {
        for (j, &(_, v)) in r.posterior_variance_trace.iter().enumerate() {
            sum[j] += v;
            sum2[j] += v * v;
        }
    }
    let n = trajectories as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr = sum2
        .iter()
        .zip(&mean)
        .map(|(s2, m)| {
            if trajectories < 2 {
                0.0
            } else {
                ((s2 / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
            }
        })
        .collect();
    Ok(VarianceCurve {
        progress: runs[0].posterior_variance_trace.iter().map(|p| p.0).collect(),
        mean_variance: mean,
        stderr,
        trajectories,
    })
}

/// True phase of trajectory i, drawn from a stream disjoint from the
/// measurement noise.
fn uniform_phase(seed: u64, i: u64) -> f64 {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(i);
    rng.random::<f64>() * TAU
}

/// Empirical P(θ̃|θ) on `n_bins` equal bins. Trajectory i draws its true
/// phase uniformly inside row i mod n_bins, so every row gets the same
/// number of samples.
pub fn simulate_channel_matrix(
    schedule: &Schedule,
    ch: &ChannelParams,
    gain: f64,
    n_bins: usize,
    trajectories: u64,
    seed: u64,
    grid_size: usize,
) -> Result<Vec<Vec<f64>>> {
    if n_bins == 0 || trajectories < n_bins as u64 {
        return Err(Error::Validation(format!(
            "need at least one trajectory per bin ({trajectories} < {n_bins})"
        )));
    }
    let w = TAU / n_bins as f64;
    let hits: Vec<(usize, usize)> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let row = (i % n_bins as u64) as usize;
            let theta = (row as f64 + uniform_phase(seed, i) / TAU) * w;
            let r = run_adaptive_trajectory(schedule, ch, gain, theta, seed, i, grid_size)?;
            let col = ((r.estimate / w) as usize).min(n_bins - 1);
            Ok((row, col))
        })
        .collect::<Result<_>>()?;
    let mut p = vec![vec![0.0; n_bins]; n_bins];
    let mut rows = vec![0.0; n_bins];
    for (r, c) in hits {
        p[r][c] += 1.0;
        rows[r] += 1.0;
    }
    for (row, n) in p.iter_mut().zip(&rows) {
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(p)
}

/// Per-mode rate (log₂2π + ∫∫ dθ/2π dθ̃ P log₂P)/M from a binned channel
/// matrix whose rows hold bin probabilities over equal bins of [0, 2π).
pub fn continuous_rate(channel: &[Vec<f64>], m: u64) -> Result<f64> {
    let n = channel.len();
    if n == 0 || m == 0 {
        return Err(Error::Validation("channel matrix and M must be non-empty".into()));
    }
    let w = TAU / n as f64;
    let mut acc = 0.0;
    for (i, row) in channel.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Validation(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Validation(format!("row {i} is not a probability vector (sum {s})")));
        }
        acc += row
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * (p / w).ln())
            .sum::<f64>();
    }
    Ok((TAU.ln() + acc / n as f64) / (LN_2 * m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig9() -> ChannelParams {
        ChannelParams::new(1e-3, 1e4, 1e-3).unwrap()
    }

    #[test]
    fn qfi_closed_forms() {
        let ch = ChannelParams::new(1.0, 0.0, 0.4).unwrap();
        assert!((qfi_tmsv(&ch).unwrap() - 4.0 * 0.4 * 1.4).abs() < 1e-14);
        let ch = ChannelParams::new(0.3, 0.0, 0.4).unwrap();
        assert!((qfi_coherent(&ch).unwrap() - 4.0 * 0.3 * 0.4).abs() < 1e-15);
        let ch = ChannelParams::new(0.3, 2.0, 0.0).unwrap();
        assert_eq!(qfi_upper_bound(&ch).unwrap(), 0.0);
        assert!(qfi_upper_bound(&ChannelParams::new(1.0, 2.0, 1.0).unwrap()).is_err());
        let ch = fig9();
        let r = qfi_upper_bound(&ch).unwrap() / (4.0 * 1e-3 * 1e-3 / 1e4);
        assert!((r - 1.0).abs() < 2e-3, "{r}");
    }

    #[test]
    fn opa_fisher_vanishes_at_zero_phase() {
        assert_eq!(opa_fisher(0.0, 1.01, 10, &fig9()).unwrap(), 0.0);
    }

    #[test]
    fn flat_likelihood_keeps_flat_prior() {
        let ch = ChannelParams::new(0.5, 1.0, 0.0).unwrap();
        let p = Posterior::uniform(64).unwrap();
        let q = bayes_update(&p, 3, 10, 0.4, 1.2, &ch).unwrap();
        for v in q.density() {
            assert!((v - 1.0 / TAU).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_posterior_shifts_agree() {
        let n = 256;
        let mut ln_w = vec![-1e4; n];
        ln_w[40] = 0.0;
        let p = Posterior::from_ln_weights(ln_w).unwrap();
        let want = (PI / 2.0 - p.theta(40)).rem_euclid(TAU);
        assert!((choose_phase_shift(&p, Strategy::MaxFisher) - want).abs() < 1e-12);
        let vt = choose_phase_shift(&p, Strategy::VanTrees);
        assert!(wrap_pi(2.0 * (vt - want)).abs() < 1e-9);
    }

    #[test]
    fn uniform_posterior_van_trees_convention() {
        let p = Posterior::uniform(128).unwrap();
        assert_eq!(choose_phase_shift(&p, Strategy::VanTrees), 0.0);
        assert!((p.circular_variance() - PI * PI / 3.0).abs() < 1e-3);
    }

    #[test]
    fn schedule_validation() {
        let s = Schedule::uniform(10, 3, Strategy::VanTrees).unwrap();
        assert_eq!(s.slices, vec![4, 3, 3]);
        assert!(Schedule::uniform(2, 3, Strategy::VanTrees).is_err());
        assert!(Schedule::new(vec![1, 0], Strategy::MaxFisher).is_err());
    }

    #[test]
    fn continuous_rate_limits() {
        let n = 16;
        let flat = vec![vec![1.0 / n as f64; n]; n];
        assert!(continuous_rate(&flat, 1).unwrap().abs() < 1e-14);
        let delta: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        assert!((continuous_rate(&delta, 4).unwrap() - (n as f64).log2() / 4.0).abs() < 1e-14);
        let bad = vec![vec![0.5; n]; n];
        assert!(continuous_rate(&bad, 1).is_err());
    }

    #[test]
    fn trajectory_is_deterministic() {
        let s = Schedule::uniform(5_000_000_000_000, 4, Strategy::VanTrees).unwrap();
        let ch = fig9();
        let g = crate::receivers::optimal_gain(&ch);
        let a = run_adaptive_trajectory(&s, &ch, g, 1.0, 3, 5, 512).unwrap();
        let b = run_adaptive_trajectory(&s, &ch, g, 1.0, 3, 5, 512).unwrap();
        assert_eq!(a, b);
    }
}
