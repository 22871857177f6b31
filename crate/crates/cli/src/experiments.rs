//! Mapping from experiments to curves. A curve is a list of grid points and
//! an evaluator that turns one point into one or more CSV rows.

use std::f64::consts::TAU;

use ea_core::capacities::{classical_capacity, ea_capacity, homodyne_heterodyne_rates};
use ea_core::covert::covert_bits;
use ea_core::estimation::{
    average_variance_trace, average_variance_trace_at, continuous_rate, qfi_coherent, qfi_tmsv,
    simulate_channel_matrix, Schedule, Strategy,
};
use ea_core::phase_holevo::{holevo_bpsk, holevo_continuous_phase, holevo_dts_ensemble, holevo_sfg_estimate, DisplacedThermal};
use ea_core::receivers::{
    opa_error_prob, opa_simulate, optimal_gain, pcr_error_prob, pcr_simulate, sfg_helstrom_bound, sfg_simulate,
    DiscriminationResult, OpaConfig, SfgConfig,
};
use ea_core::{ChannelParams, Result};

use crate::config::{strategy_name, Experiment, ExperimentConfig, Quantity, TrueTheta};

/// One grid point. Fields an experiment does not sweep hold the first
/// value of their grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub kappa: f64,
    pub n_b: f64,
    pub n_s: f64,
    pub m: u64,
    pub delta: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub slices: usize,
    pub strategy: Strategy,
    pub quantity: Quantity,
}

impl Point {
    fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.kappa, self.n_b, self.n_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Kappa,
    NB,
    NS,
    M,
    Delta,
    Epsilon,
    Eta,
}

impl Axis {
    fn column(self) -> &'static str {
        match self {
            Axis::Kappa => "kappa",
            Axis::NB => "n_b",
            Axis::NS => "n_s",
            Axis::M => "m",
            Axis::Delta => "delta",
            Axis::Epsilon => "epsilon",
            Axis::Eta => "eta",
        }
    }

    fn len(self, c: &ExperimentConfig) -> usize {
        match self {
            Axis::Kappa => c.kappa.len(),
            Axis::NB => c.n_b.len(),
            Axis::NS => c.n_s.len(),
            Axis::M => c.m.len(),
            Axis::Delta => c.delta.len(),
            Axis::Epsilon => c.epsilon.len(),
            Axis::Eta => c.eta.len(),
        }
    }

    fn set(self, c: &ExperimentConfig, p: &mut Point, i: usize) {
        match self {
            Axis::Kappa => p.kappa = c.kappa[i],
            Axis::NB => p.n_b = c.n_b[i],
            Axis::NS => p.n_s = c.n_s[i],
            Axis::M => p.m = c.m[i],
            Axis::Delta => p.delta = c.delta[i],
            Axis::Epsilon => p.epsilon = c.epsilon[i],
            Axis::Eta => p.eta = c.eta[i],
        }
    }

    fn value(self, p: &Point) -> f64 {
        match self {
            Axis::Kappa => p.kappa,
            Axis::NB => p.n_b,
            Axis::NS => p.n_s,
            Axis::M => p.m as f64,
            Axis::Delta => p.delta,
            Axis::Epsilon => p.epsilon,
            Axis::Eta => p.eta,
        }
    }
}

pub type Rows = Vec<Vec<f64>>;
type Eval = fn(&ExperimentConfig, &Point, u64) -> Result<Vec<Vec<f64>>>;

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub x: &'static str,
    pub y: Vec<&'static str>,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Clone)]
pub struct Curve {
    pub name: String,
    /// Column names after the leading `point` column.
    pub columns: Vec<&'static str>,
    /// (value, standard error) column pairs of Monte Carlo estimates.
    pub mc: Vec<(&'static str, &'static str)>,
    pub plot: PlotSpec,
    pub points: Vec<Point>,
    eval: Eval,
}

impl Curve {
    pub fn is_monte_carlo(&self) -> bool {
        !self.mc.is_empty()
    }

    /// Rows of point `idx`, each prefixed with the point index.
    pub fn evaluate(&self, cfg: &ExperimentConfig, idx: usize, seed: u64) -> Result<Rows> {
        let rows = (self.eval)(cfg, &self.points[idx], point_seed(seed, &self.name, idx))?;
        Ok(rows
            .into_iter()
            .map(|r| {
                debug_assert_eq!(r.len(), self.columns.len(), "{}", self.name);
                std::iter::once(idx as f64).chain(r).collect()
            })
            .collect())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name).map(|i| i + 1)
    }
}

/// Independent seed per (curve, point), stable under reordering of curves.
fn point_seed(seed: u64, curve: &str, idx: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in curve.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(seed ^ splitmix(h ^ splitmix(idx as u64)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn base_point(c: &ExperimentConfig) -> Point {
    Point {
        kappa: c.kappa[0],
        n_b: c.n_b[0],
        n_s: c.n_s[0],
        m: c.m[0],
        delta: c.delta[0],
        epsilon: c.epsilon[0],
        eta: c.eta[0],
        slices: c.slices[0],
        strategy: c.strategy[0],
        quantity: c.quantities[0],
    }
}

/// Cartesian product over `axes`, last axis fastest.
fn grid(c: &ExperimentConfig, base: Point, axes: &[Axis]) -> Vec<Point> {
    let lens: Vec<usize> = axes.iter().map(|a| a.len(c)).collect();
    let total: usize = lens.iter().product();
    (0..total)
        .map(|mut k| {
            let mut p = base;
            for (a, &n) in axes.iter().zip(&lens).rev() {
                a.set(c, &mut p, k % n);
                k /= n;
            }
            p
        })
        .collect()
}

fn params(axes: &[Axis], p: &Point) -> Vec<f64> {
    axes.iter().map(|a| a.value(p)).collect()
}

fn columns(axes: &[Axis], extra: &[&'static str]) -> Vec<&'static str> {
    axes.iter().map(|a| a.column()).chain(extra.iter().copied()).collect()
}

const CH: [Axis; 3] = [Axis::Kappa, Axis::NB, Axis::NS];
const CH_M: [Axis; 4] = [Axis::Kappa, Axis::NB, Axis::NS, Axis::M];
const CH_M_EPS: [Axis; 5] = [Axis::Kappa, Axis::NB, Axis::NS, Axis::M, Axis::Epsilon];
const CH_M_EPS_ETA: [Axis; 6] = [Axis::Kappa, Axis::NB, Axis::NS, Axis::M, Axis::Epsilon, Axis::Eta];
const COVERT: [Axis; 4] = [Axis::Kappa, Axis::NB, Axis::Delta, Axis::NS];

fn with_ratio(axes: &[Axis], p: &Point, v: f64) -> Result<Rows> {
    let c = classical_capacity(&p.channel()?)?;
    let mut r = params(axes, p);
    r.extend([v, v / c]);
    Ok(vec![r])
}

fn eval_c_ea(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    with_ratio(&CH, p, ea_capacity(&p.channel()?)?)
}

fn eval_chi_continuous(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    with_ratio(&CH, p, holevo_continuous_phase(&p.channel()?)?)
}

fn eval_chi_bpsk(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    with_ratio(&CH, p, holevo_bpsk(&p.channel()?)?)
}

fn eval_chi_sfg(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    with_ratio(&CH_M_EPS, p, holevo_sfg_estimate(p.m, &p.channel()?, p.epsilon)?)
}

fn eval_covert(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    let b = covert_bits(p.delta, &p.channel()?)?;
    let mut r = params(&COVERT, p);
    r.extend([
        b.n_modes_max,
        b.n_modes_closed_form,
        b.bits_classical,
        b.bits_ea,
        b.bits_ea / b.bits_classical,
    ]);
    Ok(vec![r])
}

fn discrimination_row(axes: &[Axis], p: &Point, d: DiscriminationResult) -> Result<Rows> {
    let c = classical_capacity(&p.channel()?)?;
    let mut r = params(axes, p);
    r.extend([d.p_error, d.rate_per_mode, d.rate_per_mode / c]);
    if let Some(se) = d.mc_stderr {
        r.push(se);
    }
    Ok(vec![r])
}

fn eval_opa_bound(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    discrimination_row(&CH_M, p, opa_error_prob(&OpaConfig::optimal(p.m, p.channel()?), None)?)
}

fn eval_opa_mc(c: &ExperimentConfig, p: &Point, seed: u64) -> Result<Rows> {
    discrimination_row(&CH_M, p, opa_simulate(&OpaConfig::optimal(p.m, p.channel()?), c.mc_samples, seed)?)
}

fn eval_pcr_bound(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    discrimination_row(&CH_M, p, pcr_error_prob(p.m, &p.channel()?)?)
}

fn eval_pcr_mc(c: &ExperimentConfig, p: &Point, seed: u64) -> Result<Rows> {
    discrimination_row(&CH_M, p, pcr_simulate(p.m, &p.channel()?, c.mc_samples, seed)?)
}

fn eval_sfg_bound(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    discrimination_row(&CH_M_EPS, p, sfg_helstrom_bound(p.m, &p.channel()?, p.epsilon)?)
}

fn eval_sfg_mc(c: &ExperimentConfig, p: &Point, seed: u64) -> Result<Rows> {
    let cfg = SfgConfig {
        eta: p.eta,
        cycles: c.cycles,
        epsilon: p.epsilon,
        samples: c.mc_samples,
        seed,
        retention: None,
    };
    discrimination_row(&CH_M_EPS_ETA, p, sfg_simulate(&cfg, p.m, &p.channel()?, None)?)
}

/// M·R from the simulated channel matrix, with a delta-method standard
/// error of the plug-in row entropies.
fn eval_mr_opa(c: &ExperimentConfig, p: &Point, seed: u64) -> Result<Rows> {
    let ch = p.channel()?;
    let schedule = Schedule::uniform(p.m, p.slices, p.strategy)?;
    let matrix = simulate_channel_matrix(&schedule, &ch, optimal_gain(&ch), c.n_bins, c.mc_samples, seed, c.grid_size)?;
    let rate = continuous_rate(&matrix, p.m)?;
    let per_row = c.mc_samples as f64 / c.n_bins as f64;
    let var: f64 = matrix
        .iter()
        .map(|row| {
            let (mut s1, mut s2) = (0.0, 0.0);
            for &q in row.iter().filter(|q| **q > 0.0) {
                let l = q.log2();
                s1 += q * l;
                s2 += q * l * l;
            }
            (s2 - s1 * s1) / per_row
        })
        .sum::<f64>()
        / (c.n_bins as f64).powi(2);
    let mut r = params(&CH_M, p);
    r.extend([p.slices as f64, rate * p.m as f64, rate, var.sqrt()]);
    Ok(vec![r])
}

fn eval_chi_m(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    let d = DisplacedThermal::real((p.kappa * p.n_s).sqrt(), p.n_b)?;
    let bits = holevo_dts_ensemble(p.m, &d)?;
    let mut r = params(&CH_M, p);
    r.extend([bits, bits / p.m as f64]);
    Ok(vec![r])
}

fn eval_variance(c: &ExperimentConfig, p: &Point, seed: u64) -> Result<Rows> {
    let ch = p.channel()?;
    let schedule = Schedule::uniform(p.m, p.slices, p.strategy)?;
    let gain = optimal_gain(&ch);
    let curve = match c.true_theta {
        TrueTheta::Fixed(t) => {
            average_variance_trace_at(&schedule, &ch, gain, t.rem_euclid(TAU), c.mc_samples, seed, c.grid_size)?
        }
        TrueTheta::Uniform => average_variance_trace(&schedule, &ch, gain, c.mc_samples, seed, c.grid_size)?,
    };
    let j = qfi_tmsv(&ch)?;
    Ok(curve
        .progress
        .iter()
        .zip(curve.mean_variance.iter().zip(&curve.stderr))
        .map(|(&prog, (&v, &se))| {
            let mut r = params(&CH_M, p);
            r.extend([prog, v, se, 1.0 / (prog * p.m as f64 * j)]);
            r
        })
        .collect())
}

fn quantity_axes(q: Quantity) -> &'static [Axis] {
    match q {
        Quantity::ChiSfg | Quantity::SfgRate => &CH_M_EPS,
        Quantity::OpaRate | Quantity::PcrRate => &CH_M,
        Quantity::NDelta => &COVERT,
        _ => &CH,
    }
}

fn eval_quantity(_: &ExperimentConfig, p: &Point, _: u64) -> Result<Rows> {
    let ch = p.channel()?;
    let v = match p.quantity {
        Quantity::CClassical => classical_capacity(&ch)?,
        Quantity::CEa => ea_capacity(&ch)?,
        Quantity::CHom => homodyne_heterodyne_rates(&ch)?.0,
        Quantity::CHet => homodyne_heterodyne_rates(&ch)?.1,
        Quantity::ChiContinuous => holevo_continuous_phase(&ch)?,
        Quantity::ChiBpsk => holevo_bpsk(&ch)?,
        Quantity::ChiSfg => holevo_sfg_estimate(p.m, &ch, p.epsilon)?,
        Quantity::OpaRate => opa_error_prob(&OpaConfig::optimal(p.m, ch), None)?.rate_per_mode,
        Quantity::PcrRate => pcr_error_prob(p.m, &ch)?.rate_per_mode,
        Quantity::SfgRate => sfg_helstrom_bound(p.m, &ch, p.epsilon)?.rate_per_mode,
        Quantity::QfiTmsv => qfi_tmsv(&ch)?,
        Quantity::QfiCoherent => qfi_coherent(&ch)?,
        Quantity::NDelta => covert_bits(p.delta, &ch)?.n_modes_max,
    };
    let mut r = params(quantity_axes(p.quantity), p);
    r.push(v);
    Ok(vec![r])
}

fn curve(
    cfg: &ExperimentConfig,
    name: impl Into<String>,
    axes: &[Axis],
    extra: &[&'static str],
    mc: &[(&'static str, &'static str)],
    plot: PlotSpec,
    eval: Eval,
) -> Curve {
    Curve {
        name: name.into(),
        columns: columns(axes, extra),
        mc: mc.to_vec(),
        plot,
        points: grid(cfg, base_point(cfg), axes),
        eval,
    }
}

fn plot(x: &'static str, y: &[&'static str], log_x: bool, log_y: bool) -> PlotSpec {
    PlotSpec {
        x,
        y: y.to_vec(),
        log_x,
        log_y,
    }
}

const RATE: [&str; 3] = ["p_error", "rate_per_mode", "rate_over_c"];
const RATE_SE: [&str; 4] = ["p_error", "rate_per_mode", "rate_over_c", "stderr"];
const MC_P: [(&str, &str); 1] = [("p_error", "stderr")];

/// All curves of a configuration, in output order.
pub fn curves(cfg: &ExperimentConfig) -> Vec<Curve> {
    let ratio = || plot("n_s", &["value_over_c"], true, false);
    let by_m = |y: &'static str, log_y: bool| plot("m", &[y], true, log_y);
    match cfg.experiment {
        Experiment::Fig3Capacity => vec![
            curve(cfg, "c_ea", &CH, &["value", "value_over_c"], &[], ratio(), eval_c_ea),
            curve(cfg, "chi_continuous", &CH, &["value", "value_over_c"], &[], ratio(), eval_chi_continuous),
            curve(cfg, "chi_bpsk", &CH, &["value", "value_over_c"], &[], ratio(), eval_chi_bpsk),
            curve(cfg, "chi_sfg", &CH_M_EPS, &["value", "value_over_c"], &[], ratio(), eval_chi_sfg),
        ],
        Experiment::Fig4Covert => vec![curve(
            cfg,
            "covert",
            &COVERT,
            &["n_delta", "n_delta_closed_form", "bits_classical", "bits_ea", "ea_over_classical"],
            &[],
            plot("n_delta", &["bits_classical", "bits_ea"], true, true),
            eval_covert,
        )],
        Experiment::Fig6Receivers => vec![
            curve(cfg, "opa_bound", &CH_M, &RATE, &[], by_m("rate_over_c", false), eval_opa_bound),
            curve(cfg, "opa_mc", &CH_M, &RATE_SE, &MC_P, by_m("rate_over_c", false), eval_opa_mc),
            curve(cfg, "pcr_bound", &CH_M, &RATE, &[], by_m("rate_over_c", false), eval_pcr_bound),
            curve(cfg, "pcr_mc", &CH_M, &RATE_SE, &MC_P, by_m("rate_over_c", false), eval_pcr_mc),
            curve(cfg, "sfg_bound", &CH_M_EPS, &RATE, &[], by_m("rate_over_c", false), eval_sfg_bound),
            curve(cfg, "sfg_mc", &CH_M_EPS_ETA, &RATE_SE, &MC_P, by_m("rate_over_c", false), eval_sfg_mc),
        ],
        Experiment::Fig7ErrorProb => vec![
            curve(cfg, "opa_bound", &CH_M, &RATE, &[], by_m("p_error", true), eval_opa_bound),
            curve(cfg, "pcr_bound", &CH_M, &RATE, &[], by_m("p_error", true), eval_pcr_bound),
            curve(cfg, "sfg_bound", &CH_M_EPS, &RATE, &[], by_m("p_error", true), eval_sfg_bound),
            curve(cfg, "sfg_mc", &CH_M_EPS_ETA, &RATE_SE, &MC_P, by_m("p_error", true), eval_sfg_mc),
        ],
        Experiment::Fig8Continuous => {
            let mut out = Vec::new();
            for &k in &cfg.slices {
                for &s in &cfg.strategy {
                    let mut c = curve(
                        cfg,
                        format!("mr_opa_{}_k{k}", strategy_name(s).to_ascii_lowercase()),
                        &CH_M,
                        &["slices", "bits_per_block", "rate_per_mode", "stderr"],
                        &[("bits_per_block", "stderr")],
                        by_m("bits_per_block", false),
                        eval_mr_opa,
                    );
                    c.points.iter_mut().for_each(|p| {
                        p.slices = k;
                        p.strategy = s;
                    });
                    out.push(c);
                }
            }
            out.push(curve(cfg, "chi_m", &CH_M, &["bits_per_block", "rate_per_mode"], &[], by_m("bits_per_block", false), eval_chi_m));
            out
        }
        Experiment::Fig9Adaptive => {
            let mut out = Vec::new();
            for &s in &cfg.strategy {
                for &k in &cfg.slices {
                    let mut c = curve(
                        cfg,
                        format!("variance_{}_k{k}", strategy_name(s).to_ascii_lowercase()),
                        &CH_M,
                        &["progress", "mean_variance", "stderr", "crlb"],
                        &[("mean_variance", "stderr")],
                        plot("progress", &["mean_variance", "crlb"], false, true),
                        eval_variance,
                    );
                    c.points.iter_mut().for_each(|p| {
                        p.slices = k;
                        p.strategy = s;
                    });
                    out.push(c);
                }
            }
            out
        }
        Experiment::Custom => cfg
            .quantities
            .iter()
            .map(|&q| {
                let axes = quantity_axes(q);
                let mut c = curve(cfg, q.name(), axes, &["value"], &[], plot(axes[axes.len() - 1].column(), &["value"], true, true), eval_quantity);
                c.points.iter_mut().for_each(|p| p.quantity = q);
                c
            })
            .collect(),
    }
}
