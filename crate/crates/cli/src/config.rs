//! Flat `key = value` experiment configuration.
//!
//! Values are numbers, bare words, `[a, b, ...]` lists, or the list
//! generators `logspace(lo, hi, n)` (decades) and `linspace(lo, hi, n)`.
//! `#` starts a comment. Keys left out take the experiment's defaults.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use ea_core::estimation::{Strategy, DEFAULT_GRID};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig3Capacity,
    Fig4Covert,
    Fig6Receivers,
    Fig7ErrorProb,
    Fig8Continuous,
    Fig9Adaptive,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Fig3Capacity,
        Experiment::Fig4Covert,
        Experiment::Fig6Receivers,
        Experiment::Fig7ErrorProb,
        Experiment::Fig8Continuous,
        Experiment::Fig9Adaptive,
        Experiment::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig3Capacity => "FIG3_CAPACITY",
            Experiment::Fig4Covert => "FIG4_COVERT",
            Experiment::Fig6Receivers => "FIG6_RECEIVERS",
            Experiment::Fig7ErrorProb => "FIG7_ERRORPROB",
            Experiment::Fig8Continuous => "FIG8_CONTINUOUS",
            Experiment::Fig9Adaptive => "FIG9_ADAPTIVE",
            Experiment::Custom => "CUSTOM",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Fig3Capacity => "C_E, continuous-phase and BPSK Holevo information, SFG estimate per M vs N_S",
            Experiment::Fig4Covert => "covert mode budget and total covert bits with and without entanglement",
            Experiment::Fig6Receivers => "OPA, PCR and FF-SFG rates (bound and Monte Carlo) vs block size M",
            Experiment::Fig7ErrorProb => "BPSK error probabilities of OPA, PCR and FF-SFG vs block size M",
            Experiment::Fig8Continuous => "adaptive-OPA continuous-phase information vs the coherent-state benchmark",
            Experiment::Fig9Adaptive => "posterior variance vs progress for feed-forward phase estimation",
            Experiment::Custom => "user-selected quantities over the Cartesian parameter grid",
        }
    }

    /// Lower-case stem used for output file names.
    pub fn stem(self) -> String {
        self.name().to_ascii_lowercase()
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar quantities available to CUSTOM runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    CClassical,
    CEa,
    CHom,
    CHet,
    ChiContinuous,
    ChiBpsk,
    ChiSfg,
    OpaRate,
    PcrRate,
    SfgRate,
    QfiTmsv,
    QfiCoherent,
    NDelta,
}

impl Quantity {
    pub const ALL: [Quantity; 13] = [
        Quantity::CClassical,
        Quantity::CEa,
        Quantity::CHom,
        Quantity::CHet,
        Quantity::ChiContinuous,
        Quantity::ChiBpsk,
        Quantity::ChiSfg,
        Quantity::OpaRate,
        Quantity::PcrRate,
        Quantity::SfgRate,
        Quantity::QfiTmsv,
        Quantity::QfiCoherent,
        Quantity::NDelta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::CClassical => "c_classical",
            Quantity::CEa => "c_ea",
            Quantity::CHom => "c_hom",
            Quantity::CHet => "c_het",
            Quantity::ChiContinuous => "chi_continuous",
            Quantity::ChiBpsk => "chi_bpsk",
            Quantity::ChiSfg => "chi_sfg",
            Quantity::OpaRate => "opa_rate",
            Quantity::PcrRate => "pcr_rate",
            Quantity::SfgRate => "sfg_rate",
            Quantity::QfiTmsv => "qfi_tmsv",
            Quantity::QfiCoherent => "qfi_coherent",
            Quantity::NDelta => "n_delta",
        }
    }
}

impl FromStr for Quantity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| format!("unknown quantity `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrueTheta {
    Fixed(f64),
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub kappa: Vec<f64>,
    pub n_b: Vec<f64>,
    pub n_s: Vec<f64>,
    pub m: Vec<u64>,
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub eta: Vec<f64>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub mc_samples: u64,
    /// Feed-forward cycles of the SFG receiver.
    pub cycles: u32,
    /// Adaptive-estimation slice counts K.
    pub slices: Vec<usize>,
    pub strategy: Vec<Strategy>,
    pub true_theta: TrueTheta,
    pub grid_size: usize,
    pub n_bins: usize,
    pub quantities: Vec<Quantity>,
}

const KEYS: [&str; 18] = [
    "experiment",
    "kappa",
    "n_b",
    "n_s",
    "m",
    "delta",
    "epsilon",
    "eta",
    "seed",
    "output_dir",
    "mc_samples",
    "cycles",
    "slices",
    "strategy",
    "true_theta",
    "grid_size",
    "n_bins",
    "quantities",
];

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn decades(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|e| 10u64.pow(e)).collect()
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            kappa: vec![1e-3],
            n_b: vec![1e4],
            n_s: vec![1e-3],
            m: decades(6, 10),
            delta: vec![0.01],
            epsilon: vec![0.025],
            eta: vec![4e-6],
            seed: 1,
            output_dir: None,
            mc_samples: 100_000,
            cycles: 50,
            slices: vec![10],
            strategy: vec![Strategy::VanTrees],
            true_theta: TrueTheta::Fixed(0.0),
            grid_size: DEFAULT_GRID,
            n_bins: 64,
            quantities: vec![Quantity::CClassical, Quantity::CEa],
        };
        match experiment {
            Experiment::Fig3Capacity => {
                c.kappa = vec![0.1];
                c.n_b = vec![10.0];
                c.n_s = logspace(-3.0, 0.0, 13);
                c.m = decades(0, 5);
                c.epsilon = vec![0.05];
            }
            Experiment::Fig4Covert => {
                c.kappa = vec![0.1];
                c.n_b = vec![10.0];
                c.n_s = logspace(-4.0, -1.0, 16);
            }
            Experiment::Fig6Receivers | Experiment::Fig7ErrorProb => {}
            Experiment::Fig8Continuous => {
                c.m = decades(7, 11);
                c.mc_samples = 2000;
                c.slices = vec![50];
            }
            Experiment::Fig9Adaptive => {
                c.m = vec![5_000_000_000_000];
                c.mc_samples = 2000;
                c.slices = vec![3, 10];
                c.strategy = vec![Strategy::MaxFisher, Strategy::VanTrees];
            }
            Experiment::Custom => {
                c.kappa = vec![0.1];
                c.n_b = vec![10.0];
                c.n_s = logspace(-3.0, 0.0, 7);
            }
        }
        c
    }

    /// Parses and validates a configuration file's text.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw = parse_raw(text)?;
        let experiment: Experiment = match raw.get("experiment") {
            Some((Value::Scalar(s), _)) => s.parse().map_err(|e| invalid("experiment", e))?,
            Some(_) => return Err(invalid("experiment", "expected a single name")),
            None => return Err(invalid("experiment", "missing")),
        };
        let mut c = Self::defaults(experiment);
        for (key, (value, line)) in &raw {
            let at = |e: String| invalid(key, format!("line {line}: {e}"));
            match key.as_str() {
                "experiment" => {}
                "kappa" => c.kappa = value.floats().map_err(at)?,
                "n_b" => c.n_b = value.floats().map_err(at)?,
                "n_s" => c.n_s = value.floats().map_err(at)?,
                "m" => c.m = value.parse_each(parse_count).map_err(at)?,
                "delta" => c.delta = value.floats().map_err(at)?,
                "epsilon" => c.epsilon = value.floats().map_err(at)?,
                "eta" => c.eta = value.floats().map_err(at)?,
                "seed" => c.seed = value.scalar().and_then(|s| s.parse().map_err(|e| format!("{e}"))).map_err(at)?,
                "output_dir" => c.output_dir = Some(PathBuf::from(value.scalar().map_err(at)?)),
                "mc_samples" => c.mc_samples = value.scalar().and_then(|s| parse_count(&s)).map_err(at)?,
                "cycles" => c.cycles = value.scalar().and_then(|s| parse_small(&s)).map_err(at)?,
                "slices" => c.slices = value.parse_each(parse_small).map_err(at)?,
                "strategy" => c.strategy = value.parse_each(|s| s.parse::<Strategy>().map_err(|e| e.to_string())).map_err(at)?,
                "true_theta" => {
                    let s = value.scalar().map_err(at)?;
                    c.true_theta = if s == "uniform" {
                        TrueTheta::Uniform
                    } else {
                        TrueTheta::Fixed(parse_float(&s).map_err(at)?)
                    }
                }
                "grid_size" => c.grid_size = value.scalar().and_then(|s| parse_small(&s)).map_err(at)?,
                "n_bins" => c.n_bins = value.scalar().and_then(|s| parse_small(&s)).map_err(at)?,
                "quantities" => c.quantities = value.parse_each(|s| s.parse::<Quantity>()).map_err(at)?,
                other => return Err(invalid(other, format!("line {line}: unknown key"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let e = self.experiment;
        let non_empty = |name: &str, len: usize| {
            if len == 0 {
                Err(invalid(name, "grid is empty"))
            } else {
                Ok(())
            }
        };
        let each = |name: &str, v: &[f64], ok: &dyn Fn(f64) -> bool, range: &str| -> Result<(), CliError> {
            non_empty(name, v.len())?;
            match v.iter().find(|x| !x.is_finite() || !ok(**x)) {
                Some(x) => Err(invalid(name, format!("value {x} outside {range}"))),
                None => Ok(()),
            }
        };
        let kappa_hi = if e == Experiment::Fig4Covert { "[0, 1)" } else { "[0, 1]" };
        each("kappa", &self.kappa, &|x| (0.0..=1.0).contains(&x) && (e != Experiment::Fig4Covert || x < 1.0), kappa_hi)?;
        each("n_b", &self.n_b, &|x| x >= 0.0, "[0, inf)")?;
        each("n_s", &self.n_s, &|x| x > 0.0, "(0, inf)")?;
        each("delta", &self.delta, &|x| x > 0.0 && x < 0.5, "(0, 0.5)")?;
        each("epsilon", &self.epsilon, &|x| x > 0.0 && x < 1.0, "(0, 1)")?;
        each("eta", &self.eta, &|x| x > 0.0 && x < 1.0, "(0, 1)")?;
        non_empty("m", self.m.len())?;
        if self.m.contains(&0) {
            return Err(invalid("m", "block sizes must be positive"));
        }
        non_empty("slices", self.slices.len())?;
        if self.slices.contains(&0) {
            return Err(invalid("slices", "slice counts must be positive"));
        }
        if let Some(&k) = self.slices.iter().max() {
            if matches!(e, Experiment::Fig8Continuous | Experiment::Fig9Adaptive)
                && self.m.iter().any(|&m| m < k as u64)
            {
                return Err(invalid("slices", format!("K = {k} exceeds a block size in `m`")));
            }
        }
        non_empty("strategy", self.strategy.len())?;
        non_empty("quantities", self.quantities.len())?;
        if self.mc_samples == 0 {
            return Err(invalid("mc_samples", "must be positive"));
        }
        if self.cycles == 0 {
            return Err(invalid("cycles", "must be positive"));
        }
        if self.grid_size < 2 || !self.grid_size.is_power_of_two() {
            return Err(invalid("grid_size", "must be a power of two >= 2"));
        }
        if self.n_bins == 0 {
            return Err(invalid("n_bins", "must be positive"));
        }
        if e == Experiment::Fig8Continuous && (self.mc_samples as usize) < self.n_bins {
            return Err(invalid("mc_samples", format!("need at least n_bins = {} trajectories", self.n_bins)));
        }
        if let TrueTheta::Fixed(t) = self.true_theta {
            if !t.is_finite() {
                return Err(invalid("true_theta", "must be finite or `uniform`"));
            }
        }
        if e == Experiment::Fig9Adaptive && self.kappa.contains(&1.0) {
            return Err(invalid("kappa", "adaptive estimation needs kappa < 1"));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same configuration.
    /// `output_dir` is left out because it does not affect any value.
    pub fn to_text(&self) -> String {
        let floats = |v: &[f64]| list(v.iter().map(|x| format!("{x:?}")));
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("experiment", self.experiment.name().into());
        put("kappa", floats(&self.kappa));
        put("n_b", floats(&self.n_b));
        put("n_s", floats(&self.n_s));
        put("m", list(self.m.iter().map(u64::to_string)));
        put("delta", floats(&self.delta));
        put("epsilon", floats(&self.epsilon));
        put("eta", floats(&self.eta));
        put("seed", self.seed.to_string());
        put("mc_samples", self.mc_samples.to_string());
        put("cycles", self.cycles.to_string());
        put("slices", list(self.slices.iter().map(usize::to_string)));
        put("strategy", list(self.strategy.iter().map(|s| strategy_name(*s).to_string())));
        put(
            "true_theta",
            match self.true_theta {
                TrueTheta::Fixed(t) => format!("{t:?}"),
                TrueTheta::Uniform => "uniform".into(),
            },
        );
        put("grid_size", self.grid_size.to_string());
        put("n_bins", self.n_bins.to_string());
        put("quantities", list(self.quantities.iter().map(|q| q.name().to_string())));
        s
    }
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::MaxFisher => "MAX_FISHER",
        Strategy::VanTrees => "VAN_TREES",
    }
}

fn list(items: impl Iterator<Item = String>) -> String {
    format!("[{}]", items.collect::<Vec<_>>().join(", "))
}

fn invalid(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(String),
    List(Vec<String>),
}

impl Value {
    fn items(&self) -> Vec<&str> {
        match self {
            Value::Scalar(s) => vec![s.as_str()],
            Value::List(v) => v.iter().map(String::as_str).collect(),
        }
    }

    fn parse_each<T>(&self, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
        self.items().into_iter().map(f).collect()
    }

    fn floats(&self) -> Result<Vec<f64>, String> {
        self.parse_each(parse_float)
    }

    fn scalar(&self) -> Result<String, String> {
        match self {
            Value::Scalar(s) => Ok(s.clone()),
            Value::List(_) => Err("expected a single value, found a list".into()),
        }
    }
}

fn parse_float(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

/// Non-negative integer, also accepted in exponent form such as `1e9`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x = parse_float(s)?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) {
        Ok(x as u64)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

fn parse_small<T: TryFrom<u64>>(s: &str) -> Result<T, String> {
    T::try_from(parse_count(s)?).map_err(|_| format!("`{s}` is too large"))
}

fn parse_raw(text: &str) -> Result<BTreeMap<String, (Value, usize)>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, rest)) = line.split_once('=') else {
            return Err(CliError::Parse {
                line: line_no,
                msg: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(invalid(&key, format!("line {line_no}: unknown key")));
        }
        let value = parse_value(rest.trim()).map_err(|msg| CliError::Parse { line: line_no, msg })?;
        if out.insert(key.clone(), (value, line_no)).is_some() {
            return Err(invalid(&key, format!("line {line_no}: duplicate key")));
        }
    }
    Ok(out)
}

fn parse_value(s: &str) -> Result<Value, String> {
    if s.is_empty() {
        return Err("missing value".into());
    }
    if let Some(inner) = s.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or("unterminated list")?.trim();
        if inner.is_empty() {
            return Ok(Value::List(Vec::new()));
        }
        let items: Vec<String> = inner.split(',').map(|t| unquote(t.trim()).to_string()).collect();
        if items.iter().any(String::is_empty) {
            return Err("empty list element".into());
        }
        return Ok(Value::List(items));
    }
    for (name, f) in [("logspace", logspace as fn(f64, f64, usize) -> Vec<f64>), ("linspace", linspace)] {
        if let Some(args) = s.strip_prefix(name) {
            let args = args
                .trim()
                .strip_prefix('(')
                .and_then(|a| a.strip_suffix(')'))
                .ok_or_else(|| format!("{name} expects (lo, hi, n)"))?;
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("{name} expects (lo, hi, n)"));
            }
            let n = parse_count(parts[2])? as usize;
            let v = f(parse_float(parts[0])?, parse_float(parts[1])?, n);
            return Ok(Value::List(v.iter().map(|x| format!("{x:?}")).collect()));
        }
    }
    Ok(Value::Scalar(unquote(s).to_string()))
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|t| t.strip_suffix('"')).unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_generators() {
        let c = ExperimentConfig::parse(
            "experiment = FIG3_CAPACITY  # comment\nkappa = [0.1, 0.2]\nn_s = logspace(-3, 0, 4)\nm = [1, 1e3]\nseed = 18446744073709551615\n",
        )
        .unwrap();
        assert_eq!(c.kappa, vec![0.1, 0.2]);
        assert_eq!(c.n_s.len(), 4);
        assert!((c.n_s[0] - 1e-3).abs() < 1e-18 && (c.n_s[3] - 1.0).abs() < 1e-15);
        assert_eq!(c.m, vec![1, 1000]);
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.n_b, vec![10.0]);
    }

    #[test]
    fn text_form_round_trips() {
        for e in Experiment::ALL {
            let mut c = ExperimentConfig::defaults(e);
            c.true_theta = TrueTheta::Fixed(0.3);
            assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c, "{e}");
        }
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("experiment = FIG4_COVERT\nn_s = []\n", "n_s"),
            ("experiment = FIG4_COVERT\nkappa = [1.0]\n", "kappa"),
            ("experiment = FIG6_RECEIVERS\nm = [0]\n", "m"),
            ("experiment = FIG6_RECEIVERS\nepsilon = 1.5\n", "epsilon"),
            ("experiment = FIG6_RECEIVERS\nbogus = 1\n", "bogus"),
            ("experiment = FIG9_ADAPTIVE\nstrategy = [FASTEST]\n", "strategy"),
            ("kappa = 0.1\n", "experiment"),
            ("experiment = FIG3_CAPACITY\nkappa = 0.1\nkappa = 0.2\n", "kappa"),
        ];
        for (text, field) in cases {
            match ExperimentConfig::parse(text) {
                Err(CliError::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        match ExperimentConfig::parse("experiment = FIG3_CAPACITY\nkappa 0.1\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::parse("experiment = FIG3_CAPACITY\nkappa = [0.1\n"),
            Err(CliError::Parse { line: 2, .. })
        ));
    }
}
