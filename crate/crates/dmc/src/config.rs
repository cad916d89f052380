//! Experiment configuration: flat key-value text with dotted sections.
//!
//! A config file is a sequence of `key = value` lines; blank lines and lines
//! starting with `#` are ignored. List values are comma-separated. Unknown
//! keys are hard errors, as are duplicates. Example:
//!
//! ```text
//! channel.D_um2_per_s = 150
//! channel.n_free     = 100
//! symbol.Tb_s        = 0.1, 0.3
//! tx.Q               = 500, 1000
//! run.seed           = 42
//! run.backend        = aggregate
//! out.dir            = results
//! ```
//!
//! The full key list is in [`KEYS`]. Table I-style benchtop defaults apply
//! to anything left unset.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::detect::DetectorKind;
use crate::error::{Error, Result};
use crate::markov::params::ChannelParams;
use crate::sim::Backend;

/// Experiments the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Characterize,
    Cir,
    Taps,
    NoiseStats,
    Simulate,
    BerSweep,
    CalibrateKoff,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Characterize => "characterize",
            ExperimentKind::Cir => "cir",
            ExperimentKind::Taps => "taps",
            ExperimentKind::NoiseStats => "noise-stats",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::BerSweep => "ber-sweep",
            ExperimentKind::CalibrateKoff => "calibrate-koff",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "characterize" => Ok(ExperimentKind::Characterize),
            "cir" => Ok(ExperimentKind::Cir),
            "taps" => Ok(ExperimentKind::Taps),
            "noise-stats" => Ok(ExperimentKind::NoiseStats),
            "simulate" => Ok(ExperimentKind::Simulate),
            "ber-sweep" => Ok(ExperimentKind::BerSweep),
            "calibrate-koff" => Ok(ExperimentKind::CalibrateKoff),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Recognized configuration keys.
pub const KEYS: &[&str] = &[
    "channel.D_um2_per_s",
    "channel.dx_um",
    "channel.dt_s",
    "channel.n_free",
    "channel.k_on_per_M_s",
    "channel.k_off_per_s",
    "channel.c_p_M",
    "symbol.Tb_s",
    "symbol.eps_tap",
    "symbol.L_max",
    "calibrate.teq_targets_s",
    "calibrate.tol_rel",
    "tx.Q",
    "tx.B",
    "run.trials",
    "run.seed",
    "run.backend",
    "run.budget",
    "run.experiments",
    "detector.kinds",
    "detector.dfe.L",
    "detector.eta",
    "noise.l_max",
    "noise.window_len",
    "cir.n_max",
    "cir.stride",
    "sim.dump",
    "out.dir",
    "out.timestamps",
];

/// Fully-resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub channel: ChannelParams,
    /// Nominal symbol intervals to sweep (s).
    pub tb_list: Vec<f64>,
    pub eps_tap: f64,
    pub l_max: usize,
    /// Settling-time targets for fixed-`K_D` calibration (s); empty means
    /// the base channel only.
    pub teq_targets: Vec<f64>,
    pub calibrate_tol: f64,
    /// Molecule budgets to sweep.
    pub q_list: Vec<u64>,
    /// Symbols per run.
    pub n_symbols: usize,
    pub trials: u64,
    pub seed: u64,
    pub backend: Backend,
    /// Work budget (draw-equivalents) per experiment.
    pub budget: u64,
    pub experiments: Vec<ExperimentKind>,
    pub detectors: Vec<DetectorKind>,
    /// DFE feedback lengths to sweep.
    pub dfe_l: Vec<usize>,
    /// Fixed threshold override; `None` derives the midpoint threshold.
    pub eta_override: Option<f64>,
    pub noise_l_max: usize,
    pub noise_window_len: usize,
    pub cir_n_max: Option<usize>,
    pub cir_stride: Option<usize>,
    pub dump_binary: bool,
    pub out_dir: PathBuf,
    pub timestamps: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            channel: ChannelParams::default_microarray(),
            tb_list: vec![0.1],
            eps_tap: 1e-6,
            l_max: 4096,
            teq_targets: Vec::new(),
            calibrate_tol: 0.01,
            q_list: vec![1000],
            n_symbols: 100_000,
            trials: 200,
            seed: 1,
            backend: Backend::Aggregate,
            budget: crate::sim::DEFAULT_SIM_BUDGET,
            experiments: Vec::new(),
            detectors: vec![DetectorKind::Threshold, DetectorKind::Dfe],
            dfe_l: vec![1, 3, 5],
            eta_override: None,
            noise_l_max: 10,
            noise_window_len: 200,
            cir_n_max: None,
            cir_stride: None,
            dump_binary: false,
            out_dir: PathBuf::from("out"),
            timestamps: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file's text; line numbers are reported in errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            seen.push(key.to_string());
            cfg.apply(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Loads and parses a config file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "channel.D_um2_per_s" => self.channel.d = parse_f64(key, value)?,
            "channel.dx_um" => self.channel.dx = parse_f64(key, value)?,
            "channel.dt_s" => self.channel.dt = parse_f64(key, value)?,
            "channel.n_free" => self.channel.n_free = parse_usize(key, value)?,
            "channel.k_on_per_M_s" => self.channel.k_on = parse_f64(key, value)?,
            "channel.k_off_per_s" => self.channel.k_off = parse_f64(key, value)?,
            "channel.c_p_M" => self.channel.c_p = parse_f64(key, value)?,
            "symbol.Tb_s" => self.tb_list = parse_list(key, value, parse_f64)?,
            "symbol.eps_tap" => self.eps_tap = parse_f64(key, value)?,
            "symbol.L_max" => self.l_max = parse_usize(key, value)?,
            "calibrate.teq_targets_s" => self.teq_targets = parse_list(key, value, parse_f64)?,
            "calibrate.tol_rel" => self.calibrate_tol = parse_f64(key, value)?,
            "tx.Q" => self.q_list = parse_list(key, value, parse_u64)?,
            "tx.B" => self.n_symbols = parse_usize(key, value)?,
            "run.trials" => self.trials = parse_u64(key, value)?,
            "run.seed" => self.seed = parse_u64(key, value)?,
            "run.backend" => self.backend = value.parse()?,
            "run.budget" => self.budget = parse_u64(key, value)?,
            "run.experiments" => {
                self.experiments = if value.is_empty() {
                    Vec::new()
                } else {
                    parse_list(key, value, |_, v| v.parse::<ExperimentKind>())?
                }
            }
            "detector.kinds" => {
                self.detectors = parse_list(key, value, |_, v| match v {
                    "threshold" => Ok(DetectorKind::Threshold),
                    "dfe" => Ok(DetectorKind::Dfe),
                    other => Err(Error::Config(format!("unknown detector `{other}`"))),
                })?
            }
            "detector.dfe.L" => self.dfe_l = parse_list(key, value, parse_usize)?,
            "detector.eta" => self.eta_override = Some(parse_f64(key, value)?),
            "noise.l_max" => self.noise_l_max = parse_usize(key, value)?,
            "noise.window_len" => self.noise_window_len = parse_usize(key, value)?,
            "cir.n_max" => self.cir_n_max = Some(parse_usize(key, value)?),
            "cir.stride" => self.cir_stride = Some(parse_usize(key, value)?),
            "sim.dump" => {
                self.dump_binary = match value {
                    "csv" => false,
                    "binary" => true,
                    other => {
                        return Err(Error::Config(format!(
                            "sim.dump must be `csv` or `binary`, got `{other}`"
                        )))
                    }
                }
            }
            "out.dir" => self.out_dir = PathBuf::from(value),
            "out.timestamps" => {
                self.timestamps = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "out.timestamps must be true/false, got `{other}`"
                        )))
                    }
                }
            }
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    /// Canonical serialization of the effective configuration; the config
    /// hash is the SHA-256 of this string.
    pub fn canonical_string(&self) -> String {
        let list_f = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let ch = &self.channel;
        s.push_str(&format!("channel.D_um2_per_s={}\n", ch.d));
        s.push_str(&format!("channel.dx_um={}\n", ch.dx));
        s.push_str(&format!("channel.dt_s={}\n", ch.dt));
        s.push_str(&format!("channel.n_free={}\n", ch.n_free));
        s.push_str(&format!("channel.k_on_per_M_s={}\n", ch.k_on));
        s.push_str(&format!("channel.k_off_per_s={}\n", ch.k_off));
        s.push_str(&format!("channel.c_p_M={}\n", ch.c_p));
        s.push_str(&format!("symbol.Tb_s={}\n", list_f(&self.tb_list)));
        s.push_str(&format!("symbol.eps_tap={}\n", self.eps_tap));
        s.push_str(&format!("symbol.L_max={}\n", self.l_max));
        s.push_str(&format!(
            "calibrate.teq_targets_s={}\n",
            list_f(&self.teq_targets)
        ));
        s.push_str(&format!("calibrate.tol_rel={}\n", self.calibrate_tol));
        s.push_str(&format!(
            "tx.Q={}\n",
            self.q_list
                .iter()
                .map(|q| q.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str(&format!("tx.B={}\n", self.n_symbols));
        s.push_str(&format!("run.trials={}\n", self.trials));
        s.push_str(&format!("run.seed={}\n", self.seed));
        s.push_str(&format!("run.backend={}\n", self.backend.name()));
        s.push_str(&format!("run.budget={}\n", self.budget));
        s.push_str(&format!(
            "run.experiments={}\n",
            self.experiments
                .iter()
                .map(|e| e.name())
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str(&format!(
            "detector.kinds={}\n",
            self.detectors
                .iter()
                .map(|d| d.name())
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str(&format!(
            "detector.dfe.L={}\n",
            self.dfe_l
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str(&format!(
            "detector.eta={}\n",
            self.eta_override.map(|e| e.to_string()).unwrap_or_default()
        ));
        s.push_str(&format!("noise.l_max={}\n", self.noise_l_max));
        s.push_str(&format!("noise.window_len={}\n", self.noise_window_len));
        s.push_str(&format!(
            "cir.n_max={}\n",
            self.cir_n_max.map(|n| n.to_string()).unwrap_or_default()
        ));
        s.push_str(&format!(
            "cir.stride={}\n",
            self.cir_stride.map(|n| n.to_string()).unwrap_or_default()
        ));
        s.push_str(&format!(
            "sim.dump={}\n",
            if self.dump_binary { "binary" } else { "csv" }
        ));
        s.push_str(&format!("out.dir={}\n", self.out_dir.display()));
        s.push_str(&format!("out.timestamps={}\n", self.timestamps));
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key `{key}`: `{value}` is not a number")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Config(format!("key `{key}`: `{value}` is not a nonnegative integer")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("key `{key}`: `{value}` is not a nonnegative integer")))
}

fn parse_list<T>(
    key: &str,
    value: &str,
    item: impl Fn(&str, &str) -> Result<T>,
) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| item(key, v.trim()))
        .collect::<Result<Vec<T>>>()
        .and_then(|xs| {
            if xs.is_empty() {
                Err(Error::Config(format!("key `{key}`: empty list")))
            } else {
                Ok(xs)
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults_and_overrides() {
        let cfg = ExperimentConfig::parse(
            "# comment\n\
             channel.D_um2_per_s = 150\n\
             symbol.Tb_s = 0.1, 0.3\n\
             tx.Q = 500, 5000\n\
             run.seed = 7\n\
             run.backend = per_molecule\n",
        )
        .unwrap();
        assert_eq!(cfg.tb_list, vec![0.1, 0.3]);
        assert_eq!(cfg.q_list, vec![500, 5000]);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.backend, Backend::PerMolecule);
        assert_eq!(cfg.channel.n_free, 100);
    }

    #[test]
    fn unknown_key_is_hard_error_with_line() {
        let err = ExperimentConfig::parse("run.seed = 1\nchannel.bogus = 2\n").unwrap_err();
        match err {
            Error::Config(msg) => {
                assert!(msg.contains("line 2"), "{msg}");
                assert!(msg.contains("channel.bogus"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_rejected() {
        assert!(ExperimentConfig::parse("run.seed = 1\nrun.seed = 2\n").is_err());
    }

    #[test]
    fn malformed_line_is_rejected() {
        assert!(ExperimentConfig::parse("run.seed 1\n").is_err());
    }

    #[test]
    fn hash_tracks_effective_config() {
        let a = ExperimentConfig::parse("run.seed = 1\n").unwrap();
        let b = ExperimentConfig::parse("run.seed = 2\n").unwrap();
        let a2 = ExperimentConfig::parse("run.seed = 1\n").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a2.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn experiment_names_round_trip() {
        for kind in [
            ExperimentKind::Characterize,
            ExperimentKind::Cir,
            ExperimentKind::Taps,
            ExperimentKind::NoiseStats,
            ExperimentKind::Simulate,
            ExperimentKind::BerSweep,
            ExperimentKind::CalibrateKoff,
        ] {
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
    }
}
