//! Experiment orchestration behind the `dmc` binary.
//!
//! Each experiment resolves the configured channel(s), runs, and writes CSV
//! (or binary trace) files into the output directory with the config hash
//! and seed in every header. Runs are idempotent for a fixed seed: bodies
//! are byte-identical across repeats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::detect::{
    dfe_detect, differential, evaluate_ber, threshold_detect, DetectorConfig, DetectorKind,
};
use crate::error::{Error, Result};
use crate::export::{
    write_ber_csv, write_calibration_csv, write_characterization_csv, write_cir_csv,
    write_heatmap_csv, write_rho_csv, write_taps_csv, write_trace_binary, write_trace_csv,
    BerRow, CalibrationRow, FileHeader, RhoRow,
};
use crate::microarray::{
    build_microarray_channel, calibrate_koff, channel_with_koff, characterize, cir_fine_strided,
    occupancy_trajectory, stationary_bound_mass, MicroarrayChannel,
};
use crate::sim::estimate::estimate_noise_stats;
use crate::sim::{projected_work, simulate_random_bits, simulate_trials, TrialBits};
use crate::symbol::noise::{pooled_rho_theory, time_averaged_rho, TxSequence};
use crate::symbol::SymbolChannel;

/// Executes every experiment listed in the config; returns the files
/// written. An empty experiment list is a no-op success.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for kind in &cfg.experiments {
        files.extend(run_one(cfg, *kind)?);
    }
    Ok(files)
}

/// Executes a single experiment kind.
pub fn run_one(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<Vec<PathBuf>> {
    match kind {
        ExperimentKind::Characterize => run_characterize(cfg),
        ExperimentKind::Cir => run_cir(cfg),
        ExperimentKind::Taps => run_taps(cfg),
        ExperimentKind::NoiseStats => run_noise_stats(cfg),
        ExperimentKind::Simulate => run_simulate(cfg),
        ExperimentKind::BerSweep => run_ber_sweep(cfg),
        ExperimentKind::CalibrateKoff => run_calibrate(cfg),
    }
}

fn base_header(cfg: &ExperimentConfig) -> FileHeader {
    FileHeader {
        seed: Some(cfg.seed),
        backend: Some(cfg.backend.name()),
        config_hash: cfg.hash(),
        t_b_eff: None,
        trial: None,
        timestamp: cfg.timestamps.then(|| {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            format!("unix:{secs}")
        }),
    }
}

fn create(cfg: &ExperimentConfig, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

/// Compact float for file names (shortest round-trip form).
fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// Channel variants for grid experiments: the base channel, or one per
/// calibrated settling-time target when targets are configured. Returns
/// `(t_eq label, channel)` pairs.
fn channel_variants(cfg: &ExperimentConfig) -> Result<Vec<(f64, MicroarrayChannel)>> {
    if cfg.teq_targets.is_empty() {
        let ch = build_microarray_channel(&cfg.channel)?;
        let teq = characterize(&ch)?.spectral.t_eq;
        return Ok(vec![(teq, ch)]);
    }
    cfg.teq_targets
        .iter()
        .map(|&target| {
            let k_off = calibrate_koff(&cfg.channel, target, cfg.calibrate_tol)?;
            Ok((target, channel_with_koff(&cfg.channel, k_off)?))
        })
        .collect()
}

fn run_characterize(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ch = build_microarray_channel(&cfg.channel)?;
    let c = characterize(&ch)?;
    let numeric = stationary_bound_mass(&ch)?;
    println!(
        "characterize: h_eq = {:.6} (numeric {:.9}), t_eq = {:.4} s, slem = {:.9}",
        c.h_eq, numeric, c.spectral.t_eq, c.spectral.slem
    );
    let (path, mut w) = create(cfg, "characterize.csv")?;
    write_characterization_csv(&mut w, &base_header(cfg), &c, numeric)?;
    w.flush()?;
    Ok(vec![path])
}

fn run_cir(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ch = build_microarray_channel(&cfg.channel)?;
    let c = characterize(&ch)?;
    let dt = cfg.channel.dt;
    let n_max = cfg
        .cir_n_max
        .unwrap_or_else(|| (1.2 * c.spectral.t_eq / dt).ceil() as usize);
    let stride = cfg.cir_stride.unwrap_or_else(|| (n_max / 2000).max(1));
    let cir = cir_fine_strided(&ch, n_max, stride)?;
    let points: Vec<(f64, f64)> = cir
        .fine
        .as_ref()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(m, &h)| (m as f64 * stride as f64 * dt, h))
        .collect();
    let (cir_path, mut w) = create(cfg, "cir.csv")?;
    write_cir_csv(&mut w, &base_header(cfg), &points)?;
    w.flush()?;

    let heat_stride = (n_max / 200).max(1);
    let rows = occupancy_trajectory(&ch, n_max, heat_stride)?;
    let (heat_path, mut w) = create(cfg, "heatmap.csv")?;
    write_heatmap_csv(&mut w, &base_header(cfg), &rows)?;
    w.flush()?;
    Ok(vec![cir_path, heat_path])
}

fn run_taps(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (teq, ch) in channel_variants(cfg)? {
        for &tb in &cfg.tb_list {
            let sym = SymbolChannel::build(&ch, tb, cfg.l_max, cfg.eps_tap)?;
            if !sym.taps().tail_converged {
                eprintln!(
                    "taps: warning: truncation cap {} reached before eps_tap at Tb = {tb} s",
                    cfg.l_max
                );
            }
            let name = format!("taps_tb{}_teq{}.csv", fmt_num(tb), fmt_num(teq));
            let (path, mut w) = create(cfg, &name)?;
            let header = FileHeader {
                t_b_eff: Some(sym.t_b_eff()),
                ..base_header(cfg)
            };
            write_taps_csv(&mut w, &header, &sym)?;
            w.flush()?;
            files.push(path);
        }
    }
    Ok(files)
}

fn run_noise_stats(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let q = *cfg.q_list.first().ok_or_else(|| {
        Error::Config("noise-stats needs at least one tx.Q entry".into())
    })?;
    let l_max = cfg.noise_l_max;
    let mut rows: Vec<RhoRow> = Vec::new();
    for (teq, ch) in channel_variants(cfg)? {
        for &tb in &cfg.tb_list {
            let sym = SymbolChannel::build(&ch, tb, cfg.l_max, cfg.eps_tap)?;
            let start = sym.l_trunc().max(l_max);
            let window = start..start + cfg.noise_window_len;
            let n_bits = window.end - 1;

            let theory = time_averaged_rho(&sym, window.clone(), l_max)?;
            let pooled = pooled_rho_theory(&sym, window.clone(), l_max)?;

            let per_trial = projected_work(
                &sym,
                &TxSequence::new(vec![1; n_bits], q)?,
                cfg.backend,
            );
            let projected = per_trial.saturating_mul(cfg.trials);
            if projected > cfg.budget {
                return Err(Error::Budget {
                    projected,
                    budget: cfg.budget,
                });
            }
            let traces = simulate_trials(
                &sym,
                TrialBits::Random { n_bits, q },
                cfg.backend,
                cfg.seed,
                cfg.trials,
                cfg.budget,
            )?;
            let stats = estimate_noise_stats(&traces, &sym, window, l_max)?;
            for l in 1..=l_max {
                rows.push(RhoRow {
                    t_b_eff: sym.t_b_eff(),
                    t_eq: teq,
                    ell: l,
                    rho_theory: theory[l - 1],
                    rho_pooled_theory: pooled[l - 1],
                    rho_mc: stats.rho_pooled[l - 1],
                    rho_mc_se: stats.rho_pooled_se[l - 1],
                });
            }
        }
    }
    let (path, mut w) = create(cfg, "rho.csv")?;
    write_rho_csv(&mut w, &base_header(cfg), &rows)?;
    w.flush()?;
    Ok(vec![path])
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ch = build_microarray_channel(&cfg.channel)?;
    let tb = *cfg.tb_list.first().ok_or_else(|| {
        Error::Config("simulate needs at least one symbol.Tb_s entry".into())
    })?;
    let sym = SymbolChannel::build(&ch, tb, cfg.l_max, cfg.eps_tap)?;
    let mut files = Vec::new();
    for &q in &cfg.q_list {
        let per_trial = projected_work(&sym, &TxSequence::new(vec![1; cfg.n_symbols], q)?, cfg.backend);
        let projected = per_trial.saturating_mul(cfg.trials);
        if projected > cfg.budget {
            return Err(Error::Budget {
                projected,
                budget: cfg.budget,
            });
        }
        let traces = simulate_trials(
            &sym,
            TrialBits::Random {
                n_bits: cfg.n_symbols,
                q,
            },
            cfg.backend,
            cfg.seed,
            cfg.trials,
            cfg.budget,
        )?;
        for trace in &traces {
            let name = format!(
                "trace_q{}_trial{}.{}",
                q,
                trace.trial,
                if cfg.dump_binary { "bin" } else { "csv" }
            );
            let (path, mut w) = create(cfg, &name)?;
            if cfg.dump_binary {
                write_trace_binary(&mut w, &base_header(cfg), trace)?;
            } else {
                write_trace_csv(&mut w, &base_header(cfg), trace)?;
            }
            w.flush()?;
            files.push(path);
        }
    }
    Ok(files)
}

/// Detector sweep rows for one simulated trace.
fn detect_all(
    cfg: &ExperimentConfig,
    sym: &SymbolChannel,
    trace: &crate::sim::SimTrace,
    q: u64,
) -> Result<Vec<BerRow>> {
    let dz = differential(&trace.z_f64())?;
    let skip = sym.l_trunc().min(trace.tx.len().saturating_sub(1));
    let truth = trace.tx.bits();
    let mut rows = Vec::new();
    for kind in &cfg.detectors {
        match kind {
            DetectorKind::Threshold => {
                let mut dc = DetectorConfig::auto(DetectorKind::Threshold, 0, q, sym.taps());
                if let Some(eta) = cfg.eta_override {
                    dc.eta = eta;
                }
                let decisions = threshold_detect(&dz, &dc);
                rows.push(BerRow {
                    detector: "threshold",
                    l: 0,
                    q,
                    t_b_eff: sym.t_b_eff(),
                    result: evaluate_ber(truth, &decisions, skip)?,
                });
            }
            DetectorKind::Dfe => {
                for &l in &cfg.dfe_l {
                    let mut dc = DetectorConfig::auto(DetectorKind::Dfe, l, q, sym.taps());
                    if let Some(eta) = cfg.eta_override {
                        dc.eta = eta;
                    }
                    let decisions = dfe_detect(&dz, sym.taps(), &dc);
                    rows.push(BerRow {
                        detector: "dfe",
                        l,
                        q,
                        t_b_eff: sym.t_b_eff(),
                        result: evaluate_ber(truth, &decisions, skip)?,
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn run_ber_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ch = build_microarray_channel(&cfg.channel)?;
    let mut rows: Vec<BerRow> = Vec::new();
    let mut point: u64 = 0;
    for &tb in &cfg.tb_list {
        let sym = SymbolChannel::build(&ch, tb, cfg.l_max, cfg.eps_tap)?;
        for &q in &cfg.q_list {
            let trace = simulate_random_bits(
                &sym,
                cfg.n_symbols,
                q,
                cfg.backend,
                cfg.seed,
                point,
                cfg.budget,
            )?;
            rows.extend(detect_all(cfg, &sym, &trace, q)?);
            point += 1;
        }
    }
    for row in &rows {
        println!(
            "ber-sweep: Tb_eff = {:.6} s, Q = {}, {}(L={}): BER = {:.5} +/- {:.5} over {} symbols",
            row.t_b_eff, row.q, row.detector, row.l, row.result.ber, row.result.ci95,
            row.result.n_symbols
        );
    }
    let (path, mut w) = create(cfg, "ber.csv")?;
    write_ber_csv(&mut w, &base_header(cfg), &rows)?;
    w.flush()?;
    Ok(vec![path])
}

fn run_calibrate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    if cfg.teq_targets.is_empty() {
        return Err(Error::Config(
            "calibrate-koff needs calibrate.teq_targets_s".into(),
        ));
    }
    let mut rows = Vec::new();
    for &target in &cfg.teq_targets {
        let k_off = calibrate_koff(&cfg.channel, target, cfg.calibrate_tol)?;
        let ch = channel_with_koff(&cfg.channel, k_off)?;
        let c = characterize(&ch)?;
        println!(
            "calibrate-koff: target t_eq = {target} s -> k_off = {:.6} 1/s (achieved {:.4} s, h_eq = {:.6})",
            k_off, c.spectral.t_eq, c.h_eq
        );
        rows.push(CalibrationRow {
            target_teq: target,
            k_off,
            k_on: ch.params().k_on,
            achieved_teq: c.spectral.t_eq,
            h_eq: c.h_eq,
        });
    }
    let (path, mut w) = create(cfg, "calibrate.csv")?;
    write_calibration_csv(&mut w, &base_header(cfg), &rows)?;
    w.flush()?;
    Ok(vec![path])
}

/// Reads a result file's body (everything after the header line) for
/// byte-identity comparisons.
pub fn read_body(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    let pos = bytes
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| p + 1)
        .unwrap_or(0);
    Ok(bytes[pos..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.out_dir = dir.to_path_buf();
        cfg.n_symbols = 40;
        cfg.trials = 3;
        cfg.q_list = vec![200];
        cfg.tb_list = vec![0.1];
        cfg.noise_window_len = 16;
        cfg.noise_l_max = 3;
        cfg
    }

    #[test]
    fn empty_experiment_list_is_noop() {
        let cfg = ExperimentConfig::default();
        assert!(run(&cfg).unwrap().is_empty());
    }

    #[test]
    fn characterize_reports_default_channel() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let files = run_one(&cfg, ExperimentKind::Characterize).unwrap();
        assert_eq!(files.len(), 1);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.contains("h_eq_closed"));
        let body: Vec<&str> = text.lines().collect();
        // closed-form gain 2/3 appears in the data row
        assert!(body[2].starts_with("0.6666666666666"), "{}", body[2]);
    }

    #[test]
    fn ber_sweep_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.n_symbols = 60;
        let first = run_one(&cfg, ExperimentKind::BerSweep).unwrap();
        let body1 = read_body(&first[0]).unwrap();
        let second = run_one(&cfg, ExperimentKind::BerSweep).unwrap();
        let body2 = read_body(&second[0]).unwrap();
        assert_eq!(body1, body2);
        assert!(!body1.is_empty());
    }

    #[test]
    fn simulate_dumps_one_file_per_trial() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.trials = 2;
        cfg.n_symbols = 10;
        let files = run_one(&cfg, ExperimentKind::Simulate).unwrap();
        assert_eq!(files.len(), 2);
    }

    #[test]
    fn calibrate_requires_targets() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        assert!(matches!(
            run_one(&cfg, ExperimentKind::CalibrateKoff),
            Err(Error::Config(_))
        ));
    }
}
