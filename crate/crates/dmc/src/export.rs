//! On-disk result formats.
//!
//! Every CSV starts with one `#`-prefixed JSON-style header line carrying
//! the seed, backend, and config hash, followed by a column-name line and
//! the rows. Floats are written in Rust's shortest round-trip form, so
//! bodies are byte-identical across runs with the same inputs. Timestamps
//! appear in headers only when explicitly enabled.
//!
//! Large simulation runs can use the binary columnar trace dump instead:
//! magic `DMCT1`, a newline, the same JSON header line, a newline, then the
//! count and the counts themselves as little-endian 64-bit integers.

use std::io::{Read, Write};

use crate::detect::BerResult;
use crate::error::{Error, Result};
use crate::sim::SimTrace;
use crate::symbol::{SymbolChannel, SymbolTaps};

/// Magic bytes of the binary trace dump.
pub const TRACE_MAGIC: &[u8; 5] = b"DMCT1";

/// Provenance header written as the first line of every output file.
#[derive(Debug, Clone, Default)]
pub struct FileHeader {
    pub seed: Option<u64>,
    pub trial: Option<u64>,
    pub backend: Option<&'static str>,
    pub config_hash: String,
    pub t_b_eff: Option<f64>,
    /// RFC3339-ish timestamp; only set when the run enables timestamps.
    pub timestamp: Option<String>,
}

impl FileHeader {
    pub fn with_hash(config_hash: impl Into<String>) -> Self {
        FileHeader {
            config_hash: config_hash.into(),
            ..Default::default()
        }
    }

    fn to_json_line(&self) -> String {
        let mut fields = vec![format!("\"config_hash\":\"{}\"", self.config_hash)];
        if let Some(seed) = self.seed {
            fields.push(format!("\"seed\":{seed}"));
        }
        if let Some(trial) = self.trial {
            fields.push(format!("\"trial\":{trial}"));
        }
        if let Some(backend) = self.backend {
            fields.push(format!("\"backend\":\"{backend}\""));
        }
        if let Some(tb) = self.t_b_eff {
            fields.push(format!("\"Tb_eff_s\":{tb}"));
        }
        if let Some(ts) = &self.timestamp {
            fields.push(format!("\"generated_at\":\"{ts}\""));
        }
        format!("# {{{}}}", fields.join(","))
    }
}

fn write_header<W: Write>(w: &mut W, header: &FileHeader, columns: &str) -> Result<()> {
    writeln!(w, "{}", header.to_json_line())?;
    writeln!(w, "{columns}")?;
    Ok(())
}

/// `t_seconds,h` rows of a sampled impulse response.
pub fn write_cir_csv<W: Write>(
    w: &mut W,
    header: &FileHeader,
    points: &[(f64, f64)],
) -> Result<()> {
    write_header(w, header, "t_seconds,h")?;
    for (t, h) in points {
        writeln!(w, "{t},{h}")?;
    }
    Ok(())
}

/// `t_seconds,state_index,probability` occupancy rows (1-based states).
pub fn write_heatmap_csv<W: Write>(
    w: &mut W,
    header: &FileHeader,
    rows: &[(f64, usize, f64)],
) -> Result<()> {
    write_header(w, header, "t_seconds,state_index,probability")?;
    for (t, state, prob) in rows {
        writeln!(w, "{t},{state},{prob}")?;
    }
    Ok(())
}

/// `ell,h_ell,delta_h_ell,pi_ell` rows for `ell = 0..=l_trunc`.
pub fn write_taps_csv<W: Write>(
    w: &mut W,
    header: &FileHeader,
    sym: &SymbolChannel,
) -> Result<()> {
    write_header(w, header, "ell,h_ell,delta_h_ell,pi_ell")?;
    let taps: &SymbolTaps = sym.taps();
    for l in 0..=taps.l_trunc {
        writeln!(
            w,
            "{l},{},{},{}",
            taps.tap(l),
            taps.delta_tap(l),
            sym.pi(l)
        )?;
    }
    Ok(())
}

/// One correlation row per `(T_b_eff, t_eq, ell)`.
#[derive(Debug, Clone)]
pub struct RhoRow {
    pub t_b_eff: f64,
    pub t_eq: f64,
    pub ell: usize,
    pub rho_theory: f64,
    pub rho_pooled_theory: f64,
    pub rho_mc: f64,
    pub rho_mc_se: f64,
}

/// Long-format `rho.csv` behind the correlation figures.
pub fn write_rho_csv<W: Write>(w: &mut W, header: &FileHeader, rows: &[RhoRow]) -> Result<()> {
    write_header(
        w,
        header,
        "Tb_eff_s,t_eq_s,ell,rho_theory,rho_pooled_theory,rho_mc,rho_mc_se",
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t_b_eff, r.t_eq, r.ell, r.rho_theory, r.rho_pooled_theory, r.rho_mc, r.rho_mc_se
        )?;
    }
    Ok(())
}

/// `k,z_k` trace rows.
pub fn write_trace_csv<W: Write>(w: &mut W, header: &FileHeader, trace: &SimTrace) -> Result<()> {
    let header = FileHeader {
        seed: Some(trace.master_seed),
        trial: Some(trace.trial),
        backend: Some(trace.backend.name()),
        t_b_eff: Some(trace.t_b_eff),
        ..header.clone()
    };
    write_header(w, &header, "k,z_k")?;
    for (k, z) in trace.z.iter().enumerate() {
        writeln!(w, "{k},{z}")?;
    }
    Ok(())
}

/// Binary columnar trace dump (`DMCT1`, little-endian u64 counts).
pub fn write_trace_binary<W: Write>(
    w: &mut W,
    header: &FileHeader,
    trace: &SimTrace,
) -> Result<()> {
    let header = FileHeader {
        seed: Some(trace.master_seed),
        trial: Some(trace.trial),
        backend: Some(trace.backend.name()),
        t_b_eff: Some(trace.t_b_eff),
        ..header.clone()
    };
    w.write_all(TRACE_MAGIC)?;
    w.write_all(b"\n")?;
    w.write_all(header.to_json_line().as_bytes())?;
    w.write_all(b"\n")?;
    w.write_all(&(trace.z.len() as u64).to_le_bytes())?;
    for &z in &trace.z {
        w.write_all(&z.to_le_bytes())?;
    }
    Ok(())
}

/// Reads back a binary trace dump; returns the header line and the counts.
pub fn read_trace_binary<R: Read>(r: &mut R) -> Result<(String, Vec<u64>)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(Error::Config(format!(
            "bad trace magic {:?}; expected {:?}",
            magic, TRACE_MAGIC
        )));
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?; // newline
    let mut header = Vec::new();
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let len = u64::from_le_bytes(len_bytes) as usize;
    let mut z = Vec::with_capacity(len);
    for _ in 0..len {
        let mut zb = [0u8; 8];
        r.read_exact(&mut zb)?;
        z.push(u64::from_le_bytes(zb));
    }
    let header = String::from_utf8(header)
        .map_err(|e| Error::Config(format!("trace header is not UTF-8: {e}")))?;
    Ok((header, z))
}

/// `k,a_k,a_hat_k` decision rows.
pub fn write_decisions_csv<W: Write>(
    w: &mut W,
    header: &FileHeader,
    truth: &[u8],
    decisions: &[u8],
) -> Result<()> {
    if truth.len() != decisions.len() {
        return Err(Error::Dimension(
            "decision dump needs equal-length sequences".into(),
        ));
    }
    write_header(w, header, "k,a_k,a_hat_k")?;
    for (k, (a, d)) in truth.iter().zip(decisions).enumerate() {
        writeln!(w, "{k},{a},{d}")?;
    }
    Ok(())
}

/// One BER summary row.
#[derive(Debug, Clone)]
pub struct BerRow {
    pub detector: &'static str,
    pub l: usize,
    pub q: u64,
    pub t_b_eff: f64,
    pub result: BerResult,
}

/// `detector,L,Q,T_b_eff,ber,ci95,n_symbols` summary rows.
pub fn write_ber_csv<W: Write>(w: &mut W, header: &FileHeader, rows: &[BerRow]) -> Result<()> {
    write_header(w, header, "detector,L,Q,T_b_eff,ber,ci95,n_symbols")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.detector, r.l, r.q, r.t_b_eff, r.result.ber, r.result.ci95, r.result.n_symbols
        )?;
    }
    Ok(())
}

/// Single-row channel characterization summary.
pub fn write_characterization_csv<W: Write>(
    w: &mut W,
    header: &FileHeader,
    c: &crate::microarray::Characterization,
    numeric_bound_mass: f64,
) -> Result<()> {
    write_header(
        w,
        header,
        "h_eq_closed,h_eq_numeric,slem,tau_s,t_eq_s,balance_lhs,balance_rhs",
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        c.h_eq,
        numeric_bound_mass,
        c.spectral.slem,
        c.spectral.tau,
        c.spectral.t_eq,
        c.balance_lhs,
        c.balance_rhs
    )?;
    Ok(())
}

/// `target_teq_s,k_off,k_on,achieved_teq_s,h_eq` calibration rows.
#[derive(Debug, Clone)]
pub struct CalibrationRow {
    pub target_teq: f64,
    pub k_off: f64,
    pub k_on: f64,
    pub achieved_teq: f64,
    pub h_eq: f64,
}

pub fn write_calibration_csv<W: Write>(
    w: &mut W,
    header: &FileHeader,
    rows: &[CalibrationRow],
) -> Result<()> {
    write_header(w, header, "target_teq_s,k_off,k_on,achieved_teq_s,h_eq")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.target_teq, r.k_off, r.k_on, r.achieved_teq, r.h_eq
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::params::ChannelParams;
    use crate::microarray::build_microarray_channel;
    use crate::sim::{simulate_aggregate, DEFAULT_SIM_BUDGET};
    use crate::symbol::noise::TxSequence;
    use crate::symbol::SymbolChannel;

    fn sample_trace() -> SimTrace {
        let ch = build_microarray_channel(&ChannelParams {
            d: 0.0,
            dx: 1.0,
            dt: 1.0,
            n_free: 1,
            k_on: 0.3,
            k_off: 0.2,
            c_p: 1.0,
        })
        .unwrap();
        let sym = SymbolChannel::build(&ch, 1.0, 64, 1e-9).unwrap();
        let tx = TxSequence::new(vec![1, 0, 1], 100).unwrap();
        simulate_aggregate(&sym, &tx, 42, 0, DEFAULT_SIM_BUDGET).unwrap()
    }

    #[test]
    fn binary_trace_round_trip() {
        let trace = sample_trace();
        let mut buf = Vec::new();
        write_trace_binary(&mut buf, &FileHeader::with_hash("abcd"), &trace).unwrap();
        let (header, z) = read_trace_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(z, trace.z);
        assert!(header.contains("\"seed\":42"));
        assert!(header.contains("\"backend\":\"aggregate\""));
        assert!(header.contains("\"config_hash\":\"abcd\""));
    }

    #[test]
    fn csv_header_and_rows() {
        let trace = sample_trace();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &FileHeader::with_hash("ffff"), &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# {"));
        assert_eq!(lines.next().unwrap(), "k,z_k");
        assert_eq!(lines.next().unwrap(), "0,0");
        assert_eq!(text.lines().count(), 2 + trace.z.len());
    }

    #[test]
    fn header_omits_timestamp_by_default() {
        let header = FileHeader::with_hash("1234");
        assert!(!header.to_json_line().contains("generated_at"));
    }
}
