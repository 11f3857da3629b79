//! Energy and bandwidth ledgers, awake fractions and log-log scaling fits.

use std::io::Write;

use num_rational::Ratio;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Per-node counters. Slots are counted by the engine; the protocol adds the
/// commit-relative and stream-relative counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub awake_slots: u64,
    pub sleep_slots: u64,
    pub listened_bits: u64,
    pub sent_bits: u64,
    pub fp_phase_slots: u64,
    pub data_phase_slots: u64,
    pub fp_awake_slots: u64,
    pub data_awake_slots: u64,
    pub fp_listened_bits: u64,
    pub data_listened_bits: u64,
    pub fp_sent_bits: u64,
    pub data_sent_bits: u64,
    /// Fingerprint-phase bits heard up to and including the commit slot.
    pub fp_bits_to_commit: u64,
    /// Data-phase slots spent listening to a stream position.
    pub data_listens: u64,
    /// Data messages actually received while listening.
    pub data_messages_heard: u64,
    /// Data-phase slots spent transmitting.
    pub data_transmits: u64,
    /// Stream positions that went by while the node was sampling, whether
    /// listened to or slept through.
    pub stream_positions_passed: u64,
}

impl EnergyLedger {
    pub fn total_slots(&self) -> u64 {
        self.awake_slots + self.sleep_slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerPhase {
    Fingerprint,
    Data,
    Overall,
}

/// Awake slots in `phase` over slots elapsed in `phase`. Zero when no slot elapsed.
pub fn awake_fraction(ledger: &EnergyLedger, phase: LedgerPhase) -> Ratio<u64> {
    let (awake, total) = match phase {
        LedgerPhase::Fingerprint => (ledger.fp_awake_slots, ledger.fp_phase_slots),
        LedgerPhase::Data => (ledger.data_awake_slots, ledger.data_phase_slots),
        LedgerPhase::Overall => (ledger.awake_slots, ledger.total_slots()),
    };
    if total == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(awake, total)
    }
}

/// Data-phase awake fraction relative to the stream a node actually sampled:
/// awake data slots over stream positions passed plus own transmissions.
///
/// The plain phase fraction is dominated by wait-gate idling, which grows with
/// the grid rather than with the neighborhood size.
pub fn stream_awake_fraction(ledger: &EnergyLedger) -> Ratio<u64> {
    let total = ledger.stream_positions_passed + ledger.data_transmits;
    if total == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(ledger.data_listens + ledger.data_transmits, total)
    }
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow<F> {
    pub n: u64,
    pub mean: F,
    pub samples: usize,
    /// Fitted minus observed, in natural-log units.
    pub residual: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport<F> {
    pub rows: Vec<ScalingRow<F>>,
    /// Least-squares slope of ln(mean) against ln(n).
    pub exponent: F,
    pub intercept: F,
}

/// Fits `mean ≈ e^intercept · n^exponent` over samples grouped by n. Groups
/// with the same n are merged, so the result is independent of input order.
pub fn scaling_report<F: Float>(samples: &[(u64, F)]) -> Result<ScalingReport<F>> {
    let mut groups: std::collections::BTreeMap<u64, (F, usize)> = Default::default();
    for &(n, v) in samples {
        let e = groups.entry(n).or_insert((F::zero(), 0));
        e.0 = e.0 + v;
        e.1 += 1;
    }
    if groups.len() < 3 {
        return Err(Error::Config(format!(
            "scaling fit needs at least 3 distinct n values, got {}",
            groups.len()
        )));
    }
    let pts: Vec<(u64, F, usize, F, F)> = groups
        .into_iter()
        .map(|(n, (sum, count))| {
            let mean = sum / F::from(count).unwrap();
            (n, mean, count, F::from(n).unwrap().ln(), mean.ln())
        })
        .collect();
    let k = F::from(pts.len()).unwrap();
    let mx = pts.iter().fold(F::zero(), |a, p| a + p.3) / k;
    let my = pts.iter().fold(F::zero(), |a, p| a + p.4) / k;
    let sxy = pts.iter().fold(F::zero(), |a, p| a + (p.3 - mx) * (p.4 - my));
    let sxx = pts.iter().fold(F::zero(), |a, p| a + (p.3 - mx) * (p.3 - mx));
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let rows = pts
        .into_iter()
        .map(|(n, mean, samples, lx, ly)| ScalingRow {
            n,
            mean,
            samples,
            residual: intercept + exponent * lx - ly,
        })
        .collect();
    Ok(ScalingReport {
        rows,
        exponent,
        intercept,
    })
}

pub const LEDGER_CSV_COLUMNS: &str = "run_id,node_x,node_y,awake_slots,sleep_slots,listened_bits,sent_bits,\
fp_phase_slots,data_phase_slots,fp_awake_slots,data_awake_slots,fp_listened_bits,data_listened_bits,\
fp_bits_to_commit,data_listens,data_messages_heard,data_transmits,stream_positions_passed";

/// Writes one row per node. `header` lines are emitted first as `# ` comments.
pub fn write_ledger_csv<W: Write>(
    out: &mut W,
    header: &str,
    run_id: &str,
    spec: &GridSpec,
    ledgers: &[EnergyLedger],
) -> Result<()> {
    for line in header.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{LEDGER_CSV_COLUMNS}")?;
    for (i, l) in ledgers.iter().enumerate() {
        let c = spec.coord(i);
        writeln!(
            out,
            "{run_id},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.x,
            c.y,
            l.awake_slots,
            l.sleep_slots,
            l.listened_bits,
            l.sent_bits,
            l.fp_phase_slots,
            l.data_phase_slots,
            l.fp_awake_slots,
            l.data_awake_slots,
            l.fp_listened_bits,
            l.data_listened_bits,
            l.fp_bits_to_commit,
            l.data_listens,
            l.data_messages_heard,
            l.data_transmits,
            l.stream_positions_passed,
        )?;
    }
    Ok(())
}

/// Writes an aggregate table for a sweep.
pub fn write_scaling_csv<W: Write, F: Float + std::fmt::Display>(
    out: &mut W,
    header: &str,
    metric: &str,
    report: &ScalingReport<F>,
) -> Result<()> {
    for line in header.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "n,samples,mean_{metric},residual,exponent")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.n, row.samples, row.mean, row.residual, report.exponent
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_extremes() {
        let awake = EnergyLedger {
            awake_slots: 10,
            fp_awake_slots: 10,
            fp_phase_slots: 10,
            ..Default::default()
        };
        assert_eq!(awake_fraction(&awake, LedgerPhase::Overall), Ratio::from_integer(1));
        assert_eq!(awake_fraction(&awake, LedgerPhase::Fingerprint), Ratio::from_integer(1));
        let asleep = EnergyLedger {
            sleep_slots: 10,
            data_phase_slots: 10,
            ..Default::default()
        };
        assert_eq!(awake_fraction(&asleep, LedgerPhase::Overall), Ratio::from_integer(0));
        assert_eq!(awake_fraction(&asleep, LedgerPhase::Data), Ratio::from_integer(0));
        assert_eq!(awake_fraction(&EnergyLedger::default(), LedgerPhase::Data), Ratio::from_integer(0));
    }

    #[test]
    fn synthetic_slopes() {
        let inv_sqrt: Vec<(u64, f64)> = [16u64, 64, 256, 1024].iter().map(|&n| (n, 1.0 / (n as f64).sqrt())).collect();
        let rep = scaling_report(&inv_sqrt).unwrap();
        assert!((rep.exponent + 0.5).abs() < 1e-9);
        assert!(rep.rows.iter().all(|r| r.residual.abs() < 1e-9));

        let flat: Vec<(u64, f32)> = [4u64, 8, 16].iter().map(|&n| (n, 3.0)).collect();
        assert!(scaling_report(&flat).unwrap().exponent.abs() < 1e-6);

        assert!(scaling_report(&[(4u64, 1.0f64), (8, 2.0)]).is_err());
    }

    #[test]
    fn report_ignores_input_order() {
        let a = vec![(4u64, 1.0f64), (8, 3.0), (4, 2.0), (16, 5.0)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(scaling_report(&a).unwrap(), scaling_report(&b).unwrap());
    }
}
