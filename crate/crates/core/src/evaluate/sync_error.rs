//! Synchronization error against ground-truth clock parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::TrueClock;
use crate::sync::ClockEstimate;

/// Per-array synchronization quality.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyncErrorReport {
    pub array_id: usize,
    /// Absolute STO error in milliseconds.
    pub sto_error_ms: f64,
    /// RMSE of the SRO trace in ppm after the burn-in.
    pub sro_rmse_ppm: f64,
    /// Mean absolute SRO error in ppm after the burn-in.
    pub sro_mean_abs_ppm: f64,
}

/// Compare estimated clocks against the simulator truth.
///
/// The SRO trace comparison skips `burn_in_s` of estimator warm-up. The
/// estimated trace lives on the coarsely aligned timeline, which trails the
/// device timeline by the STO; the truth trace is shifted accordingly.
pub fn sync_error(
    truth: &[TrueClock],
    estimates: &[ClockEstimate],
    sample_rate: f64,
    burn_in_s: f64,
) -> Result<Vec<SyncErrorReport>> {
    if truth.len() != estimates.len() {
        return Err(Error::ArrayIdMismatch(format!(
            "{} true clocks vs {} estimates",
            truth.len(),
            estimates.len()
        )));
    }
    let mut out = Vec::with_capacity(truth.len());
    for (t, e) in truth.iter().zip(estimates) {
        if t.array_id != e.array_id {
            return Err(Error::ArrayIdMismatch(format!(
                "true clock {} vs estimate {}",
                t.array_id, e.array_id
            )));
        }
        let sto_error_ms = (e.sto_seconds - t.sto_s).abs() * 1e3;

        // Truth trace grid and estimate grid may differ; compare at the
        // estimate's frame centers.
        let truth_shift_frames =
            ((t.sto_s * sample_rate) / crate::simulate::SRO_TRACE_SHIFT as f64).round() as usize;
        let skip = (burn_in_s * sample_rate / e.sro_frame_shift as f64) as usize;
        let mut se = 0.0;
        let mut ae = 0.0;
        let mut count = 0usize;
        for l in skip..e.sro_ppm.len() {
            let sample = l * e.sro_frame_shift;
            let truth_idx = sample / crate::simulate::SRO_TRACE_SHIFT;
            let idx = truth_idx.saturating_sub(truth_shift_frames).min(
                t.sro_ppm.len().saturating_sub(1),
            );
            let true_val = if t.sro_ppm.is_empty() { 0.0 } else { t.sro_ppm[idx] };
            let err = e.sro_ppm[l] - true_val;
            se += err * err;
            ae += err.abs();
            count += 1;
        }
        let (sro_rmse_ppm, sro_mean_abs_ppm) = if count > 0 {
            ((se / count as f64).sqrt(), ae / count as f64)
        } else {
            (0.0, 0.0)
        };
        out.push(SyncErrorReport {
            array_id: t.array_id,
            sto_error_ms,
            sro_rmse_ppm,
            sro_mean_abs_ppm,
        });
    }
    Ok(out)
}
