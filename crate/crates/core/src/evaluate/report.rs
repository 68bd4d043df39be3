//! CSV metric tables.

use serde::{Deserialize, Serialize};

use super::der::DerResult;

/// Metrics of one meeting under one system variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeetingMetrics {
    pub meeting: String,
    pub system: String,
    pub sync: String,
    pub init: String,
    pub der_percent: Option<f64>,
    pub missed_s: Option<f64>,
    pub false_alarm_s: Option<f64>,
    pub confusion_s: Option<f64>,
    pub si_sdr_db: Option<f64>,
    pub sto_error_ms: Option<f64>,
    pub sro_mean_abs_ppm: Option<f64>,
    pub em_iterations: Option<usize>,
}

impl MeetingMetrics {
    pub fn new(meeting: impl Into<String>, system: impl Into<String>) -> Self {
        Self {
            meeting: meeting.into(),
            system: system.into(),
            sync: String::new(),
            init: String::new(),
            der_percent: None,
            missed_s: None,
            false_alarm_s: None,
            confusion_s: None,
            si_sdr_db: None,
            sto_error_ms: None,
            sro_mean_abs_ppm: None,
            em_iterations: None,
        }
    }

    pub fn set_der(&mut self, der: &DerResult) {
        self.der_percent = Some(der.der_percent);
        self.missed_s = Some(der.missed_s);
        self.false_alarm_s = Some(der.false_alarm_s);
        self.confusion_s = Some(der.confusion_s);
    }
}

/// A table of per-meeting rows with a stable CSV rendering.
#[derive(Debug, Clone, Default)]
pub struct MetricsTable {
    pub rows: Vec<MeetingMetrics>,
}

const COLUMNS: &[&str] = &[
    "meeting",
    "system",
    "sync",
    "init",
    "der_percent",
    "missed_s",
    "false_alarm_s",
    "confusion_s",
    "si_sdr_db",
    "sto_error_ms",
    "sro_mean_abs_ppm",
    "em_iterations",
];

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        for r in &self.rows {
            out.push('\n');
            let fields = [
                r.meeting.clone(),
                r.system.clone(),
                r.sync.clone(),
                r.init.clone(),
                fmt_opt(r.der_percent),
                fmt_opt(r.missed_s),
                fmt_opt(r.false_alarm_s),
                fmt_opt(r.confusion_s),
                fmt_opt(r.si_sdr_db),
                fmt_opt(r.sto_error_ms),
                fmt_opt(r.sro_mean_abs_ppm),
                r.em_iterations.map(|v| v.to_string()).unwrap_or_default(),
            ];
            out.push_str(&fields.join(","));
        }
        out.push('\n');
        out
    }

    /// Mean and standard deviation per (system, sync, init) group, in the
    /// row structure of the result tables: one row per system variant.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: Vec<(String, String, String)> = Vec::new();
        for r in &self.rows {
            let key = (r.system.clone(), r.sync.clone(), r.init.clone());
            if !groups.contains(&key) {
                groups.push(key);
            }
        }
        groups
            .into_iter()
            .map(|(system, sync, init)| {
                let members: Vec<&MeetingMetrics> = self
                    .rows
                    .iter()
                    .filter(|r| r.system == system && r.sync == sync && r.init == init)
                    .collect();
                let der = stats(members.iter().filter_map(|r| r.der_percent));
                let sdr = stats(members.iter().filter_map(|r| r.si_sdr_db));
                let sto = stats(members.iter().filter_map(|r| r.sto_error_ms));
                let sro = stats(members.iter().filter_map(|r| r.sro_mean_abs_ppm));
                SummaryRow {
                    system,
                    sync,
                    init,
                    meetings: members.len(),
                    der_mean: der.map(|s| s.0),
                    der_std: der.map(|s| s.1),
                    si_sdr_mean: sdr.map(|s| s.0),
                    si_sdr_std: sdr.map(|s| s.1),
                    sto_error_ms_mean: sto.map(|s| s.0),
                    sro_mean_abs_ppm_mean: sro.map(|s| s.0),
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "system,sync,init,meetings,der_mean,der_std,si_sdr_mean,si_sdr_std,sto_error_ms_mean,sro_mean_abs_ppm_mean\n",
        );
        for row in self.summary() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.system,
                row.sync,
                row.init,
                row.meetings,
                fmt_opt(row.der_mean),
                fmt_opt(row.der_std),
                fmt_opt(row.si_sdr_mean),
                fmt_opt(row.si_sdr_std),
                fmt_opt(row.sto_error_ms_mean),
                fmt_opt(row.sro_mean_abs_ppm_mean),
            ));
        }
        out
    }
}

/// One summary row per system variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub system: String,
    pub sync: String,
    pub init: String,
    pub meetings: usize,
    pub der_mean: Option<f64>,
    pub der_std: Option<f64>,
    pub si_sdr_mean: Option<f64>,
    pub si_sdr_std: Option<f64>,
    pub sto_error_ms_mean: Option<f64>,
    pub sro_mean_abs_ppm_mean: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn stats(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let values: Vec<f64> = values.collect();
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    Some((mean, var.sqrt()))
}
