use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::Serialize;

use super::TrialResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfMetric {
    Overhead,
    Gain,
}

impl FromStr for CdfMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "overhead" => Ok(CdfMetric::Overhead),
            "gain" => Ok(CdfMetric::Gain),
            other => Err(Error::InvalidConfig(format!(
                "unknown CDF metric '{other}'"
            ))),
        }
    }
}

/// Evaluation points of the empirical CDFs; an empty list skips that metric.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CdfThresholds {
    pub overhead: Vec<f64>,
    pub gain: Vec<f64>,
}

impl CdfThresholds {
    /// Integer overheads from 0 to the largest observed, and gain ratios in
    /// 1 dB steps from the smallest finite observed value up to 0 dB.
    pub fn auto(results: &[TrialResult], metrics: &[CdfMetric]) -> Self {
        let mut t = Self::default();
        if metrics.contains(&CdfMetric::Overhead) {
            let max = results.iter().map(|r| r.overhead).max().unwrap_or(0);
            t.overhead = (0..=max).map(f64::from).collect();
        }
        if metrics.contains(&CdfMetric::Gain) {
            let min = results
                .iter()
                .map(|r| r.gain_ratio_db)
                .filter(|g| g.is_finite())
                .fold(0.0, f64::min)
                .floor();
            t.gain = (0..=(-min) as i64).rev().map(|k| -(k as f64)).collect();
        }
        t
    }
}

/// Fraction of `values` at or below each threshold.
pub fn empirical_cdf(values: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    thresholds
        .iter()
        .map(|t| sorted.partition_point(|v| v <= t) as f64 / n)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        (s[m - 1] + s[m]) / 2.0
    } else {
        s[m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub algorithm: String,
    pub snr_db: f64,
    pub rows: usize,
    pub trials: usize,
    /// Per (trial, user) row.
    pub mean_overhead: f64,
    pub median_overhead: f64,
    /// Summed over users within a trial.
    pub mean_trial_overhead: f64,
    pub mean_gain_ratio_db: f64,
    pub mean_se_bps_hz: f64,
    pub hit_rate: f64,
    pub overhead_cdf: Vec<(f64, f64)>,
    pub gain_cdf: Vec<(f64, f64)>,
}

/// Per (algorithm, SNR) statistics, in order of first appearance.
pub fn summarize(results: &[TrialResult], thresholds: &CdfThresholds) -> Result<Vec<GroupSummary>> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        let key = (r.algorithm.clone(), r.snr_db.to_bits());
        let g = groups.entry(key.clone()).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(r);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let overheads: Vec<f64> = rows.iter().map(|r| f64::from(r.overhead)).collect();
            let gains: Vec<f64> = rows.iter().map(|r| r.gain_ratio_db).collect();
            let mut per_trial: BTreeMap<u64, f64> = BTreeMap::new();
            for r in rows {
                *per_trial.entry(r.trial_id).or_default() += f64::from(r.overhead);
            }
            let trial_totals: Vec<f64> = per_trial.values().copied().collect();
            GroupSummary {
                algorithm: key.0.clone(),
                snr_db: f64::from_bits(key.1),
                rows: rows.len(),
                trials: per_trial.len(),
                mean_overhead: mean(&overheads),
                median_overhead: median(&overheads),
                mean_trial_overhead: mean(&trial_totals),
                mean_gain_ratio_db: mean(&gains),
                mean_se_bps_hz: mean(&rows.iter().map(|r| r.se_bps_hz).collect::<Vec<_>>()),
                hit_rate: rows.iter().filter(|r| r.hit()).count() as f64 / rows.len() as f64,
                overhead_cdf: thresholds
                    .overhead
                    .iter()
                    .copied()
                    .zip(empirical_cdf(&overheads, &thresholds.overhead))
                    .collect(),
                gain_cdf: thresholds
                    .gain
                    .iter()
                    .copied()
                    .zip(empirical_cdf(&gains, &thresholds.gain))
                    .collect(),
            }
        })
        .collect())
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    algorithm: &'a str,
    snr_db: f64,
    statistic: &'a str,
    threshold: Option<f64>,
    value: f64,
}

/// Long format: `algorithm,snr_db,statistic,threshold,value`; `threshold` is
/// empty except on CDF rows.
pub fn write_summary_csv<W: Write>(groups: &[GroupSummary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for g in groups {
        let scalar = [
            ("rows", g.rows as f64),
            ("trials", g.trials as f64),
            ("mean_overhead", g.mean_overhead),
            ("median_overhead", g.median_overhead),
            ("mean_trial_overhead", g.mean_trial_overhead),
            ("mean_gain_ratio_db", g.mean_gain_ratio_db),
            ("mean_se_bps_hz", g.mean_se_bps_hz),
            ("hit_rate", g.hit_rate),
        ];
        for (statistic, value) in scalar {
            out.serialize(SummaryRecord {
                algorithm: &g.algorithm,
                snr_db: g.snr_db,
                statistic,
                threshold: None,
                value,
            })?;
        }
        for (statistic, cdf) in [("overhead_cdf", &g.overhead_cdf), ("gain_cdf", &g.gain_cdf)] {
            for &(t, value) in cdf {
                out.serialize(SummaryRecord {
                    algorithm: &g.algorithm,
                    snr_db: g.snr_db,
                    statistic,
                    threshold: Some(t),
                    value,
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_results_csv<W: Write>(results: &[TrialResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<TrialResult>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
