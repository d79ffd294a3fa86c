//! Linear interpolation over short gaps in numeric channels.

use std::collections::{BTreeMap, HashMap};

use fogdrive_core::trace::{format_number, Channel, TraceRow};

/// A gap is at least one missed sample (> 1.5 periods) and is filled only
/// when it spans at most `max_factor` periods.
pub const MISSED_SAMPLE_FACTOR: f64 = 1.5;

/// Nominal sampling period per source.
#[derive(Debug, Clone, Default)]
pub struct NominalPeriods {
    by_source: HashMap<String, i64>,
}

impl NominalPeriods {
    pub fn set(&mut self, source: impl Into<String>, period_ms: i64) {
        self.by_source.insert(source.into(), period_ms);
    }

    pub fn get(&self, source: &str) -> Option<i64> {
        self.by_source.get(source).copied()
    }
}

pub fn fillable(channel: Channel) -> bool {
    channel.is_numeric() && channel != Channel::RrMs
}

/// Points to insert into a time-ordered series.
pub fn fill_series(points: &[(i64, f64)], nominal_ms: i64, max_factor: f64) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    if nominal_ms <= 0 {
        return out;
    }
    let n = nominal_ms as f64;
    for w in points.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        let dt = (t1 - t0) as f64;
        if dt <= MISSED_SAMPLE_FACTOR * n || dt > max_factor * n {
            continue;
        }
        let mut t = t0 + nominal_ms;
        while (t1 - t) as f64 >= n / 2.0 {
            let frac = (t - t0) as f64 / dt;
            let v = (v0 + (v1 - v0) * frac).clamp(v0.min(v1), v0.max(v1));
            out.push((t, v));
            t += nominal_ms;
        }
    }
    out
}

fn render(v: f64, lo: f64, hi: f64) -> String {
    let s = format_number(v, 3);
    match s.parse::<f64>() {
        Ok(p) if p >= lo && p <= hi => s,
        _ => format!("{v}"),
    }
}

/// Interpolated rows for every fillable (source, channel) series in `rows`.
/// Sources without a nominal period are left alone.
pub fn fill_gaps(rows: &[TraceRow], periods: &NominalPeriods, max_factor: f64) -> Vec<TraceRow> {
    let mut series: BTreeMap<(&str, Channel), Vec<&TraceRow>> = BTreeMap::new();
    for r in rows {
        if !r.interpolated && fillable(r.channel) && r.numeric_value().is_some() {
            series.entry((r.source.as_str(), r.channel)).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for ((source, channel), mut list) in series {
        let Some(nominal) = periods.get(source) else { continue };
        list.sort_by_key(|r| r.timestamp_ms);
        let points: Vec<(i64, f64)> = list
            .iter()
            .map(|r| (r.timestamp_ms, r.numeric_value().expect("filtered numeric")))
            .collect();
        let unit = list[0].unit.as_str();
        for (t, v) in fill_series(&points, nominal, max_factor) {
            let i = points.partition_point(|&(pt, _)| pt <= t);
            let (lo, hi) = (points[i - 1].1.min(points[i].1), points[i - 1].1.max(points[i].1));
            let mut row = TraceRow::new(t, source, channel, render(v, lo, hi), unit);
            row.interpolated = true;
            out.push(row);
        }
    }
    out
}
