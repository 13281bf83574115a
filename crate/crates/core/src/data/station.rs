//! Station series, wind conversion, quality control, and front fill.

use super::N_VARS;
use crate::error::{Error, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QcFlag {
    Screened,
    Verified,
    Other,
    Missing,
    /// Produced by front fill; never present in raw input files.
    Filled,
}

impl QcFlag {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Screened" => Ok(QcFlag::Screened),
            "Verified" => Ok(QcFlag::Verified),
            "Other" => Ok(QcFlag::Other),
            "Missing" => Ok(QcFlag::Missing),
            "Filled" => Ok(QcFlag::Filled),
            other => Err(Error::Data(format!("unknown qc flag {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            QcFlag::Screened => "Screened",
            QcFlag::Verified => "Verified",
            QcFlag::Other => "Other",
            QcFlag::Missing => "Missing",
            QcFlag::Filled => "Filled",
        }
    }

    /// Counts toward the quality fraction.
    pub fn is_good(&self) -> bool {
        matches!(self, QcFlag::Screened | QcFlag::Verified)
    }
}

/// Hourly observation record at one station. After alignment the timestamps
/// are implicit: `start + i hours`. Missing hours hold NaN values and the
/// `Missing` flag until front fill replaces them.
#[derive(Clone, Debug)]
pub struct StationSeries {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    pub start: DateTime<Utc>,
    pub values: Vec<[f64; N_VARS]>,
    pub flags: Vec<QcFlag>,
}

impl StationSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn good_fraction(&self) -> f64 {
        if self.flags.is_empty() {
            return 0.0;
        }
        self.flags.iter().filter(|f| f.is_good()).count() as f64 / self.flags.len() as f64
    }
}

/// Convert meteorological speed/direction ("blowing from", degrees clockwise
/// from north) to eastward u and northward v components.
pub fn wind_components(speed: f64, direction_deg: f64) -> Result<(f64, f64)> {
    if !(speed >= 0.0) {
        return Err(Error::Validation(format!(
            "wind speed must be non-negative, got {speed}"
        )));
    }
    if !(0.0..360.0).contains(&direction_deg) {
        return Err(Error::Validation(format!(
            "wind direction must be in [0, 360), got {direction_deg}"
        )));
    }
    let theta = direction_deg.to_radians();
    Ok((-speed * theta.sin(), -speed * theta.cos()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QcDecision {
    pub station_id: String,
    pub good_fraction: f64,
    pub kept: bool,
}

/// Keep stations whose fraction of Screened/Verified hours over the span is
/// at least `threshold`. Pure function of flags and threshold.
pub fn qc_filter(
    stations: Vec<StationSeries>,
    threshold: f64,
) -> Result<(Vec<StationSeries>, Vec<QcDecision>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "qc threshold must be in (0, 1], got {threshold}"
        )));
    }
    let mut kept = Vec::new();
    let mut report = Vec::new();
    for s in stations {
        let frac = s.good_fraction();
        let keep = frac >= threshold;
        report.push(QcDecision {
            station_id: s.station_id.clone(),
            good_fraction: frac,
            kept: keep,
        });
        if keep {
            kept.push(s);
        }
    }
    if kept.is_empty() {
        return Err(Error::Config(format!(
            "qc filter dropped all {} stations at threshold {threshold}; \
             best good fraction was {:.3}",
            report.len(),
            report
                .iter()
                .map(|d| d.good_fraction)
                .fold(0.0, f64::max)
        )));
    }
    Ok((kept, report))
}

/// Replace each missing hour with the most recent prior value, flagging it
/// `Filled`. Returns the fill count.
pub fn front_fill(series: &mut StationSeries) -> Result<usize> {
    if series.is_empty() {
        return Err(Error::Data(format!(
            "station {}: empty series",
            series.station_id
        )));
    }
    if series.flags[0] == QcFlag::Missing {
        return Err(Error::Data(format!(
            "station {}: leading gap, first hour has no observation",
            series.station_id
        )));
    }
    let mut filled = 0;
    for i in 1..series.len() {
        if series.flags[i] == QcFlag::Missing {
            series.values[i] = series.values[i - 1];
            series.flags[i] = QcFlag::Filled;
            filled += 1;
        }
    }
    Ok(filled)
}
