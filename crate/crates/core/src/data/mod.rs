//! Ingest, quality control, alignment, normalization, and windowing of
//! station and gridded series into training samples.

mod csvio;
mod grid;
mod norm;
mod samples;
mod station;

pub use csvio::{read_station_csv, write_station_csv};
pub use grid::{read_gridpack, write_gridpack, GridSeries, GridSource};
pub use norm::NormStats;
pub use samples::{
    build_sample, grid_window_len, lead_effective, split_anchors, valid_anchors, Sample,
    SampleSpec,
};
pub use station::{front_fill, qc_filter, wind_components, QcDecision, QcFlag, StationSeries};

use crate::error::{Error, Result};
use chrono::{DateTime, Datelike, Duration, Utc};

pub const N_VARS: usize = 4;
pub const VAR_NAMES: [&str; N_VARS] = ["u", "v", "temperature", "dewpoint"];

pub const VAR_U: usize = 0;
pub const VAR_V: usize = 1;
pub const VAR_TEMPERATURE: usize = 2;
pub const VAR_DEWPOINT: usize = 3;

/// Aligned station set plus any gridded products sharing one hourly axis.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub start: DateTime<Utc>,
    pub n_hours: usize,
    pub stations: Vec<StationSeries>,
    pub grids: Vec<GridSeries>,
}

impl Dataset {
    pub fn new(stations: Vec<StationSeries>, grids: Vec<GridSeries>) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::Data("dataset has no stations".into()));
        }
        let start = stations[0].start;
        let n_hours = stations[0].len();
        for s in &stations {
            if s.start != start || s.len() != n_hours {
                return Err(Error::Data(format!(
                    "station {} is not aligned to the common axis",
                    s.station_id
                )));
            }
        }
        for g in &grids {
            if g.start != start || g.n_steps() != n_hours {
                return Err(Error::Data(format!(
                    "grid {} does not share the station axis (start {} vs {}, {} vs {} steps)",
                    g.source,
                    g.start,
                    start,
                    g.n_steps(),
                    n_hours
                )));
            }
        }
        Ok(Self {
            start,
            n_hours,
            stations,
            grids,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn grid(&self, source: GridSource) -> Result<&GridSeries> {
        self.grids
            .iter()
            .find(|g| g.source == source)
            .ok_or_else(|| Error::Config(format!("no {source} grid in the dataset store")))
    }

    pub fn hour_time(&self, idx: usize) -> DateTime<Utc> {
        self.start + Duration::hours(idx as i64)
    }

    pub fn year_of_hour(&self, idx: usize) -> i32 {
        self.hour_time(idx).year()
    }

    /// Hour index of a timestamp on this dataset's axis.
    pub fn hour_index(&self, t: DateTime<Utc>) -> Result<usize> {
        let dh = (t - self.start).num_hours();
        if t != self.start + Duration::hours(dh) {
            return Err(Error::Validation(format!(
                "timestamp {t} is not on the hourly axis"
            )));
        }
        if dh < 0 || dh as usize >= self.n_hours {
            return Err(Error::Validation(format!(
                "timestamp {t} outside the covered span"
            )));
        }
        Ok(dh as usize)
    }

    /// Raw observations at one hour for every station, flattened `[N*4]`.
    pub fn station_values_at(&self, hour: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.stations.len() * N_VARS);
        for s in &self.stations {
            out.extend_from_slice(&s.values[hour]);
        }
        out
    }
}
