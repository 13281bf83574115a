//! Forecast samples: windowed, normalized blocks keyed by anchor hour.

use super::{Dataset, GridSource, NormStats, N_VARS};
use crate::error::{Error, Result};
use crate::geometry::HeteroGraph;

/// What one sample looks like: history depth, lead, and grid source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleSpec {
    pub back_hours: u32,
    pub lead: u32,
    pub grid_source: Option<GridSource>,
}

impl SampleSpec {
    pub fn new(back_hours: u32, lead: u32, grid_source: Option<GridSource>) -> Result<Self> {
        if back_hours == 0 || lead == 0 {
            return Err(Error::Config(
                "back_hours and lead must be at least 1".into(),
            ));
        }
        Ok(Self {
            back_hours,
            lead,
            grid_source,
        })
    }

    /// Steps in the station history window (inclusive of the anchor hour).
    pub fn history_len(&self) -> usize {
        self.back_hours as usize + 1
    }

    /// Steps in the grid window, after any forecast-horizon truncation.
    pub fn grid_len(&self) -> Option<usize> {
        self.grid_source
            .map(|src| grid_window_len(self.back_hours, self.lead, src))
    }
}

/// Forecast steps actually available at this lead for a source.
pub fn lead_effective(lead: u32, source: GridSource) -> u32 {
    match source.forecast_horizon() {
        Some(h) => lead.min(h),
        None => lead,
    }
}

/// Grid window length in steps: back hours + anchor + effective lead.
pub fn grid_window_len(back_hours: u32, lead: u32, source: GridSource) -> usize {
    (back_hours + 1 + lead_effective(lead, source)) as usize
}

/// One forecast instance, normalized and flattened for the models.
#[derive(Clone, Debug)]
pub struct Sample {
    pub anchor: usize,
    pub lead: u32,
    pub n_stations: usize,
    /// `[N][(b+1)*4]` normalized station history, row per station.
    pub station_history: Vec<f64>,
    /// `[A][L*4]` normalized grid windows, row per active cell.
    pub grid_block: Option<Vec<f64>>,
    /// `[N*4]` normalized target at `anchor + lead`.
    pub target_norm: Vec<f64>,
    /// `[N*4]` raw target in physical units.
    pub target_raw: Vec<f64>,
}

/// Anchors with a full history window and an in-span target, restricted to
/// `years` (both the anchor and the target year must be in the set) when
/// given. History may reach back across the year boundary.
pub fn valid_anchors(ds: &Dataset, spec: &SampleSpec, years: Option<&[i32]>) -> Vec<usize> {
    let b = spec.back_hours as usize;
    let l = spec.lead as usize;
    let mut out = Vec::new();
    if ds.n_hours <= b + l {
        return out;
    }
    for t in b..ds.n_hours - l {
        if let Some(ys) = years {
            if !ys.contains(&ds.year_of_hour(t)) || !ys.contains(&ds.year_of_hour(t + l)) {
                continue;
            }
        }
        out.push(t);
    }
    out
}

/// Partition anchors into train/val/test by calendar year.
pub fn split_anchors(
    ds: &Dataset,
    spec: &SampleSpec,
    train_years: &[i32],
    val_years: &[i32],
    test_years: &[i32],
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mut all: Vec<i32> = Vec::new();
    all.extend(train_years);
    all.extend(val_years);
    all.extend(test_years);
    let mut dedup = all.clone();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != all.len() {
        return Err(Error::Config(format!(
            "split years overlap: train {train_years:?}, val {val_years:?}, test {test_years:?}"
        )));
    }
    Ok((
        valid_anchors(ds, spec, Some(train_years)),
        valid_anchors(ds, spec, Some(val_years)),
        valid_anchors(ds, spec, Some(test_years)),
    ))
}

/// Assemble and normalize the sample anchored at hour `t`.
pub fn build_sample(
    ds: &Dataset,
    graph: &HeteroGraph,
    stats: &NormStats,
    spec: &SampleSpec,
    t: usize,
) -> Result<Sample> {
    let b = spec.back_hours as usize;
    let l = spec.lead as usize;
    if t < b || t + l >= ds.n_hours {
        return Err(Error::Contract(format!(
            "anchor {t} lacks a full history or target window"
        )));
    }
    let n = ds.n_stations();
    let hist_len = spec.history_len();

    let mut station_history = Vec::with_capacity(n * hist_len * N_VARS);
    for s in &ds.stations {
        for h in (t - b)..=t {
            for v in 0..N_VARS {
                station_history.push(stats.normalize_station(v, s.values[h][v]));
            }
        }
    }

    let grid_block = match spec.grid_source {
        None => None,
        Some(src) => {
            let grid = ds.grid(src)?;
            let steps = grid_window_len(spec.back_hours, spec.lead, src);
            let mut block = Vec::with_capacity(graph.active_cells.len() * steps * N_VARS);
            for &cell in &graph.active_cells {
                for h in (t - b)..(t - b + steps) {
                    for v in 0..N_VARS {
                        block.push(stats.normalize_grid(v, grid.value(h, cell, v)));
                    }
                }
            }
            Some(block)
        }
    };

    let mut target_norm = Vec::with_capacity(n * N_VARS);
    let mut target_raw = Vec::with_capacity(n * N_VARS);
    for s in &ds.stations {
        for v in 0..N_VARS {
            let x = s.values[t + l][v];
            target_raw.push(x);
            target_norm.push(stats.normalize_station(v, x));
        }
    }

    Ok(Sample {
        anchor: t,
        lead: spec.lead,
        n_stations: n,
        station_history,
        grid_block,
        target_norm,
        target_raw,
    })
}
