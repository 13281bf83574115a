//! Per-variable z-score statistics, computed on training years only,
//! separately for station and grid sources.

use super::{Dataset, GridSource, N_VARS, VAR_NAMES};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub station_mean: [f64; N_VARS],
    pub station_std: [f64; N_VARS],
    /// Absent when the run uses no gridded product.
    pub grid_mean: Option<[f64; N_VARS]>,
    pub grid_std: Option<[f64; N_VARS]>,
}

fn finalize(sum: [f64; N_VARS], sumsq: [f64; N_VARS], n: f64, what: &str) -> Result<([f64; N_VARS], [f64; N_VARS])> {
    if n == 0.0 {
        return Err(Error::Config(format!(
            "no {what} values fall inside the training years"
        )));
    }
    let mut mean = [0.0; N_VARS];
    let mut std = [0.0; N_VARS];
    for v in 0..N_VARS {
        mean[v] = sum[v] / n;
        let var = (sumsq[v] / n - mean[v] * mean[v]).max(0.0);
        std[v] = var.sqrt();
        if std[v] <= 0.0 {
            return Err(Error::Config(format!(
                "{what} variable {:?} is constant over the training years; \
                 z-score normalization undefined",
                VAR_NAMES[v]
            )));
        }
    }
    Ok((mean, std))
}

impl NormStats {
    /// Statistics over every hour whose calendar year is in `train_years`.
    pub fn compute(
        ds: &Dataset,
        grid_source: Option<GridSource>,
        train_years: &[i32],
    ) -> Result<Self> {
        let mut s_sum = [0.0; N_VARS];
        let mut s_sumsq = [0.0; N_VARS];
        let mut s_n = 0.0;
        let mut g_sum = [0.0; N_VARS];
        let mut g_sumsq = [0.0; N_VARS];
        let mut g_n = 0.0;
        let grid = match grid_source {
            Some(src) => Some(ds.grid(src)?),
            None => None,
        };

        for h in 0..ds.n_hours {
            if !train_years.contains(&ds.year_of_hour(h)) {
                continue;
            }
            for st in &ds.stations {
                for v in 0..N_VARS {
                    let x = st.values[h][v];
                    s_sum[v] += x;
                    s_sumsq[v] += x * x;
                }
                s_n += 1.0;
            }
            if let Some(g) = grid {
                for cell in 0..g.n_cells() {
                    for v in 0..N_VARS {
                        let x = g.value(h, cell, v);
                        g_sum[v] += x;
                        g_sumsq[v] += x * x;
                    }
                    g_n += 1.0;
                }
            }
        }

        let (station_mean, station_std) = finalize(s_sum, s_sumsq, s_n, "station")?;
        let (grid_mean, grid_std) = if grid.is_some() {
            let (m, s) = finalize(g_sum, g_sumsq, g_n, "grid")?;
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        Ok(Self {
            station_mean,
            station_std,
            grid_mean,
            grid_std,
        })
    }

    pub fn normalize_station(&self, var: usize, x: f64) -> f64 {
        (x - self.station_mean[var]) / self.station_std[var]
    }

    pub fn denormalize_station(&self, var: usize, z: f64) -> f64 {
        z * self.station_std[var] + self.station_mean[var]
    }

    pub fn normalize_grid(&self, var: usize, x: f64) -> f64 {
        let (m, s) = self.grid_params(var);
        (x - m) / s
    }

    fn grid_params(&self, var: usize) -> (f64, f64) {
        match (&self.grid_mean, &self.grid_std) {
            (Some(m), Some(s)) => (m[var], s[var]),
            _ => panic!("grid normalization requested but no grid statistics computed"),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
