//! Synthetic multi-modal weather: a smooth large-scale truth field, noisy
//! locally-transformed station observations of it, a smoothed/offset gridded
//! analog (ERA5 role), and a forecast analog whose error grows with lead
//! (HRRR-F role). The generator is a pure function of (config, seed); the
//! truth grid is tagged HRRR-A so the full pipeline runs unchanged.

use crate::data::{GridSeries, GridSource, QcFlag, StationSeries, N_VARS};
use crate::error::{Error, Result};
use chrono::{TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationPlacement {
    Random,
    /// Stations sit exactly on distinct mesh cell centers; with identity
    /// local operators and zero noise, interpolation becomes exact.
    CellCenters,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_stations: usize,
    pub mesh_lat: usize,
    pub mesh_lon: usize,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    /// Consecutive calendar years to generate.
    pub years: Vec<i32>,
    pub station_placement: StationPlacement,

    pub wind_base: (f64, f64),
    pub temp_base: f64,
    pub spread_base: f64,
    pub spread_min: f64,

    /// Leading wave amplitude per field (u, v, temperature, spread);
    /// wave m gets amplitude / (m + 1).
    pub wave_amplitude: [f64; N_VARS],
    pub n_waves: usize,
    pub wave_period_hours: (f64, f64),
    pub wave_length_deg: (f64, f64),

    /// Stationary std of the global AR(1) component per field.
    pub ar_std: [f64; N_VARS],
    pub ar_coeff: f64,

    pub atten_range: (f64, f64),
    pub rotation_max_deg: f64,
    pub diurnal_amp_range: (f64, f64),
    pub dew_offset_range: (f64, f64),
    pub obs_noise_std: f64,

    pub grid_bias_offset: [f64; 3],
    pub grid_smooth_radius_deg: f64,

    pub forecast_noise_per_hour: f64,
    pub forecast_issue_period: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_stations: 60,
            mesh_lat: 12,
            mesh_lon: 12,
            lat_min: 41.0,
            lat_max: 45.0,
            lon_min: -74.0,
            lon_max: -69.0,
            years: vec![2019, 2020, 2021, 2022],
            station_placement: StationPlacement::Random,
            wind_base: (1.5, 0.5),
            temp_base: 10.0,
            spread_base: 3.0,
            spread_min: 0.5,
            wave_amplitude: [2.2, 2.2, 5.0, 1.0],
            n_waves: 3,
            wave_period_hours: (96.0, 168.0),
            wave_length_deg: (4.0, 9.0),
            ar_std: [0.8, 0.8, 1.5, 0.4],
            ar_coeff: 0.98,
            atten_range: (0.35, 0.75),
            rotation_max_deg: 40.0,
            diurnal_amp_range: (0.5, 1.5),
            dew_offset_range: (-0.4, 0.4),
            obs_noise_std: 0.25,
            grid_bias_offset: [0.6, 0.4, 0.8],
            grid_smooth_radius_deg: 0.5,
            forecast_noise_per_hour: 0.10,
            forecast_issue_period: 18,
        }
    }
}

impl SynthConfig {
    /// Exactness preset: stations on cell centers, identity local operators,
    /// no observation noise, no grid bias.
    pub fn identity(n_stations: usize, mesh: usize, years: Vec<i32>, seed: u64) -> Self {
        Self {
            seed,
            n_stations,
            mesh_lat: mesh,
            mesh_lon: mesh,
            years,
            station_placement: StationPlacement::CellCenters,
            atten_range: (1.0, 1.0),
            rotation_max_deg: 0.0,
            diurnal_amp_range: (0.0, 0.0),
            dew_offset_range: (0.0, 0.0),
            obs_noise_std: 0.0,
            grid_bias_offset: [0.0, 0.0, 0.0],
            grid_smooth_radius_deg: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stations < 3 {
            return Err(Error::Config("need at least 3 stations".into()));
        }
        if self.mesh_lat < 2 || self.mesh_lon < 2 {
            return Err(Error::Config("mesh must be at least 2x2".into()));
        }
        if self.years.is_empty() {
            return Err(Error::Config("years must be non-empty".into()));
        }
        for w in self.years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::Config("years must be consecutive".into()));
            }
        }
        if self.station_placement == StationPlacement::CellCenters
            && self.n_stations > self.mesh_lat * self.mesh_lon
        {
            return Err(Error::Config(
                "more stations than mesh cells under cell_centers placement".into(),
            ));
        }
        if !(self.ar_coeff.abs() < 1.0) {
            return Err(Error::Config("ar_coeff must satisfy |phi| < 1".into()));
        }
        if self.forecast_issue_period == 0 {
            return Err(Error::Config("forecast_issue_period must be positive".into()));
        }
        Ok(())
    }

    pub fn n_hours(&self) -> usize {
        let first = Utc
            .with_ymd_and_hms(self.years[0], 1, 1, 0, 0, 0)
            .unwrap();
        let end = Utc
            .with_ymd_and_hms(self.years[self.years.len() - 1] + 1, 1, 1, 0, 0, 0)
            .unwrap();
        (end - first).num_hours() as usize
    }
}

/// Fixed per-station observation operator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocalOp {
    pub atten: f64,
    pub rotation_rad: f64,
    pub diurnal_amp: f64,
    pub diurnal_phase: f64,
    pub dew_offset: f64,
}

pub struct SynthOutput {
    pub stations: Vec<StationSeries>,
    /// Truth on the mesh, tagged HRRR-A.
    pub truth: GridSeries,
    /// Smoothed + offset truth, tagged ERA5.
    pub biased: GridSeries,
    /// Truth + lead-growing noise, tagged HRRR-F.
    pub forecast: GridSeries,
    pub station_ops: Vec<LocalOp>,
    /// Analytic stationary std of each field (u, v, temperature, spread).
    pub field_std: [f64; N_VARS],
    pub config: SynthConfig,
}

struct Wave {
    amp: f64,
    kx: f64,
    ky: f64,
    omega: f64,
    phase: f64,
}

struct Fields {
    waves: Vec<Vec<Wave>>,      // per field
    ar: Vec<Vec<f64>>,          // per field, per hour
    base: [f64; N_VARS],
    spread_min: f64,
}

impl Fields {
    /// Raw field value (spread clipping applied by callers that need it).
    fn eval(&self, field: usize, lon: f64, lat: f64, t: usize) -> f64 {
        let mut x = self.base[field] + self.ar[field][t];
        for w in &self.waves[field] {
            x += w.amp * (w.kx * lon + w.ky * lat - w.omega * t as f64 + w.phase).sin();
        }
        x
    }

    fn eval_spread(&self, lon: f64, lat: f64, t: usize) -> f64 {
        self.eval(3, lon, lat, t).max(self.spread_min)
    }
}

fn sub_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    // splitmix-style mixing so per-purpose streams are independent
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn uniform_in(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

fn draw_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random_range(0.0..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let n_hours = config.n_hours();
    let start = Utc
        .with_ymd_and_hms(config.years[0], 1, 1, 0, 0, 0)
        .unwrap();
    let lats = linspace(config.lat_min, config.lat_max, config.mesh_lat);
    let lons = linspace(config.lon_min, config.lon_max, config.mesh_lon);
    let n_cells = config.mesh_lat * config.mesh_lon;

    // large-scale process
    let mut rng = sub_rng(config.seed, 1);
    let mut waves = Vec::with_capacity(N_VARS);
    for field in 0..N_VARS {
        let mut fw = Vec::with_capacity(config.n_waves);
        for m in 0..config.n_waves {
            let dir = rng.random_range(0.0..std::f64::consts::TAU);
            let wavelength = uniform_in(&mut rng, config.wave_length_deg);
            let period = uniform_in(&mut rng, config.wave_period_hours);
            let k = std::f64::consts::TAU / wavelength;
            fw.push(Wave {
                amp: config.wave_amplitude[field] / (m as f64 + 1.0),
                kx: k * dir.cos(),
                ky: k * dir.sin(),
                omega: std::f64::consts::TAU / period,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            });
        }
        waves.push(fw);
    }
    let mut rng = sub_rng(config.seed, 2);
    let mut ar = Vec::with_capacity(N_VARS);
    for field in 0..N_VARS {
        let sigma = config.ar_std[field];
        let innov = sigma * (1.0 - config.ar_coeff * config.ar_coeff).sqrt();
        let mut series = Vec::with_capacity(n_hours);
        let mut x = if sigma > 0.0 { sigma * draw_normal(&mut rng) } else { 0.0 };
        series.push(x);
        for _ in 1..n_hours {
            x = config.ar_coeff * x
                + if sigma > 0.0 { innov * draw_normal(&mut rng) } else { 0.0 };
            series.push(x);
        }
        ar.push(series);
    }
    let fields = Fields {
        waves,
        ar,
        base: [
            config.wind_base.0,
            config.wind_base.1,
            config.temp_base,
            config.spread_base,
        ],
        spread_min: config.spread_min,
    };
    let mut field_std = [0.0; N_VARS];
    for f in 0..N_VARS {
        let wave_var: f64 = fields.waves[f].iter().map(|w| w.amp * w.amp / 2.0).sum();
        field_std[f] = (wave_var + config.ar_std[f] * config.ar_std[f]).sqrt();
    }

    // stations: placement and local operators
    let mut rng = sub_rng(config.seed, 3);
    let coords: Vec<(f64, f64)> = match config.station_placement {
        StationPlacement::Random => (0..config.n_stations)
            .map(|_| {
                (
                    rng.random_range(config.lat_min..config.lat_max),
                    rng.random_range(config.lon_min..config.lon_max),
                )
            })
            .collect(),
        StationPlacement::CellCenters => {
            let mut cells: Vec<usize> = (0..n_cells).collect();
            use rand::seq::SliceRandom;
            cells.shuffle(&mut rng);
            cells[..config.n_stations]
                .iter()
                .map(|&c| (lats[c / config.mesh_lon], lons[c % config.mesh_lon]))
                .collect()
        }
    };
    let station_ops: Vec<LocalOp> = (0..config.n_stations)
        .map(|_| LocalOp {
            atten: uniform_in(&mut rng, config.atten_range),
            rotation_rad: uniform_in(
                &mut rng,
                (-config.rotation_max_deg, config.rotation_max_deg),
            )
            .to_radians(),
            diurnal_amp: uniform_in(&mut rng, config.diurnal_amp_range),
            diurnal_phase: rng.random_range(0.0..std::f64::consts::TAU),
            dew_offset: uniform_in(&mut rng, config.dew_offset_range),
        })
        .collect();

    let mut stations = Vec::with_capacity(config.n_stations);
    for (i, (&(lat, lon), op)) in coords.iter().zip(&station_ops).enumerate() {
        let mut noise_rng = sub_rng(config.seed, 100 + i as u64);
        let mut values = Vec::with_capacity(n_hours);
        let mut flags = Vec::with_capacity(n_hours);
        for t in 0..n_hours {
            let u = fields.eval(0, lon, lat, t);
            let v = fields.eval(1, lon, lat, t);
            let temp = fields.eval(2, lon, lat, t);
            let spread = fields.eval_spread(lon, lat, t);

            let (cos_r, sin_r) = (op.rotation_rad.cos(), op.rotation_rad.sin());
            let mut su = op.atten * (cos_r * u - sin_r * v);
            let mut sv = op.atten * (sin_r * u + cos_r * v);
            let mut st = temp
                + op.diurnal_amp
                    * (std::f64::consts::TAU * (t % 24) as f64 / 24.0 + op.diurnal_phase).sin();
            let station_spread = (spread + op.dew_offset).max(config.spread_min);
            let mut sd = st - station_spread;
            if config.obs_noise_std > 0.0 {
                su += config.obs_noise_std * draw_normal(&mut noise_rng);
                sv += config.obs_noise_std * draw_normal(&mut noise_rng);
                st += config.obs_noise_std * draw_normal(&mut noise_rng);
                sd += config.obs_noise_std * draw_normal(&mut noise_rng);
                sd = sd.min(st);
            }
            values.push([su, sv, st, sd]);
            flags.push(if (t + i) % 7 == 0 {
                QcFlag::Verified
            } else {
                QcFlag::Screened
            });
        }
        stations.push(StationSeries {
            station_id: format!("SYN{i:03}"),
            lat,
            lon,
            start,
            values,
            flags,
        });
    }

    // truth grid (HRRR-A role)
    let mut truth_values = Vec::with_capacity(n_hours * n_cells * N_VARS);
    for t in 0..n_hours {
        for c in 0..n_cells {
            let (lat, lon) = (lats[c / config.mesh_lon], lons[c % config.mesh_lon]);
            let temp = fields.eval(2, lon, lat, t);
            truth_values.push(fields.eval(0, lon, lat, t));
            truth_values.push(fields.eval(1, lon, lat, t));
            truth_values.push(temp);
            truth_values.push(temp - fields.eval_spread(lon, lat, t));
        }
    }
    let truth = GridSeries {
        source: GridSource::HrrrA,
        lats: lats.clone(),
        lons: lons.clone(),
        start,
        values: truth_values,
        lead_of_issue: None,
    };

    // biased grid (ERA5 role): 5-point analytic smoothing plus offsets
    let r = config.grid_smooth_radius_deg;
    let stencil = [(0.0, 0.0), (r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r)];
    let smooth = |field: usize, lon: f64, lat: f64, t: usize| -> f64 {
        stencil
            .iter()
            .map(|(dx, dy)| fields.eval(field, lon + dx, lat + dy, t))
            .sum::<f64>()
            / stencil.len() as f64
    };
    let smooth_spread = |lon: f64, lat: f64, t: usize| -> f64 {
        stencil
            .iter()
            .map(|(dx, dy)| fields.eval_spread(lon + dx, lat + dy, t))
            .sum::<f64>()
            / stencil.len() as f64
    };
    let mut biased_values = Vec::with_capacity(n_hours * n_cells * N_VARS);
    for t in 0..n_hours {
        for c in 0..n_cells {
            let (lat, lon) = (lats[c / config.mesh_lon], lons[c % config.mesh_lon]);
            let bt = smooth(2, lon, lat, t) + config.grid_bias_offset[2];
            biased_values.push(smooth(0, lon, lat, t) + config.grid_bias_offset[0]);
            biased_values.push(smooth(1, lon, lat, t) + config.grid_bias_offset[1]);
            biased_values.push(bt);
            biased_values.push(bt - smooth_spread(lon, lat, t));
        }
    }
    let biased = GridSeries {
        source: GridSource::Era5,
        lats: lats.clone(),
        lons: lons.clone(),
        start,
        values: biased_values,
        lead_of_issue: None,
    };

    // forecast grid (HRRR-F role): truth + noise growing with lead of issue
    let mut rng = sub_rng(config.seed, 4);
    let mut forecast_values = Vec::with_capacity(n_hours * n_cells * N_VARS);
    let mut lead_meta = Vec::with_capacity(n_hours);
    for t in 0..n_hours {
        let lead = (t as u32) % config.forecast_issue_period;
        lead_meta.push(lead);
        let sigma = config.forecast_noise_per_hour * lead as f64;
        for c in 0..n_cells {
            for v in 0..N_VARS {
                let base = truth.value(t, c, v);
                forecast_values.push(if sigma > 0.0 {
                    base + sigma * draw_normal(&mut rng)
                } else {
                    base
                });
            }
        }
    }
    let forecast = GridSeries {
        source: GridSource::HrrrF,
        lats,
        lons,
        start,
        values: forecast_values,
        lead_of_issue: Some(lead_meta),
    };

    Ok(SynthOutput {
        stations,
        truth,
        biased,
        forecast,
        station_ops,
        field_std,
        config: config.clone(),
    })
}

impl SynthOutput {
    /// Closed-form correlation between grid truth sampled at a station and
    /// the station observation, per variable (u, v, temperature). Derived
    /// from the variance budget of the generating process.
    pub fn expected_correlation(&self, station: usize) -> [f64; 3] {
        let op = &self.station_ops[station];
        let noise2 = self.config.obs_noise_std * self.config.obs_noise_std;
        let (su2, sv2) = (
            self.field_std[0] * self.field_std[0],
            self.field_std[1] * self.field_std[1],
        );
        let (c2, s2) = (
            op.rotation_rad.cos() * op.rotation_rad.cos(),
            op.rotation_rad.sin() * op.rotation_rad.sin(),
        );
        let a2 = op.atten * op.atten;
        let rho_u = (op.atten * op.rotation_rad.cos() * su2)
            / (su2.sqrt() * (a2 * (c2 * su2 + s2 * sv2) + noise2).sqrt());
        let rho_v = (op.atten * op.rotation_rad.cos() * sv2)
            / (sv2.sqrt() * (a2 * (s2 * su2 + c2 * sv2) + noise2).sqrt());
        let st2 = self.field_std[2] * self.field_std[2];
        let rho_t = st2 / (st2.sqrt() * (st2 + op.diurnal_amp * op.diurnal_amp / 2.0 + noise2).sqrt());
        [rho_u, rho_v, rho_t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry;

    fn short_config() -> SynthConfig {
        SynthConfig {
            n_stations: 10,
            mesh_lat: 8,
            mesh_lon: 8,
            years: vec![2021],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn determinism_same_config_same_bytes() {
        let cfg = SynthConfig {
            years: vec![2021],
            n_stations: 5,
            mesh_lat: 4,
            mesh_lon: 4,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        for (sa, sb) in a.stations.iter().zip(&b.stations) {
            assert_eq!(sa.station_id, sb.station_id);
            assert!(sa
                .values
                .iter()
                .flatten()
                .zip(sb.values.iter().flatten())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for (ga, gb) in [(&a.truth, &b.truth), (&a.biased, &b.biased), (&a.forecast, &b.forecast)] {
            assert!(ga
                .values
                .iter()
                .zip(&gb.values)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn identity_config_makes_interpolation_exact() {
        let cfg = SynthConfig::identity(8, 6, vec![2021], 7);
        let out = generate(&cfg).unwrap();
        let mean_lat = out.stations.iter().map(|s| s.lat).sum::<f64>() / 8.0;
        let cells: Vec<_> = (0..out.truth.n_cells())
            .map(|c| {
                let (lat, lon) = out.truth.cell_latlon(c);
                geometry::project(lat, lon, mean_lat)
            })
            .collect();
        for s in &out.stations {
            let cell =
                geometry::nearest_cell(geometry::project(s.lat, s.lon, mean_lat), &cells).unwrap();
            for t in (0..s.len()).step_by(97) {
                for v in 0..N_VARS {
                    assert_eq!(
                        s.values[t][v].to_bits(),
                        out.truth.value(t, cell, v).to_bits(),
                        "station {} hour {t} var {v}",
                        s.station_id
                    );
                }
            }
        }
    }

    #[test]
    fn half_attenuation_halves_interpolation_wind_error() {
        let cfg = SynthConfig {
            atten_range: (0.5, 0.5),
            rotation_max_deg: 0.0,
            obs_noise_std: 0.0,
            dew_offset_range: (0.0, 0.0),
            diurnal_amp_range: (0.0, 0.0),
            station_placement: StationPlacement::CellCenters,
            n_stations: 8,
            mesh_lat: 6,
            mesh_lon: 6,
            years: vec![2021],
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        let mean_lat = out.stations.iter().map(|s| s.lat).sum::<f64>() / 8.0;
        let cells: Vec<_> = (0..out.truth.n_cells())
            .map(|c| {
                let (lat, lon) = out.truth.cell_latlon(c);
                geometry::project(lat, lon, mean_lat)
            })
            .collect();
        let mut err_sum = 0.0;
        let mut half_mag_sum = 0.0;
        let mut n = 0.0;
        for s in &out.stations {
            let cell =
                geometry::nearest_cell(geometry::project(s.lat, s.lon, mean_lat), &cells).unwrap();
            for t in 0..1000 {
                let gu = out.truth.value(t, cell, 0);
                let gv = out.truth.value(t, cell, 1);
                let du = gu - s.values[t][0];
                let dv = gv - s.values[t][1];
                err_sum += (du * du + dv * dv).sqrt();
                half_mag_sum += 0.5 * (gu * gu + gv * gv).sqrt();
                n += 1.0;
            }
        }
        assert_eq!(err_sum / n, half_mag_sum / n);
    }

    #[test]
    fn measured_correlation_matches_closed_form() {
        let cfg = short_config();
        let out = generate(&cfg).unwrap();
        let mean_lat = out.stations.iter().map(|s| s.lat).sum::<f64>() / 10.0;
        let cells: Vec<_> = (0..out.truth.n_cells())
            .map(|c| {
                let (lat, lon) = out.truth.cell_latlon(c);
                geometry::project(lat, lon, mean_lat)
            })
            .collect();
        let pearson = |a: &[f64], b: &[f64]| -> f64 {
            let n = a.len() as f64;
            let (ma, mb) = (
                a.iter().sum::<f64>() / n,
                b.iter().sum::<f64>() / n,
            );
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
            let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
            let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
            cov / (va.sqrt() * vb.sqrt())
        };
        for (i, s) in out.stations.iter().enumerate() {
            let cell =
                geometry::nearest_cell(geometry::project(s.lat, s.lon, mean_lat), &cells).unwrap();
            let expected = out.expected_correlation(i);
            for v in 0..3 {
                let sv: Vec<f64> = s.values.iter().map(|x| x[v]).collect();
                let gv: Vec<f64> = (0..s.len()).map(|t| out.truth.value(t, cell, v)).collect();
                let got = pearson(&sv, &gv);
                assert!(
                    (got - expected[v]).abs() < 0.05,
                    "station {i} var {v}: measured {got:.3} vs expected {:.3}",
                    expected[v]
                );
            }
        }
    }

    #[test]
    fn persistence_error_grows_with_lead_up_to_half_period() {
        let out = generate(&short_config()).unwrap();
        // mean wind-vector persistence error per lead, over a strided year
        let lead_ladder = [1usize, 2, 4, 8, 12, 18, 24, 36, 48];
        let mut errs = Vec::new();
        for &l in &lead_ladder {
            let mut sum = 0.0;
            let mut n = 0.0;
            for s in &out.stations {
                for t in (0..s.len() - l).step_by(5) {
                    let du = s.values[t + l][0] - s.values[t][0];
                    let dv = s.values[t + l][1] - s.values[t][1];
                    sum += (du * du + dv * dv).sqrt();
                    n += 1.0;
                }
            }
            errs.push(sum / n);
        }
        for w in errs.windows(2) {
            assert!(w[1] > w[0], "persistence errors not monotone: {errs:?}");
        }
    }

    #[test]
    fn dewpoint_never_exceeds_temperature() {
        let out = generate(&short_config()).unwrap();
        for s in &out.stations {
            for v in &s.values {
                assert!(v[3] <= v[2]);
            }
        }
        for t in (0..out.truth.n_steps()).step_by(53) {
            for c in 0..out.truth.n_cells() {
                assert!(out.truth.value(t, c, 3) <= out.truth.value(t, c, 2));
            }
        }
    }

    #[test]
    fn forecast_noise_grows_with_lead() {
        let out = generate(&short_config()).unwrap();
        let leads = out.forecast.lead_of_issue.as_ref().unwrap();
        let mut err_by_lead = vec![(0.0, 0.0); 18];
        for t in 0..out.forecast.n_steps() {
            let l = leads[t] as usize;
            for c in 0..out.forecast.n_cells() {
                let d = out.forecast.value(t, c, 0) - out.truth.value(t, c, 0);
                err_by_lead[l].0 += d * d;
                err_by_lead[l].1 += 1.0;
            }
        }
        let rmse_0 = (err_by_lead[0].0 / err_by_lead[0].1).sqrt();
        let rmse_17 = (err_by_lead[17].0 / err_by_lead[17].1).sqrt();
        assert_eq!(rmse_0, 0.0);
        assert!((rmse_17 - 0.10 * 17.0).abs() < 0.05);
    }
}
