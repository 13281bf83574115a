//! Gridded series and the "gridpack" on-disk format: a JSON manifest next to
//! a flat little-endian f64 payload laid out `[time][cell][variable]`.

use super::{N_VARS, VAR_NAMES};
use crate::error::{Error, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridSource {
    #[serde(rename = "ERA5")]
    Era5,
    #[serde(rename = "HRRR-A")]
    HrrrA,
    #[serde(rename = "HRRR-F")]
    HrrrF,
}

impl GridSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "era5" => Ok(GridSource::Era5),
            "hrrr-a" | "hrrr_a" | "hrrra" => Ok(GridSource::HrrrA),
            "hrrr-f" | "hrrr_f" | "hrrrf" => Ok(GridSource::HrrrF),
            other => Err(Error::Validation(format!("unknown grid source {other:?}"))),
        }
    }

    /// Filesystem-friendly name used for store files.
    pub fn slug(&self) -> &'static str {
        match self {
            GridSource::Era5 => "era5",
            GridSource::HrrrA => "hrrr_a",
            GridSource::HrrrF => "hrrr_f",
        }
    }

    /// Hours of forecast available past the anchor; HRRR-F forecasts are
    /// truncated to 18 hours.
    pub fn forecast_horizon(&self) -> Option<u32> {
        match self {
            GridSource::HrrrF => Some(18),
            _ => None,
        }
    }
}

impl std::fmt::Display for GridSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridSource::Era5 => write!(f, "ERA5"),
            GridSource::HrrrA => write!(f, "HRRR-A"),
            GridSource::HrrrF => write!(f, "HRRR-F"),
        }
    }
}

/// Hourly fields on a regular lat/lon mesh, cells row-major over
/// (lat index, lon index).
#[derive(Clone, Debug)]
pub struct GridSeries {
    pub source: GridSource,
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    pub start: DateTime<Utc>,
    /// `[time][cell][variable]`, length = n_steps * n_cells * 4.
    pub values: Vec<f64>,
    /// HRRR-F only: hours since issuance for the value stored at each step.
    pub lead_of_issue: Option<Vec<u32>>,
}

impl GridSeries {
    pub fn n_cells(&self) -> usize {
        self.lats.len() * self.lons.len()
    }

    pub fn n_steps(&self) -> usize {
        let per_step = self.n_cells() * N_VARS;
        if per_step == 0 {
            0
        } else {
            self.values.len() / per_step
        }
    }

    pub fn value(&self, step: usize, cell: usize, var: usize) -> f64 {
        self.values[(step * self.n_cells() + cell) * N_VARS + var]
    }

    pub fn cell_latlon(&self, cell: usize) -> (f64, f64) {
        let n_lon = self.lons.len();
        (self.lats[cell / n_lon], self.lons[cell % n_lon])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lats.is_empty() || self.lons.is_empty() {
            return Err(Error::Data("gridpack: empty mesh axis".into()));
        }
        for axis in [&self.lats, &self.lons] {
            if axis.len() > 1 {
                let d0 = axis[1] - axis[0];
                if d0 == 0.0 {
                    return Err(Error::Data("gridpack: zero mesh spacing".into()));
                }
                for w in axis.windows(2) {
                    let d = w[1] - w[0];
                    if ((d - d0) / d0).abs() > 1e-9 {
                        return Err(Error::Data(
                            "gridpack: mesh spacing is not uniform".into(),
                        ));
                    }
                }
            }
        }
        if self.values.len() != self.n_steps() * self.n_cells() * N_VARS
            || self.values.is_empty()
        {
            return Err(Error::Data(format!(
                "gridpack: payload length {} does not tile steps x cells x vars",
                self.values.len()
            )));
        }
        match (&self.lead_of_issue, self.source) {
            (Some(l), GridSource::HrrrF) => {
                if l.len() != self.n_steps() {
                    return Err(Error::Data(format!(
                        "gridpack: lead_of_issue length {} != {} steps",
                        l.len(),
                        self.n_steps()
                    )));
                }
            }
            (None, GridSource::HrrrF) => {
                return Err(Error::Data(
                    "gridpack: HRRR-F requires per-timestamp lead_of_issue".into(),
                ))
            }
            (Some(_), _) => {
                return Err(Error::Data(format!(
                    "gridpack: lead_of_issue is only valid for HRRR-F, not {}",
                    self.source
                )))
            }
            (None, _) => {}
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GridpackManifest {
    format: String,
    source: GridSource,
    lats: Vec<f64>,
    lons: Vec<f64>,
    start: String,
    n_steps: usize,
    variables: Vec<String>,
    payload: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    lead_of_issue: Option<Vec<u32>>,
}

fn payload_path(manifest_path: &Path, payload: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(payload)
}

pub fn write_gridpack(grid: &GridSeries, manifest_path: &Path) -> Result<()> {
    grid.validate()?;
    let payload_name = manifest_path
        .with_extension("bin")
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Validation("gridpack path has no file name".into()))?;
    let manifest = GridpackManifest {
        format: "gridpack-v1".into(),
        source: grid.source,
        lats: grid.lats.clone(),
        lons: grid.lons.clone(),
        start: grid.start.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        n_steps: grid.n_steps(),
        variables: VAR_NAMES.iter().map(|s| s.to_string()).collect(),
        payload: payload_name.clone(),
        lead_of_issue: grid.lead_of_issue.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(manifest_path, json.as_bytes())?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(payload_path(
        manifest_path,
        &payload_name,
    ))?);
    for v in &grid.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gridpack(manifest_path: &Path) -> Result<GridSeries> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: GridpackManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("bad gridpack manifest {}: {e}", manifest_path.display())))?;
    if manifest.format != "gridpack-v1" {
        return Err(Error::Data(format!(
            "unsupported gridpack format {:?}",
            manifest.format
        )));
    }
    if manifest.variables != VAR_NAMES {
        return Err(Error::Data(format!(
            "gridpack variable order {:?} unsupported (want {:?})",
            manifest.variables, VAR_NAMES
        )));
    }
    let start = DateTime::parse_from_rfc3339(&manifest.start)
        .map_err(|e| Error::Data(format!("bad gridpack start time: {e}")))?
        .with_timezone(&Utc);

    let path = payload_path(manifest_path, &manifest.payload);
    let mut bytes = Vec::new();
    std::fs::File::open(&path)
        .map_err(|e| Error::Data(format!("cannot open payload {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    let expected = manifest.n_steps * manifest.lats.len() * manifest.lons.len() * N_VARS * 8;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "payload {} has {} bytes, expected {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let grid = GridSeries {
        source: manifest.source,
        lats: manifest.lats,
        lons: manifest.lons,
        start,
        values,
        lead_of_issue: manifest.lead_of_issue,
    };
    grid.validate()?;
    Ok(grid)
}
