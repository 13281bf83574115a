//! Station CSV ingestion and canonical emission.
//!
//! Header `station_id,lat,lon,timestamp,u,v,temperature,dewpoint,qc_flag`
//! with ISO-8601 UTC timestamps; files carrying `speed,direction` instead of
//! `u,v` are converted on read. Hours absent from the file (or rows flagged
//! Missing with empty value fields) become Missing slots on the common
//! hourly axis spanning all stations in the file set.

use super::station::{wind_components, QcFlag, StationSeries};
use super::N_VARS;
use crate::error::{Error, Result};
use chrono::{DateTime, Duration, Timelike, Utc};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

const CANONICAL_HEADER: [&str; 9] = [
    "station_id",
    "lat",
    "lon",
    "timestamp",
    "u",
    "v",
    "temperature",
    "dewpoint",
    "qc_flag",
];

struct RawRow {
    lat: f64,
    lon: f64,
    time: DateTime<Utc>,
    values: [f64; N_VARS],
    flag: QcFlag,
    line: u64,
}

fn parse_time(s: &str, line: u64) -> Result<DateTime<Utc>> {
    let t = DateTime::parse_from_rfc3339(s)
        .map_err(|e| Error::Data(format!("line {line}: bad timestamp {s:?}: {e}")))?
        .with_timezone(&Utc);
    if t.minute() != 0 || t.second() != 0 || t.nanosecond() != 0 {
        return Err(Error::Data(format!(
            "line {line}: timestamp {s:?} is not on a whole hour"
        )));
    }
    Ok(t)
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("line {line}: bad {what} value {s:?}")))
}

/// Read one or more station CSV files and align every station onto the
/// common hourly axis covering the union of their spans.
pub fn read_station_csv(paths: &[&Path]) -> Result<Vec<StationSeries>> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<RawRow>> = HashMap::new();

    for path in paths {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(false)
            .from_path(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let wind_uv = headers.len() >= 6 && headers[4] == "u" && headers[5] == "v";
        let wind_sd = headers.len() >= 6 && headers[4] == "speed" && headers[5] == "direction";
        let expected_rest = ["station_id", "lat", "lon", "timestamp"];
        if headers.len() != 9
            || headers[..4] != expected_rest
            || !(wind_uv || wind_sd)
            || headers[6] != "temperature"
            || headers[7] != "dewpoint"
            || headers[8] != "qc_flag"
        {
            return Err(Error::Data(format!(
                "{}: unexpected header {:?}",
                path.display(),
                headers.join(",")
            )));
        }

        for record in reader.records() {
            let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 9 {
                return Err(Error::Data(format!(
                    "line {line}: expected 9 fields, got {}",
                    record.len()
                )));
            }
            let id = record[0].trim().to_string();
            if id.is_empty() {
                return Err(Error::Data(format!("line {line}: empty station_id")));
            }
            let lat = parse_f64(&record[1], "lat", line)?;
            let lon = parse_f64(&record[2], "lon", line)?;
            let time = parse_time(record[3].trim(), line)?;
            let flag = QcFlag::parse(record[8].trim())
                .map_err(|e| Error::Data(format!("line {line}: {e}")))?;

            let values = if flag == QcFlag::Missing {
                [f64::NAN; N_VARS]
            } else {
                let (u, v) = if wind_uv {
                    (
                        parse_f64(&record[4], "u", line)?,
                        parse_f64(&record[5], "v", line)?,
                    )
                } else {
                    let speed = parse_f64(&record[4], "speed", line)?;
                    let dir = parse_f64(&record[5], "direction", line)?;
                    wind_components(speed, dir)
                        .map_err(|e| Error::Data(format!("line {line}: {e}")))?
                };
                [
                    u,
                    v,
                    parse_f64(&record[6], "temperature", line)?,
                    parse_f64(&record[7], "dewpoint", line)?,
                ]
            };
            if !rows.contains_key(&id) {
                order.push(id.clone());
            }
            rows.entry(id).or_default().push(RawRow {
                lat,
                lon,
                time,
                values,
                flag,
                line,
            });
        }
    }

    if order.is_empty() {
        return Err(Error::Data("no station rows found".into()));
    }

    let start = rows
        .values()
        .flat_map(|r| r.iter().map(|x| x.time))
        .min()
        .unwrap();
    let end = rows
        .values()
        .flat_map(|r| r.iter().map(|x| x.time))
        .max()
        .unwrap();
    let n_hours = (end - start).num_hours() as usize + 1;

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut station_rows = rows.remove(&id).unwrap();
        station_rows.sort_by_key(|r| r.time);
        let (lat, lon) = (station_rows[0].lat, station_rows[0].lon);
        for r in &station_rows {
            if r.lat != lat || r.lon != lon {
                return Err(Error::Data(format!(
                    "line {}: station {id} changes coordinates",
                    r.line
                )));
            }
        }
        let mut values = vec![[f64::NAN; N_VARS]; n_hours];
        let mut flags = vec![QcFlag::Missing; n_hours];
        let mut last: Option<DateTime<Utc>> = None;
        for r in station_rows {
            if last == Some(r.time) {
                return Err(Error::Data(format!(
                    "line {}: duplicate timestamp {} for station {id}",
                    r.line, r.time
                )));
            }
            last = Some(r.time);
            let idx = (r.time - start).num_hours() as usize;
            values[idx] = r.values;
            flags[idx] = r.flag;
        }
        out.push(StationSeries {
            station_id: id,
            lat,
            lon,
            start,
            values,
            flags,
        });
    }
    Ok(out)
}

/// Emit the canonical station CSV (u/v form, one row per hour, shortest
/// round-trip float formatting). Reading it back and re-writing reproduces
/// the bytes exactly.
pub fn write_station_csv(stations: &[StationSeries], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", CANONICAL_HEADER.join(","))?;
    for s in stations {
        for (i, (vals, flag)) in s.values.iter().zip(&s.flags).enumerate() {
            let t = s.start + Duration::hours(i as i64);
            if *flag == QcFlag::Missing {
                writeln!(
                    w,
                    "{},{},{},{},,,,,Missing",
                    s.station_id,
                    s.lat,
                    s.lon,
                    t.format("%Y-%m-%dT%H:%M:%SZ")
                )?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    s.station_id,
                    s.lat,
                    s.lon,
                    t.format("%Y-%m-%dT%H:%M:%SZ"),
                    vals[0],
                    vals[1],
                    vals[2],
                    vals[3],
                    flag.as_str()
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn reads_uv_and_aligns_missing_hours() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(
            &p,
            "station_id,lat,lon,timestamp,u,v,temperature,dewpoint,qc_flag\n\
             A,43.0,-72.0,2021-01-01T00:00:00Z,1.0,2.0,3.0,1.5,Screened\n\
             A,43.0,-72.0,2021-01-01T02:00:00Z,1.5,2.5,3.5,2.0,Verified\n",
        )
        .unwrap();
        let stations = read_station_csv(&[&p]).unwrap();
        assert_eq!(stations.len(), 1);
        let s = &stations[0];
        assert_eq!(s.len(), 3);
        assert_eq!(s.flags[1], QcFlag::Missing);
        assert!(s.values[1][0].is_nan());
        assert_eq!(s.values[2][0], 1.5);
        assert_eq!(
            s.start,
            Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap()
        );
    }

    #[test]
    fn converts_speed_direction() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(
            &p,
            "station_id,lat,lon,timestamp,speed,direction,temperature,dewpoint,qc_flag\n\
             A,43.0,-72.0,2021-01-01T00:00:00Z,1.0,180.0,3.0,1.5,Screened\n",
        )
        .unwrap();
        let stations = read_station_csv(&[&p]).unwrap();
        let v = stations[0].values[0];
        assert!(v[0].abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(
            &p,
            "station_id,lat,lon,timestamp,u,v,temperature,dewpoint,qc_flag\n\
             A,43.0,-72.0,2021-01-01T00:00:00Z,1.0,2.0,3.0,1.5,Screened\n\
             A,43.0,-72.0,2021-01-01T01:00:00Z,oops,2.0,3.0,1.5,Screened\n",
        )
        .unwrap();
        let err = read_station_csv(&[&p]).unwrap_err().to_string();
        assert!(err.contains("line 3"), "error was: {err}");
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(
            &p,
            "station_id,lat,lon,timestamp,u,v,temperature,dewpoint,qc_flag\n",
        )
        .unwrap();
        assert!(read_station_csv(&[&p]).is_err());
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(
            &p,
            "station_id,lat,lon,timestamp,u,v,temperature,dewpoint,qc_flag\n\
             A,43.0,-72.0,2021-01-01T00:00:00Z,1.0,2.0,3.0,1.5,Screened\n\
             A,43.0,-72.0,2021-01-01T00:00:00Z,1.0,2.0,3.0,1.5,Screened\n",
        )
        .unwrap();
        assert!(read_station_csv(&[&p]).is_err());
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let stations = vec![StationSeries {
            station_id: "A".into(),
            lat: 43.25,
            lon: -72.125,
            start: Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
            values: vec![
                [0.1, -0.2, 3.0, 2.5],
                [f64::NAN; 4],
                [1.0 / 3.0, 2.0, 3.5, 3.0],
            ],
            flags: vec![QcFlag::Screened, QcFlag::Missing, QcFlag::Verified],
        }];
        let p1 = dir.path().join("a.csv");
        write_station_csv(&stations, &p1).unwrap();
        let loaded = read_station_csv(&[&p1]).unwrap();
        let p2 = dir.path().join("b.csv");
        write_station_csv(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
