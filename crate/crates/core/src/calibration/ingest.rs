//! Count CSV readers.
//!
//! Normalized files carry `day,t,count` with `t` already in `[0, 1]`. Raw files carry
//! `day,timestamp,count,sunrise,sunset` with times in seconds since midnight; each record is
//! mapped to `t = (timestamp - sunrise) / (sunset - sunrise)` and records outside the window
//! are dropped.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{BridgeError, Result};

pub const NORMALIZED_HEADER: [&str; 3] = ["day", "t", "count"];
pub const RAW_HEADER: [&str; 5] = ["day", "timestamp", "count", "sunrise", "sunset"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestMode {
    Normalized,
    Raw,
}

impl std::str::FromStr for IngestMode {
    type Err = BridgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normalized" => Ok(IngestMode::Normalized),
            "raw" => Ok(IngestMode::Raw),
            other => Err(BridgeError::InvalidConfig(format!(
                "unknown mode {other:?}, expected raw or normalized"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub day: String,
    pub t: f64,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountSeries {
    pub records: Vec<CountRecord>,
    pub n_days: usize,
}

impl CountSeries {
    /// Builds a series, enforcing the same rules as [`ingest`] (line numbers are record
    /// positions, 1-based).
    pub fn from_records(records: Vec<CountRecord>) -> Result<Self> {
        let path = Path::new("<memory>");
        let mut series = Builder::default();
        for (i, rec) in records.into_iter().enumerate() {
            series.push(path, i as u64 + 1, rec)?;
        }
        series.finish(path)
    }
}

#[derive(Default)]
struct Builder {
    records: Vec<CountRecord>,
    last_t: HashMap<String, f64>,
}

impl Builder {
    fn push(&mut self, path: &Path, line: u64, rec: CountRecord) -> Result<()> {
        let bad = |message: String| BridgeError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if !(0.0..=1.0).contains(&rec.t) {
            return Err(bad(format!("t = {} outside [0, 1]", rec.t)));
        }
        if !rec.count.is_finite() || rec.count < 0.0 {
            return Err(bad(format!(
                "count must be finite and nonnegative, got {}",
                rec.count
            )));
        }
        if let Some(&prev) = self.last_t.get(&rec.day) {
            if rec.t <= prev {
                return Err(BridgeError::NonMonotoneTime { day: rec.day, line });
            }
        }
        self.last_t.insert(rec.day.clone(), rec.t);
        self.records.push(rec);
        Ok(())
    }

    fn finish(self, path: &Path) -> Result<CountSeries> {
        if self.records.is_empty() {
            return Err(BridgeError::EmptyInput(path.to_path_buf()));
        }
        Ok(CountSeries {
            n_days: self.last_t.len(),
            records: self.records,
        })
    }
}

pub fn ingest(path: &Path, mode: IngestMode) -> Result<CountSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let expected: &[&str] = match mode {
        IngestMode::Normalized => &NORMALIZED_HEADER,
        IngestMode::Raw => &RAW_HEADER,
    };
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(BridgeError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                header
            ),
        });
    }
    let mut series = Builder::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| BridgeError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("{}: not a number: {:?}", expected[i], &row[i])))
        };
        let day = row[0].to_string();
        let rec = match mode {
            IngestMode::Normalized => CountRecord {
                day,
                t: num(1)?,
                count: num(2)?,
            },
            IngestMode::Raw => {
                let seconds = |i: usize| -> Result<f64> {
                    row[i].parse::<i64>().map(|v| v as f64).map_err(|_| {
                        bad(format!(
                            "{}: not integer seconds: {:?}",
                            expected[i], &row[i]
                        ))
                    })
                };
                let (ts, sunrise, sunset) = (seconds(1)?, seconds(3)?, seconds(4)?);
                if sunset <= sunrise {
                    return Err(bad(format!("sunset {sunset} not after sunrise {sunrise}")));
                }
                let t = (ts - sunrise) / (sunset - sunrise);
                if !(0.0..=1.0).contains(&t) {
                    continue;
                }
                CountRecord {
                    day,
                    t,
                    count: num(2)?,
                }
            }
        };
        series.push(path, line, rec)?;
    }
    series.finish(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn normalized_row_counting() {
        let mut text = String::from("day,t,count\n");
        for d in 0..3 {
            for k in 0..87 {
                text += &format!("d{d},{},{}\n", k as f64 / 86.0, k % 5);
            }
        }
        let f = file(&text);
        let s = ingest(f.path(), IngestMode::Normalized).unwrap();
        assert_eq!(s.n_days, 3);
        assert_eq!(s.records.len(), 261);
    }

    #[test]
    fn out_of_range_t_is_a_parse_error_with_line() {
        let f = file("day,t,count\na,0.1,1\na,1.2,1\n");
        match ingest(f.path(), IngestMode::Normalized) {
            Err(BridgeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_and_negative_count() {
        let f = file("day,t,count\na,x,1\n");
        assert!(matches!(
            ingest(f.path(), IngestMode::Normalized),
            Err(BridgeError::Parse { line: 2, .. })
        ));
        let f = file("day,t,count\na,0.5,-1\n");
        assert!(matches!(
            ingest(f.path(), IngestMode::Normalized),
            Err(BridgeError::Parse { .. })
        ));
    }

    #[test]
    fn header_and_empty_checks() {
        let f = file("day,time,count\n");
        assert!(matches!(
            ingest(f.path(), IngestMode::Normalized),
            Err(BridgeError::Parse { line: 1, .. })
        ));
        let f = file("day,t,count\n");
        assert!(matches!(
            ingest(f.path(), IngestMode::Normalized),
            Err(BridgeError::EmptyInput(_))
        ));
    }

    #[test]
    fn non_monotone_day_is_rejected() {
        let f = file("day,t,count\na,0.5,1\nb,0.1,1\na,0.5,2\n");
        match ingest(f.path(), IngestMode::Normalized) {
            Err(BridgeError::NonMonotoneTime { day, line }) => {
                assert_eq!(day, "a");
                assert_eq!(line, 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn raw_mode_maps_and_drops() {
        let f = file(
            "day,timestamp,count,sunrise,sunset\n\
             x,18000,5,21600,64800\n\
             x,21600,0,21600,64800\n\
             x,43200,7,21600,64800\n\
             x,70000,3,21600,64800\n",
        );
        let s = ingest(f.path(), IngestMode::Raw).unwrap();
        assert_eq!(s.records.len(), 2);
        assert_eq!(s.records[0].t, 0.0);
        assert_eq!(s.records[1].t, 0.5);
        assert_eq!(s.records[1].count, 7.0);
        let f = file("day,timestamp,count,sunrise,sunset\nx,100,1,200,100\n");
        assert!(ingest(f.path(), IngestMode::Raw).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("raw".parse::<IngestMode>().unwrap(), IngestMode::Raw);
        assert_eq!(
            "Normalized".parse::<IngestMode>().unwrap(),
            IngestMode::Normalized
        );
        assert!("cooked".parse::<IngestMode>().is_err());
    }
}
