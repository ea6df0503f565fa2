use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{global_metrics, median, EvalResult};
use crate::error::{Error, Result};

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Dataset(format!("{}: {e}", path.display()))
}

/// Writes per-track rows `track,source,sdr,sir,sar,nsdr,length_samples`.
pub fn write_report(path: impl AsRef<Path>, results: &[EvalResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in results {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<EvalResult>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))
}

/// Aggregates of one source over all evaluated tracks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub source: String,
    pub tracks: usize,
    pub median_sdr: f64,
    pub median_sir: f64,
    pub median_sar: f64,
    pub median_nsdr: f64,
    pub gnsdr: f64,
    pub gsir: f64,
    pub gsar: f64,
}

/// Per-source medians and length-weighted means, sources in order of first
/// appearance.
pub fn summarize(results: &[EvalResult]) -> Result<Vec<SourceSummary>> {
    let mut sources: Vec<&str> = Vec::new();
    for r in results {
        if !sources.contains(&r.source.as_str()) {
            sources.push(&r.source);
        }
    }
    sources
        .into_iter()
        .map(|source| {
            let rows: Vec<EvalResult> = results.iter().filter(|r| r.source == source).cloned().collect();
            let col = |f: fn(&EvalResult) -> f64| rows.iter().map(f).collect::<Vec<_>>();
            let g = global_metrics(&rows)?;
            Ok(SourceSummary {
                source: source.to_string(),
                tracks: rows.len(),
                median_sdr: median(&col(|r| r.sdr))?,
                median_sir: median(&col(|r| r.sir))?,
                median_sar: median(&col(|r| r.sar))?,
                median_nsdr: median(&col(|r| r.nsdr))?,
                gnsdr: g.gnsdr,
                gsir: g.gsir,
                gsar: g.gsar,
            })
        })
        .collect()
}

pub fn write_summary(path: impl AsRef<Path>, summary: &[SourceSummary]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for s in summary {
        w.serialize(s).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(track: &str, source: &str, sdr: f64, len: usize) -> EvalResult {
        EvalResult {
            track: track.into(),
            source: source.into(),
            sdr,
            sir: sdr + 1.0,
            sar: sdr + 2.0,
            nsdr: sdr - 1.0,
            length_samples: len,
        }
    }

    #[test]
    fn report_round_trip_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row("a, with comma", "voice", 1.0, 100),
            row("a, with comma", "accompaniment", 2.0, 100),
            row("b", "voice", 5.0, 300),
            row("b", "accompaniment", 6.0, 300),
        ];
        let path = dir.path().join("r.csv");
        write_report(&path, &rows).unwrap();
        assert_eq!(read_report(&path).unwrap(), rows);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("track,source,sdr,sir,sar,nsdr,length_samples\n"));

        let s = summarize(&rows).unwrap();
        assert_eq!(s[0].source, "voice");
        assert_eq!(s[0].median_sdr, 3.0);
        assert_eq!(s[0].gnsdr, (0.0 * 100.0 + 4.0 * 300.0) / 400.0);
        write_summary(dir.path().join("s.csv"), &s).unwrap();
    }
}
