//! Plain-text artifacts: density grid snapshots, NDJSON event streams and CSV
//! reports. Reals are written with 17 significant digits.

use std::io::{BufRead, Write};

use crate::analysis::{ComparisonReport, DriftResidual, ObservableSeries, SegregationReport};
use crate::dynamics::EventRecord;
use crate::error::{Error, Result};
use crate::scalar::fmt17;

/// Value stored in a grid file: `eta_x` for particle snapshots, a real
/// density for heat snapshots.
pub trait GridValue: Copy {
    fn render(self) -> String;
    fn parse(s: &str) -> Option<Self>;
}

impl GridValue for i32 {
    fn render(self) -> String {
        self.to_string()
    }

    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl GridValue for f64 {
    fn render(self) -> String {
        fmt17(self)
    }

    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl GridValue for f32 {
    fn render(self) -> String {
        fmt17(self)
    }

    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

/// One snapshot on the lattice's sites.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<V> {
    pub t: f64,
    pub epsilon: f64,
    pub dim: usize,
    pub values: Vec<V>,
}

impl<V: GridValue> Grid<V> {
    /// Header lines `t`, `epsilon`, `dim`, `sites`, then `site value` rows.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t {}", fmt17(self.t))?;
        writeln!(w, "epsilon {}", fmt17(self.epsilon))?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "sites {}", self.values.len())?;
        for (x, v) in self.values.iter().enumerate() {
            writeln!(w, "{x} {}", v.render())?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut header = [0.0f64; 4];
        let mut values = Vec::new();
        let mut sites = 0usize;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if i < 4 {
                let key = ["t", "epsilon", "dim", "sites"][i];
                if parts.len() != 2 || parts[0] != key {
                    return Err(Error::parse(lineno, format!("expected `{key} <value>`")));
                }
                header[i] = parts[1].parse().map_err(|_| Error::parse(lineno, format!("bad {key}")))?;
                if i == 3 {
                    sites = parts[1].parse().map_err(|_| Error::parse(lineno, "bad site count"))?;
                    values.reserve(sites);
                }
                continue;
            }
            if parts.is_empty() {
                continue;
            }
            let index: usize = parts[0].parse().map_err(|_| Error::parse(lineno, "bad site index"))?;
            if parts.len() != 2 || index != values.len() {
                return Err(Error::parse(lineno, "expected `site value` rows in site order"));
            }
            values.push(V::parse(parts[1]).ok_or_else(|| Error::parse(lineno, "bad value"))?);
        }
        if values.len() != sites {
            return Err(Error::parse(0, format!("expected {sites} site rows, found {}", values.len())));
        }
        Ok(Grid { t: header[0], epsilon: header[1], dim: header[2] as usize, values })
    }
}

/// One JSON object per line.
pub fn write_events<W: Write>(mut w: W, events: &[EventRecord]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(r: R) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(out)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// `t, V, K, u_<mode>...` per observation.
pub fn write_series_csv<W: Write>(w: W, series: &ObservableSeries) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["t".to_string(), "v".into(), "k".into()];
    header.extend(series.modes().iter().map(|m| format!("u_{m}")));
    out.write_record(&header).map_err(csv_err)?;
    let coeffs: Vec<Vec<f64>> = series.modes().iter().map(|&m| series.coefficient(m).unwrap_or_default()).collect();
    for i in 0..series.len() {
        let mut row = vec![fmt17(series.times()[i]), fmt17(series.v()[i]), series.k()[i].to_string()];
        row.extend(coeffs.iter().map(|c| fmt17(c[i])));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_segregation_csv<W: Write>(w: W, report: &SegregationReport) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "t",
        "delta",
        "lambda_max",
        "lambda_total",
        "lambda_mean",
        "deficit",
        "deficit_from_lambda",
        "h_fraction",
        "identity_holds",
    ])
    .map_err(csv_err)?;
    for r in &report.rows {
        out.write_record([
            fmt17(r.t),
            fmt17(report.delta),
            r.lambda_max.to_string(),
            r.lambda_total.to_string(),
            fmt17(r.lambda_mean),
            fmt17(r.deficit),
            fmt17(r.deficit_from_lambda),
            fmt17(r.h_fraction),
            r.identity_holds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(w: W, report: &ComparisonReport) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["t", "delta", "distance", "normalizer", "empirical_tv"]).map_err(csv_err)?;
    for r in &report.rows {
        out.write_record([fmt17(r.t), fmt17(report.delta), fmt17(r.distance), fmt17(r.normalizer), fmt17(r.empirical_tv)])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_drift_csv<W: Write>(w: W, drift: &DriftResidual) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["t", "mode", "residual"]).map_err(csv_err)?;
    for (t, r) in drift.times.iter().zip(&drift.residual) {
        out.write_record([fmt17(*t), drift.mode.to_string(), fmt17(*r)]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::SeriesMeta;
    use crate::dynamics::{Branch, EventKind, Species};

    #[test]
    fn grid_round_trips() {
        let g = Grid { t: 0.1 + 0.2, epsilon: 1.0 / 32.0, dim: 2, values: vec![3, -1, 0, 7] };
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        assert_eq!(Grid::<i32>::read(buf.as_slice()).unwrap(), g);

        let h = Grid { t: 0.5, epsilon: 0.25, dim: 3, values: vec![1.0_f64 / 3.0, -2.5e-300, 0.0] };
        let mut buf = Vec::new();
        h.write(&mut buf).unwrap();
        let back = Grid::<f64>::read(buf.as_slice()).unwrap();
        assert!(back.values.iter().zip(&h.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn grid_rejects_missing_rows() {
        let text = "t 0\nepsilon 0.5\ndim 2\nsites 3\n0 1\n1 -1\n";
        assert!(matches!(Grid::<i32>::read(text.as_bytes()), Err(Error::Parse { .. })));
        let text = "t 0\nepsilon 0.5\ndim 2\nsites 1\n1 1\n";
        assert!(Grid::<i32>::read(text.as_bytes()).is_err());
    }

    #[test]
    fn events_round_trip() {
        let events = vec![
            EventRecord { time: 0.25, kind: EventKind::Move, species: Species::Plus, from: 1, to: 2, branch: None },
            EventRecord {
                time: 0.5,
                kind: EventKind::AnnihilateBranch,
                species: Species::Minus,
                from: 3,
                to: 2,
                branch: Some(Branch { plus_site: 4, minus_site: 5 }),
            },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 2);
        assert_eq!(read_events(buf.as_slice()).unwrap(), events);
    }

    #[test]
    fn series_csv_has_one_row_per_time() {
        let mut s = ObservableSeries::new(SeriesMeta { n: 1, epsilon: 0.5, dim: 2, sites: 2, seed: 1 }, vec![1, 2]);
        s.push(0.0, vec![1, -1], vec![0.5, -0.25], 4.0, 0);
        s.push(0.1, vec![1, -1], vec![0.5, -0.25], 4.0, 2);
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,v,k,u_1,u_2");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains(",2,"));
    }
}
