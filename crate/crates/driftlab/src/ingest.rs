//! CSV streams and schedule sidecars.
//!
//! A stream file is UTF-8, comma-separated, with a header row. One column
//! holds the label; every other column is a numeric feature. Row order is
//! time order. A schedule sidecar lists known drift points, one
//! `real <t>` or `virtual <t>` per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use driftlab_core::stream::{LabeledInstance, StreamDataset};
use driftlab_core::synth::{DriftKind, DriftSchedule, SynthKind};
use driftlab_core::{Target, Task};

use crate::error::{io_err, Error, Result};

pub const DEFAULT_LABEL_COLUMN: &str = "target";

/// Load a stream. Classification labels are mapped to dense indices in order
/// of first appearance.
pub fn load_csv(path: &Path, task: Task, label_column: &str) -> Result<StreamDataset> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let header = reader.headers().map_err(csv_err)?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: label_column.to_string(),
        })?;

    let mut classes: HashMap<String, usize> = HashMap::new();
    let mut instances = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let bad = |column: usize, reason: String| Error::BadCell {
            path: path.to_path_buf(),
            row,
            column: header.get(column).unwrap_or("?").to_string(),
            reason,
        };
        let mut x = Vec::with_capacity(header.len().saturating_sub(1));
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            x.push(parse_finite(cell).map_err(|r| bad(c, r))?);
        }
        let label = record.get(label_idx).unwrap_or_default();
        let y = match task {
            Task::Regression => Target::Real(parse_finite(label).map_err(|r| bad(label_idx, r))?),
            Task::Classification => {
                if label.is_empty() {
                    return Err(bad(label_idx, "empty label".into()));
                }
                let next = classes.len();
                Target::Class(*classes.entry(label.to_string()).or_insert(next))
            }
        };
        instances.push(LabeledInstance {
            x,
            y,
            t: i,
            segment_id: 0,
        });
    }
    if instances.is_empty() {
        return Err(Error::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    let name = path.file_stem().map_or_else(
        || "stream".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    let n_classes = (task == Task::Classification).then_some(classes.len());
    Ok(StreamDataset::new(name, task, instances, n_classes)?)
}

fn parse_finite(cell: &str) -> std::result::Result<f64, String> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("non-finite value {v}")),
        Err(_) => Err(format!("not a number: {cell:?}")),
    }
}

/// Column names used when materializing a synthetic stream.
pub fn synth_columns(kind: SynthKind) -> Vec<String> {
    match kind {
        SynthKind::Friedman => (1..=10).map(|i| format!("x{i}")).collect(),
        SynthKind::Mixed => ["b1", "b2", "d1", "d2", "d3", "d4"]
            .map(String::from)
            .to_vec(),
    }
}

/// Write a dataset with the given feature names and a `target` column.
pub fn write_csv(ds: &StreamDataset, columns: &[String], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(
        columns
            .iter()
            .map(String::as_str)
            .chain([DEFAULT_LABEL_COLUMN]),
    )
    .map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(columns.len() + 1);
    for inst in ds.instances() {
        row.clear();
        row.extend(inst.x.iter().map(|v| v.to_string()));
        row.push(match inst.y {
            Target::Real(v) => v.to_string(),
            Target::Class(c) => c.to_string(),
        });
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_schedule(schedule: &DriftSchedule, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (t, kind) in schedule.events() {
        let tag = match kind {
            DriftKind::Real => "real",
            DriftKind::Virtual => "virtual",
        };
        writeln!(w, "{tag} {t}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Known drift points from a sidecar: `(real, virtual)`, each sorted.
/// Blank lines and `#` comments are skipped.
pub fn read_schedule(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut real = Vec::new();
    let mut virt = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Schedule {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let mut parts = line.split_whitespace();
        let (Some(kind), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(format!(
                "expected `<real|virtual> <index>`, got {line:?}"
            )));
        };
        let t: usize = t.parse().map_err(|_| bad(format!("bad index {t:?}")))?;
        match kind {
            "real" => real.push(t),
            "virtual" => virt.push(t),
            other => return Err(bad(format!("unknown drift kind {other:?}"))),
        }
    }
    real.sort_unstable();
    virt.sort_unstable();
    Ok((real, virt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn regression_rows_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "f1,f2,target\n1,2,3\n4,5,6\n7,8,9.5\n");
        let ds = load_csv(&p, Task::Regression, "target").unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.get(2).x, vec![7.0, 8.0]);
        assert_eq!(ds.get(2).y, Target::Real(9.5));
        assert_eq!(ds.name(), "r");
    }

    #[test]
    fn labels_by_first_appearance() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "label,a\ncat,1\ndog,2\ncat,3\n");
        let ds = load_csv(&p, Task::Classification, "label").unwrap();
        let ys: Vec<_> = ds
            .instances()
            .iter()
            .map(|i| i.y.as_class().unwrap())
            .collect();
        assert_eq!(ys, vec![0, 1, 0]);
        assert_eq!(ds.n_classes(), Some(2));
        assert_eq!(ds.get(0).x, vec![1.0]);
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.csv", "f1,f2,target\n1,2,3\n4,NaN,6\n");
        let err = load_csv(&p, Task::Regression, "target")
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 2") && err.contains("\"f2\""), "{err}");
        let p = write(dir.path(), "s.csv", "f1,target\nabc,1\n");
        let err = load_csv(&p, Task::Regression, "target")
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 1") && err.contains("\"f1\""), "{err}");
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_csv(&dir.path().join("missing.csv"), Task::Regression, "target"),
            Err(Error::Io { .. })
        ));
        let p = write(dir.path(), "h.csv", "a,b\n1,2\n");
        assert!(matches!(
            load_csv(&p, Task::Regression, "target"),
            Err(Error::MissingColumn { .. })
        ));
        let p = write(dir.path(), "e.csv", "a,target\n");
        assert!(matches!(
            load_csv(&p, Task::Regression, "target"),
            Err(Error::EmptyDataset { .. })
        ));
        let p = write(dir.path(), "l.csv", "a,target\n1,x\n");
        assert!(matches!(
            load_csv(&p, Task::Regression, "target"),
            Err(Error::BadCell { row: 1, .. })
        ));
    }

    #[test]
    fn synth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sched = DriftSchedule::new(vec![300], vec![600], 1_000, 4).unwrap();
        let ds = driftlab_core::synth::synth_dataset(
            SynthKind::Friedman,
            &sched,
            &Default::default(),
            &Default::default(),
        );
        let p = dir.path().join("f.csv");
        write_csv(&ds, &synth_columns(SynthKind::Friedman), &p).unwrap();
        let back = load_csv(&p, Task::Regression, DEFAULT_LABEL_COLUMN).unwrap();
        for (a, b) in ds.instances().iter().zip(back.instances()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
        let sp = dir.path().join("f.schedule");
        write_schedule(&sched, &sp).unwrap();
        assert_eq!(fs::read_to_string(&sp).unwrap(), "real 300\nvirtual 600\n");
        assert_eq!(read_schedule(&sp).unwrap(), (vec![300], vec![600]));
    }

    #[test]
    fn schedule_syntax_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.schedule",
            "# known drifts\nreal 10\n\nsideways 5\n",
        );
        let err = read_schedule(&p).unwrap_err().to_string();
        assert!(err.contains(":4:"), "{err}");
        let p = write(dir.path(), "b.schedule", "real ten\n");
        assert!(read_schedule(&p).is_err());
    }
}
