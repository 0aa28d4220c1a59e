//! CSV tables. Floats use shortest round-trip formatting; missing cells are
//! empty.

use std::path::Path;

use super::FormatError;
use crate::operators::VoxelGrid;
use crate::training::EpochStats;

/// Column-named numeric table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row.into_iter().map(Some).collect());
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_table(path: impl AsRef<Path>, table: &Table) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| cell(*v)))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

/// `epoch, lr, loss, <metric>`; the metric column is empty where it was not
/// evaluated.
pub fn write_curve(
    path: impl AsRef<Path>,
    curve: &[EpochStats],
    metric_name: &str,
    metric: &[Option<f64>],
) -> Result<(), FormatError> {
    let mut t = Table::new(&["epoch", "lr", "loss", metric_name]);
    for (i, s) in curve.iter().enumerate() {
        t.rows.push(vec![
            Some(s.epoch as f64),
            Some(s.lr),
            Some(s.loss),
            metric.get(i).copied().flatten(),
        ]);
    }
    write_table(path, &t)
}

/// `i, j, k, value` in storage order.
pub fn write_voxels(path: impl AsRef<Path>, grid: &VoxelGrid) -> Result<(), FormatError> {
    let r = grid.resolution();
    let mut t = Table::new(&["i", "j", "k", "value"]);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                t.push(vec![i as f64, j as f64, k as f64, grid.get(i, j, k)]);
            }
        }
    }
    write_table(path, &t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_with_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let curve = [
            EpochStats { epoch: 0, lr: 0.1, loss: 2.5 },
            EpochStats { epoch: 1, lr: 0.05, loss: f64::INFINITY },
        ];
        write_curve(&p, &curve, "psnr_db", &[Some(12.0)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "epoch,lr,loss,psnr_db\n0,0.1,2.5,12\n1,0.05,inf,\n");
    }
}
