//! CSV formats for measures, paths and sampled fields.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use flowldp_core::metrics::DiscreteMeasure;
use flowldp_core::pathmaps::PiecewiseLinearPath;
use flowldp_core::rates::Field;
use serde::Deserialize;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
}

/// Numeric table with named columns.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = reader(path)?;
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|v| v.parse::<f64>().with_context(|| format!("{}: row {}: {v:?} is not a number", path.display(), line + 1)))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        ensure!(!rows.is_empty(), "{} has no rows", path.display());
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column {name:?} (have {:?})", self.headers))
    }
}

#[derive(Deserialize)]
struct Atom {
    position: f64,
    mass: f64,
}

/// Columns `position, mass`.
pub fn read_measure(path: &Path) -> Result<DiscreteMeasure<f64>> {
    let atoms = reader(path)?
        .deserialize()
        .map(|a| a.map(|a: Atom| (a.position, a.mass)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("reading measure {}", path.display()))?;
    Ok(DiscreteMeasure::from_atoms(atoms)?)
}

/// Columns `t, <coordinate>...`, one row per grid time.
pub fn read_path(path: &Path) -> Result<PiecewiseLinearPath<f64>> {
    let table = Table::read(path)?;
    let t = table.column("t")?;
    ensure!(table.headers.len() >= 2, "{} needs at least one coordinate column", path.display());
    let times = table.rows.iter().map(|r| r[t]).collect();
    let values = table
        .rows
        .iter()
        .flat_map(|r| r.iter().enumerate().filter(|(c, _)| *c != t).map(|(_, &v)| v))
        .collect();
    Ok(PiecewiseLinearPath::new(table.headers.len() - 1, times, values)?)
}

pub fn write_path(path: &Path, f: &PiecewiseLinearPath<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..f.dim()).map(|c| format!("x{c}")));
    w.write_record(&header)?;
    for (j, t) in f.times().iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(f.point(j).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `u, h`: one spatial profile.
pub fn read_profile(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let table = Table::read(path)?;
    let (u, h) = (table.column("u")?, table.column("h")?);
    Ok(table.rows.iter().map(|r| (r[u], r[h])).unzip())
}

/// Long format `u, t, h` covering a full `space × times` grid.
pub fn read_field(path: &Path) -> Result<Field<f64>> {
    let table = Table::read(path)?;
    let (u, t, h) = (table.column("u")?, table.column("t")?, table.column("h")?);
    let mut grid: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let key = |x: f64| {
        // order-preserving bit key for finite floats
        let b = x.to_bits();
        if x.is_sign_negative() {
            !b
        } else {
            b | (1 << 63)
        }
    };
    let mut space: Vec<f64> = table.rows.iter().map(|r| r[u]).collect();
    let mut times: Vec<f64> = table.rows.iter().map(|r| r[t]).collect();
    for v in space.iter().chain(&times) {
        ensure!(v.is_finite(), "non-finite grid coordinate {v}");
    }
    space.sort_by(f64::total_cmp);
    space.dedup();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for r in &table.rows {
        if grid.insert((key(r[t]), key(r[u])), r[h]).is_some() {
            bail!("duplicate sample at u = {}, t = {}", r[u], r[t]);
        }
    }
    ensure!(
        grid.len() == space.len() * times.len(),
        "field has {} samples but the grid is {} × {}",
        grid.len(),
        space.len(),
        times.len()
    );
    let values = grid.into_values().collect();
    Ok(Field::new(space, times, values)?)
}
