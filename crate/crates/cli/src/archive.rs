//! On-disk formats: series archives, long-format stacks and coordinates,
//! basis and fit manifests.

use crate::error::{CliError, CliResult};
use fase::{Basis, Coords, Series, SplineBasis, Stack};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const INDICES_FILE: &str = "indices.csv";
pub const META_FILE: &str = "meta.json";
pub const TRUTH_DIR: &str = "truth";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const COORDS_FILE: &str = "coords.csv";
pub const BASIS_FILE: &str = "basis.json";

/// Full-precision float text (17 significant digits).
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, path: &Path) -> CliResult<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| CliError::data(format!("{}: bad number '{field}'", path.display()), e))
}

fn parse_usize(field: &str, path: &Path) -> CliResult<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|e| CliError::data(format!("{}: bad integer '{field}'", path.display()), e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::data(format!("writing {}", path.display()), e))
}

fn reader(path: &Path, has_headers: bool) -> CliResult<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("opening {}", path.display()), e))
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::data(format!("creating {}", path.display()), e))
}

fn records(path: &Path, has_headers: bool) -> CliResult<Vec<csv::StringRecord>> {
    reader(path, has_headers)?
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::data(format!("reading {}", path.display()), e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = writer(path)?;
    let err = |e: csv::Error| CliError::data(format!("writing {}", path.display()), e);
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::data(format!("writing {}", path.display()), e))
}

/// Archive manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Meta {
    pub n: usize,
    pub m: usize,
    pub symmetric: bool,
    pub masked: bool,
    #[serde(default)]
    pub generator: Option<Generator>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Generator {
    pub scenario: String,
    pub d: usize,
    pub sigma: f64,
    pub density: f64,
    pub cycles: f64,
    pub seed: u64,
}

fn snapshot_name(prefix: &str, k: usize, m: usize) -> String {
    let width = m.to_string().len();
    format!("{prefix}_{k:0width$}.csv")
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> CliResult<()> {
    let mut text = String::with_capacity(a.nrows() * a.ncols() * 24);
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| fmt(a[(i, j)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let rows = records(path, false)?;
    let n = rows.len();
    let mut a = DMatrix::zeros(n, n);
    for (i, rec) in rows.iter().enumerate() {
        if rec.len() != n {
            return Err(CliError::Data(format!(
                "{}: row {} has {} entries, expected {n}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            a[(i, j)] = parse_f64(field, path)?;
        }
    }
    Ok(a)
}

pub fn write_series(dir: &Path, series: &Series, generator: Option<Generator>) -> CliResult<()> {
    ensure_dir(dir)?;
    let mut idx = String::from("x\n");
    for &x in series.indices() {
        idx.push_str(&fmt(x));
        idx.push('\n');
    }
    write_text(&dir.join(INDICES_FILE), &idx)?;
    let m = series.m();
    for (k, a) in series.snapshots().iter().enumerate() {
        write_matrix(&dir.join(snapshot_name("snapshot", k + 1, m)), a)?;
    }
    if let Some(masks) = series.masks() {
        for (k, mask) in masks.iter().enumerate() {
            write_matrix(&dir.join(snapshot_name("mask", k + 1, m)), &mask.map(|b| if b { 1.0 } else { 0.0 }))?;
        }
    }
    let meta = Meta {
        n: series.n(),
        m,
        symmetric: true,
        masked: series.masks().is_some(),
        generator,
    };
    write_json(&dir.join(META_FILE), &meta)
}

pub fn read_series(dir: &Path) -> CliResult<Series> {
    let idx_path = dir.join(INDICES_FILE);
    let indices = records(&idx_path, true)?
        .iter()
        .map(|r| parse_f64(r.get(0).unwrap_or(""), &idx_path))
        .collect::<CliResult<Vec<f64>>>()?;
    let m = indices.len();
    if m == 0 {
        return Err(CliError::Data(format!("{} lists no indices", idx_path.display())));
    }
    let meta: Option<Meta> = read_json_optional(&dir.join(META_FILE))?;
    if let Some(meta) = &meta {
        if meta.m != m {
            return Err(CliError::Data(format!("manifest says m = {}, indices.csv has {m}", meta.m)));
        }
    }
    let mut snapshots = Vec::with_capacity(m);
    let mut masks = Vec::new();
    for k in 1..=m {
        let path = dir.join(snapshot_name("snapshot", k, m));
        if !path.exists() {
            return Err(CliError::Data(format!("missing {}", path.display())));
        }
        snapshots.push(read_matrix(&path)?);
        let mask_path = dir.join(snapshot_name("mask", k, m));
        if mask_path.exists() {
            masks.push(read_matrix(&mask_path)?.map(|v| v != 0.0));
        }
    }
    if let Some(meta) = &meta {
        if snapshots[0].nrows() != meta.n {
            return Err(CliError::Data(format!(
                "manifest says n = {}, snapshots are {}x{}",
                meta.n,
                snapshots[0].nrows(),
                snapshots[0].nrows()
            )));
        }
    }
    let series = Series::new(indices, snapshots)?;
    if masks.is_empty() {
        Ok(series)
    } else if masks.len() != m {
        Err(CliError::Data(format!("found {} mask files for {m} snapshots", masks.len())))
    } else {
        Ok(series.with_masks(masks)?)
    }
}

pub fn write_stack(path: &Path, stack: &Stack) -> CliResult<()> {
    let rows = stack.slices().iter().enumerate().flat_map(|(k, z)| {
        (0..z.nrows()).flat_map(move |i| {
            (0..z.ncols()).map(move |r| vec![(i + 1).to_string(), (k + 1).to_string(), (r + 1).to_string(), fmt(z[(i, r)])])
        })
    });
    write_rows(path, &["node", "snapshot", "dim", "value"], rows)
}

/// Reads a `(row, slice, col, value)` long table into a list of dense slices.
fn read_long(path: &Path, columns: [&str; 4]) -> CliResult<Vec<DMatrix<f64>>> {
    let mut rdr = reader(path, true)?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::data(format!("reading {}", path.display()), e))?
        .clone();
    let expected: Vec<&str> = columns.to_vec();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::Data(format!(
            "{}: header must be {}",
            path.display(),
            expected.join(",")
        )));
    }
    let mut entries = Vec::new();
    let (mut rows, mut slices, mut cols) = (0, 0, 0);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(format!("reading {}", path.display()), e))?;
        if rec.len() != 4 {
            return Err(CliError::Data(format!("{}: expected 4 fields per row", path.display())));
        }
        let a = parse_usize(&rec[0], path)?;
        let b = parse_usize(&rec[1], path)?;
        let c = parse_usize(&rec[2], path)?;
        if a == 0 || b == 0 || c == 0 {
            return Err(CliError::Data(format!("{}: positions are 1-based", path.display())));
        }
        let v = parse_f64(&rec[3], path)?;
        rows = rows.max(a);
        slices = slices.max(b);
        cols = cols.max(c);
        entries.push((a - 1, b - 1, c - 1, v));
    }
    if entries.len() != rows * slices * cols || entries.is_empty() {
        return Err(CliError::Data(format!(
            "{}: {} rows do not fill a {rows} x {slices} x {cols} table",
            path.display(),
            entries.len()
        )));
    }
    let mut out = vec![DMatrix::from_element(rows, cols, f64::NAN); slices];
    for (a, b, c, v) in entries {
        out[b][(a, c)] = v;
    }
    if out.iter().any(|s| s.iter().any(|v| v.is_nan())) {
        return Err(CliError::Data(format!("{}: duplicate or missing entries", path.display())));
    }
    Ok(out)
}

pub fn read_stack(path: &Path) -> CliResult<Stack> {
    Ok(Stack::new(read_long(path, ["node", "snapshot", "dim", "value"])?)?)
}

pub fn write_coords(path: &Path, coords: &Coords) -> CliResult<()> {
    let (n, q, d) = coords.dims();
    let rows = (0..n).flat_map(move |i| {
        (0..q).flat_map(move |j| (0..d).map(move |r| (i, j, r)))
    });
    let rows = rows.map(|(i, j, r)| {
        vec![(i + 1).to_string(), (j + 1).to_string(), (r + 1).to_string(), fmt(coords.get(i, j, r))]
    });
    write_rows(path, &["node", "basis", "dim", "value"], rows)
}

pub fn read_coords(path: &Path) -> CliResult<Coords> {
    // long table indexed (node, basis, dim); regroup into per-dim n × q slices
    let by_basis = read_long(path, ["node", "basis", "dim", "value"])?;
    let (n, d, q) = (by_basis[0].nrows(), by_basis[0].ncols(), by_basis.len());
    Ok(Coords::from_fn(n, q, d, |i, j, r| by_basis[j][(i, r)]))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BasisFile {
    pub order: usize,
    pub q: usize,
    pub lo: f64,
    pub hi: f64,
    pub interior_knots: Vec<f64>,
    pub knots: Vec<f64>,
}

pub fn write_basis(path: &Path, basis: &Basis) -> CliResult<()> {
    let (lo, hi) = basis.domain();
    write_json(
        path,
        &BasisFile {
            order: basis.order(),
            q: basis.q(),
            lo,
            hi,
            interior_knots: basis.interior_knots().to_vec(),
            knots: basis.knots().to_vec(),
        },
    )
}

pub fn read_basis(path: &Path) -> CliResult<Basis> {
    let file: BasisFile = read_json(path)?;
    let basis = SplineBasis::new(file.order, file.interior_knots, file.lo, file.hi)?;
    if basis.q() != file.q {
        return Err(CliError::Data(format!("{}: q = {} does not match its knots", path.display(), file.q)));
    }
    Ok(basis)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data("serializing", e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<D> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("parsing {}", path.display()), e))
}

fn read_json_optional<D: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Option<D>> {
    if path.exists() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

/// `DIR/trajectories.csv`, falling back to `DIR/truth/trajectories.csv` for
/// simulated archives.
pub fn trajectories_in(dir: &Path) -> PathBuf {
    let direct = dir.join(TRAJECTORIES_FILE);
    if direct.exists() {
        direct
    } else {
        dir.join(TRUTH_DIR).join(TRAJECTORIES_FILE)
    }
}
