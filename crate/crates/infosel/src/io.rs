//! CSV interchange for datasets and split assignments.
//!
//! Dataset header: `sample_id,group_id,label,origin,parent_id,f0,...`. Grid
//! datasets name their feature columns `p{row}_{col}` instead, which also
//! declares the grid shape. `origin` and `parent_id` are optional on input.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use infosel_core::dataset::{
    Dataset, FeatureShape, Label, Origin, SampleRecord, Split, SplitAssignment, SplitFractions,
};

use crate::error::{Error, Result};

/// Writes `v` with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

pub(crate) fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

fn feature_columns(shape: FeatureShape) -> Vec<String> {
    match shape {
        FeatureShape::Vector { dim } => (0..dim).map(|j| format!("f{j}")).collect(),
        FeatureShape::Grid { height, width } => {
            (0..height).flat_map(|r| (0..width).map(move |c| format!("p{r}_{c}"))).collect()
        }
    }
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["sample_id", "group_id", "label", "origin", "parent_id"].map(String::from).to_vec();
    header.extend(feature_columns(dataset.shape()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in dataset.records() {
        let mut row = vec![
            r.sample_id.to_string(),
            r.group_id.to_string(),
            (r.label as u8).to_string(),
            match r.origin {
                Origin::Base => "base".into(),
                Origin::Duplicate => "duplicate".into(),
            },
            r.parent_id.map(|p| p.to_string()).unwrap_or_default(),
        ];
        row.extend(r.features.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Infers the feature layout from the header.
fn parse_shape(path: &Path, header: &csv::StringRecord) -> Result<(FeatureShape, Vec<usize>)> {
    let mut vector: Vec<(usize, usize)> = Vec::new();
    let mut grid: Vec<((usize, usize), usize)> = Vec::new();
    for (col, name) in header.iter().enumerate() {
        if let Some(j) = name.strip_prefix('f').and_then(|s| s.parse::<usize>().ok()) {
            vector.push((j, col));
        } else if let Some((r, c)) = name.strip_prefix('p').and_then(|s| s.split_once('_')) {
            if let (Ok(r), Ok(c)) = (r.parse::<usize>(), c.parse::<usize>()) {
                grid.push(((r, c), col));
            }
        }
    }
    match (vector.is_empty(), grid.is_empty()) {
        (false, true) => {
            vector.sort_unstable();
            if vector.iter().enumerate().any(|(i, (j, _))| i != *j) {
                return Err(Error::format(path, "feature columns must be f0..f{D-1} without gaps"));
            }
            Ok((FeatureShape::Vector { dim: vector.len() }, vector.into_iter().map(|(_, c)| c).collect()))
        }
        (true, false) => {
            grid.sort_unstable();
            let height = grid.iter().map(|((r, _), _)| r + 1).max().unwrap_or(0);
            let width = grid.iter().map(|((_, c), _)| c + 1).max().unwrap_or(0);
            let complete = grid.len() == height * width
                && grid.iter().enumerate().all(|(i, ((r, c), _))| (*r, *c) == (i / width, i % width));
            if !complete {
                return Err(Error::format(path, "grid columns must cover p{r}_{c} for the full rectangle"));
            }
            Ok((FeatureShape::Grid { height, width }, grid.into_iter().map(|(_, c)| c).collect()))
        }
        (true, true) => Err(Error::format(path, "no feature columns (f0.. or p0_0..)")),
        (false, false) => Err(Error::format(path, "mixes vector (f*) and grid (p*_*) feature columns")),
    }
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let required = |name: &str| col(name).ok_or_else(|| Error::format(path, format!("missing column `{name}`")));
    let (id_col, group_col, label_col) = (required("sample_id")?, required("group_id")?, required("label")?);
    let (origin_col, parent_col) = (col("origin"), col("parent_id"));
    let (shape, feature_cols) = parse_shape(path, &header)?;

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let bad = |message: String| Error::Row { path: path.to_path_buf(), row, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(bad(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let int = |c: usize, what: &str| {
            rec[c].trim().parse::<u64>().map_err(|_| bad(format!("{what} `{}` is not a non-negative integer", &rec[c])))
        };
        let sample_id = int(id_col, "sample_id")?;
        let group_id = int(group_col, "group_id")?;
        let label = rec[label_col]
            .trim()
            .parse::<i64>()
            .ok()
            .and_then(|v| Label::try_from(v).ok())
            .ok_or_else(|| bad(format!("label `{}` is not 0 or 1", &rec[label_col])))?;
        let parent_id = match parent_col.map(|c| rec[c].trim()) {
            None | Some("") => None,
            Some(_) => Some(int(parent_col.unwrap(), "parent_id")?),
        };
        let origin = match origin_col.map(|c| rec[c].trim()) {
            None | Some("") if parent_id.is_some() => Origin::Duplicate,
            None | Some("") | Some("base") => Origin::Base,
            Some("duplicate") => Origin::Duplicate,
            Some(other) => return Err(bad(format!("origin `{other}` is not base or duplicate"))),
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .map_err(|_| bad(format!("feature `{}` = `{}` is not a number", &header[c], &rec[c])))?;
            if !v.is_finite() {
                return Err(bad(format!("feature `{}` is not finite", &header[c])));
            }
            features.push(v);
        }
        records.push(SampleRecord { sample_id, group_id, label, origin, parent_id, features });
    }
    Dataset::new(shape, records).map_err(|e| Error::format(path, e))
}

pub fn save_splits(splits: &SplitAssignment, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["sample_id", "split"]).map_err(|e| csv_err(path, e))?;
    for (id, split) in splits.iter() {
        w.write_record([id.to_string(), split.name().to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_splits(path: &Path, target: SplitFractions) -> Result<SplitAssignment> {
    let mut rdr = reader(path)?;
    let mut map = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let bad = |message: String| Error::Row { path: path.to_path_buf(), row: i + 2, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let id = rec.get(0).and_then(|s| s.parse::<u64>().ok()).ok_or_else(|| bad("bad sample_id".into()))?;
        let split = Split::ALL
            .into_iter()
            .find(|s| Some(s.name()) == rec.get(1))
            .ok_or_else(|| bad(format!("unknown split `{}`", rec.get(1).unwrap_or(""))))?;
        map.insert(id, split);
    }
    Ok(SplitAssignment::from_map(map, target))
}
