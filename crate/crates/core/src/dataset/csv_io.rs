use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::MultiViewDataset;
use crate::error::{JacaError, Result};
use crate::scalar::Scalar;

struct ViewFile<T> {
    names: Vec<String>,
    rows: HashMap<String, Option<Vec<T>>>,
    order: Vec<String>,
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn read_view<T: Scalar>(path: &Path) -> Result<ViewFile<T>> {
    let file = display(path);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| JacaError::Format {
            file: file.clone(),
            reason: "missing `id` column".into(),
        })?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != id_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if names.is_empty() {
        return Err(JacaError::Format {
            file,
            reason: "no feature columns".into(),
        });
    }
    let mut rows = HashMap::new();
    let mut order = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = record.get(id_col).unwrap_or("").to_string();
        let cells: Vec<(&str, &str)> = record
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != id_col)
            .map(|(c, v)| (headers.get(c).unwrap_or(""), v))
            .collect();
        let values = if cells.iter().all(|(_, v)| v.is_empty()) {
            None
        } else {
            let parsed = cells
                .iter()
                .map(|&(column, value)| {
                    value
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(T::lit)
                        .ok_or_else(|| JacaError::Parse {
                            file: file.clone(),
                            row: line,
                            column: column.to_string(),
                            value: value.to_string(),
                        })
                })
                .collect::<Result<Vec<T>>>()?;
            Some(parsed)
        };
        if rows.insert(id.clone(), values).is_some() {
            return Err(JacaError::DuplicateId { file, id });
        }
        order.push(id);
    }
    Ok(ViewFile { names, rows, order })
}

fn read_labels(path: &Path) -> Result<HashMap<String, String>> {
    let file = display(path);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| JacaError::Format {
                file: file.clone(),
                reason: format!("missing `{name}` column"),
            })
    };
    let (id_col, label_col) = (find("id")?, find("label")?);
    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let id = record.get(id_col).unwrap_or("").to_string();
        let label = record.get(label_col).unwrap_or("").to_string();
        if out.insert(id.clone(), label).is_some() {
            return Err(JacaError::DuplicateId { file, id });
        }
    }
    Ok(out)
}

/// Loads view CSVs (an `id` column plus numeric features) and an optional
/// labels CSV (`id`, `label`), inferring the class count from the largest label.
pub fn load_views<T: Scalar, P: AsRef<Path>>(
    paths: &[P],
    labels: Option<&Path>,
) -> Result<MultiViewDataset<T>> {
    load_views_with_classes(paths, labels, None)
}

/// As [`load_views`], with an explicit class count (labels must lie in `1..=K`).
///
/// Subjects are the union of ids over the view files, in order of first
/// appearance. A subject missing from a file, or with an all-empty row, has
/// that view absent; an empty or missing label is a missing label.
pub fn load_views_with_classes<T: Scalar, P: AsRef<Path>>(
    paths: &[P],
    labels: Option<&Path>,
    n_classes: Option<usize>,
) -> Result<MultiViewDataset<T>> {
    let files = paths
        .iter()
        .map(|p| read_view::<T>(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for f in &files {
        for id in &f.order {
            if !index.contains_key(id) {
                index.insert(id.clone(), ids.len());
                ids.push(id.clone());
            }
        }
    }
    let n = ids.len();

    let mut views = Vec::with_capacity(files.len());
    let mut present = vec![Vec::with_capacity(files.len()); n];
    for f in &files {
        let mut x = DMatrix::from_element(n, f.names.len(), T::lit(f64::NAN));
        for (i, id) in ids.iter().enumerate() {
            match f.rows.get(id) {
                Some(Some(values)) => {
                    for (j, &v) in values.iter().enumerate() {
                        x[(i, j)] = v;
                    }
                    present[i].push(true);
                }
                _ => present[i].push(false),
            }
        }
        views.push(x);
    }

    let raw = match labels {
        Some(p) => read_labels(p)?,
        None => HashMap::new(),
    };
    let mut parsed = vec![None; n];
    let mut max_label = 0usize;
    for (i, id) in ids.iter().enumerate() {
        let Some(value) = raw.get(id).filter(|v| !v.is_empty()) else {
            continue;
        };
        let bound = n_classes.unwrap_or(usize::MAX);
        let label = value
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1 && k <= bound)
            .ok_or_else(|| JacaError::InvalidLabel {
                id: id.clone(),
                value: value.clone(),
                max: n_classes.unwrap_or(max_label.max(1)),
            })?;
        max_label = max_label.max(label);
        parsed[i] = Some(label - 1);
    }
    let k = match n_classes {
        Some(k) => k,
        None if max_label > 0 => max_label,
        None => {
            return Err(JacaError::InvalidDataset(
                "no labels available to infer the class count".into(),
            ))
        }
    };
    MultiViewDataset::new(
        views,
        present,
        parsed,
        k,
        ids,
        files.into_iter().map(|f| f.names).collect(),
    )
}

fn fmt_value<T: Scalar>(v: T) -> String {
    format!("{}", v.as_f64())
}

/// Writes view `d` with an `id` column; absent rows are written as empty cells.
pub fn write_view<T: Scalar>(path: &Path, ds: &MultiViewDataset<T>, d: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(ds.feature_names(d).iter().cloned());
    w.write_record(&header)?;
    let x = ds.view(d);
    for i in 0..ds.n_subjects() {
        let mut rec = vec![ds.subject_ids()[i].clone()];
        if ds.is_present(i, d) {
            rec.extend(x.row(i).iter().map(|&v| fmt_value(v)));
        } else {
            rec.extend(std::iter::repeat_n(String::new(), x.ncols()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `id,label` with 1-based labels and empty cells for missing labels.
pub fn write_labels<T: Scalar>(path: &Path, ds: &MultiViewDataset<T>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "id,label")?;
    for (id, label) in ds.subject_ids().iter().zip(ds.labels()) {
        match label {
            Some(k) => writeln!(out, "{id},{}", k + 1)?,
            None => writeln!(out, "{id},")?,
        }
    }
    out.flush()?;
    Ok(())
}
