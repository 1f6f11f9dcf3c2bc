//! CSV input and output.
//!
//! Wide format: one row per trajectory with columns `<stage 1 covariates>,
//! A1, <stage 2 covariates>, A2, …, Y`. Cells of stages a trajectory never
//! reaches are empty. Floats are written in their shortest round-trip form.
//!
//! Long format: one row per person-stage with columns `id, stage,
//! <covariates>, A, Y`. Covariate `X` at stage `j` becomes column `Xj` of
//! the dataset, so long column `L` yields `L1`, `L2`, ….

use std::collections::HashMap;
use std::path::Path;

use crate::data::{Dataset, Schema, StageRecord, Trajectory};
use crate::error::{DtrError, Result};

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| DtrError::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    std::fs::write(path.as_ref(), text).map_err(|e| DtrError::io(path, e))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn parse_f64(cell: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| DtrError::Data(format!("row {row}, column {col}: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(DtrError::Data(format!("row {row}, column {col}: non-finite value")));
    }
    Ok(v)
}

fn parse_action(cell: &str, row: usize, col: &str) -> Result<u8> {
    match cell {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        _ => Err(DtrError::Data(format!("row {row}, column {col}: action `{cell}` is not 0 or 1"))),
    }
}

fn action_index(name: &str) -> Option<usize> {
    name.strip_prefix('A')
        .filter(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|r| r.parse().ok())
}

/// Schema implied by a wide header.
pub fn schema_from_header(header: &[String]) -> Result<Schema> {
    if header.last().map(String::as_str) != Some("Y") {
        return Err(DtrError::Data("the last column must be the outcome `Y`".into()));
    }
    let mut stages = Vec::new();
    let mut current = Vec::new();
    for name in &header[..header.len() - 1] {
        match action_index(name) {
            Some(j) => {
                if j != stages.len() + 1 {
                    return Err(DtrError::Data(format!(
                        "action column {name} out of order; expected A{}",
                        stages.len() + 1
                    )));
                }
                stages.push(std::mem::take(&mut current));
            }
            None => current.push(name.clone()),
        }
    }
    if !current.is_empty() {
        return Err(DtrError::Data(format!(
            "covariate columns {current:?} follow the last action column"
        )));
    }
    if stages.is_empty() {
        return Err(DtrError::Data("no action columns A1, A2, … in header".into()));
    }
    Schema::new(stages)
}

pub fn read_wide(text: &str) -> Result<Dataset> {
    let mut rdr = csv_reader(text);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let schema = schema_from_header(&header)?;
    let dims = schema.stage_dims();
    let mut trajectories = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 2;
        if rec.len() != header.len() {
            return Err(DtrError::Data(format!(
                "row {row} has {} cells, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let mut pos = 0;
        let mut records = Vec::new();
        let mut ended = false;
        for (j, &d) in dims.iter().enumerate() {
            let cells: Vec<&str> = (pos..pos + d + 1).map(|c| &rec[c]).collect();
            let empty = cells.iter().all(|c| c.is_empty());
            if ended || empty {
                if !empty {
                    return Err(DtrError::Data(format!(
                        "row {row}: stage {} has values after an earlier stage ended",
                        j + 1
                    )));
                }
                ended = true;
                pos += d + 1;
                continue;
            }
            let mut cov = Vec::with_capacity(d);
            for (k, cell) in cells[..d].iter().enumerate() {
                if cell.is_empty() {
                    return Err(DtrError::Data(format!("row {row}: missing {}", header[pos + k])));
                }
                cov.push(parse_f64(cell, row, &header[pos + k])?);
            }
            let a = parse_action(cells[d], row, &header[pos + d])?;
            records.push(StageRecord::new(cov, a));
            pos += d + 1;
        }
        let y = parse_f64(&rec[header.len() - 1], row, "Y")?;
        trajectories.push(Trajectory::new(records, y).map_err(|e| DtrError::Data(format!("row {row}: {e}")))?);
    }
    Dataset::new(schema, trajectories)
}

pub fn write_wide(data: &Dataset) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(data.schema().wide_header())?;
    let dims = data.schema().stage_dims();
    for t in data.trajectories() {
        let mut row = Vec::new();
        for (j, &d) in dims.iter().enumerate() {
            if j < t.stage_count() {
                row.extend(t.covariates(j + 1).iter().map(f64::to_string));
                row.push(t.action(j + 1).to_string());
            } else {
                row.extend(std::iter::repeat_n(String::new(), d + 1));
            }
        }
        row.push(t.outcome().to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| DtrError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| DtrError::Data(e.to_string()))
}

/// `(stage, covariates, action, outcome cell)` of one long row.
type LongRow = (usize, Vec<f64>, u8, Option<f64>);

pub fn read_long(text: &str) -> Result<Dataset> {
    let mut rdr = csv_reader(text);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(id_c), Some(stage_c), Some(a_c), Some(y_c)) = (col("id"), col("stage"), col("A"), col("Y")) else {
        return Err(DtrError::Data("long format needs columns id, stage, A and Y".into()));
    };
    let cov_cols: Vec<usize> = (0..header.len())
        .filter(|c| ![id_c, stage_c, a_c, y_c].contains(c))
        .collect();
    // rows grouped by id in order of first appearance
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<LongRow>> = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 2;
        let id = rec[id_c].to_string();
        let stage: usize = rec[stage_c]
            .parse()
            .map_err(|_| DtrError::Data(format!("row {row}: stage `{}` is not a positive integer", &rec[stage_c])))?;
        let cov = cov_cols
            .iter()
            .map(|&c| parse_f64(&rec[c], row, &header[c]))
            .collect::<Result<Vec<_>>>()?;
        let a = parse_action(&rec[a_c], row, "A")?;
        let y = if rec[y_c].is_empty() { None } else { Some(parse_f64(&rec[y_c], row, "Y")?) };
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push((stage, cov, a, y));
    }
    let mut k = 0;
    let mut trajectories = Vec::with_capacity(order.len());
    for id in &order {
        let mut rows = groups.remove(id).unwrap_or_default();
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i + 1) {
            return Err(DtrError::Data(format!("id {id}: stages must run 1, 2, … without gaps")));
        }
        let y = rows
            .last()
            .and_then(|r| r.3)
            .ok_or_else(|| DtrError::Data(format!("id {id}: missing Y on the last stage row")))?;
        k = k.max(rows.len());
        let records = rows.into_iter().map(|(_, cov, a, _)| StageRecord::new(cov, a)).collect();
        trajectories.push(Trajectory::new(records, y)?);
    }
    let names: Vec<&String> = cov_cols.iter().map(|&c| &header[c]).collect();
    let schema = Schema::new(
        (1..=k)
            .map(|j| names.iter().map(|n| format!("{n}{j}")).collect())
            .collect(),
    )?;
    Dataset::new(schema, trajectories)
}

pub fn load_dataset(path: impl AsRef<Path>, long: bool) -> Result<Dataset> {
    let text = read_text(path)?;
    if long {
        read_long(&text)
    } else {
        read_wide(&text)
    }
}
