use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Per-column transformation applied at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// `100 (log x_t - log x_{t-L})` with `L` the number of periods per year.
    Yoy,
    /// `100 (x_t / x_{t-L} - 1)`.
    YoyArithmetic,
    /// `x_t - x_{t-1}`.
    Diff,
    /// `log x_t`.
    Log,
}

impl Transform {
    /// Leading observations consumed.
    pub fn lag(self, per_year: usize) -> usize {
        match self {
            Transform::None | Transform::Log => 0,
            Transform::Diff => 1,
            Transform::Yoy | Transform::YoyArithmetic => per_year,
        }
    }

    /// Transformed series, `None` where undefined or missing.
    pub fn apply(self, x: &[Option<f64>], per_year: usize) -> Vec<Option<f64>> {
        let lag = self.lag(per_year);
        let log = |v: Option<f64>| v.filter(|v| *v > 0.0).map(f64::ln);
        (lag..x.len())
            .map(|t| match self {
                Transform::None => x[t],
                Transform::Log => log(x[t]),
                Transform::Diff => Some(x[t]? - x[t - 1]?),
                Transform::Yoy => Some(100.0 * (log(x[t])? - log(x[t - lag])?)),
                Transform::YoyArithmetic => {
                    let base = x[t - lag].filter(|v| *v != 0.0)?;
                    Some(100.0 * (x[t]? / base - 1.0))
                }
            })
            .collect()
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" => Ok(Transform::None),
            "yoy" => Ok(Transform::Yoy),
            "yoy_arithmetic" | "yoy-arithmetic" => Ok(Transform::YoyArithmetic),
            "diff" => Ok(Transform::Diff),
            "log" => Ok(Transform::Log),
            other => Err(Error::Ingestion(format!("unknown transformation `{other}`"))),
        }
    }
}

/// Transformations per column name; unlisted columns use `default`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    #[serde(default)]
    pub default: Transform,
    #[serde(default)]
    pub columns: BTreeMap<String, Transform>,
}

impl PanelSpec {
    pub fn transform(&self, column: &str) -> Transform {
        self.columns.get(column).copied().unwrap_or(self.default)
    }
}

/// Regularly spaced, dated, rectangular block of series.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// `T x N`.
    pub values: DMatrix<f64>,
}

/// Months between consecutive observations.
fn months_between(a: NaiveDate, b: NaiveDate) -> i32 {
    (b.year() - a.year()) * 12 + b.month() as i32 - a.month() as i32
}

fn check_spacing(dates: &[NaiveDate]) -> Result<usize> {
    if dates.len() < 2 {
        return Err(Error::Ingestion("at least two dated rows are required".into()));
    }
    let step = months_between(dates[0], dates[1]);
    if !matches!(step, 1 | 3 | 12) {
        return Err(Error::Alignment(format!(
            "unsupported spacing of {step} months between {} and {}",
            dates[0], dates[1]
        )));
    }
    for w in dates.windows(2) {
        let gap = months_between(w[0], w[1]);
        if gap != step {
            return Err(Error::Alignment(format!(
                "gap between {} and {} breaks the {step}-month spacing",
                w[0], w[1]
            )));
        }
    }
    Ok((12 / step) as usize)
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Ingestion(format!("cannot parse `{s}` as a number")))
}

/// Reads a CSV whose first column holds ISO dates and whose remaining columns
/// are numeric, applies the per-column transformations, and drops the rows
/// consumed by them.
pub fn load_panel(path: &Path, spec: &PanelSpec) -> Result<Panel> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Ingestion(format!(
            "{}: need a date column and at least one series",
            path.display()
        )));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if let Some(unknown) = spec.columns.keys().find(|k| !names.contains(k)) {
        return Err(Error::Ingestion(format!("transformation given for unknown column `{unknown}`")));
    }
    let mut dates = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Ingestion(format!("row {} has {} fields, expected {}", row + 2, rec.len(), header.len())));
        }
        let d = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|e| Error::Ingestion(format!("row {}: bad date `{}`: {e}", row + 2, &rec[0])))?;
        dates.push(d);
        for (j, c) in cols.iter_mut().enumerate() {
            let v = parse_cell(&rec[j + 1]).map_err(|e| Error::Ingestion(format!("row {}, column `{}`: {e}", row + 2, names[j])))?;
            c.push(v);
        }
    }
    let per_year = check_spacing(&dates)?;
    let transforms: Vec<Transform> = names.iter().map(|n| spec.transform(n)).collect();
    let drop = transforms.iter().map(|t| t.lag(per_year)).max().unwrap_or(0);
    if dates.len() <= drop {
        return Err(Error::Ingestion("too few rows left after transformation".into()));
    }
    let t = dates.len() - drop;
    let mut values = DMatrix::zeros(t, names.len());
    for (j, (col, tr)) in cols.iter().zip(&transforms).enumerate() {
        let out = tr.apply(col, per_year);
        let skip = out.len() - t;
        for (r, v) in out[skip..].iter().enumerate() {
            values[(r, j)] = v.filter(|v| v.is_finite()).ok_or_else(|| Error::MissingValue {
                column: names[j].clone(),
                date: dates[drop + r].to_string(),
            })?;
        }
    }
    Ok(Panel {
        dates: dates[drop..].to_vec(),
        names,
        values,
    })
}

/// Joins endogenous series and effect modifiers on their common dates. The
/// overlap must be contiguous in both panels.
pub fn align_panels(endog: &Panel, modifiers: &Panel) -> Result<Dataset> {
    let start = endog.dates[0].max(modifiers.dates[0]);
    let end = endog.dates[endog.dates.len() - 1].min(modifiers.dates[modifiers.dates.len() - 1]);
    if start > end {
        return Err(Error::Alignment("endogenous and modifier files share no dates".into()));
    }
    let window = |p: &Panel| -> Result<(usize, usize)> {
        let a = p.dates.iter().position(|d| *d == start);
        let b = p.dates.iter().position(|d| *d == end);
        match (a, b) {
            (Some(a), Some(b)) => Ok((a, b + 1)),
            _ => Err(Error::Alignment(format!(
                "dates {start} to {end} are not on the observation grid of both files"
            ))),
        }
    };
    let (ea, eb) = window(endog)?;
    let (ma, mb) = window(modifiers)?;
    if eb - ea != mb - ma || endog.dates[ea..eb] != modifiers.dates[ma..mb] {
        return Err(Error::Alignment("endogenous and modifier dates differ inside the overlap".into()));
    }
    Dataset::new(
        endog.values.rows(ea, eb - ea).into_owned(),
        modifiers.values.rows(ma, mb - ma).into_owned(),
        endog.names.clone(),
        modifiers.names.clone(),
        endog.dates[ea..eb].iter().map(|d| d.to_string()).collect(),
    )
}

/// Loads and aligns the endogenous and modifier files.
pub fn load_dataset(endog: &Path, endog_spec: &PanelSpec, modifiers: &Path, modifier_spec: &PanelSpec) -> Result<Dataset> {
    align_panels(&load_panel(endog, endog_spec)?, &load_panel(modifiers, modifier_spec)?)
}

/// Writes a dated block with full float precision.
pub fn write_panel(path: &Path, dates: &[String], names: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (r, d) in dates.iter().enumerate() {
        let mut rec = vec![d.clone()];
        rec.extend(values.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the endogenous series and the modifiers of a dataset as two files.
pub fn write_dataset(dataset: &Dataset, endog: &Path, modifiers: &Path) -> Result<()> {
    write_panel(endog, &dataset.dates, &dataset.variable_names, &dataset.y)?;
    write_panel(modifiers, &dataset.dates, &dataset.modifier_names, &dataset.z)
}
