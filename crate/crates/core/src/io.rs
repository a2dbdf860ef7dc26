//! Tabular output: CSV writers with matching readers, text tables and hashing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aggregates::LorenzCurve;
use crate::appraisal::{AppraisalReport, Correction, Side};
use crate::bounds::{BoundMatrix, BoundStyle};
use crate::dataset::{csv_error, parse_cell, PooledDataset};
use crate::error::{Error, Result};
use crate::gss::GssResult;
use crate::indices::{IndexMatrix, Method};
use crate::rpgraph::RpGraph;

/// Number formatted to 12 significant digits, shortest form.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

pub fn fixed3(x: f64) -> String {
    format!("{x:.3}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing to memory cannot fail
    let _ = w.write_record(header);
    for r in rows {
        let _ = w.write_record(r);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

struct Records {
    file: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Records {
    fn read(text: &str, file: &str, expect: &[&str]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_error(file, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if !expect.is_empty() && header.iter().map(String::as_str).ne(expect.iter().copied()) {
            return Err(Error::Structural(format!(
                "{file}: expected header {}, got {}",
                expect.join(","),
                header.join(",")
            )));
        }
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| csv_error(file, e))
            })
            .collect::<Result<_>>()?;
        Ok(Records {
            file: file.to_string(),
            header,
            rows,
        })
    }

    fn float(&self, row: usize, col: usize) -> Result<f64> {
        let cell = self.rows[row].get(col).map(String::as_str).unwrap_or("");
        parse_cell(cell)
            .and_then(|v| v.ok_or_else(|| "missing value".into()))
            .map_err(|message| Error::Parse {
                file: self.file.clone(),
                row: row + 2,
                column: col + 1,
                message,
            })
    }

    fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).map(String::as_str).unwrap_or("")
    }
}

/// Unique ids in order of first appearance.
fn collect_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for id in ids {
        if !out.iter().any(|x| x == id) {
            out.push(id.to_string());
        }
    }
    out
}

fn position(ids: &[String], id: &str, file: &str) -> Result<usize> {
    ids.iter()
        .position(|x| x == id)
        .ok_or_else(|| Error::Structural(format!("{file}: unknown country {id}")))
}

/// Direct-format dataset, base country first.
pub fn dataset_csv(data: &PooledDataset) -> String {
    let labels = data.heading_labels();
    let mut head = vec!["country".to_string()];
    head.extend(labels.iter().map(|l| format!("p_{l}")));
    head.extend(labels.iter().map(|l| format!("q_{l}")));
    let order = std::iter::once(data.base()).chain((0..data.len()).filter(|&i| i != data.base()));
    let rows: Vec<Vec<String>> = order
        .map(|i| {
            let o = data.obs(i);
            std::iter::once(o.id.clone())
                .chain(o.prices.iter().map(|v| num(*v)))
                .chain(o.quantities.iter().map(|v| num(*v)))
                .collect()
        })
        .collect();
    csv_string(&head, &rows)
}

pub fn aux_csv(data: &PooledDataset) -> String {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let rows: Vec<Vec<String>> = data
        .observations()
        .iter()
        .map(|o| vec![o.id.clone(), opt(o.population), opt(o.market_rate)])
        .collect();
    csv_string(&header(&["country", "population", "market_rate"]), &rows)
}

pub fn edge_list_csv(g: &RpGraph) -> String {
    let rows: Vec<Vec<String>> = g
        .edges()
        .map(|(i, j, w)| vec![g.ids()[i].clone(), g.ids()[j].clone(), num(w)])
        .collect();
    csv_string(&header(&["from", "to", "weight"]), &rows)
}

/// Reads an edge list back into a graph (missing edges are an error).
pub fn parse_edge_list_csv(text: &str, file: &str) -> Result<RpGraph> {
    let rec = Records::read(text, file, &["from", "to", "weight"])?;
    let ids = collect_ids(rec.rows.iter().flat_map(|r| [r[0].as_str(), r[1].as_str()]));
    let n = ids.len();
    let mut w = vec![vec![f64::NAN; n]; n];
    for (r, row) in rec.rows.iter().enumerate() {
        let (i, j) = (position(&ids, &row[0], file)?, position(&ids, &row[1], file)?);
        w[i][j] = rec.float(r, 2)?;
    }
    RpGraph::from_weights(ids, &w)
}

#[derive(Serialize)]
struct Adjacency<'a> {
    ids: &'a [String],
    weights: Vec<Vec<f64>>,
}

pub fn adjacency_json(g: &RpGraph) -> Result<String> {
    let n = g.len();
    let weights = (0..n)
        .map(|i| (0..n).map(|j| g.weight(i, j)).collect())
        .collect();
    Ok(serde_json::to_string_pretty(&Adjacency {
        ids: g.ids(),
        weights,
    })?)
}

const BOUNDS_HEADER: [&str; 6] = ["base", "at", "classical_lower", "lower", "upper", "classical_upper"];

/// One row per ordered pair; `base` is the indifference base, `at` the
/// other country.
pub fn bounds_csv(bm: &BoundMatrix) -> String {
    let mut rows = Vec::new();
    for i in 0..bm.len() {
        for j in 0..bm.len() {
            let b = bm.base_of(i, j);
            let at = if b == j { i } else { j };
            rows.push(vec![
                bm.ids[b].clone(),
                bm.ids[at].clone(),
                num(bm.classical_lower[i][j]),
                num(bm.lower[i][j]),
                num(bm.upper[i][j]),
                num(bm.classical_upper[i][j]),
            ]);
        }
    }
    csv_string(&header(&BOUNDS_HEADER), &rows)
}

pub fn parse_bounds_csv(text: &str, file: &str, kind: BoundStyle) -> Result<BoundMatrix> {
    let rec = Records::read(text, file, &BOUNDS_HEADER)?;
    let ids = collect_ids(rec.rows.iter().map(|r| r[0].as_str()));
    let n = ids.len();
    let blank = || vec![vec![f64::NAN; n]; n];
    let mut bm = BoundMatrix {
        kind,
        ids,
        lower: blank(),
        upper: blank(),
        classical_lower: blank(),
        classical_upper: blank(),
        in_hub: vec![true; n],
    };
    for r in 0..rec.rows.len() {
        let b = position(&bm.ids, rec.text(r, 0), file)?;
        let at = position(&bm.ids, rec.text(r, 1), file)?;
        let (i, j) = match kind {
            BoundStyle::Laspeyres => (at, b),
            BoundStyle::Paasche => (b, at),
        };
        bm.classical_lower[i][j] = rec.float(r, 2)?;
        bm.lower[i][j] = rec.float(r, 3)?;
        bm.upper[i][j] = rec.float(r, 4)?;
        bm.classical_upper[i][j] = rec.float(r, 5)?;
    }
    Ok(bm)
}

pub fn index_long_csv(matrices: &[IndexMatrix]) -> String {
    let mut rows = Vec::new();
    for m in matrices {
        for i in 0..m.len() {
            for j in 0..m.len() {
                rows.push(vec![
                    m.method.to_string(),
                    m.ids[i].clone(),
                    m.ids[j].clone(),
                    num(m.value(i, j)),
                ]);
            }
        }
    }
    csv_string(&header(&["method", "i", "j", "value"]), &rows)
}

pub fn parse_index_long_csv(text: &str, file: &str) -> Result<Vec<IndexMatrix>> {
    let rec = Records::read(text, file, &["method", "i", "j", "value"])?;
    let mut out: Vec<IndexMatrix> = Vec::new();
    let methods = collect_ids(rec.rows.iter().map(|r| r[0].as_str()));
    for name in methods {
        let method = Method::parse(&name)
            .ok_or_else(|| Error::Structural(format!("{file}: unknown method {name}")))?;
        let mine: Vec<usize> = (0..rec.rows.len()).filter(|&r| rec.text(r, 0) == name).collect();
        let ids = collect_ids(mine.iter().map(|&r| rec.text(r, 1)));
        let n = ids.len();
        let mut values = vec![vec![f64::NAN; n]; n];
        for &r in &mine {
            let i = position(&ids, rec.text(r, 1), file)?;
            let j = position(&ids, rec.text(r, 2), file)?;
            values[i][j] = rec.float(r, 3)?;
        }
        out.push(IndexMatrix::new(method, ids, values)?);
    }
    Ok(out)
}

/// Publication-style table: one column per method, each country's price
/// level against `base_id`.
pub fn vs_base_csv(matrices: &[IndexMatrix], base_id: &str) -> String {
    let mut head = vec!["country".to_string()];
    head.extend(matrices.iter().map(|m| m.method.to_string()));
    let ids = matrices.first().map(|m| m.ids.clone()).unwrap_or_default();
    let rows: Vec<Vec<String>> = ids
        .iter()
        .map(|id| {
            std::iter::once(id.clone())
                .chain(matrices.iter().map(|m| {
                    match (m.index_of(id), m.index_of(base_id)) {
                        (Some(i), Some(b)) => num(m.value(i, b)),
                        _ => String::new(),
                    }
                }))
                .collect()
        })
        .collect();
    csv_string(&head, &rows)
}

fn side_name(s: Option<Side>) -> &'static str {
    match s {
        None => "",
        Some(Side::Lower) => "lower",
        Some(Side::Upper) => "upper",
    }
}

pub fn appraisal_pairs_csv(reports: &[AppraisalReport], ids: &[String]) -> String {
    let mut rows = Vec::new();
    for r in reports {
        for p in &r.per_pair {
            rows.push(vec![
                r.method.to_string(),
                r.segment.as_str().to_string(),
                ids[p.i].clone(),
                ids[p.j].clone(),
                num(p.value),
                num(p.lower),
                num(p.upper),
                side_name(p.violated_side).to_string(),
                num(p.overshoot),
            ]);
        }
    }
    csv_string(
        &header(&[
            "method", "segment", "i", "j", "value", "lower", "upper", "violated_side", "overshoot",
        ]),
        &rows,
    )
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    method: &'a str,
    segment: &'a str,
    pairs_counted: usize,
    error_rate: f64,
    error_magnitude: f64,
    upper_violations: usize,
    lower_violations: usize,
}

pub fn appraisal_summary_json(reports: &[AppraisalReport]) -> Result<String> {
    let rows: Vec<ReportSummary> = reports
        .iter()
        .map(|r| ReportSummary {
            method: r.method.as_str(),
            segment: r.segment.as_str(),
            pairs_counted: r.pairs_counted,
            error_rate: r.error_rate,
            error_magnitude: r.error_magnitude,
            upper_violations: r.upper_violations,
            lower_violations: r.lower_violations,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}

const GSS_HEADER: [&str; 5] = ["country", "ppp_vs_base", "lower", "upper", "in_hub"];

pub fn gss_table_csv(r: &GssResult) -> String {
    let rows: Vec<Vec<String>> = (0..r.ids.len())
        .map(|i| {
            vec![
                r.ids[i].clone(),
                num(r.ppp_vs_base[i]),
                num(r.lower[i][r.base]),
                num(r.upper[i][r.base]),
                r.in_hub[i].to_string(),
            ]
        })
        .collect();
    csv_string(&header(&GSS_HEADER), &rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GssRow {
    pub country: String,
    pub ppp_vs_base: f64,
    pub lower: f64,
    pub upper: f64,
    pub in_hub: bool,
}

pub fn parse_gss_table_csv(text: &str, file: &str) -> Result<Vec<GssRow>> {
    let rec = Records::read(text, file, &GSS_HEADER)?;
    (0..rec.rows.len())
        .map(|r| {
            Ok(GssRow {
                country: rec.text(r, 0).to_string(),
                ppp_vs_base: rec.float(r, 1)?,
                lower: rec.float(r, 2)?,
                upper: rec.float(r, 3)?,
                in_hub: rec.text(r, 4).parse().map_err(|_| Error::Parse {
                    file: file.to_string(),
                    row: r + 2,
                    column: 5,
                    message: "expected true or false".into(),
                })?,
            })
        })
        .collect()
}

/// Long-format bilateral GSS matrix: entry `(i, j)` uses `j`'s tastes.
pub fn gss_matrix_csv(r: &GssResult) -> String {
    let mut rows = Vec::new();
    for i in 0..r.ids.len() {
        for j in 0..r.ids.len() {
            rows.push(vec![
                r.ids[i].clone(),
                r.ids[j].clone(),
                num(r.lower[i][j]),
                num(r.upper[i][j]),
                num(r.values[i][j]),
            ]);
        }
    }
    csv_string(&header(&["i", "j", "lower", "upper", "value"]), &rows)
}

pub fn forecasts_csv(r: &GssResult) -> String {
    let mut head = vec!["country".to_string()];
    head.extend(r.data.heading_labels().iter().map(|l| format!("q_{l}")));
    let rows: Vec<Vec<String>> = r
        .outside
        .iter()
        .map(|o| {
            std::iter::once(o.id.clone())
                .chain(o.forecast.iter().map(|v| num(*v)))
                .collect()
        })
        .collect();
    csv_string(&head, &rows)
}

pub fn corrections_csv(method: Method, ids: &[String], log: &[Correction]) -> String {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|c| {
            vec![
                method.to_string(),
                ids[c.i].clone(),
                ids[c.j].clone(),
                num(c.original),
                num(c.lower),
                num(c.upper),
                num(c.corrected),
            ]
        })
        .collect();
    csv_string(
        &header(&["method", "i", "j", "original", "lower", "upper", "corrected"]),
        &rows,
    )
}

pub fn lorenz_csv(curve: &LorenzCurve, ids: &[String]) -> String {
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .enumerate()
        .map(|(k, (x, y))| {
            let who = if k == 0 { String::new() } else { ids[curve.order[k - 1]].clone() };
            vec![who, num(*x), num(*y)]
        })
        .collect();
    csv_string(&header(&["country", "population_share", "expenditure_share"]), &rows)
}

pub fn parse_lorenz_csv(text: &str, file: &str) -> Result<Vec<(f64, f64)>> {
    let rec = Records::read(text, file, &["country", "population_share", "expenditure_share"])?;
    (0..rec.rows.len())
        .map(|r| Ok((rec.float(r, 1)?, rec.float(r, 2)?)))
        .collect()
}

pub fn refset_csv(ids: &[String], members: &[usize]) -> String {
    let rows: Vec<Vec<String>> = members.iter().map(|&m| vec![ids[m].clone()]).collect();
    csv_string(&header(&["country"]), &rows)
}

pub fn parse_refset_csv(text: &str, file: &str) -> Result<Vec<String>> {
    let rec = Records::read(text, file, &["country"])?;
    Ok(rec.rows.iter().map(|r| r[0].clone()).collect())
}

/// Column names of a CSV document.
pub fn csv_header(text: &str, file: &str) -> Result<Vec<String>> {
    Ok(Records::read(text, file, &[])?.header)
}

/// Text matrix at three decimals.
pub fn render_matrix(ids: &[String], values: &[Vec<f64>]) -> String {
    let width = ids.iter().map(String::len).max().unwrap_or(0).max(8);
    let mut out = format!("{:width$}", "");
    for id in ids {
        let _ = write!(out, " {id:>width$}");
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(values) {
        let _ = write!(out, "{id:width$}");
        for v in row {
            let _ = write!(out, " {:>width$}", fixed3(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
