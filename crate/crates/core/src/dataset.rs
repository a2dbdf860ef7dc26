//! Country observations, ICP-style ingestion and the pooled dataset.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One country's per-capita consumption data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountryObservation {
    pub id: String,
    pub prices: Vec<f64>,
    pub quantities: Vec<f64>,
    pub population: Option<f64>,
    /// Local currency units per base-currency unit.
    pub market_rate: Option<f64>,
}

impl CountryObservation {
    pub fn new(id: impl Into<String>, prices: Vec<f64>, quantities: Vec<f64>) -> Self {
        CountryObservation {
            id: id.into(),
            prices,
            quantities,
            population: None,
            market_rate: None,
        }
    }

    pub fn with_population(mut self, population: f64) -> Self {
        self.population = Some(population);
        self
    }

    pub fn with_market_rate(mut self, rate: f64) -> Self {
        self.market_rate = Some(rate);
        self
    }

    /// Total per-capita expenditure `p·q`.
    pub fn expenditure(&self) -> f64 {
        dot(&self.prices, &self.quantities)
    }

    /// Cost of this country's bundle at `prices`.
    pub fn cost_at(&self, prices: &[f64]) -> f64 {
        dot(prices, &self.quantities)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prices.len() != self.quantities.len() {
            return Err(Error::Validation(format!(
                "{}: {} prices but {} quantities",
                self.id,
                self.prices.len(),
                self.quantities.len()
            )));
        }
        if let Some((k, p)) = self
            .prices
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::Validation(format!(
                "{}: price of good {} is {p}, must be strictly positive",
                self.id,
                k + 1
            )));
        }
        if let Some((k, q)) = self
            .quantities
            .iter()
            .enumerate()
            .find(|(_, q)| !(q.is_finite() && **q >= 0.0))
        {
            return Err(Error::Validation(format!(
                "{}: quantity of good {} is {q}, must be non-negative",
                self.id,
                k + 1
            )));
        }
        if self.expenditure() <= 0.0 {
            return Err(Error::Validation(format!(
                "{}: total expenditure is zero",
                self.id
            )));
        }
        if let Some(pop) = self.population {
            if !(pop.is_finite() && pop > 0.0) {
                return Err(Error::Validation(format!("{}: population {pop}", self.id)));
            }
        }
        if let Some(rate) = self.market_rate {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::Validation(format!("{}: market rate {rate}", self.id)));
            }
        }
        Ok(())
    }
}

/// Validated, immutable collection of observations sharing `K` goods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledDataset {
    observations: Vec<CountryObservation>,
    base: usize,
    heading_labels: Vec<String>,
}

impl PooledDataset {
    pub fn new(observations: Vec<CountryObservation>, base_country: &str) -> Result<Self> {
        let k = observations.first().map(|o| o.prices.len()).unwrap_or(0);
        let labels = (1..=k).map(|i| format!("good_{i}")).collect();
        Self::with_labels(observations, base_country, labels)
    }

    pub fn with_labels(
        observations: Vec<CountryObservation>,
        base_country: &str,
        heading_labels: Vec<String>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyDataset("no observations".into()));
        }
        let k = observations[0].prices.len();
        if k == 0 {
            return Err(Error::EmptyDataset("no goods".into()));
        }
        let mut seen = HashSet::new();
        for obs in &observations {
            obs.validate()?;
            if obs.prices.len() != k {
                return Err(Error::Validation(format!(
                    "{} has {} goods, expected {k}",
                    obs.id,
                    obs.prices.len()
                )));
            }
            if !seen.insert(obs.id.as_str()) {
                return Err(Error::Validation(format!("duplicate country id {}", obs.id)));
            }
        }
        if heading_labels.len() != k {
            return Err(Error::Structural(format!(
                "{} heading labels for {k} goods",
                heading_labels.len()
            )));
        }
        let base = observations
            .iter()
            .position(|o| o.id == base_country)
            .ok_or_else(|| {
                Error::Config(format!("base country {base_country} not in dataset"))
            })?;
        Ok(PooledDataset {
            observations,
            base,
            heading_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn goods(&self) -> usize {
        self.heading_labels.len()
    }

    pub fn heading_labels(&self) -> &[String] {
        &self.heading_labels
    }

    pub fn observations(&self) -> &[CountryObservation] {
        &self.observations
    }

    pub fn obs(&self, i: usize) -> &CountryObservation {
        &self.observations[i]
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn base_id(&self) -> &str {
        &self.observations[self.base].id
    }

    pub fn ids(&self) -> Vec<String> {
        self.observations.iter().map(|o| o.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.observations.iter().position(|o| o.id == id)
    }

    /// `p_i·q_j`.
    pub fn cross(&self, i: usize, j: usize) -> f64 {
        dot(&self.observations[i].prices, &self.observations[j].quantities)
    }

    pub fn expenditure(&self, i: usize) -> f64 {
        self.observations[i].expenditure()
    }

    /// Expenditure of country `i` valued at base-country prices, comparable across countries.
    pub fn real_expenditure(&self, i: usize) -> f64 {
        self.cross(self.base, i)
    }

    pub fn with_base(mut self, base_country: &str) -> Result<Self> {
        self.base = self.index_of(base_country).ok_or_else(|| {
            Error::Config(format!("base country {base_country} not in dataset"))
        })?;
        Ok(self)
    }

    /// Sub-dataset over `indices` (in the given order). The base is kept if
    /// selected, otherwise the first selected country becomes the base.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let obs: Vec<_> = indices.iter().map(|&i| self.observations[i].clone()).collect();
        let base = if indices.contains(&self.base) {
            self.base_id().to_string()
        } else {
            obs.first()
                .map(|o| o.id.clone())
                .ok_or_else(|| Error::EmptyDataset("empty subset".into()))?
        };
        Self::with_labels(obs, &base, self.heading_labels.clone())
    }

    pub fn push(&mut self, obs: CountryObservation) -> Result<()> {
        obs.validate()?;
        if obs.prices.len() != self.goods() {
            return Err(Error::Validation(format!("{} has wrong number of goods", obs.id)));
        }
        if self.index_of(&obs.id).is_some() {
            return Err(Error::Validation(format!("duplicate country id {}", obs.id)));
        }
        self.observations.push(obs);
        Ok(())
    }

    /// Attach populations and market rates from an aux table.
    pub fn apply_aux(&mut self, aux: &AuxTable) {
        for obs in &mut self.observations {
            if let Some(row) = aux.rows.get(&obs.id) {
                if row.population.is_some() {
                    obs.population = row.population;
                }
                if row.market_rate.is_some() {
                    obs.market_rate = row.market_rate;
                }
            }
        }
    }
}

/// Raw ICP basic-heading table: bilateral PPPs and nominal expenditures, `K × N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawIcpTable {
    pub ppp: Vec<Vec<Option<f64>>>,
    pub expenditure: Vec<Vec<Option<f64>>>,
    pub heading_labels: Vec<String>,
    pub country_labels: Vec<String>,
    pub base: String,
    pub aux: AuxTable,
}

impl RawIcpTable {
    /// `true` where the PPP cell is missing.
    pub fn ppp_missing_mask(&self) -> Vec<Vec<bool>> {
        self.ppp
            .iter()
            .map(|row| row.iter().map(Option::is_none).collect())
            .collect()
    }

    pub fn expenditure_missing_mask(&self) -> Vec<Vec<bool>> {
        self.expenditure
            .iter()
            .map(|row| row.iter().map(Option::is_none).collect())
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuxRow {
    pub population: Option<f64>,
    pub market_rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuxTable {
    pub rows: HashMap<String, AuxRow>,
}

/// Result of converting a raw table, with what the exclusion rules removed.
#[derive(Clone, Debug)]
pub struct Conversion {
    pub dataset: PooledDataset,
    pub excluded_countries: Vec<String>,
    pub excluded_headings: Vec<String>,
}

pub fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, String> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("NA") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| format!("cannot parse {s:?} as a number: {e}"))
}

struct Grid {
    columns: Vec<String>,
    row_labels: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

pub(crate) fn csv_error(file: &str, err: csv::Error) -> Error {
    let row = err.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        file: file.to_string(),
        row,
        column: 0,
        message: err.to_string(),
    }
}

/// Header row = column labels after the first cell, first column = row label.
fn parse_grid(text: &str, file: &str) -> Result<Grid> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(file, e))?.clone();
    if header.len() < 2 {
        return Err(Error::Structural(format!(
            "{file}: header needs a label column and at least one country"
        )));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut cells = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(file, e))?;
        let row_no = r + 2;
        let mut values = Vec::with_capacity(columns.len());
        for (c, raw) in record.iter().enumerate().skip(1) {
            values.push(parse_cell(raw).map_err(|message| Error::Parse {
                file: file.to_string(),
                row: row_no,
                column: c + 1,
                message,
            })?);
        }
        row_labels.push(record.get(0).unwrap_or_default().to_string());
        cells.push(values);
    }
    Ok(Grid {
        columns,
        row_labels,
        cells,
    })
}

pub fn parse_aux(text: &str, file: &str) -> Result<AuxTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(file, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let country = col("country")
        .ok_or_else(|| Error::Structural(format!("{file}: missing `country` column")))?;
    let pop = col("population");
    let rate = col("market_rate");
    let mut rows = HashMap::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(file, e))?;
        let cell = |idx: Option<usize>| -> Result<Option<f64>> {
            match idx.and_then(|i| record.get(i)) {
                None => Ok(None),
                Some(raw) => parse_cell(raw).map_err(|message| Error::Parse {
                    file: file.to_string(),
                    row: r + 2,
                    column: idx.unwrap() + 1,
                    message,
                }),
            }
        };
        let id = record.get(country).unwrap_or_default().to_string();
        rows.insert(
            id,
            AuxRow {
                population: cell(pop)?,
                market_rate: cell(rate)?,
            },
        );
    }
    Ok(AuxTable { rows })
}

pub fn load_aux(path: &Path) -> Result<AuxTable> {
    parse_aux(&read_to_string(path)?, &path.display().to_string())
}

/// Read the PPP and expenditure grids (plus an optional aux table).
pub fn ingest_icp(
    ppp_file: &Path,
    expenditure_file: &Path,
    base: &str,
    aux_file: Option<&Path>,
) -> Result<RawIcpTable> {
    let ppp_name = ppp_file.display().to_string();
    let exp_name = expenditure_file.display().to_string();
    let ppp = parse_grid(&read_to_string(ppp_file)?, &ppp_name)?;
    let exp = parse_grid(&read_to_string(expenditure_file)?, &exp_name)?;
    let aux = match aux_file {
        Some(p) => load_aux(p)?,
        None => AuxTable::default(),
    };
    assemble_icp(ppp, exp, base, aux, &ppp_name, &exp_name)
}

/// In-memory variant of [`ingest_icp`].
pub fn ingest_icp_str(ppp_csv: &str, expenditure_csv: &str, base: &str) -> Result<RawIcpTable> {
    let ppp = parse_grid(ppp_csv, "ppp")?;
    let exp = parse_grid(expenditure_csv, "expenditure")?;
    assemble_icp(ppp, exp, base, AuxTable::default(), "ppp", "expenditure")
}

fn assemble_icp(
    ppp: Grid,
    exp: Grid,
    base: &str,
    aux: AuxTable,
    ppp_name: &str,
    exp_name: &str,
) -> Result<RawIcpTable> {
    let mut countries = exp.columns.clone();
    for c in &ppp.columns {
        if !countries.contains(c) {
            countries.push(c.clone());
        }
    }
    for c in &countries {
        if !ppp.columns.contains(c) {
            return Err(Error::Structural(format!(
                "country {c} has no column in {ppp_name}"
            )));
        }
        if !exp.columns.contains(c) {
            return Err(Error::Structural(format!(
                "country {c} has no column in {exp_name}"
            )));
        }
    }
    if ppp.row_labels != exp.row_labels {
        let missing: Vec<_> = exp
            .row_labels
            .iter()
            .filter(|h| !ppp.row_labels.contains(h))
            .chain(ppp.row_labels.iter().filter(|h| !exp.row_labels.contains(h)))
            .collect();
        return Err(Error::Structural(format!(
            "heading rows differ between {ppp_name} and {exp_name}: {missing:?}"
        )));
    }
    let reorder = |grid: &Grid| -> Vec<Vec<Option<f64>>> {
        let pos: Vec<usize> = countries
            .iter()
            .map(|c| grid.columns.iter().position(|g| g == c).unwrap())
            .collect();
        grid.cells
            .iter()
            .map(|row| pos.iter().map(|&p| row.get(p).copied().flatten()).collect())
            .collect()
    };
    if !countries.iter().any(|c| c == base) {
        return Err(Error::Config(format!("base country {base} not in input")));
    }
    Ok(RawIcpTable {
        ppp: reorder(&ppp),
        expenditure: reorder(&exp),
        heading_labels: exp.row_labels,
        country_labels: countries,
        base: base.to_string(),
        aux,
    })
}

/// Convert PPPs and nominal expenditures into prices and implicit quantities,
/// dropping countries with any missing cell and then headings with a negative
/// expenditure in any kept country.
pub fn convert(raw: &RawIcpTable) -> Result<Conversion> {
    let k = raw.heading_labels.len();
    let n = raw.country_labels.len();
    for (h, row) in raw.ppp.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if let Some(v) = v {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::Validation(format!(
                        "PPP for {} / {} is {v}, must be positive",
                        raw.heading_labels[h], raw.country_labels[c]
                    )));
                }
            }
        }
    }
    let mut kept = Vec::new();
    let mut excluded_countries = Vec::new();
    for c in 0..n {
        let complete = (0..k).all(|h| raw.ppp[h][c].is_some() && raw.expenditure[h][c].is_some());
        if complete {
            kept.push(c);
        } else {
            excluded_countries.push(raw.country_labels[c].clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyDataset("every country has a missing price".into()));
    }
    if !kept.iter().any(|&c| raw.country_labels[c] == raw.base) {
        return Err(Error::Config(format!(
            "base country {} was excluded for missing prices",
            raw.base
        )));
    }
    let mut headings = Vec::new();
    let mut excluded_headings = Vec::new();
    for h in 0..k {
        if kept.iter().any(|&c| raw.expenditure[h][c].unwrap() < 0.0) {
            excluded_headings.push(raw.heading_labels[h].clone());
        } else {
            headings.push(h);
        }
    }
    if headings.is_empty() {
        return Err(Error::EmptyDataset("every heading has a negative expenditure".into()));
    }
    let observations = kept
        .iter()
        .map(|&c| {
            let prices: Vec<f64> = headings.iter().map(|&h| raw.ppp[h][c].unwrap()).collect();
            let quantities = headings
                .iter()
                .zip(&prices)
                .map(|(&h, p)| raw.expenditure[h][c].unwrap() / p)
                .collect();
            let id = raw.country_labels[c].clone();
            let aux = raw.aux.rows.get(&id).cloned().unwrap_or_default();
            CountryObservation {
                id,
                prices,
                quantities,
                population: aux.population,
                market_rate: aux.market_rate,
            }
        })
        .collect();
    let labels = headings.iter().map(|&h| raw.heading_labels[h].clone()).collect();
    let dataset = PooledDataset::with_labels(observations, &raw.base, labels)?;
    Ok(Conversion {
        dataset,
        excluded_countries,
        excluded_headings,
    })
}

/// Parse the direct `country,p_1..p_K,q_1..q_K` layout. The first row is the base.
pub fn parse_direct(text: &str, file: &str) -> Result<PooledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = match reader.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.clone(),
        Ok(_) => return Err(Error::EmptyDataset(format!("{file} is empty"))),
        Err(e) => return Err(csv_error(file, e)),
    };
    let width = header.len();
    if width < 3 || (width - 1) % 2 != 0 {
        return Err(Error::Structural(format!(
            "{file}: expected `country,p_1..p_K,q_1..q_K`, got {width} columns"
        )));
    }
    let k = (width - 1) / 2;
    let labels: Vec<String> = header
        .iter()
        .skip(1)
        .take(k)
        .map(|h| h.strip_prefix("p_").unwrap_or(h).to_string())
        .collect();
    let mut observations = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(file, e))?;
        let row_no = r + 2;
        let mut values = Vec::with_capacity(2 * k);
        for c in 1..width {
            let raw = record.get(c).unwrap_or_default();
            let v = parse_cell(raw)
                .and_then(|v| v.ok_or_else(|| "missing value".to_string()))
                .map_err(|message| Error::Parse {
                    file: file.to_string(),
                    row: row_no,
                    column: c + 1,
                    message,
                })?;
            values.push(v);
        }
        let q = values.split_off(k);
        observations.push(CountryObservation::new(record.get(0).unwrap_or_default(), values, q));
    }
    let base = observations
        .first()
        .map(|o| o.id.clone())
        .ok_or_else(|| Error::EmptyDataset(format!("{file} has no rows")))?;
    PooledDataset::with_labels(observations, &base, labels)
}

pub fn load_direct(path: &Path) -> Result<PooledDataset> {
    parse_direct(&read_to_string(path)?, &path.display().to_string())
}
