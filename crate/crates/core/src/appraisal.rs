//! Scoring price indices against cost-of-living bounds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundMatrix;
use crate::error::{Error, Result};
use crate::indices::{IndexMatrix, Method};

/// Relative slack before an index value counts as outside its bounds.
pub const VIOLATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    #[default]
    All,
    /// Pairs whose indifference base is in the reference-consumer set.
    BaseInRc,
    /// Pairs whose indifference base is outside it.
    BaseOutRc,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::All => "all",
            Segment::BaseInRc => "in-rc",
            Segment::BaseOutRc => "out-rc",
        }
    }

    fn admits(self, base_in_hub: bool) -> bool {
        match self {
            Segment::All => true,
            Segment::BaseInRc => base_in_hub,
            Segment::BaseOutRc => !base_in_hub,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub violated_side: Option<Side>,
    /// `value/upper − 1` or `lower/value − 1` for violations, else 0.
    pub overshoot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppraisalReport {
    pub method: Method,
    pub segment: Segment,
    pub pairs_counted: usize,
    pub error_rate: f64,
    /// Mean overshoot among violators; 0 when there are none.
    pub error_magnitude: f64,
    pub upper_violations: usize,
    pub lower_violations: usize,
    pub per_pair: Vec<PairRecord>,
}

impl AppraisalReport {
    pub fn violations(&self) -> impl Iterator<Item = &PairRecord> {
        self.per_pair.iter().filter(|p| p.violated_side.is_some())
    }

    pub fn violation_count(&self) -> usize {
        self.upper_violations + self.lower_violations
    }
}

fn check_alignment(index: &IndexMatrix, bm: &BoundMatrix) -> Result<()> {
    if index.ids != bm.ids {
        return Err(Error::Structural(format!(
            "{} matrix and bound matrix list countries in different orders",
            index.method
        )));
    }
    Ok(())
}

fn classify(value: f64, lower: f64, upper: f64) -> (Option<Side>, f64) {
    if value > upper * (1.0 + VIOLATION_TOL) {
        (Some(Side::Upper), value / upper - 1.0)
    } else if value < lower * (1.0 - VIOLATION_TOL) {
        (Some(Side::Lower), lower / value - 1.0)
    } else {
        (None, 0.0)
    }
}

/// Error rate and magnitude of `index` over every ordered pair (diagonal
/// included) whose indifference base passes the segment filter.
pub fn appraise(index: &IndexMatrix, bm: &BoundMatrix, segment: Segment) -> Result<AppraisalReport> {
    check_alignment(index, bm)?;
    let n = bm.len();
    let mut per_pair = Vec::new();
    let (mut up, mut lo) = (0, 0);
    let mut overshoot_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if !segment.admits(bm.in_hub[bm.base_of(i, j)]) {
                continue;
            }
            let value = index.value(i, j);
            let (lower, upper) = (bm.lower[i][j], bm.upper[i][j]);
            let (side, overshoot) = classify(value, lower, upper);
            match side {
                Some(Side::Upper) => up += 1,
                Some(Side::Lower) => lo += 1,
                None => {}
            }
            overshoot_sum += overshoot;
            per_pair.push(PairRecord {
                i,
                j,
                value,
                lower,
                upper,
                violated_side: side,
                overshoot,
            });
        }
    }
    let counted = per_pair.len();
    let violators = up + lo;
    Ok(AppraisalReport {
        method: index.method,
        segment,
        pairs_counted: counted,
        error_rate: if counted == 0 { 0.0 } else { violators as f64 / counted as f64 },
        error_magnitude: if violators == 0 { 0.0 } else { overshoot_sum / violators as f64 },
        upper_violations: up,
        lower_violations: lo,
        per_pair,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub minuend: Method,
    pub subtrahend: Option<Method>,
    pub delta_rate: Option<f64>,
    pub delta_magnitude: Option<f64>,
    pub missing: Vec<Method>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const COMPARISONS: [(&str, Method, Option<Method>); 5] = [
    ("(1a)", Method::GearyKhamis, Some(Method::Geks)),
    ("(1b)", Method::GearyKhamis, Some(Method::Ccd)),
    ("(2)", Method::Geks, None),
    ("(3a)", Method::Geks, Some(Method::Fisher)),
    ("(3b)", Method::Ccd, Some(Method::Tornqvist)),
];

/// Design comparisons between index families: differences in error rate and
/// magnitude. Rows with a missing report carry `None` deltas.
pub fn comparison_table(reports: &[AppraisalReport]) -> ComparisonTable {
    let find = |m: Method| reports.iter().find(|r| r.method == m);
    let rows = COMPARISONS
        .iter()
        .map(|&(label, a, b)| {
            let ra = find(a);
            let rb = b.map(find);
            let mut missing = Vec::new();
            if ra.is_none() {
                missing.push(a);
            }
            if let (Some(m), Some(None)) = (b, rb) {
                missing.push(m);
            }
            let (delta_rate, delta_magnitude) = match (ra, rb) {
                (Some(x), None) => (Some(x.error_rate), Some(x.error_magnitude)),
                (Some(x), Some(Some(y))) => (
                    Some(x.error_rate - y.error_rate),
                    Some(x.error_magnitude - y.error_magnitude),
                ),
                _ => (None, None),
            };
            let label = match b {
                Some(m) => format!("{label}: {a}-{m}"),
                None => format!("{label}: {a}"),
            };
            ComparisonRow {
                label,
                minuend: a,
                subtrahend: b,
                delta_rate,
                delta_magnitude,
                missing,
            }
        })
        .collect();
    ComparisonTable { rows }
}

impl ComparisonTable {
    /// Fixed-width text table, rates and magnitudes in percent.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>10} {:>10}", "comparison", "d_rate%", "d_mag%");
        for r in &self.rows {
            let cell = |v: Option<f64>| match v {
                Some(x) => format!("{:.2}", 100.0 * x),
                None => "absent".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<22} {:>10} {:>10}",
                r.label,
                cell(r.delta_rate),
                cell(r.delta_magnitude)
            );
        }
        out
    }
}

pub fn midpoint(lower: f64, upper: f64) -> f64 {
    0.5 * (lower + upper)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub i: usize,
    pub j: usize,
    pub original: f64,
    pub lower: f64,
    pub upper: f64,
    pub corrected: f64,
}

/// Replaces every out-of-bounds entry by the midpoint of its bounds.
pub fn taste_correct(index: &IndexMatrix, bm: &BoundMatrix) -> Result<(IndexMatrix, Vec<Correction>)> {
    check_alignment(index, bm)?;
    let mut out = index.clone();
    let mut log = Vec::new();
    for i in 0..bm.len() {
        for j in 0..bm.len() {
            let (lower, upper) = (bm.lower[i][j], bm.upper[i][j]);
            let original = index.value(i, j);
            if classify(original, lower, upper).0.is_some() {
                let corrected = midpoint(lower, upper);
                out.values[i][j] = corrected;
                log.push(Correction {
                    i,
                    j,
                    original,
                    lower,
                    upper,
                    corrected,
                });
            }
        }
    }
    Ok((out, log))
}
