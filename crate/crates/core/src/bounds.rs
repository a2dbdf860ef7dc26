//! Classical and revealed-preference cost-of-living bounds.
//!
//! Matrix entry `(i, j)` bounds the price level of `i` relative to `j`,
//! the same orientation as [`IndexMatrix`](crate::indices::IndexMatrix).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{dot, PooledDataset};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome};
use crate::rpgraph::{check_cewec_with, Reachability, RpGraph};

/// Absolute tolerance used when asserting bound orderings.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundStyle {
    /// Indifference base is the comparison country `j`; outer bounds are the
    /// minimum price relative and the Laspeyres index.
    Laspeyres,
    /// Indifference base is the country `i`; outer bounds are the Paasche
    /// index and the maximum price relative.
    Paasche,
}

impl BoundStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundStyle::Laspeyres => "laspeyres",
            BoundStyle::Paasche => "paasche",
        }
    }
}

/// Sharp lower bound on the expenditure needed at prices `at` to reach the
/// utility of `base`.
///
/// Solves `min at·q` over `q ≥ 0` with `p_u·q ≥ m_u` for every `u` revealed
/// worse than `base`. Rows are scaled by `1/m_u`.
pub fn m_minus(
    data: &PooledDataset,
    rel: &Reachability,
    base: usize,
    at: &[f64],
) -> Result<(f64, Vec<f64>)> {
    m_minus_over(data, &rel.vrw(base), at)
}

/// [`m_minus`] with an explicit constraint set.
pub fn m_minus_over(data: &PooledDataset, worse: &[usize], at: &[f64]) -> Result<(f64, Vec<f64>)> {
    m_minus_rows(
        worse
            .iter()
            .map(|&u| (data.obs(u).prices.as_slice(), data.expenditure(u))),
        at,
    )
}

/// [`m_minus`] over explicit `(prices, expenditure)` rows.
pub fn m_minus_rows<'a>(
    rows: impl IntoIterator<Item = (&'a [f64], f64)>,
    at: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut lp = LinearProgram::minimize(at.to_vec());
    for (prices, m) in rows {
        lp.push_ge(prices.iter().map(|p| p / m).collect(), 1.0);
    }
    match lp.solve()? {
        LpOutcome::Optimal(sol) => Ok((sol.value, sol.x)),
        other => Err(Error::Numerical(format!(
            "lower expenditure bound LP ended as {other:?}"
        ))),
    }
}

/// Sharp upper bound: the cheapest observed bundle, at prices `at`, among
/// countries revealed preferred to `base`. Returns the value and the country.
pub fn m_plus(data: &PooledDataset, rel: &Reachability, base: usize, at: &[f64]) -> (f64, usize) {
    rel.vrp(base)
        .into_iter()
        .map(|u| (dot(at, &data.obs(u).quantities), u))
        .fold((f64::INFINITY, usize::MAX), |best, c| if c.0 < best.0 { c } else { best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpenditureBounds {
    pub base: usize,
    pub at: usize,
    pub m_minus: f64,
    pub m_plus: f64,
}

/// `M⁻` and `M⁺` for every indifference base (row) at every country's
/// prices (column).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpenditureTable {
    pub m_minus: Vec<Vec<f64>>,
    pub m_plus: Vec<Vec<f64>>,
}

impl ExpenditureTable {
    pub fn compute(data: &PooledDataset, rel: &Reachability) -> Result<Self> {
        let n = data.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|base| {
                let worse = rel.vrw(base);
                let mut lo = Vec::with_capacity(n);
                let mut hi = Vec::with_capacity(n);
                for j in 0..n {
                    let at = &data.obs(j).prices;
                    lo.push(m_minus_over(data, &worse, at)?.0);
                    hi.push(m_plus(data, rel, base, at).0);
                }
                Ok((lo, hi))
            })
            .collect::<Result<_>>()?;
        let (m_minus, m_plus) = rows.into_iter().unzip();
        Ok(ExpenditureTable { m_minus, m_plus })
    }

    pub fn entry(&self, base: usize, at: usize) -> ExpenditureBounds {
        ExpenditureBounds {
            base,
            at,
            m_minus: self.m_minus[base][at],
            m_plus: self.m_plus[base][at],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundMatrix {
    pub kind: BoundStyle,
    pub ids: Vec<String>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub classical_lower: Vec<Vec<f64>>,
    pub classical_upper: Vec<Vec<f64>>,
    /// Whether each country belongs to the reference-consumer set the bounds
    /// were derived from.
    pub in_hub: Vec<bool>,
}

fn price_relatives<'a>(a: &'a [f64], b: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    a.iter().zip(b).map(|(x, y)| x / y)
}

impl BoundMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Indifference base used for entry `(i, j)`.
    pub fn base_of(&self, i: usize, j: usize) -> usize {
        match self.kind {
            BoundStyle::Laspeyres => j,
            BoundStyle::Paasche => i,
        }
    }

    /// Largest violation of `classical_lower ≤ lower ≤ upper ≤ classical_upper`.
    pub fn nesting_gap(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst
                    .max(self.classical_lower[i][j] - self.lower[i][j])
                    .max(self.lower[i][j] - self.upper[i][j])
                    .max(self.upper[i][j] - self.classical_upper[i][j]);
            }
        }
        worst
    }
}

/// Assembles the bound matrix of the requested style from expenditure bounds.
pub fn assemble(data: &PooledDataset, table: &ExpenditureTable, kind: BoundStyle) -> BoundMatrix {
    let n = data.len();
    let ratio = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { m[j][i] / m[j][j] }).collect())
            .collect()
    };
    from_base_ratios(data, ratio(&table.m_minus), ratio(&table.m_plus), kind, vec![true; n])
}

/// Builds a bound matrix from ratios `lower[i][j] = M⁻(p_i, υ_j) / m_j` and
/// `upper[i][j] = M⁺(p_i, υ_j) / m_j`. The Paasche style reads the same
/// ratios with the base on the other side: `(i, j) ↦ 1 / (j, i)`.
pub fn from_base_ratios(
    data: &PooledDataset,
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
    kind: BoundStyle,
    in_hub: Vec<bool>,
) -> BoundMatrix {
    let n = data.len();
    let mut classical_lower = vec![vec![1.0; n]; n];
    let mut classical_upper = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (pi, pj) = (&data.obs(i).prices, &data.obs(j).prices);
            match kind {
                BoundStyle::Laspeyres => {
                    classical_lower[i][j] = price_relatives(pi, pj).fold(f64::INFINITY, f64::min);
                    classical_upper[i][j] = data.cross(i, j) / data.expenditure(j);
                }
                BoundStyle::Paasche => {
                    classical_lower[i][j] = data.expenditure(i) / data.cross(j, i);
                    classical_upper[i][j] =
                        price_relatives(pi, pj).fold(f64::NEG_INFINITY, f64::max);
                }
            }
        }
    }
    let (lower, upper) = match kind {
        BoundStyle::Laspeyres => (lower, upper),
        BoundStyle::Paasche => {
            let flip = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                (0..n).map(|i| (0..n).map(|j| 1.0 / m[j][i]).collect()).collect()
            };
            (flip(&upper), flip(&lower))
        }
    };
    BoundMatrix {
        kind,
        ids: data.ids(),
        lower,
        upper,
        classical_lower,
        classical_upper,
        in_hub,
    }
}

/// Bound matrix for a revealed-preference consistent dataset.
///
/// Refuses inconsistent data; use
/// [`max_reference_set`](crate::rpgraph::max_reference_set) first.
pub fn bound_matrix(data: &PooledDataset, kind: BoundStyle) -> Result<BoundMatrix> {
    let g = RpGraph::build(data)?;
    let rel = Reachability::compute(&g);
    if let Some(cycle) = check_cewec_with(&g, &rel).cycle() {
        return Err(Error::Inconsistent(format!(
            "bounds need a reference-consumer set; violating cycle {}; extract one with `refset` first",
            cycle.describe(g.ids())
        )));
    }
    let table = ExpenditureTable::compute(data, &rel)?;
    Ok(assemble(data, &table, kind))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairImprovement {
    pub i: usize,
    pub j: usize,
    pub classical_width: f64,
    pub width: f64,
    /// `1 − width / classical_width`.
    pub width_improvement: f64,
    /// `lower / classical_lower − 1`.
    pub lower_improvement: f64,
    /// `1 − upper / classical_upper`.
    pub upper_improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementStats {
    pub pairs: Vec<PairImprovement>,
    /// Off-diagonal pairs left out because the classical width is zero.
    pub skipped: usize,
    pub mean_width_improvement: f64,
    pub mean_lower_improvement: f64,
    pub mean_upper_improvement: f64,
    /// Mean width improvement over the pairs using each country as base;
    /// `None` when the country has no counted pairs.
    pub per_country: Vec<Option<f64>>,
}

pub fn pair_improvement(bm: &BoundMatrix, i: usize, j: usize) -> Option<PairImprovement> {
    let classical_width = bm.classical_upper[i][j] - bm.classical_lower[i][j];
    if classical_width <= BOUND_TOL {
        return None;
    }
    let width = bm.upper[i][j] - bm.lower[i][j];
    Some(PairImprovement {
        i,
        j,
        classical_width,
        width,
        width_improvement: 1.0 - width / classical_width,
        lower_improvement: bm.lower[i][j] / bm.classical_lower[i][j] - 1.0,
        upper_improvement: 1.0 - bm.upper[i][j] / bm.classical_upper[i][j],
    })
}

pub fn bound_improvement_stats(bm: &BoundMatrix) -> ImprovementStats {
    let n = bm.len();
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            match pair_improvement(bm, i, j) {
                Some(p) => pairs.push(p),
                None => skipped += 1,
            }
        }
    }
    let mean = |f: &dyn Fn(&PairImprovement) -> f64| {
        if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().map(f).sum::<f64>() / pairs.len() as f64
        }
    };
    let mut sums = vec![(0.0, 0usize); n];
    for p in &pairs {
        let b = bm.base_of(p.i, p.j);
        sums[b].0 += p.width_improvement;
        sums[b].1 += 1;
    }
    ImprovementStats {
        mean_width_improvement: mean(&|p| p.width_improvement),
        mean_lower_improvement: mean(&|p| p.lower_improvement),
        mean_upper_improvement: mean(&|p| p.upper_improvement),
        per_country: sums
            .into_iter()
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect(),
        pairs,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CountryObservation;

    fn trio() -> PooledDataset {
        PooledDataset::new(
            vec![
                CountryObservation::new("A", vec![5.0, 9.0], vec![8.0, 6.0]),
                CountryObservation::new("B", vec![7.0, 7.0], vec![7.0, 10.0]),
                CountryObservation::new("C", vec![10.0, 10.0], vec![1.0, 9.0]),
            ],
            "A",
        )
        .unwrap()
    }

    #[test]
    fn laspeyres_outer_bounds_match_worked_example() {
        let bm = bound_matrix(&trio(), BoundStyle::Laspeyres).unwrap();
        assert!((bm.classical_upper[2][1] - 170.0 / 119.0).abs() < 1e-12);
        assert!((bm.classical_upper[1][2] - 0.7).abs() < 1e-12);
        for i in 0..3 {
            assert_eq!(bm.lower[i][i], 1.0);
            assert_eq!(bm.upper[i][i], 1.0);
        }
        assert!(bm.nesting_gap() < 1e-9);
    }

    #[test]
    fn paasche_style_nests() {
        let bm = bound_matrix(&trio(), BoundStyle::Paasche).unwrap();
        assert!(bm.nesting_gap() < 1e-9);
    }

    #[test]
    fn self_evaluation() {
        let d = trio();
        let rel = Reachability::compute(&RpGraph::build(&d).unwrap());
        for b in 0..3 {
            let at = &d.obs(b).prices;
            let (lo, _) = m_minus(&d, &rel, b, at).unwrap();
            assert!((lo - d.expenditure(b)).abs() < 1e-9);
            assert!(m_plus(&d, &rel, b, at).0 <= d.expenditure(b) + 1e-9);
        }
    }

    #[test]
    fn singleton_lower_bound_is_min_relative() {
        let d = PooledDataset::new(
            vec![CountryObservation::new("x", vec![2.0, 4.0, 1.0], vec![1.0, 1.0, 1.0])],
            "x",
        )
        .unwrap();
        let at = [3.0, 1.0, 5.0];
        let (v, _) = m_minus_over(&d, &[0], &at).unwrap();
        let expect = d.expenditure(0) * (3.0 / 2.0_f64).min(1.0 / 4.0).min(5.0);
        assert!((v - expect).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_data_refused() {
        let d = PooledDataset::new(
            vec![
                CountryObservation::new("a", vec![10.0, 9.0], vec![1.0, 0.0]),
                CountryObservation::new("b", vec![9.0, 10.0], vec![0.0, 1.0]),
            ],
            "a",
        )
        .unwrap();
        assert!(matches!(
            bound_matrix(&d, BoundStyle::Laspeyres),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn published_width_improvement() {
        let bm = BoundMatrix {
            kind: BoundStyle::Laspeyres,
            ids: vec!["a".into(), "b".into()],
            lower: vec![vec![1.0, 1.28], vec![1.0, 1.0]],
            upper: vec![vec![1.0, 4.39], vec![1.0, 1.0]],
            classical_lower: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            classical_upper: vec![vec![1.0, 4.76], vec![1.0, 1.0]],
            in_hub: vec![true, true],
        };
        let stats = bound_improvement_stats(&bm);
        assert_eq!(stats.skipped, 1);
        let p = &stats.pairs[0];
        assert!((p.classical_width - 3.76).abs() < 1e-12);
        assert!((p.width - 3.11).abs() < 1e-12);
        assert!((p.width_improvement - 0.173).abs() < 5e-4);
        assert_eq!(stats.per_country, vec![None, Some(p.width_improvement)]);
    }

    #[test]
    fn untightened_bounds_report_zero() {
        let mut bm = bound_matrix(&trio(), BoundStyle::Laspeyres).unwrap();
        bm.lower = bm.classical_lower.clone();
        bm.upper = bm.classical_upper.clone();
        let stats = bound_improvement_stats(&bm);
        assert!(stats.pairs.iter().all(|p| p.width_improvement.abs() < 1e-15));
    }
}
