//! Generalised star system parities.
//!
//! Countries in the reference-consumer hub are priced by the geometric mean
//! of their revealed-preference bounds. Each outsider is attached through a
//! linear program under the hub's tastes, and its forecast bundle then joins
//! the constraints seen by later outsiders.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{from_base_ratios, m_minus_over, m_minus_rows, BoundMatrix, BoundStyle};
use crate::dataset::{dot, CountryObservation, PooledDataset};
use crate::error::{Error, Result};
use crate::indices::{IndexMatrix, Method};
use crate::lp::{LinearProgram, LpOutcome};
use crate::rpgraph::{check_harp, max_reference_set, Reachability, RpGraph, EQ_TOL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GssOptions {
    /// Use the exhaustive maximum consistent subset for the hub.
    pub exact_subset: bool,
}

/// Extension of one outsider.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutsideExtension {
    pub id: String,
    /// Countries revealed worse than the outsider when it was attached,
    /// itself included. Earlier outsiders appear through their forecasts.
    pub revealed_worse: Vec<String>,
    /// Bundle maximising expenditure at base prices on the outsider's budget
    /// line under the accumulated constraints.
    pub forecast: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GssResult {
    pub ids: Vec<String>,
    pub in_hub: Vec<bool>,
    pub base: usize,
    /// `lower[i][j] = M⁻(p_i, υ_j) / m_j`.
    pub lower: Vec<Vec<f64>>,
    /// `upper[i][j] = M⁺(p_i, υ_j) / m_j`, or the outside-star maximum when
    /// `j` is an outsider.
    pub upper: Vec<Vec<f64>>,
    /// Bilateral geometric means `sqrt(lower · upper)`.
    pub values: Vec<Vec<f64>>,
    /// `values[i][base]`.
    pub ppp_vs_base: Vec<f64>,
    /// Outsiders in processing order.
    pub outside: Vec<OutsideExtension>,
    /// Outsiders whose linear program was infeasible; left out of `ids`.
    pub no_extension: Vec<String>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub data: PooledDataset,
}

impl GssResult {
    /// Fixed-base parities with the indifference base of the base country:
    /// `value(i, j) = ppp_vs_base[i] / ppp_vs_base[j]`.
    pub fn index(&self) -> IndexMatrix {
        IndexMatrix::from_levels(Method::Gss, self.ids.clone(), &self.ppp_vs_base)
    }

    /// Bilateral matrix of geometric means.
    pub fn bilateral(&self) -> IndexMatrix {
        IndexMatrix {
            method: Method::Gss,
            ids: self.ids.clone(),
            values: self.values.clone(),
        }
    }

    /// Bounds over every extended country, usable for appraisal.
    pub fn bound_matrix(&self, kind: BoundStyle) -> BoundMatrix {
        from_base_ratios(
            &self.data,
            self.lower.clone(),
            self.upper.clone(),
            kind,
            self.in_hub.clone(),
        )
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|c| c == id)
    }

    pub fn hub_ids(&self) -> Vec<&str> {
        self.ids
            .iter()
            .zip(&self.in_hub)
            .filter(|(_, h)| **h)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Entrywise geometric mean of a bound matrix.
pub fn gss_hub(bm: &BoundMatrix) -> Result<IndexMatrix> {
    let n = bm.len();
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (lo, hi) = (bm.lower[i][j], bm.upper[i][j]);
            if !(lo > 0.0 && hi > 0.0) {
                return Err(Error::Numerical(format!(
                    "non-positive bound at ({}, {})",
                    bm.ids[i], bm.ids[j]
                )));
            }
            values[i][j] = (lo * hi).sqrt();
        }
    }
    IndexMatrix::new(Method::Gss, bm.ids.clone(), values)
}

/// Outside-star bounds for one country against the accumulated constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct OutsideBounds {
    /// Positions (in the constraint dataset) revealed worse than the outsider.
    pub revealed_worse: Vec<usize>,
    /// `M⁻(at_i, υ_k) / m_k` for each requested price vector.
    pub lower: Vec<f64>,
    /// Largest expenditure at `at_i` on the outsider's budget line, over `m_k`.
    pub upper: Vec<f64>,
    /// Maximiser for the forecast price vector.
    pub forecast: Vec<f64>,
}

/// Maximises `at·q` on the outsider's budget line under the constraints of
/// the countries it is revealed preferred to. `None` when infeasible.
pub fn outside_star_upper(
    constraints: &PooledDataset,
    worse: &[usize],
    outsider: &CountryObservation,
    at: &[f64],
) -> Result<Option<(f64, Vec<f64>)>> {
    let m_k = outsider.expenditure();
    let mut lp = LinearProgram::maximize(at.to_vec());
    for &u in worse {
        let m = constraints.expenditure(u);
        lp.push_ge(constraints.obs(u).prices.iter().map(|p| p / m).collect(), 1.0);
    }
    lp = lp.eq(outsider.prices.iter().map(|p| p / m_k).collect(), 1.0);
    match lp.solve()? {
        LpOutcome::Optimal(sol) => Ok(Some((sol.value, sol.x))),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Numerical(
            "outside-star program unbounded despite a budget equality".into(),
        )),
    }
}

/// Countries in `constraints` revealed worse than a new vertex whose only
/// edges point out of it.
pub fn outsider_vrw(
    constraints: &PooledDataset,
    rel: &Reachability,
    outsider: &CountryObservation,
) -> Vec<usize> {
    let m_k = outsider.expenditure();
    let mut hit = vec![false; constraints.len()];
    for x in 0..constraints.len() {
        let w = dot(&outsider.prices, &constraints.obs(x).quantities) / m_k;
        if w <= 1.0 + EQ_TOL {
            for y in rel.vrw(x) {
                hit[y] = true;
            }
        }
    }
    (0..constraints.len()).filter(|&x| hit[x]).collect()
}

/// Bounds for an outsider at each price vector in `at`; `forecast_at`
/// selects the objective whose maximiser is reported. `None` when the
/// outside-star program is infeasible.
pub fn gss_outside(
    constraints: &PooledDataset,
    outsider: &CountryObservation,
    at: &[Vec<f64>],
    forecast_at: &[f64],
) -> Result<Option<OutsideBounds>> {
    let g = RpGraph::build(constraints)?;
    let rel = Reachability::compute(&g);
    let worse = outsider_vrw(constraints, &rel, outsider);
    let Some((_, forecast)) = outside_star_upper(constraints, &worse, outsider, forecast_at)? else {
        return Ok(None);
    };
    let m_k = outsider.expenditure();
    let rows: Vec<(&[f64], f64)> = worse
        .iter()
        .map(|&u| (constraints.obs(u).prices.as_slice(), constraints.expenditure(u)))
        .chain(std::iter::once((outsider.prices.as_slice(), m_k)))
        .collect();
    let mut lower = Vec::with_capacity(at.len());
    let mut upper = Vec::with_capacity(at.len());
    for p in at {
        lower.push(m_minus_rows(rows.iter().copied(), p)?.0 / m_k);
        match outside_star_upper(constraints, &worse, outsider, p)? {
            Some((v, _)) => upper.push(v / m_k),
            None => return Ok(None),
        }
    }
    Ok(Some(OutsideBounds {
        revealed_worse: worse,
        lower,
        upper,
        forecast,
    }))
}

/// Full generalised star system over `data`.
pub fn gss_full(data: &PooledDataset, opts: GssOptions) -> Result<GssResult> {
    let hub = max_reference_set(data, opts.exact_subset)?;
    let mut in_hub = vec![false; data.len()];
    for &h in &hub {
        in_hub[h] = true;
    }
    let mut outsiders: Vec<usize> = (0..data.len()).filter(|&i| !in_hub[i]).collect();
    outsiders.sort_by(|&a, &b| {
        data.real_expenditure(b)
            .partial_cmp(&data.real_expenditure(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| data.obs(a).id.cmp(&data.obs(b).id))
    });
    let n = data.len();
    let prices: Vec<Vec<f64>> = (0..n).map(|i| data.obs(i).prices.clone()).collect();

    // hub columns
    let hub_data = data.subset(&hub)?;
    let hub_rel = Reachability::compute(&RpGraph::build(&hub_data)?);
    let mut lower = vec![vec![f64::NAN; n]; n];
    let mut upper = vec![vec![f64::NAN; n]; n];
    let hub_cols: Vec<(usize, Vec<f64>, Vec<f64>)> = hub
        .par_iter()
        .enumerate()
        .map(|(hj, &j)| {
            let worse = hub_rel.vrw(hj);
            let better = hub_rel.vrp(hj);
            let m_j = data.expenditure(j);
            let mut lo = Vec::with_capacity(n);
            let mut hi = Vec::with_capacity(n);
            for (i, p) in prices.iter().enumerate() {
                if i == j {
                    lo.push(1.0);
                    hi.push(1.0);
                    continue;
                }
                lo.push(m_minus_over(&hub_data, &worse, p)?.0 / m_j);
                let plus = better
                    .iter()
                    .map(|&u| dot(p, &hub_data.obs(u).quantities))
                    .fold(f64::INFINITY, f64::min);
                hi.push(plus / m_j);
            }
            Ok((j, lo, hi))
        })
        .collect::<Result<_>>()?;
    for (j, lo, hi) in hub_cols {
        for i in 0..n {
            lower[i][j] = lo[i];
            upper[i][j] = hi[i];
        }
    }

    // outsiders, sequentially
    let mut constraints = hub_data.clone();
    let mut outside = Vec::new();
    let mut no_extension = Vec::new();
    let mut notes = Vec::new();
    let base_prices = &data.obs(data.base()).prices;
    for &k in &outsiders {
        let obs = data.obs(k);
        let forecast_at = if k == data.base() { &obs.prices } else { base_prices };
        match gss_outside(&constraints, obs, &prices, forecast_at)? {
            None => {
                notes.push(format!("{}: outside-star program infeasible", obs.id));
                no_extension.push(obs.id.clone());
            }
            Some(ext) => {
                let hub_worse = ext.revealed_worse.iter().filter(|&&u| u < hub.len()).count();
                if hub_worse == 0 {
                    notes.push(format!(
                        "{}: no hub country is revealed worse; only the budget line binds",
                        obs.id
                    ));
                }
                for i in 0..n {
                    lower[i][k] = ext.lower[i];
                    upper[i][k] = ext.upper[i];
                }
                lower[k][k] = 1.0;
                upper[k][k] = 1.0;
                let revealed_worse = std::iter::once(obs.id.clone())
                    .chain(ext.revealed_worse.iter().map(|&u| constraints.obs(u).id.clone()))
                    .collect();
                outside.push(OutsideExtension {
                    id: obs.id.clone(),
                    revealed_worse,
                    forecast: ext.forecast.clone(),
                });
                constraints.push(CountryObservation {
                    quantities: ext.forecast,
                    ..obs.clone()
                })?;
            }
        }
    }

    let kept: Vec<usize> = (0..n)
        .filter(|&i| !no_extension.contains(&data.obs(i).id))
        .collect();
    if !kept.contains(&data.base()) {
        return Err(Error::Config(format!(
            "base country {} could not be attached to the hub",
            data.base_id()
        )));
    }
    let pick = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        kept.iter()
            .map(|&i| kept.iter().map(|&j| m[i][j]).collect())
            .collect()
    };
    let lower = pick(&lower);
    let upper = pick(&upper);
    let values: Vec<Vec<f64>> = lower
        .iter()
        .zip(&upper)
        .map(|(l, u)| l.iter().zip(u).map(|(a, b)| (a * b).sqrt()).collect())
        .collect();
    let kept_data = data.subset(&kept)?;
    let base = kept_data.base();
    Ok(GssResult {
        ids: kept_data.ids(),
        in_hub: kept.iter().map(|&i| in_hub[i]).collect(),
        base,
        ppp_vs_base: values.iter().map(|r| r[base]).collect(),
        lower,
        upper,
        values,
        outside,
        no_extension,
        notes,
        data: kept_data,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HomotheticResult {
    /// Transitive parities anchored at the base country.
    pub index: IndexMatrix,
    /// Min-path upper bounds `U(i, j)`.
    pub upper: Vec<Vec<f64>>,
    /// `1 / U(j, i)`.
    pub lower: Vec<Vec<f64>>,
    /// Bilateral geometric means `sqrt(lower · upper)`.
    pub afriat: IndexMatrix,
}

/// Homothetic bounds and parities over a HARP-consistent set.
///
/// Edge `a → b` carries the Laspeyres price index `p_a·q_b / p_b·q_b`;
/// `U` is the cheapest path product. The published index uses the potential
/// `ln ppp(i) = (D(i, b) − D(b, i)) / 2` with `D = ln U` and `b` the base,
/// which is transitive and stays inside `[lower, upper]`.
pub fn gss_homothetic(data: &PooledDataset) -> Result<HomotheticResult> {
    let g = RpGraph::build(data)?;
    if let Some(c) = check_harp(&g).cycle() {
        return Err(Error::Inconsistent(format!(
            "homothetic bounds need a HARP-consistent set; cycle {} has product {:.6}; pick one with the greedy homothetic search",
            c.describe(g.ids()),
            c.product()
        )));
    }
    let n = data.len();
    let mut d = vec![vec![0.0_f64; n]; n];
    for (a, row) in d.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            if a != b {
                *cell = (data.cross(a, b) / data.expenditure(b)).ln();
            }
        }
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                let via = d[a][k] + d[k][b];
                if via < d[a][b] {
                    d[a][b] = via;
                }
            }
        }
    }
    for (a, row) in d.iter_mut().enumerate() {
        row[a] = 0.0;
    }
    let upper: Vec<Vec<f64>> = d.iter().map(|r| r.iter().map(|v| v.exp()).collect()).collect();
    let lower: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (-d[j][i]).exp()).collect())
        .collect();
    let afriat = (0..n)
        .map(|i| (0..n).map(|j| ((d[i][j] - d[j][i]) / 2.0).exp()).collect())
        .collect();
    let b = data.base();
    let levels: Vec<f64> = (0..n).map(|i| ((d[i][b] - d[b][i]) / 2.0).exp()).collect();
    Ok(HomotheticResult {
        index: IndexMatrix::from_levels(Method::HomotheticGss, data.ids(), &levels),
        upper,
        lower,
        afriat: IndexMatrix::new(Method::HomotheticGss, data.ids(), afriat)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::bound_matrix;
    use crate::indices::fisher;

    fn quartet() -> PooledDataset {
        PooledDataset::new(
            vec![
                CountryObservation::new("A", vec![5.0, 9.0], vec![8.0, 6.0]),
                CountryObservation::new("B", vec![7.0, 7.0], vec![7.0, 10.0]),
                CountryObservation::new("C", vec![10.0, 10.0], vec![1.0, 9.0]),
                CountryObservation::new("D", vec![10.0, 4.0], vec![10.0, 2.0]),
            ],
            "A",
        )
        .unwrap()
    }

    #[test]
    fn worked_outsider() {
        let r = gss_full(&quartet(), GssOptions::default()).unwrap();
        assert_eq!(r.hub_ids(), vec!["A", "B", "C"]);
        assert_eq!(r.outside.len(), 1);
        let d = &r.outside[0];
        assert_eq!(d.revealed_worse, vec!["D", "A", "C"]);
        assert!(d.forecast[0].abs() < 1e-9 && (d.forecast[1] - 27.0).abs() < 1e-9);
        assert!((r.lower[0][3] - 94.0 / 108.0).abs() < 1e-9);
        assert!((r.upper[0][3] - 2.25).abs() < 1e-9);
        assert!((r.values[0][3] - 1.399).abs() < 1e-3);
    }

    #[test]
    fn consistent_data_has_no_outsiders() {
        let d = quartet().subset(&[0, 1, 2]).unwrap();
        let r = gss_full(&d, GssOptions::default()).unwrap();
        assert!(r.outside.is_empty());
        let hub = gss_hub(&bound_matrix(&d, BoundStyle::Laspeyres).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((hub.value(i, j) - r.values[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forecast_spends_the_budget() {
        let r = gss_full(&quartet(), GssOptions::default()).unwrap();
        let d = r.data.obs(3);
        assert!((dot(&d.prices, &r.outside[0].forecast) - d.expenditure()).abs() < 1e-9);
    }

    #[test]
    fn homothetic_two_countries_is_fisher() {
        let d = quartet().subset(&[0, 1]).unwrap();
        let h = gss_homothetic(&d).unwrap();
        let f = fisher(&d).unwrap();
        assert!((h.index.value(0, 1) - f.value(0, 1)).abs() < 1e-12);
        assert!((h.afriat.value(1, 0) - f.value(1, 0)).abs() < 1e-12);
    }

    #[test]
    fn homothetic_refuses_harp_violation() {
        let d = PooledDataset::new(
            vec![
                CountryObservation::new("a", vec![10.0, 9.0], vec![1.0, 0.0]),
                CountryObservation::new("b", vec![9.0, 10.0], vec![0.0, 1.0]),
            ],
            "a",
        )
        .unwrap();
        assert!(matches!(gss_homothetic(&d), Err(Error::Inconsistent(_))));
    }
}
