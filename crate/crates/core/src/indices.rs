//! Bilateral and multilateral price indices.
//!
//! Every matrix stores `value(i, j)`: the price level of country `i`
//! relative to country `j`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PooledDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Fisher,
    Geks,
    Tornqvist,
    Ccd,
    GearyKhamis,
    MarketRate,
    Gss,
    HomotheticGss,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Fisher,
        Method::Geks,
        Method::Tornqvist,
        Method::Ccd,
        Method::GearyKhamis,
        Method::MarketRate,
        Method::Gss,
        Method::HomotheticGss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fisher => "fisher",
            Method::Geks => "geks",
            Method::Tornqvist => "tornqvist",
            Method::Ccd => "ccd",
            Method::GearyKhamis => "gk",
            Method::MarketRate => "market",
            Method::Gss => "gss",
            Method::HomotheticGss => "gss_homothetic",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Whether the method is transitive by construction.
    pub fn is_circular(self) -> bool {
        !matches!(self, Method::Fisher | Method::Tornqvist)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexMatrix {
    pub method: Method,
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl IndexMatrix {
    pub fn new(method: Method, ids: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = ids.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(Error::Structural(format!(
                "{method} matrix must be {n}×{n}"
            )));
        }
        Ok(IndexMatrix { method, ids, values })
    }

    /// Matrix `value(i, j) = level_i / level_j`.
    pub fn from_levels(method: Method, ids: Vec<String>, levels: &[f64]) -> Self {
        let values = levels
            .iter()
            .map(|a| levels.iter().map(|b| a / b).collect())
            .collect();
        IndexMatrix { method, ids, values }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|c| c == id)
    }

    /// Column against `base`: each country's price level relative to it.
    pub fn relative_to(&self, base: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.values[i][base]).collect()
    }

    /// Largest relative violation of `v(i,k) = v(i,j)·v(j,k)`.
    pub fn circularity_residual(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let direct = self.values[i][k];
                    let chained = self.values[i][j] * self.values[j][k];
                    worst = worst.max(((chained - direct) / direct).abs());
                }
            }
        }
        worst
    }

    /// Largest violation of `v(i,j)·v(j,i) = 1`.
    pub fn reversal_residual(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.values[i][j] * self.values[j][i] - 1.0).abs());
            }
        }
        worst
    }
}

fn checked_cross(data: &PooledDataset, i: usize, j: usize) -> Result<f64> {
    let v = data.cross(i, j);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!(
            "p_{}·q_{} = {v} is not positive",
            data.obs(i).id,
            data.obs(j).id
        )))
    }
}

/// `F(i,j) = sqrt((p_i·q_i / p_j·q_i) · (p_i·q_j / p_j·q_j))`.
pub fn fisher(data: &PooledDataset) -> Result<IndexMatrix> {
    let n = data.len();
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let paasche = checked_cross(data, i, i)? / checked_cross(data, j, i)?;
                let laspeyres = checked_cross(data, i, j)? / checked_cross(data, j, j)?;
                values[i][j] = (paasche * laspeyres).sqrt();
            }
        }
    }
    IndexMatrix::new(Method::Fisher, data.ids(), values)
}

fn expenditure_shares(data: &PooledDataset, i: usize) -> Vec<f64> {
    let o = data.obs(i);
    let m = o.expenditure();
    o.prices
        .iter()
        .zip(&o.quantities)
        .map(|(p, q)| p * q / m)
        .collect()
}

/// `T(i,j) = Π_k (p_ik / p_jk)^((s_ik + s_jk)/2)`.
pub fn tornqvist(data: &PooledDataset) -> Result<IndexMatrix> {
    let n = data.len();
    let shares: Vec<Vec<f64>> = (0..n).map(|i| expenditure_shares(data, i)).collect();
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (pi, pj) = (&data.obs(i).prices, &data.obs(j).prices);
            let mut log = 0.0;
            for k in 0..pi.len() {
                if !(pi[k] > 0.0 && pj[k] > 0.0) {
                    return Err(Error::Domain(format!("heading {k} has a zero price")));
                }
                log += 0.5 * (shares[i][k] + shares[j][k]) * (pi[k] / pj[k]).ln();
            }
            values[i][j] = log.exp();
        }
    }
    IndexMatrix::new(Method::Tornqvist, data.ids(), values)
}

/// Geometric-mean transitivisation through every intermediate country.
fn transitivise(bilateral: &IndexMatrix, method: Method) -> IndexMatrix {
    let n = bilateral.len();
    let logs: Vec<Vec<f64>> = bilateral
        .values
        .iter()
        .map(|r| r.iter().map(|v| v.ln()).collect())
        .collect();
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let s: f64 = (0..n).map(|k| logs[i][k] + logs[k][j]).sum();
                        (s / n as f64).exp()
                    }
                })
                .collect()
        })
        .collect();
    IndexMatrix {
        method,
        ids: bilateral.ids.clone(),
        values,
    }
}

pub fn geks(data: &PooledDataset) -> Result<IndexMatrix> {
    Ok(transitivise(&fisher(data)?, Method::Geks))
}

pub fn ccd(data: &PooledDataset) -> Result<IndexMatrix> {
    Ok(transitivise(&tornqvist(data)?, Method::Ccd))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum GkSolver {
    /// Damped fixed-point iteration.
    #[default]
    Iterative,
    /// Dense linear solve of the homogeneous system.
    Direct,
}

pub const GK_MAX_ITER: usize = 10_000;
pub const GK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkSolution {
    pub matrix: IndexMatrix,
    /// Purchasing power parities with the base at 1.
    pub ppp: Vec<f64>,
    /// International prices of the kept headings.
    pub international_prices: Vec<f64>,
    /// Headings nobody consumes, left out of the system.
    pub dropped_headings: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

struct GkSystem {
    kept: Vec<usize>,
    dropped: Vec<usize>,
    // c[n][l] = Σ_k q_nk m_lk / (m_n Q_k)
    c: Vec<Vec<f64>>,
    world_q: Vec<f64>,
}

impl GkSystem {
    fn build(data: &PooledDataset) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::Domain("Geary-Khamis needs at least two countries".into()));
        }
        let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..data.goods())
            .partition(|&k| data.observations().iter().any(|o| o.quantities[k] > 0.0));
        let world_q: Vec<f64> = kept
            .iter()
            .map(|&k| data.observations().iter().map(|o| o.quantities[k]).sum())
            .collect();
        let mut c = vec![vec![0.0; n]; n];
        for (a, row) in c.iter_mut().enumerate() {
            let oa = data.obs(a);
            let m_a = oa.expenditure();
            for (b, cell) in row.iter_mut().enumerate() {
                let ob = data.obs(b);
                *cell = kept
                    .iter()
                    .zip(&world_q)
                    .map(|(&k, qk)| oa.quantities[k] * ob.prices[k] * ob.quantities[k] / qk)
                    .sum::<f64>()
                    / m_a;
            }
        }
        Ok(GkSystem {
            kept,
            dropped,
            c,
            world_q,
        })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.c
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn residual(&self, x: &[f64]) -> f64 {
        let cx = self.apply(x);
        cx.iter()
            .zip(x)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max)
    }
}

/// Geary-Khamis parities. The system is solved for the real-to-nominal
/// ratios `P_n = Σ π_k q_nk / m_n`; the parity of `n` is `1 / P_n`.
pub fn geary_khamis_with(data: &PooledDataset, solver: GkSolver) -> Result<GkSolution> {
    let sys = GkSystem::build(data)?;
    let n = data.len();
    let base = data.base();
    let (levels, iterations) = match solver {
        GkSolver::Iterative => {
            let mut x = vec![1.0; n];
            let mut it = 0;
            loop {
                let cx = sys.apply(&x);
                let mut next: Vec<f64> = x.iter().zip(&cx).map(|(a, b)| 0.5 * (a + b)).collect();
                let scale = next[base];
                next.iter_mut().for_each(|v| *v /= scale);
                x = next;
                it += 1;
                let residual = sys.residual(&x);
                if residual < GK_TOL * 1e-2 {
                    break;
                }
                if it >= GK_MAX_ITER {
                    if residual < GK_TOL {
                        break;
                    }
                    return Err(Error::Numerical(format!(
                        "Geary-Khamis iteration did not converge in {GK_MAX_ITER} steps (residual {residual:e})"
                    )));
                }
            }
            (x, it)
        }
        GkSolver::Direct => {
            let mut a = DMatrix::<f64>::identity(n, n);
            for r in 0..n {
                for col in 0..n {
                    a[(r, col)] -= sys.c[r][col];
                }
            }
            for col in 0..n {
                a[(base, col)] = if col == base { 1.0 } else { 0.0 };
            }
            let mut rhs = DVector::<f64>::zeros(n);
            rhs[base] = 1.0;
            let x = a.lu().solve(&rhs).ok_or_else(|| {
                Error::Numerical("Geary-Khamis linear system is singular".into())
            })?;
            (x.iter().copied().collect(), 0)
        }
    };
    if levels.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Numerical("Geary-Khamis produced non-positive levels".into()));
    }
    let residual = sys.residual(&levels);
    let international_prices = sys
        .kept
        .iter()
        .zip(&sys.world_q)
        .map(|(&k, qk)| {
            (0..n)
                .map(|i| {
                    let o = data.obs(i);
                    levels[i] * o.prices[k] * o.quantities[k]
                })
                .sum::<f64>()
                / qk
        })
        .collect();
    let ppp: Vec<f64> = levels.iter().map(|p| 1.0 / p).collect();
    Ok(GkSolution {
        matrix: IndexMatrix::from_levels(Method::GearyKhamis, data.ids(), &ppp),
        ppp,
        international_prices,
        dropped_headings: sys.dropped,
        iterations,
        residual,
    })
}

pub fn geary_khamis(data: &PooledDataset) -> Result<IndexMatrix> {
    Ok(geary_khamis_with(data, GkSolver::default())?.matrix)
}

/// Cross rates `value(i,j) = rate_i / rate_j`.
pub fn market_rates(data: &PooledDataset) -> Result<IndexMatrix> {
    let missing: Vec<&str> = data
        .observations()
        .iter()
        .filter(|o| o.market_rate.is_none())
        .map(|o| o.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "market exchange rate missing for {}",
            missing.join(", ")
        )));
    }
    let rates: Vec<f64> = data
        .observations()
        .iter()
        .map(|o| o.market_rate.unwrap_or(f64::NAN))
        .collect();
    Ok(IndexMatrix::from_levels(Method::MarketRate, data.ids(), &rates))
}

/// The price-based indices appraised against the bounds.
pub fn classical_indices(data: &PooledDataset) -> Result<Vec<IndexMatrix>> {
    let f = fisher(data)?;
    let t = tornqvist(data)?;
    let g = transitivise(&f, Method::Geks);
    let c = transitivise(&t, Method::Ccd);
    Ok(vec![geary_khamis(data)?, g, c, f, t])
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
    fn fisher_worked_example() {
        let f = fisher(&trio()).unwrap();
        assert!((f.value(0, 1) - 1.004).abs() < 1e-3);
        assert!((f.value(0, 2) - 0.760).abs() < 1e-3);
        assert!((f.value(2, 1) - 1.429).abs() < 1e-3);
        assert!(f.reversal_residual() < 1e-12);
    }

    #[test]
    fn geks_worked_example() {
        let g = geks(&trio()).unwrap();
        assert!((g.value(0, 1) - 1.030).abs() < 1e-3);
        assert!((g.value(0, 2) - 0.740).abs() < 1e-3);
        assert!((g.value(2, 1) - 1.392).abs() < 1e-3);
        assert!((g.value(1, 2) - 0.719).abs() < 1e-3);
        assert!(g.circularity_residual() < 1e-12);
    }

    #[test]
    fn tornqvist_log_domain() {
        let d = trio();
        let t = tornqvist(&d).unwrap();
        let sa = [40.0 / 94.0, 54.0 / 94.0];
        let sb = [49.0 / 119.0, 70.0 / 119.0];
        let expect = (0.5 * (sa[0] + sb[0]) * (5.0_f64 / 7.0).ln()
            + 0.5 * (sa[1] + sb[1]) * (9.0_f64 / 7.0).ln())
        .exp();
        assert!((t.value(0, 1) - expect).abs() < 1e-10);
        assert!(t.reversal_residual() < 1e-12);
    }

    #[test]
    fn symmetric_price_relatives_cancel() {
        let d = PooledDataset::new(
            vec![
                CountryObservation::new("a", vec![1.0, 1.0], vec![1.0, 1.0]),
                CountryObservation::new("b", vec![2.0, 0.5], vec![0.5, 2.0]),
            ],
            "a",
        )
        .unwrap();
        assert!((tornqvist(&d).unwrap().value(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_good_gk_is_price_relative() {
        let d = PooledDataset::new(
            vec![
                CountryObservation::new("a", vec![3.0], vec![2.0]),
                CountryObservation::new("b", vec![5.0], vec![7.0]),
            ],
            "a",
        )
        .unwrap();
        let gk = geary_khamis(&d).unwrap();
        assert!((gk.value(0, 1) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn gk_iterative_matches_direct() {
        let d = trio();
        let it = geary_khamis_with(&d, GkSolver::Iterative).unwrap();
        let dir = geary_khamis_with(&d, GkSolver::Direct).unwrap();
        for (a, b) in it.ppp.iter().zip(&dir.ppp) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(it.ppp[0], 1.0);
        assert!(it.residual < 1e-12);
    }

    #[test]
    fn gk_additivity() {
        let d = trio();
        let sol = geary_khamis_with(&d, GkSolver::Direct).unwrap();
        for i in 0..d.len() {
            let o = d.obs(i);
            let real = o.expenditure() / sol.ppp[i];
            let at_intl: f64 = sol
                .international_prices
                .iter()
                .zip(&o.quantities)
                .map(|(a, b)| a * b)
                .sum();
            assert!(((real - at_intl) / at_intl).abs() < 1e-9);
        }
    }

    #[test]
    fn gk_drops_unconsumed_heading() {
        let d = PooledDataset::new(
            vec![
                CountryObservation::new("a", vec![1.0, 2.0], vec![1.0, 0.0]),
                CountryObservation::new("b", vec![2.0, 3.0], vec![2.0, 0.0]),
            ],
            "a",
        )
        .unwrap();
        let sol = geary_khamis_with(&d, GkSolver::Iterative).unwrap();
        assert_eq!(sol.dropped_headings, vec![1]);
        assert!((sol.matrix.value(1, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn market_cross_rates() {
        let d = PooledDataset::new(
            vec![
                CountryObservation::new("USA", vec![1.0], vec![1.0]).with_market_rate(1.0),
                CountryObservation::new("CHN", vec![1.0], vec![1.0]).with_market_rate(6.759),
            ],
            "USA",
        )
        .unwrap();
        let m = market_rates(&d).unwrap();
        assert!((m.value(1, 0) - 6.759).abs() < 1e-12);
        assert!((m.value(0, 1) - 1.0 / 6.759).abs() < 1e-12);
    }

    #[test]
    fn missing_rate_is_config_error() {
        let d = trio();
        match market_rates(&d) {
            Err(Error::Config(msg)) => assert!(msg.contains("A, B, C")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_countries_give_ones() {
        let o = |id: &str| CountryObservation::new(id, vec![2.0, 3.0], vec![4.0, 1.0]);
        let d = PooledDataset::new(vec![o("a"), o("b"), o("c")], "a").unwrap();
        for m in [fisher, geks, tornqvist, ccd, geary_khamis] {
            let ix = m(&d).unwrap();
            for row in &ix.values {
                for v in row {
                    assert!((v - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
