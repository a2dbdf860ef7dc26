//! World output, Lorenz curves and the inter-country Gini coefficient.

use serde::{Deserialize, Serialize};

use crate::dataset::PooledDataset;
use crate::error::{Error, Result};
use crate::indices::IndexMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldOutput {
    pub ids: Vec<String>,
    /// Population × per-capita expenditure ÷ parity against the base.
    pub real_expenditure: Vec<f64>,
    pub per_capita: Vec<f64>,
    pub populations: Vec<f64>,
    pub total: f64,
}

/// Real expenditure of every country under `index`, converted at its parity
/// against the dataset's base country. Countries are matched by id.
pub fn world_output(data: &PooledDataset, index: &IndexMatrix) -> Result<WorldOutput> {
    let missing: Vec<&str> = data
        .observations()
        .iter()
        .filter(|o| o.population.is_none())
        .map(|o| o.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "population missing for {}",
            missing.join(", ")
        )));
    }
    let base = index.index_of(data.base_id()).ok_or_else(|| {
        Error::Structural(format!("{} matrix lacks the base country", index.method))
    })?;
    let mut out = WorldOutput {
        ids: Vec::new(),
        real_expenditure: Vec::new(),
        per_capita: Vec::new(),
        populations: Vec::new(),
        total: 0.0,
    };
    for o in data.observations() {
        let Some(i) = index.index_of(&o.id) else {
            return Err(Error::Structural(format!(
                "{} matrix lacks country {}",
                index.method, o.id
            )));
        };
        let pop = o.population.unwrap_or(f64::NAN);
        let per_capita = o.expenditure() / index.value(i, base);
        out.ids.push(o.id.clone());
        out.per_capita.push(per_capita);
        out.populations.push(pop);
        out.real_expenditure.push(pop * per_capita);
        out.total += pop * per_capita;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    /// Cumulative (population share, expenditure share), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    /// Country order along the curve, poorest first.
    pub order: Vec<usize>,
}

impl LorenzCurve {
    /// `1 − Σ (X_k − X_{k−1})(Y_k + Y_{k−1})`.
    pub fn gini(&self) -> f64 {
        1.0 - self
            .points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
            .sum::<f64>()
    }
}

fn validate(per_capita: &[f64], populations: &[f64]) -> Result<()> {
    if per_capita.len() != populations.len() || per_capita.is_empty() {
        return Err(Error::Structural(
            "per-capita values and populations must be non-empty and aligned".into(),
        ));
    }
    if per_capita.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain("per-capita values must be non-negative".into()));
    }
    if populations.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Domain("populations must be positive".into()));
    }
    if per_capita.iter().all(|v| *v == 0.0) {
        return Err(Error::Domain("all expenditures are zero".into()));
    }
    Ok(())
}

/// Population-weighted Lorenz curve. `ids` break ties between equal
/// per-capita values; pass an empty slice to break them by position.
pub fn lorenz(per_capita: &[f64], populations: &[f64], ids: &[String]) -> Result<LorenzCurve> {
    validate(per_capita, populations)?;
    let mut order: Vec<usize> = (0..per_capita.len()).collect();
    order.sort_by(|&a, &b| {
        per_capita[a]
            .partial_cmp(&per_capita[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| match (ids.get(a), ids.get(b)) {
                (Some(x), Some(y)) => x.cmp(y),
                _ => a.cmp(&b),
            })
    });
    let total_pop: f64 = populations.iter().sum();
    let total: f64 = per_capita.iter().zip(populations).map(|(v, p)| v * p).sum();
    let mut points = vec![(0.0, 0.0)];
    let (mut x, mut y) = (0.0, 0.0);
    for &i in &order {
        x += populations[i];
        y += per_capita[i] * populations[i];
        points.push((x / total_pop, y / total));
    }
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0);
    }
    Ok(LorenzCurve { points, order })
}

/// Population-weighted Gini coefficient by trapezoid integration of the
/// Lorenz curve.
pub fn gini(per_capita: &[f64], populations: &[f64]) -> Result<f64> {
    Ok(lorenz(per_capita, populations, &[])?.gini())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CountryObservation;
    use crate::indices::Method;

    #[test]
    fn equal_values_have_zero_gini() {
        assert!(gini(&[3.0, 3.0, 3.0], &[1.0, 5.0, 2.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_point_half() {
        assert_eq!(gini(&[0.0, 7.0], &[4.0, 4.0]).unwrap(), 0.5);
    }

    #[test]
    fn single_country_curve() {
        let c = lorenz(&[2.0], &[10.0], &[]).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn all_zero_is_domain_error() {
        assert!(matches!(gini(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn ties_sorted_by_id() {
        let ids = vec!["b".to_string(), "a".to_string()];
        let c = lorenz(&[1.0, 1.0], &[1.0, 1.0], &ids).unwrap();
        assert_eq!(c.order, vec![1, 0]);
    }

    #[test]
    fn output_at_unit_parity() {
        let d = PooledDataset::new(
            vec![
                CountryObservation::new("a", vec![1.0, 2.0], vec![3.0, 1.0]).with_population(10.0),
                CountryObservation::new("b", vec![1.0, 2.0], vec![3.0, 1.0]).with_population(10.0),
            ],
            "a",
        )
        .unwrap();
        let ix = IndexMatrix::from_levels(Method::Geks, d.ids(), &[1.0, 1.0]);
        let w = world_output(&d, &ix).unwrap();
        assert_eq!(w.total, 100.0);
        let ix2 = IndexMatrix::from_levels(Method::Geks, d.ids(), &[1.0, 2.0]);
        assert_eq!(world_output(&d, &ix2).unwrap().real_expenditure[1], 25.0);
    }

    #[test]
    fn missing_population_listed() {
        let d = PooledDataset::new(
            vec![CountryObservation::new("solo", vec![1.0], vec![1.0])],
            "solo",
        )
        .unwrap();
        let ix = IndexMatrix::from_levels(Method::Geks, d.ids(), &[1.0]);
        match world_output(&d, &ix) {
            Err(Error::Config(m)) => assert!(m.contains("solo")),
            other => panic!("{other:?}"),
        }
    }
}
