#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use refcons::dataset::{dot, CountryObservation, PooledDataset};
use refcons::rpgraph::{RpGraph, EQ_TOL};

pub fn dataset(rows: &[(&str, Vec<f64>, Vec<f64>)]) -> PooledDataset {
    let obs = rows
        .iter()
        .map(|(id, p, q)| CountryObservation::new(*id, p.clone(), q.clone()))
        .collect();
    PooledDataset::new(obs, rows[0].0).unwrap()
}

pub fn trio() -> PooledDataset {
    dataset(&[
        ("A", vec![5.0, 9.0], vec![8.0, 6.0]),
        ("B", vec![7.0, 7.0], vec![7.0, 10.0]),
        ("C", vec![10.0, 10.0], vec![1.0, 9.0]),
    ])
}

pub fn quartet() -> PooledDataset {
    dataset(&[
        ("A", vec![5.0, 9.0], vec![8.0, 6.0]),
        ("B", vec![7.0, 7.0], vec![7.0, 10.0]),
        ("C", vec![10.0, 10.0], vec![1.0, 9.0]),
        ("D", vec![10.0, 4.0], vec![10.0, 2.0]),
    ])
}

pub fn consistent_triple() -> PooledDataset {
    dataset(&[
        ("1", vec![1.0, 1.0], vec![1.0, 2.0]),
        ("2", vec![10.0, 0.1], vec![1.0, 100.0]),
        ("3", vec![0.1, 10.0], vec![1000.0, 10.0]),
    ])
}

pub fn cyclic_triple() -> PooledDataset {
    dataset(&[
        ("1", vec![2.5, 4.5, 2.0], vec![5.0, 3.5, 1.0]),
        ("2", vec![3.5, 1.0, 5.5], vec![3.5, 4.0, 2.5]),
        ("3", vec![5.5, 3.0, 2.5], vec![3.5, 2.0, 5.5]),
    ])
}

/// Known only through its edge weights.
pub fn split_pairs() -> RpGraph {
    let w = vec![
        vec![1.0, 2.00, 0.20, 0.80],
        vec![0.50, 1.0, 0.10, 0.47],
        vec![5.00, 10.00, 1.0, 3.33],
        vec![0.97, 1.94, 0.19, 1.0],
    ];
    let ids = (1..=4).map(|i| i.to_string()).collect();
    RpGraph::from_weights(ids, &w).unwrap()
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Demands of one linear-expenditure-system consumer facing random prices
/// and incomes, so the data are rationalisable by construction.
pub fn les_dataset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PooledDataset {
    let gamma: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let shares: Vec<f64> = raw.iter().map(|a| a / total).collect();
    let obs = ids(n)
        .into_iter()
        .map(|id| {
            let p: Vec<f64> = (0..k).map(|_| log_uniform(rng, 0.3, 3.0)).collect();
            let subsistence = dot(&p, &gamma);
            let m = subsistence + log_uniform(rng, 0.5, 20.0);
            let q = (0..k)
                .map(|g| gamma[g] + shares[g] * (m - subsistence) / p[g])
                .collect();
            CountryObservation::new(id, p, q)
        })
        .collect();
    PooledDataset::new(obs, "c0").unwrap()
}

/// Arbitrary positive prices and quantities.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PooledDataset {
    let obs = ids(n)
        .into_iter()
        .map(|id| {
            let p = (0..k).map(|_| log_uniform(rng, 0.2, 5.0)).collect();
            let q = (0..k).map(|_| log_uniform(rng, 0.2, 5.0)).collect();
            CountryObservation::new(id, p, q)
        })
        .collect();
    PooledDataset::new(obs, "c0").unwrap()
}

/// Edge `u → v` is usable in a violating cycle.
fn weak(w: f64) -> bool {
    w <= 1.0 + EQ_TOL
}

fn strict(w: f64) -> bool {
    w < 1.0 - EQ_TOL
}

/// Depth-first enumeration of every simple cycle, each rooted at its
/// smallest vertex. Returns the first one whose edges all have weight at most
/// one with at least one strictly below.
pub fn brute_violating_cycle(g: &RpGraph) -> Option<Vec<usize>> {
    fn walk(g: &RpGraph, root: usize, path: &mut Vec<usize>, on: &mut [bool]) -> Option<Vec<usize>> {
        let last = *path.last().unwrap();
        for v in root..g.len() {
            let w = g.weight(last, v);
            if v == last || !weak(w) {
                continue;
            }
            if v == root {
                if path.len() > 1 {
                    let closes = path
                        .windows(2)
                        .map(|e| g.weight(e[0], e[1]))
                        .chain(std::iter::once(w))
                        .any(strict);
                    if closes {
                        return Some(path.clone());
                    }
                }
                continue;
            }
            if on[v] {
                continue;
            }
            on[v] = true;
            path.push(v);
            if let Some(c) = walk(g, root, path, on) {
                return Some(c);
            }
            path.pop();
            on[v] = false;
        }
        None
    }
    for root in 0..g.len() {
        let mut on = vec![false; g.len()];
        on[root] = true;
        if let Some(c) = walk(g, root, &mut vec![root], &mut on) {
            return Some(c);
        }
    }
    None
}

/// Reflexive transitive closure of the `w ≤ 1` relation by Floyd–Warshall.
pub fn brute_reach(g: &RpGraph) -> Vec<Vec<bool>> {
    let n = g.len();
    let mut r: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i == j || weak(g.weight(i, j))).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Optimises `c·x` over `{x ≥ 0, ge_rows·x ≥ 1, eq_row·x = 1}` by visiting
/// every basic solution. `None` when no vertex is feasible.
pub fn vertex_oracle(c: &[f64], ge_rows: &[Vec<f64>], eq_row: Option<&[f64]>, maximise: bool) -> Option<f64> {
    let k = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = ge_rows.iter().map(|r| (r.clone(), 1.0)).collect();
    for g in 0..k {
        let mut e = vec![0.0; k];
        e[g] = 1.0;
        rows.push((e, 0.0));
    }
    let free = if eq_row.is_some() { k - 1 } else { k };
    let mut best: Option<f64> = None;
    for pick in combinations(rows.len(), free) {
        let mut a: Vec<Vec<f64>> = pick.iter().map(|&i| rows[i].0.clone()).collect();
        let mut b: Vec<f64> = pick.iter().map(|&i| rows[i].1).collect();
        if let Some(e) = eq_row {
            a.push(e.to_vec());
            b.push(1.0);
        }
        let Some(x) = solve_square(a, b) else { continue };
        let feasible = rows.iter().all(|(r, rhs)| dot(r, &x) >= rhs - 1e-9 * (1.0 + rhs.abs()))
            && eq_row.map_or(true, |e| (dot(e, &x) - 1.0).abs() <= 1e-9);
        if !feasible {
            continue;
        }
        let v = dot(c, &x);
        best = Some(match best {
            None => v,
            Some(b) if maximise => b.max(v),
            Some(b) => b.min(v),
        });
    }
    best
}

/// `|a − b| ≤ tol · max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Largest relative violation of `v_ij · v_jk = v_ik`.
pub fn circularity(values: &[Vec<f64>]) -> f64 {
    let n = values.len();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let r = (values[i][j] * values[j][k] - values[i][k]).abs() / values[i][k];
                worst = worst.max(r);
            }
        }
    }
    worst
}

pub fn report(criterion: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {criterion}: {detail}");
}
