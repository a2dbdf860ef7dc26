//! Weighted country graph with Laspeyres quantity-index edge weights,
//! revealed-preference reachability, and the GARP (CEWEC) and HARP tests.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{dot, PooledDataset};
use crate::error::{Error, Result};

/// Relative tolerance for comparing edge weights against 1.
pub const EQ_TOL: f64 = 1e-9;

/// Largest dataset accepted by the exhaustive maximum-subset search.
pub const EXACT_SUBSET_MAX: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpGraph {
    ids: Vec<String>,
    n: usize,
    weights: Vec<f64>,
}

impl RpGraph {
    /// `w[m][n] = p_m·q_n / p_m·q_m`.
    pub fn build(data: &PooledDataset) -> Result<Self> {
        let n = data.len();
        let mut weights = vec![0.0; n * n];
        for m in 0..n {
            let own = data.expenditure(m);
            if !(own > 0.0) {
                return Err(Error::Validation(format!(
                    "{} has zero total expenditure",
                    data.obs(m).id
                )));
            }
            for j in 0..n {
                weights[m * n + j] = if m == j { 1.0 } else { data.cross(m, j) / own };
            }
        }
        Ok(RpGraph {
            ids: data.ids(),
            n,
            weights,
        })
    }

    /// Graph from an explicit weight matrix (diagonal forced to 1).
    pub fn from_weights(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = ids.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Structural("weight matrix must be n×n".into()));
        }
        let mut weights = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if i != j && !(w.is_finite() && w > 0.0) {
                    return Err(Error::Validation(format!("weight ({i},{j}) = {w}")));
                }
                weights.push(if i == j { 1.0 } else { w });
            }
        }
        Ok(RpGraph { ids, n, weights })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from * self.n + to]
    }

    /// `from` is directly revealed preferred to `to`.
    pub fn direct(&self, from: usize, to: usize) -> bool {
        self.weight(from, to) <= 1.0 + EQ_TOL
    }

    pub fn strict_direct(&self, from: usize, to: usize) -> bool {
        self.weight(from, to) < 1.0 - EQ_TOL
    }

    pub fn subgraph(&self, vertices: &[usize]) -> RpGraph {
        let n = vertices.len();
        let mut weights = Vec::with_capacity(n * n);
        for &a in vertices {
            for &b in vertices {
                weights.push(self.weight(a, b));
            }
        }
        RpGraph {
            ids: vertices.iter().map(|&v| self.ids[v].clone()).collect(),
            n,
            weights,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, self.weight(i, j)))
        })
    }
}

/// Square boolean matrix stored as packed bit rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n);
        for i in 0..n {
            m.set(i, i);
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn row_iter(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    /// Boolean product `self · other`.
    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        let mut out = BitMatrix::new(self.n);
        for i in 0..self.n {
            let mut acc = vec![0u64; self.words];
            for k in self.row_iter(i) {
                for (a, b) in acc.iter_mut().zip(other.row(k)) {
                    *a |= *b;
                }
            }
            out.bits[i * self.words..(i + 1) * self.words].copy_from_slice(&acc);
        }
        out
    }

    /// Reflexive-transitive closure by repeated squaring.
    pub fn closure(&self) -> BitMatrix {
        let mut r = self.clone();
        for i in 0..self.n {
            r.set(i, i);
        }
        loop {
            let sq = r.mul(&r);
            if sq == r {
                return r;
            }
            r = sq;
        }
    }
}

/// Revealed-preference relations `R` (weak) and `P` (strict) over the vertices.
#[derive(Clone, Debug)]
pub struct Reachability {
    pub reach: BitMatrix,
    pub strict: BitMatrix,
}

impl Reachability {
    pub fn compute(g: &RpGraph) -> Self {
        let n = g.len();
        let mut direct = BitMatrix::new(n);
        let mut strict_direct = BitMatrix::new(n);
        for i in 0..n {
            for j in 0..n {
                if g.direct(i, j) {
                    direct.set(i, j);
                }
                if g.strict_direct(i, j) {
                    strict_direct.set(i, j);
                }
            }
        }
        let reach = direct.closure();
        let strict = reach.mul(&strict_direct).mul(&reach);
        Reachability { reach, strict }
    }

    pub fn len(&self) -> usize {
        self.reach.n
    }

    pub fn is_empty(&self) -> bool {
        self.reach.n == 0
    }

    pub fn reaches(&self, u: usize, v: usize) -> bool {
        self.reach.get(u, v)
    }

    pub fn strictly_reaches(&self, u: usize, v: usize) -> bool {
        self.strict.get(u, v)
    }

    /// Countries revealed preferred to `v` (`u R v`), including `v`.
    pub fn vrp(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&u| self.reaches(u, v)).collect()
    }

    /// Countries revealed worse than `v` (`v R u`), including `v`.
    pub fn vrw(&self, v: usize) -> Vec<usize> {
        self.reach.row_iter(v).collect()
    }
}

/// A closed walk `vertices[0] → vertices[1] → … → vertices[0]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViolationCycle {
    pub vertices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ViolationCycle {
    pub fn from_vertices(g: &RpGraph, vertices: Vec<usize>) -> Self {
        let len = vertices.len();
        let weights = (0..len)
            .map(|l| g.weight(vertices[l], vertices[(l + 1) % len]))
            .collect();
        ViolationCycle { vertices, weights }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn product(&self) -> f64 {
        self.weights.iter().product()
    }

    /// All weights at most 1 and at least one strictly below.
    pub fn violates_cewec(&self) -> bool {
        self.weights.iter().all(|w| *w <= 1.0 + EQ_TOL)
            && self.weights.iter().any(|w| *w < 1.0 - EQ_TOL)
    }

    pub fn describe(&self, ids: &[String]) -> String {
        let mut names: Vec<&str> = self.vertices.iter().map(|&v| ids[v].as_str()).collect();
        if let Some(first) = names.first().copied() {
            names.push(first);
        }
        names.join(" -> ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Verdict {
    Satisfied,
    Violated(ViolationCycle),
}

impl Verdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Verdict::Satisfied)
    }

    pub fn cycle(&self) -> Option<&ViolationCycle> {
        match self {
            Verdict::Satisfied => None,
            Verdict::Violated(c) => Some(c),
        }
    }
}

/// Ordered pairs `(i, j)` with `i R j` and `w_ji < 1`: each closes a violating cycle.
pub fn violating_pairs(g: &RpGraph, rel: &Reachability) -> Vec<(usize, usize)> {
    let n = g.len();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && rel.reaches(i, j) && g.strict_direct(j, i))
        .collect()
}

/// Shortest walk of direct (`w ≤ 1`) edges from `from` to `to`.
fn direct_path(g: &RpGraph, from: usize, to: usize) -> Option<Vec<usize>> {
    let n = g.len();
    let mut prev = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut v = to;
            while v != from {
                v = prev[v];
                path.push(v);
            }
            path.reverse();
            return Some(path);
        }
        for v in 0..n {
            if !seen[v] && v != u && g.direct(u, v) {
                seen[v] = true;
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    None
}

/// GARP test: transitive closure of the `w ≤ 1` relation, violated iff some
/// `i R j` has `w_ji < 1`. The witness is rebuilt along a shortest path.
pub fn check_cewec(g: &RpGraph) -> Verdict {
    let rel = Reachability::compute(g);
    check_cewec_with(g, &rel)
}

pub fn check_cewec_with(g: &RpGraph, rel: &Reachability) -> Verdict {
    match violating_pairs(g, rel).first() {
        None => Verdict::Satisfied,
        Some(&(i, j)) => {
            let path = direct_path(g, i, j).expect("closure and path search disagree");
            Verdict::Violated(ViolationCycle::from_vertices(g, path))
        }
    }
}

/// HARP test: every cycle's weight product must be at least 1.
///
/// Bellman–Ford on `ln w + EQ_TOL` edge costs from a virtual source; a cycle
/// whose product falls below `exp(-EQ_TOL·len)` is reported.
pub fn check_harp(g: &RpGraph) -> Verdict {
    let n = g.len();
    let cost = |i: usize, j: usize| g.weight(i, j).ln() + EQ_TOL;
    let mut dist = vec![0.0_f64; n];
    let mut pred = vec![usize::MAX; n];
    let mut last_relaxed = None;
    for _ in 0..n {
        last_relaxed = None;
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    let d = dist[u] + cost(u, v);
                    if d < dist[v] {
                        dist[v] = d;
                        pred[v] = u;
                        last_relaxed = Some(v);
                    }
                }
            }
        }
        if last_relaxed.is_none() {
            return Verdict::Satisfied;
        }
    }
    let Some(mut v) = last_relaxed else {
        return Verdict::Satisfied;
    };
    for _ in 0..n {
        v = pred[v];
    }
    let start = v;
    let mut cycle = vec![start];
    let mut u = pred[start];
    while u != start {
        cycle.push(u);
        u = pred[u];
    }
    cycle.reverse();
    Verdict::Violated(ViolationCycle::from_vertices(g, cycle))
}

/// Money pump index of a violating cycle: arbitrage profit as a share of the
/// cycle's total expenditure.
pub fn money_pump_index(data: &PooledDataset, cycle: &ViolationCycle) -> Result<f64> {
    if cycle.is_empty() {
        return Err(Error::Domain("empty cycle".into()));
    }
    let len = cycle.len();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut weights = Vec::with_capacity(len);
    for l in 0..len {
        let a = cycle.vertices[l];
        let b = cycle.vertices[(l + 1) % len];
        let own = data.expenditure(a);
        let next = dot(&data.obs(a).prices, &data.obs(b).quantities);
        weights.push(next / own);
        num += own - next;
        den += own;
    }
    let check = ViolationCycle {
        vertices: cycle.vertices.clone(),
        weights,
    };
    if !check.violates_cewec() {
        return Err(Error::Domain(
            "cycle does not violate revealed preference; money pump index undefined".into(),
        ));
    }
    Ok(num / den)
}

/// Expenditure at base prices retained by `members`.
fn retained_value(data: &PooledDataset, members: &[usize]) -> f64 {
    members.iter().map(|&i| data.real_expenditure(i)).sum()
}

/// Largest subset passing the GARP test.
///
/// Greedy mode repeatedly drops the vertex involved in the most violating
/// pairs; ties go to the smaller expenditure at base prices, then the
/// lexicographically smaller id. Exact mode enumerates all subsets
/// (`n ≤ EXACT_SUBSET_MAX`) and, among the largest consistent ones, keeps
/// the largest expenditure at base prices.
pub fn max_reference_set(data: &PooledDataset, exact: bool) -> Result<Vec<usize>> {
    let g = RpGraph::build(data)?;
    if exact {
        return exact_reference_set(data, &g);
    }
    let mut active: Vec<usize> = (0..g.len()).collect();
    loop {
        let sub = g.subgraph(&active);
        let rel = Reachability::compute(&sub);
        let pairs = violating_pairs(&sub, &rel);
        if pairs.is_empty() {
            return Ok(active);
        }
        let mut counts = vec![0usize; active.len()];
        for (i, j) in pairs {
            counts[i] += 1;
            counts[j] += 1;
        }
        let victim = (0..active.len())
            .max_by(|&a, &b| {
                let (ga, gb) = (active[a], active[b]);
                counts[a]
                    .cmp(&counts[b])
                    .then_with(|| {
                        data.real_expenditure(gb)
                            .partial_cmp(&data.real_expenditure(ga))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .then_with(|| data.obs(gb).id.cmp(&data.obs(ga).id))
            })
            .expect("non-empty active set");
        active.remove(victim);
    }
}

fn exact_reference_set(data: &PooledDataset, g: &RpGraph) -> Result<Vec<usize>> {
    let n = g.len();
    if n > EXACT_SUBSET_MAX {
        return Err(Error::Config(format!(
            "exact subset search supports at most {EXACT_SUBSET_MAX} countries, got {n}"
        )));
    }
    for size in (1..=n).rev() {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let members: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            if !check_cewec(&g.subgraph(&members)).is_satisfied() {
                continue;
            }
            let value = retained_value(data, &members);
            let better = match &best {
                None => true,
                Some((v, m)) => value > *v || (value == *v && members < *m),
            };
            if better {
                best = Some((value, members));
            }
        }
        if let Some((_, members)) = best {
            return Ok(members);
        }
    }
    Ok(Vec::new())
}

/// Cosine similarity of two price vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Candidate homothetic reference-consumer group grown from one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomotheticCandidate {
    pub seed: usize,
    pub members: Vec<usize>,
    /// Mean of the group's output share and population share.
    pub coverage: f64,
}

/// Grows a HARP-consistent group from `seed`, visiting countries by
/// descending cosine price similarity. Min-path costs are maintained
/// incrementally so each admission test is quadratic.
fn grow_homothetic(g: &RpGraph, data: &PooledDataset, seed: usize) -> Vec<usize> {
    let n = g.len();
    let cost = |i: usize, j: usize| g.weight(i, j).ln() + EQ_TOL;
    let mut order: Vec<usize> = (0..n).collect();
    let sims: Vec<f64> = (0..n)
        .map(|i| cosine_similarity(&data.obs(seed).prices, &data.obs(i).prices))
        .collect();
    order.sort_by(|&a, &b| {
        (b == seed)
            .cmp(&(a == seed))
            .then_with(|| sims[b].partial_cmp(&sims[a]).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    let mut members: Vec<usize> = Vec::new();
    // dist[a][b] over member positions
    let mut dist: Vec<Vec<f64>> = Vec::new();
    for &cand in &order {
        let k = members.len();
        let out: Vec<f64> = (0..k)
            .map(|b| {
                (0..k)
                    .map(|u| cost(cand, members[u]) + dist[u][b])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let inn: Vec<f64> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|u| dist[a][u] + cost(members[u], cand))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let through = (0..k)
            .map(|b| out[b] + cost(members[b], cand))
            .fold(f64::INFINITY, f64::min);
        if through < 0.0 {
            continue;
        }
        for a in 0..k {
            for b in 0..k {
                let via = inn[a] + out[b];
                if via < dist[a][b] {
                    dist[a][b] = via;
                }
            }
        }
        for (a, row) in dist.iter_mut().enumerate() {
            row.push(inn[a]);
        }
        let mut last = out;
        last.push(0.0);
        dist.push(last);
        members.push(cand);
    }
    members.sort_unstable();
    members
}

fn coverage(data: &PooledDataset, members: &[usize]) -> f64 {
    let pop = |i: usize| data.obs(i).population.unwrap_or(1.0);
    let output = |i: usize| pop(i) * data.real_expenditure(i);
    let all: Vec<usize> = (0..data.len()).collect();
    let share = |f: &dyn Fn(usize) -> f64| {
        members.iter().map(|&i| f(i)).sum::<f64>() / all.iter().map(|&i| f(i)).sum::<f64>()
    };
    (share(&output) + share(&pop)) / 2.0
}

/// Greedy homothetic reference-consumer construction: one candidate per
/// seed, best coverage wins (ties: larger group, then earlier seed).
pub fn greedy_homothetic_refset(data: &PooledDataset) -> Result<HomotheticCandidate> {
    let g = RpGraph::build(data)?;
    let candidates: Vec<HomotheticCandidate> = (0..g.len())
        .into_par_iter()
        .map(|seed| {
            let members = grow_homothetic(&g, data, seed);
            let coverage = coverage(data, &members);
            HomotheticCandidate {
                seed,
                members,
                coverage,
            }
        })
        .collect();
    candidates
        .into_iter()
        .reduce(|best, c| {
            let better = c.coverage > best.coverage + 1e-12
                || ((c.coverage - best.coverage).abs() <= 1e-12
                    && c.members.len() > best.members.len());
            if better {
                c
            } else {
                best
            }
        })
        .ok_or_else(|| Error::EmptyDataset("no countries".into()))
}
