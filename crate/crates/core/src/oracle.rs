//! Exact classical oracles: maximum independent set, Held-Karp routing,
//! exhaustive QUBO minimization and small-instance CVRP optima.

use crate::bits::Bitstring;
use crate::instance::CvrpInstance;
use crate::problem::{GraphInstance, QuboProblem};

pub const MAX_MIS_VERTICES: usize = 64;
pub const MAX_TSP_NODES: usize = 13;
pub const MAX_BRUTE_FORCE_WIDTH: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("graph has {0} vertices, exact MIS supports at most {MAX_MIS_VERTICES}")]
    GraphTooLarge(usize),
    #[error("cluster has {0} customers, exact routing supports at most {MAX_TSP_NODES}")]
    ClusterTooLarge(usize),
    #[error("QUBO has {0} variables, brute force supports at most {MAX_BRUTE_FORCE_WIDTH}")]
    QuboTooLarge(usize),
    #[error("no feasible CVRP solution with {0} vehicles")]
    NoFeasibleRouting(usize),
}

struct MisSearch {
    adj: Vec<u64>,
    best_size: usize,
    best_set: u64,
}

impl MisSearch {
    fn closed(&self, v: usize) -> u64 {
        self.adj[v] | (1u64 << v)
    }

    /// Greedy clique cover size of `cand`; each clique holds at most one
    /// vertex of any independent set.
    fn clique_cover(&self, mut cand: u64) -> usize {
        let mut count = 0;
        while cand != 0 {
            let v = cand.trailing_zeros() as usize;
            let mut clique = 1u64 << v;
            let mut grow = cand & self.adj[v];
            while grow != 0 {
                let u = grow.trailing_zeros() as usize;
                clique |= 1u64 << u;
                grow &= self.adj[u];
            }
            cand &= !clique;
            count += 1;
        }
        count
    }

    fn search(&mut self, mut cand: u64, mut current: u64, mut size: usize) {
        // Vertices of degree <= 1 inside `cand` belong to some maximum set.
        'reduce: loop {
            let mut rest = cand;
            while rest != 0 {
                let v = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                if (self.adj[v] & cand).count_ones() <= 1 {
                    current |= 1u64 << v;
                    size += 1;
                    cand &= !self.closed(v);
                    continue 'reduce;
                }
            }
            break;
        }
        if cand == 0 {
            if size > self.best_size {
                self.best_size = size;
                self.best_set = current;
            }
            return;
        }
        if size + self.clique_cover(cand) <= self.best_size {
            return;
        }
        let mut pivot = 0;
        let mut pivot_deg = 0;
        let mut rest = cand;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let d = (self.adj[v] & cand).count_ones();
            if d > pivot_deg {
                pivot = v;
                pivot_deg = d;
            }
        }
        self.search(cand & !self.closed(pivot), current | (1u64 << pivot), size + 1);
        self.search(cand & !(1u64 << pivot), current, size);
    }
}

/// Maximum independent set by branch and bound (max-degree branching,
/// greedy clique-cover bound).
pub fn exact_mis(graph: &GraphInstance) -> Result<(usize, Bitstring), OracleError> {
    let n = graph.n();
    if n > MAX_MIS_VERTICES {
        return Err(OracleError::GraphTooLarge(n));
    }
    let mut adj = vec![0u64; n];
    for &(u, v) in graph.edges() {
        adj[u] |= 1u64 << v;
        adj[v] |= 1u64 << u;
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut s = MisSearch {
        adj,
        best_size: 0,
        best_set: 0,
    };
    s.search(all, 0, 0);
    Ok((s.best_size, Bitstring::from_index(s.best_set, n)))
}

/// Optimal closed tour from `depot` through every node of `nodes`.
///
/// The returned tour starts at the depot and lists visits in order; the
/// return leg to the depot is implied.
pub fn held_karp(
    dist: &[Vec<f64>],
    nodes: &[usize],
    depot: usize,
) -> Result<(f64, Vec<usize>), OracleError> {
    let m = nodes.len();
    if m > MAX_TSP_NODES {
        return Err(OracleError::ClusterTooLarge(m));
    }
    if m == 0 {
        return Ok((0.0, vec![depot]));
    }
    let full = (1usize << m) - 1;
    let mut cost = vec![f64::INFINITY; (1 << m) * m];
    let mut parent = vec![usize::MAX; (1 << m) * m];
    for (j, &v) in nodes.iter().enumerate() {
        cost[(1 << j) * m + j] = dist[depot][v];
    }
    for mask in 1..=full {
        for j in 0..m {
            let here = cost[mask * m + j];
            if mask & (1 << j) == 0 || here.is_infinite() {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let c = here + dist[nodes[j]][nodes[k]];
                if c < cost[next * m + k] {
                    cost[next * m + k] = c;
                    parent[next * m + k] = j;
                }
            }
        }
    }
    let (mut last, best) = (0..m)
        .map(|j| (j, cost[full * m + j] + dist[nodes[j]][depot]))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });

    let mut order = Vec::with_capacity(m);
    let mut mask = full;
    while mask != 0 {
        order.push(nodes[last]);
        let p = parent[mask * m + last];
        mask &= !(1 << last);
        last = p;
    }
    order.push(depot);
    order.reverse();
    Ok((best, order))
}

/// Exhaustive minimum of a QUBO and every assignment attaining it.
pub fn brute_force_qubo_min(q: &QuboProblem) -> Result<(f64, Vec<Bitstring>), OracleError> {
    let n = q.n();
    if n > MAX_BRUTE_FORCE_WIDTH {
        return Err(OracleError::QuboTooLarge(n));
    }
    let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(i, j), &c) in q.quadratic() {
        neighbours[i].push((j, c));
        neighbours[j].push((i, c));
    }
    let scale = 1.0 + q.max_abs_coefficient() * (n * n) as f64;
    let slack = 1e-9 * scale;

    // Gray-code walk with incremental energies; near-ties are re-scored exactly.
    let mut bits = vec![false; n];
    let mut energy = q.offset();
    let mut min = energy;
    let mut candidates: Vec<u64> = vec![0];
    let mut state = 0u64;
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        let mut field = q.linear()[i];
        for &(j, c) in &neighbours[i] {
            if bits[j] {
                field += c;
            }
        }
        if bits[i] {
            energy -= field;
        } else {
            energy += field;
        }
        bits[i] = !bits[i];
        state ^= 1u64 << i;
        if energy < min - slack {
            min = energy;
            candidates.clear();
            candidates.push(state);
        } else if energy <= min + slack {
            min = min.min(energy);
            candidates.push(state);
        }
    }

    let scored: Vec<(f64, Bitstring)> = candidates
        .into_iter()
        .map(|k| {
            let b = Bitstring::from_index(k, n);
            (q.evaluate_unchecked(b.as_slice()), b)
        })
        .collect();
    let exact_min = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * scale;
    let mut minimizers: Vec<Bitstring> = scored
        .into_iter()
        .filter(|(e, _)| *e <= exact_min + tol)
        .map(|(_, b)| b)
        .collect();
    minimizers.sort();
    Ok((exact_min, minimizers))
}

/// Optimal CVRP cost over at most `n_vehicles` routes by set partitioning
/// over all capacity-feasible customer subsets. Only for small instances.
pub fn exact_cvrp(inst: &CvrpInstance) -> Result<(f64, Vec<Vec<usize>>), OracleError> {
    let customers = inst.customers();
    let m = customers.len();
    if m > MAX_TSP_NODES {
        return Err(OracleError::ClusterTooLarge(m));
    }
    let dist = inst.distance_matrix();
    let depot = inst.depot;
    let size = 1usize << m;

    // Subset tour costs from one Held-Karp table over all customers.
    let mut dp = vec![f64::INFINITY; size * m.max(1)];
    for (j, &v) in customers.iter().enumerate() {
        dp[(1 << j) * m + j] = dist[depot][v];
    }
    for mask in 1..size {
        for j in 0..m {
            let here = dp[mask * m + j];
            if mask & (1 << j) == 0 || here.is_infinite() {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) == 0 {
                    let idx = (mask | (1 << k)) * m + k;
                    let c = here + dist[customers[j]][customers[k]];
                    if c < dp[idx] {
                        dp[idx] = c;
                    }
                }
            }
        }
    }
    let mut route_cost = vec![f64::INFINITY; size];
    route_cost[0] = 0.0;
    for mask in 1..size {
        let load: u64 = (0..m)
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| inst.demands[customers[j]])
            .sum();
        if load > inst.capacity {
            continue;
        }
        route_cost[mask] = (0..m)
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| dp[mask * m + j] + dist[customers[j]][depot])
            .fold(f64::INFINITY, f64::min);
    }

    // best[k][mask]: cheapest cover of `mask` with at most k routes.
    let k_max = inst.n_vehicles;
    let mut best = vec![vec![f64::INFINITY; size]; k_max + 1];
    let mut choice = vec![vec![0usize; size]; k_max + 1];
    for row in best.iter_mut() {
        row[0] = 0.0;
    }
    for k in 1..=k_max {
        for mask in 1..size {
            let low = mask & mask.wrapping_neg();
            let mut sub = mask;
            while sub != 0 {
                if sub & low != 0 && route_cost[sub].is_finite() {
                    let c = route_cost[sub] + best[k - 1][mask ^ sub];
                    if c < best[k][mask] {
                        best[k][mask] = c;
                        choice[k][mask] = sub;
                    }
                }
                sub = (sub - 1) & mask;
            }
        }
    }
    let total = best[k_max][size - 1];
    if !total.is_finite() {
        return Err(OracleError::NoFeasibleRouting(k_max));
    }
    let mut clusters = Vec::new();
    let (mut mask, mut k) = (size - 1, k_max);
    while mask != 0 {
        let sub = choice[k][mask];
        clusters.push(
            (0..m)
                .filter(|&j| sub & (1 << j) != 0)
                .map(|j| customers[j])
                .collect(),
        );
        mask ^= sub;
        k -= 1;
    }
    Ok((total, clusters))
}
