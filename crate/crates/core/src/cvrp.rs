//! Cluster-first, route-second CVRP: seed selection, the customer-to-vehicle
//! assignment QUBO, classical fixing and repair, and exact per-cluster
//! routing.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::instance::CvrpInstance;
use crate::oracle::{held_karp, OracleError};
use crate::problem::QuboProblem;

pub const DEFAULT_RHO: f64 = 1.5;
pub const REFERENCE_RUNS: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CvrpError {
    #[error("requested {requested} seeds but the instance has {available} customers")]
    TooManySeeds { requested: usize, available: usize },
    #[error("vehicle {vehicle} is over-fixed: residual capacity {residual}")]
    OverFixed { vehicle: usize, residual: i64 },
    #[error("penalty weights must be positive (A = {a}, B = {b}, tau = {tau})")]
    Weights { a: f64, b: f64, tau: f64 },
    #[error("bitstring width {got} does not match the encoding width {expected}")]
    Width { expected: usize, got: usize },
    #[error("no feasible assignment: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Routing(#[from] OracleError),
}

/// Capacity handling in the assignment QUBO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Exact equality with a binary slack register per vehicle.
    HardSlack,
    /// Slack-free quadratic target plus a linear load tilt.
    Tilted,
}

impl PenaltyMode {
    pub fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyMode::HardSlack => "hard_slack",
            PenaltyMode::Tilted => "tilted",
        })
    }
}

/// Greedy max-min seeding: farthest customer from the depot first, then
/// the customer maximizing its distance to the depot and chosen seeds.
pub fn select_seeds(inst: &CvrpInstance, m: usize) -> Result<Vec<usize>, CvrpError> {
    let customers = inst.customers();
    if m > customers.len() {
        return Err(CvrpError::TooManySeeds {
            requested: m,
            available: customers.len(),
        });
    }
    let mut nearest: Vec<f64> = customers.iter().map(|&c| inst.dist(inst.depot, c)).collect();
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best: Option<usize> = None;
        for (k, &c) in customers.iter().enumerate() {
            if chosen.contains(&c) {
                continue;
            }
            if best.map_or(true, |b| nearest[k] > nearest[b]) {
                best = Some(k);
            }
        }
        let k = best.expect("m <= customers");
        let seed = customers[k];
        chosen.push(seed);
        for (j, &c) in customers.iter().enumerate() {
            nearest[j] = nearest[j].min(inst.dist(seed, c));
        }
    }
    Ok(chosen)
}

/// Customer-to-vehicle assignment with per-customer insertion costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentProblem {
    /// Customer node ids; every per-customer vector below is aligned to it.
    pub customers: Vec<usize>,
    pub demands: Vec<u64>,
    pub n_vehicles: usize,
    pub capacity: u64,
    /// Seed customer per vehicle.
    pub seeds: Vec<usize>,
    /// `assign_cost[i][v]` for customer position `i`.
    pub assign_cost: Vec<Vec<f64>>,
    /// Customer node id -> vehicle.
    pub fixed: BTreeMap<usize, usize>,
    /// Free customer node ids, in customer order.
    pub free: Vec<usize>,
}

impl AssignmentProblem {
    /// Uses `c(0,i) + c(i,seed_v) − c(0,seed_v)`, clamped at zero.
    pub fn new(inst: &CvrpInstance, seeds: Vec<usize>) -> Self {
        let customers = inst.customers();
        let demands = customers.iter().map(|&c| inst.demands[c]).collect();
        let d0 = |i: usize| inst.dist(inst.depot, i);
        let assign_cost = customers
            .iter()
            .map(|&i| {
                seeds
                    .iter()
                    .map(|&s| (d0(i) + inst.dist(i, s) - d0(s)).max(0.0))
                    .collect()
            })
            .collect();
        AssignmentProblem {
            free: customers.clone(),
            customers,
            demands,
            n_vehicles: seeds.len(),
            capacity: inst.capacity,
            seeds,
            assign_cost,
            fixed: BTreeMap::new(),
        }
    }

    /// Seeds chosen depot-farthest, one per vehicle.
    pub fn from_instance(inst: &CvrpInstance) -> Result<Self, CvrpError> {
        Ok(AssignmentProblem::new(inst, select_seeds(inst, inst.n_vehicles)?))
    }

    pub fn position(&self, customer: usize) -> usize {
        self.customers
            .iter()
            .position(|&c| c == customer)
            .unwrap_or_else(|| panic!("{customer} is not a customer"))
    }

    pub fn demand(&self, customer: usize) -> u64 {
        self.demands[self.position(customer)]
    }

    pub fn cost(&self, customer: usize, vehicle: usize) -> f64 {
        self.assign_cost[self.position(customer)][vehicle]
    }

    /// Capacity minus the demand already fixed to each vehicle.
    pub fn residual_capacity(&self) -> Vec<i64> {
        let mut r = vec![self.capacity as i64; self.n_vehicles];
        for (&c, &v) in &self.fixed {
            r[v] -= self.demand(c) as i64;
        }
        r
    }

    pub fn qubo_width(&self) -> usize {
        self.free.len() * self.n_vehicles
    }
}

/// Fixes customers whose cheapest vehicle is clearly best: second-cheapest
/// over cheapest cost at least `rho`, with capacity to spare.
pub fn fix_unambiguous(ap: &AssignmentProblem, rho: f64) -> AssignmentProblem {
    assert!(rho > 1.0, "rho must exceed 1");
    let mut out = ap.clone();
    let mut residual = out.residual_capacity();
    for c in demand_order(ap, &ap.free) {
        let Some((best, ratio)) = cost_ratio(ap, c) else {
            continue;
        };
        let d = ap.demand(c) as i64;
        if ratio >= rho && residual[best] - d >= 0 {
            residual[best] -= d;
            out.fixed.insert(c, best);
        }
    }
    out.free.retain(|c| !out.fixed.contains_key(c));
    out
}

/// Cheapest vehicle and the second-cheapest/cheapest cost ratio.
fn cost_ratio(ap: &AssignmentProblem, customer: usize) -> Option<(usize, f64)> {
    let row = &ap.assign_cost[ap.position(customer)];
    if row.len() < 2 {
        return row.first().map(|_| (0, f64::INFINITY));
    }
    let best = argmin(row.iter().copied().enumerate())?;
    let second = row
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != best)
        .map(|(_, &c)| c)
        .fold(f64::INFINITY, f64::min);
    let ratio = if row[best] > 0.0 {
        second / row[best]
    } else if second > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Some((best, ratio))
}

/// The smallest `rho` at which fixing leaves exactly `target_free`
/// customers free, if any candidate threshold achieves it.
pub fn calibrate_rho(ap: &AssignmentProblem, target_free: usize) -> Option<f64> {
    let mut candidates: Vec<f64> = ap
        .free
        .iter()
        .filter_map(|&c| cost_ratio(ap, c).map(|r| r.1))
        .filter(|r| *r > 1.0 && r.is_finite())
        .collect();
    candidates.push(DEFAULT_RHO);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates
        .into_iter()
        .find(|&rho| fix_unambiguous(ap, rho).free.len() == target_free)
}

fn demand_order(ap: &AssignmentProblem, customers: &[usize]) -> Vec<usize> {
    let mut order = customers.to_vec();
    order.sort_by(|&a, &b| ap.demand(b).cmp(&ap.demand(a)).then(a.cmp(&b)));
    order
}

fn argmin(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    values
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, b)) if b <= v => acc,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Penalty weights; `None` selects the defaults derived from the costs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub tau: Option<f64>,
}

/// Layout of the assignment QUBO variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEncoding {
    pub free: Vec<usize>,
    pub n_vehicles: usize,
    pub mode: PenaltyMode,
    /// Demands and capacities are divided by this before encoding.
    pub demand_scale: u64,
    /// Per-vehicle slack variables `(index, weight)` (hard_slack only).
    pub slack: Vec<Vec<(usize, u64)>>,
    pub width: usize,
    pub a: f64,
    pub b: f64,
    pub tau: f64,
}

impl AssignmentEncoding {
    /// Variable index of `x_{iv}` for free position `f`.
    pub fn var(&self, f: usize, v: usize) -> usize {
        f * self.n_vehicles + v
    }
}

/// Adds `weight · (Σ w_j y_j − target)²` for binary `y`.
fn add_squared_penalty(q: &mut QuboProblem, terms: &[(usize, f64)], target: f64, weight: f64) {
    for (k, &(i, wi)) in terms.iter().enumerate() {
        q.add_linear(i, weight * (wi * wi - 2.0 * target * wi));
        for &(j, wj) in &terms[k + 1..] {
            q.add_quadratic(i, j, 2.0 * weight * wi * wj);
        }
    }
    q.add_offset(weight * target * target);
}

/// Binary slack weights `1, 2, 4, …` with the last one clamped so the
/// register spans exactly `[0, r]`.
pub fn slack_weights(r: u64) -> Vec<u64> {
    let bits = (64 - r.leading_zeros()) as usize;
    let mut w: Vec<u64> = (0..bits).map(|k| 1u64 << k).collect();
    if let Some(last) = w.last_mut() {
        let below: u64 = (*last).saturating_sub(1);
        *last = r - below;
    }
    w
}

/// The assignment QUBO over free customers: `Σ d_iv x_iv`, a one-hot
/// penalty `A`, and a capacity term of the chosen mode with weight `B`.
pub fn assignment_qubo(
    ap: &AssignmentProblem,
    mode: PenaltyMode,
    weights: PenaltyWeights,
) -> Result<(QuboProblem, AssignmentEncoding), CvrpError> {
    let residual = ap.residual_capacity();
    if let Some((v, &r)) = residual.iter().enumerate().find(|(_, &r)| r < 0) {
        return Err(CvrpError::OverFixed {
            vehicle: v,
            residual: r,
        });
    }
    let nv = ap.n_vehicles;
    let max_cost = ap
        .free
        .iter()
        .flat_map(|&c| ap.assign_cost[ap.position(c)].iter().copied())
        .fold(0.0f64, f64::max);
    let default_weight = if max_cost > 0.0 { 2.0 * max_cost } else { 1.0 };
    let a = weights.a.unwrap_or(default_weight);
    let b = weights.b.unwrap_or(default_weight);

    let scale = ap
        .demands
        .iter()
        .fold(ap.capacity, |g, &d| gcd(g, d))
        .max(1);
    let free_demand: Vec<u64> = ap.free.iter().map(|&c| ap.demand(c) / scale).collect();
    let max_demand = free_demand.iter().copied().max().unwrap_or(0) as f64;
    let tau = weights.tau.unwrap_or(0.05 * b * max_demand);
    if !(a > 0.0 && b > 0.0 && tau >= 0.0) {
        return Err(CvrpError::Weights { a, b, tau });
    }

    let mut width = ap.free.len() * nv;
    let mut slack = vec![Vec::new(); nv];
    if mode == PenaltyMode::HardSlack {
        for (v, s) in slack.iter_mut().enumerate() {
            for w in slack_weights(residual[v] as u64 / scale) {
                s.push((width, w));
                width += 1;
            }
        }
    }
    let enc = AssignmentEncoding {
        free: ap.free.clone(),
        n_vehicles: nv,
        mode,
        demand_scale: scale,
        slack,
        width,
        a,
        b,
        tau,
    };

    let mut q = QuboProblem::new(width);
    for (f, &c) in ap.free.iter().enumerate() {
        let row = &ap.assign_cost[ap.position(c)];
        for v in 0..nv {
            q.add_linear(enc.var(f, v), row[v]);
        }
        let one_hot: Vec<(usize, f64)> = (0..nv).map(|v| (enc.var(f, v), 1.0)).collect();
        add_squared_penalty(&mut q, &one_hot, 1.0, a);
    }
    for v in 0..nv {
        let target = (residual[v] as u64 / scale) as f64;
        let mut terms: Vec<(usize, f64)> = free_demand
            .iter()
            .enumerate()
            .map(|(f, &d)| (enc.var(f, v), d as f64))
            .collect();
        match mode {
            PenaltyMode::HardSlack => {
                terms.extend(enc.slack[v].iter().map(|&(i, w)| (i, w as f64)));
                add_squared_penalty(&mut q, &terms, target, b);
            }
            PenaltyMode::Tilted => {
                add_squared_penalty(&mut q, &terms, target, b);
                for &(i, d) in &terms {
                    q.add_linear(i, tau * d);
                }
            }
        }
    }
    Ok((q, enc))
}

/// Customer node id -> vehicle, with per-vehicle loads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub vehicle_of: BTreeMap<usize, usize>,
    pub loads: Vec<u64>,
}

impl Assignment {
    pub fn from_map(ap: &AssignmentProblem, vehicle_of: BTreeMap<usize, usize>) -> Self {
        let mut loads = vec![0; ap.n_vehicles];
        for (&c, &v) in &vehicle_of {
            loads[v] += ap.demand(c);
        }
        Assignment { vehicle_of, loads }
    }

    fn assign(&mut self, ap: &AssignmentProblem, customer: usize, vehicle: usize) {
        if let Some(old) = self.vehicle_of.insert(customer, vehicle) {
            self.loads[old] -= ap.demand(customer);
        }
        self.loads[vehicle] += ap.demand(customer);
    }

    pub fn clusters(&self, n_vehicles: usize) -> Vec<Vec<usize>> {
        let mut clusters = vec![Vec::new(); n_vehicles];
        for (&c, &v) in &self.vehicle_of {
            clusters[v].push(c);
        }
        clusters
    }

    /// Every customer assigned and every load within capacity.
    pub fn is_feasible(&self, ap: &AssignmentProblem) -> bool {
        ap.customers.iter().all(|c| self.vehicle_of.contains_key(c))
            && self.loads.iter().all(|&l| l <= ap.capacity)
    }

    pub fn assign_cost(&self, ap: &AssignmentProblem) -> f64 {
        self.vehicle_of.iter().map(|(&c, &v)| ap.cost(c, v)).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub zero_hot: Vec<usize>,
    /// Customer and the vehicles it was placed on.
    pub multi_hot: Vec<(usize, Vec<usize>)>,
    /// Vehicle and its load in excess of capacity.
    pub over_capacity: Vec<(usize, u64)>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.zero_hot.is_empty() && self.multi_hot.is_empty() && self.over_capacity.is_empty()
    }
}

/// Decodes one-hot rows; zero- and multi-hot customers are left unassigned
/// and reported. Fixed customers are merged in.
pub fn decode_assignment(
    bits: &Bitstring,
    ap: &AssignmentProblem,
    enc: &AssignmentEncoding,
) -> Result<(Assignment, ViolationReport), CvrpError> {
    if bits.len() != enc.width {
        return Err(CvrpError::Width {
            expected: enc.width,
            got: bits.len(),
        });
    }
    let mut report = ViolationReport::default();
    let mut map = ap.fixed.clone();
    for (f, &c) in enc.free.iter().enumerate() {
        let on: Vec<usize> = (0..enc.n_vehicles).filter(|&v| bits.get(enc.var(f, v))).collect();
        match on.len() {
            0 => report.zero_hot.push(c),
            1 => {
                map.insert(c, on[0]);
            }
            _ => report.multi_hot.push((c, on)),
        }
    }
    let a = Assignment::from_map(ap, map);
    for (v, &load) in a.loads.iter().enumerate() {
        if load > ap.capacity {
            report.over_capacity.push((v, load - ap.capacity));
        }
    }
    Ok((a, report))
}

fn cheapest_with_headroom(ap: &AssignmentProblem, a: &Assignment, customer: usize, exclude: Option<usize>) -> Option<usize> {
    let d = ap.demand(customer);
    argmin(
        (0..ap.n_vehicles)
            .filter(|&v| Some(v) != exclude && a.loads[v] + d <= ap.capacity)
            .map(|v| (v, ap.cost(customer, v))),
    )
}

/// Makes an assignment feasible: unassigned customers go to the cheapest
/// vehicle with headroom, then overloaded vehicles shed the customer with
/// the smallest cost increase per unit demand. Falls back to greedy
/// first-fit when moves alone cannot clear the overload.
pub fn repair(a: &Assignment, report: &ViolationReport, ap: &AssignmentProblem) -> Result<Assignment, CvrpError> {
    let total: u64 = ap.demands.iter().sum();
    let fleet = ap.capacity * ap.n_vehicles as u64;
    if total > fleet {
        return Err(CvrpError::Infeasible(format!(
            "total demand {total} exceeds fleet capacity {fleet}"
        )));
    }
    if report.is_empty() && a.is_feasible(ap) {
        return Ok(a.clone());
    }
    let mut out = a.clone();
    let unassigned: Vec<usize> = ap
        .customers
        .iter()
        .copied()
        .filter(|c| !out.vehicle_of.contains_key(c))
        .collect();
    for c in demand_order(ap, &unassigned) {
        let v = cheapest_with_headroom(ap, &out, c, None)
            .or_else(|| argmin((0..ap.n_vehicles).map(|v| (v, ap.cost(c, v)))))
            .expect("at least one vehicle");
        out.assign(ap, c, v);
    }
    loop {
        let worst = argmin(
            out.loads
                .iter()
                .enumerate()
                .filter(|(_, &l)| l > ap.capacity)
                .map(|(v, &l)| (v, -(l as f64))),
        );
        let Some(v) = worst else {
            return Ok(out);
        };
        let mut best: Option<(usize, usize, f64)> = None;
        for (&c, &cv) in &out.vehicle_of {
            if cv != v {
                continue;
            }
            if let Some(u) = cheapest_with_headroom(ap, &out, c, Some(v)) {
                let score = (ap.cost(c, u) - ap.cost(c, v)) / ap.demand(c).max(1) as f64;
                if best.map_or(true, |(_, _, s)| score < s) {
                    best = Some((c, u, score));
                }
            }
        }
        match best {
            Some((c, u, _)) => out.assign(ap, c, u),
            None => {
                let mut fresh = ap.clone();
                fresh.fixed.clear();
                fresh.free = ap.customers.clone();
                return classical_greedy_assignment(&fresh);
            }
        }
    }
}

/// Descending-demand greedy on the free customers, keeping fixed ones.
pub fn classical_greedy_assignment(ap: &AssignmentProblem) -> Result<Assignment, CvrpError> {
    greedy_in_order(ap, &demand_order(ap, &ap.free))
}

fn greedy_in_order(ap: &AssignmentProblem, order: &[usize]) -> Result<Assignment, CvrpError> {
    let mut a = Assignment::from_map(ap, ap.fixed.clone());
    for &c in order {
        let v = cheapest_with_headroom(ap, &a, c, None).ok_or_else(|| {
            CvrpError::Infeasible(format!("no vehicle has headroom for customer {c}"))
        })?;
        a.assign(ap, c, v);
    }
    Ok(a)
}

/// Exact TSP per vehicle cluster; returns total cost and depot-first tours.
pub fn route_clusters(a: &Assignment, inst: &CvrpInstance) -> Result<(f64, Vec<Vec<usize>>), CvrpError> {
    let mut total = 0.0;
    let mut tours = Vec::new();
    for cluster in a.clusters(a.loads.len()) {
        let (cost, tour) = held_karp(inst.distance_matrix(), &cluster, inst.depot)?;
        total += cost;
        tours.push(tour);
    }
    Ok((total, tours))
}

/// Best routed cost over `runs` randomized greedy pipelines: the first run
/// uses depot-farthest seeds and demand order, later ones shuffle both.
pub fn randomized_reference(inst: &CvrpInstance, runs: usize, seed: u64) -> Result<f64, CvrpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for run in 0..runs.max(1) {
        let (ap, order) = if run == 0 {
            let ap = AssignmentProblem::from_instance(inst)?;
            let order = demand_order(&ap, &ap.free);
            (ap, order)
        } else {
            let mut customers = inst.customers();
            customers.shuffle(&mut rng);
            let ap = AssignmentProblem::new(inst, customers[..inst.n_vehicles].to_vec());
            let mut order = ap.free.clone();
            order.shuffle(&mut rng);
            (ap, order)
        };
        if let Ok(a) = greedy_in_order(&ap, &order) {
            let (cost, _) = route_clusters(&a, inst)?;
            best = best.min(cost);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(CvrpError::Infeasible("no randomized run produced a feasible assignment".into()))
    }
}
