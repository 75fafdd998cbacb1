//! Seeded generators for curriculum instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::CvrpInstance;
use crate::problem::GraphInstance;
use crate::seed::{derive_seed, hash_str};

/// G(n, p) with a seeded generator.
pub fn erdos_renyi(name: &str, n: usize, p: f64, seed: u64) -> GraphInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    GraphInstance::new(name, n, edges).expect("generated edges are valid")
}

/// `per_size` random graphs for each size; names encode size and index.
pub fn mis_ladder(sizes: &[usize], p: f64, per_size: usize, seed: u64) -> Vec<Vec<GraphInstance>> {
    sizes
        .iter()
        .map(|&n| {
            (0..per_size)
                .map(|k| {
                    let name = format!("mis-n{n}-{k}");
                    erdos_renyi(&name, n, p, derive_seed(seed, hash_str(&name)))
                })
                .collect()
        })
        .collect()
}

pub const CVRP_CAPACITY: u64 = 30;

/// Uniform coordinates in `[0, 100]²` (rounded to integers), depot first,
/// demands uniform in `[1, capacity/3]`, and enough vehicles for 80% load.
pub fn random_cvrp(name_prefix: &str, n_customers: usize, capacity: u64, seed: u64) -> CvrpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<(f64, f64)> = (0..=n_customers)
        .map(|_| (rng.gen_range(0..=100) as f64, rng.gen_range(0..=100) as f64))
        .collect();
    let max_demand = (capacity / 3).max(1);
    let mut demands = vec![0];
    demands.extend((0..n_customers).map(|_| rng.gen_range(1..=max_demand)));
    let total: u64 = demands.iter().sum();
    let vehicles = ((total as f64 / (0.8 * capacity as f64)).ceil() as usize).max(2);
    let name = format!("{name_prefix}-n{}-k{vehicles}", n_customers + 1);
    CvrpInstance::new(name, coords, demands, capacity, vehicles, 0)
}
