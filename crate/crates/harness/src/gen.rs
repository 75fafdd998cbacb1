//! Writes seeded instance sets to disk.

use std::path::{Path, PathBuf};

use qpolicy_core::generate::{mis_ladder, random_cvrp, CVRP_CAPACITY};
use qpolicy_core::instance::{write_edge_list, write_vrplib, GraphFormat};
use qpolicy_core::seed::derive_seed;
use qpolicy_core::tasks::{reference_cost, reference_path};

use crate::HarnessError;

pub const MIS_SIZES: [usize; 4] = [8, 10, 12, 16];
pub const MIS_EDGE_PROBABILITY: f64 = 0.3;
pub const MIS_PER_SIZE: usize = 4;
pub const CVRP_CUSTOMERS: [usize; 3] = [8, 10, 12];
pub const CVRP_PER_SIZE: usize = 2;

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Edge-list files `mis-n{N}-{k}.txt`.
pub fn write_mis_ladder(out: &Path, sizes: &[usize], per_size: usize, seed: u64) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut paths = Vec::new();
    for g in mis_ladder(sizes, MIS_EDGE_PROBABILITY, per_size, seed).into_iter().flatten() {
        let path = out.join(format!("{}.txt", g.name));
        write(&path, &write_edge_list(&g, GraphFormat::Simple))?;
        paths.push(path);
    }
    Ok(paths)
}

/// VRPLIB files with `.ref.json` reference sidecars.
pub fn write_cvrp_set(out: &Path, customers: &[usize], per_size: usize, seed: u64) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut paths = Vec::new();
    for &n in customers {
        for k in 0..per_size {
            let s = derive_seed(seed, (n * 1000 + k) as u64);
            let inst = random_cvrp(&format!("gen{k}"), n, CVRP_CAPACITY, s);
            let path = out.join(format!("{}.vrp", inst.name));
            write(&path, &write_vrplib(&inst))?;
            let reference = reference_cost(&inst, s).map_err(|e| HarnessError::Execution(e.to_string()))?;
            let mut text = serde_json::to_string_pretty(&reference).expect("serializes");
            text.push('\n');
            write(&reference_path(&path), &text)?;
            paths.push(path);
        }
    }
    Ok(paths)
}
