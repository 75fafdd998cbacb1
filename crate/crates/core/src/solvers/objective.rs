//! Sample-based objectives: CVaR over shot samples and its exact
//! distributional counterpart.

use std::collections::BTreeMap;

use crate::bits::{Bitstring, Counts};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("CVaR alpha {0} not in (0, 1]")]
    Alpha(f64),
    #[error("no samples")]
    Empty,
    #[error("no energy for sampled bitstring {0}")]
    MissingEnergy(String),
}

fn check_alpha(alpha: f64) -> Result<(), ObjectiveError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(ObjectiveError::Alpha(alpha))
    }
}

/// Mean of the lowest `⌈αK⌉` of `K` samples given as `(energy, multiplicity)`.
pub fn cvar_samples(samples: &[(f64, u64)], alpha: f64) -> Result<f64, ObjectiveError> {
    check_alpha(alpha)?;
    let total: u64 = samples.iter().map(|s| s.1).sum();
    if total == 0 {
        return Err(ObjectiveError::Empty);
    }
    // Guard against αK landing a hair above an integer.
    let keep = ((alpha * total as f64) - 1e-9).ceil().max(1.0) as u64;
    let mut sorted: Vec<(f64, u64)> = samples.iter().copied().filter(|s| s.1 > 0).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut remaining = keep;
    let mut sum = 0.0;
    for (e, c) in sorted {
        let take = c.min(remaining);
        sum += e * take as f64;
        remaining -= take;
        if remaining == 0 {
            break;
        }
    }
    Ok(sum / keep as f64)
}

pub fn cvar(
    counts: &Counts,
    energies: &BTreeMap<Bitstring, f64>,
    alpha: f64,
) -> Result<f64, ObjectiveError> {
    let samples = counts
        .iter()
        .map(|(b, &c)| {
            energies
                .get(b)
                .map(|&e| (e, c))
                .ok_or_else(|| ObjectiveError::MissingEnergy(b.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    cvar_samples(&samples, alpha)
}

/// Expected energy over the lowest `alpha` probability mass.
pub fn cvar_distribution(probs: &[f64], energies: &[f64], alpha: f64) -> Result<f64, ObjectiveError> {
    check_alpha(alpha)?;
    let mut order: Vec<usize> = (0..probs.len()).filter(|&k| probs[k] > 0.0).collect();
    if order.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let total: f64 = order.iter().map(|&k| probs[k]).sum();
    let target = alpha * total;
    let (mut mass, mut sum) = (0.0, 0.0);
    for k in order {
        let take = probs[k].min(target - mass);
        if take <= 0.0 {
            break;
        }
        sum += take * energies[k];
        mass += take;
    }
    Ok(sum / mass)
}
