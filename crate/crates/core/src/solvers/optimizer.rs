//! Derivative-free local minimization (Nelder-Mead simplex).

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("objective returned a non-finite value {value} at evaluation {eval}")]
    NonFinite { value: f64, eval: usize },
    #[error("maxiter must be >= 1")]
    ZeroIterations,
    #[error("initial point contains non-finite entries")]
    NonFiniteStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub maxiter: usize,
    /// Stop once every vertex is within `xtol` (max-norm) of the best one.
    pub xtol: f64,
    /// Stop once the objective spread across the simplex is below `ftol`.
    pub ftol: f64,
    pub initial_step: f64,
    pub max_evals: Option<usize>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            maxiter: 200,
            xtol: 1e-6,
            ftol: 1e-9,
            initial_step: 0.5,
            max_evals: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Best-so-far objective after each iteration (nonincreasing).
    pub history: Vec<f64>,
    pub evals: usize,
    pub iterations: usize,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> Result<f64, OptimizeError> {
        self.evals += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            return Err(OptimizeError::NonFinite {
                value: v,
                eval: self.evals,
            });
        }
        Ok(v)
    }
}

/// Standard Nelder-Mead with reflection 1, expansion 2, contraction 1/2 and
/// shrink 1/2.
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<OptimizeResult, OptimizeError>
where
    F: FnMut(&[f64]) -> f64,
{
    if opts.maxiter == 0 {
        return Err(OptimizeError::ZeroIterations);
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(OptimizeError::NonFiniteStart);
    }
    let mut f = Counted { f, evals: 0 };
    let n = x0.len();
    let f0 = f.call(x0)?;
    if n == 0 {
        return Ok(OptimizeResult {
            x: vec![],
            f: f0,
            history: vec![f0],
            evals: f.evals,
            iterations: 0,
        });
    }
    let max_evals = opts.max_evals.unwrap_or(usize::MAX);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = f.call(&x)?;
        simplex.push((x, v));
    }

    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < opts.maxiter {
        // Stable sort keeps earlier vertices first on ties, so x0 wins ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if iterations > 0 && (diameter < opts.xtol || (worst - best).abs() < opts.ftol) {
            break;
        }
        if f.evals >= max_evals {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = f.call(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f.call(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(0.5);
                let fc = f.call(&xc)?;
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f.call(&xc)?;
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let anchor = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = anchor
                        .iter()
                        .zip(&vertex.0)
                        .map(|(a, v)| a + 0.5 * (v - a))
                        .collect();
                    let v = f.call(&x)?;
                    *vertex = (x, v);
                }
            }
        }
        let current_best = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let prev = history.last().copied().unwrap_or(f0);
        history.push(current_best.min(prev));
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    if history.is_empty() {
        history.push(fx);
    }
    Ok(OptimizeResult {
        x,
        f: fx,
        history,
        evals: f.evals,
        iterations,
    })
}
