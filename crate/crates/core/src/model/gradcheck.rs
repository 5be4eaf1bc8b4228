use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_SAMPLES: usize = 200;
/// Denominator floor so gradients that are zero on both sides compare as equal.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub n_checked: usize,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `loss`.
///
/// Samples are spread over every tensor, at least `min_samples` in total;
/// half of each tensor's quota comes from entries with a nonzero analytic
/// gradient so that sparse tensors such as embeddings get meaningful checks.
pub fn grad_check<P: ParamSet>(
    params: &P,
    analytic: &P,
    mut loss: impl FnMut(&P) -> Result<f64>,
    min_samples: usize,
    eps: f64,
    seed_value: u64,
) -> Result<GradCheckReport> {
    let mut rng = seed::stream(seed_value, "gradcheck");
    let grads = analytic.tensors();
    // tensors too small for their share are checked in full and the
    // shortfall is spread over the rest
    let mut full = vec![false; grads.len()];
    let quota = loop {
        let left = min_samples.saturating_sub(grads.iter().zip(&full).filter(|(_, f)| **f).map(|(g, _)| g.data.len()).sum());
        let n_rest = full.iter().filter(|f| !**f).count().max(1);
        let q = left.div_ceil(n_rest).max(2);
        let mut changed = false;
        for (f, g) in full.iter_mut().zip(&grads) {
            if !*f && g.data.len() <= q {
                *f = true;
                changed = true;
            }
        }
        if !changed {
            break q;
        }
    };
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (ti, g) in grads.iter().enumerate() {
        let len = g.data.len();
        if full[ti] {
            picks.extend((0..len).map(|j| (ti, j)));
            continue;
        }
        let nonzero: Vec<usize> = (0..len).filter(|&j| g.data[j] != 0.0).collect();
        let from_nonzero = (quota / 2).min(nonzero.len());
        let mut chosen: Vec<usize> = sample(&mut rng, nonzero.len(), from_nonzero).into_iter().map(|k| nonzero[k]).collect();
        while chosen.len() < quota {
            let j = rng.gen_range(0..len);
            if !chosen.contains(&j) {
                chosen.push(j);
            }
        }
        picks.extend(chosen.into_iter().map(|j| (ti, j)));
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        n_checked: 0,
        worst_tensor: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (ti, j) in picks {
        let original = work.tensors()[ti].data[j];
        work.tensors_mut()[ti].data[j] = original + eps;
        let plus = loss(&work)?;
        work.tensors_mut()[ti].data[j] = original - eps;
        let minus = loss(&work)?;
        work.tensors_mut()[ti].data[j] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = grads[ti].data[j];
        let err = relative_error(a, numeric);
        report.n_checked += 1;
        if err > report.max_rel_error || report.worst_tensor.is_empty() {
            report.max_rel_error = err;
            report.worst_tensor = grads[ti].name.clone();
            report.worst_index = j;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
