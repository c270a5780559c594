//! Finite-difference verification of [`backward`](super::backward).
//!
//! The perturbed objective is evaluated in double-double arithmetic. In plain `f64` the
//! rounding noise of a central difference with `eps = 1e-5` is around `1e-10`, which swamps
//! the small attention gradients of a freshly initialized network.

use rand::seq::index::sample;
use rand::Rng;
use twofloat::TwoFloat;

use super::model::{backward, forward_with, MovementFeatures, PhaseLayout, Weights};
use super::params::{FrapConfig, ParamStore, PARAM_NAMES};
use crate::error::Result;

/// Elements probed per tensor; smaller tensors are probed exhaustively.
pub const SAMPLES_PER_TENSOR: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst element.
    pub worst: (&'static str, usize),
    pub checked: usize,
}

/// What to do to the analytic gradient before comparing, for exercising the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Zero the analytic gradient element with the largest magnitude.
    ZeroLargest,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of `f = Σ_p c_p Q_p` (random `c`) with central
/// differences of step `eps`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check<R: Rng>(
    params: &ParamStore,
    cfg: &FrapConfig,
    layout: &PhaseLayout,
    features: &[MovementFeatures],
    neighbors: &[&[MovementFeatures]],
    eps: f64,
    fault: Fault,
    rng: &mut R,
) -> Result<GradCheckReport> {
    cfg.check()?;
    params.check(cfg)?;
    let cache = super::model::forward_cached(params, cfg, layout, features, neighbors)?;
    let coeffs: Vec<f64> = (0..layout.phase_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut grads = params.zeros_like();
    backward(params, cfg, layout, &cache, &coeffs, &mut grads)?;

    let mut corrupted = None;
    if fault == Fault::ZeroLargest {
        let mut best = (0, 0, -1.0);
        for (ti, t) in grads.tensors().iter().enumerate() {
            for (k, g) in t.data.iter().enumerate() {
                if g.abs() > best.2 {
                    best = (ti, k, g.abs());
                }
            }
        }
        grads.tensors_mut()[best.0].data[best.1] = 0.0;
        corrupted = Some((best.0, best.1));
    }

    let objective = |p: &[Vec<TwoFloat>]| -> TwoFloat {
        let slices: [&[TwoFloat]; 13] = std::array::from_fn(|i| p[i].as_slice());
        let q = forward_with(Weights::from_slices(slices), cfg, layout, features, neighbors).pairs.scores;
        q.iter()
            .zip(&coeffs)
            .fold(TwoFloat::from(0.0), |acc, (&a, &b)| acc + a * b)
    };

    let mut probe: Vec<Vec<TwoFloat>> = params
        .tensors()
        .iter()
        .map(|t| t.data.iter().map(|&x| TwoFloat::from(x)).collect())
        .collect();
    let step = TwoFloat::from(eps);
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (PARAM_NAMES[0], 0), checked: 0 };
    for ti in 0..PARAM_NAMES.len() {
        let len = params.tensors()[ti].len();
        let mut idx: Vec<usize> = if len <= SAMPLES_PER_TENSOR {
            (0..len).collect()
        } else {
            sample(rng, len, SAMPLES_PER_TENSOR).into_vec()
        };
        if let Some((ct, ck)) = corrupted {
            if ct == ti && !idx.contains(&ck) {
                idx.push(ck);
            }
        }
        for k in idx {
            let orig = probe[ti][k];
            probe[ti][k] = orig + step;
            let up = objective(&probe);
            probe[ti][k] = orig - step;
            let down = objective(&probe);
            probe[ti][k] = orig;
            let numeric = f64::from((up - down) / (step * 2.0));
            let err = relative_error(grads.tensors()[ti].data[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (PARAM_NAMES[ti], k);
            }
        }
    }
    Ok(report)
}
