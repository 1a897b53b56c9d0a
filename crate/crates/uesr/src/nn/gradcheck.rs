//! Finite-difference verification of tape gradients.
//!
//! `grad_check` rebuilds a scalar loss through a caller-supplied closure,
//! compares every analytic parameter gradient against central differences,
//! and reports the worst relative error. The error of an element is
//! |analytic - numeric| / max(|analytic|, |numeric|, 1), i.e. plain relative
//! error for gradients of order one and absolute error below that, which
//! keeps finite-difference noise on near-zero entries from dominating.

use super::params::ParameterSet;
use super::tape::{Tape, Var};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max rel error {:.3e} at {}[{}] over {} elements",
            self.max_rel_error, self.worst_param, self.worst_index, self.elements_checked
        )
    }
}

/// `build` must construct the loss on the given tape, registering every
/// parameter it reads via `tape.param(...)`, and must be deterministic.
pub fn grad_check<F>(build: F, params: &mut ParameterSet, fd_step: f64) -> GradCheckReport
where
    F: Fn(&mut Tape, &ParameterSet) -> Var,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let loss = build(&mut tape, params);
    assert_eq!(tape.value(loss).len(), 1, "grad_check needs a scalar loss");
    tape.backward(loss);
    params.zero_grads();
    tape.accumulate_param_grads(params);

    let names: Vec<String> = params.names().map(|s| s.to_string()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        elements_checked: 0,
    };

    let eval = |params: &ParameterSet| -> f64 {
        let mut t = Tape::new();
        let l = build(&mut t, params);
        t.value(l).item()
    };

    for name in &names {
        let n = params.value(name).len();
        for i in 0..n {
            let saved = params.value(name).data()[i];
            params.value_mut(name).data_mut()[i] = saved + fd_step;
            let f_plus = eval(params);
            params.value_mut(name).data_mut()[i] = saved - fd_step;
            let f_minus = eval(params);
            params.value_mut(name).data_mut()[i] = saved;

            let numeric = (f_plus - f_minus) / (2.0 * fd_step);
            let analytic = params.grad(name).data()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
            report.elements_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }

    params.zero_grads();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{gru_step, gru_vars, linear_forward, linear_vars, register_gru, register_linear};
    use crate::rng::Rng;

    /// Random 3x2 linear layer under a squared-sum loss: rel error < 1e-6.
    #[test]
    fn linear_layer_gradients() {
        let mut p = ParameterSet::new();
        register_linear(&mut p, "lin", 3, 2, 7);
        let input = vec![0.3, -1.2];
        let report = grad_check(
            |t, p| {
                let v = linear_vars(t, p, "lin");
                let x = t.leaf_slice(&input);
                let y = linear_forward(t, &v, x);
                let sq = t.mul(y, y);
                t.sum(sq)
            },
            &mut p,
            DEFAULT_FD_STEP,
        );
        assert!(report.passes(1e-6), "{report}");
    }

    /// 2-step unrolled GRU: rel error < 1e-5.
    #[test]
    fn gru_two_step_unroll_gradients() {
        let mut p = ParameterSet::new();
        register_gru(&mut p, "gru", 5, 3, 11);
        let mut rng = Rng::from_seed(3);
        let xs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..3).map(|_| rng.range_f64(-1.0, 1.0)).collect())
            .collect();
        let report = grad_check(
            |t, p| {
                let g = gru_vars(t, p, "gru");
                let mut h = t.leaf_slice(&[0.0; 5]);
                for x in &xs {
                    let xv = t.leaf_slice(x);
                    h = gru_step(t, &g, xv, h);
                }
                let sq = t.mul(h, h);
                t.sum(sq)
            },
            &mut p,
            DEFAULT_FD_STEP,
        );
        assert!(report.passes(1e-5), "{report}");
    }

    /// Softmax head under a log-likelihood-style loss: rel error < 1e-6.
    #[test]
    fn softmax_gradients() {
        let mut p = ParameterSet::new();
        register_linear(&mut p, "head", 4, 3, 13);
        let input = vec![0.5, -0.25, 0.8];
        let report = grad_check(
            |t, p| {
                let v = linear_vars(t, p, "head");
                let x = t.leaf_slice(&input);
                let logits = linear_forward(t, &v, x);
                let lp = t.log_softmax(logits);
                let picked = t.pick(lp, 2);
                t.scale(picked, -1.0)
            },
            &mut p,
            DEFAULT_FD_STEP,
        );
        assert!(report.passes(1e-6), "{report}");
    }

    /// Sigmoid + L2-norm composition (the shape of the encoder losses).
    #[test]
    fn sigmoid_l2_norm_gradients() {
        let mut p = ParameterSet::new();
        register_linear(&mut p, "enc", 3, 6, 17);
        let mut rng = Rng::from_seed(21);
        let x: Vec<f64> = (0..6).map(|_| rng.range_f64(-2.0, 2.0)).collect();
        let report = grad_check(
            |t, p| {
                let v = linear_vars(t, p, "enc");
                let xv = t.leaf_slice(&x);
                let z = linear_forward(t, &v, xv);
                let m = t.sigmoid(z);
                t.l2_norm(m, 1e-8)
            },
            &mut p,
            DEFAULT_FD_STEP,
        );
        assert!(report.passes(1e-6), "{report}");
    }
}
