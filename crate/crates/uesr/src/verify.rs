//! Gradient verification battery: every differentiable building block and
//! every training loss checked against central finite differences at fixed
//! seeds. Used by the `grad-check` CLI subcommand and the acceptance suite.
//!
//! Isolated layers must pass at 1e-5 or tighter; full composed losses at
//! 1e-4. Shapes are kept small so the whole battery runs in seconds; the
//! compositions are exactly the ones used in training.

use crate::nn::gradcheck::{grad_check, GradCheckReport, DEFAULT_FD_STEP};
use crate::nn::layers::{
    gru_step, gru_vars, linear_forward, linear_vars, register_gru, register_linear,
};
use crate::nn::params::ParameterSet;
use crate::rng::Rng;
use crate::uem::NORM_EPS;

#[derive(Debug, Clone)]
pub struct BatteryResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl BatteryResult {
    pub fn passed(&self) -> bool {
        self.report.passes(self.tolerance)
    }
}

impl std::fmt::Display for BatteryResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<12} {} (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.report,
            self.tolerance
        )
    }
}

/// Runs every check; results carry their own pass thresholds.
pub fn run_gradient_battery() -> Vec<BatteryResult> {
    vec![
        linear_case(),
        gru_case(),
        softmax_head_case(),
        sigmoid_head_case(),
        actor_loss_case(),
        critic_loss_case(),
        pred_loss_case(),
        enc_loss_case(),
    ]
}

fn rand_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect()
}

fn linear_case() -> BatteryResult {
    let mut params = ParameterSet::new();
    register_linear(&mut params, "lin", 3, 2, 101);
    let mut rng = Rng::from_seed(1);
    let input = rand_vec(&mut rng, 2);
    let report = grad_check(
        |t, p| {
            let v = linear_vars(t, p, "lin");
            let x = t.leaf_slice(&input);
            let y = linear_forward(t, &v, x);
            let sq = t.mul(y, y);
            t.sum(sq)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "linear",
        tolerance: 1e-6,
        report,
    }
}

fn gru_case() -> BatteryResult {
    let mut params = ParameterSet::new();
    register_gru(&mut params, "gru", 5, 3, 103);
    let mut rng = Rng::from_seed(2);
    let xs: Vec<Vec<f64>> = (0..2).map(|_| rand_vec(&mut rng, 3)).collect();
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
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "gru_2step",
        tolerance: 1e-5,
        report,
    }
}

fn softmax_head_case() -> BatteryResult {
    let mut params = ParameterSet::new();
    register_linear(&mut params, "head", 5, 4, 107);
    let mut rng = Rng::from_seed(3);
    let input = rand_vec(&mut rng, 4);
    let report = grad_check(
        |t, p| {
            let v = linear_vars(t, p, "head");
            let x = t.leaf_slice(&input);
            let logits = linear_forward(t, &v, x);
            let lsm = t.log_softmax(logits);
            let lp = t.pick(lsm, 2);
            let h = t.entropy_from_logits(logits);
            let hs = t.scale(h, -0.01);
            let nl = t.scale(lp, -1.0);
            t.add(nl, hs)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "softmax_head",
        tolerance: 1e-6,
        report,
    }
}

fn sigmoid_head_case() -> BatteryResult {
    let mut params = ParameterSet::new();
    register_linear(&mut params, "enc", 3, 6, 109);
    let mut rng = Rng::from_seed(4);
    let input = rand_vec(&mut rng, 6);
    let report = grad_check(
        |t, p| {
            let v = linear_vars(t, p, "enc");
            let x = t.leaf_slice(&input);
            let z = linear_forward(t, &v, x);
            let s = t.sigmoid(z);
            t.l2_norm(s, NORM_EPS)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "sigmoid_head",
        tolerance: 1e-6,
        report,
    }
}

/// The actor objective exactly as trained: shared trunk, recurrent unroll,
/// action channel plus a message-bit channel, advantage-weighted joint
/// log-probability and entropy bonus, averaged over a small batch.
fn actor_loss_case() -> BatteryResult {
    const HIDDEN: usize = 6;
    const N_ACT: usize = 5;
    let mut params = ParameterSet::new();
    register_linear(&mut params, "l1", HIDDEN, 4, 113);
    register_gru(&mut params, "gru", HIDDEN, HIDDEN, 113);
    register_linear(&mut params, "head", N_ACT + 2, HIDDEN, 113);

    let mut rng = Rng::from_seed(5);
    let inputs: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|_| (0..2).map(|_| rand_vec(&mut rng, 4)).collect())
        .collect();
    let actions = [[1usize, 4], [0, 2]];
    let bits = [[0usize, 1], [1, 0]];
    let advantages = [[0.8, -1.1], [0.3, 1.9]];
    let entropy_coef = 0.05;

    let report = grad_check(
        |t, p| {
            let l1 = linear_vars(t, p, "l1");
            let gru = gru_vars(t, p, "gru");
            let head = linear_vars(t, p, "head");
            let mut parts = Vec::new();
            for e in 0..2 {
                let mut h = t.leaf_slice(&[0.0; HIDDEN]);
                for step in 0..2 {
                    let x = t.leaf_slice(&inputs[e][step]);
                    let z = linear_forward(t, &l1, x);
                    let z = t.relu(z);
                    h = gru_step(t, &gru, z, h);
                    let out = t.relu(h);
                    let logits = linear_forward(t, &head, out);
                    let a_logits = t.slice(logits, 0, N_ACT);
                    let b_logits = t.slice(logits, N_ACT, 2);

                    let lsm_a = t.log_softmax(a_logits);
                    let lp_a = t.pick(lsm_a, actions[e][step]);
                    let lsm_b = t.log_softmax(b_logits);
                    let lp_b = t.pick(lsm_b, bits[e][step]);
                    let joint = t.add(lp_a, lp_b);
                    parts.push(t.scale(joint, -advantages[e][step]));

                    let ha = t.entropy_from_logits(a_logits);
                    let hb = t.entropy_from_logits(b_logits);
                    let hsum = t.add(ha, hb);
                    parts.push(t.scale(hsum, -entropy_coef));
                }
            }
            let total = t.add_n(&parts);
            t.scale(total, 0.25)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "actor_loss",
        tolerance: 1e-4,
        report,
    }
}

fn critic_loss_case() -> BatteryResult {
    const HIDDEN: usize = 6;
    let mut params = ParameterSet::new();
    register_linear(&mut params, "l1", HIDDEN, 4, 127);
    register_linear(&mut params, "out", 1, HIDDEN, 127);
    let mut rng = Rng::from_seed(6);
    let inputs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 4)).collect();
    let returns = [0.9, -0.2, 1.4];
    let report = grad_check(
        |t, p| {
            let l1 = linear_vars(t, p, "l1");
            let out = linear_vars(t, p, "out");
            let mut parts = Vec::new();
            for (input, ret) in inputs.iter().zip(returns) {
                let x = t.leaf_slice(input);
                let z = linear_forward(t, &l1, x);
                let z = t.relu(z);
                let v = linear_forward(t, &out, z);
                let d = t.add_scalar(v, -ret);
                parts.push(t.mul(d, d));
            }
            let s = t.add_n(&parts);
            t.scale(s, 1.0 / 3.0)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "critic_loss",
        tolerance: 1e-4,
        report,
    }
}

/// Prediction loss: two ReLU layers into an L2 norm against a fixed target
/// embedding, the dynamics-network objective.
fn pred_loss_case() -> BatteryResult {
    const DIM: usize = 8;
    let mut params = ParameterSet::new();
    register_linear(&mut params, "f1", DIM, DIM + 3, 131);
    register_linear(&mut params, "f2", DIM, DIM, 131);
    let mut rng = Rng::from_seed(7);
    let input = rand_vec(&mut rng, DIM + 3);
    let target: Vec<f64> = (0..DIM).map(|_| rng.range_f64(0.0, 1.0)).collect();
    let report = grad_check(
        |t, p| {
            let f1 = linear_vars(t, p, "f1");
            let f2 = linear_vars(t, p, "f2");
            let x = t.leaf_slice(&input);
            let h = linear_forward(t, &f1, x);
            let h = t.relu(h);
            let h = linear_forward(t, &f2, h);
            let h = t.relu(h);
            let tv = t.leaf_slice(&target);
            let d = t.sub(h, tv);
            t.l2_norm(d, NORM_EPS)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "pred_loss",
        tolerance: 1e-4,
        report,
    }
}

/// Reconstruction loss: sigmoid bottleneck and linear decoder against the
/// constant input, the autoencoder objective.
fn enc_loss_case() -> BatteryResult {
    const DIM: usize = 8;
    let mut params = ParameterSet::new();
    register_linear(&mut params, "enc", 3, DIM, 137);
    register_linear(&mut params, "dec", DIM, 3, 137);
    let mut rng = Rng::from_seed(8);
    let x = rand_vec(&mut rng, DIM);
    let report = grad_check(
        |t, p| {
            let enc = linear_vars(t, p, "enc");
            let dec = linear_vars(t, p, "dec");
            let xv = t.leaf_slice(&x);
            let z = linear_forward(t, &enc, xv);
            let m = t.sigmoid(z);
            let r = linear_forward(t, &dec, m);
            let d = t.sub(r, xv);
            t.l2_norm(d, NORM_EPS)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    BatteryResult {
        name: "enc_loss",
        tolerance: 1e-4,
        report,
    }
}
