//! Unexpectedness encoding: a frozen random projection embeds observations,
//! a forward-dynamics perceptron predicts the next embedding in hindsight
//! from the previous observation, action and the other agents' messages, and
//! an autoencoder compresses the prediction error into the outgoing message.
//!
//! Training routes gradients narrowly: the prediction loss (the L2 norm of
//! the unexpectedness vector) updates only the dynamics network, and the
//! reconstruction loss updates only the encoder and decoder, with the
//! gradient stopped at the unexpectedness vector. The projection is never
//! trained.

use thiserror::Error;

use crate::nn::layers::{linear_forward, linear_vars, register_linear, LinearVars};
use crate::nn::params::{OptimizerConfig, ParameterSet};
use crate::nn::tape::{Tape, Var};


/// Embedding width shared by the projection, dynamics and decoder outputs.
pub const EMBED_DIM: usize = 64;
/// Smoothing added under the square root of the L2-norm losses so they stay
/// differentiable at an exact zero.
pub const NORM_EPS: f64 = 1e-8;

/// Difference between the predicted and actual observation embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Unexpectedness(pub Vec<f64>);

impl Unexpectedness {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One training sample: everything the dynamics network saw when predicting
/// the current observation. At an episode start there is no previous
/// observation or action; both encode as zeros (`None` here), exactly as
/// the acting path feeds them.
#[derive(Debug, Clone)]
pub struct UemSample {
    pub prev_obs: Option<Vec<f64>>,
    pub prev_action: Option<usize>,
    pub uem_inbox: Vec<f64>,
    pub curr_obs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UemLosses {
    pub pred: f64,
    pub enc: f64,
}

#[derive(Debug, Error)]
pub enum UemError {
    #[error("non-finite unexpectedness losses (pred {pred}, enc {enc})")]
    NonFiniteLoss { pred: f64, enc: f64 },
}

pub struct Uem {
    /// Frozen random projection g ("g"): obs_len -> EMBED_DIM, ReLU.
    pub projection: ParameterSet,
    /// Dynamics f ("f1", "f2"): two layers to EMBED_DIM, ReLU after each.
    pub dynamics: ParameterSet,
    /// Autoencoder ("enc", "dec"): EMBED_DIM -> ues_len -> EMBED_DIM.
    pub autoencoder: ParameterSet,
    obs_len: usize,
    n_actions: usize,
    inbox_len: usize,
    ues_len: usize,
}

impl Uem {
    pub fn new(obs_len: usize, n_actions: usize, inbox_len: usize, ues_len: usize, seed: u64) -> Self {
        let mut projection = ParameterSet::new();
        register_linear(&mut projection, "g", EMBED_DIM, obs_len, seed ^ crate::rng::fnv1a(b"uem-g"));

        let f_in = EMBED_DIM + n_actions + inbox_len;
        let mut dynamics = ParameterSet::new();
        let fseed = seed ^ crate::rng::fnv1a(b"uem-f");
        register_linear(&mut dynamics, "f1", EMBED_DIM, f_in, fseed);
        register_linear(&mut dynamics, "f2", EMBED_DIM, EMBED_DIM, fseed);

        let mut autoencoder = ParameterSet::new();
        let aseed = seed ^ crate::rng::fnv1a(b"uem-ae");
        register_linear(&mut autoencoder, "enc", ues_len, EMBED_DIM, aseed);
        register_linear(&mut autoencoder, "dec", EMBED_DIM, ues_len, aseed);

        Uem {
            projection,
            dynamics,
            autoencoder,
            obs_len,
            n_actions,
            inbox_len,
            ues_len,
        }
    }

    pub fn ues_len(&self) -> usize {
        self.ues_len
    }

    pub fn inbox_len(&self) -> usize {
        self.inbox_len
    }

    /// Frozen projection: ReLU(Wg o + bg). Plain arithmetic, no tape; no
    /// gradient ever reaches g.
    pub fn embed(&self, obs: &[f64]) -> Vec<f64> {
        assert_eq!(obs.len(), self.obs_len, "embed input length mismatch");
        let w = self.projection.value("g.w");
        let b = self.projection.value("g.b");
        let (rows, cols) = (w.rows(), w.cols());
        let wd = w.data();
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            let mut acc = b.data()[i];
            for j in 0..cols {
                acc += wd[i * cols + j] * obs[j];
            }
            out[i] = acc.max(0.0);
        }
        out
    }

    fn dynamics_input(&self, prev_embed: &[f64], prev_action: Option<usize>, inbox: &[f64]) -> Vec<f64> {
        assert_eq!(prev_embed.len(), EMBED_DIM, "embedding length mismatch");
        assert_eq!(inbox.len(), self.inbox_len, "uem inbox length mismatch");
        let mut input = Vec::with_capacity(EMBED_DIM + self.n_actions + self.inbox_len);
        input.extend_from_slice(prev_embed);
        let mut onehot = vec![0.0; self.n_actions];
        if let Some(a) = prev_action {
            assert!(a < self.n_actions, "action index out of range");
            onehot[a] = 1.0;
        }
        input.extend_from_slice(&onehot);
        input.extend_from_slice(inbox);
        input
    }

    fn dynamics_forward(tape: &mut Tape, f1: &LinearVars, f2: &LinearVars, input: Var) -> Var {
        let h = linear_forward(tape, f1, input);
        let h = tape.relu(h);
        let h = linear_forward(tape, f2, h);
        tape.relu(h)
    }

    /// Hindsight prediction of the current observation's embedding. A pure
    /// function of its inputs; the recurrence lives in the message loop,
    /// not in the network.
    pub fn predict(&self, prev_embed: &[f64], prev_action: Option<usize>, inbox: &[f64]) -> Vec<f64> {
        let input = self.dynamics_input(prev_embed, prev_action, inbox);
        let mut tape = Tape::new();
        let f1 = linear_vars(&mut tape, &self.dynamics, "f1");
        let f2 = linear_vars(&mut tape, &self.dynamics, "f2");
        let x = tape.leaf_slice(&input);
        let out = Uem::dynamics_forward(&mut tape, &f1, &f2, x);
        tape.value(out).data().to_vec()
    }

    /// Elementwise predicted minus actual embedding.
    pub fn unexpectedness(predicted: &[f64], actual: &[f64]) -> Unexpectedness {
        assert_eq!(predicted.len(), actual.len(), "embedding length mismatch");
        Unexpectedness(
            predicted
                .iter()
                .zip(actual)
                .map(|(&p, &a)| p - a)
                .collect(),
        )
    }

    /// Encodes the unexpectedness vector into the message range (0, 1).
    /// Gradients never flow back into x from here; the encoder trains only
    /// through the reconstruction loss.
    pub fn encode_message(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), EMBED_DIM, "unexpectedness length mismatch");
        let mut tape = Tape::new();
        let enc = linear_vars(&mut tape, &self.autoencoder, "enc");
        let xv = tape.leaf_slice(x);
        let z = linear_forward(&mut tape, &enc, xv);
        let m = tape.sigmoid(z);
        tape.value(m).data().to_vec()
    }

    /// Reconstruction of x from an encoded message.
    pub fn decode(&self, message: &[f64]) -> Vec<f64> {
        assert_eq!(message.len(), self.ues_len, "message length mismatch");
        let mut tape = Tape::new();
        let dec = linear_vars(&mut tape, &self.autoencoder, "dec");
        let mv = tape.leaf_slice(message);
        let out = linear_forward(&mut tape, &dec, mv);
        tape.value(out).data().to_vec()
    }

    /// Full per-step message pipeline: embed the previous and current
    /// observations, predict, difference, encode.
    pub fn message_for_step(
        &self,
        prev_obs: Option<&[f64]>,
        prev_action: Option<usize>,
        inbox: &[f64],
        curr_obs: &[f64],
    ) -> (Vec<f64>, Unexpectedness) {
        let prev_embed = match prev_obs {
            Some(o) => self.embed(o),
            None => vec![0.0; EMBED_DIM],
        };
        let predicted = self.predict(&prev_embed, prev_action, inbox);
        let actual = self.embed(curr_obs);
        let x = Uem::unexpectedness(&predicted, &actual);
        let message = self.encode_message(x.as_slice());
        (message, x)
    }

    /// One training step on a minibatch: the mean prediction loss updates
    /// the dynamics network, the mean reconstruction loss updates the
    /// autoencoder (x enters as a constant), one Adam step each.
    pub fn update(
        &mut self,
        minibatch: &[UemSample],
        opt: &OptimizerConfig,
    ) -> Result<UemLosses, UemError> {
        assert!(!minibatch.is_empty(), "empty uem minibatch");
        let inv = 1.0 / minibatch.len() as f64;

        // Embeddings are constants: g is frozen.
        let prev_embeds: Vec<Vec<f64>> = minibatch
            .iter()
            .map(|s| match &s.prev_obs {
                Some(o) => self.embed(o),
                None => vec![0.0; EMBED_DIM],
            })
            .collect();
        let targets: Vec<Vec<f64>> = minibatch.iter().map(|s| self.embed(&s.curr_obs)).collect();

        // Prediction loss -> dynamics only.
        let mut tape = Tape::new();
        let f1 = linear_vars(&mut tape, &self.dynamics, "f1");
        let f2 = linear_vars(&mut tape, &self.dynamics, "f2");
        let mut parts = Vec::with_capacity(minibatch.len());
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(minibatch.len());
        for (i, sample) in minibatch.iter().enumerate() {
            let input = self.dynamics_input(&prev_embeds[i], sample.prev_action, &sample.uem_inbox);
            let iv = tape.leaf_slice(&input);
            let pred = Uem::dynamics_forward(&mut tape, &f1, &f2, iv);
            let tv = tape.leaf_slice(&targets[i]);
            let diff = tape.sub(pred, tv);
            xs.push(tape.value(diff).data().to_vec());
            parts.push(tape.l2_norm(diff, NORM_EPS));
        }
        let pred_loss_var = {
            let s = tape.add_n(&parts);
            tape.scale(s, inv)
        };
        let pred_loss = tape.value(pred_loss_var).item();

        // Reconstruction loss -> encoder and decoder only; x is a constant
        // leaf, so the gradient stops here by construction.
        let mut ae_tape = Tape::new();
        let enc = linear_vars(&mut ae_tape, &self.autoencoder, "enc");
        let dec = linear_vars(&mut ae_tape, &self.autoencoder, "dec");
        let mut ae_parts = Vec::with_capacity(xs.len());
        for x in &xs {
            let xv = ae_tape.leaf_slice(x);
            let z = linear_forward(&mut ae_tape, &enc, xv);
            let m = ae_tape.sigmoid(z);
            let recon = linear_forward(&mut ae_tape, &dec, m);
            let diff = ae_tape.sub(recon, xv);
            ae_parts.push(ae_tape.l2_norm(diff, NORM_EPS));
        }
        let enc_loss_var = {
            let s = ae_tape.add_n(&ae_parts);
            ae_tape.scale(s, inv)
        };
        let enc_loss = ae_tape.value(enc_loss_var).item();

        if !pred_loss.is_finite() || !enc_loss.is_finite() {
            return Err(UemError::NonFiniteLoss {
                pred: pred_loss,
                enc: enc_loss,
            });
        }

        tape.backward(pred_loss_var);
        self.dynamics.zero_grads();
        tape.accumulate_param_grads(&mut self.dynamics);
        self.dynamics.adam_step(opt);

        ae_tape.backward(enc_loss_var);
        self.autoencoder.zero_grads();
        ae_tape.accumulate_param_grads(&mut self.autoencoder);
        self.autoencoder.adam_step(opt);

        Ok(UemLosses {
            pred: pred_loss,
            enc: enc_loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, DEFAULT_FD_STEP};
    use crate::rng::Rng;

    fn sample_batch(uem: &Uem, seed: u64, n: usize) -> Vec<UemSample> {
        let mut rng = Rng::from_seed(seed);
        (0..n)
            .map(|_| UemSample {
                prev_obs: Some((0..uem.obs_len).map(|_| rng.next_f64()).collect()),
                prev_action: Some(rng.range(uem.n_actions)),
                uem_inbox: (0..uem.inbox_len).map(|_| rng.next_f64()).collect(),
                curr_obs: (0..uem.obs_len).map(|_| rng.next_f64()).collect(),
            })
            .collect()
    }

    #[test]
    fn zeroed_projection_embeds_to_zero() {
        let mut uem = Uem::new(8, 5, 4, 3, 1);
        uem.projection.value_mut("g.w").fill(0.0);
        uem.projection.value_mut("g.b").fill(0.0);
        assert_eq!(uem.embed(&[0.5; 8]), vec![0.0; EMBED_DIM]);
    }

    #[test]
    fn embed_is_pure() {
        let uem = Uem::new(8, 5, 4, 3, 2);
        let obs = [0.1, 0.9, 0.4, 0.0, 1.0, 0.3, 0.7, 0.2];
        assert_eq!(uem.embed(&obs), uem.embed(&obs));
    }

    #[test]
    fn projection_is_bitwise_frozen_across_updates() {
        let mut uem = Uem::new(8, 5, 4, 3, 3);
        let g_w = uem.projection.value("g.w").clone();
        let g_b = uem.projection.value("g.b").clone();
        let batch = sample_batch(&uem, 9, 4);
        let opt = OptimizerConfig::with_lr(0.01);
        for _ in 0..50 {
            uem.update(&batch, &opt).unwrap();
        }
        assert_eq!(uem.projection.value("g.w"), &g_w);
        assert_eq!(uem.projection.value("g.b"), &g_b);
    }

    #[test]
    fn zero_dynamics_predicts_zero() {
        let mut uem = Uem::new(8, 5, 4, 3, 4);
        for name in ["f1.w", "f1.b", "f2.w", "f2.b"] {
            uem.dynamics.value_mut(name).fill(0.0);
        }
        let pred = uem.predict(&[0.3; EMBED_DIM], Some(2), &[0.1; 4]);
        assert_eq!(pred, vec![0.0; EMBED_DIM]);
    }

    #[test]
    fn predict_is_stateless() {
        let uem = Uem::new(8, 5, 4, 3, 5);
        let e = uem.embed(&[0.2; 8]);
        let a = uem.predict(&e, Some(1), &[0.5; 4]);
        let b = uem.predict(&e, Some(1), &[0.5; 4]);
        assert_eq!(a, b);
    }

    #[test]
    fn unexpectedness_arithmetic() {
        let x = Uem::unexpectedness(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(x.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(x.norm(), 0.0);

        let x = Uem::unexpectedness(&[2.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(x.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(x.norm(), 1.0);

        // Independent recomputation of the norm.
        let p = [0.3, -0.4, 0.9, 1.2];
        let a = [0.1, 0.2, -0.5, 0.4];
        let x = Uem::unexpectedness(&p, &a);
        let direct: f64 = p
            .iter()
            .zip(&a)
            .map(|(&pi, &ai)| (pi - ai) * (pi - ai))
            .sum::<f64>()
            .sqrt();
        assert!((x.norm() - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_encoder_emits_all_halves() {
        let mut uem = Uem::new(8, 5, 4, 3, 6);
        uem.autoencoder.value_mut("enc.w").fill(0.0);
        uem.autoencoder.value_mut("enc.b").fill(0.0);
        let m = uem.encode_message(&[0.7; EMBED_DIM]);
        assert_eq!(m, vec![0.5; 3]);
    }

    #[test]
    fn messages_stay_strictly_inside_unit_interval() {
        // Strict interior for realistic error magnitudes. (f64 sigmoid
        // saturates to exactly 0 or 1 past |z| ~ 37, which still satisfies
        // the closed-range message invariant.)
        let uem = Uem::new(8, 5, 4, 3, 7);
        let mut rng = Rng::from_seed(11);
        for _ in 0..100 {
            let x: Vec<f64> = (0..EMBED_DIM).map(|_| rng.range_f64(-2.0, 2.0)).collect();
            let m = uem.encode_message(&x);
            assert!(m.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn pred_loss_is_the_l2_norm_recomputed_independently() {
        let mut uem = Uem::new(8, 5, 4, 3, 8);
        let batch = sample_batch(&uem, 13, 1);
        // Reproduce the loss by hand before updating.
        let prev_e = uem.embed(batch[0].prev_obs.as_ref().unwrap());
        let pred = uem.predict(&prev_e, batch[0].prev_action, &batch[0].uem_inbox);
        let target = uem.embed(&batch[0].curr_obs);
        let x = Uem::unexpectedness(&pred, &target);
        let want = (x.as_slice().iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
        let losses = uem.update(&batch, &OptimizerConfig::with_lr(1e-9)).unwrap();
        assert!((losses.pred - want).abs() < 1e-12);
        assert!((losses.pred - x.norm()).abs() < 1e-6);
    }

    #[test]
    fn enc_loss_ignores_dynamics_weights() {
        // For a fixed x the reconstruction loss cannot depend on f.
        let mut uem = Uem::new(8, 5, 4, 3, 9);
        let x: Vec<f64> = (0..EMBED_DIM).map(|i| (i as f64 * 0.37).sin()).collect();
        let loss_of = |uem: &Uem| {
            let m = uem.encode_message(&x);
            let recon = uem.decode(&m);
            (Uem::unexpectedness(&recon, &x)
                .as_slice()
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                + NORM_EPS)
                .sqrt()
        };
        let before = loss_of(&uem);
        for v in uem.dynamics.value_mut("f1.w").data_mut() {
            *v += 0.5;
        }
        for v in uem.dynamics.value_mut("f2.b").data_mut() {
            *v -= 0.25;
        }
        assert_eq!(loss_of(&uem), before);
    }

    #[test]
    fn pred_loss_ignores_autoencoder_weights() {
        let mut uem = Uem::new(8, 5, 4, 3, 10);
        let batch = sample_batch(&uem, 17, 3);
        let loss_of = |uem: &Uem| {
            batch
                .iter()
                .map(|s| {
                    let prev_e = uem.embed(s.prev_obs.as_ref().unwrap());
                    let pred = uem.predict(&prev_e, s.prev_action, &s.uem_inbox);
                    let target = uem.embed(&s.curr_obs);
                    let x = Uem::unexpectedness(&pred, &target);
                    (x.as_slice().iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt()
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        let before = loss_of(&uem);
        for v in uem.autoencoder.value_mut("enc.w").data_mut() {
            *v += 1.0;
        }
        for v in uem.autoencoder.value_mut("dec.w").data_mut() {
            *v -= 1.0;
        }
        assert_eq!(loss_of(&uem), before);
    }

    #[test]
    fn pred_loss_gradients_pass_finite_differences() {
        let uem = Uem::new(6, 3, 2, 2, 11);
        let batch = sample_batch(&uem, 19, 1);
        let prev_e = uem.embed(batch[0].prev_obs.as_ref().unwrap());
        let target = uem.embed(&batch[0].curr_obs);
        let input = uem.dynamics_input(&prev_e, batch[0].prev_action, &batch[0].uem_inbox);
        let mut params = uem.dynamics.clone();
        let report = grad_check(
            |tape, params| {
                let f1 = linear_vars(tape, params, "f1");
                let f2 = linear_vars(tape, params, "f2");
                let iv = tape.leaf_slice(&input);
                let pred = Uem::dynamics_forward(tape, &f1, &f2, iv);
                let tv = tape.leaf_slice(&target);
                let diff = tape.sub(pred, tv);
                tape.l2_norm(diff, NORM_EPS)
            },
            &mut params,
            DEFAULT_FD_STEP,
        );
        assert!(report.passes(1e-5), "{report}");
    }

    #[test]
    fn enc_loss_gradients_pass_finite_differences() {
        let uem = Uem::new(6, 3, 2, 2, 12);
        let mut rng = Rng::from_seed(23);
        let x: Vec<f64> = (0..EMBED_DIM).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let mut params = uem.autoencoder.clone();
        let report = grad_check(
            |tape, params| {
                let enc = linear_vars(tape, params, "enc");
                let dec = linear_vars(tape, params, "dec");
                let xv = tape.leaf_slice(&x);
                let z = linear_forward(tape, &enc, xv);
                let m = tape.sigmoid(z);
                let recon = linear_forward(tape, &dec, m);
                let diff = tape.sub(recon, xv);
                tape.l2_norm(diff, NORM_EPS)
            },
            &mut params,
            DEFAULT_FD_STEP,
        );
        assert!(report.passes(1e-5), "{report}");
    }

    #[test]
    fn autoencoder_learns_low_rank_structure() {
        // Synthetic x data from a 2-dim latent: reconstruction error after
        // training falls well below its starting point.
        let mut uem = Uem::new(6, 3, 2, 4, 14);
        let mut rng = Rng::from_seed(31);
        let basis: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..EMBED_DIM).map(|_| rng.range_f64(-1.0, 1.0)).collect())
            .collect();
        let data: Vec<Vec<f64>> = (0..32)
            .map(|_| {
                let a = rng.range_f64(-1.0, 1.0);
                let b = rng.range_f64(-1.0, 1.0);
                (0..EMBED_DIM)
                    .map(|i| a * basis[0][i] + b * basis[1][i])
                    .collect()
            })
            .collect();

        let recon_err = |uem: &Uem| -> f64 {
            data.iter()
                .map(|x| {
                    let m = uem.encode_message(x);
                    let r = uem.decode(&m);
                    Uem::unexpectedness(&r, x).norm()
                })
                .sum::<f64>()
                / data.len() as f64
        };

        let initial = recon_err(&uem);
        let opt = OptimizerConfig::with_lr(0.005);
        // Reuse the update path with x fed through as synthetic "errors":
        // train only the autoencoder by calling the ae half directly.
        for _ in 0..1500 {
            let mut tape = Tape::new();
            let enc = linear_vars(&mut tape, &uem.autoencoder, "enc");
            let dec = linear_vars(&mut tape, &uem.autoencoder, "dec");
            let mut parts = Vec::new();
            for x in &data {
                let xv = tape.leaf_slice(x);
                let z = linear_forward(&mut tape, &enc, xv);
                let m = tape.sigmoid(z);
                let recon = linear_forward(&mut tape, &dec, m);
                let diff = tape.sub(recon, xv);
                parts.push(tape.l2_norm(diff, NORM_EPS));
            }
            let s = tape.add_n(&parts);
            let loss = tape.scale(s, 1.0 / data.len() as f64);
            tape.backward(loss);
            uem.autoencoder.zero_grads();
            tape.accumulate_param_grads(&mut uem.autoencoder);
            uem.autoencoder.adam_step(&opt);
        }
        let final_err = recon_err(&uem);
        assert!(
            final_err < 0.2 * initial,
            "reconstruction {final_err} vs initial {initial}"
        );
    }
}
