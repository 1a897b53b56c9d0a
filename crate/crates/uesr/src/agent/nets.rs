//! Actor and critic networks.
//!
//! The actor is linear(input -> 64) -> ReLU -> GRU(64) -> ReLU -> linear to
//! logits; the recurrent state is the raw GRU hidden, the ReLU sits on the
//! output branch. The logits split into one 5-way action head plus one 2-way
//! head per reward-trained message bit. The critic is linear(input -> 64) ->
//! ReLU -> linear(64 -> 1), kept twice: an online network and a target copy
//! for bootstrap values.

use crate::nn::layers::{
    gru_step, gru_vars, linear_forward, linear_vars, register_gru, register_linear, GruVars,
    LinearVars,
};
use crate::nn::params::ParameterSet;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

pub const HIDDEN: usize = 64;
pub const N_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct ActorVars {
    l1: LinearVars,
    gru: GruVars,
    head: LinearVars,
}

#[derive(Debug)]
pub struct ActorNetwork {
    pub params: ParameterSet,
    input_len: usize,
    n_bits: usize,
}

impl ActorNetwork {
    pub fn new(input_len: usize, n_bits: usize, seed: u64) -> Self {
        let mut params = ParameterSet::new();
        register_linear(&mut params, "l1", HIDDEN, input_len, seed);
        register_gru(&mut params, "gru", HIDDEN, HIDDEN, seed);
        register_linear(&mut params, "head", N_ACTIONS + 2 * n_bits, HIDDEN, seed);
        ActorNetwork {
            params,
            input_len,
            n_bits,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// Channels sampled per act: the action plus one per message bit.
    pub fn n_channels(&self) -> usize {
        1 + self.n_bits
    }

    pub fn initial_hidden() -> Tensor {
        Tensor::zeros(&[HIDDEN])
    }

    pub fn vars(&self, tape: &mut Tape) -> ActorVars {
        ActorVars {
            l1: linear_vars(tape, &self.params, "l1"),
            gru: gru_vars(tape, &self.params, "gru"),
            head: linear_vars(tape, &self.params, "head"),
        }
    }

    /// One recurrent step. Returns the action-head logits, the per-bit
    /// logits, and the new hidden state.
    pub fn forward_step(
        &self,
        tape: &mut Tape,
        vars: &ActorVars,
        input: Var,
        hidden: Var,
    ) -> (Var, Vec<Var>, Var) {
        assert_eq!(
            tape.value(input).len(),
            self.input_len,
            "actor input length mismatch"
        );
        let x = linear_forward(tape, &vars.l1, input);
        let x = tape.relu(x);
        let h_new = gru_step(tape, &vars.gru, x, hidden);
        let out = tape.relu(h_new);
        let logits = linear_forward(tape, &vars.head, out);
        let action_logits = tape.slice(logits, 0, N_ACTIONS);
        let bit_logits = (0..self.n_bits)
            .map(|k| tape.slice(logits, N_ACTIONS + 2 * k, 2))
            .collect();
        (action_logits, bit_logits, h_new)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CriticVars {
    l1: LinearVars,
    out: LinearVars,
}

#[derive(Debug)]
pub struct CriticNetwork {
    pub online: ParameterSet,
    pub target: ParameterSet,
    input_len: usize,
}

impl CriticNetwork {
    /// The target network starts as an exact copy of the online one.
    pub fn new(input_len: usize, seed: u64) -> Self {
        let mut online = ParameterSet::new();
        register_linear(&mut online, "l1", HIDDEN, input_len, seed);
        register_linear(&mut online, "out", 1, HIDDEN, seed);
        let target = online.clone();
        CriticNetwork {
            online,
            target,
            input_len,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn vars(tape: &mut Tape, params: &ParameterSet) -> CriticVars {
        CriticVars {
            l1: linear_vars(tape, params, "l1"),
            out: linear_vars(tape, params, "out"),
        }
    }

    pub fn forward(tape: &mut Tape, vars: &CriticVars, input: Var) -> Var {
        let x = linear_forward(tape, &vars.l1, input);
        let x = tape.relu(x);
        linear_forward(tape, &vars.out, x)
    }

    /// Scalar value estimate from the online or target network.
    pub fn evaluate(&self, input: &[f64], use_target: bool) -> f64 {
        assert_eq!(input.len(), self.input_len, "critic input length mismatch");
        let params = if use_target { &self.target } else { &self.online };
        let mut tape = Tape::new();
        let vars = CriticNetwork::vars(&mut tape, params);
        let x = tape.leaf_slice(input);
        let v = CriticNetwork::forward(&mut tape, &vars, x);
        tape.value(v).item()
    }

    pub fn soft_update_target(&mut self, tau: f64) {
        self.target.soft_update_from(&self.online, tau);
    }
}
