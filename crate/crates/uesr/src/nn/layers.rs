//! Layer builders: registration of linear and GRU parameters in a
//! `ParameterSet` and the matching forward compositions on a `Tape`.
//!
//! Every tensor is initialized from its own named substream
//! (`Rng::derive(seed, tensor_name)`), so adding or removing a layer never
//! shifts the draws of another. Weights and biases are uniform in
//! ±1/sqrt(fan_in).

use super::params::ParameterSet;
use super::tape::{Tape, Var};
use crate::rng::Rng;

pub fn register_linear(
    params: &mut ParameterSet,
    prefix: &str,
    out_dim: usize,
    in_dim: usize,
    seed: u64,
) {
    let w_name = format!("{prefix}.w");
    let b_name = format!("{prefix}.b");
    let mut rw = Rng::derive(seed, &w_name);
    let mut rb = Rng::derive(seed, &b_name);
    params.add_uniform(&w_name, &[out_dim, in_dim], in_dim, &mut rw);
    params.add_uniform(&b_name, &[out_dim], in_dim, &mut rb);
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

pub fn linear_vars(tape: &mut Tape, params: &ParameterSet, prefix: &str) -> LinearVars {
    LinearVars {
        w: tape.param(params, &format!("{prefix}.w")),
        b: tape.param(params, &format!("{prefix}.b")),
    }
}

pub fn linear_forward(tape: &mut Tape, vars: &LinearVars, x: Var) -> Var {
    tape.linear(vars.w, vars.b, x)
}

/// GRU cell parameters: three input matrices W, three recurrent matrices U,
/// three biases, under `{prefix}.{wz,uz,bz,wr,ur,br,wn,un,bn}`.
pub fn register_gru(
    params: &mut ParameterSet,
    prefix: &str,
    hidden: usize,
    in_dim: usize,
    seed: u64,
) {
    for gate in ["z", "r", "n"] {
        for (kind, shape, fan_in) in [
            ("w", vec![hidden, in_dim], in_dim),
            ("u", vec![hidden, hidden], hidden),
            ("b", vec![hidden], hidden),
        ] {
            let name = format!("{prefix}.{kind}{gate}");
            let mut r = Rng::derive(seed, &name);
            params.add_uniform(&name, &shape, fan_in, &mut r);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wn: Var,
    pub un: Var,
    pub bn: Var,
}

pub fn gru_vars(tape: &mut Tape, params: &ParameterSet, prefix: &str) -> GruVars {
    let mut get = |n: &str| tape.param(params, &format!("{prefix}.{n}"));
    GruVars {
        wz: get("wz"),
        uz: get("uz"),
        bz: get("bz"),
        wr: get("wr"),
        ur: get("ur"),
        br: get("br"),
        wn: get("wn"),
        un: get("un"),
        bn: get("bn"),
    }
}

/// One GRU step with the fixed gate convention
///
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r ∘ h) + bn)
///   h' = (1 - z) ∘ n + z ∘ h
///
/// Backward through time falls out of the tape when steps are chained.
pub fn gru_step(tape: &mut Tape, g: &GruVars, x: Var, h: Var) -> Var {
    let z = {
        let a = tape.matvec(g.wz, x);
        let b = tape.matvec(g.uz, h);
        let s = tape.add(a, b);
        let s = tape.add(s, g.bz);
        tape.sigmoid(s)
    };
    let r = {
        let a = tape.matvec(g.wr, x);
        let b = tape.matvec(g.ur, h);
        let s = tape.add(a, b);
        let s = tape.add(s, g.br);
        tape.sigmoid(s)
    };
    let n = {
        let rh = tape.mul(r, h);
        let a = tape.matvec(g.wn, x);
        let b = tape.matvec(g.un, rh);
        let s = tape.add(a, b);
        let s = tape.add(s, g.bn);
        tape.tanh(s)
    };
    let zc = tape.one_minus(z);
    let zn = tape.mul(zc, n);
    let zh = tape.mul(z, h);
    tape.add(zn, zh)
}
