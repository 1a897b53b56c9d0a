//! Reverse-mode differentiation over a flat tape.
//!
//! Every forward op appends a node holding its output value and the parent
//! indices; `backward` walks the tape in reverse and accumulates gradients.
//! Activations are vectors and parameters are vectors or matrices, which is
//! all the networks here need. Shape mismatches are wiring bugs and panic.

use super::params::ParameterSet;
use super::tensor::Tensor;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec { w: Var, x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, k: f64 },
    AddScalar { a: Var },
    OneMinus { a: Var },
    Relu { a: Var },
    Sigmoid { a: Var },
    Tanh { a: Var },
    Softmax { a: Var },
    LogSoftmax { a: Var },
    Pick { a: Var, index: usize },
    Sum { a: Var },
    Sqrt { a: Var },
    Concat { parts: Vec<Var> },
    Slice { a: Var, start: usize },
    AddN { parts: Vec<Var> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recording tape. One tape per loss (or per rollout segment); `clear`
/// recycles the allocation.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    /// Leaves registered as named parameters, for gradient harvest.
    param_vars: Vec<(Var, String)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            param_vars: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.param_vars.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target w.r.t. node `v`.
    pub fn grad(&self, v: Var) -> &[f64] {
        assert!(!self.grads.is_empty(), "backward has not run");
        &self.grads[v.0]
    }

    // ---- leaves ----

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn leaf_slice(&mut self, xs: &[f64]) -> Var {
        self.leaf(Tensor::vector(xs.to_vec()))
    }

    /// Copies a named parameter onto the tape and remembers it so
    /// `accumulate_param_grads` can route its gradient back.
    pub fn param(&mut self, params: &ParameterSet, name: &str) -> Var {
        let v = self.leaf(params.value(name).clone());
        self.param_vars.push((v, name.to_string()));
        v
    }

    // ---- ops ----

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (wt, xt) = (&self.nodes[w.0].value, &self.nodes[x.0].value);
        assert_eq!(wt.shape().len(), 2, "matvec weight must be a matrix");
        let (rows, cols) = (wt.rows(), wt.cols());
        assert_eq!(
            cols,
            xt.len(),
            "matvec: {}x{} weight applied to length-{} input",
            rows,
            cols,
            xt.len()
        );
        let wd = wt.data();
        let xd = xt.data();
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            let row = &wd[i * cols..(i + 1) * cols];
            let mut acc = 0.0;
            for j in 0..cols {
                acc += row[j] * xd[j];
            }
            out[i] = acc;
        }
        self.push(Tensor::vector(out), Op::MatVec { w, x })
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(at.len(), bt.len(), "elementwise op on mismatched lengths");
        let out: Vec<f64> = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let at = &self.nodes[a.0].value;
        let out: Vec<f64> = at.data().iter().map(|&x| f(x)).collect();
        let shape = at.shape().to_vec();
        self.push(Tensor::from_vec(&shape, out), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| k * x, Op::Scale { a, k })
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x + k, Op::AddScalar { a })
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus { a })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, |x| x.tanh(), Op::Tanh { a })
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, |x| x.sqrt(), Op::Sqrt { a })
    }

    /// Numerically stabilized softmax over a vector.
    pub fn softmax(&mut self, a: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let max = at.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = at.data().iter().map(|&x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let out: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        self.push(Tensor::vector(out), Op::Softmax { a })
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let max = at.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + at.data()
                .iter()
                .map(|&x| (x - max).exp())
                .sum::<f64>()
                .ln();
        let out: Vec<f64> = at.data().iter().map(|&x| x - lse).collect();
        self.push(Tensor::vector(out), Op::LogSoftmax { a })
    }

    /// Selects one element of a vector as a scalar node.
    pub fn pick(&mut self, a: Var, index: usize) -> Var {
        let at = &self.nodes[a.0].value;
        assert!(index < at.len(), "pick index out of range");
        let x = at.data()[index];
        self.push(Tensor::scalar(x), Op::Pick { a, index })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.nodes[p.0].value.data());
        }
        self.push(
            Tensor::vector(out),
            Op::Concat {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let at = &self.nodes[a.0].value;
        assert!(start + len <= at.len(), "slice out of range");
        let out = at.data()[start..start + len].to_vec();
        self.push(Tensor::vector(out), Op::Slice { a, start })
    }

    /// n-ary add of same-shape nodes; used to accumulate per-step losses.
    pub fn add_n(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "add_n of nothing");
        let len = self.nodes[parts[0].0].value.len();
        let mut out = vec![0.0; len];
        for &p in parts {
            let pd = self.nodes[p.0].value.data();
            assert_eq!(pd.len(), len, "add_n on mismatched lengths");
            for (o, &x) in out.iter_mut().zip(pd) {
                *o += x;
            }
        }
        self.push(
            Tensor::vector(out),
            Op::AddN {
                parts: parts.to_vec(),
            },
        )
    }

    // ---- composites ----

    /// W·x + b.
    pub fn linear(&mut self, w: Var, b: Var, x: Var) -> Var {
        let wx = self.matvec(w, x);
        self.add(wx, b)
    }

    /// sqrt(sum(x^2) + eps): the L2 norm, smoothed at zero.
    pub fn l2_norm(&mut self, x: Var, eps: f64) -> Var {
        let sq = self.mul(x, x);
        let s = self.sum(sq);
        let se = self.add_scalar(s, eps);
        self.sqrt(se)
    }

    /// Entropy of the categorical distribution given by `logits`.
    pub fn entropy_from_logits(&mut self, logits: Var) -> Var {
        let p = self.softmax(logits);
        let lp = self.log_softmax(logits);
        let plp = self.mul(p, lp);
        let s = self.sum(plp);
        self.scale(s, -1.0)
    }

    // ---- backward ----

    /// Runs reverse accumulation from scalar node `loss`. Resets all node
    /// gradients first, so one call per tape gives the full gradient.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward target must be scalar"
        );
        self.grads.clear();
        self.grads
            .extend(self.nodes.iter().map(|n| vec![0.0; n.value.len()]));
        self.grads[loss.0][0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            // Take this node's gradient out to sidestep aliasing with parents.
            let gy = std::mem::take(&mut self.grads[i]);
            if gy.iter().all(|&g| g == 0.0) {
                self.grads[i] = gy;
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let (w, x) = (*w, *x);
                    let wt = &self.nodes[w.0].value;
                    let (rows, cols) = (wt.rows(), wt.cols());
                    let xd = self.nodes[x.0].value.data().to_vec();
                    {
                        let gw = &mut self.grads[w.0];
                        for r in 0..rows {
                            let g = gy[r];
                            if g != 0.0 {
                                for c in 0..cols {
                                    gw[r * cols + c] += g * xd[c];
                                }
                            }
                        }
                    }
                    let wd = self.nodes[w.0].value.data().to_vec();
                    let gx = &mut self.grads[x.0];
                    for r in 0..rows {
                        let g = gy[r];
                        if g != 0.0 {
                            for c in 0..cols {
                                gx[c] += g * wd[r * cols + c];
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    add_into(&mut self.grads[a.0], &gy, 1.0);
                    add_into(&mut self.grads[b.0], &gy, 1.0);
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    add_into(&mut self.grads[a.0], &gy, 1.0);
                    add_into(&mut self.grads[b.0], &gy, -1.0);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let bd = self.nodes[b.0].value.data().to_vec();
                    {
                        let ga = &mut self.grads[a.0];
                        for (k, &g) in gy.iter().enumerate() {
                            ga[k] += g * bd[k];
                        }
                    }
                    let gb = &mut self.grads[b.0];
                    for (k, &g) in gy.iter().enumerate() {
                        gb[k] += g * ad[k];
                    }
                }
                Op::Scale { a, k } => {
                    let (a, k) = (*a, *k);
                    add_into(&mut self.grads[a.0], &gy, k);
                }
                Op::AddScalar { a } => {
                    let a = *a;
                    add_into(&mut self.grads[a.0], &gy, 1.0);
                }
                Op::OneMinus { a } => {
                    let a = *a;
                    add_into(&mut self.grads[a.0], &gy, -1.0);
                }
                Op::Relu { a } => {
                    let a = *a;
                    let yd = self.nodes[i].value.data().to_vec();
                    let ga = &mut self.grads[a.0];
                    for (k, &g) in gy.iter().enumerate() {
                        if yd[k] > 0.0 {
                            ga[k] += g;
                        }
                    }
                }
                Op::Sigmoid { a } => {
                    let a = *a;
                    let yd = self.nodes[i].value.data().to_vec();
                    let ga = &mut self.grads[a.0];
                    for (k, &g) in gy.iter().enumerate() {
                        ga[k] += g * yd[k] * (1.0 - yd[k]);
                    }
                }
                Op::Tanh { a } => {
                    let a = *a;
                    let yd = self.nodes[i].value.data().to_vec();
                    let ga = &mut self.grads[a.0];
                    for (k, &g) in gy.iter().enumerate() {
                        ga[k] += g * (1.0 - yd[k] * yd[k]);
                    }
                }
                Op::Sqrt { a } => {
                    let a = *a;
                    let yd = self.nodes[i].value.data().to_vec();
                    let ga = &mut self.grads[a.0];
                    for (k, &g) in gy.iter().enumerate() {
                        ga[k] += g * 0.5 / yd[k];
                    }
                }
                Op::Softmax { a } => {
                    let a = *a;
                    let yd = self.nodes[i].value.data().to_vec();
                    let dot: f64 = gy.iter().zip(&yd).map(|(&g, &y)| g * y).sum();
                    let ga = &mut self.grads[a.0];
                    for (k, &y) in yd.iter().enumerate() {
                        ga[k] += y * (gy[k] - dot);
                    }
                }
                Op::LogSoftmax { a } => {
                    let a = *a;
                    let yd = self.nodes[i].value.data().to_vec();
                    let gsum: f64 = gy.iter().sum();
                    let ga = &mut self.grads[a.0];
                    for (k, &y) in yd.iter().enumerate() {
                        ga[k] += gy[k] - y.exp() * gsum;
                    }
                }
                Op::Pick { a, index } => {
                    let (a, index) = (*a, *index);
                    self.grads[a.0][index] += gy[0];
                }
                Op::Sum { a } => {
                    let a = *a;
                    let ga = &mut self.grads[a.0];
                    for g in ga.iter_mut() {
                        *g += gy[0];
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        add_into(&mut self.grads[p.0], &gy[off..off + n], 1.0);
                        off += n;
                    }
                }
                Op::Slice { a, start } => {
                    let (a, start) = (*a, *start);
                    let ga = &mut self.grads[a.0];
                    for (k, &g) in gy.iter().enumerate() {
                        ga[start + k] += g;
                    }
                }
                Op::AddN { parts } => {
                    let parts = parts.clone();
                    for p in parts {
                        add_into(&mut self.grads[p.0], &gy, 1.0);
                    }
                }
            }
            self.grads[i] = gy;
        }
    }

    /// Adds the gradients of every registered parameter leaf into the
    /// parameter set's gradient buffers (matched by name).
    pub fn accumulate_param_grads(&self, params: &mut ParameterSet) {
        for (v, name) in &self.param_vars {
            let g = self.grad(*v);
            params.grad_mut(name).data_mut()
                .iter_mut()
                .zip(g)
                .for_each(|(pg, &x)| *pg += x);
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_passes_through() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::from_vec(
            &[3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ));
        let x = t.leaf_slice(&[2.0, -1.0, 0.5]);
        let y = t.matvec(w, x);
        assert_eq!(t.value(y).data(), &[2.0, -1.0, 0.5]);
    }

    #[test]
    fn matvec_zero_weights_zero_output() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::zeros(&[2, 3]));
        let b = t.leaf(Tensor::zeros(&[2]));
        let x = t.leaf_slice(&[1.0, 2.0, 3.0]);
        let y = t.linear(w, b, x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_equal_logits_uniform() {
        let mut t = Tape::new();
        let x = t.leaf_slice(&[3.0; 5]);
        let s = t.softmax(x);
        for &p in t.value(s).data() {
            assert!((p - 0.2).abs() < 1e-12);
        }
        let total: f64 = t.value(s).data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut t = Tape::new();
        let x = t.leaf_slice(&[0.0]);
        let s = t.sigmoid(x);
        assert_eq!(t.value(s).data()[0], 0.5);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut t = Tape::new();
        let a = t.leaf_slice(&[1.0, 2.0, 3.0]);
        let b = t.leaf_slice(&[1001.0, 1002.0, 1003.0]);
        let sa = t.softmax(a);
        let sb = t.softmax(b);
        for (x, y) in t.value(sa).data().iter().zip(t.value(sb).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_through_simple_chain() {
        // loss = sum((2x)^2) = 4 sum(x^2), d/dx = 8x
        let mut t = Tape::new();
        let x = t.leaf_slice(&[1.0, -2.0, 3.0]);
        let y = t.scale(x, 2.0);
        let sq = t.mul(y, y);
        let loss = t.sum(sq);
        t.backward(loss);
        let g = t.grad(x);
        assert_eq!(g, &[8.0, -16.0, 24.0]);
    }

    #[test]
    fn mul_self_aliasing_doubles() {
        // loss = sum(x*x), grad = 2x even though both parents alias.
        let mut t = Tape::new();
        let x = t.leaf_slice(&[3.0, -1.0]);
        let sq = t.mul(x, x);
        let loss = t.sum(sq);
        t.backward(loss);
        assert_eq!(t.grad(x), &[6.0, -2.0]);
    }

    #[test]
    fn concat_slice_roundtrip_gradient() {
        let mut t = Tape::new();
        let a = t.leaf_slice(&[1.0, 2.0]);
        let b = t.leaf_slice(&[3.0]);
        let c = t.concat(&[a, b]);
        let s = t.slice(c, 1, 2);
        let loss = t.sum(s);
        t.backward(loss);
        assert_eq!(t.grad(a), &[0.0, 1.0]);
        assert_eq!(t.grad(b), &[1.0]);
    }

    #[test]
    fn entropy_of_onehot_logits_is_zero_of_uniform_is_log_n() {
        let mut t = Tape::new();
        let sharp = t.leaf_slice(&[1000.0, 0.0, 0.0]);
        let h0 = t.entropy_from_logits(sharp);
        assert!(t.value(h0).item().abs() < 1e-9);
        let flat = t.leaf_slice(&[0.0; 4]);
        let h1 = t.entropy_from_logits(flat);
        assert!((t.value(h1).item() - 4.0f64.ln()).abs() < 1e-12);
    }
}
