//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Every critic and the policy are [`Mlp`]s. A forward pass returns a
//! [`Tape`] holding the layer inputs and pre-activations; the matching
//! backward pass replays it to produce parameter gradients ([`MlpGrads`])
//! and, when needed, the gradient with respect to the network input.
//!
//! Batched calls take row-major matrices with one sample per row. Parameter
//! gradients are summed over rows, so `backward_batch(tape, g)` returns
//! `d(sum_b out_b . g_b) / d(params)`.
//!
//! A tape is bound to the network instance and parameter version that
//! produced it; replaying it after the parameters were mutated, or against a
//! different network, is rejected with [`Error::StaleTape`].

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu => {
                if z > S::zero() {
                    z
                } else {
                    S::zero()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative at `z`. The ReLU subgradient at 0 is taken as 0.
    #[inline]
    pub fn derivative<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu => {
                if z > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Identity => S::one(),
        }
    }
}

/// Parameter containers the optimizers and soft updates operate on.
///
/// Tensors are exposed as flat slices in a fixed order; two sets with the same
/// sequence of slice lengths are considered shape-identical.
pub trait ParamSet<S> {
    fn tensors(&self) -> Vec<&[S]>;
    fn tensors_mut(&mut self) -> Vec<&mut [S]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn tensor_shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Layer<S> {
    weight: Array2<S>,
    bias: Array1<S>,
    activation: Activation,
}

impl<S: Scalar> Layer<S> {
    pub fn new(weight: Array2<S>, bias: Array1<S>, activation: Activation) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.is_empty() {
            return Err(Error::InvalidArgument("layer dims must be > 0".into()));
        }
        if !weight.iter().chain(bias.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Self {
            weight: weight.as_standard_layout().into_owned(),
            bias: bias.as_standard_layout().into_owned(),
            activation,
        })
    }

    /// Weight matrix, shape `(out, in)`.
    pub fn weight(&self) -> &Array2<S> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<S> {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Feed-forward network: a chain of affine layers with per-layer activations.
#[derive(Debug)]
pub struct Mlp<S> {
    layers: Vec<Layer<S>>,
    id: u64,
    version: u64,
}

impl<S: Clone> Clone for Mlp<S> {
    fn clone(&self) -> Self {
        // A clone is a distinct network: tapes from the original do not apply.
        Self {
            layers: self.layers.clone(),
            id: next_id(),
            version: 0,
        }
    }
}

/// Activation record of a forward pass.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    net: u64,
    version: u64,
    inputs: Vec<Array2<S>>,
    pre: Vec<Array2<S>>,
}

impl<S> Tape<S> {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

impl<S: Scalar> Mlp<S> {
    /// Fan-in uniform initialisation: every weight and bias of a layer with
    /// `fan_in` inputs is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(sizes, hidden, output, |fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            S::lit(rng.random_range(-bound..=bound))
        })
    }

    /// All-zero network of the given shape.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::build(sizes, hidden, output, |_| S::zero())
    }

    fn build(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        mut init: impl FnMut(usize) -> S,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least an input and an output size".into(),
            ));
        }
        if sizes.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("layer dims must be > 0".into()));
        }
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| init(fan_in));
            let bias = Array1::from_shape_fn(fan_out, |_| init(fan_in));
            let act = if l + 1 == n { output } else { hidden };
            layers.push(Layer::new(weight, bias, act)?);
        }
        Ok(Self {
            layers,
            id: next_id(),
            version: 0,
        })
    }

    /// Builds a network from explicit layers after checking chain compatibility.
    pub fn from_layers(layers: Vec<Layer<S>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer output {} does not feed next layer input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            id: next_id(),
            version: 0,
        })
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths including input and output, e.g. `[2, 64, 64, 1]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.out_dim()));
        sizes
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    /// Mutable access to one layer; invalidates outstanding tapes.
    pub fn layer_mut(&mut self, l: usize) -> (&mut Array2<S>, &mut Array1<S>) {
        self.version += 1;
        let layer = &mut self.layers[l];
        (&mut layer.weight, &mut layer.bias)
    }

    fn check_input(&self, x: &ArrayView2<S>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Batched forward pass without recording a tape.
    pub fn predict(&self, x: ArrayView2<S>) -> Result<Array2<S>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            h = z;
        }
        Ok(h)
    }

    /// Batched forward pass, recording everything backward needs.
    pub fn forward_batch(&self, x: ArrayView2<S>) -> Result<(Array2<S>, Tape<S>)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            let act = layer.activation;
            let out = z.mapv(|v| act.apply(v));
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        let tape = Tape {
            net: self.id,
            version: self.version,
            inputs,
            pre,
        };
        Ok((h, tape))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[S]) -> Result<(Vec<S>, Tape<S>)> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let (out, tape) = self.forward_batch(view)?;
        Ok((out.into_raw_vec_and_offset().0, tape))
    }

    fn check_tape(&self, tape: &Tape<S>, out_grad: &ArrayView2<S>) -> Result<()> {
        if tape.net != self.id || tape.version != self.version || tape.pre.len() != self.layers.len()
        {
            return Err(Error::StaleTape);
        }
        if out_grad.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "output gradient",
                expected: self.output_dim(),
                got: out_grad.ncols(),
            });
        }
        if out_grad.nrows() != tape.batch_size() {
            return Err(Error::DimensionMismatch {
                what: "output gradient rows",
                expected: tape.batch_size(),
                got: out_grad.nrows(),
            });
        }
        Ok(())
    }

    fn replay(
        &self,
        tape: &Tape<S>,
        out_grad: ArrayView2<S>,
        mut grads: Option<&mut MlpGrads<S>>,
        want_input: bool,
    ) -> Result<Option<Array2<S>>> {
        self.check_tape(tape, &out_grad)?;
        let mut delta = out_grad.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                Zip::from(&mut delta).and(&tape.pre[l]).for_each(|d, &z| {
                    if z <= S::zero() {
                        *d = S::zero();
                    }
                });
            }
            if let Some(g) = grads.as_deref_mut() {
                // assign keeps the standard layout the flat views rely on
                g.weights[l].assign(&delta.t().dot(&tape.inputs[l]));
                g.biases[l].assign(&delta.sum_axis(Axis(0)));
            }
            if l > 0 || want_input {
                delta = delta.dot(&layer.weight);
            }
        }
        Ok(want_input.then_some(delta))
    }

    /// Batched backward pass: parameter gradients and the input gradient.
    pub fn backward_batch(
        &self,
        tape: &Tape<S>,
        out_grad: ArrayView2<S>,
    ) -> Result<(MlpGrads<S>, Array2<S>)> {
        let mut grads = MlpGrads::zeros_like(self);
        let input = self
            .replay(tape, out_grad, Some(&mut grads), true)?
            .expect("input gradient requested");
        Ok((grads, input))
    }

    /// Batched backward pass producing parameter gradients only.
    pub fn param_grads(&self, tape: &Tape<S>, out_grad: ArrayView2<S>) -> Result<MlpGrads<S>> {
        let mut grads = MlpGrads::zeros_like(self);
        self.replay(tape, out_grad, Some(&mut grads), false)?;
        Ok(grads)
    }

    /// Gradient with respect to the network input only.
    pub fn input_grad(&self, tape: &Tape<S>, out_grad: ArrayView2<S>) -> Result<Array2<S>> {
        Ok(self
            .replay(tape, out_grad, None, true)?
            .expect("input gradient requested"))
    }

    /// Single-sample backward pass.
    pub fn backward(&self, tape: &Tape<S>, out_grad: &[S]) -> Result<MlpGrads<S>> {
        let view = ArrayView2::from_shape((1, out_grad.len()), out_grad)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        self.param_grads(tape, view)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

impl<S: Scalar> ParamSet<S> for Mlp<S> {
    fn tensors(&self) -> Vec<&[S]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        self.version += 1;
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Gradient buffers matching an [`Mlp`] tensor for tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<S> {
    pub weights: Vec<Array2<S>>,
    pub biases: Vec<Array1<S>>,
}

impl<S: Scalar> MlpGrads<S> {
    pub fn zeros_like(net: &Mlp<S>) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: S) {
        for w in &mut self.weights {
            w.mapv_inplace(|x| x * k);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|x| x * k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

impl<S: Scalar> ParamSet<S> for MlpGrads<S> {
    fn tensors(&self) -> Vec<&[S]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Checks two parameter sets have the same tensor layout.
pub fn check_same_shape<S, A: ParamSet<S> + ?Sized, B: ParamSet<S> + ?Sized>(
    a: &A,
    b: &B,
) -> Result<()> {
    let (sa, sb) = (a.tensor_shapes(), b.tensor_shapes());
    if sa != sb {
        return Err(Error::ShapeMismatch(format!(
            "tensor layouts differ: {sa:?} vs {sb:?}"
        )));
    }
    Ok(())
}

/// Polyak averaging: `target <- (1 - tau) * target + tau * online`.
pub fn soft_update<S: Scalar, P: ParamSet<S>>(online: &P, target: &mut P, tau: S) -> Result<()> {
    if !(tau >= S::zero() && tau <= S::one()) {
        return Err(Error::InvalidArgument(format!(
            "soft update rate {tau} outside [0, 1]"
        )));
    }
    check_same_shape(online, target)?;
    let keep = S::one() - tau;
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (t, &o) in t.iter_mut().zip(o) {
            *t = keep * *t + tau * o;
        }
    }
    Ok(())
}

/// Flattens all tensors into one vector (diagnostics, distance checks).
pub fn flatten<S: Scalar, P: ParamSet<S> + ?Sized>(p: &P) -> Vec<S> {
    p.tensors().into_iter().flatten().copied().collect()
}

/// Euclidean distance between two shape-identical parameter sets.
pub fn param_distance<S: Scalar, P: ParamSet<S>>(a: &P, b: &P) -> Result<S> {
    check_same_shape(a, b)?;
    let mut acc = S::zero();
    for (x, y) in a.tensors().into_iter().zip(b.tensors()) {
        for (&x, &y) in x.iter().zip(y) {
            acc = acc + (x - y) * (x - y);
        }
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 8, 2], Activation::Relu, Activation::Identity).unwrap();
        let (y, _) = net.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn relu_gates_negative_inputs() {
        let layer = Layer::new(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0], Activation::Relu)
            .unwrap();
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let (y, _) = net.forward(&[1.0, -1.0]).unwrap();
        assert_eq!(y, vec![1.0, 0.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = Mlp::<f64>::zeros(&[3, 4, 1], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        let mut r = rng(7);
        let net = Mlp::<f64>::new(&[2, 64, 64, 1], Activation::Relu, Activation::Identity, &mut r)
            .unwrap();
        let x = [0.3, -1.7];
        let (y, _) = net.forward(&x).unwrap();

        // Independent re-evaluation with explicit loops.
        let mut h: Vec<f64> = x.to_vec();
        for layer in net.layers() {
            let w = layer.weight();
            let mut next = vec![0.0; layer.out_dim()];
            for (i, out) in next.iter_mut().enumerate() {
                let mut acc = layer.bias()[i];
                for (j, hj) in h.iter().enumerate() {
                    acc += w[[i, j]] * hj;
                }
                *out = layer.activation().apply(acc);
            }
            h = next;
        }
        assert!((y[0] - h[0]).abs() <= 1e-12 * (1.0 + h[0].abs()));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut r = rng(1);
        let net = Mlp::<f64>::new(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut r)
            .unwrap();
        let (_, tape) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = net.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(flatten(&g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_closed_form_gradient() {
        let layer = Layer::new(
            array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]],
            array![0.1, -0.2],
            Activation::Identity,
        )
        .unwrap();
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let x = [1.0, 2.0, -3.0];
        let g_out = [0.7, -1.3];
        let (_, tape) = net.forward(&x).unwrap();
        let g = net.backward(&tape, &g_out).unwrap();
        for i in 0..2 {
            assert_eq!(g.biases[0][i], g_out[i]);
            for j in 0..3 {
                assert_eq!(g.weights[0][[i, j]], g_out[i] * x[j]);
            }
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut r = rng(3);
        let mut net =
            Mlp::<f64>::new(&[2, 4, 1], Activation::Relu, Activation::Identity, &mut r).unwrap();
        let (_, tape) = net.forward(&[1.0, 1.0]).unwrap();
        net.tensors_mut()[0][0] += 1.0;
        assert!(matches!(net.backward(&tape, &[1.0]), Err(Error::StaleTape)));

        let other = net.clone();
        let (_, tape) = net.forward(&[1.0, 1.0]).unwrap();
        assert!(matches!(other.backward(&tape, &[1.0]), Err(Error::StaleTape)));
    }

    #[test]
    fn soft_update_endpoints_and_midpoint() {
        let online = Mlp::<f64>::from_layers(vec![Layer::new(
            array![[2.0]],
            array![2.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let mut target = Mlp::<f64>::zeros(&[1, 1], Activation::Identity, Activation::Identity)
            .unwrap();

        let before = flatten(&target);
        soft_update(&online, &mut target, 0.0).unwrap();
        assert_eq!(flatten(&target), before);

        soft_update(&online, &mut target, 0.25).unwrap();
        assert_eq!(flatten(&target), vec![0.5, 0.5]);

        soft_update(&online, &mut target, 1.0).unwrap();
        assert_eq!(flatten(&target), flatten(&online));
    }

    #[test]
    fn soft_update_rejects_shape_mismatch() {
        let a = Mlp::<f64>::zeros(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        let mut b = Mlp::<f64>::zeros(&[2, 4, 1], Activation::Relu, Activation::Identity).unwrap();
        assert!(soft_update(&a, &mut b, 0.5).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let mut r = rng(11);
        let net64 =
            Mlp::<f64>::new(&[2, 16, 1], Activation::Relu, Activation::Identity, &mut r).unwrap();
        let layers = net64
            .layers()
            .iter()
            .map(|l| {
                Layer::new(
                    l.weight().mapv(|v| v as f32),
                    l.bias().mapv(|v| v as f32),
                    l.activation(),
                )
                .unwrap()
            })
            .collect();
        let net32 = Mlp::<f32>::from_layers(layers).unwrap();
        let (y64, _) = net64.forward(&[0.5, -0.25]).unwrap();
        let (y32, _) = net32.forward(&[0.5, -0.25]).unwrap();
        assert!((y64[0] - y32[0] as f64).abs() < 1e-5);
    }
}
