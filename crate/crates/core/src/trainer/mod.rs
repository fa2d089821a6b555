//! A small dense feed-forward network: ReLU hidden layers, softmax output,
//! cross-entropy against (normalised) multi-hot targets, and hand-written
//! backpropagation.
//!
//! Weights are stored input-major: row `i` of a layer holds the weights from
//! input unit `i` to every output unit. A multi-hot input then costs one
//! contiguous row addition per active bit, and both the forward pass and the
//! weight gradient are plain `axpy` loops.
//!
//! The network is generic over [`Real`]; training normally uses `f32`, while
//! gradient checks use `f64`.

mod checkpoint;
mod optim;
mod train;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};
pub use train::{encode_examples, evaluate, train, train_examples, EvalConfig, Example, TrainConfig, TrainReport};

use crate::codec::{BloomVector, ProbabilityVector};
use crate::error::{Error, Result};
use crate::rng;

/// Floating-point element type of a network.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + Send + Sync + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Floor applied to probabilities inside the logarithm of the loss.
pub const LOSS_EPSILON: f64 = 1e-12;

/// Layer sizes from input to output plus the initialisation seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub init_seed: u64,
}

/// One fully connected layer, `inputs × outputs` weights stored input-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    inputs: usize,
    outputs: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Weight from input `i` to output `o`.
    pub fn weight(&self, i: usize, o: usize) -> T {
        self.weights[i * self.outputs + o]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    #[inline]
    fn row(&self, i: usize) -> &[T] {
        &self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    #[inline]
    fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    fn forward(&self, input: Input<'_, T>, out: &mut [T]) {
        out.copy_from_slice(&self.bias);
        match input {
            Input::Active(active) => {
                for &i in active {
                    axpy(T::one(), self.row(i as usize), out);
                }
            }
            Input::Dense(x) => {
                for (i, &xi) in x.iter().enumerate() {
                    if xi != T::zero() {
                        axpy(xi, self.row(i), out);
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// A network input: either the active bits of a multi-hot vector or a dense
/// vector.
#[derive(Clone, Copy, Debug)]
pub enum Input<'a, T> {
    Active(&'a [u32]),
    Dense(&'a [T]),
}

impl<T> Input<'_, T> {
    fn check(&self, dim: usize) -> Result<()> {
        match self {
            Input::Active(active) => match active.iter().find(|&&i| i as usize >= dim) {
                Some(&i) => Err(Error::OutOfRange {
                    what: "input bit",
                    value: i as usize,
                    low: 0,
                    high: dim - 1,
                }),
                None => Ok(()),
            },
            Input::Dense(x) if x.len() != dim => Err(Error::mismatch("input length", dim, x.len())),
            Input::Dense(_) => Ok(()),
        }
    }
}

/// Dense layers with ReLU between them and softmax on top.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Dense<T>>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::invalid("a network needs at least an input and an output size"));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("layer sizes must be positive"));
    }
    Ok(())
}

impl<T: Real> Network<T> {
    /// Uniform initialisation in `±sqrt(6 / fan_in)` (He-uniform), zero biases.
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        check_sizes(&spec.layer_sizes)?;
        let mut r = rng::seeded(spec.init_seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let mut layer = Dense::zeros(w[0], w[1]);
                let bound = (6.0 / w[0] as f64).sqrt();
                for x in &mut layer.weights {
                    *x = T::lit((2.0 * rng::unit(&mut r) - 1.0) * bound);
                }
                layer
            })
            .collect();
        Ok(Network { layers })
    }

    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Network {
            layers: layer_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Visits every parameter (weights then bias, layer by layer).
    pub fn for_each_parameter_mut(&mut self, mut f: impl FnMut(&mut T)) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(&mut f);
        }
    }

    fn scratch(&self) -> Scratch<T> {
        Scratch {
            acts: self.layers.iter().map(|l| vec![T::zero(); l.outputs]).collect(),
            deltas: self.layers.iter().map(|l| vec![T::zero(); l.outputs]).collect(),
        }
    }

    /// Runs the network into `scratch`; the output probabilities end up in
    /// `scratch.acts.last()`.
    fn forward_into(&self, input: Input<'_, T>, scratch: &mut Scratch<T>) -> Result<()> {
        input.check(self.input_dim())?;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = scratch.acts.split_at_mut(l);
            let out = &mut rest[0];
            let layer_input = if l == 0 { input } else { Input::Dense(&prev[l - 1][..]) };
            layer.forward(layer_input, out);
            if l < last {
                for z in out.iter_mut() {
                    if *z < T::zero() {
                        *z = T::zero();
                    }
                }
            } else {
                softmax_in_place(out);
            }
        }
        if scratch.acts[last].iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("forward pass".into()));
        }
        Ok(())
    }

    /// Output probabilities for one input.
    pub fn forward(&self, input: Input<'_, T>) -> Result<Vec<T>> {
        let mut scratch = self.scratch();
        self.forward_into(input, &mut scratch)?;
        Ok(scratch.acts.pop().unwrap())
    }

    /// Accumulates the gradient of one example's loss into `grads` (scaled
    /// by `weight`) and returns the loss. `scratch` must hold this example's
    /// forward pass.
    fn backward_into(
        &self,
        input: Input<'_, T>,
        target: &[u32],
        weight: T,
        scratch: &mut Scratch<T>,
        grads: &mut Network<T>,
    ) {
        let last = self.layers.len() - 1;
        {
            let probs = &scratch.acts[last];
            let delta = &mut scratch.deltas[last];
            let share = T::one() / T::from_usize(target.len()).unwrap();
            for (d, &p) in delta.iter_mut().zip(probs) {
                *d = p * weight;
            }
            for &t in target {
                delta[t as usize] -= share * weight;
            }
        }
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let (lower, upper) = scratch.deltas.split_at_mut(l);
            let delta = &upper[0];
            axpy(T::one(), delta, &mut g.bias);
            if l == 0 {
                match input {
                    Input::Active(active) => {
                        for &i in active {
                            axpy(T::one(), delta, g.row_mut(i as usize));
                        }
                    }
                    Input::Dense(x) => {
                        for (i, &xi) in x.iter().enumerate() {
                            if xi != T::zero() {
                                axpy(xi, delta, g.row_mut(i));
                            }
                        }
                    }
                }
            } else {
                let a_prev = &scratch.acts[l - 1];
                let d_prev = &mut lower[l - 1];
                for (i, &a) in a_prev.iter().enumerate() {
                    if a > T::zero() {
                        axpy(a, delta, g.row_mut(i));
                        d_prev[i] = dot(layer.row(i), delta);
                    } else {
                        d_prev[i] = T::zero();
                    }
                }
            }
        }
    }
}

struct Scratch<T> {
    acts: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
}

fn softmax_in_place<T: Real>(z: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in z.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = T::one() / sum;
    for x in z.iter_mut() {
        *x *= inv;
    }
}

/// Cross-entropy of `probs` against the active bits of `target`, with the
/// target normalised to sum to one.
pub fn cross_entropy<T: Real>(probs: &[T], target: &[u32]) -> Result<T> {
    if target.is_empty() {
        return Err(Error::Empty("cross-entropy target has no set bit".into()));
    }
    let eps = T::lit(LOSS_EPSILON);
    let share = T::one() / T::from_usize(target.len()).unwrap();
    let mut loss = T::zero();
    for &t in target {
        let p = *probs.get(t as usize).ok_or(Error::OutOfRange {
            what: "target bit",
            value: t as usize,
            low: 0,
            high: probs.len().saturating_sub(1),
        })?;
        loss -= share * p.max(eps).ln();
    }
    Ok(loss)
}

/// [`cross_entropy`] over the crate's vector types.
pub fn loss_cross_entropy(probs: &ProbabilityVector, target: &BloomVector) -> Result<f64> {
    if probs.m() != target.m() {
        return Err(Error::mismatch("target length", probs.m(), target.m()));
    }
    let active: Vec<u32> = target.ones().map(|r| r as u32).collect();
    cross_entropy(probs.as_slice(), &active)
}

/// Mean loss over `batch` and its gradient with respect to every parameter.
pub fn batch_gradients<T: Real>(net: &Network<T>, batch: &[(Input<'_, T>, &[u32])]) -> Result<(T, Network<T>)> {
    let mut grads = net.zeros_like();
    let mut scratch = net.scratch();
    let loss = accumulate_batch(net, batch, &mut scratch, &mut grads)?;
    Ok((loss, grads))
}

fn accumulate_batch<T: Real>(
    net: &Network<T>,
    batch: &[(Input<'_, T>, &[u32])],
    scratch: &mut Scratch<T>,
    grads: &mut Network<T>,
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    let weight = T::one() / T::from_usize(batch.len()).unwrap();
    let mut loss = T::zero();
    for &(input, target) in batch {
        if target.is_empty() {
            return Err(Error::Empty("training target has no set bit".into()));
        }
        net.forward_into(input, scratch)?;
        loss += cross_entropy(scratch.acts.last().unwrap(), target)? * weight;
        net.backward_into(input, target, weight, scratch, grads);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(loss)
}

/// Mean loss over `batch` without gradients.
pub fn batch_loss<T: Real>(net: &Network<T>, batch: &[(Input<'_, T>, &[u32])]) -> Result<T> {
    let mut scratch = net.scratch();
    let mut loss = T::zero();
    for &(input, target) in batch {
        net.forward_into(input, &mut scratch)?;
        loss += cross_entropy(scratch.acts.last().unwrap(), target)?;
    }
    Ok(loss / T::from_usize(batch.len().max(1)).unwrap())
}

/// One optimisation step on `batch`; returns the mean batch loss measured
/// before the update.
pub fn backward_and_step<T: Real>(
    net: &mut Network<T>,
    batch: &[(Input<'_, T>, &[u32])],
    optimizer: &mut Optimizer<T>,
) -> Result<T> {
    let (loss, grads) = batch_gradients(net, batch)?;
    optimizer.step(net, &grads)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_gives_uniform_output() {
        let net = Network::<f64>::zeros(&[5, 3, 4]).unwrap();
        let p = net.forward(Input::Active(&[0, 3])).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn output_is_a_distribution() {
        for seed in 0..20 {
            let net = Network::<f32>::new(&NetworkSpec {
                layer_sizes: vec![30, 16, 8, 12],
                init_seed: seed,
            })
            .unwrap();
            let x: Vec<f32> = (0..30).map(|i| ((i * 7 + seed as usize) % 5) as f32 - 2.0).collect();
            let p = net.forward(Input::Dense(&x)).unwrap();
            let s: f32 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn forward_matches_hand_arithmetic() {
        // 2-2-2 network with fixed weights
        let mut net = Network::<f64>::zeros(&[2, 2, 2]).unwrap();
        {
            let l0 = &mut net.layers_mut()[0];
            // input-major: w[i][o]
            l0.weights_mut().copy_from_slice(&[0.5, -1.0, 0.25, 2.0]);
            l0.bias_mut().copy_from_slice(&[0.1, -0.2]);
        }
        {
            let l1 = &mut net.layers_mut()[1];
            l1.weights_mut().copy_from_slice(&[1.0, -0.5, 0.3, 0.7]);
            l1.bias_mut().copy_from_slice(&[0.0, 0.05]);
        }
        let x = [1.0, 2.0];
        // hidden pre-activations: h0 = 0.1 + 0.5*1 + 0.25*2 = 1.1,
        // h1 = -0.2 - 1.0*1 + 2.0*2 = 2.8
        let h = [1.1f64.max(0.0), 2.8f64.max(0.0)];
        let z0 = 0.0 + h[0] * 1.0 + h[1] * 0.3;
        let z1 = 0.05 + h[0] * -0.5 + h[1] * 0.7;
        let e0 = z0.exp();
        let e1 = z1.exp();
        let expected = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let p = net.forward(Input::Dense(&x)).unwrap();
        assert!((p[0] - expected[0]).abs() < 1e-14);
        assert!((p[1] - expected[1]).abs() < 1e-14);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = Network::<f64>::zeros(&[3, 2]).unwrap();
        assert!(net.forward(Input::Dense(&[1.0, 2.0])).is_err());
        assert!(net.forward(Input::Active(&[3])).is_err());
        assert!(Network::<f64>::zeros(&[3]).is_err());
        assert!(Network::<f64>::zeros(&[3, 0]).is_err());
    }

    #[test]
    fn forward_reports_non_finite() {
        let mut net = Network::<f64>::zeros(&[2, 2]).unwrap();
        net.layers_mut()[0].weights_mut()[0] = f64::NAN;
        assert!(matches!(net.forward(Input::Active(&[0])), Err(Error::NonFinite(_))));
    }

    #[test]
    fn cross_entropy_cases() {
        let m = 8;
        let uniform = vec![1.0 / m as f64; m];
        assert!((cross_entropy(&uniform, &[3]).unwrap() - (m as f64).ln()).abs() < 1e-12);

        let mut near_one = vec![1e-9; 4];
        near_one[2] = 1.0 - 3e-9;
        assert!(cross_entropy(&near_one, &[2]).unwrap() < 1e-8);

        // multi-hot target normalised: -(ln 0.5 + ln 0.25)/2
        let p = [0.5, 0.25, 0.25];
        let got = cross_entropy(&p, &[0, 1]).unwrap();
        assert!((got - -(0.5f64.ln() + 0.25f64.ln()) / 2.0).abs() < 1e-12);

        assert!(cross_entropy(&p, &[]).is_err());
        assert!(cross_entropy(&[0.0, 1.0], &[0]).unwrap() > 27.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = Network::<f64>::new(&NetworkSpec {
            layer_sizes: vec![5, 4, 3],
            init_seed: 7,
        })
        .unwrap();
        let x = [0.3, -1.2, 0.8, 0.0, 2.0];
        let sparse: [u32; 2] = [1, 4];
        let t0: [u32; 1] = [2];
        let t1: [u32; 2] = [0, 1];
        let batch = [(Input::Dense(&x[..]), &t0[..]), (Input::Active(&sparse[..]), &t1[..])];
        let (_, grads) = batch_gradients(&net, &batch).unwrap();

        let h = 1e-6;
        let mut analytic = Vec::new();
        grads.clone().for_each_parameter_mut(|g| analytic.push(*g));
        let n = net.parameter_count();
        for p in 0..n {
            let shifted = |delta: f64| {
                let mut probe = net.clone();
                let mut idx = 0;
                probe.for_each_parameter_mut(|w| {
                    if idx == p {
                        *w += delta;
                    }
                    idx += 1;
                });
                batch_loss(&probe, &batch).unwrap()
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            let a = analytic[p];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-4 || (a - numeric).abs() < 1e-9, "param {p}: {a} vs {numeric}");
        }
    }

    #[test]
    fn loss_over_crate_types() {
        let probs = ProbabilityVector::new(vec![0.25; 4]).unwrap();
        let target = BloomVector::from_bools(&[false, true, false, false]);
        assert!((loss_cross_entropy(&probs, &target).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(loss_cross_entropy(&probs, &BloomVector::zeros(4)).is_err());
        assert!(loss_cross_entropy(&probs, &BloomVector::zeros(3)).is_err());
    }
}
