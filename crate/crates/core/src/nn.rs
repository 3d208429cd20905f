//! Dense multilayer perceptrons with exact reverse-mode gradients, Adam with
//! global-norm clipping, and Polyak averaging.
//!
//! Hidden layers use a rectifier (subgradient 0 at 0). The output layer is
//! either the identity (critics) or `tanh` (actors). Batches are row-major
//! `batch x width` slices.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_sizes: Vec<usize>,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output widths".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        Ok(Self {
            layer_sizes,
            output_activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// One affine map. `weights` is row-major `fan_out x fan_in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![T::zero(); fan_in * fan_out],
            bias: vec![T::zero(); fan_out],
        }
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Gradient (or optimizer moment) with the same layout as an [`Mlp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            layers: spec.layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    pub fn norm(&self) -> T {
        self.iter().map(|&g| g * g).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, k: T) {
        self.iter_mut().for_each(|g| *g *= k);
    }

    /// Rescales to norm `max_norm` if larger. Returns the original norm.
    pub fn clip_norm(&mut self, max_norm: T) -> T {
        let n = self.norm();
        if n > max_norm && n > T::zero() {
            self.scale(max_norm / n);
        }
        n
    }

    fn same_shape(&self, other: &[Layer<T>]) -> bool {
        self.layers.len() == other.len()
            && self
                .layers
                .iter()
                .zip(other)
                .all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Mlp<T> {
    spec: MlpSpec,
    layers: Vec<Layer<T>>,
    /// Identity of this parameter set; changes on every mutation so caches
    /// from older parameters are rejected.
    #[serde(skip, default = "fresh_id")]
    version: u64,
}

impl<T: Clone> Clone for Mlp<T> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            version: fresh_id(),
        }
    }
}

impl<T: PartialEq> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

/// Activations saved by [`Mlp::forward_batch`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    version: u64,
    batch: usize,
    /// Input of every layer, then the network output.
    activations: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("non-empty")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<T: Scalar> Mlp<T> {
    /// Fan-in scaled uniform initialization. With `final_scale`, the output
    /// layer is drawn from `U(-s, s)` instead.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, final_scale: Option<f64>, rng: &mut R) -> Self {
        let n_layers = spec.layer_sizes.len() - 1;
        let layers = spec
            .layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let bound = match final_scale {
                    Some(s) if l + 1 == n_layers => s,
                    _ => 1.0 / (w[0] as f64).sqrt(),
                };
                let mut layer = Layer::zeros(w[0], w[1]);
                for v in layer.values_mut() {
                    *v = T::lit(rng.random_range(-bound..=bound));
                }
                layer
            })
            .collect();
        Self {
            spec,
            layers,
            version: fresh_id(),
        }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = Gradients::zeros(&spec).layers;
        Self {
            spec,
            layers,
            version: fresh_id(),
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.version = fresh_id();
        &mut self.layers
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(Layer::values)
    }

    /// Parameters in layer order, weights before biases.
    pub fn flat_params(&self) -> Vec<T> {
        self.params().copied().collect()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.spec.num_params() {
            return Err(Error::Shape {
                context: "flat parameters",
                expected: self.spec.num_params(),
                got: flat.len(),
            });
        }
        for (p, &v) in self.layers_mut().iter_mut().flat_map(Layer::values_mut).zip(flat) {
            *p = v;
        }
        Ok(())
    }

    /// Forward pass of a single input.
    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        let cache = self.forward_batch(input, 1)?;
        Ok((cache.output().to_vec(), cache))
    }

    /// Output only, for inference.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(input)?.0)
    }

    pub fn forward_batch(&self, input: &[T], batch: usize) -> Result<ForwardCache<T>> {
        let width = self.spec.input_width();
        if input.len() != batch * width {
            return Err(Error::Shape {
                context: "forward input",
                expected: batch * width,
                got: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let x = activations.last().expect("non-empty");
            let mut y = vec![T::zero(); batch * layer.fan_out];
            for b in 0..batch {
                let xb = &x[b * layer.fan_in..(b + 1) * layer.fan_in];
                let yb = &mut y[b * layer.fan_out..(b + 1) * layer.fan_out];
                for (o, out) in yb.iter_mut().enumerate() {
                    let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                    let z = layer.bias[o] + dot(row, xb);
                    *out = if l < last {
                        z.max(T::zero())
                    } else {
                        match self.spec.output_activation {
                            OutputActivation::Identity => z,
                            OutputActivation::Tanh => z.tanh(),
                        }
                    };
                }
            }
            activations.push(y);
        }
        Ok(ForwardCache {
            version: self.version,
            batch,
            activations,
        })
    }

    /// Reverse-mode pass for `L = sum(output * grad_output)`. Returns the
    /// parameter gradients summed over the batch and `dL/dinput` per row.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        self.backward_impl(cache, grad_output, None, true)
    }

    /// [`Mlp::backward`] without the input gradient.
    pub fn backward_params(&self, cache: &ForwardCache<T>, grad_output: &[T]) -> Result<Gradients<T>> {
        Ok(self.backward_impl(cache, grad_output, None, false)?.0)
    }

    /// [`Mlp::backward_params`] with `grad_preactivation` added to the
    /// gradient at the output layer's pre-activation.
    pub fn backward_params_with_preactivation(
        &self,
        cache: &ForwardCache<T>,
        grad_output: &[T],
        grad_preactivation: &[T],
    ) -> Result<Gradients<T>> {
        Ok(self
            .backward_impl(cache, grad_output, Some(grad_preactivation), false)?
            .0)
    }

    /// Output pre-activations recovered from the cached outputs. Saturated
    /// tanh outputs map to a finite bound.
    pub fn preactivations(&self, cache: &ForwardCache<T>) -> Vec<T> {
        let bound = T::one() - T::lit(1e-12);
        cache
            .output()
            .iter()
            .map(|&y| match self.spec.output_activation {
                OutputActivation::Identity => y,
                OutputActivation::Tanh => y.max(-bound).min(bound).atanh(),
            })
            .collect()
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        grad_output: &[T],
        grad_preactivation: Option<&[T]>,
        input_grad: bool,
    ) -> Result<(Gradients<T>, Vec<T>)> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let batch = cache.batch;
        let out_w = self.spec.output_width();
        if grad_output.len() != batch * out_w {
            return Err(Error::Shape {
                context: "output gradient",
                expected: batch * out_w,
                got: grad_output.len(),
            });
        }
        let mut grads = Gradients::zeros(&self.spec);
        let y = cache.output();
        let mut delta: Vec<T> = match self.spec.output_activation {
            OutputActivation::Identity => grad_output.to_vec(),
            OutputActivation::Tanh => grad_output
                .iter()
                .zip(y)
                .map(|(&g, &v)| g * (T::one() - v * v))
                .collect(),
        };
        if let Some(extra) = grad_preactivation {
            if extra.len() != delta.len() {
                return Err(Error::Shape {
                    context: "pre-activation gradient",
                    expected: delta.len(),
                    got: extra.len(),
                });
            }
            delta.iter_mut().zip(extra).for_each(|(d, &e)| *d += e);
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let x = &cache.activations[l];
            let want_dx = l > 0 || input_grad;
            let mut dx = vec![T::zero(); if want_dx { batch * layer.fan_in } else { 0 }];
            for b in 0..batch {
                let xb = &x[b * layer.fan_in..(b + 1) * layer.fan_in];
                for o in 0..layer.fan_out {
                    let d = delta[b * layer.fan_out + o];
                    if d == T::zero() {
                        continue;
                    }
                    g.bias[o] += d;
                    let span = o * layer.fan_in..(o + 1) * layer.fan_in;
                    axpy(d, xb, &mut g.weights[span.clone()]);
                    if want_dx {
                        axpy(
                            d,
                            &layer.weights[span],
                            &mut dx[b * layer.fan_in..(b + 1) * layer.fan_in],
                        );
                    }
                }
            }
            if l > 0 {
                // Layer input is relu(z); its derivative is 1 where the input is positive.
                for (d, &a) in dx.iter_mut().zip(x) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            delta = dx;
        }
        Ok((grads, delta))
    }

    fn check_shape(&self, layers: &[Layer<T>]) -> Result<()> {
        let ok = layers.len() == self.layers.len()
            && layers
                .iter()
                .zip(&self.layers)
                .all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape {
                context: "parameter layout",
                expected: self.spec.num_params(),
                got: layers.iter().map(|l| l.weights.len() + l.bias.len()).sum(),
            })
        }
    }
}

/// Dot product accumulated in four interleaved lanes.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += k x`.
fn axpy<T: Scalar>(k: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += k * xv;
    }
}

/// `target <- (1 - tau) target + tau source`, elementwise.
pub fn polyak_update<T: Scalar>(target: &mut Mlp<T>, source: &Mlp<T>, tau: T) -> Result<()> {
    target.check_shape(&source.layers)?;
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(Error::InvalidValue {
            what: "tau",
            value: tau.as_f64(),
        });
    }
    let keep = T::one() - tau;
    for (t, &s) in target
        .layers_mut()
        .iter_mut()
        .flat_map(Layer::values_mut)
        .zip(source.params())
    {
        *t = keep * *t + tau * s;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Gradients<T>,
    pub v: Gradients<T>,
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Global gradient-norm bound applied before each update.
    pub clip_norm: Option<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(spec: &MlpSpec, lr: T, clip_norm: Option<T>) -> Self {
        Self {
            m: Gradients::zeros(spec),
            v: Gradients::zeros(spec),
            step: 0,
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            clip_norm,
        }
    }

    /// Bias-corrected Adam step on `params` (descent direction). The
    /// gradient is clipped to `clip_norm` first. Returns the unclipped norm.
    pub fn step(&mut self, params: &mut Mlp<T>, grads: &Gradients<T>) -> Result<T> {
        params.check_shape(&grads.layers)?;
        if !self.m.same_shape(&grads.layers) {
            return Err(Error::Shape {
                context: "optimizer moments",
                expected: params.spec.num_params(),
                got: self.m.iter().count(),
            });
        }
        let mut g = grads.clone();
        let norm = match self.clip_norm {
            Some(c) => g.clip_norm(c),
            None => g.norm(),
        };
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, &gi), m), v) in params
            .layers_mut()
            .iter_mut()
            .flat_map(Layer::values_mut)
            .zip(g.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (T::one() - b1) * gi;
            *v = b2 * *v + (T::one() - b2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::rng_stream;

    fn linear(w: f64, b: f64) -> Mlp<f64> {
        let mut net = Mlp::zeros(MlpSpec::new(vec![1, 1], OutputActivation::Identity).unwrap());
        net.set_flat_params(&[w, b]).unwrap();
        net
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], OutputActivation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], OutputActivation::Identity).is_err());
        let s = MlpSpec::new(vec![3, 4, 2], OutputActivation::Tanh).unwrap();
        assert_eq!(s.num_params(), 3 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(MlpSpec::new(vec![4, 8, 3], OutputActivation::Identity).unwrap());
        assert_eq!(net.predict(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn affine_scalar() {
        assert_eq!(linear(2.0, 1.0).predict(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn input_width_checked() {
        assert!(linear(1.0, 0.0).predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_gradients() {
        let net = linear(2.0, 1.0);
        let (_, cache) = net.forward(&[3.0]).unwrap();
        let (g, dx) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(g.layers[0].weights, vec![3.0]);
        assert_eq!(dx, vec![2.0]);
    }

    #[test]
    fn zero_output_gradient() {
        let mut rng = rng_stream(3, 0);
        let net = Mlp::<f64>::new(
            MlpSpec::new(vec![5, 7, 7, 2], OutputActivation::Tanh).unwrap(),
            None,
            &mut rng,
        );
        let (_, cache) = net.forward(&[0.1, 0.2, -0.3, 0.4, 0.0]).unwrap();
        let (g, dx) = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = rng_stream(3, 0);
        let spec = MlpSpec::new(vec![2, 3, 1], OutputActivation::Identity).unwrap();
        let mut net = Mlp::<f64>::new(spec.clone(), None, &mut rng);
        let (_, cache) = net.forward(&[1.0, 2.0]).unwrap();
        let other = net.clone();
        assert!(matches!(other.backward(&cache, &[1.0]), Err(Error::StaleCache)));
        let mut adam = AdamState::new(&spec, 0.1, None);
        let (g, _) = net.backward(&cache, &[1.0]).unwrap();
        adam.step(&mut net, &g).unwrap();
        assert!(matches!(net.backward(&cache, &[1.0]), Err(Error::StaleCache)));
    }

    #[test]
    fn tanh_output_bounded() {
        let mut rng = rng_stream(5, 0);
        let net = Mlp::<f64>::new(
            MlpSpec::new(vec![2, 16, 3], OutputActivation::Tanh).unwrap(),
            Some(10.0),
            &mut rng,
        );
        for x in [-1e6, -3.0, 0.0, 2.0, 1e6] {
            for v in net.predict(&[x, -x]).unwrap() {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn preactivation_gradient_skips_tanh() {
        let mut rng = rng_stream(6, 0);
        let net = Mlp::<f64>::new(
            MlpSpec::new(vec![2, 5, 2], OutputActivation::Tanh).unwrap(),
            Some(1.0),
            &mut rng,
        );
        let cache = net.forward_batch(&[0.3, -0.8], 1).unwrap();
        let y = cache.output().to_vec();
        let z = net.preactivations(&cache);
        assert!(y.iter().zip(&z).all(|(a, b)| (a - b.tanh()).abs() < 1e-12));
        let e = [0.4, -1.1];
        let direct = net.backward_params_with_preactivation(&cache, &[0.0, 0.0], &e).unwrap();
        let through: Vec<f64> = e.iter().zip(&y).map(|(g, v)| g / (1.0 - v * v)).collect();
        let via_output = net.backward_params(&cache, &through).unwrap();
        for (a, b) in direct.iter().zip(via_output.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn deterministic_init() {
        let spec = MlpSpec::new(vec![4, 8, 2], OutputActivation::Tanh).unwrap();
        let a = Mlp::<f64>::new(spec.clone(), Some(1e-3), &mut rng_stream(9, 1));
        let b = Mlp::<f64>::new(spec, Some(1e-3), &mut rng_stream(9, 1));
        assert_eq!(a.flat_params(), b.flat_params());
        assert!(a.layers()[1].weights.iter().all(|w| w.abs() <= 1e-3));
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let spec = MlpSpec::new(vec![2, 3, 1], OutputActivation::Identity).unwrap();
        let mut net = Mlp::<f64>::new(spec.clone(), None, &mut rng_stream(1, 1));
        let before = net.flat_params();
        let mut adam = AdamState::new(&spec, 0.1, Some(1.0));
        adam.step(&mut net, &Gradients::zeros(&spec)).unwrap();
        assert_eq!(net.flat_params(), before);
    }

    #[test]
    fn adam_scalar_first_step() {
        let mut net = linear(0.5, 0.0);
        let spec = net.spec().clone();
        let mut adam = AdamState::new(&spec, 0.1, None);
        let mut g = Gradients::zeros(&spec);
        g.layers[0].weights[0] = 1.0;
        adam.step(&mut net, &g).unwrap();
        // Oracle: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1.
        let m_hat = (0.1 * 1.0) / (1.0 - 0.9);
        let v_hat = (0.001 * 1.0) / (1.0 - 0.999);
        let want = 0.5 - 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((net.flat_params()[0] - want).abs() < 1e-15);
        assert_eq!(net.flat_params()[1], 0.0);
    }

    #[test]
    fn clipping_preserves_direction() {
        let spec = MlpSpec::new(vec![1, 2], OutputActivation::Identity).unwrap();
        let mut g = Gradients::<f64>::zeros(&spec);
        g.layers[0].weights = vec![6.0, 0.0];
        g.layers[0].bias = vec![0.0, 8.0];
        let n = g.clip_norm(1.0);
        assert_eq!(n, 10.0);
        assert!((g.norm() - 1.0).abs() < 1e-15);
        assert!((g.layers[0].weights[0] - 0.6).abs() < 1e-15);
        assert!((g.layers[0].bias[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn polyak_cases() {
        let src = linear(1.0, 1.0);
        let mut t = linear(0.0, 0.0);
        polyak_update(&mut t, &src, 0.005).unwrap();
        assert_eq!(t.flat_params(), vec![0.005, 0.005]);
        let mut t = linear(0.3, -0.7);
        polyak_update(&mut t, &src, 0.0).unwrap();
        assert_eq!(t.flat_params(), vec![0.3, -0.7]);
        polyak_update(&mut t, &src, 1.0).unwrap();
        assert_eq!(t.flat_params(), src.flat_params());
        assert!(polyak_update(&mut t, &src, 1.5).is_err());
    }

    #[test]
    fn batch_matches_single_rows() {
        let mut rng = rng_stream(11, 0);
        let net = Mlp::<f64>::new(
            MlpSpec::new(vec![3, 5, 2], OutputActivation::Tanh).unwrap(),
            None,
            &mut rng,
        );
        let xs = [0.1, -0.4, 0.9, 1.2, 0.0, -0.3];
        let cache = net.forward_batch(&xs, 2).unwrap();
        assert_eq!(&cache.output()[..2], net.predict(&xs[..3]).unwrap().as_slice());
        assert_eq!(&cache.output()[2..], net.predict(&xs[3..]).unwrap().as_slice());
    }

    #[test]
    fn single_precision_forward() {
        let spec = MlpSpec::new(vec![1, 1], OutputActivation::Identity).unwrap();
        let mut net = Mlp::<f32>::zeros(spec);
        net.set_flat_params(&[2.0, 1.0]).unwrap();
        assert_eq!(net.predict(&[3.0f32]).unwrap(), vec![7.0f32]);
    }
}
