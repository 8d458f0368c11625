#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_distr::{Distribution, Uniform};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::ops::{self, sigmoid};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Architecture hyper-parameters. Paper scale is depth 4 / 64 base filters /
/// 256 px input; the desk-scale defaults are depth 2 / 8 / 64.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub depth: usize,
    pub base_filters: usize,
    pub input_size: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 2,
            out_channels: 1,
            depth: 2,
            base_filters: 8,
            input_size: 64,
        }
    }
}

impl UNetConfig {
    pub fn paper_scale() -> Self {
        Self {
            depth: 4,
            base_filters: 64,
            input_size: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        if self.base_filters < 1 || self.in_channels < 1 {
            return Err(Error::InvalidConfig("channel counts must be at least 1".into()));
        }
        if self.out_channels != 1 {
            return Err(Error::InvalidConfig("only single-channel output is supported".into()));
        }
        if self.input_size == 0 || self.input_size % self.size_multiple() != 0 {
            return Err(Error::InvalidConfig(format!(
                "input size {} is not divisible by 2^{}",
                self.input_size, self.depth
            )));
        }
        Ok(())
    }

    /// Spatial dimensions must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn channels_at(&self, level: usize) -> usize {
        self.base_filters << level
    }

    /// Convolution layers in the fixed topological parameter order.
    pub fn conv_specs(&self) -> Vec<ConvSpec> {
        let mut specs = Vec::new();
        let mut in_c = self.in_channels;
        for l in 0..self.depth {
            let c = self.channels_at(l);
            specs.push(ConvSpec::new(format!("enc{l}.conv1"), in_c, c, 3));
            specs.push(ConvSpec::new(format!("enc{l}.conv2"), c, c, 3));
            in_c = c;
        }
        let cb = self.channels_at(self.depth);
        specs.push(ConvSpec::new("bottleneck.conv1".into(), in_c, cb, 3));
        specs.push(ConvSpec::new("bottleneck.conv2".into(), cb, cb, 3));
        for l in (0..self.depth).rev() {
            let c = self.channels_at(l);
            let below = self.channels_at(l + 1);
            specs.push(ConvSpec::new(format!("dec{l}.up"), below, c, 2));
            specs.push(ConvSpec::new(format!("dec{l}.conv1"), 2 * c, c, 3));
            specs.push(ConvSpec::new(format!("dec{l}.conv2"), c, c, 3));
        }
        specs.push(ConvSpec::new("head".into(), self.channels_at(0), self.out_channels, 1));
        specs
    }

    /// `(name, dims)` of every parameter tensor, in serialization order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.conv_specs()
            .into_iter()
            .flat_map(|s| {
                [
                    (format!("{}.weight", s.name), alloc::vec![s.out_c, s.in_c, s.k, s.k]),
                    (format!("{}.bias", s.name), alloc::vec![s.out_c]),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
}

impl ConvSpec {
    fn new(name: String, in_c: usize, out_c: usize, k: usize) -> Self {
        Self { name, in_c, out_c, k }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<T>,
}

/// Per-parameter gradients, aligned with [`UNet::params`].
pub type Gradients<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct UNet<T> {
    config: UNetConfig,
    specs: Vec<ConvSpec>,
    params: Vec<Param<T>>,
}

/// Everything the backward pass needs from one forward pass of one sample.
/// Activations of one forward pass, kept for backpropagation.
pub struct Trace<T> {
    /// Input of every convolution, in spec order.
    conv_in: Vec<Tensor<T>>,
    /// Post-ReLU output of every convolution except the head.
    conv_out: Vec<Tensor<T>>,
    pool_arg: Vec<Vec<u8>>,
    prob: Tensor<T>,
}

impl<T: Scalar> UNet<T> {
    /// All-zero weights and biases.
    pub fn zeros(config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let specs = config.conv_specs();
        let params = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, dims)| {
                let n = dims.iter().product();
                Param {
                    name,
                    dims,
                    values: alloc::vec![T::zero(); n],
                }
            })
            .collect();
        Ok(Self { config, specs, params })
    }

    /// He-uniform kernels (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn init(config: UNetConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for (i, spec) in model.specs.iter().enumerate() {
            let fan_in = (spec.in_c * spec.k * spec.k) as f64;
            let limit = (6.0 / fan_in).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for v in model.params[2 * i].values.iter_mut() {
                *v = T::from(dist.sample(&mut rng)).unwrap_or_else(T::zero);
            }
        }
        Ok(model)
    }

    /// Build from explicit parameters; names and dims must follow `config`.
    pub fn from_params(config: UNetConfig, params: Vec<Param<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if shapes.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, dims), p) in shapes.iter().zip(&params) {
            if *name != p.name || *dims != p.dims || p.values.len() != dims.iter().product::<usize>() {
                return Err(Error::ShapeMismatch(format!("parameter `{}` does not match `{name}` {dims:?}", p.name)));
            }
        }
        Ok(Self {
            specs: config.conv_specs(),
            config,
            params,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> UNet<U> {
        UNet {
            config: self.config,
            specs: self.specs.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    values: p.values.iter().map(|v| U::from(*v).unwrap_or_else(U::zero)).collect(),
                })
                .collect(),
        }
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.params.iter().map(|p| alloc::vec![T::zero(); p.values.len()]).collect()
    }

    /// Fully convolutional: any height and width divisible by `2^depth` works.
    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let m = self.config.size_multiple();
        if x.channels != self.config.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} input channels, got {}",
                self.config.in_channels, x.channels
            )));
        }
        if x.height == 0 || x.width == 0 || x.height % m != 0 || x.width % m != 0 {
            return Err(Error::ShapeMismatch(format!(
                "input {}x{} is not a positive multiple of {m}",
                x.width, x.height
            )));
        }
        Ok(())
    }

    fn conv(&self, i: usize, x: &Tensor<T>) -> Tensor<T> {
        let s = &self.specs[i];
        ops::conv_forward(x, &self.params[2 * i].values, &self.params[2 * i + 1].values, s.out_c, s.k)
    }

    fn conv_relu(&self, i: usize, x: &Tensor<T>) -> Tensor<T> {
        let mut y = self.conv(i, x);
        ops::relu_in_place(&mut y);
        y
    }

    fn trace(&self, x: &Tensor<T>, keep: bool) -> Trace<T> {
        let mut conv_in = Vec::new();
        let mut conv_out = Vec::new();
        let mut pool_arg = Vec::new();
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut layer = 0;
        let mut run = |model: &Self, input: Tensor<T>, conv_in: &mut Vec<Tensor<T>>, conv_out: &mut Vec<Tensor<T>>| {
            let y = model.conv_relu(layer, &input);
            layer += 1;
            if keep {
                conv_in.push(input);
                conv_out.push(y.clone());
            }
            y
        };
        let mut cur = x.clone();
        for _ in 0..self.config.depth {
            let a = run(self, cur, &mut conv_in, &mut conv_out);
            let b = run(self, a, &mut conv_in, &mut conv_out);
            let (pooled, arg) = ops::maxpool2_forward(&b);
            if keep {
                pool_arg.push(arg);
            }
            skips.push(b);
            cur = pooled;
        }
        let a = run(self, cur, &mut conv_in, &mut conv_out);
        cur = run(self, a, &mut conv_in, &mut conv_out);
        for _ in 0..self.config.depth {
            let skip = skips.pop().expect("one skip per level");
            let up = run(self, ops::upsample2_forward(&cur), &mut conv_in, &mut conv_out);
            let cat = ops::concat(&skip, &up);
            let a = run(self, cat, &mut conv_in, &mut conv_out);
            cur = run(self, a, &mut conv_in, &mut conv_out);
        }
        let head = self.specs.len() - 1;
        let mut prob = self.conv(head, &cur);
        for v in prob.data.iter_mut() {
            *v = sigmoid(*v);
        }
        if keep {
            conv_in.push(cur);
        }
        Trace {
            conv_in,
            conv_out,
            pool_arg,
            prob,
        }
    }

    /// Water probability for each sample: `B x 1 x H x W`.
    pub fn forward(&self, batch: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        batch
            .iter()
            .map(|x| {
                self.check_input(x)?;
                Ok(self.trace(x, false).prob)
            })
            .collect()
    }

    pub fn forward_one(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        Ok(self.trace(x, false).prob)
    }

    /// Forward pass that keeps the activations needed by [`UNet::backward_one`].
    pub fn trace_one(&self, x: &Tensor<T>) -> Result<Trace<T>> {
        self.check_input(x)?;
        Ok(self.trace(x, true))
    }

    /// Parameter gradients of one sample given the loss gradient with respect
    /// to its probabilities.
    pub fn backward_one(&self, trace: &Trace<T>, dprob: &[T]) -> Gradients<T> {
        let mut grads = self.zero_gradients();
        self.accumulate_backward(trace, dprob, &mut grads);
        grads
    }

    fn accumulate_backward(&self, trace: &Trace<T>, dprob: &[T], grads: &mut Gradients<T>) {
        // Through the sigmoid.
        let data = dprob
            .iter()
            .zip(&trace.prob.data)
            .map(|(&g, &p)| g * p * (T::one() - p))
            .collect();
        let dlogit = Tensor {
            channels: 1,
            height: trace.prob.height,
            width: trace.prob.width,
            data,
        };
        self.backward_trace(trace, dlogit, grads);
    }

    /// Loss (BCE + Dice, both taken over every pixel of the batch) and its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &[Tensor<T>], targets: &[Tensor<T>]) -> Result<(T, Gradients<T>)> {
        let traces = batch.iter().map(|x| self.trace_one(x)).collect::<Result<Vec<_>>>()?;
        let (total, dprob) = batch_loss_grad(&traces, targets)?;
        let mut grads = self.zero_gradients();
        for (trace, d) in traces.iter().zip(&dprob) {
            self.accumulate_backward(trace, d, &mut grads);
        }
        Ok((total, grads))
    }

    fn conv_back(
        &self,
        i: usize,
        trace: &Trace<T>,
        mut grad_out: Tensor<T>,
        grads: &mut Gradients<T>,
        relu: bool,
        want_input: bool,
    ) -> Option<Tensor<T>> {
        if relu {
            ops::relu_backward_in_place(&mut grad_out, &trace.conv_out[i]);
        }
        let (gw, rest) = grads[2 * i..].split_at_mut(1);
        ops::conv_backward(
            &trace.conv_in[i],
            &self.params[2 * i].values,
            &grad_out,
            self.specs[i].k,
            &mut gw[0],
            &mut rest[0],
            want_input,
        )
    }

    fn backward_trace(&self, trace: &Trace<T>, dlogit: Tensor<T>, grads: &mut Gradients<T>) {
        let depth = self.config.depth;
        let head = self.specs.len() - 1;
        let mut g = self
            .conv_back(head, trace, dlogit, grads, false, true)
            .expect("input gradient requested");
        // Decoder levels ran from depth-1 down to 0; walk them back from 0.
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
        for l in 0..depth {
            let base = 2 * depth + 2 + 3 * (depth - 1 - l);
            let g1 = self.conv_back(base + 2, trace, g, grads, true, true).unwrap();
            let gcat = self.conv_back(base + 1, trace, g1, grads, true, true).unwrap();
            let (gskip, gup) = ops::split(gcat, self.config.channels_at(l));
            skip_grads[l] = Some(gskip);
            let gu = self.conv_back(base, trace, gup, grads, true, true).unwrap();
            g = ops::upsample2_backward(&gu);
        }
        let bottleneck = 2 * depth;
        let g1 = self.conv_back(bottleneck + 1, trace, g, grads, true, true).unwrap();
        g = self.conv_back(bottleneck, trace, g1, grads, true, true).unwrap();
        for l in (0..depth).rev() {
            let mut gb = ops::maxpool2_backward(&g, &trace.pool_arg[l]);
            if let Some(s) = skip_grads[l].take() {
                for (a, b) in gb.data.iter_mut().zip(s.data) {
                    *a = *a + b;
                }
            }
            let ga = self.conv_back(2 * l + 1, trace, gb, grads, true, true).unwrap();
            match self.conv_back(2 * l, trace, ga, grads, true, l > 0) {
                Some(gx) => g = gx,
                None => break,
            }
        }
    }
}

impl<T: Scalar> Trace<T> {
    pub fn prob(&self) -> &Tensor<T> {
        &self.prob
    }

    /// True when both passes took the same ReLU and max-pool branches, i.e.
    /// the network is one smooth function between the two parameter sets.
    pub fn same_activation_pattern(&self, other: &Trace<T>) -> bool {
        let active = |t: &Trace<T>| t.conv_out.iter().flat_map(|c| c.data.iter().map(|&v| v > T::zero())).collect::<Vec<_>>();
        self.pool_arg == other.pool_arg && active(self) == active(other)
    }
}

/// Batch loss over traced samples and its gradient with respect to each
/// sample's probabilities.
pub fn batch_loss_grad<T: Scalar>(traces: &[Trace<T>], targets: &[Tensor<T>]) -> Result<(T, Vec<Vec<T>>)> {
    if traces.len() != targets.len() || traces.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs for {} targets",
            traces.len(),
            targets.len()
        )));
    }
    let (mut probs, mut truth) = (Vec::new(), Vec::new());
    for (tr, t) in traces.iter().zip(targets) {
        let p = &tr.prob;
        if t.channels != 1 || t.height != p.height || t.width != p.width {
            return Err(Error::ShapeMismatch("target must be 1 x H x W".into()));
        }
        probs.extend_from_slice(&p.data);
        truth.extend_from_slice(&t.data);
    }
    let (total, d) = super::loss::loss_and_grad(&probs, &truth)?;
    let per = traces.iter().map(|tr| tr.prob.data.len());
    let mut out = Vec::with_capacity(traces.len());
    let mut offset = 0;
    for n in per {
        out.push(d[offset..offset + n].to_vec());
        offset += n;
    }
    Ok((total, out))
}

/// Sum of a list of gradient sets, element-wise.
pub fn add_gradients<T: Scalar>(acc: &mut Gradients<T>, other: &Gradients<T>) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, &y) in a.iter_mut().zip(b) {
            *x = *x + y;
        }
    }
}
