use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    elu, elu_backward, global_avg_pool, global_avg_pool_backward, relu, relu_backward, Conv2d, Dense, SpiralConv,
};
use super::{Scalar, SpiralIndex};
use crate::{Error, Result};

/// Hyperparameters fixing every tensor shape of the network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub image_size: usize,
    pub encoder_channels: Vec<usize>,
    /// Per-vertex widths: entry 0 is the compressed feature width, each
    /// following entry the output width of one spiral layer.
    pub channel_plan: Vec<usize>,
    pub spiral_len: usize,
    pub vertex_count: usize,
}

impl Architecture {
    pub const DEFAULT_ENCODER: [usize; 5] = [8, 16, 32, 64, 128];
    pub const DEFAULT_PLAN: [usize; 8] = [4, 8, 8, 16, 16, 32, 32, 48];
    pub const DEFAULT_SPIRAL_LEN: usize = 9;

    pub fn new(image_size: usize, vertex_count: usize) -> Self {
        Architecture {
            image_size,
            encoder_channels: Self::DEFAULT_ENCODER.to_vec(),
            channel_plan: Self::DEFAULT_PLAN.to_vec(),
            spiral_len: Self::DEFAULT_SPIRAL_LEN,
            vertex_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.vertex_count == 0 {
            return Err(Error::Config("image_size and vertex_count must be positive".into()));
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return Err(Error::Config("encoder_channels must be non-empty and positive".into()));
        }
        if self.channel_plan.len() < 2 || self.channel_plan.contains(&0) {
            return Err(Error::Config("channel_plan needs at least two positive widths".into()));
        }
        if self.spiral_len < 2 {
            return Err(Error::Config("spiral_len must be at least 2".into()));
        }
        Ok(())
    }

    /// Spatial size after the encoder.
    pub fn feature_size(&self) -> usize {
        self.encoder_channels.iter().fold(self.image_size, |s, _| Conv2d::<f32>::out_size(s))
    }
}

/// All trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub encoder: Vec<Conv2d<T>>,
    pub compress: Dense<T>,
    pub spiral: Vec<SpiralConv<T>>,
    pub head: Dense<T>,
}

impl<T: Scalar> Network<T> {
    fn build(
        arch: &Architecture,
        mut conv: impl FnMut(usize, usize) -> Conv2d<T>,
        mut dense: impl FnMut(usize, usize) -> Dense<T>,
        mut spiral: impl FnMut(usize, usize) -> SpiralConv<T>,
    ) -> Self {
        let mut c = 1;
        let mut encoder = Vec::new();
        for &co in &arch.encoder_channels {
            encoder.push(conv(c, co));
            c = co;
        }
        let plan = &arch.channel_plan;
        let compress = dense(c, arch.vertex_count * plan[0]);
        let spiral = plan.windows(2).map(|w| spiral(w[0], w[1])).collect();
        let head = dense(*plan.last().unwrap(), 3);
        Network {
            encoder,
            compress,
            spiral,
            head,
        }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        let len = arch.spiral_len;
        Self::build(arch, Conv2d::zeros, Dense::zeros, |i, o| SpiralConv::zeros(i, o, len))
    }

    /// He-uniform weights and zero biases drawn from `seed`.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let len = arch.spiral_len;
        let rng = std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed));
        Self::build(
            arch,
            |i, o| Conv2d::init(i, o, &mut *rng.borrow_mut()),
            |i, o| Dense::init(i, o, &mut *rng.borrow_mut()),
            |i, o| SpiralConv::init(i, o, len, &mut *rng.borrow_mut()),
        )
    }

    /// Tensors in canonical order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::new();
        for (i, c) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), &c.weight));
            out.push((format!("encoder.{i}.bias"), &c.bias));
        }
        out.push(("compress.weight".into(), &self.compress.weight));
        out.push(("compress.bias".into(), &self.compress.bias));
        for (i, s) in self.spiral.iter().enumerate() {
            out.push((format!("spiral.{i}.weight"), &s.weight));
            out.push((format!("spiral.{i}.bias"), &s.bias));
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Logical shape of each tensor, matching `named_tensors` order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for c in &self.encoder {
            out.push(vec![c.c_out, c.c_in, 3, 3]);
            out.push(vec![c.c_out]);
        }
        out.push(vec![self.compress.n_out, self.compress.n_in]);
        out.push(vec![self.compress.n_out]);
        for s in &self.spiral {
            out.push(vec![s.c_out, s.len * s.c_in]);
            out.push(vec![s.c_out]);
        }
        out.push(vec![self.head.n_out, self.head.n_in]);
        out.push(vec![self.head.n_out]);
        out
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for c in &mut self.encoder {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.compress.weight);
        out.push(&mut self.compress.bias);
        for s in &mut self.spiral {
            out.push(&mut s.weight);
            out.push(&mut s.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &Network<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x * factor);
        }
    }

    pub fn cast<U: Scalar>(&self, arch: &Architecture) -> Network<U> {
        let mut out = Network::<U>::zeros(arch);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.as_f64());
            }
        }
        out
    }
}

/// Intermediate activations kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    conv_in: Vec<Vec<T>>,
    conv_pre: Vec<Vec<T>>,
    sizes: Vec<usize>,
    pub pooled: Vec<T>,
    compress_pre: Vec<T>,
    spiral_in: Vec<Vec<T>>,
    spiral_pre: Vec<Vec<T>>,
    head_in: Vec<T>,
    pub output: Vec<T>,
}

/// Network parameters bound to a template's spiral sequences.
#[derive(Clone, Debug)]
pub struct GcnModel<T> {
    pub arch: Architecture,
    pub net: Network<T>,
    pub spirals: SpiralIndex,
}

impl<T: Scalar> GcnModel<T> {
    pub fn new(arch: Architecture, spirals: SpiralIndex, seed: u64) -> Result<Self> {
        let net = Network::init(&arch, seed);
        Self::with_network(arch, spirals, net)
    }

    pub fn with_network(arch: Architecture, spirals: SpiralIndex, net: Network<T>) -> Result<Self> {
        arch.validate()?;
        if spirals.vertex_count != arch.vertex_count || spirals.len != arch.spiral_len {
            return Err(Error::Shape(format!(
                "spirals are {}x{}, architecture expects {}x{}",
                spirals.vertex_count, spirals.len, arch.vertex_count, arch.spiral_len
            )));
        }
        let expected = Network::<T>::zeros(&arch);
        for ((name, a), b) in expected.named_tensors().iter().zip(net.tensors()) {
            if a.len() != b.len() {
                return Err(Error::Shape(format!("tensor {name}: expected {} values, got {}", a.len(), b.len())));
            }
        }
        Ok(GcnModel { arch, net, spirals })
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        let n = self.arch.image_size * self.arch.image_size;
        if input.len() != n {
            return Err(Error::Shape(format!("input has {} values, expected {n}", input.len())));
        }
        Ok(())
    }

    /// Global feature vector of an image.
    pub fn encode(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut s = self.arch.image_size;
        for conv in &self.net.encoder {
            x = relu(&conv.forward(&x, s, s));
            s = Conv2d::<T>::out_size(s);
        }
        Ok(global_avg_pool(&x, *self.arch.encoder_channels.last().unwrap()))
    }

    /// Predicted coordinates, `N x 3` row-major, in image-size units.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let pooled = self.encode(input)?;
        let mut h = elu(&self.net.compress.forward(&pooled));
        for layer in &self.net.spiral {
            h = elu(&layer.forward(&h, &self.spirals));
        }
        Ok(self.net.head.forward_rows(&h))
    }

    pub fn forward_cached(&self, input: &[T]) -> Result<ForwardCache<T>> {
        self.check_input(input)?;
        let mut conv_in = Vec::new();
        let mut conv_pre = Vec::new();
        let mut sizes = Vec::new();
        let mut x = input.to_vec();
        let mut s = self.arch.image_size;
        for conv in &self.net.encoder {
            let pre = conv.forward(&x, s, s);
            sizes.push(s);
            conv_in.push(std::mem::replace(&mut x, relu(&pre)));
            conv_pre.push(pre);
            s = Conv2d::<T>::out_size(s);
        }
        let pooled = global_avg_pool(&x, *self.arch.encoder_channels.last().unwrap());
        let compress_pre = self.net.compress.forward(&pooled);
        let mut h = elu(&compress_pre);
        let mut spiral_in = Vec::new();
        let mut spiral_pre = Vec::new();
        for layer in &self.net.spiral {
            let pre = layer.forward(&h, &self.spirals);
            spiral_in.push(std::mem::replace(&mut h, elu(&pre)));
            spiral_pre.push(pre);
        }
        let output = self.net.head.forward_rows(&h);
        Ok(ForwardCache {
            conv_in,
            conv_pre,
            sizes,
            pooled,
            compress_pre,
            spiral_in,
            spiral_pre,
            head_in: h,
            output,
        })
    }

    /// Accumulates parameter gradients of a loss with output gradient
    /// `d_output` into `grads`; returns the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache<T>, d_output: &[T], grads: &mut Network<T>) -> Vec<T> {
        let net = &self.net;
        let mut d = net.head.backward_rows(&cache.head_in, d_output, &mut grads.head);
        for k in (0..net.spiral.len()).rev() {
            let dpre = elu_backward(&cache.spiral_pre[k], &d);
            d = net.spiral[k].backward(&cache.spiral_in[k], &self.spirals, &dpre, &mut grads.spiral[k]);
        }
        let dpre = elu_backward(&cache.compress_pre, &d);
        let dpool = net.compress.backward(&cache.pooled, &dpre, &mut grads.compress);
        self.backward_encoder(cache, &dpool, grads)
    }

    /// Backpropagates a gradient on the pooled feature through the encoder.
    pub fn backward_encoder(&self, cache: &ForwardCache<T>, d_pooled: &[T], grads: &mut Network<T>) -> Vec<T> {
        let net = &self.net;
        let dpool = d_pooled;
        let last = Conv2d::<T>::out_size(*cache.sizes.last().unwrap());
        let mut d = global_avg_pool_backward(dpool, last * last);
        for k in (0..net.encoder.len()).rev() {
            let dpre = relu_backward(&cache.conv_pre[k], &d);
            let s = cache.sizes[k];
            d = net.encoder[k].backward(&cache.conv_in[k], s, s, &dpre, &mut grads.encoder[k]);
        }
        d
    }
}

/// Mean over vertices of the squared Euclidean error.
pub fn l2_loss<T: Scalar>(pred: &[T], target: &[T]) -> T {
    let n = T::of((pred.len() / 3) as f64);
    pred.iter().zip(target).map(|(p, t)| (*p - *t) * (*p - *t)).sum::<T>() / n
}

pub fn l2_loss_grad<T: Scalar>(pred: &[T], target: &[T]) -> Vec<T> {
    let k = T::of(2.0 / (pred.len() / 3) as f64);
    pred.iter().zip(target).map(|(p, t)| (*p - *t) * k).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mesh::{build_adjacency, icosphere};
    use crate::neural::build_spirals;

    pub(crate) fn small_model<T: Scalar>(seed: u64) -> GcnModel<T> {
        let (v, f) = icosphere(1);
        let spirals = build_spirals(&build_adjacency(v.len(), &f), &f, 5).unwrap();
        let arch = Architecture {
            image_size: 16,
            encoder_channels: vec![2, 3, 4],
            channel_plan: vec![2, 3, 3],
            spiral_len: 5,
            vertex_count: v.len(),
        };
        GcnModel::new(arch, spirals, seed).unwrap()
    }

    #[test]
    fn shapes_and_counts() {
        let (v, f) = icosphere(2);
        let spirals = build_spirals(&build_adjacency(v.len(), &f), &f, 9).unwrap();
        let arch = Architecture::new(64, v.len());
        assert_eq!(arch.feature_size(), 2);
        let model: GcnModel<f32> = GcnModel::new(arch, spirals, 0).unwrap();
        assert_eq!(model.net.spiral.len(), 7);
        let out = model.forward(&vec![0.5; 64 * 64]).unwrap();
        assert_eq!(out.len(), v.len() * 3);
        assert!(out.iter().all(|x| x.is_finite()));
        assert!(matches!(model.forward(&[0.0; 10]), Err(Error::Shape(_))));
    }

    #[test]
    fn init_is_seeded() {
        let a: GcnModel<f64> = small_model(3);
        let b: GcnModel<f64> = small_model(3);
        let c: GcnModel<f64> = small_model(4);
        assert_eq!(a.net, b.net);
        assert_ne!(a.net, c.net);
    }

    #[test]
    fn cached_forward_matches_plain() {
        let m: GcnModel<f64> = small_model(1);
        let x: Vec<f64> = (0..256).map(|i| ((i * 7) % 5) as f64 / 4.0).collect();
        assert_eq!(m.forward(&x).unwrap(), m.forward_cached(&x).unwrap().output);
    }

    #[test]
    fn mismatched_spirals_rejected() {
        let m: GcnModel<f64> = small_model(1);
        let mut arch = m.arch.clone();
        arch.spiral_len = 9;
        assert!(matches!(GcnModel::<f64>::new(arch, m.spirals.clone(), 0), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_and_gradient() {
        let p = [1.0f64, 2.0, 3.0, 0.0, 0.0, 0.0];
        let t = [0.0f64; 6];
        assert!((l2_loss(&p, &t) - 7.0).abs() < 1e-12);
        assert_eq!(l2_loss_grad(&p, &t), vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        assert_eq!(l2_loss(&p, &p), 0.0);
        let shifted: Vec<f64> = p.chunks(3).flat_map(|v| [v[0] + 1.0, v[1], v[2]]).collect();
        assert!((l2_loss(&shifted, &p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_image_gives_zero_feature() {
        let m: GcnModel<f64> = small_model(2);
        assert!(m.encode(&[0.0; 256]).unwrap().iter().all(|v| *v == 0.0));
        let x: Vec<f64> = (0..256).map(|i| (i % 5) as f64 / 4.0).collect();
        assert_eq!(m.encode(&x).unwrap(), m.encode(&x.clone()).unwrap());
    }
}
