//! Layer primitives with explicit forward and backward passes.
//!
//! Every backward function accumulates parameter gradients into a gradient
//! layer of identical shape and returns the gradient with respect to the input.

use rand::Rng;

use super::{Scalar, SpiralIndex};

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

fn uniform_fill<T: Scalar>(n: usize, bound: f64, rng: &mut impl Rng) -> Vec<T> {
    (0..n).map(|_| T::of((2.0 * rng.random::<f64>() - 1.0) * bound)).collect()
}

/// He-style uniform bound for a given fan-in.
fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// 3x3 convolution, stride 2, zero padding 1. Tensors are channel-major
/// `C x H x W`; weights are `[c_out][c_in][3][3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Conv2d {
            c_in,
            c_out,
            weight: vec![T::zero(); c_out * c_in * 9],
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn init(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Conv2d {
            c_in,
            c_out,
            weight: uniform_fill(c_out * c_in * 9, he_bound(c_in * 9), rng),
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn out_size(size: usize) -> usize {
        (size + 1) / 2
    }

    pub fn forward(&self, x: &[T], h: usize, w: usize) -> Vec<T> {
        let (ho, wo) = (Self::out_size(h), Self::out_size(w));
        let mut y = vec![T::zero(); self.c_out * ho * wo];
        for co in 0..self.c_out {
            let out = &mut y[co * ho * wo..(co + 1) * ho * wo];
            out.iter_mut().for_each(|v| *v = self.bias[co]);
            for ci in 0..self.c_in {
                let src = &x[ci * h * w..(ci + 1) * h * w];
                let k = &self.weight[(co * self.c_in + ci) * 9..][..9];
                for oy in 0..ho {
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let mut acc = T::zero();
                            for kx in 0..3 {
                                let ix = (2 * ox + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    acc = acc + k[ky * 3 + kx] * row[ix as usize];
                                }
                            }
                            out[oy * wo + ox] = out[oy * wo + ox] + acc;
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &[T], h: usize, w: usize, dy: &[T], grad: &mut Conv2d<T>) -> Vec<T> {
        let (ho, wo) = (Self::out_size(h), Self::out_size(w));
        let mut dx = vec![T::zero(); self.c_in * h * w];
        for co in 0..self.c_out {
            let g = &dy[co * ho * wo..(co + 1) * ho * wo];
            grad.bias[co] = grad.bias[co] + g.iter().copied().sum::<T>();
            for ci in 0..self.c_in {
                let src = &x[ci * h * w..(ci + 1) * h * w];
                let dsrc = &mut dx[ci * h * w..(ci + 1) * h * w];
                let widx = (co * self.c_in + ci) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wk = self.weight[widx + ky * 3 + kx];
                        let mut gw = T::zero();
                        for oy in 0..ho {
                            let iy = (2 * oy + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..wo {
                                let ix = (2 * ox + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let p = iy as usize * w + ix as usize;
                                let go = g[oy * wo + ox];
                                gw = gw + go * src[p];
                                dsrc[p] = dsrc[p] + go * wk;
                            }
                        }
                        grad.weight[widx + ky * 3 + kx] = grad.weight[widx + ky * 3 + kx] + gw;
                    }
                }
            }
        }
        dx
    }
}

/// Affine map `y = W x + b`, `W` row-major `n_out x n_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weight: vec![T::zero(); n_in * n_out],
            bias: vec![T::zero(); n_out],
        }
    }

    pub fn init(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        Dense {
            n_in,
            n_out,
            weight: uniform_fill(n_in * n_out, he_bound(n_in), rng),
            bias: vec![T::zero(); n_out],
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        (0..self.n_out)
            .map(|o| self.bias[o] + dot(&self.weight[o * self.n_in..(o + 1) * self.n_in], x))
            .collect()
    }

    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>) -> Vec<T> {
        let mut dx = vec![T::zero(); self.n_in];
        for o in 0..self.n_out {
            let g = dy[o];
            grad.bias[o] = grad.bias[o] + g;
            let row = o * self.n_in..(o + 1) * self.n_in;
            axpy(g, x, &mut grad.weight[row.clone()]);
            axpy(g, &self.weight[row], &mut dx);
        }
        dx
    }

    /// Applies the map to each row of a `rows x n_in` matrix.
    pub fn forward_rows(&self, x: &[T]) -> Vec<T> {
        x.chunks_exact(self.n_in).flat_map(|r| self.forward(r)).collect()
    }

    pub fn backward_rows(&self, x: &[T], dy: &[T], grad: &mut Dense<T>) -> Vec<T> {
        x.chunks_exact(self.n_in)
            .zip(dy.chunks_exact(self.n_out))
            .flat_map(|(r, g)| self.backward(r, g, grad))
            .collect()
    }
}

/// Spiral convolution: each vertex concatenates the features of its spiral
/// (zeros at padding slots) and applies one affine map `c_out x (len * c_in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpiralConv<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> SpiralConv<T> {
    pub fn zeros(c_in: usize, c_out: usize, len: usize) -> Self {
        SpiralConv {
            c_in,
            c_out,
            len,
            weight: vec![T::zero(); c_out * len * c_in],
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn init(c_in: usize, c_out: usize, len: usize, rng: &mut impl Rng) -> Self {
        SpiralConv {
            c_in,
            c_out,
            len,
            weight: uniform_fill(c_out * len * c_in, he_bound(len * c_in), rng),
            bias: vec![T::zero(); c_out],
        }
    }

    fn gather(&self, x: &[T], spiral: &[usize], pad: usize, buf: &mut [T]) {
        for (slot, &j) in spiral.iter().enumerate() {
            let dst = &mut buf[slot * self.c_in..(slot + 1) * self.c_in];
            if j == pad {
                dst.iter_mut().for_each(|v| *v = T::zero());
            } else {
                dst.copy_from_slice(&x[j * self.c_in..(j + 1) * self.c_in]);
            }
        }
    }

    /// `x` is `N x c_in`; returns `N x c_out`.
    pub fn forward(&self, x: &[T], spirals: &SpiralIndex) -> Vec<T> {
        let n = spirals.vertex_count;
        let width = self.len * self.c_in;
        let mut buf = vec![T::zero(); width];
        let mut y = vec![T::zero(); n * self.c_out];
        for i in 0..n {
            self.gather(x, spirals.row(i), spirals.pad(), &mut buf);
            for (o, out) in y[i * self.c_out..(i + 1) * self.c_out].iter_mut().enumerate() {
                *out = self.bias[o] + dot(&self.weight[o * width..(o + 1) * width], &buf);
            }
        }
        y
    }

    pub fn backward(&self, x: &[T], spirals: &SpiralIndex, dy: &[T], grad: &mut SpiralConv<T>) -> Vec<T> {
        let n = spirals.vertex_count;
        let width = self.len * self.c_in;
        let pad = spirals.pad();
        let mut buf = vec![T::zero(); width];
        let mut dbuf = vec![T::zero(); width];
        let mut dx = vec![T::zero(); n * self.c_in];
        for i in 0..n {
            let spiral = spirals.row(i);
            self.gather(x, spiral, pad, &mut buf);
            dbuf.iter_mut().for_each(|v| *v = T::zero());
            for o in 0..self.c_out {
                let g = dy[i * self.c_out + o];
                grad.bias[o] = grad.bias[o] + g;
                let row = o * width..(o + 1) * width;
                axpy(g, &buf, &mut grad.weight[row.clone()]);
                axpy(g, &self.weight[row], &mut dbuf);
            }
            for (slot, &j) in spiral.iter().enumerate() {
                if j != pad {
                    let src = &dbuf[slot * self.c_in..(slot + 1) * self.c_in];
                    for (d, s) in dx[j * self.c_in..(j + 1) * self.c_in].iter_mut().zip(src) {
                        *d = *d + *s;
                    }
                }
            }
        }
        dx
    }
}

pub fn elu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter()
        .map(|&v| if v > T::zero() { v } else { v.exp() - T::one() })
        .collect()
}

/// Gradient through ELU given the pre-activation `x`.
pub fn elu_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > T::zero() { g } else { g * v.exp() })
        .collect()
}

pub fn relu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

pub fn relu_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect()
}

/// Mean over the spatial extent of a `C x (H*W)` tensor.
pub fn global_avg_pool<T: Scalar>(x: &[T], channels: usize) -> Vec<T> {
    let area = x.len() / channels;
    let inv = T::of(1.0 / area as f64);
    x.chunks_exact(area).map(|c| c.iter().copied().sum::<T>() * inv).collect()
}

pub fn global_avg_pool_backward<T: Scalar>(dy: &[T], area: usize) -> Vec<T> {
    let inv = T::of(1.0 / area as f64);
    dy.iter().flat_map(|&g| std::iter::repeat_n(g * inv, area)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_adjacency, icosphere};
    use crate::neural::build_spirals;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..21).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv: Conv2d<f64> = Conv2d::init(2, 3, &mut rng);
        let (h, w) = (5, 6);
        let x: Vec<f64> = (0..2 * h * w).map(|_| rng.random::<f64>()).collect();
        let y = conv.forward(&x, h, w);
        let (ho, wo) = (3, 3);
        assert_eq!(y.len(), 3 * ho * wo);
        for co in 0..3 {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = conv.bias[co];
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) = (2 * oy + ky, 2 * ox + kx);
                                if iy >= 1 && iy <= h && ix >= 1 && ix <= w {
                                    acc += conv.weight[((co * 2 + ci) * 3 + ky) * 3 + kx]
                                        * x[ci * h * w + (iy - 1) * w + ix - 1];
                                }
                            }
                        }
                    }
                    assert!((y[co * ho * wo + oy * wo + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv: Conv2d<f32> = Conv2d::init(1, 4, &mut rng);
        assert!(conv.forward(&[0.0; 64], 8, 8).iter().all(|v| *v == 0.0));
    }

    fn ico_spirals(len: usize) -> SpiralIndex {
        let (v, f) = icosphere(1);
        build_spirals(&build_adjacency(v.len(), &f), &f, len).unwrap()
    }

    #[test]
    fn slot_zero_selector_is_identity() {
        let spirals = ico_spirals(7);
        let c = 3;
        let mut layer: SpiralConv<f64> = SpiralConv::zeros(c, c, 7);
        for k in 0..c {
            layer.weight[k * 7 * c + k] = 1.0;
        }
        let x: Vec<f64> = (0..spirals.vertex_count * c).map(|i| (i as f64).sin()).collect();
        assert_eq!(layer.forward(&x, &spirals), x);
    }

    #[test]
    fn spiral_conv_is_permutation_equivariant() {
        let spirals = ico_spirals(9);
        let n = spirals.vertex_count;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer: SpiralConv<f64> = SpiralConv::init(4, 5, 9, &mut rng);
        let x: Vec<f64> = (0..n * 4).map(|_| rng.random::<f64>()).collect();
        let perm: Vec<usize> = (0..n).map(|i| (i * 17 + 5) % n).collect();
        let mut px = vec![0.0; n * 4];
        for old in 0..n {
            px[perm[old] * 4..perm[old] * 4 + 4].copy_from_slice(&x[old * 4..old * 4 + 4]);
        }
        let y = layer.forward(&x, &spirals);
        let py = layer.forward(&px, &spirals.relabelled(&perm));
        for old in 0..n {
            for o in 0..5 {
                assert!((py[perm[old] * 5 + o] - y[old * 5 + o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sentinel_slots_are_neutral() {
        let spirals = ico_spirals(9);
        let n = spirals.vertex_count;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layer: SpiralConv<f64> = SpiralConv::init(3, 4, 9, &mut rng);
        let mut wide: SpiralConv<f64> = SpiralConv::zeros(3, 4, 12);
        for o in 0..4 {
            wide.weight[o * 36..o * 36 + 27].copy_from_slice(&layer.weight[o * 27..(o + 1) * 27]);
        }
        wide.bias = layer.bias.clone();
        let x: Vec<f64> = (0..n * 3).map(|_| rng.random::<f64>()).collect();
        let (a, b) = (layer.forward(&x, &spirals), wide.forward(&x, &spirals.padded(3)));
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-13));
    }

    #[test]
    fn elu_values() {
        let y = elu(&[-1.0f64, 0.0, 2.0]);
        assert!((y[0] - ((-1f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(y[1], 0.0);
        assert_eq!(y[2], 2.0);
    }
}
