//! Central-difference gradient checks for every layer type and the full
//! model, all in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{build_adjacency, icosphere};
use crate::neural::layers::{
    elu, elu_backward, global_avg_pool, global_avg_pool_backward, relu, relu_backward, Conv2d, Dense, SpiralConv,
};
use crate::neural::{build_spirals, l2_loss, l2_loss_grad, Architecture, GcnModel, Network};

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheck {
    fn new(name: &str, tolerance: f64) -> Self {
        GradCheck {
            name: name.to_string(),
            checked: 0,
            max_rel_err: 0.0,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < self.tolerance
    }

    /// Compares `analytic[k]` with the central difference of `f(k, delta)`,
    /// the objective with element `k` shifted by `delta`.
    fn tensor(&mut self, analytic: &[f64], mut f: impl FnMut(usize, f64) -> f64) {
        for (k, &a) in analytic.iter().enumerate() {
            let n = (f(k, STEP) - f(k, -STEP)) / (2.0 * STEP);
            self.max_rel_err = self.max_rel_err.max(rel_err(a, n));
            self.checked += 1;
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn weighted(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn shifted(v: &[f64], k: usize, d: f64) -> Vec<f64> {
    let mut v = v.to_vec();
    v[k] += d;
    v
}

pub fn check_conv(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = Conv2d::<f64>::init(2, 3, &mut rng);
    let (h, w) = (7, 6);
    let x = random_vec(&mut rng, 2 * h * w);
    let r = random_vec(&mut rng, 3 * 4 * 3);
    let obj = |c: &Conv2d<f64>, x: &[f64]| weighted(&r, &c.forward(x, h, w));
    let mut g = Conv2d::zeros(2, 3);
    let dx = conv.backward(&x, h, w, &r, &mut g);
    let mut out = GradCheck::new("conv2d", 1e-5);
    out.tensor(&dx, |k, d| obj(&conv, &shifted(&x, k, d)));
    out.tensor(&g.weight, |k, d| {
        let mut c = conv.clone();
        c.weight[k] += d;
        obj(&c, &x)
    });
    out.tensor(&g.bias, |k, d| {
        let mut c = conv.clone();
        c.bias[k] += d;
        obj(&c, &x)
    });
    out
}

pub fn check_dense(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = Dense::<f64>::init(5, 4, &mut rng);
    let x = random_vec(&mut rng, 5 * 3);
    let r = random_vec(&mut rng, 4 * 3);
    let obj = |l: &Dense<f64>, x: &[f64]| weighted(&r, &l.forward_rows(x));
    let mut g = Dense::zeros(5, 4);
    let dx = layer.backward_rows(&x, &r, &mut g);
    let mut out = GradCheck::new("dense", 1e-5);
    out.tensor(&dx, |k, d| obj(&layer, &shifted(&x, k, d)));
    out.tensor(&g.weight, |k, d| {
        let mut l = layer.clone();
        l.weight[k] += d;
        obj(&l, &x)
    });
    out.tensor(&g.bias, |k, d| {
        let mut l = layer.clone();
        l.bias[k] += d;
        obj(&l, &x)
    });
    out
}

/// 12-vertex icosahedron, 4 input and 8 output channels.
pub fn check_spiral(seed: u64) -> GradCheck {
    let (v, f) = icosphere(0);
    let spirals = build_spirals(&build_adjacency(v.len(), &f), &f, 9).expect("icosahedron is closed");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = SpiralConv::<f64>::init(4, 8, 9, &mut rng);
    let x = random_vec(&mut rng, v.len() * 4);
    let r = random_vec(&mut rng, v.len() * 8);
    let obj = |l: &SpiralConv<f64>, x: &[f64]| weighted(&r, &l.forward(x, &spirals));
    let mut g = SpiralConv::zeros(4, 8, 9);
    let dx = layer.backward(&x, &spirals, &r, &mut g);
    let mut out = GradCheck::new("spiral_conv", 1e-5);
    out.tensor(&dx, |k, d| obj(&layer, &shifted(&x, k, d)));
    out.tensor(&g.weight, |k, d| {
        let mut l = layer.clone();
        l.weight[k] += d;
        obj(&l, &x)
    });
    out.tensor(&g.bias, |k, d| {
        let mut l = layer.clone();
        l.bias[k] += d;
        obj(&l, &x)
    });
    out
}

/// Activations, pooling and the loss.
pub fn check_pointwise(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("activations+pool+loss", 1e-5);
    // Keep inputs away from the activation kinks.
    let x: Vec<f64> = random_vec(&mut rng, 24)
        .into_iter()
        .map(|v| if v.abs() < 0.1 { v + 0.2 } else { v })
        .collect();
    let r = random_vec(&mut rng, 24);
    out.tensor(&elu_backward(&x, &r), |k, d| weighted(&r, &elu(&shifted(&x, k, d))));
    out.tensor(&relu_backward(&x, &r), |k, d| weighted(&r, &relu(&shifted(&x, k, d))));
    let rp = random_vec(&mut rng, 3);
    out.tensor(&global_avg_pool_backward(&rp, 8), |k, d| {
        weighted(&rp, &global_avg_pool(&shifted(&x, k, d), 3))
    });
    let target = random_vec(&mut rng, 24);
    out.tensor(&l2_loss_grad(&x, &target), |k, d| l2_loss(&shifted(&x, k, d), &target));
    out
}

fn check_model_pair(seed: u64) -> (GcnModel<f64>, Vec<f64>) {
    let (v, f) = icosphere(0);
    let spirals = build_spirals(&build_adjacency(v.len(), &f), &f, 5).expect("icosahedron is closed");
    let arch = Architecture {
        image_size: 16,
        encoder_channels: vec![3, 4, 5],
        channel_plan: vec![3, 4, 4, 5],
        spiral_len: 5,
        vertex_count: v.len(),
    };
    let model = GcnModel::new(arch, spirals, seed).expect("consistent shapes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let input: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
    (model, input)
}

/// Gradient of the squared feature norm with respect to every encoder parameter.
pub fn check_encoder(seed: u64) -> GradCheck {
    let (model, input) = check_model_pair(seed);
    let obj = |m: &GcnModel<f64>| m.encode(&input).unwrap().iter().map(|v| v * v).sum::<f64>();
    let cache = model.forward_cached(&input).unwrap();
    let d: Vec<f64> = cache.pooled.iter().map(|v| 2.0 * v).collect();
    let mut g = Network::zeros(&model.arch);
    model.backward_encoder(&cache, &d, &mut g);
    let mut out = GradCheck::new("encoder", 1e-5);
    for (li, gl) in g.encoder.iter().enumerate() {
        out.tensor(&gl.weight, |k, d| {
            let mut m = model.clone();
            m.net.encoder[li].weight[k] += d;
            obj(&m)
        });
        out.tensor(&gl.bias, |k, d| {
            let mut m = model.clone();
            m.net.encoder[li].bias[k] += d;
            obj(&m)
        });
    }
    out
}

/// End-to-end loss gradient at `count` randomly chosen parameters.
pub fn check_model(seed: u64, count: usize) -> GradCheck {
    let (model, input) = check_model_pair(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let target: Vec<f64> = (0..model.arch.vertex_count * 3).map(|_| rng.random_range(-0.5..0.5)).collect();
    let obj = |m: &GcnModel<f64>| l2_loss(&m.forward(&input).unwrap(), &target);
    let cache = model.forward_cached(&input).unwrap();
    let mut g = Network::zeros(&model.arch);
    model.backward(&cache, &l2_loss_grad(&cache.output, &target), &mut g);
    let grads: Vec<Vec<f64>> = g.tensors().iter().map(|t| t.to_vec()).collect();
    let total: usize = grads.iter().map(Vec::len).sum();
    let mut out = GradCheck::new("model", 1e-4);
    for _ in 0..count {
        let mut flat = rng.random_range(0..total);
        let t = grads.iter().position(|g| {
            if flat < g.len() {
                true
            } else {
                flat -= g.len();
                false
            }
        });
        let t = t.unwrap();
        out.tensor(&grads[t][flat..flat + 1], |_, d| {
            let mut m = model.clone();
            m.net.tensors_mut()[t][flat] += d;
            obj(&m)
        });
    }
    out
}

pub fn run_all(seed: u64) -> Vec<GradCheck> {
    vec![
        check_conv(seed),
        check_dense(seed),
        check_spiral(seed),
        check_pointwise(seed),
        check_encoder(seed),
        check_model(seed, 20),
    ]
}
