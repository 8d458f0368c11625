//! Naive U-Net forward pass and the finite-difference gradient check.

use aquamosaic_core::unet::{Tensor, UNet, UNetConfig};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// `[c][y][x]` feature map.
pub type Map = Vec<Vec<Vec<f64>>>;

pub fn to_map(t: &Tensor<f32>) -> Map {
    (0..t.channels)
        .map(|c| (0..t.height).map(|y| (0..t.width).map(|x| f64::from(t.at(c, y, x))).collect()).collect())
        .collect()
}

/// Direct nested-loop convolution; a kernel of size k reads offsets
/// `-(k-1)/2 ..= k/2`, with zeros outside the map.
pub fn conv(input: &Map, w: &[f32], b: &[f32], out_c: usize, k: usize, relu: bool) -> Map {
    let (in_c, h, wd) = (input.len(), input[0].len(), input[0][0].len());
    let before = (k as i64 - 1) / 2;
    let mut out = vec![vec![vec![0.0; wd]; h]; out_c];
    for co in 0..out_c {
        for y in 0..h {
            for x in 0..wd {
                let mut s = f64::from(b[co]);
                for ci in 0..in_c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as i64 + ky as i64 - before;
                            let sx = x as i64 + kx as i64 - before;
                            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= wd as i64 {
                                continue;
                            }
                            let wv = f64::from(w[((co * in_c + ci) * k + ky) * k + kx]);
                            s += wv * input[ci][sy as usize][sx as usize];
                        }
                    }
                }
                out[co][y][x] = if relu { s.max(0.0) } else { s };
            }
        }
    }
    out
}

pub fn pool(m: &Map) -> Map {
    m.iter()
        .map(|p| {
            (0..p.len() / 2)
                .map(|y| (0..p[0].len() / 2).map(|x| p[2 * y][2 * x].max(p[2 * y][2 * x + 1]).max(p[2 * y + 1][2 * x]).max(p[2 * y + 1][2 * x + 1])).collect())
                .collect()
        })
        .collect()
}

pub fn upsample(m: &Map) -> Map {
    m.iter()
        .map(|p| (0..2 * p.len()).map(|y| (0..2 * p[0].len()).map(|x| p[y / 2][x / 2]).collect()).collect())
        .collect()
}

pub fn naive_forward(model: &UNet<f32>, x: &Tensor<f32>) -> Map {
    let cfg = *model.config();
    let p = |name: &str| &model.param(name).unwrap().values;
    let layer = |m: &Map, name: &str, out_c: usize, k: usize, relu: bool| {
        conv(m, p(&format!("{name}.weight")), p(&format!("{name}.bias")), out_c, k, relu)
    };
    let mut cur = to_map(x);
    let mut skips = Vec::new();
    for l in 0..cfg.depth {
        let c = cfg.base_filters << l;
        cur = layer(&cur, &format!("enc{l}.conv1"), c, 3, true);
        cur = layer(&cur, &format!("enc{l}.conv2"), c, 3, true);
        skips.push(cur.clone());
        cur = pool(&cur);
    }
    let cb = cfg.base_filters << cfg.depth;
    cur = layer(&cur, "bottleneck.conv1", cb, 3, true);
    cur = layer(&cur, "bottleneck.conv2", cb, 3, true);
    for l in (0..cfg.depth).rev() {
        let c = cfg.base_filters << l;
        let up = layer(&upsample(&cur), &format!("dec{l}.up"), c, 2, true);
        let mut cat = skips.pop().unwrap();
        cat.extend(up);
        cur = layer(&cat, &format!("dec{l}.conv1"), c, 3, true);
        cur = layer(&cur, &format!("dec{l}.conv2"), c, 3, true);
    }
    let logits = layer(&cur, "head", 1, 1, false);
    logits.into_iter().map(|p| p.into_iter().map(|r| r.into_iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect()).collect()).collect()
}

pub fn random_input<T: aquamosaic_core::unet::Scalar>(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor<T> {
    let data = (0..c * h * w).map(|_| T::from(rng.random_range(0.0..1.0f64)).unwrap()).collect();
    Tensor::from_vec(c, h, w, data).unwrap()
}

/// Largest absolute gap between the f32 model and the naive f64 oracle on a
/// seeded random input.
pub fn forward_deviation(cfg: UNetConfig, seed: u64, size: usize) -> f64 {
    let model = UNet::<f32>::init(cfg, seed).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let x = random_input::<f32>(&mut rng, 2, size, size);
    let got = model.forward_one(&x).unwrap();
    let want = naive_forward(&model, &x);
    let mut worst = 0.0f64;
    for y in 0..size {
        for xx in 0..size {
            worst = worst.max((f64::from(got.at(0, y, xx)) - want[0][y][xx]).abs());
        }
    }
    worst
}

pub fn layer_type(name: &str) -> &'static str {
    if name.starts_with("head") {
        "1x1 head"
    } else if name.contains(".up.") {
        "2x2 up-conv"
    } else {
        "3x3 conv"
    }
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub kind: &'static str,
    /// Parameters of this layer type in the network.
    pub available: usize,
    pub checked: usize,
    pub biases: usize,
    pub kinks: usize,
    pub worst: f64,
}

/// Analytic versus central-difference gradients on the 64-bit desk net
/// (depth 2, base 4, 32x32, two samples). Per layer type a random sample of 50
/// parameters (or all of them) is checked, biases first. A parameter whose
/// perturbation flips a ReLU or max-pool branch sits on a kink where the
/// difference quotient is not a derivative; it is replaced by the next
/// random candidate. Error is `|a - fd| / max(|a|, |fd|)`.
pub fn gradient_check(seed: u64) -> Vec<GradReport> {
    let cfg = UNetConfig { depth: 2, base_filters: 4, input_size: 32, ..UNetConfig::default() };
    let mut model = UNet::<f64>::init(cfg, seed).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed.wrapping_add(78));
    let xs: Vec<Tensor<f64>> = (0..2).map(|_| random_input(&mut rng, 2, 32, 32)).collect();
    let ts: Vec<Tensor<f64>> = (0..2)
        .map(|_| Tensor::from_vec(1, 32, 32, (0..1024).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect()).unwrap())
        .collect();
    let (_, grads) = model.loss_and_gradients(&xs, &ts).unwrap();

    let mut by_type: std::collections::BTreeMap<&'static str, Vec<(usize, usize)>> = Default::default();
    for (pi, p) in model.params().iter().enumerate() {
        for vi in 0..p.values.len() {
            by_type.entry(layer_type(&p.name)).or_default().push((pi, vi));
        }
    }
    let h = 1e-3;
    let traces = |m: &UNet<f64>| xs.iter().map(|x| m.trace_one(x).unwrap()).collect::<Vec<_>>();
    let mut reports = Vec::new();
    for (kind, mut all) in by_type {
        for i in (1..all.len()).rev() {
            all.swap(i, rng.random_range(0..=i));
        }
        all.sort_by_key(|&(pi, _)| model.params()[pi].name.ends_with(".weight"));
        let want = all.len().min(50);
        let mut r = GradReport { kind, available: all.len(), checked: 0, biases: 0, kinks: 0, worst: 0.0 };
        for &(pi, vi) in &all {
            if r.checked == want {
                break;
            }
            let orig = model.params()[pi].values[vi];
            model.params_mut()[pi].values[vi] = orig + h;
            let up = model.loss_and_gradients(&xs, &ts).unwrap().0;
            let up_tr = traces(&model);
            model.params_mut()[pi].values[vi] = orig - h;
            let down = model.loss_and_gradients(&xs, &ts).unwrap().0;
            let down_tr = traces(&model);
            model.params_mut()[pi].values[vi] = orig;
            if up_tr.iter().zip(&down_tr).any(|(a, b)| !a.same_activation_pattern(b)) {
                r.kinks += 1;
                continue;
            }
            let fd = (up - down) / (2.0 * h);
            let a = grads[pi][vi];
            let scale = a.abs().max(fd.abs());
            if scale > 0.0 {
                r.worst = r.worst.max((a - fd).abs() / scale);
            }
            r.checked += 1;
            r.biases += usize::from(model.params()[pi].name.ends_with(".bias"));
        }
        reports.push(r);
    }
    reports
}
