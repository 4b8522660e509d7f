//! Shared fixtures for the integration and acceptance suites.

#![allow(dead_code)]

use damformer::config::{LovaszClasses, RunConfig};
use damformer::gradcheck::{check_fn, GradCheckReport};
use damformer::loss::{bce_loss, ce_loss, dice_loss, lovasz_softmax};
use damformer::mask::Mask;
use damformer::nn::layers::Linear;
use damformer::nn::EfficientAttention;
use damformer::ops::Conv2dSpec;
use damformer::params::{ParamBuilder, ParamStore};
use damformer::rng::SplitMix64;
use damformer::{Graph, Result, Tensor, Var};

/// Relative error bound for gradient checks.
pub const GRAD_TOL: f64 = 1e-4;

pub fn workspace_file(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn load_preset(name: &str) -> RunConfig {
    RunConfig::load(&workspace_file(&format!("configs/{name}.conf"))).unwrap()
}

pub fn rand(shape: &[usize], scale: f64, seed: u64) -> Tensor<f64> {
    let mut rng = SplitMix64::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| (rng.next_f64() * 2.0 - 1.0) * scale).collect()).unwrap()
}

pub fn labels(shape: &[usize], classes: u32, seed: u64) -> Mask {
    let mut rng = SplitMix64::new(seed);
    let n = shape.iter().product();
    Mask::new(shape, (0..n).map(|_| rng.range_inclusive(0, classes - 1) as u8).collect()).unwrap()
}

/// `None` when the report passes; otherwise the reason.
pub fn verdict(r: &GradCheckReport) -> Option<String> {
    if r.checked() == 0 {
        return Some("nothing checked".into());
    }
    if r.skipped() * 4 > r.checked() {
        return Some(format!("{} of {} entries at kinks", r.skipped(), r.checked() + r.skipped()));
    }
    (r.max_rel_err() >= GRAD_TOL).then(|| format!("max relative error {:.3e}", r.max_rel_err()))
}

struct Cases(Vec<(String, GradCheckReport)>);

impl Cases {
    fn check<F>(&mut self, what: &str, inputs: &[(&str, Tensor<f64>)], f: F)
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        self.0.push((what.to_string(), check_fn(inputs, f, None, 17).unwrap()));
    }
}

/// Finite-difference reports for every differentiable op.
pub fn op_gradient_reports() -> Vec<(String, GradCheckReport)> {
    let mut c = Cases(Vec::new());

    let a = rand(&[2, 3, 4], 1.0, 1);
    let b = rand(&[2, 3, 4], 1.0, 2);
    c.check("add", &[("a", a.clone()), ("b", b.clone())], |g, v| g.add(v[0], v[1]));
    c.check("sub", &[("a", a.clone()), ("b", b.clone())], |g, v| g.sub(v[0], v[1]));
    c.check("mul", &[("a", a.clone()), ("b", b.clone())], |g, v| g.mul(v[0], v[1]));
    c.check("scale", &[("a", a.clone())], |g, v| g.scale(v[0], -1.7));
    c.check("add_scalar", &[("a", a.clone())], |g, v| g.add_scalar(v[0], 0.3));
    c.check("square", &[("a", a.clone())], |g, v| g.square(v[0]));
    c.check("relu", &[("a", a.clone())], |g, v| g.relu(v[0]));
    c.check("gelu", &[("a", rand(&[2, 3, 4], 3.0, 1))], |g, v| g.gelu(v[0]));
    c.check("sigmoid", &[("a", rand(&[2, 3, 4], 4.0, 1))], |g, v| g.sigmoid(v[0]));

    let b5 = rand(&[2, 5, 4], 1.0, 4);
    c.check("sum", &[("a", a.clone())], |g, v| g.sum(v[0]));
    c.check("mean", &[("a", a.clone())], |g, v| g.mean(v[0]));
    c.check("reshape", &[("a", a.clone())], |g, v| g.reshape(v[0], &[6, 4]));
    c.check("concat", &[("a", a.clone()), ("b", b5.clone())], |g, v| g.concat(&[v[0], v[1]], 1));
    c.check("narrow", &[("b", b5)], |g, v| g.narrow(v[0], 1, 1, 3));
    c.check("swap_last_axes", &[("a", a)], |g, v| g.swap_last_axes(v[0]));
    let x = rand(&[2, 3, 4, 5], 1.0, 5);
    c.check("scale_channels", &[("x", x.clone()), ("gate", rand(&[2, 3], 1.0, 6))], |g, v| {
        g.scale_channels(v[0], v[1])
    });
    c.check("global_avg_pool", &[("x", x.clone())], |g, v| g.global_avg_pool(v[0]));
    c.check("global_max_pool", &[("x", x)], |g, v| g.global_max_pool(v[0]));

    c.check("matmul", &[("a", rand(&[3, 4], 1.0, 7)), ("b", rand(&[4, 5], 1.0, 8))], |g, v| g.matmul(v[0], v[1]));
    c.check(
        "linear",
        &[("x", rand(&[2, 3, 4], 1.0, 9)), ("w", rand(&[4, 6], 1.0, 10)), ("b", rand(&[6], 1.0, 11))],
        |g, v| g.linear(v[0], v[1], v[2]),
    );

    let x = rand(&[2, 3, 5], 2.0, 12);
    c.check("softmax last axis", &[("x", x.clone())], |g, v| g.softmax(v[0], 2));
    c.check("softmax middle axis", &[("x", x.clone())], |g, v| g.softmax(v[0], 1));
    c.check("layer_norm", &[("x", x), ("gamma", rand(&[5], 1.0, 13)), ("beta", rand(&[5], 1.0, 14))], |g, v| {
        g.layer_norm(v[0], v[1], v[2], 1e-6)
    });

    let x = rand(&[2, 4, 7, 6], 1.0, 15);
    let b3 = rand(&[3], 1.0, 17);
    for (name, spec, k) in [
        ("conv2d 3x3", Conv2dSpec::new(1, 1), 3),
        ("conv2d 3x3 stride 2", Conv2dSpec::new(2, 1), 3),
        ("conv2d 3x3 stride 2 unpadded", Conv2dSpec::new(2, 0), 3),
        ("conv2d 1x1", Conv2dSpec::POINTWISE, 1),
    ] {
        c.check(name, &[("x", x.clone()), ("w", rand(&[3, 4, k, k], 1.0, 16)), ("b", b3.clone())], move |g, v| {
            g.conv2d(v[0], v[1], Some(v[2]), spec)
        });
    }
    c.check("conv2d depthwise", &[("x", x), ("w", rand(&[4, 1, 3, 3], 1.0, 19))], |g, v| {
        g.conv2d(v[0], v[1], None, Conv2dSpec::new(1, 1).grouped(4))
    });
    c.check(
        "conv2d 7x7 stride 4",
        &[("x", rand(&[1, 4, 8, 8], 1.0, 21)), ("w", rand(&[3, 4, 7, 7], 1.0, 20))],
        |g, v| g.conv2d(v[0], v[1], None, Conv2dSpec::new(4, 3)),
    );

    let x = rand(&[2, 3, 3, 4], 1.0, 22);
    c.check("upsample_bilinear x2", &[("x", x.clone())], |g, v| g.upsample_bilinear(v[0], 6, 8));
    c.check("upsample_bilinear x4", &[("x", x.clone())], |g, v| g.upsample_bilinear(v[0], 12, 16));
    c.check("upsample_bilinear uneven", &[("x", x)], |g, v| g.upsample_bilinear(v[0], 7, 5));

    let (q, k, v) = (rand(&[2, 6, 8], 1.0, 23), rand(&[2, 4, 8], 1.0, 24), rand(&[2, 4, 8], 1.0, 25));
    for heads in [1, 2, 4] {
        c.check(
            &format!("attention heads={heads}"),
            &[("q", q.clone()), ("k", k.clone()), ("v", v.clone())],
            move |g, x| g.attention(x[0], x[1], x[2], heads),
        );
    }

    let loc = labels(&[2, 3, 4], 2, 27);
    let dam = labels(&[2, 3, 4], 5, 29);
    let zl = rand(&[2, 1, 3, 4], 3.0, 26);
    c.check("bce_loss", &[("z", zl.clone())], |g, v| bce_loss(g, v[0], &loc));
    c.check("dice_loss", &[("z", zl)], |g, v| dice_loss(g, v[0], &loc, 1.0));
    c.check("ce_loss", &[("z", rand(&[2, 5, 3, 4], 2.0, 28))], |g, v| ce_loss(g, v[0], &dam));
    // widely spread logits keep every per-class error ordering fixed inside the stencil
    let dam = labels(&[1, 2, 3], 5, 30);
    for seed in [31, 32, 33] {
        for policy in [LovaszClasses::Present, LovaszClasses::All] {
            c.check(&format!("lovasz_softmax {policy:?} #{seed}"), &[("z", rand(&[1, 5, 2, 3], 4.0, seed))], |g, v| {
                lovasz_softmax(g, v[0], &dam, policy)
            });
        }
    }
    c.0
}

/// Plain multi-head attention straight from the weights, in f64.
pub fn dense_attention(store: &ParamStore<f32>, attn: &EfficientAttention, x: &[f64], l: usize, c: usize) -> Vec<f64> {
    let lin = |layer: &Linear, input: &[f64]| -> Vec<f64> {
        let w = store.value(layer.weight).data();
        let b = store.value(layer.bias).data();
        let mut out = vec![0.0; l * c];
        for r in 0..l {
            for o in 0..c {
                let mut acc = b[o] as f64;
                for i in 0..c {
                    acc += input[r * c + i] * w[i * c + o] as f64;
                }
                out[r * c + o] = acc;
            }
        }
        out
    };
    let (q, k, v) = (lin(&attn.q, x), lin(&attn.k, x), lin(&attn.v, x));
    let d = c / attn.heads;
    let mut mixed = vec![0.0; l * c];
    for h in 0..attn.heads {
        for i in 0..l {
            let scores: Vec<f64> = (0..l)
                .map(|j| (0..d).map(|t| q[i * c + h * d + t] * k[j * c + h * d + t]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for t in 0..d {
                mixed[i * c + h * d + t] = (0..l).map(|j| e[j] / z * v[j * c + h * d + t]).sum();
            }
        }
    }
    lin(&attn.proj, &mixed)
}

/// Largest deviation of sequence-reduction-free attention from the dense reference.
pub fn unreduced_attention_deviation() -> f64 {
    let (h, w, c, heads) = (4, 4, 8, 2);
    let l = h * w;
    let mut store = ParamStore::<f32>::new();
    let mut rng = SplitMix64::new(8);
    let attn = EfficientAttention::new(&mut ParamBuilder::new(&mut store, &mut rng), c, heads, 1);
    assert!(attn.reduce.is_none());
    // spread the small initial weights so the softmax is far from uniform
    for id in store.ids().collect::<Vec<_>>() {
        let mut r = SplitMix64::new(id.index() as u64);
        store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = (r.next_f64() * 2.0 - 1.0) as f32 * 0.5);
    }
    let mut r = SplitMix64::new(9);
    let x: Tensor<f32> =
        Tensor::new(&[1, l, c], (0..l * c).map(|_| (r.next_f64() * 2.0 - 1.0) as f32).collect()).unwrap();

    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let out = attn.forward(&mut g, &p, xv, h, w).unwrap();
    let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let reference = dense_attention(&store, &attn, &xs, l, c);
    g.value(out).data().iter().zip(&reference).map(|(&a, &b)| (a as f64 - b).abs()).fold(0.0, f64::max)
}
