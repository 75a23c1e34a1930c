#![allow(dead_code)]

//! Brute-force reference implementations and finite-difference helpers
//! shared by the integration tests.

use candle_core::{DType, Device, Tensor, Var};
use mugan_core::attention::{AucGate, SelfAttention};
use mugan_core::layers::Conv1x1;
use mugan_core::params::ParamStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn values(t: &Tensor) -> Vec<f64> {
    t.detach()
        .to_dtype(DType::F64)
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1()
        .unwrap()
}

pub fn scalar(t: &Tensor) -> f64 {
    values(t)[0]
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random();
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Overwrite every parameter in `store` with N(0, std) draws from `rng`.
pub fn randomize(store: &ParamStore, rng: &mut ChaCha8Rng, std: f64) {
    for (_, v) in store.all() {
        let t = randn(rng, v.dims(), std).to_dtype(v.dtype()).unwrap();
        v.set(&t).unwrap();
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Proj {
    w: Vec<f64>,
    b: Vec<f64>,
    out: usize,
    inp: usize,
}

impl Proj {
    fn of(c: &Conv1x1) -> Self {
        Self {
            w: values(c.weight().as_tensor()),
            b: values(c.bias().as_tensor()),
            out: c.out_channels(),
            inp: c.in_channels(),
        }
    }

    /// Apply to the channel vector at one position.
    fn at(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|o| self.b[o] + (0..self.inp).map(|i| self.w[o * self.inp + i] * x[i]).sum::<f64>())
            .collect()
    }
}

/// Channel vector of `x` (B, C, H, W, row-major) at batch `b`, position `p`.
fn column(x: &[f64], c: usize, n: usize, b: usize, p: usize) -> Vec<f64> {
    (0..c).map(|ch| x[(b * c + ch) * n + p]).collect()
}

/// Reference gate: returns (gated encoder map, alpha), both row-major.
pub fn oracle_auc_gate(
    gate: &AucGate,
    dec: &[f64],
    enc: &[f64],
    (b, h, w): (usize, usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    let (wq, wk, wt) = (Proj::of(gate.w_q()), Proj::of(gate.w_k()), Proj::of(gate.w_t()));
    let (cd, ce, n) = (gate.decoder_channels(), gate.encoder_channels(), h * w);
    let mut gated = vec![0.0; b * ce * n];
    let mut alpha = vec![0.0; b * n];
    for bi in 0..b {
        for p in 0..n {
            let q = wq.at(&column(dec, cd, n, bi, p));
            let k = wk.at(&column(enc, ce, n, bi, p));
            let s: Vec<f64> = q.iter().zip(&k).map(|(a, c)| (a + c).max(0.0)).collect();
            let t = wt.at(&s)[0];
            let a = 1.0 / (1.0 + (-t).exp());
            alpha[bi * n + p] = a;
            for ch in 0..ce {
                let idx = (bi * ce + ch) * n + p;
                gated[idx] = enc[idx] * a;
            }
        }
    }
    (gated, alpha)
}

/// Reference self-attention: returns (output, affinities (B, N, N)).
pub fn oracle_self_attention(
    sa: &SelfAttention,
    x: &[f64],
    (b, h, w): (usize, usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    let (wq, wk, wv) = (Proj::of(sa.w_q()), Proj::of(sa.w_k()), Proj::of(sa.w_v()));
    let gamma = values(sa.gamma().as_tensor())[0];
    let (c, n) = (sa.channels(), h * w);
    let mut y = vec![0.0; b * c * n];
    let mut beta = vec![0.0; b * n * n];
    for bi in 0..b {
        let cols: Vec<Vec<f64>> = (0..n).map(|p| column(x, c, n, bi, p)).collect();
        let q: Vec<Vec<f64>> = cols.iter().map(|v| wq.at(v)).collect();
        let k: Vec<Vec<f64>> = cols.iter().map(|v| wk.at(v)).collect();
        let v: Vec<Vec<f64>> = cols.iter().map(|v| wv.at(v)).collect();
        for j in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|i| q[j].iter().zip(&k[i]).map(|(a, c)| a * c).sum())
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for i in 0..n {
                beta[(bi * n + j) * n + i] = logits[i].exp() / z;
            }
            for ch in 0..c {
                let o: f64 = (0..n).map(|i| beta[(bi * n + j) * n + i] * v[i][ch]).sum();
                let idx = (bi * c + ch) * n + j;
                y[idx] = gamma * o + x[idx];
            }
        }
    }
    (y, beta)
}

/// Textbook binary cross entropy, summed over attributes, mean over rows.
pub fn oracle_bce(logits: &[f64], targets: &[f64], rows: usize) -> f64 {
    let per_row = logits.len() / rows;
    let mut total = 0.0;
    for (x, t) in logits.iter().zip(targets) {
        let p = 1.0 / (1.0 + (-x).exp());
        total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    assert_eq!(per_row * rows, logits.len());
    total / rows as f64
}

pub fn oracle_l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64
}

/// PSNR of `[-1, 1]` images, computed in `[0, 255]`.
pub fn oracle_psnr(x: &[f64], y: &[f64]) -> f64 {
    let mse = x
        .iter()
        .zip(y)
        .map(|(a, b)| ((a - b) * 127.5).powi(2))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        100.0
    } else {
        20.0 * 255f64.log10() - 10.0 * mse.log10()
    }
}

/// SSIM of `[-1, 1]` CHW images with a direct 2-D Gaussian window over
/// every fully contained 11x11 patch.
pub fn oracle_ssim(x: &[f64], y: &[f64], (c, h, w): (usize, usize, usize)) -> f64 {
    const K: usize = 11;
    let sigma = 1.5;
    let mut win = [[0.0f64; K]; K];
    let mut z = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            z += *v;
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let px = |buf: &[f64], ch: usize, r: usize, col: usize| (buf[(ch * h + r) * w + col] + 1.0) * 127.5;
    let mut total = 0.0;
    for ch in 0..c {
        let mut acc = 0.0;
        let mut count = 0;
        for r0 in 0..=h - K {
            for c0 in 0..=w - K {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..K {
                    for j in 0..K {
                        let g = win[i][j] / z;
                        mx += g * px(x, ch, r0 + i, c0 + j);
                        my += g * px(y, ch, r0 + i, c0 + j);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..K {
                    for j in 0..K {
                        let g = win[i][j] / z;
                        let dx = px(x, ch, r0 + i, c0 + j) - mx;
                        let dy = px(y, ch, r0 + i, c0 + j) - my;
                        vx += g * dx * dx;
                        vy += g * dy * dy;
                        cxy += g * dx * dy;
                    }
                }
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / c as f64
}

/// Denominator floor for gradients that vanish identically (e.g. the key
/// bias of self-attention, which cancels in the softmax).
pub const GRAD_FLOOR: f64 = 1e-3;

/// Central finite-difference gradient check of a scalar function of `vars`.
///
/// At most `max_probes` entries per variable are probed (evenly spaced).
/// Returns the worst `||g_analytic - g_numeric|| / max(||g_analytic||,
/// ||g_numeric||, GRAD_FLOOR)` over variables, with the variable name.
pub fn grad_check<F>(vars: &[(&str, &Var)], f: F, step: f64, max_probes: usize) -> (f64, String)
where
    F: Fn() -> Tensor,
{
    let loss = f();
    let grads = loss.backward().unwrap();
    let mut worst = (0.0f64, String::new());
    for (name, var) in vars {
        let analytic = grads
            .get(var.as_tensor())
            .map(values)
            .unwrap_or_else(|| vec![0.0; var.elem_count()]);
        let base = values(var.as_tensor());
        let n = base.len();
        let stride = n.div_ceil(max_probes).max(1);
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for i in (0..n).step_by(stride) {
            let probe = |delta: f64| {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, var.dims(), &Device::Cpu).unwrap()).unwrap();
                scalar(&f())
            };
            let numeric = (probe(step) - probe(-step)) / (2.0 * step);
            diff2 += (analytic[i] - numeric).powi(2);
            a2 += analytic[i].powi(2);
            n2 += numeric.powi(2);
        }
        var.set(&Tensor::from_vec(base, var.dims(), &Device::Cpu).unwrap()).unwrap();
        let rel = diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(GRAD_FLOOR);
        if rel > worst.0 || worst.1.is_empty() {
            worst = (rel, name.to_string());
        }
    }
    worst
}

/// `Var` view of every trainable parameter of `store`.
pub fn trainable(store: &ParamStore) -> Vec<(String, Var)> {
    store.trainable().map(|(n, v)| (n.to_string(), v.clone())).collect()
}
