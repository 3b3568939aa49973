//! Row-major dense primitives with hand-written backward passes.

use super::params::{LayerNorm, Linear};

pub const LN_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044715;

/// `x` is `n x in_dim`; returns `n x out_dim`.
pub fn linear_forward(x: &[f64], lin: &Linear) -> Vec<f64> {
    let n = x.len() / lin.in_dim;
    let mut y = vec![0.0; n * lin.out_dim];
    for r in 0..n {
        let xr = &x[r * lin.in_dim..(r + 1) * lin.in_dim];
        let yr = &mut y[r * lin.out_dim..(r + 1) * lin.out_dim];
        for (o, yo) in yr.iter_mut().enumerate() {
            let w = &lin.w[o * lin.in_dim..(o + 1) * lin.in_dim];
            *yo = lin.b[o] + dot(w, xr);
        }
    }
    y
}

/// Accumulates parameter gradients into `grad` and returns `dL/dx`.
pub fn linear_backward(x: &[f64], lin: &Linear, dy: &[f64], grad: &mut Linear, need_dx: bool) -> Vec<f64> {
    let n = x.len() / lin.in_dim;
    let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
    for r in 0..n {
        let xr = &x[r * lin.in_dim..(r + 1) * lin.in_dim];
        let dyr = &dy[r * lin.out_dim..(r + 1) * lin.out_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let gw = &mut grad.w[o * lin.in_dim..(o + 1) * lin.in_dim];
            for (a, &xv) in gw.iter_mut().zip(xr) {
                *a += g * xv;
            }
            if need_dx {
                let w = &lin.w[o * lin.in_dim..(o + 1) * lin.in_dim];
                let dxr = &mut dx[r * lin.in_dim..(r + 1) * lin.in_dim];
                for (d, &wv) in dxr.iter_mut().zip(w) {
                    *d += g * wv;
                }
            }
        }
    }
    dx
}

pub struct LnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn layernorm_forward(x: &[f64], ln: &LayerNorm) -> (Vec<f64>, LnCache) {
    let d = ln.gamma.len();
    let n = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; n];
    for r in 0..n {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let h = (xr[j] - mean) * is;
            xhat[r * d + j] = h;
            y[r * d + j] = h * ln.gamma[j] + ln.beta[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub fn layernorm_backward(dy: &[f64], cache: &LnCache, ln: &LayerNorm, grad: &mut LayerNorm) -> Vec<f64> {
    let d = ln.gamma.len();
    let n = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for r in 0..n {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for j in 0..d {
            grad.gamma[j] += dyr[j] * xh[j];
            grad.beta[j] += dyr[j];
            dxhat[j] = dyr[j] * ln.gamma[j];
        }
        let sum = dxhat.iter().sum::<f64>();
        let sum_x = dot(&dxhat, xh);
        let k = cache.inv_std[r] / d as f64;
        for j in 0..d {
            dx[r * d + j] = k * (d as f64 * dxhat[j] - sum - xh[j] * sum_x);
        }
    }
    dx
}

/// Tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub struct AttnCache {
    /// Per head, `n x n` softmax probabilities.
    pub probs: Vec<Vec<f64>>,
}

/// Multi-head scaled dot-product attention on a packed `n x 3d` QKV matrix.
/// Returns the concatenated head outputs, `n x d`.
pub fn attention_forward(qkv: &[f64], n: usize, d: usize, heads: usize) -> (Vec<f64>, AttnCache) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; n * d];
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = |i: usize| &qkv[i * 3 * d + h * dh..i * 3 * d + (h + 1) * dh];
        let k = |j: usize| &qkv[j * 3 * d + d + h * dh..j * 3 * d + d + (h + 1) * dh];
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            let row = &mut p[i * n..(i + 1) * n];
            let qi = q(i);
            for (j, s) in row.iter_mut().enumerate() {
                *s = dot(qi, k(j)) * scale;
            }
            softmax_in_place(row);
        }
        for i in 0..n {
            let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
            for j in 0..n {
                let pij = p[i * n + j];
                let v = &qkv[j * 3 * d + 2 * d + h * dh..j * 3 * d + 2 * d + (h + 1) * dh];
                for (ov, &vv) in o.iter_mut().zip(v) {
                    *ov += pij * vv;
                }
            }
        }
        probs.push(p);
    }
    (out, AttnCache { probs })
}

/// Gradient with respect to the packed QKV matrix.
pub fn attention_backward(qkv: &[f64], cache: &AttnCache, dout: &[f64], n: usize, d: usize, heads: usize) -> Vec<f64> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dqkv = vec![0.0; qkv.len()];
    let mut ds = vec![0.0; n];
    for h in 0..heads {
        let p = &cache.probs[h];
        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
        for i in 0..n {
            let doi = &dout[i * d + h * dh..i * d + (h + 1) * dh];
            // dP_ij = dO_i . v_j, then softmax backward
            let mut acc = 0.0;
            for j in 0..n {
                let v = &qkv[j * 3 * d + vo..j * 3 * d + vo + dh];
                ds[j] = dot(doi, v);
                acc += ds[j] * p[i * n + j];
            }
            for j in 0..n {
                let pij = p[i * n + j];
                // dV_j += P_ij dO_i
                for c in 0..dh {
                    dqkv[j * 3 * d + vo + c] += pij * doi[c];
                }
                let g = pij * (ds[j] - acc) * scale;
                if g == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    dqkv[i * 3 * d + qo + c] += g * qkv[j * 3 * d + ko + c];
                    dqkv[j * 3 * d + ko + c] += g * qkv[i * 3 * d + qo + c];
                }
            }
        }
    }
    dqkv
}
