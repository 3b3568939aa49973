use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::*;
use super::params::VitParams;
use super::VitConfig;
use crate::error::{invalid, Error};
use crate::Result;

/// Flattens the image into `n_patches x (channels * p * p)`; each patch
/// vector is channel-major, then row, then column.
pub fn extract_patches(image: &[f64], config: &VitConfig) -> Vec<f64> {
    let (s, p, c) = (config.image_size, config.patch_size, config.channels);
    let side = s / p;
    let mut out = Vec::with_capacity(config.n_patches() * config.patch_dim());
    for pr in 0..side {
        for pc in 0..side {
            for ch in 0..c {
                for i in 0..p {
                    let row = (ch * s + pr * p + i) * s + pc * p;
                    out.extend_from_slice(&image[row..row + p]);
                }
            }
        }
    }
    out
}

struct BlockCache {
    a: Vec<f64>,
    ln1: LnCache,
    qkv: Vec<f64>,
    attn: AttnCache,
    o: Vec<f64>,
    keep1: f64,
    b: Vec<f64>,
    ln2: LnCache,
    h1: Vec<f64>,
    g_mask: Vec<f64>,
    g: Vec<f64>,
    keep2: f64,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    patches: Vec<f64>,
    token_mask: Vec<f64>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    ncc: Vec<f64>,
    nh: Vec<f64>,
    hcat: Vec<f64>,
    pub logit: f64,
    pub output: f64,
}

fn dropout_mask(len: usize, p: f64, rng: &mut Option<ChaCha8Rng>) -> Vec<f64> {
    match rng {
        Some(r) if p > 0.0 => (0..len)
            .map(|_| if r.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
            .collect(),
        _ => Vec::new(),
    }
}

fn drop_path_scale(p: f64, rng: &mut Option<ChaCha8Rng>) -> f64 {
    match rng {
        Some(r) if p > 0.0 => {
            if r.random::<f64>() < p {
                0.0
            } else {
                1.0 / (1.0 - p)
            }
        }
        _ => 1.0,
    }
}

fn apply_mask(x: &mut [f64], mask: &[f64]) {
    if !mask.is_empty() {
        x.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
}

fn check_finite(v: &[f64], layer: impl Into<String>) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            layer: layer.into(),
            detail: format!("element {i} is {}", v[i]),
        });
    }
    Ok(())
}

fn check_inputs(params: &VitParams, image: &[f64], ncc: &[f64]) -> Result<()> {
    let c = &params.config;
    let want = c.channels * c.image_size * c.image_size;
    if image.len() != want {
        return invalid(format!("image has {} values, model expects {want}", image.len()));
    }
    if ncc.len() != c.ncc_len() {
        return invalid(format!("NCC vector has {} values, model expects {}", ncc.len(), c.ncc_len()));
    }
    check_finite(image, "input image")?;
    check_finite(ncc, "input NCC")
}

/// Forward pass. With `dropout_seed` set, dropout and drop-path are active
/// and drawn from that seed; otherwise the pass is deterministic inference.
pub fn forward(params: &VitParams, image: &[f64], ncc: &[f64], dropout_seed: Option<u64>) -> Result<ForwardCache> {
    check_inputs(params, image, ncc)?;
    let cfg = &params.config;
    let (n, d) = (cfg.n_tokens(), cfg.embed_dim);
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);

    let patches = extract_patches(image, cfg);
    let emb = linear_forward(&patches, &params.patch_embed);
    let mut z = vec![0.0; n * d];
    z[..d].copy_from_slice(&params.cls_token);
    z[d..].copy_from_slice(&emb);
    z.iter_mut().zip(&params.pos_embed).for_each(|(v, p)| *v += p);
    let token_mask = dropout_mask(z.len(), cfg.dropout, &mut rng);
    apply_mask(&mut z, &token_mask);
    check_finite(&z, "patch embedding")?;

    let mut blocks = Vec::with_capacity(cfg.depth);
    for (bi, blk) in params.blocks.iter().enumerate() {
        let (a, ln1) = layernorm_forward(&z, &blk.ln1);
        let qkv = linear_forward(&a, &blk.qkv);
        let (o, attn) = attention_forward(&qkv, n, d, cfg.heads);
        let y = linear_forward(&o, &blk.proj);
        let keep1 = drop_path_scale(cfg.drop_path, &mut rng);
        let z1: Vec<f64> = z.iter().zip(&y).map(|(zv, yv)| zv + keep1 * yv).collect();
        check_finite(&z1, format!("block {bi} attention"))?;
        let (b, ln2) = layernorm_forward(&z1, &blk.ln2);
        let h1 = linear_forward(&b, &blk.fc1);
        let mut g: Vec<f64> = h1.iter().map(|&v| gelu(v)).collect();
        let g_mask = dropout_mask(g.len(), cfg.dropout, &mut rng);
        apply_mask(&mut g, &g_mask);
        let h2 = linear_forward(&g, &blk.fc2);
        let keep2 = drop_path_scale(cfg.drop_path, &mut rng);
        let z2: Vec<f64> = z1.iter().zip(&h2).map(|(zv, hv)| zv + keep2 * hv).collect();
        check_finite(&z2, format!("block {bi} mlp"))?;
        z = z2;
        blocks.push(BlockCache {
            a,
            ln1,
            qkv,
            attn,
            o,
            keep1,
            b,
            ln2,
            h1,
            g_mask,
            g,
            keep2,
        });
    }

    let (cls, lnf) = layernorm_forward(&z[..d], &params.ln_final);
    let nh = linear_forward(ncc, &params.ncc_proj);
    let mut hcat = cls;
    hcat.extend(nh.iter().map(|&v| gelu(v)));
    let logit = linear_forward(&hcat, &params.head)[0];
    check_finite(&[logit], "regression head")?;
    Ok(ForwardCache {
        patches,
        token_mask,
        blocks,
        lnf,
        ncc: ncc.to_vec(),
        nh,
        hcat,
        logit,
        output: sigmoid(logit),
    })
}

/// Inference score in `[0, 1]`.
pub fn predict(params: &VitParams, image: &[f64], ncc: &[f64]) -> Result<f64> {
    Ok(forward(params, image, ncc, None)?.output)
}

/// Gradient of a loss with respect to every parameter, given `dL/dlogit`.
pub fn backward(params: &VitParams, cache: &ForwardCache, dlogit: f64) -> VitParams {
    let cfg = &params.config;
    let (n, d) = (cfg.n_tokens(), cfg.embed_dim);
    let mut grad = params.zeros_like();

    let dh = linear_backward(&cache.hcat, &params.head, &[dlogit], &mut grad.head, true);
    let dnh: Vec<f64> = dh[d..].iter().zip(&cache.nh).map(|(g, &x)| g * gelu_grad(x)).collect();
    linear_backward(&cache.ncc, &params.ncc_proj, &dnh, &mut grad.ncc_proj, false);
    let dcls = layernorm_backward(&dh[..d], &cache.lnf, &params.ln_final, &mut grad.ln_final);

    let mut dz = vec![0.0; n * d];
    dz[..d].copy_from_slice(&dcls);
    for (bi, bc) in cache.blocks.iter().enumerate().rev() {
        let blk = &params.blocks[bi];
        let gb = &mut grad.blocks[bi];
        // dz is dL/dz2 here.
        let dh2: Vec<f64> = dz.iter().map(|v| v * bc.keep2).collect();
        let mut dg = linear_backward(&bc.g, &blk.fc2, &dh2, &mut gb.fc2, true);
        apply_mask(&mut dg, &bc.g_mask);
        let dh1: Vec<f64> = dg.iter().zip(&bc.h1).map(|(g, &x)| g * gelu_grad(x)).collect();
        let db = linear_backward(&bc.b, &blk.fc1, &dh1, &mut gb.fc1, true);
        let dz1_ln = layernorm_backward(&db, &bc.ln2, &blk.ln2, &mut gb.ln2);
        dz.iter_mut().zip(&dz1_ln).for_each(|(a, b)| *a += b);

        let dy: Vec<f64> = dz.iter().map(|v| v * bc.keep1).collect();
        let dout = linear_backward(&bc.o, &blk.proj, &dy, &mut gb.proj, true);
        let dqkv = attention_backward(&bc.qkv, &bc.attn, &dout, n, d, cfg.heads);
        let da = linear_backward(&bc.a, &blk.qkv, &dqkv, &mut gb.qkv, true);
        let dz_ln = layernorm_backward(&da, &bc.ln1, &blk.ln1, &mut gb.ln1);
        dz.iter_mut().zip(&dz_ln).for_each(|(a, b)| *a += b);
    }

    apply_mask(&mut dz, &cache.token_mask);
    grad.pos_embed.copy_from_slice(&dz);
    grad.cls_token.copy_from_slice(&dz[..d]);
    linear_backward(&cache.patches, &params.patch_embed, &dz[d..], &mut grad.patch_embed, false);
    grad
}

/// Squared error of one sample and its parameter gradient.
pub fn loss_and_grad(
    params: &VitParams,
    image: &[f64],
    ncc: &[f64],
    target: f64,
    dropout_seed: Option<u64>,
) -> Result<(f64, VitParams)> {
    let cache = forward(params, image, ncc, dropout_seed)?;
    let y = cache.output;
    let loss = (y - target) * (y - target);
    let dlogit = 2.0 * (y - target) * y * (1.0 - y);
    let grad = backward(params, &cache, dlogit);
    if !grad.all_finite() {
        return Err(Error::Numeric {
            layer: "backward".into(),
            detail: "gradient contains non-finite values".into(),
        });
    }
    Ok((loss, grad))
}

/// Mean squared error over a batch of `(image, ncc, target)` and its
/// gradient, inference mode. Per-sample work runs in parallel; gradients are
/// summed in batch order.
pub fn batch_loss_and_grad(params: &VitParams, batch: &[(&[f64], &[f64], f64)]) -> Result<(f64, VitParams)> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    let results: Vec<Result<(f64, VitParams)>> = batch
        .par_iter()
        .map(|&(image, ncc, target)| loss_and_grad(params, image, ncc, target, None))
        .collect();
    let mut loss = 0.0;
    let mut grad = params.zeros_like();
    for r in results {
        let (l, g) = r?;
        loss += l;
        grad.add_assign(&g);
    }
    let k = 1.0 / batch.len() as f64;
    grad.scale(k);
    Ok((loss * k, grad))
}
