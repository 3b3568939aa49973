mod common;

use modispi::predictor::vit::{
    batch_loss_and_grad, forward, loss_and_grad, predict, train, TrainConfig, VitConfig, VitParams,
};

/// Straight-line forward pass written with explicit 2-D indexing.
fn oracle(p: &VitParams, image: &[f64], ncc: &[f64]) -> f64 {
    let c = &p.config;
    let (s, ps, d) = (c.image_size, c.patch_size, c.embed_dim);
    let side = s / ps;
    let n = side * side + 1;
    let dense = |x: &[f64], w: &[f64], b: &[f64], out: usize| -> Vec<f64> {
        let inp = x.len();
        (0..out)
            .map(|o| b[o] + (0..inp).map(|i| w[o * inp + i] * x[i]).sum::<f64>())
            .collect()
    };
    let norm = |x: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / x.len() as f64;
        x.iter().enumerate().map(|(j, a)| (a - m) / (v + 1e-6).sqrt() * g[j] + b[j]).collect()
    };
    let gelu = |x: f64| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());

    let mut tokens: Vec<Vec<f64>> = vec![p.cls_token.clone()];
    for pr in 0..side {
        for pc in 0..side {
            let mut v = Vec::new();
            for ch in 0..c.channels {
                for i in 0..ps {
                    for j in 0..ps {
                        v.push(image[ch * s * s + (pr * ps + i) * s + pc * ps + j]);
                    }
                }
            }
            tokens.push(dense(&v, &p.patch_embed.w, &p.patch_embed.b, d));
        }
    }
    for (t, tok) in tokens.iter_mut().enumerate() {
        for j in 0..d {
            tok[j] += p.pos_embed[t * d + j];
        }
    }
    let dh = d / c.heads;
    for blk in &p.blocks {
        let a: Vec<Vec<f64>> = tokens.iter().map(|t| norm(t, &blk.ln1.gamma, &blk.ln1.beta)).collect();
        let qkv: Vec<Vec<f64>> = a.iter().map(|t| dense(t, &blk.qkv.w, &blk.qkv.b, 3 * d)).collect();
        let mut att = vec![vec![0.0; d]; n];
        for h in 0..c.heads {
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| (0..dh).map(|e| qkv[i][h * dh + e] * qkv[j][d + h * dh + e]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|v| (v - mx).exp()).sum();
                for j in 0..n {
                    let w = (scores[j] - mx).exp() / z;
                    for e in 0..dh {
                        att[i][h * dh + e] += w * qkv[j][2 * d + h * dh + e];
                    }
                }
            }
        }
        for i in 0..n {
            let y = dense(&att[i], &blk.proj.w, &blk.proj.b, d);
            for j in 0..d {
                tokens[i][j] += y[j];
            }
            let b = norm(&tokens[i], &blk.ln2.gamma, &blk.ln2.beta);
            let h: Vec<f64> = dense(&b, &blk.fc1.w, &blk.fc1.b, blk.fc1.out_dim).into_iter().map(gelu).collect();
            let y = dense(&h, &blk.fc2.w, &blk.fc2.b, d);
            for j in 0..d {
                tokens[i][j] += y[j];
            }
        }
    }
    let mut feat = norm(&tokens[0], &p.ln_final.gamma, &p.ln_final.beta);
    feat.extend(dense(ncc, &p.ncc_proj.w, &p.ncc_proj.b, c.ncc_embed_dim).into_iter().map(gelu));
    let logit = dense(&feat, &p.head.w, &p.head.b, 1)[0];
    1.0 / (1.0 + (-logit).exp())
}

/// Random non-trivial parameters: every tensor perturbed, LayerNorm included.
fn busy_params(cfg: &VitConfig, seed: u64) -> VitParams {
    let mut p = VitParams::init(cfg, seed);
    for (k, t) in p.tensors_mut().into_iter().enumerate() {
        for (i, v) in t.iter_mut().enumerate() {
            *v += 0.05 * (((k * 131 + i * 17) % 23) as f64 / 11.0 - 1.0);
        }
    }
    p
}

#[test]
fn forward_matches_naive_oracle() {
    let cfg = VitConfig::tiny();
    for seed in 0..4 {
        let p = busy_params(&cfg, seed);
        for (img, ncc, _) in common::random_samples(&cfg, 3, seed + 10) {
            let a = predict(&p, &img, &ncc).unwrap();
            let b = oracle(&p, &img, &ncc);
            assert!((a - b).abs() < 1e-5, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn swapping_patches_with_positions_keeps_output() {
    let cfg = VitConfig::tiny();
    let mut p = busy_params(&cfg, 2);
    let (img, ncc, _) = common::random_samples(&cfg, 1, 3).remove(0);
    let before = predict(&p, &img, &ncc).unwrap();

    // swap patches 0 and 3 (tokens 1 and 4) in the image and in the position table
    let (s, ps, d) = (cfg.image_size, cfg.patch_size, cfg.embed_dim);
    let side = s / ps;
    let origin = |k: usize| ((k / side) * ps, (k % side) * ps);
    let mut swapped = img.clone();
    let ((r0, c0), (r1, c1)) = (origin(0), origin(3));
    for ch in 0..cfg.channels {
        for i in 0..ps {
            for j in 0..ps {
                let a = ch * s * s + (r0 + i) * s + c0 + j;
                let b = ch * s * s + (r1 + i) * s + c1 + j;
                swapped.swap(a, b);
            }
        }
    }
    for j in 0..d {
        p.pos_embed.swap(d + j, 4 * d + j);
    }
    let after = predict(&p, &swapped, &ncc).unwrap();
    assert!((before - after).abs() < 1e-12, "{before} vs {after}");
}

#[test]
fn zero_head_predicts_one_half() {
    let cfg = VitConfig::tiny();
    let mut p = busy_params(&cfg, 5);
    p.head.w.iter_mut().for_each(|v| *v = 0.0);
    p.head.b[0] = 0.0;
    for (img, ncc, _) in common::random_samples(&cfg, 4, 6) {
        assert_eq!(predict(&p, &img, &ncc).unwrap(), 0.5);
    }
}

#[test]
fn head_bias_gradient_closed_form() {
    let cfg = VitConfig::tiny();
    let p = busy_params(&cfg, 8);
    for (img, ncc, t) in common::random_samples(&cfg, 3, 9) {
        let y = forward(&p, &img, &ncc, None).unwrap().output;
        let (loss, g) = loss_and_grad(&p, &img, &ncc, t, None).unwrap();
        assert!((loss - (y - t).powi(2)).abs() < 1e-15);
        let want = 2.0 * (y - t) * y * (1.0 - y);
        assert!((g.head.b[0] - want).abs() < 1e-14, "{} vs {want}", g.head.b[0]);
    }
}

#[test]
fn duplicated_batch_has_same_mean_gradient() {
    let cfg = VitConfig::tiny();
    let p = busy_params(&cfg, 1);
    let batch = common::random_samples(&cfg, 2, 4);
    let refs: Vec<(&[f64], &[f64], f64)> = batch.iter().map(|(i, n, t)| (i.as_slice(), n.as_slice(), *t)).collect();
    let doubled: Vec<_> = refs.iter().chain(refs.iter()).cloned().collect();
    let (l1, g1) = batch_loss_and_grad(&p, &refs).unwrap();
    let (l2, g2) = batch_loss_and_grad(&p, &doubled).unwrap();
    assert!((l1 - l2).abs() < 1e-15);
    for ((name, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-3), "{name}: {x} vs {y}");
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let cfg = VitConfig::tiny();
    let samples = common::train_samples(&cfg, common::random_samples(&cfg, 6, 2));
    let init = VitParams::init(&cfg, 4);
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 2,
        learning_rate: 0.0,
        weight_decay: 0.0,
        val_fraction: 0.0,
        ..TrainConfig::default()
    };
    let out = train(init.clone(), &samples, &tc).unwrap();
    assert_eq!(out.params, init);
    let losses: Vec<f64> = out.curve.iter().map(|e| e.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
}

#[test]
fn training_is_bit_reproducible_with_dropout() {
    let cfg = VitConfig {
        dropout: 0.1,
        drop_path: 0.1,
        ..VitConfig::tiny()
    };
    let samples = common::train_samples(&cfg, common::random_samples(&cfg, 10, 12));
    let tc = TrainConfig {
        epochs: 4,
        batch_size: 3,
        learning_rate: 1e-3,
        seed: 17,
        val_fraction: 0.2,
        ..TrainConfig::default()
    };
    let a = train(VitParams::init(&cfg, 1), &samples, &tc).unwrap();
    let b = train(VitParams::init(&cfg, 1), &samples, &tc).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.val_indices, b.val_indices);
    assert_eq!(a.val_indices.len(), 2);
}

#[test]
fn output_is_a_probability_for_extreme_inputs() {
    let cfg = VitConfig::tiny();
    let p = busy_params(&cfg, 3);
    let len = cfg.channels * cfg.image_size * cfg.image_size;
    for scale in [0.0, 1.0, 1e3, -1e3, 1e6] {
        let img: Vec<f64> = (0..len).map(|i| scale * ((i % 7) as f64 - 3.0)).collect();
        let ncc = vec![scale; cfg.ncc_len()];
        let y = predict(&p, &img, &ncc).unwrap();
        assert!((0.0..=1.0).contains(&y), "scale {scale}: {y}");
    }
}
