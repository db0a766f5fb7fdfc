//! Forward building blocks of the asynchronous steering model.
//!
//! Every function appends to a caller-owned tape so a whole sequence unrolls
//! into one differentiable graph. Feature maps are `[channels, width, height]`
//! with the same x-major convention as [`crate::event::GrayImage`].

use crate::event::GrayImage;
use crate::nn::layers::gru_cell;
use crate::nn::tape::{Tape, Var};
use crate::nn::{BoundParams, Tensor};

use super::config::{PipelineConfig, PipelineError};
use super::params::gru_names;

/// Encode a gray-scale frame into the image-specific feature tensor
/// `[channels, width, height]`. Three same-padding 3x3 convolutions with
/// ReLU, so spatial dimensions are preserved.
pub fn aps_encode(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &PipelineConfig,
    frame: &GrayImage,
) -> Result<Var, PipelineError> {
    if frame.width() != cfg.width || frame.height() != cfg.height {
        return Err(PipelineError::Config(format!(
            "frame is {}x{}, config wants {}x{}",
            frame.width(),
            frame.height(),
            cfg.width,
            cfg.height
        )));
    }
    let input = tape.constant(
        frame
            .to_tensor()
            .reshaped(&[1, cfg.width, cfg.height])
            .expect("frame reshape"),
    );
    let mut x = input;
    for i in 1..=3 {
        let w = bp.var(&format!("enc.conv{i}.w"));
        let b = bp.var(&format!("enc.conv{i}.b"));
        let c = tape.conv2d(x, w, Some(b), 1, 1)?;
        x = tape.relu(c);
    }
    Ok(x)
}

/// Compress one event matrix into the timestamp-specific vector `[q]`.
///
/// The event matrix `[w, h]` is projected twice (`L1 = M A1`, `L3 = M A2`),
/// the first projection is contracted with the latest-angle vector
/// (`L2 = L1 a`), a softmax over `L2` yields per-column attention weights,
/// and the output is the attention-weighted sum of the rows of `L3`
/// (`T = L3' v`), which has the required length q.
pub fn event_feature_extract(
    tape: &mut Tape,
    bp: &BoundParams,
    matrix: Var,
    angles: Var,
) -> Result<Var, PipelineError> {
    let l1 = tape.matmul(matrix, bp.var("efe.a1"))?;
    let l2 = tape.matvec(l1, angles)?;
    let l3 = tape.matmul(matrix, bp.var("efe.a2"))?;
    let v = tape.softmax(l2)?;
    let l3t = tape.transpose(l3)?;
    let t = tape.matvec(l3t, v)?;
    Ok(t)
}

/// One recurrent step over a timestamp-specific vector. Called exactly once
/// per distinct event timestamp; this is the asynchronous contract.
pub fn gru_step(
    tape: &mut Tape,
    bp: &BoundParams,
    t: Var,
    hidden: Var,
) -> Result<Var, PipelineError> {
    Ok(gru_cell(tape, bp, &gru_names(), t, hidden)?)
}

/// Channel-wise and spatial-wise attention over the image features.
///
/// Channel weights come from a one-hidden-layer map of the pooled features
/// concatenated with the GRU hidden state; spatial weights from a
/// one-hidden-layer map of each position's channel vector plus a projection
/// of the hidden state. Both softmax distributions are rescaled by their
/// support size, so uniform attention leaves the features unchanged.
pub fn cs_attention(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &PipelineConfig,
    features: Var,
    hidden: Var,
) -> Result<Var, PipelineError> {
    let (c, w, h) = (cfg.channels, cfg.width, cfg.height);

    // Channel branch.
    let pooled = tape.spatial_mean(features)?;
    let ch_in = tape.concat(pooled, hidden)?;
    let z1_pre = tape.matvec(bp.var("att.ch.w1"), ch_in)?;
    let z1_b = tape.add(z1_pre, bp.var("att.ch.b1"))?;
    let z1 = tape.tanh(z1_b);
    let cs_pre = tape.matvec(bp.var("att.ch.w2"), z1)?;
    let cs = tape.add(cs_pre, bp.var("att.ch.b2"))?;
    let beta = tape.softmax(cs)?;
    let beta_scaled = tape.scale(beta, c as f64);
    let beta_map = tape.broadcast_channel(beta_scaled, w, h)?;
    let by_channel = tape.mul(features, beta_map)?;

    // Spatial branch reads the original features.
    let flat = tape.reshape(features, &[c, w * h])?;
    let positions = tape.transpose(flat)?; // [w*h, c]
    let s1 = tape.matmul(positions, bp.var("att.sp.wp"))?; // [w*h, k]
    let hk = tape.matvec(bp.var("att.sp.wh"), hidden)?;
    let hk_b = tape.add(hk, bp.var("att.sp.b1"))?;
    let rows_pre = tape.add_row_bias(s1, hk_b)?;
    let rows = tape.tanh(rows_pre);
    let scores = tape.matvec(rows, bp.var("att.sp.w2"))?; // [w*h]
    let alpha = tape.softmax(scores)?;
    let alpha_scaled = tape.scale(alpha, (w * h) as f64);
    let alpha_map = tape.broadcast_spatial(alpha_scaled, c, w, h)?;
    let ft = tape.mul(by_channel, alpha_map)?;
    Ok(ft)
}

/// Attention weights of one pass, for inspection in tests and tooling.
pub struct AttentionWeights {
    pub channel: Tensor,
    pub spatial: Tensor,
}

/// As [`cs_attention`] but also returns the raw softmax distributions.
pub fn cs_attention_with_weights(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &PipelineConfig,
    features: Var,
    hidden: Var,
) -> Result<(Var, AttentionWeights), PipelineError> {
    // Recompute the branch heads on the same tape to expose beta and alpha.
    let pooled = tape.spatial_mean(features)?;
    let ch_in = tape.concat(pooled, hidden)?;
    let z1_pre = tape.matvec(bp.var("att.ch.w1"), ch_in)?;
    let z1_b = tape.add(z1_pre, bp.var("att.ch.b1"))?;
    let z1 = tape.tanh(z1_b);
    let cs_pre = tape.matvec(bp.var("att.ch.w2"), z1)?;
    let cs = tape.add(cs_pre, bp.var("att.ch.b2"))?;
    let beta = tape.softmax(cs)?;

    let flat = tape.reshape(features, &[cfg.channels, cfg.width * cfg.height])?;
    let positions = tape.transpose(flat)?;
    let s1 = tape.matmul(positions, bp.var("att.sp.wp"))?;
    let hk = tape.matvec(bp.var("att.sp.wh"), hidden)?;
    let hk_b = tape.add(hk, bp.var("att.sp.b1"))?;
    let rows_pre = tape.add_row_bias(s1, hk_b)?;
    let rows = tape.tanh(rows_pre);
    let scores = tape.matvec(rows, bp.var("att.sp.w2"))?;
    let alpha = tape.softmax(scores)?;

    let ft = cs_attention(tape, bp, cfg, features, hidden)?;
    Ok((
        ft,
        AttentionWeights {
            channel: tape.value(beta).clone(),
            spatial: tape.value(alpha).clone(),
        },
    ))
}

/// Mask generation: flatten the attended features, concatenate the
/// interval-aligned timestamp vector, and run a two-layer MLP whose sigmoid
/// output is the mask `S`. Returns `(S, Y)` with `Y = S .* G`.
pub fn generate_mask(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &PipelineConfig,
    attended: Var,
    t_z: Var,
    frame: &GrayImage,
) -> Result<(Var, Var), PipelineError> {
    let f = tape.reshape(attended, &[cfg.flat_feature_len()])?;
    let x = tape.concat(f, t_z)?;
    let hid_pre = tape.matvec(bp.var("mask.w1"), x)?;
    let hid_b = tape.add(hid_pre, bp.var("mask.b1"))?;
    let hid = tape.relu(hid_b);
    let logits_pre = tape.matvec(bp.var("mask.w2"), hid)?;
    let logits = tape.add(logits_pre, bp.var("mask.b2"))?;
    let s_flat = tape.sigmoid(logits);
    let s = tape.reshape(s_flat, &[cfg.width, cfg.height])?;
    let g = tape.constant(frame.to_tensor());
    let y = tape.mul(s, g)?;
    Ok((s, y))
}

/// Map an input map `[in_c, w, h]` to a scalar steering angle in degrees:
/// a conv stem, stride-2 residual blocks, global average pooling, and a
/// linear head.
pub fn regress_angle(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &PipelineConfig,
    input: Var,
) -> Result<Var, PipelineError> {
    let stem = tape.conv2d(input, bp.var("reg.stem.w"), Some(bp.var("reg.stem.b")), 1, 1)?;
    let mut x = tape.relu(stem);
    for i in 1..=cfg.reg_blocks.len() {
        let p = format!("reg.block{i}");
        let c1 = tape.conv2d(x, bp.var(&format!("{p}.conv1.w")), Some(bp.var(&format!("{p}.conv1.b"))), 2, 1)?;
        let r1 = tape.relu(c1);
        let c2 = tape.conv2d(r1, bp.var(&format!("{p}.conv2.w")), Some(bp.var(&format!("{p}.conv2.b"))), 1, 1)?;
        let skip = tape.conv2d(x, bp.var(&format!("{p}.skip.w")), None, 2, 0)?;
        let sum = tape.add(c2, skip)?;
        x = tape.relu(sum);
    }
    let pooled = tape.spatial_mean(x)?;
    let d_pre = tape.matvec(bp.var("reg.head.w"), pooled)?;
    let d_raw = tape.add(d_pre, bp.var("reg.head.b"))?;
    Ok(tape.scale(d_raw, cfg.output_scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, ParamSet};
    use crate::pipeline::params::{build_params, ModelKind};

    fn zeroed(params: &ParamSet) -> ParamSet {
        let mut z = params.clone();
        for (_, t) in z.iter_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    #[test]
    fn encoder_zero_image_zero_bias_gives_zero_features() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 1).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let frame = GrayImage::filled(cfg.width, cfg.height, 0.0);
        let out = aps_encode(&mut tape, &bp, &cfg, &frame).unwrap();
        assert_eq!(tape.value(out).shape(), &[cfg.channels, cfg.width, cfg.height]);
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_shape_contract_and_resolution_check() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 2).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let frame = GrayImage::filled(cfg.width, cfg.height, 0.37);
        let out = aps_encode(&mut tape, &bp, &cfg, &frame).unwrap();
        assert_eq!(tape.value(out).shape(), &[cfg.channels, cfg.width, cfg.height]);

        let wrong = GrayImage::filled(cfg.width + 1, cfg.height, 0.5);
        assert!(aps_encode(&mut tape, &bp, &cfg, &wrong).is_err());
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let cfg = PipelineConfig::toy();
        // Seed chosen so no ReLU pre-activation sits within the fd step of
        // zero; a kink crossing would corrupt the numeric estimate.
        let params = build_params(&cfg, ModelKind::Asynchronous, 0).unwrap();
        let frame = {
            let mut f = GrayImage::filled(cfg.width, cfg.height, 0.2);
            for x in 0..cfg.width {
                f.set(x, 3, (x as f64) / cfg.width as f64);
            }
            f
        };
        let cfg2 = cfg.clone();
        let report = grad_check(&params, 1e-4, move |tape, bp| {
            let out = aps_encode(tape, bp, &cfg2, &frame).map_err(box_nn)?;
            let sq = tape.mul(out, out)?;
            Ok(tape.mean_all(sq))
        })
        .unwrap();
        // Only encoder parameters matter here; the rest receive zero grads.
        let enc_max = report
            .entries
            .iter()
            .filter(|(n, _)| n.starts_with("enc."))
            .map(|(_, e)| *e)
            .fold(0.0, f64::max);
        assert!(enc_max < 1e-4, "encoder max rel {enc_max}");
    }

    fn box_nn(e: PipelineError) -> crate::nn::NnError {
        match e {
            PipelineError::Nn(inner) => inner,
            other => crate::nn::NnError::ShapeMismatch {
                op: "pipeline",
                detail: other.to_string(),
            },
        }
    }

    #[test]
    fn efe_zero_matrix_gives_zero_vector() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 4).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let m = tape.constant(Tensor::zeros(&[cfg.width, cfg.height]));
        let a = tape.constant(Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0]));
        let t = event_feature_extract(&mut tape, &bp, m, a).unwrap();
        assert_eq!(tape.value(t).shape(), &[cfg.history_len]);
        assert!(tape.value(t).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn efe_single_row_passes_through() {
        // Width 1: softmax over one score is [1], so T equals the only row
        // of L3 = M A2 exactly.
        let mut cfg = PipelineConfig::toy();
        cfg.width = 1;
        cfg.height = 3;
        cfg.history_len = 2;
        let params = build_params(&cfg, ModelKind::Asynchronous, 5).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let m_data = vec![1.0, -1.0, 0.0];
        let m = tape.constant(Tensor::new(vec![1, 3], m_data.clone()).unwrap());
        let a = tape.constant(Tensor::from_vec(vec![0.7, -0.3]));
        let t = event_feature_extract(&mut tape, &bp, m, a).unwrap();

        let a2 = params.get("efe.a2").unwrap();
        for j in 0..2 {
            let want: f64 = (0..3).map(|y| m_data[y] * a2.at2(y, j)).sum();
            let got = tape.value(t).data()[j];
            assert!((got - want).abs() < 1e-15);
        }
    }

    /// Independent scalar implementation of the five extraction steps.
    pub(crate) fn efe_scalar_oracle(
        m: &Tensor,
        a1: &Tensor,
        a2: &Tensor,
        angles: &[f64],
    ) -> Vec<f64> {
        let (w, h) = (m.shape()[0], m.shape()[1]);
        let q = a1.shape()[1];
        // L1 = M A1
        let mut l1 = vec![0.0; w * q];
        for x in 0..w {
            for j in 0..q {
                for y in 0..h {
                    l1[x * q + j] += m.at2(x, y) * a1.at2(y, j);
                }
            }
        }
        // L2 = L1 a
        let mut l2 = vec![0.0; w];
        for x in 0..w {
            for j in 0..q {
                l2[x] += l1[x * q + j] * angles[j];
            }
        }
        // L3 = M A2
        let mut l3 = vec![0.0; w * q];
        for x in 0..w {
            for j in 0..q {
                for y in 0..h {
                    l3[x * q + j] += m.at2(x, y) * a2.at2(y, j);
                }
            }
        }
        // v = softmax(L2)
        let max = l2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = l2.iter().map(|&s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let v: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
        // T = column-weighted reduction of L3 by v
        let mut t = vec![0.0; q];
        for j in 0..q {
            for x in 0..w {
                t[j] += l3[x * q + j] * v[x];
            }
        }
        t
    }

    #[test]
    fn efe_matches_scalar_oracle() {
        use rand::{Rng, SeedableRng};
        let mut cfg = PipelineConfig::toy();
        cfg.width = 4;
        cfg.height = 3;
        cfg.history_len = 2;
        let params = build_params(&cfg, ModelKind::Asynchronous, 6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(60);
        for _ in 0..20 {
            let m_data: Vec<f64> = (0..12)
                .map(|_| [-1.0, 0.0, 1.0][rng.gen_range(0..3)])
                .collect();
            let m_t = Tensor::new(vec![4, 3], m_data).unwrap();
            let angles: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();

            let mut tape = Tape::new();
            let bp = params.bind(&mut tape);
            let m = tape.constant(m_t.clone());
            let a = tape.constant(Tensor::from_vec(angles.clone()));
            let t = event_feature_extract(&mut tape, &bp, m, a).unwrap();

            let want = efe_scalar_oracle(
                &m_t,
                params.get("efe.a1").unwrap(),
                params.get("efe.a2").unwrap(),
                &angles,
            );
            for (got, want) in tape.value(t).data().iter().zip(&want) {
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn attention_uniform_features_zero_params_is_identity() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 7).unwrap();
        let mut zeroed_att = params.clone();
        for (name, t) in zeroed_att.iter_mut() {
            if name.starts_with("att.") {
                t.data_mut().fill(0.0);
            }
        }
        let mut tape = Tape::new();
        let bp = zeroed_att.bind(&mut tape);
        let features = tape.constant(Tensor::filled(
            &[cfg.channels, cfg.width, cfg.height],
            0.625,
        ));
        let hidden = tape.constant(Tensor::from_vec(vec![0.3; cfg.hidden_dim]));
        let ft = cs_attention(&mut tape, &bp, &cfg, features, hidden).unwrap();
        for (a, b) in tape.value(ft).data().iter().zip(tape.value(features).data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 8).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let mut data = vec![0.0; cfg.flat_feature_len()];
        for (i, v) in data.iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f64 / 11.0;
        }
        let features =
            tape.constant(Tensor::new(vec![cfg.channels, cfg.width, cfg.height], data).unwrap());
        let hidden = tape.constant(Tensor::from_vec(
            (0..cfg.hidden_dim).map(|i| (i as f64 * 0.11).sin()).collect(),
        ));
        let (_, weights) =
            cs_attention_with_weights(&mut tape, &bp, &cfg, features, hidden).unwrap();
        let sb: f64 = weights.channel.data().iter().sum();
        let sa: f64 = weights.spatial.data().iter().sum();
        assert!((sb - 1.0).abs() < 1e-12);
        assert!((sa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut cfg = PipelineConfig::toy();
        cfg.width = 4;
        cfg.height = 3;
        cfg.channels = 2;
        cfg.hidden_dim = 3;
        let mut params = build_params(&cfg, ModelKind::Asynchronous, 9).unwrap();
        // The score heads start at zero; give them structure so the check
        // exercises the softmax branches rather than a flat region.
        for (name, t) in params.iter_mut() {
            if name == "att.ch.w2" || name == "att.sp.w2" {
                for (i, v) in t.data_mut().iter_mut().enumerate() {
                    *v = 0.2 * ((i as f64) * 0.7).sin();
                }
            }
        }
        let cfg2 = cfg.clone();
        let report = grad_check(&params, 1e-4, move |tape, bp| {
            let mut data = vec![0.0; cfg2.flat_feature_len()];
            for (i, v) in data.iter_mut().enumerate() {
                *v = ((i as f64) * 0.23).cos() * 0.5 + 0.5;
            }
            let features = tape.constant(
                Tensor::new(vec![cfg2.channels, cfg2.width, cfg2.height], data).unwrap(),
            );
            let hidden = tape.constant(Tensor::from_vec(vec![0.4, -0.2, 0.9]));
            let ft = cs_attention(tape, bp, &cfg2, features, hidden).map_err(box_nn)?;
            let sq = tape.mul(ft, ft)?;
            Ok(tape.mean_all(sq))
        })
        .unwrap();
        let att_max = report
            .entries
            .iter()
            .filter(|(n, _)| n.starts_with("att."))
            .map(|(_, e)| *e)
            .fold(0.0, f64::max);
        assert!(att_max < 1e-4, "attention max rel {att_max}");
    }

    #[test]
    fn mask_zero_logits_is_half_gray() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 10).unwrap();
        let zero = zeroed(&params);
        let mut tape = Tape::new();
        let bp = zero.bind(&mut tape);
        let frame = GrayImage::filled(cfg.width, cfg.height, 0.8);
        let attended = tape.constant(Tensor::filled(
            &[cfg.channels, cfg.width, cfg.height],
            0.1,
        ));
        let t_z = tape.constant(Tensor::zeros(&[cfg.history_len]));
        let (s, y) = generate_mask(&mut tape, &bp, &cfg, attended, t_z, &frame).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| v == 0.5));
        assert!(tape.value(y).data().iter().all(|&v| v == 0.4));
    }

    #[test]
    fn mask_stays_in_open_unit_interval() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 11).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let frame = GrayImage::filled(cfg.width, cfg.height, 1.0);
        let attended = tape.constant(Tensor::filled(
            &[cfg.channels, cfg.width, cfg.height],
            50.0,
        ));
        let t_z = tape.constant(Tensor::from_vec(vec![-40.0, 40.0, 0.0, 13.0]));
        let (s, y) = generate_mask(&mut tape, &bp, &cfg, attended, t_z, &frame).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| v > 0.0 && v < 1.0));
        // Y = S .* G exactly.
        for (yv, sv) in tape.value(y).data().iter().zip(tape.value(s).data()) {
            assert_eq!(yv, sv);
        }
    }

    #[test]
    fn mask_gradients_match_finite_differences() {
        let mut cfg = PipelineConfig::toy();
        cfg.width = 4;
        cfg.height = 3;
        cfg.channels = 2;
        cfg.mask_hidden = 5;
        cfg.history_len = 3;
        let params = build_params(&cfg, ModelKind::Asynchronous, 12).unwrap();
        let cfg2 = cfg.clone();
        let report = grad_check(&params, 1e-4, move |tape, bp| {
            let frame = GrayImage::filled(cfg2.width, cfg2.height, 0.6);
            let attended = tape.constant(Tensor::from_vec(
                (0..cfg2.flat_feature_len())
                    .map(|i| ((i as f64) * 0.31).sin())
                    .collect::<Vec<_>>(),
            ));
            let attended =
                tape.reshape(attended, &[cfg2.channels, cfg2.width, cfg2.height])?;
            let t_z = tape.constant(Tensor::from_vec(vec![0.5, -1.0, 2.0]));
            let (_, y) = generate_mask(tape, bp, &cfg2, attended, t_z, &frame).map_err(box_nn)?;
            let sq = tape.mul(y, y)?;
            Ok(tape.mean_all(sq))
        })
        .unwrap();
        let mask_max = report
            .entries
            .iter()
            .filter(|(n, _)| n.starts_with("mask."))
            .map(|(_, e)| *e)
            .fold(0.0, f64::max);
        assert!(mask_max < 1e-4, "mask max rel {mask_max}");
    }

    #[test]
    fn regressor_zero_input_fresh_init_outputs_zero() {
        // All biases start at zero, so a zero image propagates to D = 0.
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 13).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let y = tape.constant(Tensor::zeros(&[1, cfg.width, cfg.height]));
        let d = regress_angle(&mut tape, &bp, &cfg, y).unwrap();
        assert_eq!(tape.value(d).item(), 0.0);
    }

    #[test]
    fn regressor_outputs_finite_scalar() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::SyncHistogram, 14).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let y = tape.constant(Tensor::filled(&[3, cfg.width, cfg.height], 0.7));
        let d = regress_angle(&mut tape, &bp, &cfg, y).unwrap();
        assert_eq!(tape.value(d).shape(), &[1]);
        assert!(tape.value(d).item().is_finite());
    }

    #[test]
    fn residual_block_gradients_match_finite_differences() {
        let mut cfg = PipelineConfig::toy();
        cfg.width = 6;
        cfg.height = 4;
        cfg.reg_stem = 3;
        cfg.reg_blocks = vec![4];
        let params = build_params(&cfg, ModelKind::ApsOnly, 15).unwrap();
        let cfg2 = cfg.clone();
        let report = grad_check(&params, 1e-4, move |tape, bp| {
            let y = tape.constant(Tensor::from_vec(
                (0..cfg2.width * cfg2.height)
                    .map(|i| ((i as f64) * 0.47).sin() * 0.5 + 0.5)
                    .collect::<Vec<_>>(),
            ));
            let y = tape.reshape(y, &[1, cfg2.width, cfg2.height])?;
            let d = regress_angle(tape, bp, &cfg2, y).map_err(box_nn)?;
            let sq = tape.mul(d, d)?;
            Ok(tape.sum_all(sq))
        })
        .unwrap();
        assert!(report.passed(), "max rel {}", report.max_rel);
    }
}
