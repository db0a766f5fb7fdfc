//! Parameter registration for the asynchronous model and the two
//! synchronous comparators. Registration order is fixed, so a seed fully
//! determines every initial weight.

use crate::nn::init::{self, InitRng};
use crate::nn::layers::{register_gru, GruNames};
use crate::nn::{NnError, ParamSet};

use super::config::PipelineConfig;

/// Which model a parameter set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Full asynchronous pipeline (events per timestamp + attention mask).
    Asynchronous,
    /// Synchronous comparator: `[h+, h-, G]` three-channel regression.
    SyncHistogram,
    /// Gray-scale-only ablation: `G` through the same regressor.
    ApsOnly,
}

impl ModelKind {
    pub fn regressor_in_channels(&self) -> usize {
        match self {
            ModelKind::Asynchronous => 1,
            ModelKind::SyncHistogram => 3,
            ModelKind::ApsOnly => 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Asynchronous => "asynchronous",
            ModelKind::SyncHistogram => "sync_histogram",
            ModelKind::ApsOnly => "aps_only",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "asynchronous" | "async" => Ok(ModelKind::Asynchronous),
            "sync_histogram" | "sync" => Ok(ModelKind::SyncHistogram),
            "aps_only" | "aps" => Ok(ModelKind::ApsOnly),
            other => Err(format!("unknown model kind '{other}'")),
        }
    }
}

pub const GRU_PREFIX: &str = "gru";

pub fn gru_names() -> GruNames {
    GruNames::new(GRU_PREFIX)
}

/// Build an initialized parameter set for `kind` under `cfg`, deterministic
/// in `seed`.
pub fn build_params(
    cfg: &PipelineConfig,
    kind: ModelKind,
    seed: u64,
) -> Result<ParamSet, NnError> {
    let mut rng = init::seeded_rng(seed);
    let mut params = ParamSet::new();
    if kind == ModelKind::Asynchronous {
        register_encoder(&mut params, cfg, &mut rng)?;
        register_efe(&mut params, cfg, &mut rng)?;
        register_gru(&mut params, GRU_PREFIX, cfg.history_len, cfg.hidden_dim, &mut rng)?;
        register_attention(&mut params, cfg, &mut rng)?;
        register_mask(&mut params, cfg, &mut rng)?;
    }
    register_regressor(&mut params, cfg, kind.regressor_in_channels(), &mut rng)?;
    Ok(params)
}

fn register_encoder(
    params: &mut ParamSet,
    cfg: &PipelineConfig,
    rng: &mut InitRng,
) -> Result<(), NnError> {
    let [e1, e2] = cfg.encoder_widths;
    let stages = [(1, e1), (e1, e2), (e2, cfg.channels)];
    for (i, (c_in, c_out)) in stages.into_iter().enumerate() {
        params.insert(
            format!("enc.conv{}.w", i + 1),
            init::glorot_conv(c_out, c_in, 3, 3, rng),
        )?;
        params.insert(format!("enc.conv{}.b", i + 1), init::zeros(&[c_out]))?;
    }
    Ok(())
}

fn register_efe(
    params: &mut ParamSet,
    cfg: &PipelineConfig,
    rng: &mut InitRng,
) -> Result<(), NnError> {
    // Both projections map the h-sized matrix rows into q columns.
    params.insert(
        "efe.a1",
        init::glorot(&[cfg.height, cfg.history_len], cfg.height, cfg.history_len, rng),
    )?;
    params.insert(
        "efe.a2",
        init::glorot(&[cfg.height, cfg.history_len], cfg.height, cfg.history_len, rng),
    )?;
    Ok(())
}

fn register_attention(
    params: &mut ParamSet,
    cfg: &PipelineConfig,
    rng: &mut InitRng,
) -> Result<(), NnError> {
    let (c, dh, k) = (cfg.channels, cfg.hidden_dim, cfg.attention_dim);
    params.insert("att.ch.w1", init::glorot_matrix(k, c + dh, rng))?;
    params.insert("att.ch.b1", init::zeros(&[k]))?;
    // Score heads start at zero: attention is uniform (the identity
    // rescaling) on the first steps and sharpens as training picks it up.
    params.insert("att.ch.w2", init::zeros(&[c, k]))?;
    params.insert("att.ch.b2", init::zeros(&[c]))?;
    params.insert("att.sp.wp", init::glorot_matrix(c, k, rng))?;
    params.insert("att.sp.wh", init::glorot_matrix(k, dh, rng))?;
    params.insert("att.sp.b1", init::zeros(&[k]))?;
    params.insert("att.sp.w2", init::zeros(&[k]))?;
    Ok(())
}

fn register_mask(
    params: &mut ParamSet,
    cfg: &PipelineConfig,
    rng: &mut InitRng,
) -> Result<(), NnError> {
    let flat = cfg.flat_feature_len();
    let q = cfg.history_len;
    let (m, out) = (cfg.mask_hidden, cfg.spatial_len());
    // The first layer concatenates two inputs of very different widths
    // (flattened features vs the q-sized timestamp vector); scale each
    // column block by its own segment's fan-in so neither drowns out the
    // other at the start.
    let mut w1 = init::glorot_matrix(m, flat + q, rng);
    let t_block = init::glorot(&[m, q], q, m, rng);
    for row in 0..m {
        for col in 0..q {
            w1.data_mut()[row * (flat + q) + flat + col] = t_block.at2(row, col);
        }
    }
    params.insert("mask.w1", w1)?;
    params.insert("mask.b1", init::zeros(&[m]))?;
    params.insert("mask.w2", init::glorot_matrix(out, m, rng))?;
    params.insert("mask.b2", init::zeros(&[out]))?;
    Ok(())
}

fn register_regressor(
    params: &mut ParamSet,
    cfg: &PipelineConfig,
    in_channels: usize,
    rng: &mut InitRng,
) -> Result<(), NnError> {
    params.insert(
        "reg.stem.w",
        init::glorot_conv(cfg.reg_stem, in_channels, 3, 3, rng),
    )?;
    params.insert("reg.stem.b", init::zeros(&[cfg.reg_stem]))?;
    let mut c_in = cfg.reg_stem;
    for (i, &c_out) in cfg.reg_blocks.iter().enumerate() {
        let p = format!("reg.block{}", i + 1);
        params.insert(format!("{p}.conv1.w"), init::glorot_conv(c_out, c_in, 3, 3, rng))?;
        params.insert(format!("{p}.conv1.b"), init::zeros(&[c_out]))?;
        params.insert(format!("{p}.conv2.w"), init::glorot_conv(c_out, c_out, 3, 3, rng))?;
        params.insert(format!("{p}.conv2.b"), init::zeros(&[c_out]))?;
        params.insert(format!("{p}.skip.w"), init::glorot_conv(c_out, c_in, 1, 1, rng))?;
        c_in = c_out;
    }
    params.insert("reg.head.w", init::glorot_matrix(1, c_in, rng))?;
    params.insert("reg.head.b", init::zeros(&[1]))?;
    Ok(())
}

/// Names and shapes of the regressor stack only, for the fair-comparison
/// contract between model kinds.
pub fn regressor_signature(params: &ParamSet) -> Vec<(String, Vec<usize>)> {
    params
        .iter()
        .filter(|(n, _)| n.starts_with("reg.") && !n.starts_with("reg.stem"))
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let cfg = PipelineConfig::toy();
        let a = build_params(&cfg, ModelKind::Asynchronous, 3).unwrap();
        let b = build_params(&cfg, ModelKind::Asynchronous, 3).unwrap();
        for ((n0, t0), (n1, t1)) in a.iter().zip(b.iter()) {
            assert_eq!(n0, n1);
            assert_eq!(t0.data(), t1.data());
        }
        let c = build_params(&cfg, ModelKind::Asynchronous, 4).unwrap();
        assert!(a
            .iter()
            .zip(c.iter())
            .any(|((_, t0), (_, t1))| t0.data() != t1.data()));
    }

    #[test]
    fn comparators_share_regressor_shapes() {
        let cfg = PipelineConfig::toy();
        let ours = build_params(&cfg, ModelKind::Asynchronous, 0).unwrap();
        let sync = build_params(&cfg, ModelKind::SyncHistogram, 0).unwrap();
        let aps = build_params(&cfg, ModelKind::ApsOnly, 0).unwrap();
        let sig = regressor_signature(&ours);
        assert!(!sig.is_empty());
        assert_eq!(sig, regressor_signature(&sync));
        assert_eq!(sig, regressor_signature(&aps));
        // Stems differ only in input channels.
        assert_eq!(sync.get("reg.stem.w").unwrap().shape()[1], 3);
        assert_eq!(aps.get("reg.stem.w").unwrap().shape()[1], 1);
    }

    #[test]
    fn biases_start_at_zero() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 9).unwrap();
        for (name, t) in params.iter() {
            if name.ends_with(".b") || name.contains(".b1") || name.contains(".b2") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name} not zero");
            }
        }
    }
}
