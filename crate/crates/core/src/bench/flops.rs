//! Analytical cost model.
//!
//! Counts are exact symbolic functions of the shapes under one fixed
//! convention, stated here because absolute numbers depend on it while
//! ratios between image sizes (the quantity worth comparing) do not:
//!
//! * one multiply-accumulate = [`FLOPS_PER_MAC`] = 2 FLOPs;
//! * one transcendental element (exp, sigmoid, the whole of softmax)
//!   = [`FLOPS_PER_TRANSCENDENTAL`] = 4 FLOPs;
//! * silu = sigmoid + product = 5 FLOPs per element;
//! * grouped normalization = 6 FLOPs per element (two to accumulate the
//!   statistics, four to shift, scale and apply the affine).
//!
//! Every term of the scan-based encoder is proportional to the pixel count
//! `L`, so its cost is exactly affine in `L` with zero intercept. The
//! attention stand-in adds `L^2` score and value terms on the pixel
//! sequence, which is what separates the two curves.

use crate::model::{EncoderVariant, ModelConfig};
use crate::ssm::SsmDims;

pub const FLOPS_PER_MAC: u64 = 2;
pub const FLOPS_PER_TRANSCENDENTAL: u64 = 4;

const FLOPS_PER_SILU: u64 = FLOPS_PER_TRANSCENDENTAL + 1;
const FLOPS_PER_GROUP_NORM: u64 = 6;

/// Which sequence mixer sits inside the two branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceCore {
    /// The selective scan used by the real network; linear in tokens.
    Mamba,
    /// Single-head softmax attention over the same sequences; quadratic in
    /// tokens on the pixel branch. A measurement baseline, never trained.
    SelfAttention,
}

impl SequenceCore {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceCore::Mamba => "mamba",
            SequenceCore::SelfAttention => "self-attention",
        }
    }
}

impl std::str::FromStr for SequenceCore {
    type Err = String;

    fn from_str(s: &str) -> Result<SequenceCore, String> {
        match s {
            "mamba" => Ok(SequenceCore::Mamba),
            "self-attention" | "self_attention" | "attention" => {
                Ok(SequenceCore::SelfAttention)
            }
            other => Err(format!("unknown core {other:?}, expected mamba|self-attention")),
        }
    }
}

pub fn flops_linear(tokens: u64, d_in: u64, d_out: u64, bias: bool) -> u64 {
    tokens * d_in * d_out * FLOPS_PER_MAC + if bias { tokens * d_out } else { 0 }
}

pub fn flops_depthwise_conv(tokens: u64, channels: u64, width: u64) -> u64 {
    tokens * channels * width * FLOPS_PER_MAC + tokens * channels
}

pub fn flops_silu(elements: u64) -> u64 {
    elements * FLOPS_PER_SILU
}

pub fn flops_group_norm(elements: u64) -> u64 {
    elements * FLOPS_PER_GROUP_NORM
}

pub fn flops_softmax(elements: u64) -> u64 {
    elements * FLOPS_PER_TRANSCENDENTAL
}

/// One gated selective block over `tokens` tokens of the given width.
///
/// Per token-channel-state the scan costs 11 FLOPs: the decay exponent (4),
/// its step product (1), the state decay (1), the input write (3) and the
/// output read (2).
pub fn flops_selective_mixer(tokens: u64, dims: SsmDims) -> u64 {
    let d = dims.model_dim as u64;
    let e = dims.inner_dim as u64;
    let n = dims.state_size as u64;
    let k = dims.conv_width as u64;
    let r = dims.dt_rank as u64;
    let scan_per_state = FLOPS_PER_TRANSCENDENTAL + 7;
    flops_linear(tokens, d, 2 * e, false)
        + flops_depthwise_conv(tokens, e, k)
        + flops_silu(tokens * e)
        + flops_linear(tokens, e, r + 2 * n, false)
        + flops_linear(tokens, r, e, true)
        + tokens * e * FLOPS_PER_TRANSCENDENTAL
        + tokens * e * n * scan_per_state
        + tokens * e * FLOPS_PER_MAC
        + flops_silu(tokens * e)
        + tokens * e
        + flops_linear(tokens, e, d, false)
}

/// Single-head softmax attention plus its output projection.
pub fn flops_attention_mixer(tokens: u64, width: u64) -> u64 {
    flops_linear(tokens, width, 3 * width, false)
        + tokens * tokens * width * FLOPS_PER_MAC
        + tokens * tokens
        + flops_softmax(tokens * tokens)
        + tokens * tokens * width * FLOPS_PER_MAC
        + flops_linear(tokens, width, width, false)
}

fn mixer(core: SequenceCore, tokens: u64, dims: SsmDims) -> u64 {
    match core {
        SequenceCore::Mamba => flops_selective_mixer(tokens, dims),
        SequenceCore::SelfAttention => flops_attention_mixer(tokens, dims.model_dim as u64),
    }
}

fn spatial_dims(cfg: &ModelConfig) -> SsmDims {
    SsmDims::new(cfg.embed_dim, cfg.expand, cfg.state_size, cfg.conv_width, cfg.dt_rank)
}

fn spectral_dims(cfg: &ModelConfig) -> SsmDims {
    SsmDims::new(cfg.group_width(), cfg.expand, cfg.state_size, cfg.conv_width, cfg.dt_rank)
}

/// GFLOPs of one encoder stage at the given image size: the branches the
/// config's variant runs (mixer, normalization, activation, residual) plus
/// the merge.
pub fn flops_encoder_block(height: usize, width: usize, cfg: &ModelConfig, core: SequenceCore) -> f64 {
    let l = (height * width) as u64;
    let d = cfg.embed_dim as u64;
    let g = cfg.spectral_groups as u64;
    let m = cfg.group_width() as u64;

    // Each branch wraps its mixer in normalization, silu and the residual.
    let branch_tail = flops_group_norm(l * d) + flops_silu(l * d) + l * d;
    let spatial = mixer(core, l, spatial_dims(cfg)) + branch_tail;
    let spectral = match core {
        SequenceCore::Mamba => flops_selective_mixer(l * g, spectral_dims(cfg)),
        // Attention runs once per pixel over its G group tokens.
        SequenceCore::SelfAttention => l * flops_attention_mixer(g, m),
    } + branch_tail;

    let total = match cfg.variant {
        // Two scalar scalings and two adds per element.
        EncoderVariant::Full => spatial + spectral + 4 * l * d,
        EncoderVariant::Sum => spatial + spectral + l * d,
        EncoderVariant::SpatialOnly => spatial,
        EncoderVariant::SpectralOnly => spectral,
    };
    total as f64 / 1e9
}

/// GFLOPs of a whole forward pass: embedding, the encoder stack, head.
pub fn flops_model(height: usize, width: usize, cfg: &ModelConfig, core: SequenceCore) -> f64 {
    let l = (height * width) as u64;
    let d = cfg.embed_dim as u64;
    let embed = flops_linear(l, cfg.spectral_channels as u64, d, true)
        + flops_group_norm(l * d)
        + flops_silu(l * d);
    let head = flops_linear(l, d, cfg.class_count as u64, true);
    (embed + head) as f64 / 1e9
        + cfg.encoder_depth as f64 * flops_encoder_block(height, width, cfg, core)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig::new(103, 9)
    }

    #[test]
    fn scan_cost_is_exactly_proportional_to_pixel_count() {
        // Zero intercept and a constant per-pixel cost: the strongest form
        // of "affine in L".
        let per_pixel: Vec<f64> = [(25, 25), (50, 50), (100, 100), (200, 200)]
            .iter()
            .map(|&(h, w)| flops_encoder_block(h, w, &cfg(), SequenceCore::Mamba) / (h * w) as f64)
            .collect();
        for pair in per_pixel.windows(2) {
            assert!(
                (pair[0] - pair[1]).abs() < 1e-12,
                "per-pixel cost drifts: {pair:?}"
            );
        }
    }

    #[test]
    fn doubling_each_side_quadruples_the_scan_cost() {
        for (h, w) in [(25, 25), (50, 50), (100, 100)] {
            let small = flops_encoder_block(h, w, &cfg(), SequenceCore::Mamba);
            let large = flops_encoder_block(2 * h, 2 * w, &cfg(), SequenceCore::Mamba);
            let ratio = large / small;
            assert!((ratio - 4.0).abs() < 0.05, "{h}x{w}: ratio {ratio}");
        }
    }

    #[test]
    fn attention_cost_is_linear_plus_quadratic_exactly() {
        // Fit a L + b L^2 on two sizes and predict a third exactly.
        let f = |l: u64| {
            let side = (l as f64).sqrt() as usize;
            assert_eq!(side * side, l as usize);
            flops_encoder_block(side, side, &cfg(), SequenceCore::SelfAttention) * 1e9
        };
        let (l1, l2, l3) = (625.0, 2500.0, 10_000.0);
        let (y1, y2) = (f(625), f(2500));
        let b = (y2 / l2 - y1 / l1) / (l2 - l1);
        let a = y1 / l1 - b * l1;
        let predicted = a * l3 + b * l3 * l3;
        let got = f(10_000);
        assert!(
            ((predicted - got) / got).abs() < 1e-9,
            "quadratic fit misses: {predicted} vs {got}"
        );
        assert!(b > 0.0, "no quadratic term");
    }

    #[test]
    fn attention_final_doubling_lands_in_the_documented_band() {
        let small = flops_encoder_block(100, 100, &cfg(), SequenceCore::SelfAttention);
        let large = flops_encoder_block(200, 200, &cfg(), SequenceCore::SelfAttention);
        let ratio = large / small;
        assert!((14.0..=16.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn single_pixel_image_is_finite_and_positive_for_both_cores() {
        for core in [SequenceCore::Mamba, SequenceCore::SelfAttention] {
            let block = flops_encoder_block(1, 1, &cfg(), core);
            let model = flops_model(1, 1, &cfg(), core);
            assert!(block > 0.0 && block.is_finite(), "{core:?}: {block}");
            assert!(model > block, "{core:?}: model must include embed and head");
        }
    }

    #[test]
    fn costs_grow_with_pixel_count() {
        for core in [SequenceCore::Mamba, SequenceCore::SelfAttention] {
            let mut last = 0.0;
            for side in [5, 10, 20, 40] {
                let now = flops_model(side, side, &cfg(), core);
                assert!(now > last, "{core:?} not monotone at side {side}");
                last = now;
            }
        }
    }

    #[test]
    fn variant_costs_decompose() {
        let mut spa_only = cfg();
        spa_only.variant = EncoderVariant::SpatialOnly;
        let mut spe_only = cfg();
        spe_only.variant = EncoderVariant::SpectralOnly;
        let full = flops_encoder_block(10, 10, &cfg(), SequenceCore::Mamba);
        let spa = flops_encoder_block(10, 10, &spa_only, SequenceCore::Mamba);
        let spe = flops_encoder_block(10, 10, &spe_only, SequenceCore::Mamba);
        let merge = 4.0 * (10 * 10 * 128) as f64 / 1e9;
        assert!((full - (spa + spe + merge)).abs() < 1e-12);
    }

    #[test]
    fn core_names_round_trip() {
        assert_eq!("mamba".parse::<SequenceCore>().unwrap(), SequenceCore::Mamba);
        assert_eq!(
            "self-attention".parse::<SequenceCore>().unwrap(),
            SequenceCore::SelfAttention
        );
        assert!("mama".parse::<SequenceCore>().is_err());
        assert_eq!(SequenceCore::SelfAttention.as_str(), "self-attention");
    }
}
