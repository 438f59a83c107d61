//! Network building blocks.
//!
//! All blocks take channels-last feature maps and are pure functions of
//! their parameters. The two sequence branches carry their own residual, so
//! an encoder stage composes as `merge(h, spatial(h), spectral(h))`.

use super::config::{EncoderVariant, ModelConfig};
use crate::ssm::selective::uniform_init;
use crate::ssm::{mamba_block_forward, ScanMode, SelectiveSsmParams, SsmDims};
use crate::tensor::Tensor;
use rand::Rng;

pub(crate) const GN_EPS: f32 = 1e-5;

/// Grouped normalization with learned per-channel affine.
///
/// Statistics are taken per position over each channel group of the
/// trailing axis, so the layer never mixes information across pixels.
pub struct GroupNorm {
    groups: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl GroupNorm {
    /// Scale starts at one and shift at zero, so a fresh layer only
    /// standardizes.
    pub fn new(channels: usize, groups: usize) -> GroupNorm {
        GroupNorm {
            groups,
            gamma: Tensor::param(vec![1.0; channels], &[channels]),
            beta: Tensor::param(vec![0.0; channels], &[channels]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.group_norm(self.groups, &self.gamma, &self.beta, GN_EPS)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.gamma"), self.gamma.clone()),
            (format!("{prefix}.beta"), self.beta.clone()),
        ]
    }
}

/// Per-pixel projection into the embedding space.
pub struct Embedding {
    /// `[channels, dim]`.
    pub weight: Tensor,
    /// `[dim]`.
    pub bias: Tensor,
    pub norm: GroupNorm,
}

impl Embedding {
    pub fn init(
        channels: usize,
        dim: usize,
        gn_groups: usize,
        rng: &mut impl Rng,
    ) -> Embedding {
        Embedding {
            weight: Tensor::param(uniform_init(rng, channels, channels * dim), &[channels, dim]),
            bias: Tensor::param(uniform_init(rng, channels, dim), &[dim]),
            norm: GroupNorm::new(dim, gn_groups),
        }
    }

    /// `[1,H,W,C] -> [1,H,W,D]` as `silu(norm(x W + b))`. Strictly
    /// per-pixel: two pixels with equal spectra embed identically.
    pub fn forward(&self, image: &Tensor) -> Tensor {
        self.norm.forward(&image.linear(&self.weight, Some(&self.bias))).silu()
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = vec![
            (format!("{prefix}.weight"), self.weight.clone()),
            (format!("{prefix}.bias"), self.bias.clone()),
        ];
        out.extend(self.norm.named_params(&format!("{prefix}.norm")));
        out
    }
}

/// Long-range mixing over the flattened pixel sequence.
pub struct SpatialMambaBlock {
    pub ssm: SelectiveSsmParams,
    pub norm: GroupNorm,
}

impl SpatialMambaBlock {
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> SpatialMambaBlock {
        let dims = SsmDims::new(
            cfg.embed_dim,
            cfg.expand,
            cfg.state_size,
            cfg.conv_width,
            cfg.dt_rank,
        );
        SpatialMambaBlock {
            ssm: SelectiveSsmParams::init(dims, rng),
            norm: GroupNorm::new(cfg.embed_dim, cfg.gn_groups),
        }
    }

    /// `[1, L, D] -> [1, L, D]` where `L` is the row-major pixel count:
    /// `silu(norm(mix(h))) + h`. The scan runs over the whole pixel
    /// sequence, so unlike the other layers this one is order-sensitive.
    pub fn forward(&self, h: &Tensor, mode: ScanMode) -> Tensor {
        let mixed = mamba_block_forward(&self.ssm, h, mode);
        self.norm.forward(&mixed).silu().add(h)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = self.ssm.named_params(prefix);
        out.extend(self.norm.named_params(&format!("{prefix}.norm")));
        out
    }
}

/// Mixing along each pixel's embedding, split into contiguous groups.
pub struct SpectralMambaBlock {
    groups: usize,
    pub ssm: SelectiveSsmParams,
    pub norm: GroupNorm,
}

impl SpectralMambaBlock {
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> SpectralMambaBlock {
        let dims = SsmDims::new(
            cfg.group_width(),
            cfg.expand,
            cfg.state_size,
            cfg.conv_width,
            cfg.dt_rank,
        );
        SpectralMambaBlock {
            groups: cfg.spectral_groups,
            ssm: SelectiveSsmParams::init(dims, rng),
            norm: GroupNorm::new(cfg.group_width(), cfg.gn_groups),
        }
    }

    /// `[1, L, D] -> [1, L, D]`. Each pixel's D channels become an
    /// independent sequence of G contiguous groups (tokens of width D/G);
    /// one shared scan runs over all L sequences, then `silu(norm(.))`,
    /// regroup, and the residual. Pixels never interact here.
    pub fn forward(&self, h: &Tensor, mode: ScanMode) -> Tensor {
        let (l, d) = (h.shape()[1], h.shape()[2]);
        let m = d / self.groups;
        let grouped = h.reshape(&[l, self.groups, m]);
        let mixed = mamba_block_forward(&self.ssm, &grouped, mode);
        self.norm.forward(&mixed).silu().reshape(&[1, l, d]).add(h)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = self.ssm.named_params(prefix);
        out.extend(self.norm.named_params(&format!("{prefix}.norm")));
        out
    }
}

/// Learned scalar weights merging the two branches.
pub struct FusionWeights {
    pub w_spatial: Tensor,
    pub w_spectral: Tensor,
}

impl FusionWeights {
    /// Both weights start uniform in `[0, 1)`.
    pub fn init(rng: &mut impl Rng) -> FusionWeights {
        FusionWeights {
            w_spatial: Tensor::param(vec![rng.gen_range(0.0..1.0)], &[1]),
            w_spectral: Tensor::param(vec![rng.gen_range(0.0..1.0)], &[1]),
        }
    }

    /// `h + w_spatial * spa + w_spectral * spe`; the weights are ordinary
    /// graph leaves, so the merge ratio is trained with everything else.
    pub fn fuse(&self, h: &Tensor, spa: &Tensor, spe: &Tensor) -> Tensor {
        h.add(&spa.scale_by(&self.w_spatial)).add(&spe.scale_by(&self.w_spectral))
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.w_spatial"), self.w_spatial.clone()),
            (format!("{prefix}.w_spectral"), self.w_spectral.clone()),
        ]
    }
}

/// Per-pixel linear classifier producing raw logits.
pub struct SegHead {
    /// `[dim, classes]`.
    pub weight: Tensor,
    /// `[classes]`.
    pub bias: Tensor,
}

impl SegHead {
    pub fn init(dim: usize, classes: usize, rng: &mut impl Rng) -> SegHead {
        SegHead {
            weight: Tensor::param(uniform_init(rng, dim, dim * classes), &[dim, classes]),
            bias: Tensor::param(uniform_init(rng, dim, classes), &[classes]),
        }
    }

    /// `[1,H,W,D] -> [1,H,W,K]`, no activation.
    pub fn forward(&self, h: &Tensor) -> Tensor {
        h.linear(&self.weight, Some(&self.bias))
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.weight"), self.weight.clone()),
            (format!("{prefix}.bias"), self.bias.clone()),
        ]
    }
}

/// One encoder stage: the branches its variant calls for plus the merge.
pub struct EncoderBlock {
    pub variant: EncoderVariant,
    pub spatial: Option<SpatialMambaBlock>,
    pub spectral: Option<SpectralMambaBlock>,
    pub fusion: Option<FusionWeights>,
}

impl EncoderBlock {
    /// Draw order is spatial branch, spectral branch, fusion weights;
    /// variants that skip a piece draw nothing for it.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> EncoderBlock {
        let wants_spatial = !matches!(cfg.variant, EncoderVariant::SpectralOnly);
        let wants_spectral = !matches!(cfg.variant, EncoderVariant::SpatialOnly);
        EncoderBlock {
            variant: cfg.variant,
            spatial: wants_spatial.then(|| SpatialMambaBlock::init(cfg, rng)),
            spectral: wants_spectral.then(|| SpectralMambaBlock::init(cfg, rng)),
            fusion: matches!(cfg.variant, EncoderVariant::Full)
                .then(|| FusionWeights::init(rng)),
        }
    }

    /// `[1, L, D] -> [1, L, D]`.
    pub fn forward(&self, h: &Tensor, mode: ScanMode) -> Tensor {
        match self.variant {
            EncoderVariant::Full => {
                let spa = self.spatial.as_ref().unwrap().forward(h, mode);
                let spe = self.spectral.as_ref().unwrap().forward(h, mode);
                self.fusion.as_ref().unwrap().fuse(h, &spa, &spe)
            }
            EncoderVariant::Sum => {
                let spa = self.spatial.as_ref().unwrap().forward(h, mode);
                let spe = self.spectral.as_ref().unwrap().forward(h, mode);
                spa.add(&spe)
            }
            EncoderVariant::SpatialOnly => self.spatial.as_ref().unwrap().forward(h, mode),
            EncoderVariant::SpectralOnly => self.spectral.as_ref().unwrap().forward(h, mode),
        }
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        if let Some(spa) = &self.spatial {
            out.extend(spa.named_params(&format!("{prefix}.spatial")));
        }
        if let Some(spe) = &self.spectral {
            out.extend(spe.named_params(&format!("{prefix}.spectral")));
        }
        if let Some(fusion) = &self.fusion {
            out.extend(fusion.named_params(&format!("{prefix}.fusion")));
        }
        out
    }
}
