//! Wall-clock measurement of real forward passes.
//!
//! [`bench_forward`] runs eager inference on random weights and a random
//! cube at each requested square size, pairs the median wall time with the
//! modeled cost from [`super::flops`], and [`rows_to_csv`] serializes the
//! table. The attention baseline allocates score matrices quadratic in the
//! pixel count, so sizes above [`ATTENTION_SIDE_CAP`] per side report only
//! the modeled cost and leave the measurement empty.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::flops::{flops_model, SequenceCore};
use crate::data::Xorshift64Star;
use crate::model::{Embedding, FusionWeights, GroupNorm, Model, ModelConfig, SegHead};
use crate::ssm::selective::uniform_init;
use crate::ssm::ScanMode;
use crate::tensor::{no_grad, Tensor};

/// Largest square side the attention baseline is actually executed at.
pub const ATTENTION_SIDE_CAP: usize = 100;

/// Weights of one single-head softmax attention layer.
pub struct AttentionParams {
    /// `[d, 3d]`, the fused query/key/value projection.
    pub qkv: Tensor,
    /// `[d, d]` output projection.
    pub out: Tensor,
}

impl AttentionParams {
    pub fn init(dim: usize, rng: &mut impl Rng) -> AttentionParams {
        AttentionParams {
            qkv: Tensor::param(uniform_init(rng, dim, dim * 3 * dim), &[dim, 3 * dim]),
            out: Tensor::param(uniform_init(rng, dim, dim * dim), &[dim, dim]),
        }
    }
}

/// `softmax(Q K^T / sqrt(d)) V` followed by the output projection.
///
/// Accepts `[L, d]` for one sequence or `[B, L, d]` for a batch of
/// independent sequences, and returns the same shape.
pub fn attention_forward(params: &AttentionParams, tokens: &Tensor) -> Tensor {
    match tokens.rank() {
        2 => attention_one(params, tokens),
        3 => {
            let (b, l, d) = (tokens.shape()[0], tokens.shape()[1], tokens.shape()[2]);
            let parts: Vec<Tensor> = (0..b)
                .map(|i| {
                    let seq = tokens.slice(0, i, i + 1).reshape(&[l, d]);
                    attention_one(params, &seq).reshape(&[1, l, d])
                })
                .collect();
            Tensor::concat(&parts, 0)
        }
        r => panic!("attention_forward: rank {r} input, expected 2 or 3"),
    }
}

fn attention_one(params: &AttentionParams, tokens: &Tensor) -> Tensor {
    let d = tokens.shape()[1];
    let qkv = tokens.linear(&params.qkv, None);
    let q = qkv.slice(1, 0, d);
    let k = qkv.slice(1, d, 2 * d);
    let v = qkv.slice(1, 2 * d, 3 * d);
    let scores = q.matmul(&k.permute(&[1, 0])).mul_scalar(1.0 / (d as f32).sqrt());
    scores.softmax(1).matmul(&v).linear(&params.out, None)
}

/// The two-branch encoder with both scans swapped for attention; the
/// baseline the cost table compares against. Never trained, so it only
/// implements the forward pass.
struct AttentionNet {
    embedding: Embedding,
    blocks: Vec<AttentionStage>,
    head: SegHead,
    groups: usize,
}

struct AttentionStage {
    spatial: AttentionParams,
    spatial_norm: GroupNorm,
    spectral: AttentionParams,
    spectral_norm: GroupNorm,
    fusion: FusionWeights,
}

impl AttentionNet {
    fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> AttentionNet {
        let m = cfg.group_width();
        let blocks = (0..cfg.encoder_depth)
            .map(|_| AttentionStage {
                spatial: AttentionParams::init(cfg.embed_dim, rng),
                spatial_norm: GroupNorm::new(cfg.embed_dim, cfg.gn_groups),
                spectral: AttentionParams::init(m, rng),
                spectral_norm: GroupNorm::new(m, cfg.gn_groups),
                fusion: FusionWeights::init(rng),
            })
            .collect();
        AttentionNet {
            embedding: Embedding::init(cfg.spectral_channels, cfg.embed_dim, cfg.gn_groups, rng),
            blocks,
            head: SegHead::init(cfg.embed_dim, cfg.class_count, rng),
            groups: cfg.spectral_groups,
        }
    }

    fn forward(&self, image: &Tensor) -> Tensor {
        let (h, w, d) = (
            image.shape()[1],
            image.shape()[2],
            self.embedding.weight.shape()[1],
        );
        let l = h * w;
        let m = d / self.groups;
        let mut tokens = self.embedding.forward(image).reshape(&[1, l, d]);
        for stage in &self.blocks {
            let spa = stage
                .spatial_norm
                .forward(&attention_forward(&stage.spatial, &tokens))
                .silu()
                .add(&tokens);
            let grouped = tokens.reshape(&[l, self.groups, m]);
            let spe = stage
                .spectral_norm
                .forward(&attention_forward(&stage.spectral, &grouped))
                .silu()
                .reshape(&[1, l, d])
                .add(&tokens);
            tokens = stage.fusion.fuse(&tokens, &spa, &spe);
        }
        self.head.forward(&tokens.reshape(&[1, h, w, d]))
    }
}

/// One measured size.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub core: SequenceCore,
    pub height: usize,
    pub width: usize,
    /// Pixel count, the sequence length of the spatial branch.
    pub tokens: usize,
    /// Modeled whole-forward cost in GFLOPs.
    pub gflops_model: f64,
    /// Median wall time of the repeated forwards; empty when skipped.
    pub seconds: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty(), "median of nothing");
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

fn random_cube(height: usize, width: usize, channels: usize, seed: u64) -> Tensor {
    let mut rng = Xorshift64Star::new(seed.wrapping_mul(2).wrapping_add(1));
    let data: Vec<f32> = (0..height * width * channels)
        .map(|_| rng.next_gaussian() as f32)
        .collect();
    Tensor::from_vec(data, &[1, height, width, channels])
}

/// Times `reps` forwards at every square side in `sides` and returns one
/// row per side. Weights and inputs are drawn from `cfg.seed`, so the table
/// is reproducible. Attention sides above the cap are not run.
pub fn bench_forward(
    sides: &[usize],
    cfg: &ModelConfig,
    core: SequenceCore,
    reps: usize,
) -> Vec<BenchRow> {
    assert!(reps >= 1, "bench_forward: zero repetitions");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    enum Net {
        Scan(Model),
        Attention(AttentionNet),
    }
    let net = match core {
        SequenceCore::Mamba => Net::Scan(Model::new(cfg).expect("bench config rejected")),
        SequenceCore::SelfAttention => Net::Attention(AttentionNet::init(cfg, &mut rng)),
    };

    sides
        .iter()
        .map(|&side| {
            let gflops = flops_model(side, side, cfg, core);
            let skip = matches!(core, SequenceCore::SelfAttention) && side > ATTENTION_SIDE_CAP;
            let seconds = if skip {
                log::warn!(
                    "skipping attention measurement at {side}x{side}: side above cap {ATTENTION_SIDE_CAP}"
                );
                None
            } else {
                let image = random_cube(side, side, cfg.spectral_channels, cfg.seed);
                let times: Vec<f64> = (0..reps)
                    .map(|_| {
                        let start = Instant::now();
                        let logits = no_grad(|| match &net {
                            Net::Scan(m) => m.forward(&image, ScanMode::Sequential),
                            Net::Attention(a) => a.forward(&image),
                        });
                        std::hint::black_box(&logits);
                        start.elapsed().as_secs_f64()
                    })
                    .collect();
                Some(median(times))
            };
            BenchRow {
                core,
                height: side,
                width: side,
                tokens: side * side,
                gflops_model: gflops,
                seconds,
            }
        })
        .collect()
}

/// Renders the table with the fixed header
/// `variant,H,W,L,gflops_model,seconds`; a skipped measurement leaves the
/// last field empty.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("variant,H,W,L,gflops_model,seconds\n");
    for row in rows {
        let seconds = match row.seconds {
            Some(s) => format!("{s:.6}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{:.6},{}\n",
            row.core.as_str(),
            row.height,
            row.width,
            row.tokens,
            row.gflops_model,
            seconds
        ));
    }
    out
}
