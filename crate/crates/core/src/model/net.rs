//! The whole network: embedding, encoder stack, classifier head.

use super::blocks::{Embedding, EncoderBlock, SegHead};
use super::config::{ConfigError, ModelConfig};
use crate::ssm::ScanMode;
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// The segmentation network. One forward pass over the full image yields a
/// logit vector for every pixel at once.
pub struct Model {
    pub config: ModelConfig,
    pub embedding: Embedding,
    pub blocks: Vec<EncoderBlock>,
    pub head: SegHead,
}

impl Model {
    /// Builds the network from a validated config.
    ///
    /// All weights come from one ChaCha8 stream seeded with `config.seed`,
    /// drawn in a fixed order (embedding, encoder blocks front to back,
    /// head), so equal configs give bit-identical parameters.
    pub fn new(config: &ModelConfig) -> Result<Model, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let embedding = Embedding::init(
            config.spectral_channels,
            config.embed_dim,
            config.gn_groups,
            &mut rng,
        );
        let blocks = (0..config.encoder_depth)
            .map(|_| EncoderBlock::init(config, &mut rng))
            .collect();
        let head = SegHead::init(config.embed_dim, config.class_count, &mut rng);
        Ok(Model { config: config.clone(), embedding, blocks, head })
    }

    /// `[1,H,W,C] -> [1,H,W,K]` logits.
    pub fn forward(&self, image: &Tensor, mode: ScanMode) -> Tensor {
        assert!(
            image.rank() == 4 && image.shape()[0] == 1,
            "model forward: expected [1,H,W,C], got {:?}",
            image.shape()
        );
        assert!(
            image.shape()[3] == self.config.spectral_channels,
            "model forward: image has {} bands, config expects {}",
            image.shape()[3],
            self.config.spectral_channels
        );
        let (h, w) = (image.shape()[1], image.shape()[2]);
        let embedded = self.embedding.forward(image);
        let tokens = embedded.reshape(&[1, h * w, self.config.embed_dim]);
        let encoded = self.encoder_forward(&tokens, mode);
        self.head.forward(&encoded.reshape(&[1, h, w, self.config.embed_dim]))
    }

    /// Runs the encoder stack over a `[1, L, D]` token sequence. Depth zero
    /// would be the identity; configs forbid it, but the loop is total.
    pub fn encoder_forward(&self, tokens: &Tensor, mode: ScanMode) -> Tensor {
        let mut h = tokens.clone();
        for block in &self.blocks {
            h = block.forward(&h, mode);
        }
        h
    }

    /// Every trainable tensor with a stable name, in registration order.
    /// The checkpoint format and the optimizer both key off this list.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.embedding.named_params("embed");
        for (i, block) in self.blocks.iter().enumerate() {
            out.extend(block.named_params(&format!("blocks.{i}")));
        }
        out.extend(self.head.named_params("head"));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("param_count", &self.param_count())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::new(5, 3);
        cfg.embed_dim = 16;
        cfg.spectral_groups = 4;
        cfg.gn_groups = 2;
        cfg.state_size = 4;
        cfg.conv_width = 3;
        cfg.seed = 11;
        cfg
    }

    fn small_image() -> Tensor {
        let data: Vec<f32> =
            (0..3 * 4 * 5).map(|i| ((i * 29 % 23) as f32 - 11.0) * 0.05).collect();
        Tensor::from_vec(data, &[1, 3, 4, 5])
    }

    #[test]
    fn forward_produces_per_pixel_logits() {
        let model = Model::new(&small_cfg()).unwrap();
        let logits = model.forward(&small_image(), ScanMode::Sequential);
        assert_eq!(logits.shape(), &[1, 3, 4, 3]);
        assert!(logits.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn parameter_names_are_unique_and_all_trainable() {
        let model = Model::new(&small_cfg()).unwrap();
        let params = model.named_params();
        let names: HashSet<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names.len(), params.len(), "duplicate parameter name");
        assert!(params.iter().all(|(_, t)| t.requires_grad()));
        assert!(names.contains("embed.weight"));
        assert!(names.contains("blocks.0.spatial.in_proj"));
        assert!(names.contains("blocks.0.spectral.norm.gamma"));
        assert!(names.contains("blocks.0.fusion.w_spatial"));
        assert!(names.contains("head.bias"));
    }

    #[test]
    fn same_seed_same_weights_different_seed_different() {
        let cfg = small_cfg();
        let a = Model::new(&cfg).unwrap();
        let b = Model::new(&cfg).unwrap();
        for ((name, ta), (_, tb)) in a.named_params().iter().zip(b.named_params()) {
            assert_eq!(ta.to_vec(), tb.to_vec(), "{name} differs across equal seeds");
        }
        let mut other = cfg.clone();
        other.seed = 12;
        let c = Model::new(&other).unwrap();
        let differs = a
            .named_params()
            .iter()
            .zip(c.named_params())
            .any(|((_, ta), (_, tb))| ta.to_vec() != tb.to_vec());
        assert!(differs, "different seeds must not collide");
    }

    #[test]
    fn every_parameter_receives_a_gradient() {
        let model = Model::new(&small_cfg()).unwrap();
        let loss = model.forward(&small_image(), ScanMode::Sequential).mean();
        loss.backward();
        for (name, t) in model.named_params() {
            let grad = t.grad().unwrap_or_else(|| panic!("{name} has no gradient"));
            assert!(grad.iter().all(|g| g.is_finite()), "{name} gradient not finite");
        }
    }

    #[test]
    fn invalid_config_is_rejected_before_any_allocation() {
        let mut cfg = small_cfg();
        cfg.embed_dim = 17;
        assert!(Model::new(&cfg).is_err());
    }

    #[test]
    fn wrong_band_count_panics_with_both_numbers() {
        let model = Model::new(&small_cfg()).unwrap();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            model.forward(&Tensor::from_vec(vec![0.0; 8], &[1, 2, 2, 2]), ScanMode::Sequential)
        }));
        let message = *result.unwrap_err().downcast::<String>().unwrap();
        assert!(message.contains("2 bands"), "got: {message}");
        assert!(message.contains("expects 5"), "got: {message}");
    }
}
