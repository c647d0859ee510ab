//! Model and training configuration.
//!
//! The three architecture presets differ only in their feature-map span,
//! upsampling scheme and normalization scheme:
//!
//! | variant | feature maps      | upsampling      | normalization |
//! |---------|-------------------|-----------------|---------------|
//! | U-Net   | 64 ↓ 1024 ↑ 64    | deconvolution   | none          |
//! | U-Net 1 | 32 ↓ 128 ↑ 16     | 2×2 repeats     | none          |
//! | U-Net 2 | 48 ↓ 768 ↑ 48     | deconvolution   | batch norm    |
//!
//! `width_scale` shrinks every width proportionally so the identical topology
//! can be exercised at desk scale; `1.0` is the faithful default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference learning rate for the full-scale training protocol.
pub const DEFAULT_LEARNING_RATE: f64 = 0.00001;
/// Reference epoch count for the full-scale training protocol.
pub const DEFAULT_EPOCHS: usize = 250;
/// Batch size used when none is requested.
pub const DEFAULT_BATCH_SIZE: usize = 8;
/// Network input side length after preprocessing.
pub const DEFAULT_INPUT_SIZE: usize = 256;

/// Architecture variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Unet,
    Unet1,
    Unet2,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Unet, Variant::Unet1, Variant::Unet2];

    /// Table/report name.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Unet => "U-Net",
            Variant::Unet1 => "U-Net 1",
            Variant::Unet2 => "U-Net 2",
        }
    }

    /// Stable lowercase identifier used in CLI flags and file names.
    pub fn key(self) -> &'static str {
        match self {
            Variant::Unet => "unet",
            Variant::Unet1 => "unet1",
            Variant::Unet2 => "unet2",
        }
    }

    pub fn parse_key(s: &str) -> Result<Self> {
        match s {
            "unet" => Ok(Variant::Unet),
            "unet1" => Ok(Variant::Unet1),
            "unet2" => Ok(Variant::Unet2),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?}; expected unet, unet1 or unet2"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Decoder upsampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampling {
    /// Learned 2×2 stride-2 transposed convolution.
    Deconvolution,
    /// 2×2 nearest-neighbor repeat followed by a 3×3 convolution.
    NearestRepeat,
}

/// Per-convolution normalization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    BatchNorm,
}

/// Full architectural description of a segmentation model.
///
/// `encoder_widths` lists the output width of every encoder level including
/// the bottleneck; decoder block widths are derived as
/// `decoder_end_width * 2^level`, which mirrors the encoder for U-Net and
/// U-Net 2 and halves down to the narrow 16-wide tail for U-Net 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder_widths: Vec<usize>,
    pub decoder_end_width: usize,
    pub upsampling: Upsampling,
    pub normalization: Normalization,
    pub width_scale: f64,
    pub input_size: usize,
}

const UNET_WIDTHS: [usize; 5] = [64, 128, 256, 512, 1024];
const UNET1_WIDTHS: [usize; 3] = [32, 64, 128];
const UNET2_WIDTHS: [usize; 5] = [48, 96, 192, 384, 768];

impl ModelConfig {
    /// 64 ↓ 1024 ↑ 64, deconvolution upsampling, no normalization.
    pub fn unet(width_scale: f64) -> Result<Self> {
        Self::preset(
            Variant::Unet,
            &UNET_WIDTHS,
            64,
            Upsampling::Deconvolution,
            Normalization::None,
            width_scale,
        )
    }

    /// 32 ↓ 128 ↑ 16, nearest-repeat upsampling, no normalization.
    pub fn unet1(width_scale: f64) -> Result<Self> {
        Self::preset(
            Variant::Unet1,
            &UNET1_WIDTHS,
            16,
            Upsampling::NearestRepeat,
            Normalization::None,
            width_scale,
        )
    }

    /// 48 ↓ 768 ↑ 48, deconvolution upsampling, batch normalization.
    pub fn unet2(width_scale: f64) -> Result<Self> {
        Self::preset(
            Variant::Unet2,
            &UNET2_WIDTHS,
            48,
            Upsampling::Deconvolution,
            Normalization::BatchNorm,
            width_scale,
        )
    }

    pub fn for_variant(variant: Variant, width_scale: f64) -> Result<Self> {
        match variant {
            Variant::Unet => Self::unet(width_scale),
            Variant::Unet1 => Self::unet1(width_scale),
            Variant::Unet2 => Self::unet2(width_scale),
        }
    }

    /// Free-form topology for tests and experiments; the preset constructors
    /// are the only way to obtain the reference rows.
    pub fn custom(
        variant: Variant,
        encoder_widths: Vec<usize>,
        decoder_end_width: usize,
        upsampling: Upsampling,
        normalization: Normalization,
        input_size: usize,
    ) -> Result<Self> {
        let config = Self {
            variant,
            encoder_widths,
            decoder_end_width,
            upsampling,
            normalization,
            width_scale: 1.0,
            input_size,
        };
        config.validate()?;
        Ok(config)
    }

    fn preset(
        variant: Variant,
        base_widths: &[usize],
        base_end_width: usize,
        upsampling: Upsampling,
        normalization: Normalization,
        width_scale: f64,
    ) -> Result<Self> {
        let encoder_widths = base_widths
            .iter()
            .map(|&w| scale_width(w, width_scale))
            .collect::<Result<Vec<_>>>()?;
        let config = Self {
            variant,
            encoder_widths,
            decoder_end_width: scale_width(base_end_width, width_scale)?,
            upsampling,
            normalization,
            width_scale,
            input_size: DEFAULT_INPUT_SIZE,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_input_size(mut self, input_size: usize) -> Self {
        self.input_size = input_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.is_empty() {
            return Err(Error::InvalidConfig("no encoder levels".to_string()));
        }
        if self.encoder_widths.iter().any(|&w| w < 1) || self.decoder_end_width < 1 {
            return Err(Error::InvalidConfig(format!(
                "width_scale {} produces a zero-width layer",
                self.width_scale
            )));
        }
        if self.width_scale <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "width_scale {} must be positive",
                self.width_scale
            )));
        }
        let divisor = self.spatial_divisor();
        if self.input_size < divisor {
            return Err(Error::InvalidConfig(format!(
                "input size {} is smaller than the spatial divisor {divisor}",
                self.input_size
            )));
        }
        Ok(())
    }

    /// Number of encoder levels, bottleneck included.
    pub fn levels(&self) -> usize {
        self.encoder_widths.len()
    }

    /// Input sides must be divisible by this (one 2×2 pool per non-bottleneck level).
    pub fn spatial_divisor(&self) -> usize {
        1 << (self.levels() - 1)
    }

    /// Output width of each decoder block, deepest level first is *not* used;
    /// index `i` is the block that produces the level-`i` resolution.
    pub fn decoder_widths(&self) -> Vec<usize> {
        (0..self.levels().saturating_sub(1))
            .map(|level| self.decoder_end_width << level)
            .collect()
    }
}

fn scale_width(base: usize, scale: f64) -> Result<usize> {
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "width_scale {scale} must be a positive finite number"
        )));
    }
    let scaled = base as f64 * scale;
    if scaled < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "width_scale {scale} shrinks width {base} below 1"
        )));
    }
    Ok(scaled.round() as usize)
}

/// Loss selector; the benchmark protocol fixes negative log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Nll,
}

/// Optimization hyperparameters. `Default` is the full-scale protocol:
/// Adam, lr 0.00001, 250 epochs, batch 8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            loss: LossKind::Nll,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".to_string()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch size must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_reference_rows_at_scale_one() {
        let unet = ModelConfig::unet(1.0).unwrap();
        assert_eq!(unet.encoder_widths, vec![64, 128, 256, 512, 1024]);
        assert_eq!(unet.decoder_end_width, 64);
        assert_eq!(unet.upsampling, Upsampling::Deconvolution);
        assert_eq!(unet.normalization, Normalization::None);

        let unet1 = ModelConfig::unet1(1.0).unwrap();
        assert_eq!(unet1.encoder_widths, vec![32, 64, 128]);
        assert_eq!(unet1.decoder_end_width, 16);
        assert_eq!(unet1.upsampling, Upsampling::NearestRepeat);
        assert_eq!(unet1.normalization, Normalization::None);

        let unet2 = ModelConfig::unet2(1.0).unwrap();
        assert_eq!(unet2.encoder_widths, vec![48, 96, 192, 384, 768]);
        assert_eq!(unet2.decoder_end_width, 48);
        assert_eq!(unet2.upsampling, Upsampling::Deconvolution);
        assert_eq!(unet2.normalization, Normalization::BatchNorm);
    }

    #[test]
    fn width_scaling() {
        let quarter = ModelConfig::unet(0.25).unwrap();
        assert_eq!(quarter.encoder_widths, vec![16, 32, 64, 128, 256]);
        assert_eq!(quarter.decoder_end_width, 16);
        // 16 * 1/32 = 0.5 -> below one width.
        assert!(ModelConfig::unet1(1.0 / 32.0).is_err());
        assert!(ModelConfig::unet(-1.0).is_err());
    }

    #[test]
    fn decoder_width_schedule() {
        assert_eq!(
            ModelConfig::unet(1.0).unwrap().decoder_widths(),
            vec![64, 128, 256, 512]
        );
        assert_eq!(
            ModelConfig::unet1(1.0).unwrap().decoder_widths(),
            vec![16, 32]
        );
        assert_eq!(
            ModelConfig::unet2(1.0).unwrap().decoder_widths(),
            vec![48, 96, 192, 384]
        );
    }

    #[test]
    fn spatial_divisor_follows_levels() {
        assert_eq!(ModelConfig::unet(1.0).unwrap().spatial_divisor(), 16);
        assert_eq!(ModelConfig::unet1(1.0).unwrap().spatial_divisor(), 4);
    }

    #[test]
    fn train_config_defaults_are_the_protocol() {
        let config = TrainConfig::default();
        assert_eq!(config.learning_rate, 0.00001);
        assert_eq!(config.epochs, 250);
        assert_eq!(config.batch_size, 8);
        assert_eq!(config.loss, LossKind::Nll);
        assert!(config.validate().is_ok());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn config_serde_roundtrip() {
        let config = ModelConfig::unet2(0.5).unwrap();
        let json = serde_json::to_string(&config).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }
}
