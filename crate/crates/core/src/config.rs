//! Run configuration: one JSON document with a section per module and a
//! single seed. Unknown keys are rejected. Each section carries a
//! `paper_value` map recording the full-size settings next to the toy
//! defaults; it is informational and restored to the canonical values on load.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::codec::{CodecConfig, CodecTrainConfig};
use crate::dsp::resample::{KAISER_BETA, TAPS_PER_PHASE};
use crate::dsp::{MelConfig, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::features::{
    Adaptor, EncoderStem, FeaturePipeline, WindowPlan, MEL_CHANNELS, REFERENCE_ENCODER_WIDTH, REFERENCE_MAX_WINDOWS_LONG,
    WINDOW_SECONDS,
};
use crate::latency::{REFERENCE_ITL_NS, REFERENCE_TTFT_NS};
use crate::nn::AdamConfig;
use crate::rvq::{COMMITMENT_WEIGHT, REFERENCE_DIM, REFERENCE_ENTRIES, REFERENCE_LEVELS};
use crate::tts::{TtsConfig, TtsTrainConfig, REFERENCE_PARAMETERS, REFERENCE_STEPS};

pub type ReferenceValues = BTreeMap<String, Value>;

fn object(v: Value) -> ReferenceValues {
    v.as_object().expect("literal object").clone().into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspSection {
    pub feature_mel: MelConfig,
    pub log_floor: f64,
    pub resampler_taps_per_phase: usize,
    pub resampler_kaiser_beta: f64,
    #[serde(default)]
    pub paper_value: ReferenceValues,
}

impl Default for DspSection {
    fn default() -> Self {
        Self {
            feature_mel: MelConfig::feature_default(MEL_CHANNELS),
            log_floor: LOG_FLOOR,
            resampler_taps_per_phase: TAPS_PER_PHASE,
            resampler_kaiser_beta: KAISER_BETA,
            paper_value: Self::reference(),
        }
    }
}

impl DspSection {
    fn reference() -> ReferenceValues {
        object(json!({ "codec_stft_window": 32, "codec_stft_hop": 8, "feature_sample_rate": 16000 }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub plan: WindowPlan,
    pub stem_width: usize,
    pub adaptor_hidden: usize,
    pub adaptor_width: usize,
    #[serde(default)]
    pub paper_value: ReferenceValues,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            plan: WindowPlan::default(),
            stem_width: 32,
            adaptor_hidden: 64,
            adaptor_width: 64,
            paper_value: Self::reference(),
        }
    }
}

impl FeaturesSection {
    fn reference() -> ReferenceValues {
        object(json!({
            "window_seconds": WINDOW_SECONDS,
            "max_windows": REFERENCE_MAX_WINDOWS_LONG,
            "stem_width": REFERENCE_ENCODER_WIDTH,
            "mel_channels": MEL_CHANNELS,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecSection {
    pub model: CodecConfig,
    pub train: CodecTrainConfig,
    /// Number of synthetic tones and their length when no training audio is given.
    pub synthetic_clips: usize,
    pub synthetic_seconds: f64,
    #[serde(default)]
    pub paper_value: ReferenceValues,
}

impl Default for CodecSection {
    fn default() -> Self {
        Self {
            model: CodecConfig::toy(),
            train: CodecTrainConfig::default(),
            synthetic_clips: 100,
            synthetic_seconds: 0.5,
            paper_value: Self::reference(),
        }
    }
}

impl CodecSection {
    fn reference() -> ReferenceValues {
        object(serde_json::to_value(CodecConfig::reference()).expect("serializable"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RvqSection {
    pub kmeans_iterations: usize,
    pub commitment_weight: f64,
    #[serde(default)]
    pub paper_value: ReferenceValues,
}

impl Default for RvqSection {
    fn default() -> Self {
        Self {
            kmeans_iterations: CodecTrainConfig::default().rvq_iterations,
            commitment_weight: COMMITMENT_WEIGHT,
            paper_value: object(json!({ "levels": REFERENCE_LEVELS, "entries": REFERENCE_ENTRIES, "dim": REFERENCE_DIM })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSection {
    pub adam: AdamConfig,
    pub variance_floor: f64,
    pub rope_base: f64,
    #[serde(default)]
    pub paper_value: ReferenceValues,
}

impl Default for NnSection {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            variance_floor: crate::nn::mog::VARIANCE_FLOOR,
            rope_base: TtsConfig::toy().decoder.rope_base,
            paper_value: object(json!({ "mixtures": crate::nn::mog::REFERENCE_MIXTURES })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsSection {
    pub model: TtsConfig,
    pub train: TtsTrainConfig,
    /// Checkpoint every this many training steps (0 disables).
    pub checkpoint_every: usize,
    #[serde(default)]
    pub paper_value: ReferenceValues,
}

impl Default for TtsSection {
    fn default() -> Self {
        Self {
            model: TtsConfig::toy(),
            train: TtsTrainConfig::default(),
            checkpoint_every: 100,
            paper_value: object(json!({
                "parameters": REFERENCE_PARAMETERS,
                "steps": REFERENCE_STEPS,
                "levels": REFERENCE_LEVELS,
                "mixtures": crate::nn::mog::REFERENCE_MIXTURES,
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Text tokens per benchmark run; 108 tokens carry about 10 s of audio.
    pub tokens: usize,
    pub mock_step_ns: u64,
    pub mock_synth_ns: u64,
    #[serde(default)]
    pub paper_value: ReferenceValues,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            tokens: 108,
            mock_step_ns: 10_000_000,
            mock_synth_ns: 0,
            paper_value: object(json!({
                "ttft_seconds": REFERENCE_TTFT_NS as f64 / 1e9,
                "itl_seconds": REFERENCE_ITL_NS as f64 / 1e9,
                "clip_seconds": 10.0,
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dsp: DspSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub codec: CodecSection,
    #[serde(default)]
    pub rvq: RvqSection,
    #[serde(default)]
    pub nn: NnSection,
    #[serde(default)]
    pub tts: TtsSection,
    #[serde(default)]
    pub bench: BenchSection,
}

impl RunConfig {
    /// Parses a document; omitted sections take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: RunConfig = serde_json::from_str(text)?;
        c.restore_annotations();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    fn restore_annotations(&mut self) {
        let d = RunConfig::default();
        self.dsp.paper_value = d.dsp.paper_value;
        self.features.paper_value = d.features.paper_value;
        self.codec.paper_value = d.codec.paper_value;
        self.rvq.paper_value = d.rvq.paper_value;
        self.nn.paper_value = d.nn.paper_value;
        self.tts.paper_value = d.tts.paper_value;
        self.bench.paper_value = d.bench.paper_value;
    }

    pub fn validate(&self) -> Result<()> {
        let fixed = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} is fixed by the implementation")))
            }
        };
        fixed("dsp.log_floor", self.dsp.log_floor == LOG_FLOOR)?;
        fixed("dsp.resampler_taps_per_phase", self.dsp.resampler_taps_per_phase == TAPS_PER_PHASE)?;
        fixed("dsp.resampler_kaiser_beta", self.dsp.resampler_kaiser_beta == KAISER_BETA)?;
        fixed("nn.variance_floor", self.nn.variance_floor == crate::nn::mog::VARIANCE_FLOOR)?;
        if self.nn.rope_base != self.tts.model.decoder.rope_base {
            return Err(Error::InvalidConfig("nn.rope_base must match tts.model.decoder.rope_base".into()));
        }
        self.features.plan.validate()?;
        self.codec.model.validate()?;
        self.tts.model.validate()?;
        if !(self.codec.synthetic_seconds > 0.0) {
            return Err(Error::InvalidConfig("codec.synthetic_seconds must be positive".into()));
        }
        if !(self.rvq.commitment_weight >= 0.0) {
            return Err(Error::InvalidConfig("rvq.commitment_weight must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Codec training settings with the rvq and seed keys applied.
    pub fn codec_train(&self) -> CodecTrainConfig {
        CodecTrainConfig {
            rvq_iterations: self.rvq.kmeans_iterations,
            commitment_weight: self.rvq.commitment_weight,
            seed: self.seed,
            ..self.codec.train.clone()
        }
    }

    pub fn tts_train(&self) -> TtsTrainConfig {
        TtsTrainConfig {
            seed: self.seed,
            ..self.tts.train.clone()
        }
    }

    /// Adam settings shared by both trainers, with each trainer's own rate.
    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, ..self.nn.adam }
    }

    /// Feature pipeline with randomly initialised stem and adaptor.
    pub fn feature_pipeline(&self, rng: &mut impl Rng) -> FeaturePipeline {
        let f = &self.features;
        FeaturePipeline {
            plan: f.plan,
            mel: self.dsp.feature_mel,
            stem: EncoderStem::new(self.dsp.feature_mel.n_mels, f.stem_width, rng),
            adaptor: Adaptor::new(f.stem_width, f.adaptor_hidden, f.adaptor_width, rng),
        }
    }
}
