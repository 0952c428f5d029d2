//! JSON experiment configuration. Every field has a default, so `{}` is a
//! valid file; command-line flags override values read from the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chilasso::audio::{FeatureConfig, Window};
use chilasso::identify::{DetectionConfig, RiskForm};
use chilasso::synth::{SynthSpec, TextureKind, TextureSpec};
use chilasso::texture::PatchConfig;
use chilasso::{Lambda2Scaling, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    AudioIdentify,
    TextureSeparate,
    SynthBench,
    LearnDict,
    Encode,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::AudioIdentify => "audio-identify",
            Mode::TextureSeparate => "texture-separate",
            Mode::SynthBench => "synth-bench",
            Mode::LearnDict => "learn-dict",
            Mode::Encode => "encode",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
    pub baselines: bool,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub solver: SolverSection,
    pub detection: DetectionSection,
    pub features: FeatureSection,
    pub patches: PatchSection,
    pub learn: LearnSection,
    pub audio: AudioSection,
    pub texture: TextureSection,
    pub synth: SynthSection,
    pub encode: EncodeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            seed: 0,
            out: PathBuf::from("results"),
            force: false,
            baselines: false,
            jobs: None,
            solver: SolverSection::default(),
            detection: DetectionSection::default(),
            features: FeatureSection::default(),
            patches: PatchSection::default(),
            learn: LearnSection::default(),
            audio: AudioSection::default(),
            texture: TextureSection::default(),
            synth: SynthSection::default(),
            encode: EncodeSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fills mode-dependent defaults and checks ranges and paths.
    pub fn resolve(mut self) -> Result<Self> {
        let (l1, l2) = match self.mode {
            Mode::TextureSeparate => (TEXTURE_LAMBDA1, TEXTURE_LAMBDA2_0),
            Mode::AudioIdentify | Mode::LearnDict | Mode::Encode => match self.audio.preset {
                AudioPreset::Speakers => (0.8, 0.008),
                AudioPreset::Instruments => (0.8, 0.015),
            },
            Mode::SynthBench => (0.8, 0.008),
        };
        self.solver.lambda1.get_or_insert(l1);
        self.solver.lambda2_0.get_or_insert(l2);
        self.audio
            .frame_seconds
            .get_or_insert(match self.audio.preset {
                AudioPreset::Speakers => 15.0,
                AudioPreset::Instruments => 3.0,
            });
        self.solver_config().validate()?;
        self.detection_config().validate()?;
        self.feature_config().validate()?;
        self.patch_config().validate()?;
        self.learn.validate()?;
        if !(self.audio.frame_seconds.unwrap_or(0.0) > 0.0) {
            bail!("audio.frame_seconds must be positive");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        for p in self.input_paths() {
            if !p.exists() {
                bail!("input path {} does not exist", p.display());
            }
        }
        Ok(self)
    }

    fn input_paths(&self) -> Vec<&PathBuf> {
        let mut v: Vec<&PathBuf> = Vec::new();
        v.extend(self.audio.train_dir.iter());
        v.extend(self.audio.test_manifest.iter());
        v.extend(self.audio.dict_dir.iter());
        v.extend(self.texture.images.iter());
        v.extend(self.texture.dict_dir.iter());
        if self.mode == Mode::Encode {
            v.extend(self.encode.dictionary.iter());
            v.extend(self.encode.input.iter());
        }
        v
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.to_config()
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            rel_threshold: self.detection.rel_threshold,
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        self.features.to_config()
    }

    pub fn patch_config(&self) -> PatchConfig {
        PatchConfig {
            patch: self.patches.patch,
            stride: self.patches.stride,
        }
    }

    pub fn frame_seconds(&self) -> f64 {
        self.audio.frame_seconds.unwrap_or(15.0)
    }
}

pub const TEXTURE_LAMBDA1: f64 = 0.05;
pub const TEXTURE_LAMBDA2_0: f64 = 0.01;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingName {
    #[default]
    SqrtGroupSizeTimesSamples,
    Unscaled,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Defaults depend on the mode.
    pub lambda1: Option<f64>,
    pub lambda2_0: Option<f64>,
    pub lambda2_scaling: ScalingName,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub deterministic: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            lambda1: None,
            lambda2_0: None,
            lambda2_scaling: ScalingName::default(),
            max_iters: 1000,
            rel_tol: 1e-5,
            deterministic: d.deterministic,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            lambda1: self.lambda1.unwrap_or(d.lambda1),
            lambda2_0: self.lambda2_0.unwrap_or(d.lambda2_0),
            lambda2_scaling: match self.lambda2_scaling {
                ScalingName::SqrtGroupSizeTimesSamples => Lambda2Scaling::SqrtGroupSizeTimesSamples,
                ScalingName::Unscaled => Lambda2Scaling::Unscaled,
            },
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            deterministic: self.deterministic,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub rel_threshold: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            rel_threshold: DetectionConfig::default().rel_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowName {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub sample_rate: f64,
    pub frame_len: usize,
    pub overlap: f64,
    pub window: WindowName,
    /// Defaults to `2 / sample_rate`.
    pub emphasis_alpha: Option<f64>,
    pub n_coeffs: usize,
    pub voiced_energy_frac: f64,
    /// Scale every feature column to unit l2 norm before coding.
    pub normalize_columns: bool,
}

impl Default for FeatureSection {
    fn default() -> Self {
        let d = FeatureConfig::default();
        Self {
            sample_rate: d.sample_rate,
            frame_len: d.frame_len,
            overlap: d.overlap,
            window: WindowName::Hann,
            emphasis_alpha: None,
            n_coeffs: d.n_coeffs,
            voiced_energy_frac: d.voiced_energy_frac,
            normalize_columns: true,
        }
    }
}

impl FeatureSection {
    pub fn to_config(&self) -> FeatureConfig {
        FeatureConfig {
            sample_rate: self.sample_rate,
            frame_len: self.frame_len,
            overlap: self.overlap,
            window: match self.window {
                WindowName::Hann => Window::Hann,
                WindowName::Hamming => Window::Hamming,
                WindowName::Rectangular => Window::Rectangular,
            },
            emphasis_alpha: self.emphasis_alpha.unwrap_or(2.0 / self.sample_rate),
            n_coeffs: self.n_coeffs,
            voiced_energy_frac: self.voiced_energy_frac,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSection {
    pub patch: usize,
    pub stride: usize,
}

impl Default for PatchSection {
    fn default() -> Self {
        let d = PatchConfig::default();
        Self {
            patch: d.patch,
            stride: d.stride,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    #[default]
    Audio,
    Texture,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub domain: Domain,
    pub atom_count: usize,
    pub lambda: f64,
    pub epochs: usize,
    /// Leading fraction of each class's feature columns used for training.
    pub train_fraction: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for LearnSection {
    fn default() -> Self {
        Self {
            domain: Domain::Audio,
            atom_count: 90,
            lambda: 0.1,
            epochs: 20,
            train_fraction: 0.25,
            max_iters: 300,
            rel_tol: 1e-4,
        }
    }
}

impl LearnSection {
    fn validate(&self) -> Result<()> {
        if self.atom_count == 0 || self.epochs == 0 || self.max_iters == 0 {
            bail!("learn.atom_count, learn.epochs and learn.max_iters must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            bail!("learn.train_fraction must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0) || !(self.rel_tol > 0.0) {
            bail!("learn.lambda must be nonnegative and learn.rel_tol positive");
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AudioPreset {
    #[default]
    Speakers,
    Instruments,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RiskName {
    #[default]
    SquaredResidual,
    Residual,
}

impl RiskName {
    pub fn form(self) -> RiskForm {
        match self {
            RiskName::SquaredResidual => RiskForm::SquaredResidual,
            RiskName::Residual => RiskForm::Residual,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AudioSection {
    pub preset: AudioPreset,
    /// Defaults to 15 s for speakers and 3 s for instruments.
    pub frame_seconds: Option<f64>,
    /// One sub-directory of WAV files per class.
    pub train_dir: Option<PathBuf>,
    /// CSV with columns `path,labels`, labels separated by `;`.
    pub test_manifest: Option<PathBuf>,
    /// Directory written by `learn-dict`; skips training when set.
    pub dict_dir: Option<PathBuf>,
    pub synthetic: SyntheticAudio,
}

impl Default for AudioSection {
    fn default() -> Self {
        Self {
            preset: AudioPreset::Speakers,
            frame_seconds: None,
            train_dir: None,
            test_manifest: None,
            dict_dir: None,
            synthetic: SyntheticAudio::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticAudio {
    pub n_classes: usize,
    /// Seconds of audio generated per class for training.
    pub class_seconds: f64,
    /// Length of each test recording.
    pub test_seconds: f64,
    pub note_seconds: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub peak_amplitude: f64,
    /// Test recordings: every single class and every pair when true.
    pub include_pairs: bool,
}

impl Default for SyntheticAudio {
    fn default() -> Self {
        Self {
            n_classes: 5,
            class_seconds: 8.0,
            test_seconds: 30.0,
            note_seconds: 0.5,
            f0_min: 100.0,
            f0_max: 300.0,
            peak_amplitude: 0.3,
            include_pairs: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSection {
    /// Source images; synthetic classes are generated when empty.
    pub images: Vec<PathBuf>,
    pub dict_dir: Option<PathBuf>,
    pub synthetic: Vec<TextureClass>,
    pub height: usize,
    pub width: usize,
    pub atom_count: usize,
    pub learn_lambda: f64,
    pub epochs: usize,
    pub mixture_size: usize,
    /// Mixing weight of every source.
    pub weight: f64,
    /// Pixel values are divided by this before coding.
    pub pixel_scale: f64,
    /// Subtract each patch mean before coding and share it among the
    /// detected sources afterwards.
    pub center: bool,
    pub write_images: bool,
}

impl Default for TextureSection {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            dict_dir: None,
            synthetic: TextureClass::defaults(),
            height: 64,
            width: 128,
            atom_count: 40,
            learn_lambda: 0.05,
            epochs: 10,
            mixture_size: 2,
            weight: 0.5,
            pixel_scale: 255.0,
            center: false,
            write_images: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TextureClass {
    OrientedSine {
        angle_deg: f64,
        period: f64,
    },
    Checker {
        cell: usize,
    },
    NoiseBand {
        low: f64,
        high: f64,
        angle_deg: f64,
        spread_deg: f64,
    },
}

impl TextureClass {
    pub fn defaults() -> Vec<Self> {
        let nb = |low, high, angle_deg, spread_deg| TextureClass::NoiseBand {
            low,
            high,
            angle_deg,
            spread_deg,
        };
        vec![
            nb(0.08, 0.18, 0.0, 30.0),
            nb(0.08, 0.18, 90.0, 30.0),
            nb(0.25, 0.4, 45.0, 60.0),
            nb(0.08, 0.18, 135.0, 30.0),
        ]
    }

    pub fn spec(self) -> TextureSpec {
        TextureSpec::new(match self {
            TextureClass::OrientedSine { angle_deg, period } => {
                TextureKind::OrientedSine { angle_deg, period }
            }
            TextureClass::Checker { cell } => TextureKind::Checker { cell },
            TextureClass::NoiseBand {
                low,
                high,
                angle_deg,
                spread_deg,
            } => TextureKind::NoiseBand {
                low,
                high,
                angle_deg,
                spread_deg,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub m: usize,
    pub n_groups: usize,
    pub group_size: usize,
    pub atoms_per_group: usize,
    pub snr_db: Vec<f64>,
    pub active_groups: Vec<usize>,
    pub n: Vec<usize>,
    /// `(lambda1, lambda2_0)` pairs; empty uses the solver section.
    pub lambda_grid: Vec<(f64, f64)>,
    pub trials: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthSpec::default();
        Self {
            m: d.m,
            n_groups: d.n_groups,
            group_size: d.group_size,
            atoms_per_group: d.atoms_per_group,
            snr_db: vec![30.0, 20.0, 15.0, 10.0, 5.0],
            active_groups: vec![d.active_groups],
            n: vec![d.n],
            lambda_grid: Vec::new(),
            trials: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncodePenalty {
    #[default]
    Hilasso,
    Lasso,
    GroupLasso,
    CollaborativeLasso,
    Cglasso,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    /// A GDICT1 file.
    pub dictionary: Option<PathBuf>,
    /// WAV (features), PGM/PNG (patches) or CSV (one column per sample).
    pub input: Option<PathBuf>,
    pub penalty: EncodePenalty,
    /// Also assign every column to a class by per-class risk.
    pub classify: bool,
    pub risk: RiskName,
}
