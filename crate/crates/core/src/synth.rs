//! Seeded ground-truth generators: grouped-sparse data, harmonic audio
//! sources and stationary textures.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::model::{
    ActiveGroupSet, CoefficientMatrix, GroupPartition, GroupedDictionary, SampleMatrix,
};
use crate::texture::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub m: usize,
    pub n_groups: usize,
    pub group_size: usize,
    pub active_groups: usize,
    pub atoms_per_group: usize,
    /// Signal-to-noise ratio in dB; `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    pub n: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            m: 64,
            n_groups: 8,
            group_size: 16,
            active_groups: 2,
            atoms_per_group: 3,
            snr_db: 30.0,
            n: 64,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 || self.n == 0 || self.n_groups == 0 || self.group_size == 0 {
            return bad("m, n, n_groups and group_size must be positive".into());
        }
        if self.active_groups == 0 || self.active_groups > self.n_groups {
            return bad(format!(
                "active_groups must lie in 1..={}, got {}",
                self.n_groups, self.active_groups
            ));
        }
        if self.atoms_per_group == 0 || self.atoms_per_group > self.group_size {
            return bad(format!(
                "atoms_per_group must lie in 1..={}, got {}",
                self.group_size, self.atoms_per_group
            ));
        }
        if self.snr_db.is_nan() {
            return bad("snr_db is NaN".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub dictionary: GroupedDictionary,
    pub samples: SampleMatrix,
    pub truth: ActiveGroupSet,
    pub coefficients: CoefficientMatrix,
    /// The additive noise actually drawn, `m x n`.
    pub noise: Array2<f64>,
}

/// Random unit-norm dictionary; the same `active_groups` groups in every
/// sample, with per-sample supports of `atoms_per_group` atoms inside each.
pub fn gen_grouped_sparse(spec: &SynthSpec) -> Result<SyntheticProblem> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.n_groups * spec.group_size;
    let atoms = Array2::from_shape_fn((spec.m, p), |_| StandardNormal.sample(&mut rng));
    let labels = (0..spec.n_groups).map(|g| format!("class{g}")).collect();
    let dictionary = GroupedDictionary::normalized(
        atoms,
        GroupPartition::uniform(spec.n_groups, spec.group_size)?,
        labels,
    )?;

    let mut active = index::sample(&mut rng, spec.n_groups, spec.active_groups).into_vec();
    active.sort_unstable();
    let mut a = Array2::<f64>::zeros((p, spec.n));
    for j in 0..spec.n {
        for &g in &active {
            let base = g * spec.group_size;
            for k in index::sample(&mut rng, spec.group_size, spec.atoms_per_group) {
                a[[base + k, j]] = StandardNormal.sample(&mut rng);
            }
        }
    }
    let clean = dictionary.atoms().dot(&a);
    let noise = if spec.snr_db.is_infinite() && spec.snr_db > 0.0 {
        Array2::zeros(clean.dim())
    } else {
        let power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
        let sigma = (power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
        let dist = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Array2::from_shape_fn(clean.dim(), |_| dist.sample(&mut rng))
    };
    let samples = SampleMatrix::indexed(&clean + &noise)?;
    Ok(SyntheticProblem {
        dictionary,
        samples,
        truth: ActiveGroupSet::from_indices(spec.n_groups, &active),
        coefficients: CoefficientMatrix::new(a)?,
        noise,
    })
}

/// Sum of all harmonics `k f0 < fs / 2` with amplitudes `envelope(k f0)` and
/// seeded random phases.
pub fn gen_harmonic(
    f0: f64,
    envelope: &dyn Fn(f64) -> f64,
    duration: f64,
    fs: f64,
    seed: u64,
) -> Result<AudioSignal> {
    if !(f0 > 0.0) || !(fs > 0.0) || !(duration > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "f0, fs and duration must be positive (f0={f0}, fs={fs}, duration={duration})"
        )));
    }
    let nyquist = fs / 2.0;
    let k_max = ((nyquist / f0).ceil() as usize).saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partials: Vec<(f64, f64, f64)> = (1..=k_max)
        .map(|k| {
            let freq = k as f64 * f0;
            let phase = rng.random_range(0.0..2.0 * PI);
            (freq, envelope(freq), phase)
        })
        .filter(|&(freq, amp, _)| freq < nyquist && amp != 0.0)
        .collect();
    let len = (duration * fs).round() as usize;
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            partials
                .iter()
                .map(|&(freq, amp, phase)| amp * (2.0 * PI * freq * t + phase).cos())
                .sum()
        })
        .collect();
    AudioSignal::new(samples, fs)
}

/// Smooth single-peak envelope `1 / (1 + ((f - center) / width)^2)`.
pub fn rational_envelope(center_hz: f64, width_hz: f64) -> impl Fn(f64) -> f64 {
    move |f| 1.0 / (1.0 + ((f - center_hz) / width_hz).powi(2))
}

/// Raised-cosine bump supported on `[low_hz, high_hz]`, zero elsewhere.
pub fn band_envelope(low_hz: f64, high_hz: f64) -> impl Fn(f64) -> f64 {
    move |f| {
        if f <= low_hz || f >= high_hz {
            0.0
        } else {
            let u = (f - low_hz) / (high_hz - low_hz);
            0.5 - 0.5 * (2.0 * PI * u).cos()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TextureKind {
    /// Plane wave; at 0 degrees every row is constant.
    OrientedSine { angle_deg: f64, period: f64 },
    /// Square checkerboard with random alignment.
    Checker { cell: usize },
    /// Sum of random plane waves with spatial frequencies (cycles/pixel)
    /// in `[low, high]` and orientations within `spread_deg` of `angle_deg`.
    NoiseBand {
        low: f64,
        high: f64,
        angle_deg: f64,
        spread_deg: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    pub kind: TextureKind,
    pub mean: f64,
    pub contrast: f64,
}

impl TextureSpec {
    pub fn new(kind: TextureKind) -> Self {
        Self {
            kind,
            mean: 128.0,
            contrast: 60.0,
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            TextureKind::OrientedSine { angle_deg, period } => {
                format!("sine-{angle_deg}deg-p{period}")
            }
            TextureKind::Checker { cell } => format!("checker-{cell}"),
            TextureKind::NoiseBand {
                low,
                high,
                angle_deg,
                spread_deg,
            } => format!("noiseband-{low}-{high}-{angle_deg}deg-{spread_deg}"),
        }
    }
}

const NOISE_BAND_WAVES: usize = 48;

/// Stationary seeded texture, clamped to `[0, 255]`.
pub fn gen_texture(
    spec: &TextureSpec,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<GrayImage> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidConfig(
            "texture dimensions must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern: Array2<f64> = match spec.kind {
        TextureKind::OrientedSine { angle_deg, period } => {
            if !(period > 0.0) {
                return Err(Error::InvalidConfig("period must be positive".into()));
            }
            let phase = rng.random_range(0.0..2.0 * PI);
            let (s, c) = angle_deg.to_radians().sin_cos();
            Array2::from_shape_fn((height, width), |(r, col)| {
                (2.0 * PI * (r as f64 * c + col as f64 * s) / period + phase).sin()
            })
        }
        TextureKind::Checker { cell } => {
            if cell == 0 {
                return Err(Error::InvalidConfig("checker cell must be positive".into()));
            }
            let dr = rng.random_range(0..cell);
            let dc = rng.random_range(0..cell);
            Array2::from_shape_fn((height, width), |(r, col)| {
                if ((r + dr) / cell + (col + dc) / cell) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
        }
        TextureKind::NoiseBand {
            low,
            high,
            angle_deg,
            spread_deg,
        } => {
            if !(low >= 0.0 && high > low) {
                return Err(Error::InvalidConfig(
                    "noise band needs 0 <= low < high".into(),
                ));
            }
            if !(spread_deg >= 0.0 && spread_deg <= 180.0) {
                return Err(Error::InvalidConfig(
                    "spread_deg must lie in [0, 180]".into(),
                ));
            }
            let (center, half) = (angle_deg.to_radians(), spread_deg.to_radians() / 2.0);
            let waves: Vec<(f64, f64, f64)> = (0..NOISE_BAND_WAVES)
                .map(|_| {
                    let radius = rng.random_range(low..high);
                    let theta = center + half * rng.random_range(-1.0..=1.0);
                    let phase = rng.random_range(0.0..2.0 * PI);
                    (radius * theta.cos(), radius * theta.sin(), phase)
                })
                .collect();
            let scale = (2.0 / NOISE_BAND_WAVES as f64).sqrt();
            Array2::from_shape_fn((height, width), |(r, col)| {
                scale
                    * waves
                        .iter()
                        .map(|&(fr, fc, ph)| {
                            (2.0 * PI * (fr * r as f64 + fc * col as f64) + ph).cos()
                        })
                        .sum::<f64>()
            })
        }
    };
    let pixels = pattern.mapv(|v| (spec.mean + spec.contrast * v).clamp(0.0, 255.0));
    GrayImage::new(pixels, format!("synthetic:{}:seed{seed}", spec.name()))
}

/// Sample-wise sum of signals with the given weights.
pub fn mix_signals(signals: &[&AudioSignal], weights: &[f64]) -> Result<AudioSignal> {
    let first = signals.first().ok_or(Error::Empty("signals"))?;
    if weights.len() != signals.len() {
        return Err(Error::mismatch(
            "mixing weights",
            signals.len(),
            weights.len(),
        ));
    }
    let len = signals.iter().map(|s| s.len()).min().unwrap_or(0);
    let mut out = vec![0.0; len];
    for (sig, &w) in signals.iter().zip(weights) {
        if sig.sample_rate() != first.sample_rate() {
            return Err(Error::mismatch(
                "sample rate",
                first.sample_rate(),
                sig.sample_rate(),
            ));
        }
        for (o, s) in out.iter_mut().zip(sig.samples()) {
            *o += w * s;
        }
    }
    AudioSignal::new(out, first.sample_rate())
}

/// Per-sample SNR in dB actually realized by a synthetic problem.
pub fn empirical_snr_db(problem: &SyntheticProblem) -> f64 {
    let clean = problem
        .dictionary
        .atoms()
        .dot(&problem.coefficients.values());
    let signal: f64 = clean.iter().map(|v| v * v).sum();
    let noise: f64 = problem.noise.iter().map(|v| v * v).sum();
    10.0 * (signal / noise).log10()
}

/// Column-wise energy of a matrix, used by tests and benches.
pub fn column_energies(x: &Array2<f64>) -> Vec<f64> {
    x.axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::group_energies;

    #[test]
    fn noiseless_single_atom_samples() {
        let spec = SynthSpec {
            active_groups: 1,
            atoms_per_group: 1,
            snr_db: f64::INFINITY,
            n: 10,
            ..Default::default()
        };
        let prob = gen_grouped_sparse(&spec).unwrap();
        let g = prob.truth.active_indices()[0];
        let d = prob.dictionary.atoms();
        let x = prob.samples.data();
        for j in 0..spec.n {
            let col = prob.coefficients.values().column(j).to_owned();
            let nz: Vec<usize> = (0..col.len()).filter(|&k| col[k] != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert_eq!(prob.dictionary.groups().group_of(nz[0]), Some(g));
            let expected = &d.column(nz[0]) * col[nz[0]];
            assert_eq!(x.column(j), expected);
        }
    }

    #[test]
    fn generator_is_seeded() {
        let spec = SynthSpec::default();
        let a = gen_grouped_sparse(&spec).unwrap();
        let b = gen_grouped_sparse(&spec).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.dictionary, b.dictionary);
        let c = gen_grouped_sparse(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn empirical_snr_matches_request() {
        for snr in [5.0, 15.0, 30.0] {
            let spec = SynthSpec {
                snr_db: snr,
                n: 128,
                seed: 3,
                ..Default::default()
            };
            let prob = gen_grouped_sparse(&spec).unwrap();
            assert!((empirical_snr_db(&prob) - snr).abs() < 0.5);
        }
    }

    #[test]
    fn truth_matches_coefficient_support() {
        let prob = gen_grouped_sparse(&SynthSpec {
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let energies =
            group_energies(prob.coefficients.values(), prob.dictionary.groups()).unwrap();
        for (e, &flag) in energies.iter().zip(prob.truth.flags()) {
            assert_eq!(*e > 0.0, flag);
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        let bad = SynthSpec {
            active_groups: 9,
            ..Default::default()
        };
        assert!(gen_grouped_sparse(&bad).is_err());
        let bad = SynthSpec {
            atoms_per_group: 17,
            ..Default::default()
        };
        assert!(gen_grouped_sparse(&bad).is_err());
    }

    #[test]
    fn first_harmonic_only_is_a_cosine() {
        let env = |f: f64| if (f - 200.0).abs() < 1e-9 { 1.0 } else { 0.0 };
        let sig = gen_harmonic(200.0, &env, 0.01, 16000.0, 4).unwrap();
        let s = sig.samples();
        let phase = s[0].acos();
        for (i, v) in s.iter().enumerate() {
            let t = i as f64 / 16000.0;
            let a = (2.0 * PI * 200.0 * t + phase).cos();
            let b = (2.0 * PI * 200.0 * t - phase).cos();
            assert!((v - a).abs() < 1e-9 || (v - b).abs() < 1e-9);
        }
        assert!(s.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn mixing_is_sample_wise_sum() {
        let e1 = rational_envelope(500.0, 300.0);
        let e2 = rational_envelope(2000.0, 800.0);
        let a = gen_harmonic(150.0, &e1, 0.1, 16000.0, 1).unwrap();
        let b = gen_harmonic(230.0, &e2, 0.1, 16000.0, 2).unwrap();
        let mix = mix_signals(&[&a, &b], &[1.0, 1.0]).unwrap();
        for i in 0..mix.len() {
            assert_eq!(mix.samples()[i], a.samples()[i] + b.samples()[i]);
        }
    }

    #[test]
    fn zero_degree_sine_is_row_constant() {
        let spec = TextureSpec::new(TextureKind::OrientedSine {
            angle_deg: 0.0,
            period: 7.0,
        });
        let img = gen_texture(&spec, 20, 30, 5).unwrap();
        for row in img.pixels().rows() {
            assert!(row.iter().all(|&v| v == row[0]));
        }
        let again = gen_texture(&spec, 20, 30, 5).unwrap();
        assert_eq!(img, again);
    }

    #[test]
    fn textures_stay_in_range() {
        for kind in [
            TextureKind::Checker { cell: 3 },
            TextureKind::NoiseBand {
                low: 0.05,
                high: 0.2,
                angle_deg: 0.0,
                spread_deg: 180.0,
            },
            TextureKind::OrientedSine {
                angle_deg: 45.0,
                period: 5.0,
            },
        ] {
            let img = gen_texture(&TextureSpec::new(kind), 16, 16, 2).unwrap();
            assert!(img.pixels().iter().all(|&v| (0.0..=255.0).contains(&v)));
        }
    }
}
