//! Spectral-envelope audio features: framing, windowed STFT magnitude,
//! linear frequency emphasis, orthonormal DCT-II and truncation.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{SampleId, SampleMatrix};

pub const CANONICAL_RATE: f64 = 16_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|v| c * v).collect(),
            self.sample_rate,
        )
    }

    /// Samples `[start, end)` in seconds, clipped to the signal.
    pub fn slice_seconds(&self, start: f64, end: f64) -> Result<Self> {
        let to_idx = |t: f64| ((t * self.sample_rate).round().max(0.0) as usize).min(self.len());
        let (a, b) = (to_idx(start), to_idx(end));
        Self::new(self.samples[a..b.max(a)].to_vec(), self.sample_rate)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Periodic Hann.
    #[default]
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let c = (2.0 * PI * i as f64 / n).cos();
                match self {
                    Window::Hann => 0.5 - 0.5 * c,
                    Window::Hamming => 0.54 - 0.46 * c,
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub sample_rate: f64,
    pub frame_len: usize,
    pub overlap: f64,
    pub window: Window,
    /// Slope of the emphasis `1 + alpha * f` with `f` in Hz.
    pub emphasis_alpha: f64,
    pub n_coeffs: usize,
    pub voiced_energy_frac: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: CANONICAL_RATE,
            frame_len: 512,
            overlap: 0.75,
            window: Window::Hann,
            emphasis_alpha: 2.0 / CANONICAL_RATE,
            n_coeffs: 60,
            voiced_energy_frac: 0.1,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return bad(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            ));
        }
        if self.frame_len == 0 {
            return bad("frame_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap must lie in [0, 1), got {}", self.overlap));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_bins() {
            return bad(format!(
                "n_coeffs must lie in 1..={}, got {}",
                self.n_bins(),
                self.n_coeffs
            ));
        }
        if !self.emphasis_alpha.is_finite() {
            return bad("emphasis_alpha must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.voiced_energy_frac) {
            return bad(format!(
                "voiced_energy_frac must lie in [0, 1], got {}",
                self.voiced_energy_frac
            ));
        }
        if self.hop() == 0 {
            return bad("overlap leaves a zero hop".into());
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        (self.frame_len as f64 * (1.0 - self.overlap)).round() as usize
    }

    /// Positive-frequency bins `0..=frame_len/2`.
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop() + 1
        }
    }

    pub fn emphasis(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|k| {
                1.0 + self.emphasis_alpha * k as f64 * self.sample_rate / self.frame_len as f64
            })
            .collect()
    }
}

/// Windowed frames as columns, `frame_len x n_frames`.
pub fn frame_signal(sig: &AudioSignal, fc: &FeatureConfig) -> Result<Array2<f64>> {
    fc.validate()?;
    if sig.len() < fc.frame_len {
        return Err(Error::SignalTooShort {
            len: sig.len(),
            needed: fc.frame_len,
        });
    }
    let hop = fc.hop();
    let win = fc.window.coefficients(fc.frame_len);
    let s = sig.samples();
    Ok(Array2::from_shape_fn(
        (fc.frame_len, fc.n_frames(sig.len())),
        |(i, j)| s[j * hop + i] * win[i],
    ))
}

/// Reusable FFT and DCT plans for one frame length.
pub struct SpectralTransform {
    fc: FeatureConfig,
    fft: Arc<dyn Fft<f64>>,
    dct: Arc<dyn TransformType2And3<f64>>,
    emphasis: Vec<f64>,
}

impl SpectralTransform {
    pub fn new(fc: &FeatureConfig) -> Result<Self> {
        fc.validate()?;
        Ok(Self {
            fc: *fc,
            fft: FftPlanner::new().plan_fft_forward(fc.frame_len),
            dct: DctPlanner::new().plan_dct2(fc.n_bins()),
            emphasis: fc.emphasis(),
        })
    }

    /// Magnitude of the positive-frequency DFT bins.
    pub fn magnitude(&self, frame: ArrayView1<f64>) -> Result<Vec<f64>> {
        if frame.len() != self.fc.frame_len {
            return Err(Error::mismatch(
                "frame length",
                self.fc.frame_len,
                frame.len(),
            ));
        }
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        Ok(buf[..self.fc.n_bins()].iter().map(|c| c.norm()).collect())
    }

    pub fn emphasized(&self, frame: ArrayView1<f64>) -> Result<Vec<f64>> {
        let mut mag = self.magnitude(frame)?;
        for (m, w) in mag.iter_mut().zip(&self.emphasis) {
            *m *= w;
        }
        Ok(mag)
    }

    /// Full-length orthonormal DCT-II of the emphasized magnitude.
    pub fn full_feature(&self, frame: ArrayView1<f64>) -> Result<Vec<f64>> {
        let mut buf = self.emphasized(frame)?;
        self.dct.process_dct2(&mut buf);
        let n = buf.len() as f64;
        let (s0, s) = ((1.0 / n).sqrt(), (2.0 / n).sqrt());
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= if k == 0 { s0 } else { s };
        }
        Ok(buf)
    }

    pub fn feature(&self, frame: ArrayView1<f64>) -> Result<Array1<f64>> {
        let mut full = self.full_feature(frame)?;
        full.truncate(self.fc.n_coeffs);
        Ok(Array1::from(full))
    }
}

/// Feature of one (already windowed) frame.
pub fn spectral_feature(frame: ArrayView1<f64>, fc: &FeatureConfig) -> Result<Array1<f64>> {
    SpectralTransform::new(fc)?.feature(frame)
}

/// Indices of frames whose energy reaches `voiced_energy_frac` of the
/// loudest frame. A recording whose loudest frame is silent selects nothing.
pub fn select_voiced(frames: ArrayView2<f64>, fc: &FeatureConfig) -> Vec<usize> {
    let energies: Vec<f64> = frames
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    select_by_energy(&energies, fc.voiced_energy_frac)
}

pub fn select_by_energy(energies: &[f64], frac: f64) -> Vec<usize> {
    let max = energies.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let thr = frac * max;
    (0..energies.len())
        .filter(|&j| energies[j] >= thr)
        .collect()
}

/// Features of the voiced frames, ordered by time; ids carry frame start
/// times in seconds.
pub fn extract_features(sig: &AudioSignal, fc: &FeatureConfig) -> Result<SampleMatrix> {
    if (sig.sample_rate() - fc.sample_rate).abs() > 1e-9 * fc.sample_rate {
        return Err(Error::mismatch(
            "sample rate",
            fc.sample_rate,
            sig.sample_rate(),
        ));
    }
    let frames = frame_signal(sig, fc)?;
    let voiced = select_voiced(frames.view(), fc);
    if voiced.is_empty() {
        log::warn!("no voiced frames in {:.3} s of audio", sig.duration());
        return Ok(SampleMatrix::empty(fc.n_coeffs));
    }
    let transform = SpectralTransform::new(fc)?;
    let columns = voiced
        .par_iter()
        .map(|&j| transform.feature(frames.column(j)))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Array2::zeros((fc.n_coeffs, voiced.len()));
    for (mut dst, col) in data.axis_iter_mut(Axis(1)).zip(&columns) {
        dst.assign(col);
    }
    let hop = fc.hop() as f64;
    let ids = voiced
        .iter()
        .map(|&j| SampleId::Time(j as f64 * hop / fc.sample_rate))
        .collect();
    SampleMatrix::new(data, ids)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ingest {
    Native,
    Resampled { from: f64 },
}

/// Reads a PCM or float WAV, averaging channels to mono.
pub fn read_wav(path: &Path) -> Result<AudioSignal> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
    };
    let ch = spec.channels.max(1) as usize;
    let mono = interleaved
        .chunks_exact(ch)
        .map(|c| c.iter().sum::<f64>() / ch as f64)
        .collect();
    AudioSignal::new(mono, spec.sample_rate as f64)
}

/// Reads a WAV and brings it to `rate`, resampling when needed.
pub fn load_wav(path: &Path, rate: f64) -> Result<(AudioSignal, Ingest)> {
    let sig = read_wav(path)?;
    if (sig.sample_rate() - rate).abs() <= 1e-9 * rate {
        Ok((sig, Ingest::Native))
    } else {
        let from = sig.sample_rate();
        Ok((resample(&sig, rate)?, Ingest::Resampled { from }))
    }
}

/// Writes 16-bit mono PCM, clamping to `[-1, 1]`.
pub fn write_wav(path: &Path, sig: &AudioSignal) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &v in sig.samples() {
        w.write_sample((v.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)
            .map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

const SINC_HALF_WIDTH: usize = 32;

/// Band-limited resampling with a Blackman-windowed sinc kernel.
pub fn resample(sig: &AudioSignal, rate: f64) -> Result<AudioSignal> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "target rate must be positive, got {rate}"
        )));
    }
    let ratio = rate / sig.sample_rate();
    let cutoff = ratio.min(1.0) * 0.95;
    let half = SINC_HALF_WIDTH as f64 / cutoff;
    let src = sig.samples();
    let out_len = (src.len() as f64 * ratio).round() as usize;
    let out = (0..out_len)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / ratio;
            let lo = (t - half).ceil().max(0.0) as usize;
            let hi = ((t + half).floor() as usize).min(src.len().saturating_sub(1));
            (lo..=hi)
                .map(|j| {
                    let x = j as f64 - t;
                    let u = x / half;
                    let w = 0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos();
                    let arg = PI * cutoff * x;
                    let sinc = if arg == 0.0 { 1.0 } else { arg.sin() / arg };
                    src[j] * cutoff * sinc * w
                })
                .sum()
        })
        .collect();
    AudioSignal::new(out, rate)
}

/// CSV with one column per frame: a header row of start times in seconds,
/// then one row per coefficient.
pub fn write_features_csv(path: &Path, features: &SampleMatrix) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Format(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let header: Vec<String> = features
        .ids()
        .iter()
        .map(|id| match id {
            SampleId::Time(t) => format!("{t}"),
            SampleId::Index(i) => format!("{i}"),
            SampleId::Patch { row, col } => format!("{row}:{col}"),
        })
        .collect();
    if !header.is_empty() {
        w.write_record(&header).map_err(io)?;
    }
    for row in features.data().rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
