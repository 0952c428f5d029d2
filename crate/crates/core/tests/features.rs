use std::f64::consts::PI;

use chilasso::audio::{
    extract_features, frame_signal, load_wav, read_wav, resample, spectral_feature, write_wav,
    AudioSignal, FeatureConfig, Ingest, SpectralTransform, Window,
};
use chilasso::synth::{band_envelope, gen_harmonic, mix_signals};
use chilasso::SampleId;
use ndarray::{Array1, ArrayView1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 16000.0;

fn naive_magnitude(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let w = -2.0 * PI * (k * t) as f64 / n as f64;
                re += x * w.cos();
                im += x * w.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn naive_dct_ortho(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * (i as f64 + 0.5) * k as f64 / n).cos())
                .sum();
            s * if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            }
        })
        .collect()
}

fn naive_feature(frame: &[f64], fc: &FeatureConfig) -> Vec<f64> {
    let mag = naive_magnitude(frame);
    let emph: Vec<f64> = mag
        .iter()
        .enumerate()
        .map(|(k, m)| {
            m * (1.0 + fc.emphasis_alpha * k as f64 * fc.sample_rate / fc.frame_len as f64)
        })
        .collect();
    let mut d = naive_dct_ortho(&emph);
    d.truncate(fc.n_coeffs);
    d
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

#[test]
fn bin_cosine_matches_three_stage_oracle() {
    let fc = FeatureConfig::default();
    let bin = 20;
    let frame: Vec<f64> = (0..fc.frame_len)
        .map(|t| (2.0 * PI * (bin * t) as f64 / fc.frame_len as f64).cos())
        .collect();
    let got = spectral_feature(Array1::from(frame.clone()).view(), &fc).unwrap();
    let mag = naive_magnitude(&frame);
    // a unit cosine on an exact bin is a single spike of height N/2
    assert!((mag[bin] - 256.0).abs() < 1e-9);
    assert!(mag
        .iter()
        .enumerate()
        .all(|(k, m)| k == bin || m.abs() < 1e-9));
    let spike = 256.0 * (1.0 + 2.0 / FS * bin as f64 * FS / 512.0);
    let n = 257.0f64;
    for (k, g) in got.iter().enumerate() {
        let scale = if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        };
        let expect = spike * scale * (PI * (bin as f64 + 0.5) * k as f64 / n).cos();
        assert!(
            (g - expect).abs() < 1e-8,
            "coefficient {k}: {g} vs {expect}"
        );
    }
}

#[test]
fn random_frames_match_naive_pipeline() {
    let fc = FeatureConfig {
        frame_len: 64,
        n_coeffs: 20,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let frame: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = spectral_feature(Array1::from(frame.clone()).view(), &fc).unwrap();
        let want = naive_feature(&frame, &fc);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn frames_are_windowed_slices() {
    let fc = FeatureConfig::default();
    let samples: Vec<f64> = (0..1024).map(|i| (i as f64 * 0.01).sin()).collect();
    let sig = AudioSignal::new(samples.clone(), FS).unwrap();
    let frames = frame_signal(&sig, &fc).unwrap();
    let w = Window::Hann.coefficients(512);
    for j in 0..frames.ncols() {
        for i in 0..512 {
            assert_eq!(frames[[i, j]], samples[j * 128 + i] * w[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dct_preserves_norm(frame in proptest::collection::vec(-1.0f64..1.0, 128)) {
        let fc = FeatureConfig { frame_len: 128, n_coeffs: 10, ..Default::default() };
        let t = SpectralTransform::new(&fc).unwrap();
        let v = Array1::from(frame);
        let emph = t.emphasized(v.view()).unwrap();
        let full = t.full_feature(v.view()).unwrap();
        let a: f64 = emph.iter().map(|x| x * x).sum::<f64>().sqrt();
        let b: f64 = full.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn features_are_positively_homogeneous(
        frame in proptest::collection::vec(-1.0f64..1.0, 128),
        c in 0.01f64..100.0,
    ) {
        let fc = FeatureConfig { frame_len: 128, n_coeffs: 30, ..Default::default() };
        let v = Array1::from(frame);
        let f1 = spectral_feature(v.view(), &fc).unwrap();
        let f2 = spectral_feature((&v * c).view(), &fc).unwrap();
        for (a, b) in f1.iter().zip(f2.iter()) {
            prop_assert!((c * a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn zero_frame_gives_zero_feature() {
    let fc = FeatureConfig::default();
    let f = spectral_feature(Array1::zeros(512).view(), &fc).unwrap();
    assert!(f.iter().all(|&v| v == 0.0));
}

#[test]
fn extraction_is_deterministic_and_timestamped() {
    let env = band_envelope(200.0, 3000.0);
    let sig = gen_harmonic(180.0, &env, 0.5, FS, 2).unwrap();
    let fc = FeatureConfig::default();
    let a = extract_features(&sig, &fc).unwrap();
    let b = extract_features(&sig, &fc).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), 60);
    for (j, id) in a.ids().iter().enumerate() {
        assert_eq!(*id, SampleId::Time(j as f64 * 128.0 / FS));
    }
}

#[test]
fn stationary_tone_gives_near_identical_columns() {
    let env = |f: f64| 1.0 / (1.0 + (f / 1500.0).powi(2));
    let sig = gen_harmonic(200.0, &env, 1.0, FS, 1).unwrap();
    let f = extract_features(&sig, &FeatureConfig::default()).unwrap();
    let expected_frames = (16000 - 512) / 128 + 1;
    assert_eq!(f.n_samples(), expected_frames);
    let x = f.data();
    let c0 = x.column(0);
    for j in 1..x.ncols() {
        let d = &x.column(j) - &c0;
        assert!(norm(d.view()) / norm(c0) < 0.01, "column {j}");
    }
}

/// Sources at f0 multiples of 125 Hz fall exactly on FFT bins, and disjoint
/// bands keep every partial of one source away from the other's.
fn disjoint_pair(seed: u64) -> (AudioSignal, AudioSignal) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k1 = rng.random_range(1..=3) as f64;
    let k2 = rng.random_range(1..=3) as f64;
    let split = rng.random_range(1500.0..4500.0);
    let e1 = band_envelope(50.0, split);
    let e2 = band_envelope(split + 250.0, 7900.0);
    let a = gen_harmonic(125.0 * k1, &e1, 0.5, FS, rng.random()).unwrap();
    let b = gen_harmonic(125.0 * k2, &e2, 0.5, FS, rng.random()).unwrap();
    (a, b)
}

#[test]
fn disjoint_partials_mix_linearly() {
    let fc = FeatureConfig {
        voiced_energy_frac: 0.0,
        ..Default::default()
    };
    let (a, b) = disjoint_pair(5);
    let mix = mix_signals(&[&a, &b], &[1.0, 1.0]).unwrap();
    let fa = extract_features(&a, &fc).unwrap();
    let fb = extract_features(&b, &fc).unwrap();
    let fm = extract_features(&mix, &fc).unwrap();
    let sum = &fa.data() + &fb.data();
    let err = norm(
        (&fm.data() - &sum)
            .into_shape_with_order(sum.len())
            .unwrap()
            .view(),
    );
    let rel = err / norm(sum.view().into_shape_with_order(sum.len()).unwrap());
    assert!(rel <= 0.15, "relative additivity error {rel}");
}

#[test]
fn harmonic_peaks_sit_on_partial_bins() {
    let f0 = 230.0;
    let env = |f: f64| if f < 2000.0 { 1.0 } else { 0.0 };
    let sig = gen_harmonic(f0, &env, 0.1, FS, 9).unwrap();
    let frame: Vec<f64> = sig.samples()[..1024]
        .iter()
        .zip(Window::Hann.coefficients(1024))
        .map(|(x, w)| x * w)
        .collect();
    let mag = naive_magnitude(&frame);
    let bin_hz = FS / 1024.0;
    let mut k = 1;
    while k as f64 * f0 < 2000.0 {
        let target = k as f64 * f0 / bin_hz;
        let lo = target.floor() as usize - 3;
        let peak = (lo..lo + 7)
            .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
            .unwrap();
        assert!(
            (peak as f64 - target).abs() <= 1.0,
            "partial {k}: bin {peak} vs {target}"
        );
        k += 1;
    }
}

#[test]
fn wav_round_trip_and_resampling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let samples: Vec<f64> = (0..8000)
        .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / FS).sin())
        .collect();
    let sig = AudioSignal::new(samples, FS).unwrap();
    write_wav(&path, &sig).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate(), FS);
    assert_eq!(back.len(), sig.len());
    for (a, b) in back.samples().iter().zip(sig.samples()) {
        assert!((a - b).abs() <= 1.0 / 32767.0);
    }
    let (native, ingest) = load_wav(&path, FS).unwrap();
    assert_eq!(ingest, Ingest::Native);
    assert_eq!(native, back);

    let high = AudioSignal::new(
        (0..44100)
            .map(|i| (2.0 * PI * 440.0 * i as f64 / 44100.0).sin())
            .collect(),
        44100.0,
    )
    .unwrap();
    let low = resample(&high, FS).unwrap();
    assert_eq!(low.len(), 16000);
    let mid = &low.samples()[4000..12000];
    let err = mid
        .iter()
        .enumerate()
        .map(|(i, v)| (v - (2.0 * PI * 440.0 * (i + 4000) as f64 / FS).sin()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-2, "max resampling error {err}");
}

#[test]
fn stereo_is_averaged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stereo.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for _ in 0..10 {
        w.write_sample(16384i16).unwrap();
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let sig = read_wav(&path).unwrap();
    assert_eq!(sig.len(), 10);
    assert!(sig.samples().iter().all(|&v| (v - 0.25).abs() < 1e-12));
}
