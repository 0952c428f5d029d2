//! Audio source identification: per-class dictionaries learned from
//! spectral-envelope features, then per-frame collaborative coding of test
//! recordings and group detection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chilasso::audio::{extract_features, load_wav, AudioSignal, Ingest};
use chilasso::dictlearn::{concat_dictionaries, learn_subdictionary, TrainingSet};
use chilasso::identify::{detect_active, hamming};
use chilasso::synth::{gen_harmonic, rational_envelope};
use chilasso::{ActiveGroupSet, GroupedDictionary, SampleId, SampleMatrix, SolverConfig};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SyntheticAudio};
use crate::methods::{Method, MethodScore};
use crate::output::{fmt, Table};

/// Spectral envelope of synthetic class `c`: two resonances whose centers
/// move up with the class index.
pub fn class_envelope(c: usize) -> impl Fn(f64) -> f64 {
    let c = c as f64;
    let low = rational_envelope(300.0 + 420.0 * c, 120.0 + 30.0 * c);
    let high = rational_envelope(2300.0 + 650.0 * c, 250.0);
    move |f| low(f) + 0.5 * high(f)
}

/// A sequence of notes of random pitch sharing class `c`'s envelope.
pub fn synthetic_class_signal(
    c: usize,
    seconds: f64,
    syn: &SyntheticAudio,
    fs: f64,
    seed: u64,
) -> Result<AudioSignal> {
    let env = class_envelope(c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = (seconds * fs).round() as usize;
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        let f0 = rng.random_range(syn.f0_min..=syn.f0_max);
        let note = gen_harmonic(f0, &env, syn.note_seconds, fs, rng.random())?;
        let peak = note.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gain = if peak > 0.0 {
            syn.peak_amplitude / peak
        } else {
            0.0
        };
        out.extend(note.samples().iter().map(|v| v * gain));
    }
    out.truncate(total);
    Ok(AudioSignal::new(out, fs)?)
}

pub fn class_name(c: usize) -> String {
    format!("source{c}")
}

#[derive(Debug, Clone)]
pub struct TestRecording {
    pub name: String,
    pub signal: AudioSignal,
    pub truth: Vec<usize>,
    pub ingest: Ingest,
}

/// Feature matrix of a signal, optionally with unit-norm columns.
pub fn features(sig: &AudioSignal, cfg: &ExperimentConfig) -> Result<SampleMatrix> {
    let f = extract_features(sig, &cfg.feature_config())?;
    if !cfg.features.normalize_columns || f.is_empty() {
        return Ok(f);
    }
    let ids = f.ids().to_vec();
    let mut data = f.into_data();
    for mut col in data.axis_iter_mut(Axis(1)) {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(SampleMatrix::new(data, ids)?)
}

/// Training features per class, in class order.
pub struct ClassFeatures {
    pub labels: Vec<String>,
    pub features: Vec<SampleMatrix>,
    pub ingest: Vec<(String, Ingest)>,
}

fn hstack(parts: &[SampleMatrix], m: usize) -> Result<SampleMatrix> {
    let non_empty: Vec<&SampleMatrix> = parts.iter().filter(|p| !p.is_empty()).collect();
    if non_empty.is_empty() {
        return Ok(SampleMatrix::empty(m));
    }
    let views: Vec<_> = non_empty.iter().map(|p| p.data()).collect();
    let data = ndarray::concatenate(Axis(1), &views)?;
    let ids = non_empty
        .iter()
        .flat_map(|p| p.ids().iter().cloned())
        .collect();
    Ok(SampleMatrix::new(data, ids)?)
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

/// One sub-directory per class; class order is the sorted directory order.
pub fn load_class_features(train_dir: &Path, cfg: &ExperimentConfig) -> Result<ClassFeatures> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(train_dir)
        .with_context(|| format!("reading {}", train_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no class directories in {}", train_dir.display());
    }
    let fc = cfg.feature_config();
    let mut out = ClassFeatures {
        labels: Vec::new(),
        features: Vec::new(),
        ingest: Vec::new(),
    };
    for dir in dirs {
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let files = wav_files(&dir)?;
        if files.is_empty() {
            bail!("class directory {} contains no WAV files", dir.display());
        }
        let mut parts = Vec::new();
        for f in files {
            let (sig, ingest) = load_wav(&f, fc.sample_rate)?;
            out.ingest.push((f.display().to_string(), ingest));
            parts.push(features(&sig, cfg)?);
        }
        let all = hstack(&parts, fc.n_coeffs)?;
        if all.is_empty() {
            bail!("class {label} has no voiced frames");
        }
        out.labels.push(label);
        out.features.push(all);
    }
    Ok(out)
}

pub fn synthetic_class_features(cfg: &ExperimentConfig) -> Result<ClassFeatures> {
    let syn = &cfg.audio.synthetic;
    if syn.n_classes == 0 {
        bail!("audio.synthetic.n_classes must be positive");
    }
    let fs = cfg.features.sample_rate;
    let features = (0..syn.n_classes)
        .map(|c| {
            let sig =
                synthetic_class_signal(c, syn.class_seconds, syn, fs, train_seed(cfg.seed, c))?;
            features(&sig, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassFeatures {
        labels: (0..syn.n_classes).map(class_name).collect(),
        features,
        ingest: Vec::new(),
    })
}

fn train_seed(seed: u64, c: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(c as u64)
}

fn test_seed(seed: u64, rec: usize, c: usize) -> u64 {
    seed.wrapping_mul(7_919)
        .wrapping_add(1_000 + 97 * rec as u64 + c as u64)
}

pub fn class_features(cfg: &ExperimentConfig) -> Result<ClassFeatures> {
    match &cfg.audio.train_dir {
        Some(dir) => load_class_features(dir, cfg),
        None => synthetic_class_features(cfg),
    }
}

/// Learns one sub-dictionary per class from the leading `train_fraction`
/// of its feature columns.
pub fn learn_class_dictionaries(
    classes: &ClassFeatures,
    cfg: &ExperimentConfig,
) -> Result<Vec<GroupedDictionary>> {
    let learn = &cfg.learn;
    classes
        .features
        .par_iter()
        .zip(&classes.labels)
        .enumerate()
        .map(|(c, (feats, label))| {
            if feats.is_empty() {
                bail!("class {label} has no training samples");
            }
            let n_train = ((feats.n_samples() as f64 * learn.train_fraction).ceil() as usize)
                .clamp(1, feats.n_samples());
            let cols: Vec<usize> = (0..n_train).collect();
            let mut ts = TrainingSet::new(feats.select(&cols)?, label.clone());
            ts.atom_count = learn.atom_count;
            ts.lambda = learn.lambda;
            ts.epochs = learn.epochs;
            let learned =
                learn_subdictionary(&ts, &learn.solver_config(), train_seed(cfg.seed, c))?;
            log::info!(
                "class {label}: {} training columns, final cost {:.4}",
                n_train,
                learned
                    .objective_history
                    .last()
                    .copied()
                    .unwrap_or(f64::NAN)
            );
            Ok(learned.dictionary)
        })
        .collect()
}

/// Every single class and, when enabled, every pair, each summed with
/// unit weights.
pub fn synthetic_test_set(cfg: &ExperimentConfig) -> Result<Vec<TestRecording>> {
    let syn = &cfg.audio.synthetic;
    let fs = cfg.features.sample_rate;
    let mut combos: Vec<Vec<usize>> = (0..syn.n_classes).map(|c| vec![c]).collect();
    if syn.include_pairs {
        for a in 0..syn.n_classes {
            for b in a + 1..syn.n_classes {
                combos.push(vec![a, b]);
            }
        }
    }
    combos
        .into_iter()
        .enumerate()
        .map(|(r, truth)| {
            let len = (syn.test_seconds * fs).round() as usize;
            let mut mix = vec![0.0; len];
            for &c in &truth {
                let s = synthetic_class_signal(
                    c,
                    syn.test_seconds,
                    syn,
                    fs,
                    test_seed(cfg.seed, r, c),
                )?;
                for (m, v) in mix.iter_mut().zip(s.samples()) {
                    *m += v;
                }
            }
            let name = truth
                .iter()
                .map(|&c| class_name(c))
                .collect::<Vec<_>>()
                .join("+");
            Ok(TestRecording {
                name,
                signal: AudioSignal::new(mix, fs)?,
                truth,
                ingest: Ingest::Native,
            })
        })
        .collect()
}

/// Reads `path,labels` rows; labels are `;`-separated class names.
pub fn load_test_manifest(
    path: &Path,
    labels: &[String],
    cfg: &ExperimentConfig,
) -> Result<Vec<TestRecording>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let (Some(file), Some(names)) = (rec.get(0), rec.get(1)) else {
            bail!("manifest rows need `path,labels`");
        };
        let file = base.join(file.trim());
        let mut truth = Vec::new();
        for name in names.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            match labels.iter().position(|l| l == name) {
                Some(c) => truth.push(c),
                None => bail!("manifest label {name:?} is not a known class"),
            }
        }
        truth.sort_unstable();
        let (signal, ingest) = load_wav(&file, cfg.features.sample_rate)?;
        out.push(TestRecording {
            name: file.display().to_string(),
            signal,
            truth,
            ingest,
        });
    }
    Ok(out)
}

/// Feature column indices grouped into complete, non-overlapping frames.
pub fn frames(feats: &SampleMatrix, duration: f64, frame_seconds: f64) -> Vec<Vec<usize>> {
    let n_frames = (duration / frame_seconds + 1e-9).floor() as usize;
    let mut out = vec![Vec::new(); n_frames];
    for (j, id) in feats.ids().iter().enumerate() {
        if let SampleId::Time(t) = id {
            let k = (t / frame_seconds).floor() as usize;
            if k < n_frames {
                out[k].push(j);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub recording: String,
    pub frame: usize,
    pub method: Method,
    pub n_columns: usize,
    pub energies: Vec<f64>,
    pub detected: ActiveGroupSet,
    pub truth: ActiveGroupSet,
    pub hamming: usize,
    pub iterations: usize,
    pub objective: f64,
}

pub struct IdentifyResult {
    pub frames: Vec<FrameResult>,
    pub scores: Vec<MethodScore>,
}

/// Codes every frame of every recording with each method and scores the
/// detections against the recordings' truth.
pub fn identify(
    dict: &GroupedDictionary,
    tests: &[TestRecording],
    cfg: &ExperimentConfig,
    methods: &[Method],
) -> Result<IdentifyResult> {
    let g = dict.n_groups();
    let dc = cfg.detection_config();
    let base = cfg.solver_config();
    let mut jobs = Vec::new();
    for rec in tests {
        let feats = features(&rec.signal, cfg)?;
        if feats.dim() != dict.dim() {
            bail!(
                "feature dimension {} does not match dictionary dimension {}",
                feats.dim(),
                dict.dim()
            );
        }
        let truth = ActiveGroupSet::from_indices(g, &rec.truth);
        for (k, cols) in frames(&feats, rec.signal.duration(), cfg.frame_seconds())
            .into_iter()
            .enumerate()
        {
            let x = if cols.is_empty() {
                None
            } else {
                Some(feats.select(&cols)?.into_data())
            };
            for &method in methods {
                jobs.push((rec.name.clone(), k, method, x.clone(), truth.clone()));
            }
        }
    }
    let frames = jobs
        .into_par_iter()
        .map(|(recording, frame, method, x, truth)| {
            code_frame(dict, x, &method.config(&base), &dc, truth).map(|c| FrameResult {
                recording,
                frame,
                method,
                n_columns: c.n_columns,
                energies: c.energies,
                detected: c.detected,
                hamming: c.hamming,
                truth: c.truth,
                iterations: c.iterations,
                objective: c.objective,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = MethodScore::collect(
        methods,
        frames.iter().map(|f| (f.method, f.hamming as f64, None)),
    );
    Ok(IdentifyResult { frames, scores })
}

struct Coded {
    n_columns: usize,
    energies: Vec<f64>,
    detected: ActiveGroupSet,
    truth: ActiveGroupSet,
    hamming: usize,
    iterations: usize,
    objective: f64,
}

fn code_frame(
    dict: &GroupedDictionary,
    x: Option<Array2<f64>>,
    sc: &SolverConfig,
    dc: &chilasso::identify::DetectionConfig,
    truth: ActiveGroupSet,
) -> Result<Coded> {
    let g = dict.n_groups();
    let Some(x) = x else {
        let detected = ActiveGroupSet::from_flags(vec![false; g]);
        let hamming = hamming(&detected, &truth)?;
        return Ok(Coded {
            n_columns: 0,
            energies: vec![0.0; g],
            detected,
            truth,
            hamming,
            iterations: 0,
            objective: 0.0,
        });
    };
    let r = chilasso::solve_chilasso(dict, x.view(), sc)?;
    let detected = detect_active(r.coefficients.values(), dict.groups(), dc)?;
    let hamming = hamming(&detected, &truth)?;
    Ok(Coded {
        n_columns: x.ncols(),
        energies: detected.energies().to_vec(),
        detected,
        truth,
        hamming,
        iterations: r.iterations,
        objective: r.final_objective,
    })
}

pub fn frame_table(dict: &GroupedDictionary, frames: &[FrameResult]) -> Table {
    let labels = dict.labels();
    let mut header = vec![
        "recording".to_string(),
        "frame_id".into(),
        "method".into(),
        "n_columns".into(),
    ];
    header.extend(labels.iter().map(|l| format!("energy_{l}")));
    header.extend(labels.iter().map(|l| format!("flag_{l}")));
    header.extend(labels.iter().map(|l| format!("truth_{l}")));
    header.extend(["hamming".into(), "iterations".into(), "objective".into()]);
    let mut t = Table::new(header);
    for f in frames {
        let mut row = vec![
            f.recording.clone(),
            f.frame.to_string(),
            f.method.name().to_string(),
            f.n_columns.to_string(),
        ];
        row.extend(f.energies.iter().map(|&e| fmt(e)));
        row.extend(f.detected.flags().iter().map(|&b| (b as u8).to_string()));
        row.extend(f.truth.flags().iter().map(|&b| (b as u8).to_string()));
        row.extend([
            f.hamming.to_string(),
            f.iterations.to_string(),
            fmt(f.objective),
        ]);
        t.push(row);
    }
    t
}

/// Stacks per-class dictionaries into one grouped dictionary.
pub fn stack(parts: &[GroupedDictionary]) -> Result<GroupedDictionary> {
    Ok(concat_dictionaries(parts)?)
}
