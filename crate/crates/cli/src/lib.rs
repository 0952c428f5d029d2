//! Experiment orchestration for grouped sparse coding: dictionary training,
//! audio source identification, texture separation, synthetic benchmarks
//! and one-off encoding.

pub mod audio_exp;
pub mod bench;
pub mod config;
pub mod methods;
pub mod output;
pub mod texture_exp;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chilasso::dictlearn::split_dictionary;
use chilasso::identify::{detect_active, risk_classify};
use chilasso::texture::{extract_patches, read_image, write_pgm};
use chilasso::{gdict, GroupedDictionary, Penalty, SampleId, SampleMatrix};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Domain, EncodePenalty, ExperimentConfig, Mode};
use crate::methods::{Method, MethodScore};
use crate::output::{fmt, Metadata, Staged, Table};

/// Outcome of one self-check performed during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub checks: Vec<Check>,
    pub scores: Vec<MethodScore>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the configured mode and commits its output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let staged = Staged::begin(&cfg.out, cfg.force)?;
    let (checks, scores) = match cfg.mode {
        Mode::LearnDict => (learn_dict(cfg, &staged)?, Vec::new()),
        Mode::AudioIdentify => audio_identify(cfg, &staged)?,
        Mode::TextureSeparate => texture_separate(cfg, &staged)?,
        Mode::SynthBench => (synth_bench(cfg, &staged)?, Vec::new()),
        Mode::Encode => (encode(cfg, &staged)?, Vec::new()),
    };
    staged.write_json(
        "run.json",
        &json!({
            "mode": cfg.mode.name(),
            "seed": cfg.seed,
            "version": output::VERSION,
            "config": cfg,
            "checks": checks,
            "scores": scores,
        }),
    )?;
    let out_dir = staged.commit()?;
    Ok(RunSummary {
        out_dir,
        checks,
        scores,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub label: String,
    pub file: String,
    pub dim: usize,
    pub atoms: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub domain: Domain,
    pub seed: u64,
    pub version: String,
    pub classes: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Loads the per-class dictionaries listed in a `learn-dict` manifest.
pub fn load_dictionaries(dir: &Path) -> Result<(Manifest, Vec<GroupedDictionary>)> {
    let path = dir.join(MANIFEST);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let dicts = manifest
        .classes
        .iter()
        .map(|e| {
            let d = gdict::load(dir.join(&e.file))?;
            if d.dim() != e.dim || d.n_atoms() != e.atoms {
                bail!("dictionary {} does not match its manifest entry", e.file);
            }
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, dicts))
}

fn write_dictionaries(
    dir: &Path,
    domain: Domain,
    seed: u64,
    dicts: &[GroupedDictionary],
) -> Result<Manifest> {
    let mut classes = Vec::new();
    for d in dicts {
        let label = d.labels().join("+");
        let file = format!("{label}.gdict");
        gdict::save(d, dir.join(&file))?;
        classes.push(ManifestEntry {
            label,
            file,
            dim: d.dim(),
            atoms: d.n_atoms(),
        });
    }
    let manifest = Manifest {
        domain,
        seed,
        version: output::VERSION.into(),
        classes,
    };
    std::fs::write(
        dir.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

fn learn_dict(cfg: &ExperimentConfig, staged: &Staged) -> Result<Vec<Check>> {
    let dicts = match cfg.learn.domain {
        Domain::Audio => {
            let classes = audio_exp::class_features(cfg)?;
            audio_exp::learn_class_dictionaries(&classes, cfg)?
        }
        Domain::Texture => {
            let sources = texture_exp::sources(cfg)?;
            texture_exp::learn_dictionaries(&sources, cfg)?
        }
    };
    let manifest = write_dictionaries(staged.path(), cfg.learn.domain, cfg.seed, &dicts)?;
    let mut t = Table::new(["label", "file", "dim", "atoms"]);
    for e in &manifest.classes {
        t.push(vec![
            e.label.clone(),
            e.file.clone(),
            e.dim.to_string(),
            e.atoms.to_string(),
        ]);
    }
    staged.write_table("dictionaries", &t, &Metadata::new(cfg, json!({})))?;
    let unit = dicts.iter().all(|d| {
        d.atoms()
            .columns()
            .into_iter()
            .all(|c| (c.dot(&c).sqrt() - 1.0).abs() < 1e-9)
    });
    Ok(vec![Check::new(
        "unit-norm atoms",
        unit,
        format!("{} dictionaries", dicts.len()),
    )])
}

fn audio_identify(
    cfg: &ExperimentConfig,
    staged: &Staged,
) -> Result<(Vec<Check>, Vec<MethodScore>)> {
    let parts = match &cfg.audio.dict_dir {
        Some(dir) => load_dictionaries(dir)?.1,
        None => {
            let classes = audio_exp::class_features(cfg)?;
            audio_exp::learn_class_dictionaries(&classes, cfg)?
        }
    };
    let dict = audio_exp::stack(&parts)?;
    let tests = match &cfg.audio.test_manifest {
        Some(path) => audio_exp::load_test_manifest(path, dict.labels(), cfg)?,
        None => audio_exp::synthetic_test_set(cfg)?,
    };
    let methods = Method::selection(cfg.baselines);
    let result = audio_exp::identify(&dict, &tests, cfg, &methods)?;
    let ingest: Vec<String> = tests
        .iter()
        .map(|t| format!("{}: {:?}", t.name, t.ingest))
        .collect();
    let meta = Metadata::new(
        cfg,
        json!({
            "dct": "orthonormal type-II over frame_len/2 + 1 emphasized magnitudes",
            "ingest": ingest,
            "classes": dict.labels(),
        }),
    );
    staged.write_table(
        "detections",
        &audio_exp::frame_table(&dict, &result.frames),
        &meta,
    )?;
    staged.write_table("summary", &MethodScore::table(&result.scores), &meta)?;
    let g = dict.n_groups();
    let checks = vec![
        Check::new(
            "hamming bounded by group count",
            result.frames.iter().all(|f| f.hamming <= g),
            format!("{} frame codes", result.frames.len()),
        ),
        Check::new(
            "finite objectives",
            result.frames.iter().all(|f| f.objective.is_finite()),
            "",
        ),
    ];
    Ok((checks, result.scores))
}

fn texture_separate(
    cfg: &ExperimentConfig,
    staged: &Staged,
) -> Result<(Vec<Check>, Vec<MethodScore>)> {
    let sources = texture_exp::sources(cfg)?;
    let parts = match &cfg.texture.dict_dir {
        Some(dir) => load_dictionaries(dir)?.1,
        None => texture_exp::learn_dictionaries(&sources, cfg)?,
    };
    if parts.len() != sources.len() {
        bail!(
            "{} texture dictionaries for {} sources",
            parts.len(),
            sources.len()
        );
    }
    let dict = audio_exp::stack(&parts)?;
    let methods = Method::selection(cfg.baselines);
    let result = texture_exp::run_combinations(&dict, &sources, cfg, &methods)?;
    let meta = Metadata::new(
        cfg,
        json!({
            "sources": sources.iter().map(|s| (&s.label, s.image.provenance())).collect::<Vec<_>>(),
        }),
    );
    staged.write_table(
        "scores",
        &texture_exp::score_table(&result, &sources),
        &meta,
    )?;
    staged.write_table("summary", &MethodScore::table(&result.scores), &meta)?;
    if cfg.texture.write_images {
        let dir = staged.subdir("images")?;
        for m in result
            .mixtures
            .iter()
            .filter(|m| m.method == Method::Hilasso)
        {
            let name = texture_exp::combo_name(&m.combo, &sources);
            write_pgm(&dir.join(format!("{name}.mixture.pgm")), &m.mixture)?;
            for (g, img) in &m.separation.estimates {
                write_pgm(&dir.join(format!("{name}.{}.pgm", sources[*g].label)), img)?;
            }
        }
    }
    let worst = result
        .mixtures
        .iter()
        .map(|m| m.separation.additivity_error)
        .fold(0.0, f64::max);
    let checks = vec![
        Check::new(
            "reconstructions add up to the full code",
            worst <= 1e-9,
            format!("max relative error {worst:e}"),
        ),
        Check::new(
            "hamming bounded by group count",
            result.mixtures.iter().all(|m| m.hamming <= dict.n_groups()),
            "",
        ),
        Check::new(
            "psnr defined",
            result
                .mixtures
                .iter()
                .all(|m| m.psnr.iter().all(|p| !p.is_nan())),
            "",
        ),
    ];
    Ok((checks, result.scores))
}

fn synth_bench(cfg: &ExperimentConfig, staged: &Staged) -> Result<Vec<Check>> {
    let methods = Method::selection(cfg.baselines);
    let cells = bench::sweep(cfg, &methods)?;
    let mut trends = Vec::new();
    for &method in &methods {
        let mut keys: Vec<(u64, u64, usize, usize)> = Vec::new();
        for c in cells.iter().filter(|c| c.method == method) {
            let key = (
                c.lambda1.to_bits(),
                c.lambda2_0.to_bits(),
                c.n,
                c.active_groups,
            );
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for key in keys {
            let series: Vec<_> = cells
                .iter()
                .filter(|c| {
                    c.method == method
                        && (
                            c.lambda1.to_bits(),
                            c.lambda2_0.to_bits(),
                            c.n,
                            c.active_groups,
                        ) == key
                })
                .collect();
            let snr: Vec<f64> = series.iter().map(|c| c.snr_db).collect();
            let rate: Vec<f64> = series.iter().map(|c| c.recovery_rate).collect();
            trends.push(json!({
                "method": method.name(),
                "lambda1": f64::from_bits(key.0),
                "lambda2_0": f64::from_bits(key.1),
                "n": key.2,
                "active_groups": key.3,
                "spearman_snr_vs_recovery": bench::spearman(&snr, &rate),
            }));
        }
    }
    let meta = Metadata::new(cfg, json!({ "snr_trends": trends }));
    staged.write_table("bench", &bench::table(&cells), &meta)?;
    Ok(vec![Check::new(
        "finite objectives",
        cells.iter().all(|c| c.finite),
        format!("{} cells", cells.len()),
    )])
}

fn encode_input(path: &Path, cfg: &ExperimentConfig) -> Result<SampleMatrix> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "wav" => {
            let (sig, _) = chilasso::audio::load_wav(path, cfg.features.sample_rate)?;
            audio_exp::features(&sig, cfg)
        }
        "pgm" | "png" => {
            let img = read_image(path)?;
            let x = extract_patches(&img, &cfg.patch_config())?;
            let ids = x.ids().to_vec();
            Ok(SampleMatrix::new(
                x.into_data() / cfg.texture.pixel_scale,
                ids,
            )?)
        }
        "csv" => read_matrix_csv(path),
        _ => bail!(
            "unsupported input {} (expected .wav, .pgm, .png or .csv)",
            path.display()
        ),
    }
}

/// One row per dimension, one column per sample, no header.
pub fn read_matrix_csv(path: &Path) -> Result<SampleMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("parsing {}", path.display()))?,
        );
    }
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
        bail!("{} is not a non-empty rectangular matrix", path.display());
    }
    let data = Array2::from_shape_fn((m, n), |(i, j)| rows[i][j]);
    Ok(SampleMatrix::indexed(data)?)
}

fn id_name(id: &SampleId) -> String {
    match id {
        SampleId::Index(i) => i.to_string(),
        SampleId::Time(t) => format!("t={t}"),
        SampleId::Patch { row, col } => format!("r{row}c{col}"),
    }
}

fn encode(cfg: &ExperimentConfig, staged: &Staged) -> Result<Vec<Check>> {
    let (Some(dict_path), Some(input)) = (&cfg.encode.dictionary, &cfg.encode.input) else {
        bail!("encode mode needs encode.dictionary and encode.input");
    };
    let dict = gdict::load(dict_path)?;
    let x = encode_input(input, cfg)?;
    if x.is_empty() {
        bail!("{} produced no samples", input.display());
    }
    if x.dim() != dict.dim() {
        bail!(
            "input dimension {} does not match dictionary dimension {}",
            x.dim(),
            dict.dim()
        );
    }
    let sc = cfg.solver_config();
    let penalty = match cfg.encode.penalty {
        EncodePenalty::Hilasso => Penalty::hilasso(&sc),
        EncodePenalty::Lasso => Penalty::Lasso { lambda: sc.lambda1 },
        EncodePenalty::GroupLasso => Penalty::GroupLasso {
            lambda: sc.lambda2_0,
        },
        EncodePenalty::CollaborativeLasso => Penalty::CollaborativeLasso { lambda: sc.lambda1 },
        EncodePenalty::Cglasso => Penalty::CollaborativeGroupLasso {
            lambda: sc.lambda2_0,
        },
    };
    let r = chilasso::solve(&dict, x.data(), &penalty, &sc, None)?;
    let detected = detect_active(
        r.coefficients.values(),
        dict.groups(),
        &cfg.detection_config(),
    )?;
    let meta = Metadata::new(
        cfg,
        json!({
            "iterations": r.iterations,
            "converged": r.converged,
            "objective": r.final_objective,
        }),
    );

    let mut header = vec!["atom".to_string(), "group".into()];
    header.extend(x.ids().iter().map(id_name));
    let mut codes = Table::new(header);
    for (k, row) in r.coefficients.values().rows().into_iter().enumerate() {
        let g = dict.groups().group_of(k).unwrap_or(0);
        let mut line = vec![k.to_string(), dict.labels()[g].clone()];
        line.extend(row.iter().map(|&v| fmt(v)));
        codes.push(line);
    }
    staged.write_table("codes", &codes, &meta)?;

    let mut groups = Table::new(["group", "label", "energy", "active"]);
    for (g, label) in dict.labels().iter().enumerate() {
        groups.push(vec![
            g.to_string(),
            label.clone(),
            fmt(detected.energies()[g]),
            (detected.flags()[g] as u8).to_string(),
        ]);
    }
    staged.write_table("groups", &groups, &meta)?;

    if cfg.encode.classify {
        let parts = split_dictionary(&dict);
        let mut header = vec!["sample".to_string(), "class".into()];
        header.extend(dict.labels().iter().map(|l| format!("risk_{l}")));
        let mut t = Table::new(header);
        for (j, col) in x.data().columns().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            let unit = if norm > 0.0 {
                &col / norm
            } else {
                col.to_owned()
            };
            let d = risk_classify(unit.view(), &parts, sc.lambda1, cfg.encode.risk.form(), &sc)?;
            let mut line = vec![id_name(&x.ids()[j]), dict.labels()[d.class].clone()];
            line.extend(d.risks.iter().map(|&v| fmt(v)));
            t.push(line);
        }
        staged.write_table("classes", &t, &meta)?;
    }
    Ok(vec![Check::new(
        "finite objective",
        r.final_objective.is_finite(),
        fmt(r.final_objective),
    )])
}
