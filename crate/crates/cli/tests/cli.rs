use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use chilasso_cli::config::{Domain, ExperimentConfig, Mode, TextureClass};
use chilasso_cli::methods::{score, Method};
use chilasso_cli::{load_dictionaries, run, texture_exp, MANIFEST};

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("cli-tests")
        .join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(dir.parent().unwrap()).unwrap();
    dir
}

fn audio_config(out: PathBuf) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out,
        ..Default::default()
    };
    cfg.learn.epochs = 8;
    cfg.audio.frame_seconds = Some(2.0);
    cfg.audio.synthetic.class_seconds = 6.0;
    cfg.audio.synthetic.test_seconds = 4.0;
    cfg.solver.lambda1 = Some(0.4);
    cfg
}

fn learned_audio_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let out = scratch("shared-audio-dicts");
        let mut cfg = audio_config(out);
        cfg.mode = Mode::LearnDict;
        let summary = run(&cfg.resolve().unwrap()).unwrap();
        assert!(summary.all_passed());
        summary.out_dir
    })
}

#[test]
fn learn_dict_writes_one_dictionary_per_class() {
    let dir = learned_audio_dir();
    let (manifest, dicts) = load_dictionaries(dir).unwrap();
    assert_eq!(manifest.domain, Domain::Audio);
    assert_eq!(dicts.len(), 5);
    for (d, e) in dicts.iter().zip(&manifest.classes) {
        assert_eq!((d.dim(), d.n_atoms()), (60, 90));
        assert_eq!(d.labels(), [e.label.clone()]);
        assert!(dir.join(&e.file).exists());
    }
    for name in [
        "dictionaries.csv",
        "dictionaries.json",
        "run.json",
        MANIFEST,
    ] {
        assert!(dir.join(name).exists(), "{name} missing");
    }
}

#[test]
fn learn_dict_is_reproducible() {
    let out = scratch("learn-again");
    let mut cfg = audio_config(out.clone());
    cfg.mode = Mode::LearnDict;
    run(&cfg.resolve().unwrap()).unwrap();
    let (m, _) = load_dictionaries(&out).unwrap();
    for e in &m.classes {
        let a = std::fs::read(out.join(&e.file)).unwrap();
        let b = std::fs::read(learned_audio_dir().join(&e.file)).unwrap();
        assert_eq!(a, b, "{} differs between runs", e.file);
    }
}

#[test]
fn missing_class_directory_fails_without_output() {
    let root = scratch("missing-class");
    std::fs::create_dir_all(&root).unwrap();
    let mut cfg = audio_config(root.join("out"));
    cfg.mode = Mode::LearnDict;
    cfg.audio.train_dir = Some(root.join("no-such-dir"));
    assert!(cfg.clone().resolve().is_err());

    let empty = root.join("train");
    std::fs::create_dir_all(&empty).unwrap();
    cfg.audio.train_dir = Some(empty);
    assert!(run(&cfg.resolve().unwrap()).is_err());
    assert!(!root.join("out").exists());
}

#[test]
fn identify_prefers_collaborative_hierarchy() {
    let out = scratch("identify");
    let mut cfg = audio_config(out.clone());
    cfg.mode = Mode::AudioIdentify;
    cfg.baselines = true;
    cfg.audio.dict_dir = Some(learned_audio_dir().to_path_buf());
    let summary = run(&cfg.resolve().unwrap()).unwrap();
    assert!(summary.all_passed());
    let h = score(&summary.scores, Method::Hilasso).unwrap();
    let l = score(&summary.scores, Method::Lasso).unwrap();
    assert!(score(&summary.scores, Method::Cglasso).is_some());
    assert_eq!(h.count, 15 * 2);
    assert!(
        h.mean_hamming < l.mean_hamming,
        "hilasso {} vs lasso {}",
        h.mean_hamming,
        l.mean_hamming
    );

    let mut rdr = csv::Reader::from_path(out.join("detections.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (rec, method, ham) = (col("recording"), col("method"), col("hamming"));
    let mut singles = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        if &r[method] == "c-hilasso" && !r[rec].contains('+') {
            singles += 1;
            assert_eq!(&r[ham], "0", "single-source frame {} misdetected", &r[rec]);
        }
    }
    assert_eq!(singles, 5 * 2);
    for name in ["detections.json", "summary.csv", "summary.json"] {
        assert!(out.join(name).exists());
    }
}

#[test]
fn huge_sparsity_weight_detects_nothing() {
    let out = scratch("identify-null");
    let mut cfg = audio_config(out.clone());
    cfg.mode = Mode::AudioIdentify;
    cfg.solver.lambda1 = Some(1e6);
    cfg.audio.synthetic.include_pairs = false;
    cfg.audio.dict_dir = Some(learned_audio_dir().to_path_buf());
    let summary = run(&cfg.resolve().unwrap()).unwrap();
    let h = score(&summary.scores, Method::Hilasso).unwrap();
    assert_eq!(h.mean_hamming, 1.0);
    assert_eq!(h.exact_rate, 0.0);
}

#[test]
fn existing_output_requires_force() {
    let out = scratch("force");
    let mut cfg = ExperimentConfig {
        mode: Mode::SynthBench,
        out: out.clone(),
        ..Default::default()
    };
    cfg.synth.trials = 2;
    cfg.synth.snr_db = vec![20.0];
    let cfg = cfg.resolve().unwrap();
    run(&cfg).unwrap();
    let first = std::fs::read(out.join("bench.csv")).unwrap();
    let err = run(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("exists"), "{err:#}");
    let forced = ExperimentConfig { force: true, ..cfg };
    run(&forced).unwrap();
    let again = std::fs::read(out.join("bench.csv")).unwrap();
    let strip = |b: &[u8]| -> Vec<String> {
        let header = String::from_utf8(b.to_vec()).unwrap();
        let mut rdr = csv::Reader::from_reader(header.as_bytes());
        let h = rdr.headers().unwrap().clone();
        let wall = h.iter().position(|c| c == "wall_ms");
        rdr.records()
            .map(|r| {
                r.unwrap()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| Some(*i) != wall)
                    .map(|(_, v)| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect()
    };
    assert_eq!(strip(&first), strip(&again));
}

fn small_texture(out: PathBuf, n_classes: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        mode: Mode::TextureSeparate,
        out,
        baselines: true,
        ..Default::default()
    };
    cfg.patches.patch = 6;
    cfg.patches.stride = 3;
    cfg.texture.height = 30;
    cfg.texture.width = 60;
    cfg.texture.atom_count = 12;
    cfg.texture.epochs = 3;
    cfg.texture.synthetic = TextureClass::defaults()
        .into_iter()
        .cycle()
        .take(n_classes)
        .collect();
    cfg
}

#[test]
fn texture_run_covers_every_pair() {
    let out = scratch("texture");
    let cfg = small_texture(out.clone(), 4).resolve().unwrap();
    let summary = run(&cfg).unwrap();
    assert!(summary.all_passed(), "{:?}", summary.checks);
    for m in [Method::Hilasso, Method::Lasso, Method::Cglasso] {
        let s = score(&summary.scores, m).unwrap();
        assert_eq!(s.count, 6);
        assert!(s.mean_psnr.is_some());
    }
    let rows = csv::Reader::from_path(out.join("scores.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 6 * 3);
    let images = std::fs::read_dir(out.join("images")).unwrap().count();
    assert!(images >= 6);
    assert!(out.join("scores.json").exists());
}

#[test]
fn eight_sources_give_twenty_eight_pairs() {
    assert_eq!(texture_exp::combinations(8, 2).len(), 28);
    let cfg = small_texture(scratch("unused"), 8).resolve().unwrap();
    assert_eq!(texture_exp::sources(&cfg).unwrap().len(), 8);
}

#[test]
fn single_source_detects_only_its_group() {
    let cfg = ExperimentConfig {
        mode: Mode::TextureSeparate,
        ..Default::default()
    }
    .resolve()
    .unwrap();
    let sources = texture_exp::sources(&cfg).unwrap();
    let parts = texture_exp::learn_dictionaries(&sources, &cfg).unwrap();
    let dict = chilasso_cli::audio_exp::stack(&parts).unwrap();
    for (g, src) in sources.iter().enumerate() {
        let img =
            chilasso::texture::mix_images(&[&src.image.right_half().unwrap()], &[0.5]).unwrap();
        let sep = texture_exp::separate(&dict, &img, &cfg, &cfg.solver_config()).unwrap();
        assert_eq!(sep.detected.active_indices(), vec![g], "source {g}");
        assert!(sep.additivity_error <= 1e-9);
    }
}

fn binary() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chilasso"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn binary_exit_codes() {
    let out = scratch("bin");
    let config = out.with_extension("json");
    std::fs::write(
        &config,
        r#"{"mode": "synth-bench", "synth": {"trials": 2, "snr_db": [20.0]}}"#,
    )
    .unwrap();
    let status = binary()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--baselines",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("bench.csv").exists());
    assert!(out.join("bench.json").exists());

    let status = binary()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    std::fs::write(&config, r#"{"bogus": true}"#).unwrap();
    let status = binary()
        .args(["--config", config.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let printed = binary()
        .args(["--mode", "texture-separate", "--print-config"])
        .output()
        .unwrap();
    assert_eq!(printed.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&printed.stdout).unwrap();
    assert_eq!(v["mode"], "texture-separate");
    assert_eq!(v["solver"]["lambda1"], 0.05);
}

#[test]
fn encode_writes_codes_and_classes() {
    let root = scratch("encode");
    std::fs::create_dir_all(&root).unwrap();
    let dict_path = learned_audio_dir().join("source0.gdict");
    let d = chilasso::gdict::load(&dict_path).unwrap();
    let input = root.join("x.csv");
    let mut text = String::new();
    for i in 0..d.dim() {
        let row: Vec<String> = (0..3).map(|j| d.atoms()[[i, j]].to_string()).collect();
        text += &(row.join(",") + "\n");
    }
    std::fs::write(&input, text).unwrap();
    let mut cfg = ExperimentConfig {
        mode: Mode::Encode,
        out: root.join("out"),
        ..Default::default()
    };
    cfg.solver.lambda1 = Some(0.01);
    cfg.encode.dictionary = Some(dict_path);
    cfg.encode.input = Some(input);
    cfg.encode.classify = true;
    let summary = run(&cfg.resolve().unwrap()).unwrap();
    assert!(summary.all_passed());
    for name in ["codes.csv", "groups.csv", "classes.csv", "run.json"] {
        assert!(root.join("out").join(name).exists(), "{name} missing");
    }
}
