//! Texture separation: sub-dictionaries learned on left halves, mixtures of
//! right halves coded patch-wise, per-source images rebuilt from the
//! detected groups.

use anyhow::{bail, Result};
use chilasso::dictlearn::{learn_subdictionary, TrainingSet};
use chilasso::identify::{detect_active, hamming};
use chilasso::synth::gen_texture;
use chilasso::texture::{
    extract_patches, mix_images, patch_positions, psnr, read_image, reassemble, separate_sources,
    GrayImage,
};
use chilasso::{ActiveGroupSet, GroupedDictionary, SampleMatrix, SolverConfig};
use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::methods::{Method, MethodScore};
use crate::output::{fmt, Table};

#[derive(Debug, Clone)]
pub struct TextureSource {
    pub label: String,
    pub image: GrayImage,
}

pub fn sources(cfg: &ExperimentConfig) -> Result<Vec<TextureSource>> {
    let t = &cfg.texture;
    if !t.images.is_empty() {
        return t
            .images
            .iter()
            .map(|p| {
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                Ok(TextureSource {
                    label,
                    image: read_image(p)?,
                })
            })
            .collect();
    }
    t.synthetic
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let spec = class.spec();
            Ok(TextureSource {
                label: format!("texture{i}"),
                image: gen_texture(&spec, t.height, t.width, cfg.seed.wrapping_add(i as u64))?,
            })
        })
        .collect()
}

/// Scaled (and optionally centered) patches with their positions and means.
pub struct Patches {
    pub data: Array2<f64>,
    pub positions: Vec<(usize, usize)>,
    pub means: Vec<f64>,
}

pub fn patches(img: &GrayImage, cfg: &ExperimentConfig) -> Result<Patches> {
    let x = extract_patches(img, &cfg.patch_config())?;
    let positions = patch_positions(&x)?;
    let mut data = x.into_data() / cfg.texture.pixel_scale;
    let mut means = vec![0.0; data.ncols()];
    if cfg.texture.center {
        for (mut col, m) in data.axis_iter_mut(Axis(1)).zip(means.iter_mut()) {
            *m = col.mean().unwrap_or(0.0);
            col -= *m;
        }
    }
    Ok(Patches {
        data,
        positions,
        means,
    })
}

pub fn learn_dictionaries(
    sources: &[TextureSource],
    cfg: &ExperimentConfig,
) -> Result<Vec<GroupedDictionary>> {
    let t = &cfg.texture;
    let sc = SolverConfig {
        max_iters: cfg.learn.max_iters,
        rel_tol: cfg.learn.rel_tol,
        ..SolverConfig::default()
    };
    sources
        .par_iter()
        .enumerate()
        .map(|(i, src)| {
            let train = patches(&src.image.left_half()?, cfg)?;
            let mut ts = TrainingSet::new(SampleMatrix::indexed(train.data)?, src.label.clone());
            ts.atom_count = t.atom_count;
            ts.lambda = t.learn_lambda;
            ts.epochs = t.epochs;
            Ok(learn_subdictionary(&ts, &sc, cfg.seed.wrapping_add(i as u64))?.dictionary)
        })
        .collect()
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub detected: ActiveGroupSet,
    /// Reconstructed image of every detected group, in pixel units.
    pub estimates: Vec<(usize, GrayImage)>,
    pub iterations: usize,
    /// `||sum_G D_G A^G - D A|| / ||D A||` over all groups.
    pub additivity_error: f64,
    pub uncovered: usize,
}

impl Separation {
    /// Estimate of group `g`, or a black image when it was not detected.
    pub fn estimate(&self, g: usize, height: usize, width: usize) -> Result<GrayImage> {
        match self.estimates.iter().find(|(k, _)| *k == g) {
            Some((_, img)) => Ok(img.clone()),
            None => Ok(GrayImage::new(
                Array2::zeros((height, width)),
                "not detected",
            )?),
        }
    }
}

pub fn separate(
    dict: &GroupedDictionary,
    mixture: &GrayImage,
    cfg: &ExperimentConfig,
    sc: &SolverConfig,
) -> Result<Separation> {
    let p = patches(mixture, cfg)?;
    if p.data.nrows() != dict.dim() {
        bail!(
            "patch dimension {} does not match dictionary dimension {}",
            p.data.nrows(),
            dict.dim()
        );
    }
    let r = chilasso::solve_chilasso(dict, p.data.view(), sc)?;
    let detected = detect_active(
        r.coefficients.values(),
        dict.groups(),
        &cfg.detection_config(),
    )?;

    let every = ActiveGroupSet::from_flags(vec![true; dict.n_groups()]);
    let all = separate_sources(&r.coefficients, dict, &every)?;
    let full = dict.atoms().dot(&r.coefficients.values());
    let mut sum = Array2::<f64>::zeros(full.dim());
    for s in &all {
        sum += &s.patches;
    }
    let norm = full
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let additivity_error = (&sum - &full).iter().map(|v| v * v).sum::<f64>().sqrt() / norm;

    let n_active = detected.count().max(1) as f64;
    let pc = cfg.patch_config();
    let mut uncovered = 0;
    let mut estimates = Vec::new();
    for s in all.into_iter().filter(|s| detected.flags()[s.group]) {
        let mut x = s.patches;
        if cfg.texture.center {
            for (mut col, m) in x.axis_iter_mut(Axis(1)).zip(&p.means) {
                col += *m / n_active;
            }
        }
        x *= cfg.texture.pixel_scale;
        let out = reassemble(
            x.view(),
            &p.positions,
            mixture.height(),
            mixture.width(),
            &pc,
        )?;
        uncovered = out.uncovered_count();
        estimates.push((s.group, out.image));
    }
    Ok(Separation {
        detected,
        estimates,
        iterations: r.iterations,
        additivity_error,
        uncovered,
    })
}

#[derive(Debug, Clone)]
pub struct MixtureResult {
    pub combo: Vec<usize>,
    pub method: Method,
    pub separation: Separation,
    pub hamming: usize,
    pub psnr: Vec<f64>,
    pub mixture: GrayImage,
}

pub struct TextureResult {
    pub mixtures: Vec<MixtureResult>,
    pub scores: Vec<MethodScore>,
}

/// Mixes the right halves of every combination and separates them with
/// each method.
pub fn run_combinations(
    dict: &GroupedDictionary,
    sources: &[TextureSource],
    cfg: &ExperimentConfig,
    methods: &[Method],
) -> Result<TextureResult> {
    let t = &cfg.texture;
    if t.mixture_size == 0 || t.mixture_size > sources.len() {
        bail!(
            "texture.mixture_size must lie in 1..={}, got {}",
            sources.len(),
            t.mixture_size
        );
    }
    let tests: Vec<GrayImage> = sources
        .iter()
        .map(|s| s.image.right_half())
        .collect::<chilasso::Result<_>>()?;
    let base = cfg.solver_config();
    let jobs: Vec<(Vec<usize>, Method)> = combinations(sources.len(), t.mixture_size)
        .into_iter()
        .flat_map(|c| methods.iter().map(move |&m| (c.clone(), m)))
        .collect();
    let mixtures = jobs
        .into_par_iter()
        .map(|(combo, method)| {
            let imgs: Vec<&GrayImage> = combo.iter().map(|&i| &tests[i]).collect();
            let mixture = mix_images(&imgs, &vec![t.weight; imgs.len()])?;
            let separation = separate(dict, &mixture, cfg, &method.config(&base))?;
            let truth = ActiveGroupSet::from_indices(dict.n_groups(), &combo);
            let hamming = hamming(&separation.detected, &truth)?;
            let psnr = combo
                .iter()
                .map(|&g| {
                    let est = separation.estimate(g, mixture.height(), mixture.width())?;
                    let reference = mix_images(&[&tests[g]], &[t.weight])?;
                    Ok(psnr(&est, &reference)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(MixtureResult {
                combo,
                method,
                separation,
                hamming,
                psnr,
                mixture,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = MethodScore::collect(
        methods,
        mixtures
            .iter()
            .map(|m| (m.method, m.hamming as f64, Some(m.psnr.as_slice()))),
    );
    Ok(TextureResult { mixtures, scores })
}

pub fn combo_name(combo: &[usize], sources: &[TextureSource]) -> String {
    combo
        .iter()
        .map(|&i| sources[i].label.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

pub fn score_table(result: &TextureResult, sources: &[TextureSource]) -> Table {
    let mut t = Table::new([
        "combination",
        "method",
        "detected",
        "hamming",
        "psnr_db",
        "mean_psnr_db",
        "iterations",
    ]);
    for m in &result.mixtures {
        let detected: Vec<&str> = m
            .separation
            .detected
            .active_indices()
            .into_iter()
            .map(|g| sources[g].label.as_str())
            .collect();
        let mean = m.psnr.iter().sum::<f64>() / m.psnr.len().max(1) as f64;
        t.push(vec![
            combo_name(&m.combo, sources),
            m.method.name().into(),
            detected.join(";"),
            m.hamming.to_string(),
            m.psnr.iter().map(|&p| fmt(p)).collect::<Vec<_>>().join(";"),
            fmt(mean),
            m.separation.iterations.to_string(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_eight_pairs_of_eight() {
        let c = combinations(8, 2);
        assert_eq!(c.len(), 28);
        assert_eq!(c[0], vec![0, 1]);
        assert_eq!(c[27], vec![6, 7]);
        assert_eq!(combinations(4, 2).len(), 6);
        assert!(combinations(2, 3).is_empty());
    }
}
