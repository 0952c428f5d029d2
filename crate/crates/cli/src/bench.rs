//! Synthetic group-recovery benchmark over SNR, active-group count, sample
//! count and regularization grids.

use std::time::Instant;

use anyhow::Result;
use chilasso::identify::{detect_active, hamming, DetectionConfig};
use chilasso::synth::{gen_grouped_sparse, SynthSpec};
use chilasso::SolverConfig;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::methods::Method;
use crate::output::{fmt, Table};

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub snr_db: f64,
    pub active_groups: usize,
    pub n: usize,
    pub lambda1: f64,
    pub lambda2_0: f64,
    pub method: Method,
    pub trials: usize,
    pub recovery_rate: f64,
    pub mean_hamming: f64,
    pub mean_iterations: f64,
    pub wall_ms: f64,
    /// False when any solve produced a non-finite objective.
    pub finite: bool,
}

/// Runs `trials` problems drawn with seeds `seed, seed + 1, ...` and
/// codes each with every method.
pub fn run_cell(
    spec: &SynthSpec,
    base: &SolverConfig,
    dc: &DetectionConfig,
    methods: &[Method],
    trials: usize,
) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let problem = gen_grouped_sparse(&SynthSpec {
                seed: spec.seed.wrapping_add(t as u64),
                ..spec.clone()
            })?;
            methods
                .iter()
                .map(|m| {
                    let start = Instant::now();
                    let r = chilasso::solve_chilasso(
                        &problem.dictionary,
                        problem.samples.data(),
                        &m.config(base),
                    )?;
                    let wall = start.elapsed().as_secs_f64() * 1e3;
                    let detected =
                        detect_active(r.coefficients.values(), problem.dictionary.groups(), dc)?;
                    let h = hamming(&detected, &problem.truth)?;
                    Ok((h, r.iterations, wall, r.final_objective.is_finite()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let denom = trials.max(1) as f64;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let cells: Vec<_> = per_trial.iter().map(|t| t[k]).collect();
            let cfg = method.config(base);
            CellResult {
                snr_db: spec.snr_db,
                active_groups: spec.active_groups,
                n: spec.n,
                lambda1: cfg.lambda1,
                lambda2_0: cfg.lambda2_0,
                method,
                trials,
                recovery_rate: cells.iter().filter(|c| c.0 == 0).count() as f64 / denom,
                mean_hamming: cells.iter().map(|c| c.0 as f64).sum::<f64>() / denom,
                mean_iterations: cells.iter().map(|c| c.1 as f64).sum::<f64>() / denom,
                wall_ms: cells.iter().map(|c| c.2).sum::<f64>() / denom,
                finite: cells.iter().all(|c| c.3),
            }
        })
        .collect())
}

/// Every grid cell of the configured sweep.
pub fn sweep(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<CellResult>> {
    let s = &cfg.synth;
    let base = cfg.solver_config();
    let grid: Vec<(f64, f64)> = if s.lambda_grid.is_empty() {
        vec![(base.lambda1, base.lambda2_0)]
    } else {
        s.lambda_grid.clone()
    };
    let mut out = Vec::new();
    for &(l1, l2) in &grid {
        let sc = SolverConfig {
            lambda1: l1,
            lambda2_0: l2,
            ..base.clone()
        };
        for &n in &s.n {
            for &active in &s.active_groups {
                for &snr in &s.snr_db {
                    let spec = SynthSpec {
                        seed: cfg.seed,
                        m: s.m,
                        n_groups: s.n_groups,
                        group_size: s.group_size,
                        active_groups: active,
                        atoms_per_group: s.atoms_per_group,
                        snr_db: snr,
                        n,
                    };
                    out.extend(run_cell(
                        &spec,
                        &sc,
                        &cfg.detection_config(),
                        methods,
                        s.trials,
                    )?);
                }
            }
        }
    }
    Ok(out)
}

pub fn table(cells: &[CellResult]) -> Table {
    let mut t = Table::new([
        "snr_db",
        "active_groups",
        "n",
        "lambda1",
        "lambda2_0",
        "method",
        "trials",
        "recovery_rate",
        "mean_hamming",
        "mean_iterations",
        "wall_ms",
    ]);
    for c in cells {
        t.push(vec![
            fmt(c.snr_db),
            c.active_groups.to_string(),
            c.n.to_string(),
            fmt(c.lambda1),
            fmt(c.lambda2_0),
            c.method.name().into(),
            c.trials.to_string(),
            fmt(c.recovery_rate),
            fmt(c.mean_hamming),
            fmt(c.mean_iterations),
            format!("{:.3}", c.wall_ms),
        ]);
    }
    t
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_known_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert!((r - 0.894_427_190_999_915_9).abs() < 1e-12);
    }
}
