//! Source decisions from coefficient matrices, and the baseline classifiers.

use ndarray::{ArrayView1, ArrayView2, Axis};

use crate::error::{check_weight, Error, Result};
use crate::model::{
    group_energies, ActiveGroupSet, GroupPartition, GroupedDictionary, SolverConfig,
};
use crate::solver::{solve, solve_lasso, Penalty};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    /// A group is active when its energy is at least this fraction of the
    /// largest group energy.
    pub rel_threshold: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            rel_threshold: 0.01,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_threshold > 0.0 && self.rel_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rel_threshold must lie in (0, 1), got {}",
                self.rel_threshold
            )));
        }
        Ok(())
    }
}

pub fn detect_active(
    a: ArrayView2<f64>,
    groups: &GroupPartition,
    dc: &DetectionConfig,
) -> Result<ActiveGroupSet> {
    dc.validate()?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("coefficient matrix"));
    }
    let energies = group_energies(a, groups)?;
    detect_from_energies(energies, dc)
}

pub fn detect_from_energies(energies: Vec<f64>, dc: &DetectionConfig) -> Result<ActiveGroupSet> {
    let max = energies.iter().copied().fold(0.0, f64::max);
    let flags = energies
        .iter()
        .map(|&e| max > 0.0 && e >= dc.rel_threshold * max)
        .collect();
    ActiveGroupSet::new(flags, energies)
}

/// Number of groups whose activity flags disagree.
pub fn hamming(detected: &ActiveGroupSet, truth: &ActiveGroupSet) -> Result<usize> {
    if detected.len() != truth.len() {
        return Err(Error::mismatch(
            "active set length",
            truth.len(),
            detected.len(),
        ));
    }
    Ok(detected
        .flags()
        .iter()
        .zip(truth.flags())
        .filter(|(a, b)| a != b)
        .count())
}

/// Training columns with a class index per column.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSamples<'a> {
    pub data: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

/// Majority label, ties to the smallest class index.
pub fn vote(labels: &[usize]) -> Result<usize> {
    let max_label = *labels.iter().max().ok_or(Error::Empty("labels"))?;
    let mut counts = vec![0usize; max_label + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    Ok(counts.iter().position(|&c| c == best).expect("non-empty"))
}

/// Majority label among the `k` nearest training columns (Euclidean).
pub fn knn_classify(query: ArrayView1<f64>, train: LabeledSamples<'_>, k: usize) -> Result<usize> {
    let n = train.data.ncols();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if train.labels.len() != n {
        return Err(Error::mismatch("training labels", n, train.labels.len()));
    }
    if query.len() != train.data.nrows() {
        return Err(Error::mismatch("query", train.data.nrows(), query.len()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    let mut dist: Vec<(f64, usize)> = train
        .data
        .axis_iter(Axis(1))
        .enumerate()
        .map(|(j, col)| {
            let d2 = col
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
            (d2, j)
        })
        .collect();
    // stable order among equal distances
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest: Vec<usize> = dist[..k].iter().map(|&(_, j)| train.labels[j]).collect();
    vote(&nearest)
}

/// How the per-class risk is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiskForm {
    /// `min_a 1/2 ||x - D a||_2^2 + lambda ||a||_1`.
    #[default]
    SquaredResidual,
    /// `min_a ||x - D a||_2 + lambda ||a||_1`, solved by alternating the
    /// noise-level estimate with a Lasso at `lambda * sigma`.
    Residual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskDecision {
    pub class: usize,
    pub risks: Vec<f64>,
}

/// Assigns `x` to the class whose dictionary yields the smallest risk.
pub fn risk_classify(
    x: ArrayView1<f64>,
    parts: &[GroupedDictionary],
    lambda: f64,
    form: RiskForm,
    cfg: &SolverConfig,
) -> Result<RiskDecision> {
    if parts.is_empty() {
        return Err(Error::Empty("class dictionaries"));
    }
    check_weight("lambda", lambda)?;
    let col = x.insert_axis(Axis(1));
    let risks = parts
        .iter()
        .map(|dict| match form {
            RiskForm::SquaredResidual => Ok(solve_lasso(dict, col, lambda, cfg)?.final_objective),
            RiskForm::Residual => residual_risk(dict, x, lambda, cfg),
        })
        .collect::<Result<Vec<f64>>>()?;
    let class = argmin(&risks);
    Ok(RiskDecision { class, risks })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn residual_risk(
    dict: &GroupedDictionary,
    x: ArrayView1<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let col = x.insert_axis(Axis(1));
    let eval = |a: ArrayView1<f64>| {
        let r = &x - &dict.atoms().dot(&a);
        r.dot(&r).sqrt() + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut sigma = x.dot(&x).sqrt();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let mut a = ndarray::Array2::<f64>::zeros((dict.n_atoms(), 1));
    let mut best = eval(a.column(0));
    for _ in 0..100 {
        let res = solve(
            dict,
            col,
            &Penalty::Lasso {
                lambda: lambda * sigma,
            },
            cfg,
            Some(a.view()),
        )?;
        a = res.coefficients.into_values();
        let r = &x - &dict.atoms().dot(&a.column(0));
        let next = r.dot(&r).sqrt();
        best = best.min(eval(a.column(0)));
        // sigma = 0 means an exact fit; the risk is then the penalty alone
        if next == 0.0 || (next - sigma).abs() <= cfg.rel_tol * sigma {
            break;
        }
        sigma = next;
    }
    Ok(best)
}
