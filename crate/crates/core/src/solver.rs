//! Accelerated proximal-gradient solvers for the Lasso family.
//!
//! Every problem has the form `1/2 ||X - D A||_F^2 + R(A)` where `R` is a
//! combination of an l1 term and a sum of Frobenius norms over blocks of
//! `A`. All of them share one FISTA loop with function-value restart; the
//! regularizers differ only in their block layout and prox.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{check_weight, Error, Result};
use crate::model::{
    CoefficientMatrix, GroupPartition, GroupedDictionary, Lambda2Scaling, SolverConfig,
};
use crate::prox::{shrink_block, soft_inplace};

const POWER_ITERS: usize = 30;
const POWER_TOL: f64 = 1e-7;
// Accepting an objective this much above the previous one is rounding, not ascent.
const ASCENT_SLACK: f64 = 1e-12;

/// Which member of the family to solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// `lambda ||a_j||_1` for every column independently.
    Lasso { lambda: f64 },
    /// `lambda sum_G ||a_{j,G}||_2` for every column independently.
    GroupLasso { lambda: f64 },
    /// `lambda sum_k ||a^k||_2` over rows of `A`.
    CollaborativeLasso { lambda: f64 },
    /// `lambda sum_G ||A^G||_F`.
    CollaborativeGroupLasso { lambda: f64 },
    /// `lambda2_G sum_G ||A^G||_F + lambda1 sum_j ||a_j||_1`, with the group
    /// weight derived from `lambda2_0` per `scaling`.
    HiLasso {
        lambda1: f64,
        lambda2_0: f64,
        scaling: Lambda2Scaling,
    },
}

impl Penalty {
    pub fn hilasso(cfg: &SolverConfig) -> Self {
        Penalty::HiLasso {
            lambda1: cfg.lambda1,
            lambda2_0: cfg.lambda2_0,
            scaling: cfg.lambda2_scaling,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Penalty::Lasso { lambda }
            | Penalty::GroupLasso { lambda }
            | Penalty::CollaborativeLasso { lambda }
            | Penalty::CollaborativeGroupLasso { lambda } => check_weight("lambda", lambda),
            Penalty::HiLasso {
                lambda1, lambda2_0, ..
            } => {
                check_weight("lambda1", lambda1)?;
                check_weight("lambda2_0", lambda2_0)
            }
        }
    }

    fn regularizer(&self, groups: &GroupPartition, n: usize) -> Result<Regularizer> {
        let uniform = |lambda: f64| vec![lambda; groups.len()];
        Ok(match *self {
            Penalty::Lasso { lambda } => Regularizer {
                l1: lambda,
                blocks: Blocks::None,
            },
            Penalty::GroupLasso { lambda } => Regularizer {
                l1: 0.0,
                blocks: Blocks::PerColumn {
                    groups: groups.clone(),
                    weights: uniform(lambda),
                },
            },
            Penalty::CollaborativeLasso { lambda } => Regularizer {
                l1: 0.0,
                blocks: Blocks::Collaborative {
                    groups: GroupPartition::singletons(groups.total())?,
                    weights: vec![lambda; groups.total()],
                },
            },
            Penalty::CollaborativeGroupLasso { lambda } => Regularizer {
                l1: 0.0,
                blocks: Blocks::Collaborative {
                    groups: groups.clone(),
                    weights: uniform(lambda),
                },
            },
            Penalty::HiLasso {
                lambda1,
                lambda2_0,
                scaling,
            } => {
                let cfg = SolverConfig {
                    lambda2_0,
                    lambda2_scaling: scaling,
                    ..Default::default()
                };
                Regularizer {
                    l1: lambda1,
                    blocks: Blocks::Collaborative {
                        groups: groups.clone(),
                        weights: groups
                            .sizes()
                            .iter()
                            .map(|&s| cfg.group_weight(s, n))
                            .collect(),
                    },
                }
            }
        })
    }

    /// Full objective of this problem at `a`.
    pub fn objective(
        &self,
        dict: &GroupedDictionary,
        x: ArrayView2<f64>,
        a: ArrayView2<f64>,
    ) -> Result<f64> {
        self.validate()?;
        check_problem(dict, x)?;
        if a.dim() != (dict.n_atoms(), x.ncols()) {
            return Err(Error::mismatch(
                "A",
                format!("{}x{}", dict.n_atoms(), x.ncols()),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let reg = self.regularizer(dict.groups(), x.ncols())?;
        let residual = &x - &dict.atoms().dot(&a);
        Ok(0.5 * sum_sq(residual.view()) + reg.value(a))
    }
}

#[derive(Debug, Clone)]
enum Blocks {
    None,
    PerColumn {
        groups: GroupPartition,
        weights: Vec<f64>,
    },
    Collaborative {
        groups: GroupPartition,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Regularizer {
    l1: f64,
    blocks: Blocks,
}

impl Regularizer {
    fn value(&self, a: ArrayView2<f64>) -> f64 {
        let mut total = 0.0;
        if self.l1 > 0.0 {
            total += self.l1 * a.iter().map(|v| v.abs()).sum::<f64>();
        }
        match &self.blocks {
            Blocks::None => {}
            Blocks::PerColumn { groups, weights } => {
                for col in a.columns() {
                    for (r, w) in groups.ranges().zip(weights) {
                        total += w * sum_sq(col.slice(s![r]).insert_axis(Axis(1))).sqrt();
                    }
                }
            }
            Blocks::Collaborative { groups, weights } => {
                for (r, w) in groups.ranges().zip(weights) {
                    total += w * sum_sq(a.slice(s![r, ..])).sqrt();
                }
            }
        }
        total
    }

    fn prox_inplace(&self, a: &mut Array2<f64>, step: f64) {
        soft_inplace(a.view_mut(), self.l1 * step);
        match &self.blocks {
            Blocks::None => {}
            Blocks::PerColumn { groups, weights } => {
                for j in 0..a.ncols() {
                    for (r, w) in groups.ranges().zip(weights) {
                        shrink_block(a.slice_mut(s![r, j..j + 1]), w * step);
                    }
                }
            }
            Blocks::Collaborative { groups, weights } => {
                for (r, w) in groups.ranges().zip(weights) {
                    shrink_block(a.slice_mut(s![r, ..]), w * step);
                }
            }
        }
    }

    fn column_separable(&self) -> bool {
        !matches!(self.blocks, Blocks::Collaborative { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub coefficients: CoefficientMatrix,
    pub iterations: usize,
    pub final_objective: f64,
    /// True when the relative-change rule fired before `max_iters`.
    pub converged: bool,
    /// Objective at the start point followed by every accepted iterate.
    pub objective_trace: Option<Vec<f64>>,
    /// Step-size constant actually used (may exceed the dictionary's
    /// estimate if backtracking fired).
    pub lipschitz: f64,
}

fn sum_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn check_problem(dict: &GroupedDictionary, x: ArrayView2<f64>) -> Result<()> {
    if x.nrows() != dict.dim() {
        return Err(Error::mismatch("X rows", dict.dim(), x.nrows()));
    }
    if x.ncols() == 0 {
        return Err(Error::Empty("sample matrix"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("X"));
    }
    Ok(())
}

/// Largest eigenvalue of `D^T D` by power iteration from a fixed start.
pub(crate) fn power_iteration(d: ArrayView2<f64>) -> f64 {
    let p = d.ncols();
    let mut v = ndarray::Array1::from_shape_fn(p, |i| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    v /= v.dot(&v).sqrt();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERS {
        let w = d.t().dot(&d.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let converged = (norm - estimate).abs() <= POWER_TOL * norm;
        estimate = norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Solves one member of the family. `warm_start`, when given, must be `p x n`.
pub fn solve(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    penalty: &Penalty,
    cfg: &SolverConfig,
    warm_start: Option<ArrayView2<f64>>,
) -> Result<SolveResult> {
    cfg.validate()?;
    penalty.validate()?;
    check_problem(dict, x)?;
    let (p, n) = (dict.n_atoms(), x.ncols());
    let init = match warm_start {
        Some(a0) => {
            if a0.dim() != (p, n) {
                return Err(Error::mismatch(
                    "warm start",
                    format!("{p}x{n}"),
                    format!("{}x{}", a0.nrows(), a0.ncols()),
                ));
            }
            if a0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("warm start"));
            }
            a0.to_owned()
        }
        None => Array2::zeros((p, n)),
    };
    let lipschitz = dict.lipschitz();

    let threads = rayon::current_num_threads();
    if !cfg.deterministic && threads > 1 && n >= 2 * threads {
        let reg = penalty.regularizer(dict.groups(), n)?;
        if reg.column_separable() {
            return solve_split(dict, x, &reg, cfg, init, lipschitz, threads);
        }
    }

    let reg = penalty.regularizer(dict.groups(), n)?;
    Ok(fista(dict.atoms(), x, &reg, cfg, init, lipschitz))
}

fn solve_split(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    reg: &Regularizer,
    cfg: &SolverConfig,
    init: Array2<f64>,
    lipschitz: f64,
    chunks: usize,
) -> Result<SolveResult> {
    let n = x.ncols();
    let width = n.div_ceil(chunks);
    let parts: Vec<SolveResult> = (0..n)
        .step_by(width)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + width).min(n);
            fista(
                dict.atoms(),
                x.slice(s![.., start..end]),
                reg,
                cfg,
                init.slice(s![.., start..end]).to_owned(),
                lipschitz,
            )
        })
        .collect();
    let views: Vec<_> = parts.iter().map(|r| r.coefficients.values()).collect();
    let coefficients = ndarray::concatenate(Axis(1), &views).expect("chunks share row count");
    let trace = cfg.record_trace.then(|| {
        let len = parts
            .iter()
            .map(|r| r.objective_trace.as_ref().map_or(0, Vec::len))
            .max();
        (0..len.unwrap_or(0))
            .map(|i| {
                parts
                    .iter()
                    .filter_map(|r| r.objective_trace.as_ref())
                    .map(|t| t[i.min(t.len() - 1)])
                    .sum()
            })
            .collect()
    });
    Ok(SolveResult {
        coefficients: CoefficientMatrix::new(coefficients)?,
        iterations: parts.iter().map(|r| r.iterations).max().unwrap_or(0),
        final_objective: parts.iter().map(|r| r.final_objective).sum(),
        converged: parts.iter().all(|r| r.converged),
        objective_trace: trace,
        lipschitz: parts.iter().map(|r| r.lipschitz).fold(lipschitz, f64::max),
    })
}

fn fista(
    d: ArrayView2<f64>,
    x: ArrayView2<f64>,
    reg: &Regularizer,
    cfg: &SolverConfig,
    init: Array2<f64>,
    lipschitz: f64,
) -> SolveResult {
    let objective = |a: &Array2<f64>, da: &Array2<f64>| {
        0.5 * (&x - da).iter().map(|v| v * v).sum::<f64>() + reg.value(a.view())
    };

    // Zero dictionary energy means the data term is constant; any positive step works.
    let mut lip = if lipschitz > 0.0 { lipschitz } else { 1.0 };
    let mut a = init;
    let mut da = d.dot(&a);
    let mut f = objective(&a, &da);
    let mut y = a.clone();
    let mut dy = da.clone();
    let mut t = 1.0_f64;
    let mut momentum = false;
    let mut trace = cfg.record_trace.then(|| vec![f]);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = d.t().dot(&(&dy - &x));
        let step = 1.0 / lip;
        let mut z = &y - &(grad * step);
        reg.prox_inplace(&mut z, step);
        let dz = d.dot(&z);
        let fz = objective(&z, &dz);

        if fz > f + ASCENT_SLACK * f.abs().max(f64::MIN_POSITIVE) {
            if momentum {
                // restart from the last accepted iterate
                t = 1.0;
                y.assign(&a);
                dy.assign(&da);
                momentum = false;
            } else {
                // a plain gradient step failed to descend: step was too long
                lip *= 2.0;
            }
            continue;
        }

        let diff = (&z - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        let base = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let a_prev = std::mem::replace(&mut a, z);
        let da_prev = std::mem::replace(&mut da, dz);
        f = fz;
        if let Some(tr) = trace.as_mut() {
            tr.push(f);
        }
        if diff / base < cfg.rel_tol {
            converged = true;
            break;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = &a + &((&a - &a_prev) * beta);
        dy = &da + &((&da - &da_prev) * beta);
        momentum = beta > 0.0;
        t = t_next;
    }

    SolveResult {
        coefficients: CoefficientMatrix::new(a).expect("prox iterates of finite data are finite"),
        iterations,
        final_objective: f,
        converged,
        objective_trace: trace,
        lipschitz: lip,
    }
}

/// Column-independent Lasso, `min 1/2 ||x - D a||^2 + lambda ||a||_1`.
pub fn solve_lasso(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve(dict, x, &Penalty::Lasso { lambda }, cfg, None)
}

/// Column-independent Group Lasso over the dictionary's groups.
pub fn solve_group_lasso(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve(dict, x, &Penalty::GroupLasso { lambda }, cfg, None)
}

/// Collaborative (row-sparse) Lasso.
pub fn solve_collab_lasso(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve(dict, x, &Penalty::CollaborativeLasso { lambda }, cfg, None)
}

/// Collaborative Group Lasso (C-GLasso).
pub fn solve_cglasso(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve(
        dict,
        x,
        &Penalty::CollaborativeGroupLasso { lambda },
        cfg,
        None,
    )
}

/// Collaborative hierarchical Lasso (C-HiLasso) with weights from `cfg`.
pub fn solve_chilasso(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve(dict, x, &Penalty::hilasso(cfg), cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn eye_dict(n: usize) -> GroupedDictionary {
        let labels = (0..n).map(|i| format!("g{i}")).collect();
        GroupedDictionary::new(
            Array2::eye(n),
            GroupPartition::singletons(n).unwrap(),
            labels,
        )
        .unwrap()
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            rel_tol: 1e-12,
            max_iters: 10_000,
            record_trace: true,
            ..Default::default()
        }
    }

    #[test]
    fn orthonormal_lasso_is_soft_threshold() {
        let d = eye_dict(2);
        let x = array![[3.0], [0.5]];
        let res = solve_lasso(&d, x.view(), 1.0, &tight()).unwrap();
        let a = res.coefficients.values();
        assert!((a[[0, 0]] - 2.0).abs() < 1e-10);
        assert_eq!(a[[1, 0]], 0.0);
        assert!(res.converged);
    }

    #[test]
    fn power_iteration_on_identity() {
        assert!((eye_dict(5).lipschitz() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = eye_dict(2);
        let cfg = SolverConfig::default();
        let x = array![[f64::NAN], [0.0]];
        assert!(matches!(
            solve_lasso(&d, x.view(), 0.1, &cfg),
            Err(Error::NonFinite(_))
        ));
        let x = array![[1.0], [0.0], [2.0]];
        assert!(solve_lasso(&d, x.view(), 0.1, &cfg).is_err());
        let x = Array2::<f64>::zeros((2, 0));
        assert!(matches!(
            solve_lasso(&d, x.view(), 0.1, &cfg),
            Err(Error::Empty(_))
        ));
        let x = array![[1.0], [0.0]];
        assert!(solve_lasso(&d, x.view(), -0.1, &cfg).is_err());
        let warm = Array2::<f64>::zeros((3, 1));
        assert!(solve(
            &d,
            x.view(),
            &Penalty::Lasso { lambda: 0.1 },
            &cfg,
            Some(warm.view())
        )
        .is_err());
    }

    #[test]
    fn warm_start_at_optimum_stops_immediately() {
        let d = eye_dict(2);
        let x = array![[3.0], [0.5]];
        let opt = array![[2.0], [0.0]];
        let res = solve(
            &d,
            x.view(),
            &Penalty::Lasso { lambda: 1.0 },
            &tight(),
            Some(opt.view()),
        )
        .unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert_eq!(res.coefficients.values(), opt);
    }

    #[test]
    fn trace_starts_at_initial_objective() {
        let d = eye_dict(3);
        let x = array![[1.0, 2.0], [0.0, -1.0], [0.3, 0.2]];
        let res = solve_chilasso(&d, x.view(), &tight()).unwrap();
        let trace = res.objective_trace.unwrap();
        let start = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((trace[0] - start).abs() < 1e-12);
        assert_eq!(*trace.last().unwrap(), res.final_objective);
    }
}
