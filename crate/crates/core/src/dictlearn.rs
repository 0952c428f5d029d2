//! Per-class dictionary learning and concatenation into a grouped dictionary.
//!
//! Learning alternates batch Lasso coding with a least-squares dictionary
//! update (method of optimal directions). The update is accepted only if it
//! does not raise the training objective once columns are renormalized;
//! otherwise a per-atom update constrained to the unit ball is used, which
//! never increases it. Together with warm-started coding this keeps the
//! per-epoch objective non-increasing.

use log::warn;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_weight, Error, Result};
use crate::model::{GroupPartition, GroupedDictionary, SampleMatrix, SolverConfig};
use crate::solver::{solve, Penalty};

pub const DEFAULT_ATOM_COUNT: usize = 90;

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub samples: SampleMatrix,
    pub class_label: String,
    pub atom_count: usize,
    pub lambda: f64,
    pub epochs: usize,
}

impl TrainingSet {
    pub fn new(samples: SampleMatrix, class_label: impl Into<String>) -> Self {
        Self {
            samples,
            class_label: class_label.into(),
            atom_count: DEFAULT_ATOM_COUNT,
            lambda: 0.1,
            epochs: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnedDictionary {
    pub dictionary: GroupedDictionary,
    /// Training objective (summed Lasso cost) after the coding step of each epoch.
    pub objective_history: Vec<f64>,
    /// Number of dead atoms replaced over the whole run.
    pub reseeded_atoms: usize,
}

fn lasso_cost(d: ArrayView2<f64>, x: ArrayView2<f64>, a: ArrayView2<f64>, lambda: f64) -> f64 {
    let r = &x - &d.dot(&a);
    0.5 * r.iter().map(|v| v * v).sum::<f64>() + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
}

fn col_norm(a: ArrayView2<f64>, j: usize) -> f64 {
    a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Learns a single-group dictionary of `ts.atom_count` unit-norm atoms.
pub fn learn_subdictionary(
    ts: &TrainingSet,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<LearnedDictionary> {
    if ts.atom_count < 1 {
        return Err(Error::InvalidConfig("atom_count must be at least 1".into()));
    }
    if ts.epochs < 1 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    check_weight("lambda", ts.lambda)?;
    cfg.validate()?;
    let x = ts.samples.data();
    let n = x.ncols();
    let k = ts.atom_count;
    if n < k {
        warn!(
            "class {:?}: {n} training samples for {k} atoms; atoms will repeat samples",
            ts.class_label
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = initial_atoms(x, k, &mut rng)?;
    let mut a = Array2::<f64>::zeros((k, n));
    let penalty = Penalty::Lasso { lambda: ts.lambda };
    let mut history = Vec::with_capacity(ts.epochs);
    let mut reseeded = 0;

    for _ in 0..ts.epochs {
        let current = GroupedDictionary::single(d.clone(), ts.class_label.clone())?;
        let coded = solve(&current, x, &penalty, cfg, Some(a.view()))?;
        a = coded.coefficients.into_values();
        history.push(coded.final_objective);

        update_dictionary(&mut d, &mut a, x, ts.lambda);
        reseeded += reseed_dead_atoms(&mut d, a.view(), x);
    }

    let dictionary = GroupedDictionary::single(d, ts.class_label.clone())?;
    Ok(LearnedDictionary {
        dictionary,
        objective_history: history,
        reseeded_atoms: reseeded,
    })
}

fn initial_atoms(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let nonzero: Vec<usize> = (0..x.ncols()).filter(|&j| col_norm(x, j) > 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Empty("nonzero training samples"));
    }
    let m = x.nrows();
    let mut d = Array2::zeros((m, k));
    if nonzero.len() >= k {
        for (slot, pick) in index::sample(rng, nonzero.len(), k).into_iter().enumerate() {
            let j = nonzero[pick];
            d.column_mut(slot).assign(&(&x.column(j) / col_norm(x, j)));
        }
    } else {
        // Not enough distinct samples: cycle through them and perturb the repeats.
        for slot in 0..k {
            let j = nonzero[slot % nonzero.len()];
            let mut atom = &x.column(j) / col_norm(x, j);
            if slot >= nonzero.len() {
                for v in atom.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += 1e-3 * z;
                }
                let norm = atom.dot(&atom).sqrt();
                atom /= norm;
            }
            d.column_mut(slot).assign(&atom);
        }
    }
    Ok(d)
}

/// Rescales columns to unit norm, moving the scale into the code rows.
fn renormalize(d: &mut Array2<f64>, a: &mut Array2<f64>) {
    for j in 0..d.ncols() {
        let norm = col_norm(d.view(), j);
        if norm > 0.0 {
            d.column_mut(j).mapv_inplace(|v| v / norm);
            a.row_mut(j).mapv_inplace(|v| v * norm);
        }
    }
}

fn update_dictionary(d: &mut Array2<f64>, a: &mut Array2<f64>, x: ArrayView2<f64>, lambda: f64) {
    let before = lasso_cost(d.view(), x, a.view(), lambda);
    let used: Vec<usize> = (0..a.nrows())
        .filter(|&r| a.row(r).iter().any(|&v| v != 0.0))
        .collect();
    if used.is_empty() {
        return;
    }

    if let Some((mut d_mod, mut a_mod)) = mod_update(d.view(), a.view(), x, &used) {
        renormalize(&mut d_mod, &mut a_mod);
        if lasso_cost(d_mod.view(), x, a_mod.view(), lambda) <= before {
            *d = d_mod;
            *a = a_mod;
            return;
        }
    }
    ball_constrained_update(d, a, x, &used);
}

fn mod_update(
    d: ArrayView2<f64>,
    a: ArrayView2<f64>,
    x: ArrayView2<f64>,
    used: &[usize],
) -> Option<(Array2<f64>, Array2<f64>)> {
    let au = a.select(Axis(0), used);
    let gram = au.dot(&au.t());
    let rhs = x.dot(&au.t());
    let k = used.len();
    let ridge = 1e-10 * gram.diag().sum() / k as f64;
    let g = DMatrix::from_fn(k, k, |i, j| gram[[i, j]] + if i == j { ridge } else { 0.0 });
    let chol = g.cholesky()?;
    let b = DMatrix::from_fn(k, rhs.nrows(), |i, j| rhs[[j, i]]);
    let sol = chol.solve(&b);
    let mut d_new = d.to_owned();
    for (slot, &atom) in used.iter().enumerate() {
        let col = Array1::from_shape_fn(d.nrows(), |i| sol[(slot, i)]);
        if !col.iter().all(|v| v.is_finite()) || col.dot(&col) == 0.0 {
            return None;
        }
        d_new.column_mut(atom).assign(&col);
    }
    Some((d_new, a.to_owned()))
}

/// One sweep of exact per-atom minimization over `||d_k|| <= 1`, then
/// renormalization (which only shrinks code rows).
fn ball_constrained_update(
    d: &mut Array2<f64>,
    a: &mut Array2<f64>,
    x: ArrayView2<f64>,
    used: &[usize],
) {
    let mut residual = &x - &d.dot(&*a);
    for &atom in used {
        let code = a.row(atom).to_owned();
        let energy = code.dot(&code);
        let old = d.column(atom).to_owned();
        let old_outer = old
            .view()
            .insert_axis(Axis(1))
            .dot(&code.view().insert_axis(Axis(0)));
        residual += &old_outer;
        let mut fresh = residual.dot(&code) / energy;
        let norm = fresh.dot(&fresh).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            fresh = old;
        } else if norm > 1.0 {
            fresh /= norm;
        }
        let new_outer = fresh
            .view()
            .insert_axis(Axis(1))
            .dot(&code.view().insert_axis(Axis(0)));
        residual -= &new_outer;
        d.column_mut(atom).assign(&fresh);
    }
    renormalize(d, a);
}

/// Replaces atoms whose code row is identically zero by the normalized
/// samples with the largest current residuals. Returns how many were replaced.
fn reseed_dead_atoms(d: &mut Array2<f64>, a: ArrayView2<f64>, x: ArrayView2<f64>) -> usize {
    let dead: Vec<usize> = (0..a.nrows())
        .filter(|&r| a.row(r).iter().all(|&v| v == 0.0))
        .collect();
    if dead.is_empty() {
        return 0;
    }
    let residual = &x - &d.dot(&a);
    let mut order: Vec<(usize, f64)> = (0..x.ncols())
        .filter(|&j| col_norm(x, j) > 0.0)
        .map(|j| (j, col_norm(residual.view(), j)))
        .collect();
    order.sort_by(|l, r| r.1.total_cmp(&l.1).then(l.0.cmp(&r.0)));
    let mut replaced = 0;
    for (&atom, &(j, _)) in dead.iter().zip(&order) {
        let norm = col_norm(x, j);
        d.column_mut(atom).assign(&(&x.column(j) / norm));
        replaced += 1;
    }
    replaced
}

/// `[D_1 | D_2 | ... ]` with group boundaries at the part boundaries.
pub fn concat_dictionaries(parts: &[GroupedDictionary]) -> Result<GroupedDictionary> {
    let first = parts.first().ok_or(Error::Empty("dictionary parts"))?;
    let m = first.dim();
    for part in parts {
        if part.dim() != m {
            return Err(Error::mismatch("dictionary part rows", m, part.dim()));
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.atoms()).collect();
    let atoms = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
    let sizes: Vec<usize> = parts
        .iter()
        .flat_map(|p| p.groups().sizes().to_vec())
        .collect();
    let labels: Vec<String> = parts.iter().flat_map(|p| p.labels().to_vec()).collect();
    GroupedDictionary::new(atoms, GroupPartition::from_sizes(&sizes)?, labels)
}

/// Splits a grouped dictionary back into single-group parts.
pub fn split_dictionary(dict: &GroupedDictionary) -> Vec<GroupedDictionary> {
    (0..dict.n_groups())
        .map(|g| dict.group_dictionary(g))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_dict(m: usize, k: usize, label: &str, seed: u64) -> GroupedDictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = Array2::from_shape_fn((m, k), |_| StandardNormal.sample(&mut rng));
        GroupedDictionary::normalized(
            atoms,
            GroupPartition::from_sizes(&[k]).unwrap(),
            vec![label.into()],
        )
        .unwrap()
    }

    #[test]
    fn concat_examples() {
        let a = random_dict(5, 90, "a", 1);
        let b = random_dict(5, 90, "b", 2);
        let one = concat_dictionaries(std::slice::from_ref(&a)).unwrap();
        assert_eq!(one, a);
        let both = concat_dictionaries(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(both.n_atoms(), 180);
        assert_eq!(both.groups().sizes(), &[90, 90]);
        assert_eq!(both.labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(split_dictionary(&both), vec![a.clone(), b]);
        let dup = random_dict(5, 3, "a", 3);
        assert!(matches!(
            concat_dictionaries(&[a.clone(), dup]),
            Err(Error::DuplicateLabel(_))
        ));
        let short = random_dict(4, 3, "c", 4);
        assert!(concat_dictionaries(&[a, short]).is_err());
        assert!(concat_dictionaries(&[]).is_err());
    }

    #[test]
    fn rejects_degenerate_training() {
        let zeros = SampleMatrix::indexed(Array2::zeros((4, 10))).unwrap();
        let ts = TrainingSet {
            atom_count: 3,
            ..TrainingSet::new(zeros, "z")
        };
        assert!(learn_subdictionary(&ts, &SolverConfig::default(), 0).is_err());
        let data = SampleMatrix::indexed(Array2::ones((4, 10))).unwrap();
        let ts = TrainingSet {
            atom_count: 0,
            ..TrainingSet::new(data, "z")
        };
        assert!(learn_subdictionary(&ts, &SolverConfig::default(), 0).is_err());
    }

    #[test]
    fn fewer_samples_than_atoms_still_learns() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = Array2::from_shape_fn((6, 4), |_| StandardNormal.sample(&mut rng));
        let ts = TrainingSet {
            atom_count: 8,
            epochs: 3,
            lambda: 0.05,
            ..TrainingSet::new(SampleMatrix::indexed(data).unwrap(), "few")
        };
        let learned = learn_subdictionary(&ts, &SolverConfig::default(), 1).unwrap();
        assert_eq!(learned.dictionary.n_atoms(), 8);
    }

    #[test]
    fn ball_update_never_increases_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((5, 12), |_| StandardNormal.sample(&mut rng));
        let mut d = random_dict(5, 4, "d", 6).atoms().to_owned();
        let mut a = Array2::from_shape_fn((4, 12), |_| StandardNormal.sample(&mut rng));
        let before = lasso_cost(d.view(), x.view(), a.view(), 0.3);
        ball_constrained_update(&mut d, &mut a, x.view(), &[0, 1, 2, 3]);
        let after = lasso_cost(d.view(), x.view(), a.view(), 0.3);
        assert!(after <= before + 1e-12);
        for j in 0..4 {
            assert!((col_norm(d.view(), j) - 1.0).abs() < 1e-12);
        }
    }
}
