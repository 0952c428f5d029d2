//! Shared data model: grouped dictionaries, sample and coefficient matrices,
//! active-group sets, solver configuration and the objective evaluators.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_weight, Error, Result};

/// Tolerance on the unit-norm invariant of dictionary atoms.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Contiguous partition of `0..p` into `G` non-empty blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    starts: Vec<usize>,
    sizes: Vec<usize>,
}

impl GroupPartition {
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition(
                "at least one group is required".into(),
            ));
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("group {g} is empty")));
        }
        let mut starts = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &size in sizes {
            starts.push(offset);
            offset += size;
        }
        Ok(Self {
            starts,
            sizes: sizes.to_vec(),
        })
    }

    /// `n_groups` blocks of `size` atoms each.
    pub fn uniform(n_groups: usize, size: usize) -> Result<Self> {
        Self::from_sizes(&vec![size; n_groups])
    }

    /// One group per atom.
    pub fn singletons(p: usize) -> Result<Self> {
        Self::uniform(p, 1)
    }

    /// Number of groups `G`.
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Total number of atoms `p`.
    pub fn total(&self) -> usize {
        self.starts.last().unwrap_or(&0) + self.sizes.last().unwrap_or(&0)
    }

    pub fn size(&self, g: usize) -> usize {
        self.sizes[g]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn range(&self, g: usize) -> Range<usize> {
        self.starts[g]..self.starts[g] + self.sizes[g]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.len()).map(move |g| self.range(g))
    }

    /// Group owning atom `k`.
    pub fn group_of(&self, k: usize) -> Option<usize> {
        if k >= self.total() {
            return None;
        }
        Some(self.starts.partition_point(|&s| s <= k) - 1)
    }

    pub(crate) fn check_rows(&self, operand: &'static str, rows: usize) -> Result<()> {
        if self.total() != rows {
            return Err(Error::mismatch(
                operand,
                format!("{} rows (partition total)", self.total()),
                format!("{rows} rows"),
            ));
        }
        Ok(())
    }
}

/// An `m x p` matrix of unit-norm atoms split into contiguous class blocks.
#[derive(Debug, Clone)]
pub struct GroupedDictionary {
    atoms: Array2<f64>,
    groups: GroupPartition,
    labels: Vec<String>,
    lipschitz: OnceLock<f64>,
}

impl GroupedDictionary {
    /// Builds a dictionary from atoms that are already unit norm.
    pub fn new(atoms: Array2<f64>, groups: GroupPartition, labels: Vec<String>) -> Result<Self> {
        Self::validate_shape(&atoms, &groups, &labels)?;
        for (j, col) in atoms.axis_iter(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotNormalized { column: j, norm });
            }
        }
        Ok(Self {
            atoms,
            groups,
            labels,
            lipschitz: OnceLock::new(),
        })
    }

    /// Normalizes every column to unit norm. Zero columns are rejected.
    pub fn normalized(
        mut atoms: Array2<f64>,
        groups: GroupPartition,
        labels: Vec<String>,
    ) -> Result<Self> {
        Self::validate_shape(&atoms, &groups, &labels)?;
        for (j, mut col) in atoms.axis_iter_mut(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroAtom(j));
            }
            col /= norm;
        }
        Ok(Self {
            atoms,
            groups,
            labels,
            lipschitz: OnceLock::new(),
        })
    }

    /// Single-group dictionary, the shape produced by per-class learning.
    pub fn single(atoms: Array2<f64>, label: impl Into<String>) -> Result<Self> {
        let groups = GroupPartition::from_sizes(&[atoms.ncols()])?;
        Self::new(atoms, groups, vec![label.into()])
    }

    fn validate_shape(
        atoms: &Array2<f64>,
        groups: &GroupPartition,
        labels: &[String],
    ) -> Result<()> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::Empty("dictionary atoms"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dictionary atoms"));
        }
        groups.check_rows("dictionary groups", atoms.ncols())?;
        if labels.len() != groups.len() {
            return Err(Error::mismatch(
                "dictionary labels",
                groups.len(),
                labels.len(),
            ));
        }
        let mut seen = HashSet::new();
        for label in labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(())
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn groups(&self) -> &GroupPartition {
        &self.groups
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Signal dimension `m`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `p`.
    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Atoms of group `g`.
    pub fn block(&self, g: usize) -> ArrayView2<'_, f64> {
        self.atoms.slice(s![.., self.groups.range(g)])
    }

    /// Copy of group `g` as a standalone single-group dictionary.
    pub fn group_dictionary(&self, g: usize) -> GroupedDictionary {
        let atoms = self.block(g).to_owned();
        let groups = GroupPartition::from_sizes(&[atoms.ncols()]).expect("non-empty group");
        GroupedDictionary {
            atoms,
            groups,
            labels: vec![self.labels[g].clone()],
            lipschitz: OnceLock::new(),
        }
    }

    /// Largest eigenvalue of `D^T D`, computed once by power iteration.
    pub fn lipschitz(&self) -> f64 {
        *self
            .lipschitz
            .get_or_init(|| crate::solver::power_iteration(self.atoms.view()))
    }
}

impl PartialEq for GroupedDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.groups == other.groups && self.labels == other.labels
    }
}

/// Identifier carried along with each sample column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleId {
    Index(usize),
    /// Frame start time in seconds.
    Time(f64),
    /// Top-left corner of an image patch.
    Patch {
        row: usize,
        col: usize,
    },
}

/// An `m x n` matrix whose columns are samples.
///
/// Zero columns are allowed only through [`SampleMatrix::empty`]; feature
/// extraction on silence legitimately yields nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Array2<f64>,
    ids: Vec<SampleId>,
}

impl SampleMatrix {
    pub fn new(data: Array2<f64>, ids: Vec<SampleId>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::Empty("sample matrix"));
        }
        if ids.len() != data.ncols() {
            return Err(Error::mismatch("sample ids", data.ncols(), ids.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample matrix"));
        }
        Ok(Self { data, ids })
    }

    /// Samples numbered `0..n`.
    pub fn indexed(data: Array2<f64>) -> Result<Self> {
        let ids = (0..data.ncols()).map(SampleId::Index).collect();
        Self::new(data, ids)
    }

    pub fn empty(m: usize) -> Self {
        Self {
            data: Array2::zeros((m, 0)),
            ids: Vec::new(),
        }
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Sub-collection of the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        let data = self.data.select(Axis(1), columns);
        let ids = columns.iter().map(|&j| self.ids[j]).collect();
        Self::new(data, ids)
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

/// A `p x n` code matrix aligned with a dictionary's atoms and a sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    values: Array2<f64>,
}

impl CoefficientMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient matrix"));
        }
        Ok(Self { values })
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        Self {
            values: Array2::zeros((p, n)),
        }
    }

    /// Checks the shape against a dictionary and a sample count.
    pub fn check_shape(&self, dict: &GroupedDictionary, n: usize) -> Result<()> {
        if self.values.dim() != (dict.n_atoms(), n) {
            return Err(Error::mismatch(
                "coefficient matrix",
                format!("{}x{}", dict.n_atoms(), n),
                format!("{}x{}", self.values.nrows(), self.values.ncols()),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Which groups (sources) are detected as present in a collection.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveGroupSet {
    flags: Vec<bool>,
    energies: Vec<f64>,
}

impl ActiveGroupSet {
    pub fn new(flags: Vec<bool>, energies: Vec<f64>) -> Result<Self> {
        if flags.len() != energies.len() {
            return Err(Error::mismatch(
                "active set energies",
                flags.len(),
                energies.len(),
            ));
        }
        for (g, (&flag, &energy)) in flags.iter().zip(&energies).enumerate() {
            if !(energy >= 0.0) || !energy.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "group {g} energy must be finite and nonnegative, got {energy}"
                )));
            }
            if flag && energy <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "group {g} flagged active with zero energy"
                )));
            }
        }
        Ok(Self { flags, energies })
    }

    /// Ground-truth set; active groups get unit energy.
    pub fn from_flags(flags: Vec<bool>) -> Self {
        let energies = flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        Self { flags, energies }
    }

    /// Ground-truth set of size `n_groups` with the listed groups active.
    pub fn from_indices(n_groups: usize, active: &[usize]) -> Self {
        let mut flags = vec![false; n_groups];
        for &g in active {
            flags[g] = true;
        }
        Self::from_flags(flags)
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(g, &f)| f.then_some(g))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// How the solver-level group weight is derived from `lambda2_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lambda2Scaling {
    /// `lambda2 = lambda2_0 * sqrt(|G| * n)`.
    #[default]
    SqrtGroupSizeTimesSamples,
    /// `lambda2 = lambda2_0`.
    Unscaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Atom-level (l1) weight.
    pub lambda1: f64,
    /// Base group weight, scaled per group by [`Lambda2Scaling`].
    pub lambda2_0: f64,
    pub lambda2_scaling: Lambda2Scaling,
    pub max_iters: usize,
    /// Relative iterate change below which the solver stops.
    pub rel_tol: f64,
    /// When false, column-separable problems may be split across threads,
    /// which makes the result depend on the worker count.
    pub deterministic: bool,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.8,
            lambda2_0: 0.008,
            lambda2_scaling: Lambda2Scaling::default(),
            max_iters: 5000,
            rel_tol: 1e-6,
            deterministic: true,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        check_weight("lambda1", self.lambda1)?;
        check_weight("lambda2_0", self.lambda2_0)?;
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }

    /// Effective group weight for a group of `group_size` atoms coding `n` samples.
    pub fn group_weight(&self, group_size: usize, n: usize) -> f64 {
        match self.lambda2_scaling {
            Lambda2Scaling::SqrtGroupSizeTimesSamples => {
                self.lambda2_0 * ((group_size * n) as f64).sqrt()
            }
            Lambda2Scaling::Unscaled => self.lambda2_0,
        }
    }
}

fn check_finite1(name: &'static str, v: ArrayView1<f64>) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    Ok(())
}

/// `1/2 ||x - D a||^2 + lambda ||a||_1`.
pub fn objective_lasso(
    dict: &GroupedDictionary,
    x: ArrayView1<f64>,
    a: ArrayView1<f64>,
    lambda: f64,
) -> Result<f64> {
    check_weight("lambda", lambda)?;
    if x.len() != dict.dim() {
        return Err(Error::mismatch("x", dict.dim(), x.len()));
    }
    if a.len() != dict.n_atoms() {
        return Err(Error::mismatch("a", dict.n_atoms(), a.len()));
    }
    check_finite1("x", x)?;
    check_finite1("a", a)?;
    let residual = &x - &dict.atoms().dot(&a);
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    Ok(0.5 * residual.dot(&residual) + lambda * l1)
}

/// `1/2 ||X - D A||_F^2 + lambda2 sum_G ||A^G||_F + lambda1 sum_j ||a_j||_1`.
pub fn objective_chilasso(
    dict: &GroupedDictionary,
    x: ArrayView2<f64>,
    a: ArrayView2<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    check_weight("lambda1", lambda1)?;
    check_weight("lambda2", lambda2)?;
    if x.nrows() != dict.dim() {
        return Err(Error::mismatch("X rows", dict.dim(), x.nrows()));
    }
    if a.dim() != (dict.n_atoms(), x.ncols()) {
        return Err(Error::mismatch(
            "A",
            format!("{}x{}", dict.n_atoms(), x.ncols()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if x.iter().chain(a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("X or A"));
    }
    let residual = &x - &dict.atoms().dot(&a);
    let fit = 0.5 * residual.iter().map(|r| r * r).sum::<f64>();
    let group: f64 = group_energies(a, dict.groups())?.iter().sum();
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    Ok(fit + lambda2 * group + lambda1 * l1)
}

/// Frobenius norm of every row block `A^G`.
pub fn group_energies(a: ArrayView2<f64>, groups: &GroupPartition) -> Result<Vec<f64>> {
    groups.check_rows("coefficient rows", a.nrows())?;
    Ok(groups
        .ranges()
        .map(|r| a.slice(s![r, ..]).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn identity2() -> GroupedDictionary {
        GroupedDictionary::new(
            Array2::eye(2),
            GroupPartition::uniform(2, 1).unwrap(),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn lasso_objective_examples() {
        let d = identity2();
        let zero = Array1::zeros(2);
        assert_eq!(
            objective_lasso(&d, zero.view(), zero.view(), 1.0).unwrap(),
            0.0
        );
        let v = objective_lasso(&d, array![3.0, 0.5].view(), array![2.0, 0.0].view(), 1.0).unwrap();
        assert!((v - 2.625).abs() < 1e-15);
        let ones = array![1.0, 1.0];
        assert_eq!(
            objective_lasso(&d, ones.view(), ones.view(), 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn lasso_objective_names_bad_operand() {
        let d = identity2();
        let err =
            objective_lasso(&d, array![1.0].view(), array![0.0, 0.0].view(), 1.0).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { operand: "x", .. }));
        let err =
            objective_lasso(&d, array![1.0, 0.0].view(), array![0.0].view(), 1.0).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { operand: "a", .. }));
    }

    #[test]
    fn chilasso_rejects_negative_lambda() {
        let d = identity2();
        let x = Array2::zeros((2, 1));
        let a = Array2::zeros((2, 1));
        assert!(matches!(
            objective_chilasso(&d, x.view(), a.view(), -1.0, 0.0),
            Err(Error::NegativeWeight {
                name: "lambda1",
                ..
            })
        ));
        assert!(objective_chilasso(&d, x.view(), a.view(), 0.0, -0.1).is_err());
        assert_eq!(
            objective_chilasso(&d, x.view(), a.view(), 1.0, 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn group_energy_pythagorean() {
        let groups = GroupPartition::from_sizes(&[2]).unwrap();
        let e = group_energies(array![[3.0], [4.0]].view(), &groups).unwrap();
        assert_eq!(e, vec![5.0]);
        let zero = group_energies(Array2::zeros((2, 3)).view(), &groups).unwrap();
        assert_eq!(zero, vec![0.0]);
        assert!(group_energies(Array2::zeros((3, 1)).view(), &groups).is_err());
    }

    #[test]
    fn partition_bookkeeping() {
        let g = GroupPartition::from_sizes(&[2, 3, 1]).unwrap();
        assert_eq!(g.total(), 6);
        assert_eq!(g.range(1), 2..5);
        assert_eq!(g.group_of(0), Some(0));
        assert_eq!(g.group_of(4), Some(1));
        assert_eq!(g.group_of(5), Some(2));
        assert_eq!(g.group_of(6), None);
        assert!(GroupPartition::from_sizes(&[2, 0]).is_err());
        assert!(GroupPartition::from_sizes(&[]).is_err());
    }

    #[test]
    fn dictionary_invariants() {
        let atoms = array![[1.0, 0.0], [0.0, 2.0]];
        let groups = GroupPartition::from_sizes(&[2]).unwrap();
        assert!(matches!(
            GroupedDictionary::new(atoms.clone(), groups.clone(), vec!["c".into()]),
            Err(Error::NotNormalized { column: 1, .. })
        ));
        let d = GroupedDictionary::normalized(atoms, groups.clone(), vec!["c".into()]).unwrap();
        assert_eq!(d.atoms()[[1, 1]], 1.0);
        let zero_col = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            GroupedDictionary::normalized(zero_col, groups, vec!["c".into()]),
            Err(Error::ZeroAtom(1))
        ));
        let dup = GroupedDictionary::new(
            Array2::eye(2),
            GroupPartition::uniform(2, 1).unwrap(),
            vec!["x".into(), "x".into()],
        );
        assert!(matches!(dup, Err(Error::DuplicateLabel(_))));
    }

    #[test]
    fn active_set_requires_energy_for_flags() {
        assert!(ActiveGroupSet::new(vec![true, false], vec![0.0, 1.0]).is_err());
        let set = ActiveGroupSet::new(vec![true, false], vec![2.0, 1.0]).unwrap();
        assert_eq!(set.active_indices(), vec![0]);
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg = SolverConfig {
            lambda2_0: 0.5,
            ..Default::default()
        };
        assert!((cfg.group_weight(4, 9) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_matrix_only_via_constructor() {
        assert!(SampleMatrix::indexed(Array2::zeros((3, 0))).is_err());
        assert!(SampleMatrix::empty(3).is_empty());
    }
}
