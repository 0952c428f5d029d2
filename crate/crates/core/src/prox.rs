//! Closed-form proximal operators of the sparsity regularizers.

use ndarray::{s, Array, Array2, ArrayView, ArrayView2, ArrayViewMut2, Dimension, Zip};

use crate::error::{check_weight, Result};
use crate::model::GroupPartition;

#[inline]
pub(crate) fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Element-wise soft thresholding, the prox of `t ||.||_1`.
pub fn prox_l1<D: Dimension>(v: ArrayView<f64, D>, t: f64) -> Result<Array<f64, D>> {
    check_weight("t", t)?;
    Ok(v.mapv(|x| soft(x, t)))
}

/// Block shrinkage, the prox of `t ||.||_F` on a single block.
pub fn prox_group_l2(v: ArrayView2<f64>, t: f64) -> Result<Array2<f64>> {
    check_weight("t", t)?;
    let mut out = v.to_owned();
    shrink_block(out.view_mut(), t);
    Ok(out)
}

/// Applies [`prox_group_l2`] to every row block `V^G`.
pub fn prox_group_blocks(
    v: ArrayView2<f64>,
    t: f64,
    groups: &GroupPartition,
) -> Result<Array2<f64>> {
    check_weight("t", t)?;
    groups.check_rows("V", v.nrows())?;
    let mut out = v.to_owned();
    for r in groups.ranges() {
        shrink_block(out.slice_mut(s![r, ..]), t);
    }
    Ok(out)
}

/// Prox of `t1 ||.||_1 + t2 sum_G ||.^G||_F`: soft thresholding followed
/// by per-block shrinkage of the thresholded values.
pub fn prox_hilasso(
    v: ArrayView2<f64>,
    t1: f64,
    t2: f64,
    groups: &GroupPartition,
) -> Result<Array2<f64>> {
    check_weight("t1", t1)?;
    check_weight("t2", t2)?;
    groups.check_rows("V", v.nrows())?;
    let mut out = v.mapv(|x| soft(x, t1));
    for r in groups.ranges() {
        shrink_block(out.slice_mut(s![r, ..]), t2);
    }
    Ok(out)
}

/// In-place `V * max(1 - t / ||V||_F, 0)`.
pub(crate) fn shrink_block(mut block: ArrayViewMut2<f64>, t: f64) {
    if t == 0.0 {
        return;
    }
    let norm = block.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        block.fill(0.0);
    } else {
        let scale = 1.0 - t / norm;
        block.mapv_inplace(|x| x * scale);
    }
}

pub(crate) fn soft_inplace(mut a: ArrayViewMut2<f64>, t: f64) {
    if t == 0.0 {
        return;
    }
    Zip::from(&mut a).for_each(|x| *x = soft(*x, t));
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    #[test]
    fn l1_examples() {
        assert_eq!(
            prox_l1(array![3.0, -0.5, 0.0].view(), 1.0).unwrap(),
            array![2.0, 0.0, 0.0]
        );
        let v = array![0.7, -1.2, 3.3];
        assert_eq!(prox_l1(v.view(), 0.0).unwrap(), v);
        assert_eq!(
            prox_l1(array![0.2, -0.3].view(), 1.0).unwrap(),
            array![0.0, 0.0]
        );
        assert!(prox_l1(v.view(), -1.0).is_err());
    }

    #[test]
    fn group_l2_examples() {
        // ||V||_F = 2
        let v = array![[1.2, 0.0], [0.0, 1.6]];
        assert_eq!(prox_group_l2(v.view(), 1.0).unwrap(), &v / 2.0);
        let small = array![[0.3], [0.4]];
        assert_eq!(
            prox_group_l2(small.view(), 1.0).unwrap(),
            Array2::<f64>::zeros((2, 1))
        );
        assert_eq!(prox_group_l2(v.view(), 0.0).unwrap(), v);
        assert!(prox_group_l2(v.view(), -0.1).is_err());
    }

    #[test]
    fn hilasso_reductions() {
        let groups = GroupPartition::from_sizes(&[2, 1]).unwrap();
        let v = array![[1.5, -0.2], [0.4, 2.0], [-3.0, 0.1]];
        assert_eq!(
            prox_hilasso(v.view(), 0.0, 0.7, &groups).unwrap(),
            prox_group_blocks(v.view(), 0.7, &groups).unwrap()
        );
        assert_eq!(
            prox_hilasso(v.view(), 0.3, 0.0, &groups).unwrap(),
            prox_l1(v.view(), 0.3).unwrap()
        );
        assert!(prox_hilasso(v.view(), -1.0, 0.0, &groups).is_err());
        assert!(prox_hilasso(v.view(), 0.0, -1.0, &groups).is_err());
    }

    proptest! {
        // Moreau: prox is nonexpansive.
        #[test]
        fn hilasso_prox_is_nonexpansive(
            a in proptest::collection::vec(-5.0f64..5.0, 6),
            b in proptest::collection::vec(-5.0f64..5.0, 6),
            t1 in 0.0f64..2.0,
            t2 in 0.0f64..2.0,
        ) {
            let groups = GroupPartition::from_sizes(&[2, 4]).unwrap();
            let va = Array1::from(a).into_shape_with_order((6, 1)).unwrap();
            let vb = Array1::from(b).into_shape_with_order((6, 1)).unwrap();
            let pa = prox_hilasso(va.view(), t1, t2, &groups).unwrap();
            let pb = prox_hilasso(vb.view(), t1, t2, &groups).unwrap();
            let d_in = (&va - &vb).mapv(|x| x * x).sum().sqrt();
            let d_out = (&pa - &pb).mapv(|x| x * x).sum().sqrt();
            prop_assert!(d_out <= d_in + 1e-12);
        }
    }
}
