//! Reference implementations used to check the production solvers.
//!
//! Nothing here shares code with `chilasso`: the problems are re-derived
//! from their objectives and solved by coordinate descent, exact block
//! minimization or operator splitting, all run to very tight tolerances.
//! Speed is irrelevant; problem sizes in the tests are tiny.

use nalgebra::DMatrix;
use ndarray::{s, Array2, ArrayView2};

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn ranges(sizes: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect()
}

/// How the block penalty is laid out over `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One block per (group, column).
    PerColumn,
    /// One block per group spanning all columns.
    Collaborative,
}

/// Term-by-term objective written with explicit loops:
/// `1/2 ||X - DA||_F^2 + l1 sum |A_ij| + sum_blocks w_G ||block||`.
pub fn objective(
    d: ArrayView2<f64>,
    x: ArrayView2<f64>,
    a: ArrayView2<f64>,
    l1: f64,
    sizes: &[usize],
    weights: &[f64],
    layout: Layout,
) -> f64 {
    let (m, n) = x.dim();
    let p = d.ncols();
    let mut fit = 0.0;
    for j in 0..n {
        for i in 0..m {
            let mut pred = 0.0;
            for k in 0..p {
                pred += d[[i, k]] * a[[k, j]];
            }
            fit += (x[[i, j]] - pred).powi(2);
        }
    }
    let mut l1_sum = 0.0;
    for k in 0..p {
        for j in 0..n {
            l1_sum += a[[k, j]].abs();
        }
    }
    let mut group_sum = 0.0;
    for (r, &w) in ranges(sizes).into_iter().zip(weights) {
        match layout {
            Layout::Collaborative => {
                let mut e = 0.0;
                for k in r.clone() {
                    for j in 0..n {
                        e += a[[k, j]].powi(2);
                    }
                }
                group_sum += w * e.sqrt();
            }
            Layout::PerColumn => {
                for j in 0..n {
                    let mut e = 0.0;
                    for k in r.clone() {
                        e += a[[k, j]].powi(2);
                    }
                    group_sum += w * e.sqrt();
                }
            }
        }
    }
    0.5 * fit + l1 * l1_sum + group_sum
}

/// Cyclic coordinate descent for the column-wise Lasso.
pub fn lasso_cd(d: ArrayView2<f64>, x: ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    let p = d.ncols();
    let mut a = Array2::zeros((p, x.ncols()));
    for j in 0..x.ncols() {
        let mut r = x.column(j).to_owned();
        for _ in 0..1_000_000 {
            let mut max_change: f64 = 0.0;
            for k in 0..p {
                let dk = d.column(k);
                let q = dk.dot(&dk);
                let old = a[[k, j]];
                let rho = dk.dot(&r) + q * old;
                let new = soft(rho, lambda) / q;
                if new != old {
                    r.scaled_add(old - new, &dk);
                    a[[k, j]] = new;
                    max_change = max_change.max((new - old).abs());
                }
            }
            if max_change < 1e-15 {
                break;
            }
        }
    }
    a
}

/// Block coordinate descent over rows for `1/2||X-DA||^2 + lambda sum_k ||a^k||_2`.
/// Each row update has a closed form because the block is a single atom.
pub fn collab_lasso_bcd(d: ArrayView2<f64>, x: ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    let p = d.ncols();
    let mut a = Array2::<f64>::zeros((p, x.ncols()));
    let mut r = x.to_owned();
    for _ in 0..1_000_000 {
        let mut max_change: f64 = 0.0;
        for k in 0..p {
            let dk = d.column(k);
            let q = dk.dot(&dk);
            let old = a.row(k).to_owned();
            let b = dk.dot(&r) + &old * q;
            let norm = b.dot(&b).sqrt();
            let new = if norm <= lambda {
                b * 0.0
            } else {
                b * ((1.0 - lambda / norm) / q)
            };
            let delta = &new - &old;
            for j in 0..r.ncols() {
                for i in 0..r.nrows() {
                    r[[i, j]] -= dk[i] * delta[j];
                }
            }
            max_change = max_change.max(delta.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
            a.row_mut(k).assign(&new);
        }
        if max_change < 1e-15 {
            break;
        }
    }
    a
}

/// Exact minimizer of `1/2 ||R - D_G U||_F^2 + w ||U||_F` via the secular
/// equation `mu ||(Q + mu I)^{-1} B||_F = w`, `Q = D_G^T D_G`, `B = D_G^T R`.
fn group_block_minimizer(dg: ArrayView2<f64>, r: ArrayView2<f64>, w: f64) -> Array2<f64> {
    let k = dg.ncols();
    let n = r.ncols();
    let bmat = dg.t().dot(&r);
    let bnorm = bmat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm <= w {
        return Array2::zeros((k, n));
    }
    let q = dg.t().dot(&dg);
    let b = DMatrix::from_fn(k, n, |i, j| bmat[[i, j]]);
    let solve_at = |mu: f64| -> DMatrix<f64> {
        let m = DMatrix::from_fn(k, k, |i, j| q[[i, j]] + if i == j { mu } else { 0.0 });
        m.cholesky().expect("Q + mu I is positive definite").solve(&b)
    };
    if w == 0.0 {
        // Plain least squares; Q is nonsingular for the test instances.
        let u = DMatrix::from_fn(k, k, |i, j| q[[i, j]]).lu().solve(&b).expect("nonsingular Q");
        return Array2::from_shape_fn((k, n), |(i, j)| u[(i, j)]);
    }
    let h = |mu: f64| mu * solve_at(mu).norm();
    let mut hi = 1.0;
    while h(hi) < w {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = solve_at(0.5 * (lo + hi));
    Array2::from_shape_fn((k, n), |(i, j)| u[(i, j)])
}

/// Exact block coordinate descent for Group Lasso (`PerColumn`) and
/// collaborative Group Lasso (`Collaborative`).
pub fn group_bcd(
    d: ArrayView2<f64>,
    x: ArrayView2<f64>,
    sizes: &[usize],
    weights: &[f64],
    layout: Layout,
) -> Array2<f64> {
    let p = d.ncols();
    let n = x.ncols();
    let mut a = Array2::<f64>::zeros((p, n));
    let columns: Vec<std::ops::Range<usize>> = match layout {
        Layout::Collaborative => vec![0..n],
        Layout::PerColumn => (0..n).map(|j| j..j + 1).collect(),
    };
    for cols in columns {
        let xs = x.slice(s![.., cols.clone()]);
        let mut r = xs.to_owned();
        for _ in 0..100_000 {
            let mut max_change: f64 = 0.0;
            for (g, rows) in ranges(sizes).into_iter().enumerate() {
                let dg = d.slice(s![.., rows.clone()]);
                let old = a.slice(s![rows.clone(), cols.clone()]).to_owned();
                let partial = &r + &dg.dot(&old);
                let new = group_block_minimizer(dg, partial.view(), weights[g]);
                r = &partial - &dg.dot(&new);
                let change = (&new - &old).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                max_change = max_change.max(change);
                a.slice_mut(s![rows, cols.clone()]).assign(&new);
            }
            if max_change < 1e-14 {
                break;
            }
        }
    }
    a
}

/// Coordinate descent for C-HiLasso:
/// `1/2||X-DA||^2 + l1 sum|A_ij| + sum_G w_G ||A^G||_F`.
///
/// Entries are minimized exactly one at a time (the group norm is smooth in
/// one coordinate whenever the rest of its block is nonzero). A block that
/// is entirely zero is a joint kink single coordinates cannot leave, so
/// zero blocks are tested against their exact optimality condition and, if
/// it fails, moved by one block proximal-gradient step.
pub fn hilasso_cd(
    d: ArrayView2<f64>,
    x: ArrayView2<f64>,
    l1: f64,
    sizes: &[usize],
    weights: &[f64],
) -> Array2<f64> {
    let p = d.ncols();
    let n = x.ncols();
    let mut a = Array2::<f64>::zeros((p, n));
    let mut r = x.to_owned();
    let groups = ranges(sizes);
    for _ in 0..2_000_000 {
        let mut max_change: f64 = 0.0;
        for (g, rows) in groups.iter().enumerate() {
            let w = weights[g];
            let dg = d.slice(s![.., rows.clone()]);
            let block_energy: f64 = a.slice(s![rows.clone(), ..]).iter().map(|v| v * v).sum();
            if block_energy == 0.0 {
                let b = dg.t().dot(&r);
                let thresholded = b.mapv(|v| soft(v, l1));
                let tn = thresholded.iter().map(|v| v * v).sum::<f64>().sqrt();
                if tn <= w {
                    continue;
                }
                let lip = rows.len() as f64;
                let step = thresholded * ((1.0 - w / tn) / lip);
                r = &r - &dg.dot(&step);
                max_change = max_change.max(step.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
                a.slice_mut(s![rows.clone(), ..]).assign(&step);
            }
            for k in rows.clone() {
                let dk = d.column(k);
                let q = dk.dot(&dk);
                for j in 0..n {
                    let old = a[[k, j]];
                    let others: f64 = a.slice(s![rows.clone(), ..]).iter().map(|v| v * v).sum::<f64>()
                        - old * old;
                    let others = others.max(0.0);
                    let b = dk.dot(&r.column(j)) + q * old;
                    let new = scalar_minimizer(q, b, l1, w, others.sqrt());
                    if new != old {
                        let delta = new - old;
                        for i in 0..r.nrows() {
                            r[[i, j]] -= dk[i] * delta;
                        }
                        a[[k, j]] = new;
                        max_change = max_change.max(delta.abs());
                    }
                }
            }
        }
        if max_change < 1e-15 {
            break;
        }
    }
    a
}

/// argmin_x 1/2 q x^2 - b x + l1 |x| + w sqrt(x^2 + s^2).
fn scalar_minimizer(q: f64, b: f64, l1: f64, w: f64, s: f64) -> f64 {
    if s == 0.0 {
        return soft(b, l1 + w) / q;
    }
    if b.abs() <= l1 {
        return 0.0;
    }
    let sign = b.signum();
    let c = b.abs() - l1;
    // g(x) = q x - c + w x / sqrt(x^2 + s^2) is increasing on [0, c/q].
    let g = |x: f64| q * x - c + w * x / (x * x + s * s).sqrt();
    let (mut lo, mut hi) = (0.0, c / q);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    sign * 0.5 * (lo + hi)
}

/// Minimizer of `1/2 ||u - v||^2 + t1 ||u||_1 + t2 sum_G ||u^G||_F` found by
/// ADMM that applies the l1 and group proxes separately.
pub fn prox_hilasso_admm(v: ArrayView2<f64>, t1: f64, t2: f64, sizes: &[usize]) -> Array2<f64> {
    let rho = 1.0;
    let mut z = v.to_owned();
    let mut dual = Array2::<f64>::zeros(v.dim());
    let groups = ranges(sizes);
    for _ in 0..200_000 {
        let target = (&v + &((&z - &dual) * rho)) / (1.0 + rho);
        let u = target.mapv(|x| soft(x, t1 / (1.0 + rho)));
        let mut z_new = &u + &dual;
        for rows in &groups {
            let mut block = z_new.slice_mut(s![rows.clone(), ..]);
            let norm = block.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = if norm <= t2 / rho { 0.0 } else { 1.0 - t2 / (rho * norm) };
            block.mapv_inplace(|x| x * scale);
        }
        dual = &dual + &(&u - &z_new);
        let primal = (&u - &z_new).iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        let moved = (&z_new - &z).iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        z = z_new;
        if primal < 1e-14 && moved < 1e-14 {
            break;
        }
    }
    z
}
