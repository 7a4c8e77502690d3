//! Coordinate changes that expose what the leader nodes can observe.
//!
//! The functional decomposition maps `x` to `phi = Σ x`, whose dynamics
//! `phi[k+1] = A_D phi[k]` close on themselves and whose first `r`
//! coordinates are `psi = L x`. The staircase then splits `phi = T_D z` into
//! one observable sub-state per leader plus a jointly unobservable remainder.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leaderselect::LeaderSelection;
use crate::numkit::{
    max_abs, observable_subspace_scaled, orthonormal_nullspace_basis, pbh_detectable,
    pseudo_inverse_with, spectral_norm, vstack, RealMatrix, RealVector, ToleranceConfig,
};
use crate::sysmodel::SystemModel;

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalDecomposition {
    pub sigma: RealMatrix,
    pub sigma_pinv: RealMatrix,
    /// Orthonormal rows spanning the null space of `sigma`.
    pub v: RealMatrix,
    pub t: RealMatrix,
    pub t_inv: RealMatrix,
    /// 2-norm condition number of `t`.
    pub t_condition: f64,
    pub a_d: RealMatrix,
    pub c_d: RealMatrix,
    pub a_e: RealMatrix,
    pub a_f: RealMatrix,
}

fn verify(
    check: &'static str,
    residual: &RealMatrix,
    scale: f64,
    tol: &ToleranceConfig,
) -> Result<()> {
    let res = max_abs(residual);
    if tol.negligible(res, scale) {
        Ok(())
    } else {
        Err(Error::ResidualTooLarge {
            check,
            residual: res,
            tolerance: tol.residual_tol * scale.max(1.0),
        })
    }
}

fn inverse_by_solve(t: &RealMatrix, what: &'static str) -> Result<RealMatrix> {
    let n = t.nrows();
    t.clone()
        .lu()
        .solve(&RealMatrix::identity(n, n))
        .ok_or(Error::ResidualTooLarge {
            check: what,
            residual: f64::INFINITY,
            tolerance: 0.0,
        })
}

fn condition_number(t: &RealMatrix) -> f64 {
    if t.is_empty() {
        return 1.0;
    }
    let sv = t.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn build_functional_decomposition(
    m: &SystemModel,
    ls: &LeaderSelection,
    tol: &ToleranceConfig,
) -> Result<FunctionalDecomposition> {
    let n = m.n();
    let q = ls.r_star;
    let sigma = ls.sigma.clone();
    let sigma_pinv = pseudo_inverse_with(&sigma, tol);
    let v = orthonormal_nullspace_basis(&sigma, tol);
    if v.nrows() != n - q {
        return Err(Error::ResidualTooLarge {
            check: "rank of Sigma",
            residual: (v.nrows() as f64 - (n - q) as f64).abs(),
            tolerance: 0.0,
        });
    }
    let t = vstack([&sigma, &v], n);
    let t_inv = inverse_by_solve(&t, "inverse of T")?;

    let a_d = &sigma * &m.a * &sigma_pinv;
    let c_d = &ls.c_star * &sigma_pinv;

    let sigma_a = &sigma * &m.a;
    verify(
        "Sigma A = A_D Sigma",
        &(&sigma_a - &a_d * &sigma),
        max_abs(&sigma_a),
        tol,
    )?;
    verify(
        "C* = C_D Sigma",
        &(&ls.c_star - &c_d * &sigma),
        max_abs(&ls.c_star),
        tol,
    )?;
    verify(
        "Sigma V^T = 0",
        &(&sigma * v.transpose()),
        max_abs(&sigma),
        tol,
    )?;
    verify(
        "V V^T = I",
        &(&v * v.transpose() - RealMatrix::identity(n - q, n - q)),
        1.0,
        tol,
    )?;
    let cond = condition_number(&t);
    verify(
        "T T^-1 = I",
        &(&t * &t_inv - RealMatrix::identity(n, n)),
        cond.min(1e8),
        tol,
    )?;

    let a_bar = &t * &m.a * &t_inv;
    verify(
        "upper-right block of T A T^-1",
        &a_bar.view((0, q), (q, n - q)).into_owned(),
        max_abs(&m.a) * cond.min(1e8),
        tol,
    )?;
    let a_e = a_bar.view((q, 0), (n - q, q)).into_owned();
    let a_f = a_bar.view((q, q), (n - q, n - q)).into_owned();

    if !pbh_detectable(&a_d, &c_d, tol)? {
        return Err(Error::NotDetectable);
    }

    Ok(FunctionalDecomposition {
        sigma,
        sigma_pinv,
        v,
        t,
        t_inv,
        t_condition: cond,
        a_d,
        c_d,
        a_e,
        a_f,
    })
}

/// Block lower-triangular form of `(A_D, C_D)` with one observable block per leader.
#[derive(Debug, Clone, Serialize)]
pub struct StaircaseDecomposition {
    /// `phi = t_d z`; orthogonal up to rounding.
    pub t_d: RealMatrix,
    pub t_d_inv: RealMatrix,
    /// `t_d^-1 A_D t_d`.
    pub a_bar: RealMatrix,
    /// `C_{D_i} t_d` per leader.
    pub c_bar: Vec<RealMatrix>,
    /// Sub-state dimensions `o_1..o_M`.
    pub dims: Vec<usize>,
    /// Dimension of the unobservable sub-state.
    pub u: usize,
}

impl StaircaseDecomposition {
    pub fn leader_count(&self) -> usize {
        self.dims.len()
    }

    pub fn order(&self) -> usize {
        self.a_bar.nrows()
    }

    pub fn offset(&self, j: usize) -> usize {
        self.dims[..j].iter().sum()
    }

    pub fn unobservable_offset(&self) -> usize {
        self.dims.iter().sum()
    }

    /// `A_ij` (sub-state rows `i`, sub-state columns `j`, `j <= i`).
    pub fn a_block(&self, i: usize, j: usize) -> RealMatrix {
        self.a_bar
            .view(
                (self.offset(i), self.offset(j)),
                (self.dims[i], self.dims[j]),
            )
            .into_owned()
    }

    /// `C_ij` for leader `i` and sub-state `j`.
    pub fn c_block(&self, i: usize, j: usize) -> RealMatrix {
        let c = &self.c_bar[i];
        c.view((0, self.offset(j)), (c.nrows(), self.dims[j]))
            .into_owned()
    }

    pub fn a_u(&self) -> RealMatrix {
        let o = self.unobservable_offset();
        self.a_bar.view((o, o), (self.u, self.u)).into_owned()
    }

    /// `A_j`: coupling from sub-state `j` into the unobservable sub-state.
    pub fn a_u_coupling(&self, j: usize) -> RealMatrix {
        let o = self.unobservable_offset();
        self.a_bar
            .view((o, self.offset(j)), (self.u, self.dims[j]))
            .into_owned()
    }
}

/// Multi-sensor observable decomposition of `(a_d, [c_1; ...; c_M])`.
///
/// Pass `i` finds the observable subspace of sensor `i` inside the subspace left
/// unobservable by sensors `1..i-1`; its orthonormal basis becomes the next
/// block of columns of `T_D`. Whatever remains after the last pass is the
/// unobservable sub-state.
pub fn build_staircase(
    a_d: &RealMatrix,
    c_blocks: &[RealMatrix],
    tol: &ToleranceConfig,
) -> Result<StaircaseDecomposition> {
    let q = a_d.nrows();
    let mut residual = RealMatrix::identity(q, q);
    let mut columns: Vec<RealMatrix> = Vec::new();
    let mut dims = Vec::with_capacity(c_blocks.len());

    for c in c_blocks {
        if c.ncols() != q {
            return Err(Error::DimensionMismatch(format!(
                "measurement block has {} columns, expected {q}",
                c.ncols()
            )));
        }
        let d = residual.ncols();
        if d == 0 {
            dims.push(0);
            continue;
        }
        let a_res = residual.transpose() * a_d * &residual;
        let c_res = c * &residual;
        let obs = observable_subspace_scaled(&a_res, &c_res, spectral_norm(c), tol);
        let unobs = orthonormal_nullspace_basis(&vstack([&obs], d), tol);
        dims.push(obs.nrows());
        columns.push(&residual * obs.transpose());
        residual = &residual * unobs.transpose();
    }
    let u = residual.ncols();
    columns.push(residual);

    let mut t_d = RealMatrix::zeros(q, q);
    let mut at = 0;
    for block in &columns {
        t_d.columns_mut(at, block.ncols()).copy_from(block);
        at += block.ncols();
    }
    for mut col in t_d.column_iter_mut() {
        let scale = col.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12 * scale).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    let t_d_inv = inverse_by_solve(&t_d, "inverse of T_D")?;
    verify(
        "T_D T_D^-1 = I",
        &(&t_d * &t_d_inv - RealMatrix::identity(q, q)),
        1.0,
        tol,
    )?;

    let mut a_bar = &t_d_inv * a_d * &t_d;
    let mut c_bar: Vec<RealMatrix> = c_blocks.iter().map(|c| c * &t_d).collect();

    // Enforce the structural zeros above the block diagonal.
    let a_scale = max_abs(a_d);
    let mut off = 0;
    for (i, &o) in dims.iter().enumerate() {
        let right = off + o;
        if right < q {
            let mut block = a_bar.view_mut((off, right), (o, q - right));
            verify("staircase zeros of A", &block.clone_owned(), a_scale, tol)?;
            block.fill(0.0);
            let c = &mut c_bar[i];
            let c_scale = max_abs(&c_blocks[i]);
            let rows = c.nrows();
            let mut cblock = c.view_mut((0, right), (rows, q - right));
            verify("staircase zeros of C", &cblock.clone_owned(), c_scale, tol)?;
            cblock.fill(0.0);
        }
        off = right;
    }

    Ok(StaircaseDecomposition {
        t_d,
        t_d_inv,
        a_bar,
        c_bar,
        dims,
        u,
    })
}

/// Per-leader measurements `ȳ_i = C_{D_i} phi = (rows of C* owned by i) x`.
pub fn reduced_measurements(ls: &LeaderSelection, x: &RealVector) -> Result<Vec<RealVector>> {
    if x.len() != ls.c_star.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, expected {}",
            x.len(),
            ls.c_star.ncols()
        )));
    }
    let y = &ls.c_star * x;
    Ok((0..ls.s_star.len())
        .map(|j| {
            let rows = ls.rows_of_leader(j);
            RealVector::from_iterator(rows.len(), rows.iter().map(|&k| y[k]))
        })
        .collect())
}

/// `C_D` split into per-leader row blocks, in `s_star` order.
pub fn partition_c_d(ls: &LeaderSelection, c_d: &RealMatrix) -> Vec<RealMatrix> {
    (0..ls.s_star.len())
        .map(|j| {
            let rows = ls.rows_of_leader(j);
            RealMatrix::from_fn(rows.len(), c_d.ncols(), |a, b| c_d[(rows[a], b)])
        })
        .collect()
}

/// `phi = Σ x` and its staircase coordinates `z = T_D^-1 phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub phi: RealVector,
    pub z: RealVector,
}

impl ReducedState {
    pub fn new(fd: &FunctionalDecomposition, st: &StaircaseDecomposition, x: &RealVector) -> Self {
        let phi = &fd.sigma * x;
        let z = &st.t_d_inv * &phi;
        Self { phi, z }
    }

    /// The functions of interest, the first `r` coordinates of `phi`.
    pub fn psi(&self, r: usize) -> RealVector {
        self.phi.rows(0, r).into_owned()
    }
}
