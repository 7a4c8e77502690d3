//! Tolerance-aware dense linear algebra.
//!
//! Every rank decision in the crate goes through [`numerical_rank`], which uses
//! the SVD with a cutoff relative to the largest singular value. Zero-row and
//! zero-column matrices are legal inputs everywhere and contribute nothing to
//! ranks or row spaces.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type RealVector = DVector<f64>;
pub type Complex64 = Complex<f64>;

/// Numerical slack used by rank, stability and identity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Relative singular-value cutoff. The effective cutoff is
    /// `sigma_max * max(rank_tol, eps * max(rows, cols))`.
    pub rank_tol: f64,
    /// A matrix is Schur stable when its spectral radius is below `1 - stability_margin`.
    pub stability_margin: f64,
    /// Slack for residual checks such as `Sigma A - A_D Sigma = 0`, relative to the
    /// magnitude of the quantities involved.
    pub residual_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-10,
            stability_margin: 1e-9,
            residual_tol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rank_tol", self.rank_tol),
            ("stability_margin", self.stability_margin),
            ("residual_tol", self.residual_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidTolerance(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn cutoff(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        let machine = f64::EPSILON * rows.max(cols) as f64;
        sigma_max * self.rank_tol.max(machine)
    }

    /// Whether `residual` is negligible next to a quantity of size `scale`.
    pub fn negligible(&self, residual: f64, scale: f64) -> bool {
        residual <= self.residual_tol * scale.max(1.0)
    }
}

/// Rejects matrices containing NaN or infinite entries.
pub fn ensure_finite(m: &RealMatrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} has non-finite entries")))
    }
}

/// Builds a matrix from row vectors, checking that rows are not ragged.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Result<RealMatrix> {
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "row of length {} where {} columns were expected",
            bad.len(),
            cols
        )));
    }
    let m = RealMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn matrix_to_rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Vertical concatenation. All parts must have `cols` columns; zero-row parts are skipped.
pub fn vstack<'a, I>(parts: I, cols: usize) -> RealMatrix
where
    I: IntoIterator<Item = &'a RealMatrix>,
{
    let parts: Vec<&RealMatrix> = parts.into_iter().collect();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = RealMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((at, 0), (p.nrows(), cols)).copy_from(p);
        at += p.nrows();
    }
    out
}

/// Largest absolute entry (0 for empty matrices).
pub fn max_abs<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.iter().map(|v| v.clone().abs()).fold(0.0, f64::max)
}

fn rank_generic<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: &ToleranceConfig) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    let cut = tol.cutoff(sigma_max, m.nrows(), m.ncols());
    sv.iter().filter(|&&s| s > cut).count()
}

pub fn numerical_rank(m: &RealMatrix, tol: &ToleranceConfig) -> usize {
    rank_generic(m, tol)
}

pub fn complex_rank(m: &DMatrix<Complex64>, tol: &ToleranceConfig) -> usize {
    rank_generic(m, tol)
}

pub fn to_complex(m: &RealMatrix) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Moore-Penrose pseudo-inverse with the default tolerance.
pub fn pseudo_inverse(m: &RealMatrix) -> RealMatrix {
    pseudo_inverse_with(m, &ToleranceConfig::default())
}

pub fn pseudo_inverse_with(m: &RealMatrix, tol: &ToleranceConfig) -> RealMatrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RealMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = tol.cutoff(sigma_max, m.nrows(), m.ncols());
    let u = svd.u.as_ref().expect("u computed");
    let v_t = svd.v_t.as_ref().expect("v_t computed");
    let mut out = RealMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if sigma_max > 0.0 && s > cut {
            out += (v_t.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    out
}

/// Flips the sign of a vector so that its first entry of non-negligible magnitude is positive.
fn canonical_sign(v: &mut [f64]) {
    let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if let Some(first) = v
        .iter()
        .find(|x| x.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE))
    {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full right-singular basis of `m` split into (row space, null space), both as
/// orthonormal rows with the canonical sign convention applied.
fn right_split(m: &RealMatrix, tol: &ToleranceConfig) -> (RealMatrix, RealMatrix) {
    right_split_ranked(m, numerical_rank(m, tol))
}

/// Singular values of `m` above an absolute cutoff.
fn rank_above(m: &RealMatrix, cut: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > cut)
        .count()
}

fn right_split_ranked(m: &RealMatrix, rank: usize) -> (RealMatrix, RealMatrix) {
    let n = m.ncols();
    if n == 0 {
        return (RealMatrix::zeros(0, 0), RealMatrix::zeros(0, 0));
    }
    if m.nrows() == 0 {
        return (RealMatrix::zeros(0, n), RealMatrix::identity(n, n));
    }
    // Pad with zero rows so the thin SVD yields a complete right basis.
    let padded = if m.nrows() < n {
        vstack([m, &RealMatrix::zeros(n - m.nrows(), n)], n)
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t computed");
    let mut rows: Vec<Vec<f64>> = v_t
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    rows.iter_mut().for_each(|r| canonical_sign(r));
    let range = RealMatrix::from_fn(rank, n, |i, j| rows[i][j]);
    let null = RealMatrix::from_fn(n - rank, n, |i, j| rows[rank + i][j]);
    (range, null)
}

/// Orthonormal rows spanning the right null space of `m`.
pub fn orthonormal_nullspace_basis(m: &RealMatrix, tol: &ToleranceConfig) -> RealMatrix {
    right_split(m, tol).1
}

/// Orthonormal rows spanning the row space of `m`.
pub fn orthonormal_rowspace_basis(m: &RealMatrix, tol: &ToleranceConfig) -> RealMatrix {
    right_split(m, tol).0
}

fn require_square(m: &RealMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::SquareRequired {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// All eigenvalues with multiplicity, in the order produced by the real Schur form.
pub fn eigenvalues(m: &RealMatrix) -> Result<Vec<Complex64>> {
    require_square(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &RealMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn is_schur_stable(m: &RealMatrix, tol: &ToleranceConfig) -> Result<bool> {
    Ok(spectral_radius(m)? < 1.0 - tol.stability_margin)
}

/// True iff every row of `rows` lies in the row space of `m`.
pub fn row_space_contains(
    m: &RealMatrix,
    rows: &RealMatrix,
    tol: &ToleranceConfig,
) -> Result<bool> {
    if m.ncols() != rows.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "row space test on {} vs {} columns",
            m.ncols(),
            rows.ncols()
        )));
    }
    let stacked = vstack([m, rows], m.ncols());
    Ok(numerical_rank(&stacked, tol) == numerical_rank(m, tol))
}

/// Indices of rows of `candidates` that are linearly independent of `base` and of
/// each other, chosen greedily in row order.
pub fn greedy_independent_rows(
    base: &RealMatrix,
    candidates: &RealMatrix,
    tol: &ToleranceConfig,
) -> Vec<usize> {
    let cols = base.ncols();
    let mut acc = base.clone();
    let mut rank = numerical_rank(&acc, tol);
    let mut picked = Vec::new();
    for i in 0..candidates.nrows() {
        let trial = vstack([&acc, &candidates.rows(i, 1).into_owned()], cols);
        let r = numerical_rank(&trial, tol);
        if r > rank {
            acc = trial;
            rank = r;
            picked.push(i);
        }
    }
    picked
}

/// Normal rank and finite candidate points of the real pencil `s E - G`.
///
/// The rank of `s E - G` equals `normal_rank` for every `s` except finitely many,
/// and every such exceptional point is contained in `candidates`.
#[derive(Debug, Clone)]
pub struct PencilStructure {
    pub normal_rank: usize,
    pub candidates: Vec<Complex64>,
}

/// Staircase reduction of a rectangular pencil.
///
/// Column-compress `E`; the columns where `E` vanishes carry a constant block
/// whose row space is split off, and the remaining pencil has strictly fewer
/// columns. Once `E` has full column rank the pencil is equivalent to
/// `[sI - K; H]`, whose rank can only drop at eigenvalues of `K`.
pub fn pencil_structure(e: &RealMatrix, g: &RealMatrix, tol: &ToleranceConfig) -> PencilStructure {
    assert_eq!(e.shape(), g.shape(), "pencil shape mismatch");
    let (m, c) = e.shape();
    // Projected blocks deep in the recursion can be pure roundoff, so every
    // rank decision is made against the scale of the original pencil.
    let scale = e.norm().max(g.norm());
    staircase(e, g, tol.cutoff(scale, m, c), tol)
}

fn staircase(e: &RealMatrix, g: &RealMatrix, cut: f64, tol: &ToleranceConfig) -> PencilStructure {
    let (m, c) = e.shape();
    if m == 0 || c == 0 {
        return PencilStructure {
            normal_rank: 0,
            candidates: Vec::new(),
        };
    }
    let (range, null) = right_split_ranked(e, rank_above(e, cut));
    let k = range.nrows();
    if k == c {
        // E = U [S; 0] V^T with S invertible.
        let svd = e.clone().svd(true, true);
        let u = svd.u.expect("u computed");
        let v_t = svd.v_t.expect("v_t computed");
        // Complete U to a square orthogonal matrix when m > c.
        let u_full = complete_columns(&u, tol);
        let g_t = u_full.transpose() * g * v_t.transpose();
        let s_inv = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
        let k_mat = g_t.rows(0, c).into_owned() * s_inv;
        let candidates = eigenvalues(&k_mat).unwrap_or_default();
        return PencilStructure {
            normal_rank: c,
            candidates,
        };
    }
    // E V = [E1, 0]; G V = [G1, G2].
    let e1 = e * range.transpose();
    let g1 = g * range.transpose();
    let g2 = g * null.transpose();
    let g2_t = g2.transpose();
    let g2_rank = rank_above(&g2, cut);
    // Left null space of G2: rows w with w G2 = 0.
    let left_null = right_split_ranked(&g2_t, g2_rank).1;
    let sub = staircase(&(&left_null * e1), &(&left_null * g1), cut, tol);
    PencilStructure {
        normal_rank: g2_rank + sub.normal_rank,
        candidates: sub.candidates,
    }
}

/// Extends orthonormal columns `u` (m x c) to an m x m orthogonal matrix.
fn complete_columns(u: &RealMatrix, tol: &ToleranceConfig) -> RealMatrix {
    let (m, c) = u.shape();
    if c >= m {
        return u.columns(0, m).into_owned();
    }
    let comp = orthonormal_nullspace_basis(&u.transpose(), tol);
    let mut out = RealMatrix::zeros(m, m);
    out.columns_mut(0, c).copy_from(u);
    out.columns_mut(c, m - c).copy_from(&comp.transpose());
    out
}

/// Rank of `s E - G` at a complex point.
pub fn pencil_rank_at(
    e: &RealMatrix,
    g: &RealMatrix,
    s: Complex64,
    tol: &ToleranceConfig,
) -> usize {
    let p = to_complex(e) * s - to_complex(g);
    complex_rank(&p, tol)
}

/// Decides `rank(s E - G) = target` for all `|s| >= 1`.
///
/// Evaluated at the pencil's finite candidate points together with any
/// `extra` points supplied by the caller; points inside the disk of radius
/// `1 - stability_margin` are ignored.
pub fn pencil_rank_holds_outside_disk(
    e: &RealMatrix,
    g: &RealMatrix,
    target: usize,
    extra: &[Complex64],
    tol: &ToleranceConfig,
) -> bool {
    let structure = pencil_structure(e, g, tol);
    if structure.normal_rank != target {
        return false;
    }
    structure
        .candidates
        .iter()
        .chain(extra.iter())
        .filter(|s| s.norm() >= 1.0 - tol.stability_margin)
        .all(|&s| pencil_rank_at(e, g, s, tol) == target)
}

/// PBH detectability of `(a, c)`: `rank [sI - A; C] = n` at every eigenvalue with
/// modulus at least `1 - stability_margin`.
pub fn pbh_detectable(a: &RealMatrix, c: &RealMatrix, tol: &ToleranceConfig) -> Result<bool> {
    require_square(a)?;
    let n = a.nrows();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "C has {} columns, A is {n}x{n}",
            c.ncols()
        )));
    }
    let e = vstack(
        [
            &RealMatrix::identity(n, n),
            &RealMatrix::zeros(c.nrows(), n),
        ],
        n,
    );
    let g = vstack([a, &(-c)], n);
    Ok(eigenvalues(a)?
        .iter()
        .filter(|s| s.norm() >= 1.0 - tol.stability_margin)
        .all(|&s| pencil_rank_at(&e, &g, s, tol) == n))
}

/// Orthonormal row basis of the observable subspace of `(a, c)`, built by
/// Krylov iteration `R <- orth([R; R A])` starting from the row space of `c`.
pub fn observable_subspace(a: &RealMatrix, c: &RealMatrix, tol: &ToleranceConfig) -> RealMatrix {
    observable_subspace_scaled(a, c, spectral_norm(c), tol)
}

/// Like [`observable_subspace`], with the rank of `c` judged against `c_scale`
/// instead of its own norm. Use this when `c` is a projection of a larger
/// matrix whose remainder may be pure roundoff.
pub fn observable_subspace_scaled(
    a: &RealMatrix,
    c: &RealMatrix,
    c_scale: f64,
    tol: &ToleranceConfig,
) -> RealMatrix {
    let n = a.nrows();
    let cut = tol.cutoff(c_scale, c.nrows(), n);
    let mut basis = right_split_ranked(c, rank_above(c, cut)).0;
    loop {
        let grown = orthonormal_rowspace_basis(&vstack([&basis, &(&basis * a)], n), tol);
        if grown.nrows() == basis.nrows() {
            return basis;
        }
        basis = grown;
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &RealMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}
