//! Test-side reference computations, written without the library's numerics.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix};

pub type M = DMatrix<f64>;
pub type C = Complex<f64>;

/// SVD rank with a plain relative cutoff.
pub fn rank(m: &M) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > top * 1e-10 && s > 0.0).count()
}

pub fn crank(m: &DMatrix<C>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > top * 1e-10 && s > 0.0).count()
}

pub fn stack(parts: &[&M], cols: usize) -> M {
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = M::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.view_mut((at, 0), (p.nrows(), cols)).copy_from(p);
        at += p.nrows();
    }
    out
}

pub fn cplx(m: &M) -> DMatrix<C> {
    m.map(|x| C::new(x, 0.0))
}

/// `[c; c a; ...; c a^(n-1)]`.
pub fn observability_matrix(a: &M, c: &M) -> M {
    let n = a.nrows();
    let mut blocks = Vec::new();
    let mut cur = c.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = &cur * a;
    }
    let refs: Vec<&M> = blocks.iter().collect();
    stack(&refs, n)
}

pub fn max_abs(m: &M) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn eig(m: &M) -> Vec<C> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Greedy multiset match of two eigenvalue lists.
pub fn same_spectrum(a: &[C], b: &[C], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|x| {
        let best = (0..b.len())
            .filter(|&j| !used[j])
            .min_by(|&i, &j| (b[i] - x).norm().total_cmp(&(b[j] - x).norm()));
        match best {
            Some(j) if (b[j] - x).norm() <= tol * (1.0 + x.norm()) => {
                used[j] = true;
                true
            }
            _ => false,
        }
    })
}

/// Rank of `[s E - G]` at a complex point.
pub fn pencil_rank(e: &M, g: &M, s: C) -> usize {
    crank(&(cplx(e) * s - cplx(g)))
}

/// Deterministic pseudo-random points with modulus in `[1, 2]`.
pub fn outer_samples(count: usize, seed: u64) -> Vec<C> {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count)
        .map(|_| {
            let r = 1.0 + next();
            let th = 2.0 * std::f64::consts::PI * next();
            C::from_polar(r, th)
        })
        .collect()
}

/// Orthonormal basis (rows) of the row space via SVD.
pub fn row_basis(m: &M) -> M {
    let n = m.ncols();
    let r = rank(m);
    if r == 0 {
        return M::zeros(0, n);
    }
    let padded = if m.nrows() < n {
        stack(&[m, &M::zeros(n - m.nrows(), n)], n)
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    M::from_fn(r, n, |i, j| vt[(idx[i], j)])
}

/// Feasibility of a stacked selection `cbar`: invariance of `[L; cbar]` under
/// `Aᵀ`, then PBH detectability of the induced reduced pair.
pub fn feasible(a: &M, l: &M, cbar: &M) -> bool {
    let n = a.ncols();
    let base = stack(&[l, cbar], n);
    let r = rank(&base);
    if rank(&stack(&[&(l * a), &(cbar * a), l, cbar], n)) != r {
        return false;
    }
    let q = row_basis(&base);
    let a_d = &q * a * q.transpose();
    let c_d = cbar * q.transpose();
    let k = a_d.nrows();
    eig(&a_d)
        .into_iter()
        .filter(|s| s.norm() >= 1.0 - 1e-9)
        .all(|s| {
            let top = cplx(&M::identity(k, k)) * s - cplx(&a_d);
            let pbh = stack_c(&top, &cplx(&c_d));
            crank(&pbh) == k
        })
}

fn stack_c(a: &DMatrix<C>, b: &DMatrix<C>) -> DMatrix<C> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// All non-empty row selections of the sensors in `set`, as `(node, row)` lists.
pub fn selections(sensors: &[M], set: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = set
        .iter()
        .flat_map(|&i| (0..sensors[i].nrows()).map(move |r| (i, r)))
        .collect();
    (1u32..(1 << pairs.len()))
        .map(|mask| {
            (0..pairs.len())
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| pairs[b])
                .collect()
        })
        .collect()
}

pub fn stacked(sensors: &[M], sel: &[(usize, usize)], n: usize) -> M {
    let rows: Vec<M> = sel
        .iter()
        .map(|&(i, r)| sensors[i].rows(r, 1).into_owned())
        .collect();
    let refs: Vec<&M> = rows.iter().collect();
    stack(&refs, n)
}

/// Whether any row selection of `set` is feasible, and the lowest `rank [L; C̄]` among feasible ones.
pub fn set_feasibility(a: &M, l: &M, sensors: &[M], set: &[usize]) -> Option<usize> {
    let n = a.ncols();
    selections(sensors, set)
        .iter()
        .filter_map(|sel| {
            let c = stacked(sensors, sel, n);
            feasible(a, l, &c).then(|| rank(&stack(&[l, &c], n)))
        })
        .min()
}

/// Brute-force minimal leader sets as `(nodes, lowest rank)`.
pub fn minimal_sets(a: &M, l: &M, sensors: &[M]) -> Vec<(Vec<usize>, usize)> {
    let nodes = sensors.len();
    let mut feas: Vec<Option<usize>> = vec![None; 1 << nodes];
    for mask in 1..(1usize << nodes) {
        let set: Vec<usize> = (0..nodes).filter(|i| mask & (1 << i) != 0).collect();
        feas[mask] = set_feasibility(a, l, sensors, &set);
    }
    let mut out = Vec::new();
    for mask in 1..(1usize << nodes) {
        let Some(rank) = feas[mask] else { continue };
        let has_feasible_subset =
            (1..mask).any(|sub| sub & mask == sub && sub != mask && feas[sub].is_some());
        if !has_feasible_subset {
            out.push(((0..nodes).filter(|i| mask & (1 << i) != 0).collect(), rank));
        }
    }
    out.sort_by(|a: &(Vec<usize>, usize), b| a.0.len().cmp(&b.0.len()).then(a.0.cmp(&b.0)));
    out
}

/// Detectable subspace dimension from eigenvalue bookkeeping: `n` minus the
/// number of unobservable unstable modes, found from the Kalman split.
pub fn detectable_dim(a: &M, c: &M) -> usize {
    let n = a.nrows();
    let obs = row_basis(&observability_matrix(a, c));
    let o = obs.nrows();
    if o == n {
        return n;
    }
    let proj = M::identity(n, n) - obs.transpose() * &obs;
    let u = row_basis(&proj);
    let a_u = &u * a * u.transpose();
    n - eig(&a_u).iter().filter(|s| s.norm() >= 1.0 - 1e-9).count()
}
