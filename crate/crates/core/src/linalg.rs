//! Dense complex matrix helpers shared by the model builders.

use faer::{c64, Col, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;
pub type CVec = Col<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

#[inline]
pub fn re(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn to_complex(a: MatRef<'_, f64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| re(a[(i, j)]))
}

pub fn dagger(a: MatRef<'_, c64>) -> CMat {
    a.adjoint().to_owned()
}

/// Kronecker product with the left factor as the major index.
pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let mut out = CMat::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    add_kron(&mut out, ONE, a, b);
    out
}

/// `out += coeff * (a ⊗ b)`, skipping zero entries of `a`.
pub fn add_kron(out: &mut CMat, coeff: c64, a: MatRef<'_, c64>, b: MatRef<'_, c64>) {
    let (br, bc) = (b.nrows(), b.ncols());
    debug_assert_eq!(out.nrows(), a.nrows() * br);
    debug_assert_eq!(out.ncols(), a.ncols() * bc);
    for ai in 0..a.nrows() {
        for aj in 0..a.ncols() {
            let s = coeff * a[(ai, aj)];
            if s == ZERO {
                continue;
            }
            for bj in 0..bc {
                for bi in 0..br {
                    let v = b[(bi, bj)];
                    if v != ZERO {
                        out[(ai * br + bi, aj * bc + bj)] += s * v;
                    }
                }
            }
        }
    }
}

pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// `max |A - A†|`.
pub fn hermiticity_error(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// Averages `A` with its adjoint; removes rounding asymmetry before eigensolves.
pub fn symmetrize(a: &mut CMat) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
        a[(j, j)] = re(a[(j, j)].re);
    }
}

/// Ascending eigenvalues and column eigenvectors of a Hermitian matrix.
///
/// When a diagonal phase `D` makes `D† A D` real (every light-matter
/// Hamiltonian here, with `D = i^μ ⊗ 1`), the real solver is used and the
/// vectors are rotated back. Decoupled blocks (total parity) are solved
/// separately and merged in ascending order.
pub fn eigh(a: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let Some((phases, real, scale)) = real_gauge(a) else {
        return eigh_complex(a);
    };
    let n = a.nrows();
    let mut values = Vec::with_capacity(n);
    // (value, block, column within block)
    let mut order = Vec::with_capacity(n);
    let blocks = components(real.as_ref(), GAUGE_TOLERANCE * scale);
    let mut solved = Vec::with_capacity(blocks.len());
    for (b, idx) in blocks.iter().enumerate() {
        let sub = Mat::<f64>::from_fn(idx.len(), idx.len(), |i, j| real[(idx[i], idx[j])]);
        let evd = sub
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        for k in 0..idx.len() {
            order.push((s[k], b, k));
        }
        solved.push(evd.U().to_owned());
    }
    order.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut vectors = CMat::zeros(n, n);
    for (col, &(v, b, k)) in order.iter().enumerate() {
        values.push(v);
        for (r, &i) in blocks[b].iter().enumerate() {
            vectors[(i, col)] = phases[i] * solved[b][(r, k)];
        }
    }
    Ok((values, vectors))
}

/// Entries below this fraction of the largest one are treated as rounding.
const GAUGE_TOLERANCE: f64 = 1e-14;

/// Phases `d` with `conj(d_i) A_ij d_j` real to [`GAUGE_TOLERANCE`] of the
/// largest entry, found along a spanning forest of the clearly non-zero
/// entries. Returns the phases, the real matrix and the largest entry.
fn real_gauge(a: MatRef<'_, c64>) -> Option<(Vec<c64>, Mat<f64>, f64)> {
    let n = a.nrows();
    let scale = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .map(|(i, j)| a[(i, j)].norm())
        .fold(0.0, f64::max);
    if n == 0 || scale == 0.0 {
        return None;
    }
    let edge = 1e-10 * scale;
    let mut phases = vec![ZERO; n];
    let mut stack = Vec::new();
    for root in 0..n {
        if phases[root] != ZERO {
            continue;
        }
        phases[root] = ONE;
        stack.push(root);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let h = a[(i, j)];
                if phases[j] == ZERO && h.norm() > edge {
                    phases[j] = phases[i] * h.conj() * (1.0 / h.norm());
                    stack.push(j);
                }
            }
        }
    }
    let mut real = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let b = phases[i].conj() * a[(i, j)] * phases[j];
            if b.im.abs() > GAUGE_TOLERANCE * scale {
                return None;
            }
            real[(i, j)] = b.re;
        }
    }
    Some((phases, real, scale))
}

/// Index sets of the connected components of `|a_ij| > tol`, each ascending.
fn components(a: MatRef<'_, f64>, tol: f64) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut label = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for root in 0..n {
        if label[root] != usize::MAX {
            continue;
        }
        let c = out.len();
        label[root] = c;
        stack.push(root);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if label[j] == usize::MAX && a[(i, j)].abs() > tol {
                    label[j] = c;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// `a · b`, looping over the non-zero entries of `a` when it is sparse.
pub fn sparse_mul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    assert_eq!(a.ncols(), b.nrows());
    let mut entries = Vec::new();
    for k in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, k)];
            if v != ZERO {
                entries.push((i, k, v));
            }
        }
    }
    if 8 * entries.len() > a.nrows() * a.ncols() {
        return a * b;
    }
    let mut out = CMat::zeros(a.nrows(), b.ncols());
    for j in 0..b.ncols() {
        for &(i, k, v) in &entries {
            out[(i, j)] += v * b[(k, j)];
        }
    }
    out
}

fn eigh_complex(a: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

/// `U O U†`.
pub fn sandwich(u: MatRef<'_, c64>, o: MatRef<'_, c64>) -> CMat {
    let uo = u * o;
    &uo * u.adjoint()
}

/// `exp(i s G)` for Hermitian `G` through its eigendecomposition.
pub fn exp_i_hermitian(generator: MatRef<'_, c64>, s: f64) -> Result<CMat> {
    let (vals, vecs) = eigh(generator)?;
    Ok(spectral_phase(vecs.as_ref(), &vals, s))
}

/// General matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: MatRef<'_, c64>) -> CMat {
    let n = a.nrows();
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = 0.5f64.powi(squarings as i32);
    let b = CMat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    // ‖b‖ ≤ 1/2: 18 terms reach double precision
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..=18 {
        let inv = 1.0 / k as f64;
        let next = &term * &b;
        term = CMat::from_fn(n, n, |i, j| next[(i, j)] * inv);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn spectral_phase(vecs: MatRef<'_, c64>, vals: &[f64], s: f64) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.to_owned();
    for (j, &lambda) in vals.iter().enumerate() {
        let phase = c64::cis(s * lambda);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    &scaled * vecs.adjoint()
}

/// `exp(i s L⊗R)` for Hermitian `L`, `R`.
pub fn kron_exp_i(left: MatRef<'_, c64>, right: MatRef<'_, c64>, s: f64) -> Result<CMat> {
    kron_exp_i_rows(left, right, s, left.nrows() * right.nrows())
}

/// Leading `rows` rows of `exp(i s L⊗R)`. With `L = U diag(l) U†`, the block
/// `(μ, ν)` is `Σ_k U_μk conj(U_νk) exp(i s l_k R)`, so only factor-sized
/// products are needed.
pub fn kron_exp_i_rows(left: MatRef<'_, c64>, right: MatRef<'_, c64>, s: f64, rows: usize) -> Result<CMat> {
    let (nl, nr) = (left.nrows(), right.nrows());
    assert!(rows <= nl * nr);
    let (lv, lu) = eigh(left)?;
    let (rv, ru) = eigh(right)?;
    let blocks: Vec<CMat> = lv
        .iter()
        .map(|&l| {
            let v: Vec<f64> = rv.iter().map(|&r| l * r).collect();
            spectral_phase(ru.as_ref(), &v, s)
        })
        .collect();
    let mut out = CMat::zeros(rows, nl * nr);
    for mu in 0..rows.div_ceil(nr) {
        for nu in 0..nl {
            for (k, b) in blocks.iter().enumerate() {
                let w = lu[(mu, k)] * lu[(nu, k)].conj();
                if w == ZERO {
                    continue;
                }
                for m in 0..nr {
                    for n in 0..nr.min(rows - mu * nr) {
                        out[(mu * nr + n, nu * nr + m)] += w * b[(n, m)];
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn inner(u: &CVec, v: &CVec) -> c64 {
    u.adjoint() * v
}

pub fn norm_sqr(u: &CVec) -> f64 {
    (0..u.nrows()).map(|i| u[i].norm_sqr()).sum()
}

/// `<u|O|u>` real part; `O` must be Hermitian for this to be the full value.
pub fn expectation(o: MatRef<'_, c64>, u: &CVec) -> c64 {
    let ou = o * u;
    u.adjoint() * &ou
}

pub fn column(a: MatRef<'_, c64>, j: usize) -> CVec {
    a.col(j).to_owned()
}

/// Leading principal block of size `n`.
pub fn leading_block(a: MatRef<'_, c64>, n: usize) -> CMat {
    a.submatrix(0, 0, n, n).to_owned()
}
