//! One-dimensional double-well dipole `H_m = p²/2m − θx²/2 + φx⁴/4`.
//!
//! The Hamiltonian is discretized on a uniform symmetric grid with the sinc
//! discrete-variable representation (spectral kinetic energy), split into even
//! and odd parity sectors. Matrix elements of `x`, `x²` and `p` are evaluated
//! sector by sector, so parity selection rules hold exactly.

use std::f64::consts::PI;

use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Largest admissible continuum amplitude at the grid edge.
pub const EDGE_AMPLITUDE_LIMIT: f64 = 1e-10;
/// Allowed shift of any level under grid doubling, in units of `ω_0`.
pub const GRID_DOUBLING_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_GRID_POINTS: usize = 2048;
pub const DEFAULT_LEVELS: usize = 30;
/// Grid half-width in units of the outer classical turning point of the
/// first level above the retained block.
pub const TURNING_POINT_FACTOR: f64 = 1.5;
const AUTO_WIDTH_RETRIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatterSpec {
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub theta: f64,
    pub phi: f64,
    pub half_width: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_mass() -> f64 {
    1.0
}
fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}
fn default_levels() -> usize {
    DEFAULT_LEVELS
}

impl MatterSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_owned()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if !(self.phi > 0.0) {
            return bad("quartic coefficient phi must be positive");
        }
        if !(self.half_width > 0.0) {
            return bad("grid half-width must be positive");
        }
        if self.levels < 2 {
            return bad("at least two matter levels are required");
        }
        if self.grid_points < 4 * self.levels {
            return bad("grid_points must be at least 4 x levels");
        }
        if self.grid_points % 2 != 0 {
            return bad("grid_points must be even (symmetric grid without a centre point)");
        }
        Ok(())
    }

    pub fn potential(&self, x: f64) -> f64 {
        -0.5 * self.theta * x * x + 0.25 * self.phi * x.powi(4)
    }

    /// Outer classical turning point at energy `e` (largest `|x|` with `V(x) = e`).
    pub fn turning_point(&self, e: f64) -> f64 {
        let s = (self.theta * self.theta + 4.0 * self.phi * e).max(0.0).sqrt();
        let y = if self.theta > 0.0 {
            (self.theta + s) / self.phi
        } else {
            // rationalized form; avoids cancellation for weak quartic terms
            4.0 * e / (s - self.theta)
        };
        y.max(0.0).sqrt()
    }

    /// Returns a copy whose half-width is `1.5×` the turning point of level
    /// `levels` (the first level above the retained block), iterated once, then
    /// widened by 25% steps while any retained level fails the edge check.
    pub fn with_auto_width(&self) -> Result<MatterSpec> {
        let mut spec = self.clone();
        for _ in 0..2 {
            let sol = solve_grid(&spec, spec.levels + 1)?;
            let e = sol.eps[spec.levels];
            spec.half_width = TURNING_POINT_FACTOR * spec.turning_point(e);
        }
        // few-level blocks can sit close to the edge criterion; widen until clean
        for _ in 0..AUTO_WIDTH_RETRIES {
            match check_edges(&solve_grid(&spec, spec.levels)?) {
                Err(Error::BoundaryLeak { .. }) => spec.half_width *= 1.25,
                other => return other.map(|_| spec),
            }
        }
        check_edges(&solve_grid(&spec, spec.levels)?).map(|_| spec)
    }
}

#[derive(Debug, Clone)]
pub struct MatterBasis {
    pub mass: f64,
    /// Bare levels `ε_μ`, strictly increasing.
    pub eps: Vec<f64>,
    /// `⟨ε_μ|x|ε_ν⟩`, real symmetric.
    pub x: Mat<f64>,
    /// `⟨ε_μ|p|ε_ν⟩`, purely imaginary Hermitian.
    pub p: CMat,
    /// `⟨ε_μ|x²|ε_ν⟩`, real symmetric.
    pub x2: Mat<f64>,
}

#[derive(Serialize)]
struct BasisDump<'a> {
    eps: &'a [f64],
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    /// Complex entries as `[re, im]`.
    #[serde(rename = "P")]
    p: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "X2")]
    x2: Vec<Vec<f64>>,
}

impl MatterBasis {
    pub fn levels(&self) -> usize {
        self.eps.len()
    }

    pub fn omega0(&self) -> f64 {
        self.eps[1] - self.eps[0]
    }

    pub fn omega1(&self) -> f64 {
        self.eps[2] - self.eps[1]
    }

    /// `μ = (ω_1 − ω_0)/ω_0`.
    pub fn anharmonicity(&self) -> f64 {
        (self.omega1() - self.omega0()) / self.omega0()
    }

    pub fn x10(&self) -> f64 {
        self.x[(1, 0)]
    }

    pub fn x_complex(&self) -> CMat {
        linalg::to_complex(self.x.as_ref())
    }

    pub fn x2_complex(&self) -> CMat {
        linalg::to_complex(self.x2.as_ref())
    }

    /// Keeps the lowest `n` levels.
    pub fn truncated(&self, n: usize) -> Result<MatterBasis> {
        if n > self.levels() || n < 2 {
            return Err(Error::DimensionMismatch {
                expected: self.levels(),
                got: n,
            });
        }
        Ok(MatterBasis {
            mass: self.mass,
            eps: self.eps[..n].to_vec(),
            x: self.x.submatrix(0, 0, n, n).to_owned(),
            p: self.p.submatrix(0, 0, n, n).to_owned(),
            x2: self.x2.submatrix(0, 0, n, n).to_owned(),
        })
    }

    /// JSON object `{"eps":[..],"X":[[..]],"P":[[[re,im],..]],"X2":[[..]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.levels();
        let real = |m: MatRef<'_, f64>| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect()
        };
        let dump = BasisDump {
            eps: &self.eps,
            x: real(self.x.as_ref()),
            p: (0..n)
                .map(|i| (0..n).map(|j| [self.p[(i, j)].re, self.p[(i, j)].im]).collect())
                .collect(),
            x2: real(self.x2.as_ref()),
        };
        serde_json::to_value(dump).expect("basis dump is plain data")
    }
}

/// Eigenpairs on the grid, before matrix elements.
struct GridSolution {
    eps: Vec<f64>,
    /// Half-grid eigenvector and parity (`true` = even) of each level.
    half_vectors: Vec<(Vec<f64>, bool)>,
    positions: Vec<f64>,
    dx: f64,
}

fn sinc_kinetic(n: i64, mass: f64, dx: f64) -> f64 {
    let scale = 1.0 / (mass * dx * dx);
    if n == 0 {
        scale * PI * PI / 6.0
    } else {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        scale * sign / (n * n) as f64
    }
}

fn sinc_derivative(n: i64, dx: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sign / (dx * n as f64)
    }
}

fn solve_grid(spec: &MatterSpec, wanted: usize) -> Result<GridSolution> {
    spec.validate()?;
    let n = spec.grid_points;
    let half = n / 2;
    if wanted > n {
        return Err(Error::InvalidInput("more levels requested than grid points".into()));
    }
    let dx = 2.0 * spec.half_width / (n - 1) as f64;
    let positions: Vec<f64> = (0..half).map(|i| dx * (i as f64 + 0.5)).collect();

    let sector = |sign: f64| -> Result<(Vec<f64>, Mat<f64>)> {
        let h = Mat::<f64>::from_fn(half, half, |i, j| {
            let (i, j) = (i as i64, j as i64);
            let mut v = sinc_kinetic(i - j, spec.mass, dx) + sign * sinc_kinetic(i + j + 1, spec.mass, dx);
            if i == j {
                v += spec.potential(positions[i as usize]);
            }
            v
        });
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        Ok(((0..half).map(|i| s[i]).collect(), evd.U().to_owned()))
    };
    let (even_vals, even_vecs) = sector(1.0)?;
    let (odd_vals, odd_vecs) = sector(-1.0)?;

    let (mut ie, mut io) = (0usize, 0usize);
    let mut eps = Vec::with_capacity(wanted);
    let mut half_vectors: Vec<(Vec<f64>, bool)> = Vec::with_capacity(wanted);
    while eps.len() < wanted {
        let take_even = io >= half || (ie < half && even_vals[ie] <= odd_vals[io]);
        if take_even {
            eps.push(even_vals[ie]);
            half_vectors.push(((0..half).map(|k| even_vecs[(k, ie)]).collect(), true));
            ie += 1;
        } else {
            eps.push(odd_vals[io]);
            half_vectors.push(((0..half).map(|k| odd_vecs[(k, io)]).collect(), false));
            io += 1;
        }
    }
    // Dense eigenvalues carry an O(eps·‖H‖) error and ‖H‖ grows as dx⁻²;
    // the compensated Rayleigh quotient removes it.
    let kinetic: Vec<f64> = (0..n as i64).map(|k| sinc_kinetic(k, spec.mass, dx)).collect();
    let potential: Vec<f64> = positions.iter().map(|&x| spec.potential(x)).collect();
    for (e, (u, even)) in eps.iter_mut().zip(&half_vectors) {
        let sign = if *even { 1.0 } else { -1.0 };
        *e = rayleigh_quotient(u, |i, j| {
            let mut v = kinetic[i.abs_diff(j)] + sign * kinetic[i + j + 1];
            if i == j {
                v += potential[i];
            }
            v
        });
    }
    Ok(GridSolution {
        eps,
        half_vectors,
        positions,
        dx,
    })
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a; // 2^27 + 1
    let hi = c - (c - a);
    (hi, a - hi)
}

/// Dekker's exact product; `f64::mul_add` is a libm call without FMA hardware.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, al * bl - (((p - ah * bh) - al * bh) - ah * bl))
}

/// Dot product with compensated summation of products and sums (Dot2).
fn dot2(n: usize, mut term: impl FnMut(usize) -> (f64, f64)) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for k in 0..n {
        let (a, b) = term(k);
        let (p, pe) = two_prod(a, b);
        let (t, se) = two_sum(s, p);
        s = t;
        c += se + pe;
    }
    s + c
}

/// `uᵀHu / uᵀu` for a symmetric matrix given entrywise.
fn rayleigh_quotient(u: &[f64], h: impl Fn(usize, usize) -> f64) -> f64 {
    let n = u.len();
    let hu: Vec<f64> = (0..n).map(|i| dot2(n, |j| (h(i, j), u[j]))).collect();
    dot2(n, |i| (u[i], hu[i])) / dot2(n, |i| (u[i], u[i]))
}

fn check_edges(sol: &GridSolution) -> Result<()> {
    for (level, (u, _)) in sol.half_vectors.iter().enumerate() {
        // continuum amplitude ψ(±L) = c/√dx with c = u/√2 on each mirror point
        let amplitude = u[u.len() - 1].abs() / (2.0 * sol.dx).sqrt();
        if amplitude > EDGE_AMPLITUDE_LIMIT {
            return Err(Error::BoundaryLeak { level, amplitude });
        }
    }
    Ok(())
}

fn assemble_basis(spec: &MatterSpec, mut sol: GridSolution) -> MatterBasis {
    let levels = sol.eps.len();
    let half = sol.positions.len();
    let dx = sol.dx;

    // Ground state is nodeless; make it positive.
    if sol.half_vectors[0].0.iter().sum::<f64>() < 0.0 {
        sol.half_vectors[0].0.iter_mut().for_each(|c| *c = -*c);
    }

    let dot_weighted = |a: &[f64], b: &[f64], w: &dyn Fn(usize) -> f64| -> f64 {
        (0..half).map(|i| a[i] * b[i] * w(i)).sum()
    };
    let pos = &sol.positions;
    let x_elem = |a: &(Vec<f64>, bool), b: &(Vec<f64>, bool)| -> f64 {
        if a.1 == b.1 {
            0.0
        } else {
            dot_weighted(&a.0, &b.0, &|i| pos[i])
        }
    };

    // sequential sign fixing: x_{μ-1,μ} ≥ 0
    for mu in 1..levels {
        let (head, tail) = sol.half_vectors.split_at_mut(mu);
        if x_elem(&head[mu - 1], &tail[0]) < 0.0 {
            tail[0].0.iter_mut().for_each(|c| *c = -*c);
        }
    }

    let hv = &sol.half_vectors;
    let x = Mat::<f64>::from_fn(levels, levels, |a, b| x_elem(&hv[a], &hv[b]));
    let x2 = Mat::<f64>::from_fn(levels, levels, |a, b| {
        if hv[a].1 != hv[b].1 {
            0.0
        } else {
            dot_weighted(&hv[a].0, &hv[b].0, &|i| pos[i] * pos[i])
        }
    });

    // Derivative between sectors: even ← odd block is d(i−j) − d(i+j+1).
    let d_eo = Mat::<f64>::from_fn(half, half, |i, j| {
        let (i, j) = (i as i64, j as i64);
        sinc_derivative(i - j, dx) - sinc_derivative(i + j + 1, dx)
    });
    let odd_levels: Vec<usize> = (0..levels).filter(|&l| !hv[l].1).collect();
    let odd_mat = Mat::<f64>::from_fn(half, odd_levels.len(), |k, c| hv[odd_levels[c]].0[k]);
    let d_odd = &d_eo * &odd_mat;
    let mut deriv = Mat::<f64>::zeros(levels, levels);
    for (c, &nu) in odd_levels.iter().enumerate() {
        for mu in (0..levels).filter(|&l| hv[l].1) {
            let v: f64 = (0..half).map(|k| hv[mu].0[k] * d_odd[(k, c)]).sum();
            deriv[(mu, nu)] = v;
            deriv[(nu, mu)] = -v;
        }
    }
    // p = −i d/dx
    let p = CMat::from_fn(levels, levels, |a, b| linalg::I * (-deriv[(a, b)]));

    MatterBasis {
        mass: spec.mass,
        eps: sol.eps,
        x,
        p,
        x2,
    }
}

/// Lowest `spec.levels` eigenpairs of the double well with matrix elements.
///
/// Fails with `BoundaryLeak` if any retained level reaches the grid edge and
/// with `NotConverged` if doubling the grid moves any level by more than
/// `1e-9·ω_0`.
pub fn solve_double_well(spec: &MatterSpec) -> Result<MatterBasis> {
    let sol = solve_grid(spec, spec.levels)?;
    check_edges(&sol)?;

    let fine = MatterSpec {
        grid_points: 2 * spec.grid_points,
        ..spec.clone()
    };
    let fine_sol = solve_grid(&fine, spec.levels)?;
    compare_grid_levels(&sol.eps, &fine_sol.eps, roundoff_floor(&fine))?;
    Ok(assemble_basis(spec, sol))
}

/// Eigenvalue roundoff of the dense grid Hamiltonian: `64 ε ‖T‖` with the
/// sinc kinetic norm `π²/(2m dx²)`.
fn roundoff_floor(spec: &MatterSpec) -> f64 {
    let dx = 2.0 * spec.half_width / (spec.grid_points - 1) as f64;
    64.0 * f64::EPSILON * PI * PI / (2.0 * spec.mass * dx * dx)
}

/// Fails if any level moved by more than `max(1e-9·ω_0, floor)` between two
/// grids.
fn compare_grid_levels(coarse: &[f64], fine: &[f64], floor: f64) -> Result<()> {
    let omega0 = coarse[1] - coarse[0];
    let allowed = (GRID_DOUBLING_TOLERANCE * omega0).max(floor);
    for (level, (a, b)) in coarse.iter().zip(fine).enumerate() {
        let shift = (a - b).abs();
        if shift > allowed {
            return Err(Error::NotConverged {
                level,
                shift,
                allowed,
            });
        }
    }
    Ok(())
}

/// Same as [`solve_double_well`] without the grid-doubling check.
pub fn solve_double_well_unchecked(spec: &MatterSpec) -> Result<MatterBasis> {
    let sol = solve_grid(spec, spec.levels)?;
    check_edges(&sol)?;
    Ok(assemble_basis(spec, sol))
}

const CALIBRATION_GRID: usize = 512;
const CALIBRATION_MAX_ITER: usize = 200;

/// Internal shape: θ = 1, φ = 1/(4b) for barrier height `b`.
fn shape_spec(mass: f64, barrier: f64) -> MatterSpec {
    let theta = 1.0;
    let phi = 1.0 / (4.0 * barrier);
    let well_freq = (2.0 * theta / mass).sqrt();
    let mut spec = MatterSpec {
        mass,
        theta,
        phi,
        half_width: 1.0,
        grid_points: CALIBRATION_GRID,
        levels: 3,
    };
    // covers a handful of levels above the well bottom
    let e_est = -barrier + 8.0 * well_freq;
    spec.half_width = 1.6 * spec.turning_point(e_est) + 4.0 / (mass * well_freq).sqrt();
    spec
}

fn shape_mu(mass: f64, barrier: f64) -> Result<(f64, f64)> {
    let spec = shape_spec(mass, barrier);
    let sol = solve_grid(&spec, 3)?;
    let w0 = sol.eps[1] - sol.eps[0];
    let w1 = sol.eps[2] - sol.eps[1];
    Ok(((w1 - w0) / w0, w0))
}

/// Finds `(θ, φ)` giving anharmonicity `target_mu` with `ω_0 = omega`, using
/// default grid size and level count.
pub fn calibrate_potential(target_mu: f64, omega: f64) -> Result<MatterSpec> {
    calibrate_potential_with(target_mu, omega, DEFAULT_LEVELS, DEFAULT_GRID_POINTS)
}

/// Bisection over the barrier height at fixed well curvature, followed by the
/// exact rescaling `θ → θc², φ → φc³` that multiplies every level by `c`.
pub fn calibrate_potential_with(
    target_mu: f64,
    omega: f64,
    levels: usize,
    grid_points: usize,
) -> Result<MatterSpec> {
    if !(target_mu > 0.0) {
        return Err(Error::InvalidInput(format!(
            "target anharmonicity must be positive, got {target_mu}"
        )));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidInput(format!("mode frequency must be positive, got {omega}")));
    }
    let mass = 1.0;

    let mut lo = 0.05f64;
    let mut hi = 1.0f64;
    let mut iter = 0;
    if shape_mu(mass, lo)?.0 >= target_mu {
        return Err(Error::CalibrationFailed(format!(
            "target anharmonicity {target_mu} is below the shallow-well limit"
        )));
    }
    while shape_mu(mass, hi)?.0 < target_mu {
        lo = hi;
        hi *= 2.0;
        iter += 1;
        if iter > 40 {
            return Err(Error::CalibrationFailed("could not bracket target anharmonicity".into()));
        }
    }
    let mut barrier;
    loop {
        iter += 1;
        if iter > CALIBRATION_MAX_ITER {
            return Err(Error::CalibrationFailed("bisection exhausted its iteration budget".into()));
        }
        let mid = (lo * hi).sqrt();
        let (mu, _) = shape_mu(mass, mid)?;
        barrier = mid;
        if ((mu - target_mu) / target_mu).abs() < 1e-9 || hi / lo - 1.0 < 1e-13 {
            break;
        }
        if mu < target_mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (_, w0) = shape_mu(mass, barrier)?;
    let c = omega / w0;
    let base = shape_spec(mass, barrier);
    let provisional = MatterSpec {
        mass,
        theta: base.theta * c * c,
        phi: base.phi * c * c * c,
        half_width: base.half_width / c.sqrt(),
        grid_points,
        levels,
    };
    let spec = provisional.with_auto_width()?;
    let basis = solve_double_well_unchecked(&spec)?;
    let rel = ((basis.anharmonicity() - target_mu) / target_mu).abs();
    if rel >= 1e-3 {
        return Err(Error::CalibrationFailed(format!(
            "re-solved anharmonicity {} misses target {target_mu} by {rel:.2e}",
            basis.anharmonicity()
        )));
    }
    Ok(spec)
}
