//! Zero-temperature flat-bath master equation in the energy eigenbasis.
//!
//! `ρ̇ = −i[H, ρ] + κ Σ_E [O⁻(E) ρ O⁺(E) − ½{O⁺(E)O⁻(E), ρ}]` where
//! `O⁺(E)` collects `⟨i|O|j⟩|i⟩⟨j|` over `i > j` with `E_i − E_j` in the gap
//! cluster `E`. Everything is expressed in the basis of the lowest `N_lev`
//! eigenstates; density matrices are vectorized row-major (`ρ_ab → a·n + b`).

use faer::c64;

use crate::analysis::EigenSystem;
use crate::error::{Error, Result};
use crate::fockspace::CompositeOperator;
use crate::linalg::{self, re, CMat, CVec};

pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_LEVELS: usize = 8;
pub const MAX_LEVELS: usize = 40;

#[derive(Debug, Clone)]
pub struct JumpOperator {
    /// Representative (mean) gap of the cluster.
    pub gap: f64,
    /// `O⁺(E)` in the eigenbasis.
    pub raising: CMat,
    /// `(i, j)` pairs with `i > j` contributing to this cluster.
    pub transitions: Vec<(usize, usize)>,
}

impl JumpOperator {
    pub fn lowering(&self) -> CMat {
        self.raising.adjoint().to_owned()
    }
}

#[derive(Debug, Clone)]
pub struct LindbladSystem {
    pub energies: Vec<f64>,
    /// System-bath observable in the eigenbasis.
    pub coupling: CMat,
    pub kappa: f64,
    pub gap_tolerance: f64,
    jumps: Vec<JumpOperator>,
    generator: CMat,
}

/// `V_k† O V_k` over the lowest `levels` eigenvectors.
pub fn project_to_eigenbasis(es: &EigenSystem, op: &CompositeOperator, levels: usize) -> Result<CMat> {
    if op.dim() != es.dim() {
        return Err(Error::SpaceMismatch {
            state: es.dim(),
            operator: op.dim(),
        });
    }
    let v = es.vectors.submatrix(0, 0, es.dim(), levels);
    let ov = op.as_ref() * v;
    Ok(v.adjoint() * &ov)
}

impl LindbladSystem {
    /// `levels` lowest eigenstates of `es` coupled to the bath through `o`.
    pub fn new(es: &EigenSystem, o: &CompositeOperator, levels: usize, kappa: f64, gap_tolerance: f64) -> Result<Self> {
        if levels < 2 || levels > MAX_LEVELS.min(es.dim()) {
            return Err(Error::InvalidInput(format!(
                "level count {levels} outside 2..={}",
                MAX_LEVELS.min(es.dim())
            )));
        }
        if !o.hermitian {
            return Err(Error::InvalidInput("bath coupling must be Hermitian".into()));
        }
        let coupling = project_to_eigenbasis(es, o, levels)?;
        Self::from_eigenbasis(es.values[..levels].to_vec(), coupling, kappa, gap_tolerance)
    }

    pub fn from_eigenbasis(energies: Vec<f64>, mut coupling: CMat, kappa: f64, gap_tolerance: f64) -> Result<Self> {
        let n = energies.len();
        if coupling.nrows() != n || coupling.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: coupling.nrows().max(coupling.ncols()),
            });
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidInput(format!("kappa must be finite and non-negative, got {kappa}")));
        }
        if !(gap_tolerance > 0.0) {
            return Err(Error::InvalidInput("gap tolerance must be positive".into()));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("energies must be ascending".into()));
        }
        if linalg::hermiticity_error(coupling.as_ref()) >= crate::fockspace::HERMITIAN_TOLERANCE {
            return Err(Error::InvalidInput("bath coupling must be Hermitian".into()));
        }
        linalg::symmetrize(&mut coupling);
        let jumps = build_jumps(&energies, &coupling, gap_tolerance)?;
        let generator = build_generator(&energies, &jumps, kappa);
        Ok(LindbladSystem {
            energies,
            coupling,
            kappa,
            gap_tolerance,
            jumps,
            generator,
        })
    }

    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    pub fn jump_operators(&self) -> &[JumpOperator] {
        &self.jumps
    }

    /// Dense `n²×n²` generator acting on row-major `vec(ρ)`.
    pub fn generator(&self) -> &CMat {
        &self.generator
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        unvec(&(&self.generator * vec(rho)), self.levels())
    }

    /// Part of the coupling not carried by any jump operator: elements
    /// between levels closer than the gap tolerance.
    pub fn secular_remainder(&self) -> CMat {
        let n = self.levels();
        CMat::from_fn(n, n, |i, j| {
            if (self.energies[i] - self.energies[j]).abs() <= self.gap_tolerance {
                self.coupling[(i, j)]
            } else {
                linalg::ZERO
            }
        })
    }
}

fn build_jumps(energies: &[f64], coupling: &CMat, tol: f64) -> Result<Vec<JumpOperator>> {
    let n = energies.len();
    let mut gaps: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..i {
            let g = energies[i] - energies[j];
            if g > tol {
                gaps.push((g, i, j));
            }
        }
    }
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // single-linkage clusters in gap order
    let mut clusters: Vec<Vec<(f64, usize, usize)>> = Vec::new();
    for g in gaps {
        match clusters.last_mut() {
            Some(c) if g.0 - c.last().expect("non-empty cluster").0 <= tol => c.push(g),
            _ => clusters.push(vec![g]),
        }
    }
    for w in clusters.windows(2) {
        let hi = w[0].last().expect("non-empty cluster").0;
        let lo = w[1][0].0;
        if lo - hi < 2.0 * tol {
            return Err(Error::DegenerateGapAmbiguity {
                first: hi,
                second: lo,
                tolerance: tol,
            });
        }
    }

    let mut jumps = Vec::new();
    for c in clusters {
        let mut raising = CMat::zeros(n, n);
        let mut transitions = Vec::with_capacity(c.len());
        let mut sum = 0.0;
        for &(g, i, j) in &c {
            raising[(i, j)] = coupling[(i, j)];
            transitions.push((i, j));
            sum += g;
        }
        if transitions.iter().all(|&(i, j)| coupling[(i, j)] == linalg::ZERO) {
            continue;
        }
        jumps.push(JumpOperator {
            gap: sum / c.len() as f64,
            raising,
            transitions,
        });
    }
    Ok(jumps)
}

fn build_generator(energies: &[f64], jumps: &[JumpOperator], kappa: f64) -> CMat {
    let n = energies.len();
    let idx = |a: usize, b: usize| a * n + b;
    let mut s = CMat::zeros(n * n, n * n);
    for a in 0..n {
        for b in 0..n {
            s[(idx(a, b), idx(a, b))] = c64::new(0.0, -(energies[a] - energies[b]));
        }
    }
    if kappa == 0.0 {
        return s;
    }
    let mut k = CMat::zeros(n, n);
    for jump in jumps {
        // L = O⁻ has entries L_ji = conj(O_ij) for each (i, j) transition
        let entries: Vec<(usize, usize, c64)> = jump
            .transitions
            .iter()
            .map(|&(i, j)| (j, i, jump.raising[(i, j)].conj()))
            .filter(|e| e.2 != linalg::ZERO)
            .collect();
        // (L ρ L†)_ab = Σ L_ac ρ_cd conj(L_bd)
        for &(a, c, lac) in &entries {
            for &(b, d, lbd) in &entries {
                s[(idx(a, b), idx(c, d))] += lac * lbd.conj() * kappa;
            }
        }
        // K += L†L
        for &(a, c, lac) in &entries {
            for &(a2, d, lad) in &entries {
                if a == a2 {
                    k[(c, d)] += lac.conj() * lad;
                }
            }
        }
    }
    // −½κ(Kρ + ρK)
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let kac = k[(a, c)];
                if kac != linalg::ZERO {
                    s[(idx(a, b), idx(c, b))] -= kac * (0.5 * kappa);
                }
                let kcb = k[(c, b)];
                if kcb != linalg::ZERO {
                    s[(idx(a, b), idx(a, c))] -= kcb * (0.5 * kappa);
                }
            }
        }
    }
    s
}

pub fn vec(rho: &CMat) -> CVec {
    let n = rho.nrows();
    CVec::from_fn(n * n, |k| rho[(k / n, k % n)])
}

pub fn unvec(v: &CVec, n: usize) -> CMat {
    CMat::from_fn(n, n, |a, b| v[a * n + b])
}

/// `γ_ijkl = κ⟨i|O|j⟩⟨k|O|l⟩` for indices below `count`.
#[derive(Debug, Clone)]
pub struct RateTable {
    pub count: usize,
    values: Vec<c64>,
}

impl RateTable {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> c64 {
        let n = self.count;
        self.values[((i * n + j) * n + k) * n + l]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn rates(sys: &LindbladSystem, count: usize) -> Result<RateTable> {
    if count > sys.levels() {
        return Err(Error::InvalidInput(format!(
            "rate table of {count} levels exceeds the {} retained",
            sys.levels()
        )));
    }
    let o = &sys.coupling;
    let mut values = Vec::with_capacity(count.pow(4));
    for i in 0..count {
        for j in 0..count {
            for k in 0..count {
                for l in 0..count {
                    values.push(o[(i, j)] * o[(k, l)] * sys.kappa);
                }
            }
        }
    }
    Ok(RateTable { count, values })
}

/// `κ Σ_{E_j < E_i} |⟨j|O|i⟩|²`.
pub fn decay_rate(sys: &LindbladSystem, i: usize) -> Result<f64> {
    if i == 0 || i >= sys.levels() {
        return Err(Error::InvalidInput(format!("decay rate needs 0 < i < {}", sys.levels())));
    }
    let e = sys.energies[i];
    Ok(sys.kappa
        * (0..i)
            .filter(|&j| e - sys.energies[j] > sys.gap_tolerance)
            .map(|j| sys.coupling[(j, i)].norm_sqr())
            .sum::<f64>())
}

/// Least-squares slope of `−ln⟨i|ρ(t)|i⟩` over `t ∈ [0, 3/rate]`, starting
/// from `|i⟩⟨i|`. Samples are generated by the exact one-step propagator
/// `exp(L Δt)`, so long windows at small rates stay cheap.
pub fn fitted_decay_rate(sys: &LindbladSystem, i: usize, samples: usize) -> Result<f64> {
    let rate = decay_rate(sys, i)?;
    if rate <= 0.0 || samples < 2 {
        return Err(Error::InvalidInput("fit needs a positive channel-sum rate and ≥ 2 samples".into()));
    }
    let dt = 3.0 / rate / (samples - 1) as f64;
    let n = sys.levels();
    let g = &sys.generator;
    let step = linalg::expm(CMat::from_fn(n * n, n * n, |a, b| g[(a, b)] * dt).as_ref());
    let mut v = CVec::from_fn(n * n, |k| if k == i * n + i { linalg::ONE } else { linalg::ZERO });
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..samples {
        if k > 0 {
            v = &step * &v;
        }
        let t = dt * k as f64;
        let y = v[i * n + i].re.max(f64::MIN_POSITIVE).ln();
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let m = samples as f64;
    let slope = (m * sty - st * sy) / (m * stt - st * st);
    Ok(-slope)
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: 1e-2,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    /// `expectations[k][t]` is `tr(ρ(t) A_k)`.
    pub expectations: Vec<Vec<f64>>,
    /// Worst `|tr ρ − 1|` over the output grid.
    pub trace_error: f64,
    /// Smallest eigenvalue seen on the output grid.
    pub min_eigenvalue: f64,
}

fn check_density(rho: &CMat, n: usize) -> Result<()> {
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rho.nrows().max(rho.ncols()),
        });
    }
    if linalg::hermiticity_error(rho.as_ref()) > 1e-10 {
        return Err(Error::InvalidInput("initial density matrix is not Hermitian".into()));
    }
    let tr: f64 = (0..n).map(|i| rho[(i, i)].re).sum();
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("initial density matrix has trace {tr}")));
    }
    let (vals, _) = linalg::eigh(rho.as_ref())?;
    if vals[0] < -1e-10 {
        return Err(Error::InvalidInput(format!("initial density matrix has eigenvalue {:.3e}", vals[0])));
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince integration, reporting at every entry of `times`
/// (ascending, starting at the initial time).
pub fn evolve(
    sys: &LindbladSystem,
    rho0: &CMat,
    times: &[f64],
    observables: &[CMat],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let n = sys.levels();
    check_density(rho0, n)?;
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("time grid must be non-empty and ascending".into()));
    }
    for o in observables {
        if o.nrows() != n || o.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: o.nrows() });
        }
    }
    let g = &sys.generator;
    let dim = n * n;
    let mut y = vec(rho0);
    let mut t = times[0];
    let mut h = opts.initial_step;
    let mut steps = 0usize;
    let mut k: [CVec; 7] = std::array::from_fn(|_| CVec::zeros(dim));
    k[0] = g * &y;

    let mut out = Trajectory {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        expectations: vec![Vec::with_capacity(times.len()); observables.len()],
        trace_error: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    let record = |t: f64, y: &CVec, out: &mut Trajectory| -> Result<()> {
        let mut rho = unvec(y, n);
        linalg::symmetrize(&mut rho);
        let tr: f64 = (0..n).map(|i| rho[(i, i)].re).sum();
        let (vals, _) = linalg::eigh(rho.as_ref())?;
        out.trace_error = out.trace_error.max((tr - 1.0).abs());
        out.min_eigenvalue = out.min_eigenvalue.min(vals[0]);
        for (o, e) in observables.iter().zip(out.expectations.iter_mut()) {
            let mut s = linalg::ZERO;
            for a in 0..n {
                for b in 0..n {
                    s += rho[(a, b)] * o[(b, a)];
                }
            }
            e.push(s.re);
        }
        out.times.push(t);
        out.states.push(rho);
        Ok(())
    };

    for &target in times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::StepFailure(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
            }
            let step = h.min(target - t);
            let mut stage = CVec::zeros(dim);
            for s in 1..7 {
                stage.copy_from(&y);
                for (r, &a) in A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        stage += faer::Scale(re(a * step)) * &k[r];
                    }
                }
                k[s] = g * &stage;
            }
            // stage now holds the 5th-order solution (FSAL row)
            let mut err = 0.0f64;
            for i in 0..dim {
                let mut e = linalg::ZERO;
                for s in 0..7 {
                    e += k[s][i] * (B5[s] - B4[s]);
                }
                let sc = opts.atol + opts.rtol * y[i].norm().max(stage[i].norm());
                err = err.max((e * step).norm() / sc);
            }
            steps += 1;
            if !err.is_finite() {
                return Err(Error::StepFailure(format!("non-finite error estimate at t = {t}")));
            }
            if err <= 1.0 {
                t = if step == target - t { target } else { t + step };
                y = stage;
                k[0] = k[6].clone();
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // a step shortened only to land on an output time keeps the old proposal
            h = if err <= 1.0 && step < h { h.max(step * factor) } else { step * factor };
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::StepFailure(format!("step size underflow at t = {t}")));
            }
        }
        record(t, &y, &mut out)?;
    }
    Ok(out)
}

/// Unique null vector of the generator, normalized to unit trace.
pub fn stationary_state(sys: &LindbladSystem) -> Result<CMat> {
    if !(sys.kappa > 0.0) {
        return Err(Error::InvalidInput("stationary state requires kappa > 0".into()));
    }
    let n = sys.levels();
    let g = &sys.generator;
    let svd = g.svd().map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let scale = s[0].re.max(1.0);
    let null: Vec<usize> = (0..s.nrows()).filter(|&i| s[i].re < 1e-10 * scale).collect();
    if null.len() != 1 {
        return Err(Error::NonUniqueSteadyState(null.len()));
    }
    let v = svd.V().col(null[0]).to_owned();
    let mut rho = unvec(&v, n);
    let tr: c64 = (0..n).map(|i| rho[(i, i)]).sum();
    rho = faer::Scale(tr.inv()) * &rho;
    linalg::symmetrize(&mut rho);
    let residual = (g * vec(&rho)).norm_l2();
    if residual >= 1e-9 {
        return Err(Error::SolverFailure(format!("stationary residual {residual:.3e}")));
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(kappa: f64) -> LindbladSystem {
        let o = CMat::from_fn(2, 2, |i, j| if i != j { re(0.6) } else { re(0.1) });
        LindbladSystem::from_eigenbasis(vec![0.0, 1.3], o, kappa, DEFAULT_GAP_TOLERANCE).unwrap()
    }

    #[test]
    fn two_level_has_single_channel() {
        let sys = two_level(0.2);
        assert_eq!(sys.jump_operators().len(), 1);
        assert!((decay_rate(&sys, 1).unwrap() - 0.2 * 0.36).abs() < 1e-15);
    }

    #[test]
    fn ambiguous_gap_clusters_are_rejected() {
        let o = CMat::from_fn(3, 3, |i, j| if i != j { re(1.0) } else { linalg::ZERO });
        let err = LindbladSystem::from_eigenbasis(vec![0.0, 1.0, 2.0 + 1.5e-8], o, 1.0, 1e-8).unwrap_err();
        assert!(matches!(err, Error::DegenerateGapAmbiguity { .. }));
    }

    #[test]
    fn bad_initial_state_is_rejected() {
        let sys = two_level(0.1);
        let rho = CMat::from_fn(2, 2, |i, j| if i == j { re(0.7) } else { linalg::ZERO });
        assert!(evolve(&sys, &rho, &[0.0, 1.0], &[], &IntegratorOptions::default()).is_err());
    }

    #[test]
    fn decay_needs_an_excited_index() {
        assert!(decay_rate(&two_level(0.1), 0).is_err());
    }

    #[test]
    fn stationary_needs_dissipation() {
        assert!(stationary_state(&two_level(0.0)).is_err());
        let rho = stationary_state(&two_level(0.3)).unwrap();
        assert!((rho[(0, 0)].re - 1.0).abs() < 1e-12);
    }
}
