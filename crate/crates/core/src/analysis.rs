//! Eigensystems, fidelities, Cauchy-Schwarz bounds and observable averages
//! under the frame prescriptions.

use faer::{c64, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{CompositeOperator, Projector};
use crate::gauge::{DeltaForm, LightMatter, ModelKind, ModelSpec};
use crate::linalg::{self, re, CMat, CVec};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;
/// Gap below which index-matched eigenvectors are flagged as ambiguous.
pub const CROSSING_GAP: f64 = 1e-6;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;
pub const CHECKED_COLUMNS: usize = 64;

#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    /// Columns are eigenvectors, largest-magnitude component real positive.
    pub vectors: CMat,
    pub kind: Option<ModelKind>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn state(&self, i: usize) -> CVec {
        linalg::column(self.vectors.as_ref(), i)
    }

    /// `(E_i − E_0)/ω` for `i = 1..=count`.
    pub fn transition_energies(&self, count: usize, omega: f64) -> Vec<f64> {
        (1..=count.min(self.dim().saturating_sub(1)))
            .map(|i| (self.values[i] - self.values[0]) / omega)
            .collect()
    }

    /// Rephases the leading `reference.ncols()` eigenvectors so that each
    /// overlap `⟨i|ref_i⟩` is real and non-negative.
    pub fn align_phases(&mut self, reference: MatRef<'_, c64>) -> Result<()> {
        if reference.nrows() != self.dim() || reference.ncols() > self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: reference.nrows(),
            });
        }
        for j in 0..reference.ncols() {
            let mut ov = linalg::ZERO;
            for i in 0..self.dim() {
                ov += self.vectors[(i, j)].conj() * reference[(i, j)];
            }
            if ov.norm() == 0.0 {
                continue;
            }
            let phase = ov / ov.norm();
            for i in 0..self.dim() {
                self.vectors[(i, j)] *= phase;
            }
        }
        Ok(())
    }

    /// Whether level `i` is within [`CROSSING_GAP`]`·ω` of a neighbour.
    pub fn near_degenerate(&self, i: usize, omega: f64) -> bool {
        let close = |j: usize| (self.values[i] - self.values[j]).abs() < CROSSING_GAP * omega;
        (i > 0 && close(i - 1)) || (i + 1 < self.dim() && close(i + 1))
    }
}

pub fn eigensolve(model: &ModelSpec) -> Result<EigenSystem> {
    let mut es = eigensolve_matrix(&model.hamiltonian.matrix)?;
    es.kind = Some(model.kind);
    Ok(es)
}

/// Full ascending eigensystem of a Hermitian matrix. The residual and
/// orthonormality contracts are checked on the lowest [`CHECKED_COLUMNS`]
/// pairs.
pub fn eigensolve_matrix(h: &CMat) -> Result<EigenSystem> {
    if linalg::hermiticity_error(h.as_ref()) >= crate::fockspace::HERMITIAN_TOLERANCE {
        return Err(Error::InvalidInput("eigensolve needs a Hermitian matrix".into()));
    }
    let (values, mut vectors) = linalg::eigh(h.as_ref())?;
    let n = values.len();
    for j in 0..n {
        let mut best = 0;
        for i in 0..n {
            if vectors[(i, j)].norm() > vectors[(best, j)].norm() {
                best = i;
            }
        }
        let z = vectors[(best, j)];
        let phase = z.conj() / z.norm();
        for i in 0..n {
            vectors[(i, j)] *= phase;
        }
        vectors[(best, j)] = re(vectors[(best, j)].re);
    }

    let lead = vectors.subcols(0, n.min(CHECKED_COLUMNS));
    let hv = h * lead;
    for (j, &e) in values.iter().take(lead.ncols()).enumerate() {
        let r: f64 = (0..n).map(|i| (hv[(i, j)] - vectors[(i, j)] * e).norm_sqr()).sum::<f64>().sqrt();
        if r >= 1e-9 * (1.0 + e.abs()) {
            return Err(Error::SolverFailure(format!("residual {r:.3e} for eigenvalue {j}")));
        }
    }
    let gram = lead.adjoint() * lead;
    let orth = linalg::max_abs_diff(gram.as_ref(), linalg::identity(lead.ncols()).as_ref());
    if orth >= 1e-10 {
        return Err(Error::SolverFailure(format!("eigenvectors not orthonormal ({orth:.3e})")));
    }
    Ok(EigenSystem {
        values,
        vectors,
        kind: None,
    })
}

fn check_normalized(u: &CVec) -> Result<()> {
    let n = linalg::norm_sqr(u);
    if (n - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

/// `|⟨u|v⟩|²`; a shorter vector is read as living on the leading subspace.
pub fn fidelity(u: &CVec, v: &CVec) -> Result<f64> {
    check_normalized(u)?;
    check_normalized(v)?;
    let k = u.nrows().min(v.nrows());
    let mut s = linalg::ZERO;
    for i in 0..k {
        s += u[i].conj() * v[i];
    }
    Ok(s.norm_sqr().min(1.0))
}

/// `‖P S‖²`, the ceiling on `F(φ, S)` over normalized `φ ∈ P`.
pub fn cs_bound(state: &CVec, p: &Projector) -> Result<f64> {
    check_normalized(state)?;
    if state.nrows() != p.dim {
        return Err(Error::SpaceMismatch {
            state: state.nrows(),
            operator: p.dim,
        });
    }
    Ok(p.weight(state))
}

/// `PS/‖PS‖` restricted to the subspace, the vector saturating the bound.
pub fn saturating_vector(state: &CVec, p: &Projector) -> Result<CVec> {
    let w = cs_bound(state, p)?;
    if w == 0.0 {
        return Err(Error::InvalidInput("state has no weight inside P".into()));
    }
    let s = 1.0 / w.sqrt();
    Ok(CVec::from_fn(p.rank(), |i| state[p.start + i] * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableName {
    NEt,
    Gamma,
    QEt,
    POverOmega,
    Energy,
    Custom,
}

/// An observable fixed by its Coulomb-gauge representation `O_0`.
#[derive(Debug, Clone)]
pub struct Observable {
    pub name: ObservableName,
    pub coulomb: CompositeOperator,
}

impl Observable {
    pub fn new(name: ObservableName, lm: &LightMatter) -> Result<Self> {
        let s = lm.space();
        let (nm, np) = (s.matter_levels, s.photon_levels);
        let f = lm.fock();
        let matrix = match name {
            ObservableName::NEt => linalg::kron(linalg::identity(nm).as_ref(), f.number.as_ref()),
            ObservableName::Gamma => {
                let excited = CMat::from_fn(nm, nm, |i, j| if i == j && i > 0 { linalg::ONE } else { linalg::ZERO });
                linalg::kron(excited.as_ref(), linalg::identity(np).as_ref())
            }
            ObservableName::QEt => {
                let q = CMat::from_fn(np, np, |i, j| linalg::I * (f.a_dag[(i, j)] - f.a[(i, j)]));
                linalg::kron(linalg::identity(nm).as_ref(), q.as_ref())
            }
            ObservableName::POverOmega => {
                let p = CMat::from_fn(nm, nm, |i, j| lm.basis().p[(i, j)] / s.omega);
                linalg::kron(p.as_ref(), linalg::identity(np).as_ref())
            }
            ObservableName::Energy => return Ok(Observable { name, coulomb: lm.h_alpha(0.0)? }),
            ObservableName::Custom => {
                return Err(Error::InvalidInput("use Observable::custom for custom observables".into()))
            }
        };
        Ok(Observable {
            name,
            coulomb: CompositeOperator::hermitian(matrix, nm, np)?,
        })
    }

    pub fn custom(coulomb: CompositeOperator) -> Result<Self> {
        if !coulomb.hermitian {
            return Err(Error::InvalidInput("custom observable must be Hermitian".into()));
        }
        Ok(Observable {
            name: ObservableName::Custom,
            coulomb,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case")]
pub enum FramePrescription {
    /// `R_0α O_0 R_0α†` with eigenvectors of `H_α`.
    ExactGauge { alpha: f64 },
    /// `P R_01 O_0 R_01† P` with eigenvectors of `H_1²`.
    DipoleTruncated,
    /// `T_10 P R_01 O_0 R_01† P T_10†` with eigenvectors of `h_1(0)`.
    RotatedFrameCorrect,
    /// `P O_0 P` with eigenvectors of `h_1(0)`.
    RotatedFrameAsCoulomb,
    /// `P O_0 P` with eigenvectors of `H_0²`.
    NaiveCoulombTruncated,
}

impl FramePrescription {
    /// The model whose eigenvectors this frame is paired with.
    pub fn model(&self) -> ModelKind {
        match *self {
            FramePrescription::ExactGauge { alpha } => ModelKind::Exact { alpha },
            FramePrescription::DipoleTruncated => ModelKind::Standard { alpha: 1.0 },
            FramePrescription::RotatedFrameCorrect | FramePrescription::RotatedFrameAsCoulomb => {
                ModelKind::RotatedClass { source: 1.0, target: 0.0 }
            }
            FramePrescription::NaiveCoulombTruncated => ModelKind::Standard { alpha: 0.0 },
        }
    }

    pub fn label(&self) -> String {
        match self {
            FramePrescription::ExactGauge { alpha } => format!("exact_gauge(alpha={alpha})"),
            FramePrescription::DipoleTruncated => "dipole_truncated".into(),
            FramePrescription::RotatedFrameCorrect => "rotated_frame_correct".into(),
            FramePrescription::RotatedFrameAsCoulomb => "rotated_frame_as_coulomb".into(),
            FramePrescription::NaiveCoulombTruncated => "naive_coulomb_truncated".into(),
        }
    }
}

/// Matrix representation of `obs` in `frame`. Every frame other than the
/// Coulomb-gauge exact one needs `context` for `R`, `T` and `P`.
pub fn represent(obs: &Observable, frame: FramePrescription, context: Option<&LightMatter>) -> Result<CompositeOperator> {
    let o = &obs.coulomb;
    if let FramePrescription::ExactGauge { alpha } = frame {
        if alpha == 0.0 {
            return Ok(o.clone());
        }
    }
    let lm = context.ok_or_else(|| Error::MissingContext(frame.label()))?;
    let s = lm.space();
    if o.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: o.dim(),
        });
    }
    let kept = s.kept_levels;
    let np = s.photon_levels;
    let matrix = match frame {
        FramePrescription::ExactGauge { alpha } => {
            let r = lm.gauge_unitary(0.0, alpha)?;
            return CompositeOperator::hermitian(linalg::sandwich(r.as_ref(), o.as_ref()), s.matter_levels, np);
        }
        FramePrescription::DipoleTruncated => dipole_truncated(lm, o)?,
        FramePrescription::RotatedFrameCorrect => {
            let inner = dipole_truncated(lm, o)?;
            linalg::sandwich(lm.t10()?.as_ref(), inner.as_ref())
        }
        FramePrescription::RotatedFrameAsCoulomb | FramePrescription::NaiveCoulombTruncated => {
            linalg::leading_block(o.as_ref(), s.subspace_dim())
        }
    };
    CompositeOperator::hermitian(matrix, kept, np)
}

fn dipole_truncated(lm: &LightMatter, o: &CompositeOperator) -> Result<CMat> {
    let head = lm.r01_head()?;
    // O is Hermitian: P R O = (O (P R)†)†
    let oh = linalg::sparse_mul(o.as_ref(), linalg::dagger(head.as_ref()).as_ref());
    Ok(head * oh.as_ref())
}

/// `⟨ψ|O|ψ⟩`.
pub fn average(op: &CompositeOperator, state: &CVec) -> Result<f64> {
    if state.nrows() != op.dim() {
        return Err(Error::SpaceMismatch {
            state: state.nrows(),
            operator: op.dim(),
        });
    }
    check_normalized(state)?;
    let v = linalg::expectation(op.as_ref(), state);
    if op.hermitian && v.im.abs() > 1e-10 * (1.0 + v.re.abs()) {
        return Err(Error::SolverFailure(format!("Hermitian average has imaginary part {:.3e}", v.im)));
    }
    Ok(v.re)
}

pub fn eigen_average(op: &CompositeOperator, es: &EigenSystem, i: usize) -> Result<f64> {
    average(op, &es.state(i))
}

/// Gibbs average with `k_B = 1`; `temperature = 0` is the ground state.
pub fn thermal_average(op: &CompositeOperator, es: &EigenSystem, temperature: f64) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(Error::InvalidInput(format!("temperature must be non-negative, got {temperature}")));
    }
    if temperature == 0.0 {
        return eigen_average(op, es, 0);
    }
    let e0 = es.values[0];
    // weights below double-precision resolution of the ground term are dropped
    let weights: Vec<f64> = es
        .values
        .iter()
        .map(|e| (-(e - e0) / temperature).exp())
        .take_while(|&w| w > 1e-17)
        .collect();
    if op.dim() != es.vectors.nrows() {
        return Err(Error::SpaceMismatch {
            state: es.vectors.nrows(),
            operator: op.dim(),
        });
    }
    let kept = es.vectors.subcols(0, weights.len());
    let ou = linalg::sparse_mul(op.as_ref(), kept.as_ref());
    let mut z = 0.0;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let v: c64 = (0..kept.nrows()).map(|i| kept[(i, k)].conj() * ou[(i, k)]).sum();
        z += w;
        acc += w * v.re;
    }
    Ok(acc / z)
}

/// `⟨Δ⟩_i − ⟨Δ⟩_0` in the eigenstates of `H_1²`, `i = 1..=i_max`.
pub fn delta_variation(lm: &LightMatter, i_max: usize) -> Result<Vec<f64>> {
    let es = eigensolve(&lm.build_model(ModelKind::Standard { alpha: 1.0 })?)?;
    let delta = lm.delta_operator(DeltaForm::Closed)?;
    let d0 = eigen_average(&delta, &es, 0)?;
    (1..=i_max).map(|i| Ok(eigen_average(&delta, &es, i)? - d0)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStep<C> {
    pub cutoffs: C,
    pub change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport<C> {
    /// First schedule entry whose values moved less than `tolerance`.
    pub cutoffs: C,
    pub values: Vec<f64>,
    pub change: f64,
    pub tolerance: f64,
    pub history: Vec<ConvergenceStep<C>>,
}

/// Walks `schedule` (typically `(N_mat, N_ph)` pairs) until two successive
/// evaluations differ by less than `tol·max(|v|, 1)` in every component.
pub fn converge<C, F>(schedule: &[C], tol: f64, mut evaluate: F) -> Result<ConvergenceReport<C>>
where
    C: Copy,
    F: FnMut(C) -> Result<Vec<f64>>,
{
    let mut prev: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    for &cutoffs in schedule {
        let vals = evaluate(cutoffs)?;
        let change = prev.as_ref().map(|p| {
            if p.len() != vals.len() {
                return f64::INFINITY;
            }
            p.iter()
                .zip(&vals)
                .map(|(a, b)| match (a.is_nan(), b.is_nan()) {
                    (true, true) => 0.0,
                    (false, false) => (a - b).abs() / b.abs().max(1.0),
                    _ => f64::INFINITY,
                })
                .fold(0.0, f64::max)
        });
        history.push(ConvergenceStep { cutoffs, change });
        if let Some(c) = change {
            if c < tol {
                return Ok(ConvergenceReport {
                    cutoffs,
                    values: vals,
                    change: c,
                    tolerance: tol,
                    history,
                });
            }
        }
        prev = Some(vals);
    }
    let last = history.last().and_then(|s| s.change).unwrap_or(f64::NAN);
    Err(Error::CutoffCeiling(format!(
        "last change {last:.3e} after {} steps exceeds tolerance {tol:.1e}",
        history.len()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{projector, ModeSpec};
    use crate::testing::small_basis;

    #[test]
    fn phase_convention_makes_largest_component_positive() {
        let h = CMat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 1) => faer::c64::new(0.3, 0.4),
            (1, 0) => faer::c64::new(0.3, -0.4),
            (i, j) if i == j => re(i as f64),
            _ => linalg::ZERO,
        });
        let es = eigensolve_matrix(&h).unwrap();
        for j in 0..3 {
            let v = es.state(j);
            let big = (0..3).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).unwrap();
            assert_eq!(v[big].im, 0.0);
            assert!(v[big].re > 0.0);
        }
    }

    #[test]
    fn fidelity_rejects_unnormalized() {
        let u = CVec::from_fn(2, |i| re(i as f64 + 1.0));
        assert!(matches!(fidelity(&u, &u), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn missing_context_is_reported() {
        let lm = LightMatter::with_levels(small_basis(), 4, ModeSpec::new(1.0, 8), 0.3, 1).unwrap();
        let obs = Observable::new(ObservableName::NEt, &lm).unwrap();
        assert!(represent(&obs, FramePrescription::ExactGauge { alpha: 0.0 }, None).is_ok());
        assert!(matches!(
            represent(&obs, FramePrescription::DipoleTruncated, None),
            Err(Error::MissingContext(_))
        ));
    }

    #[test]
    fn average_checks_space() {
        let lm = LightMatter::with_levels(small_basis(), 4, ModeSpec::new(1.0, 8), 0.3, 1).unwrap();
        let obs = Observable::new(ObservableName::Gamma, &lm).unwrap();
        let sub = represent(&obs, FramePrescription::RotatedFrameAsCoulomb, Some(&lm)).unwrap();
        let full = CVec::from_fn(32, |i| if i == 0 { linalg::ONE } else { linalg::ZERO });
        assert!(matches!(
            average(&sub, &full),
            Err(Error::SpaceMismatch { state: 32, operator: 16 })
        ));
    }

    #[test]
    fn cs_bound_of_subspace_state_is_one() {
        let lm = LightMatter::with_levels(small_basis(), 4, ModeSpec::new(1.0, 8), 0.3, 1).unwrap();
        let (p, _) = projector(lm.space());
        let s = CVec::from_fn(32, |i| if i == 3 { linalg::ONE } else { linalg::ZERO });
        assert_eq!(cs_bound(&s, &p).unwrap(), 1.0);
    }

    #[test]
    fn converge_stops_at_first_small_change() {
        let sched = [(2, 8), (3, 8), (4, 8), (5, 8)];
        let r = converge(&sched, 1e-3, |(nm, _)| Ok(vec![1.0 + 10f64.powi(-(nm as i32))])).unwrap();
        assert_eq!(r.cutoffs, (4, 8));
        assert_eq!(r.history.len(), 3);
        let err = converge(&sched[..2], 1e-9, |(nm, _)| Ok(vec![nm as f64])).unwrap_err();
        assert!(matches!(err, Error::CutoffCeiling(_)));
    }
}
