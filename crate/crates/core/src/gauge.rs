//! α-gauge Hamiltonians, gauge-fixing unitaries and truncated models.
//!
//! `H_α = (p − q(1−α)A)²/2m + V(x) + (v/2)[(Π + qαx/v)² + ω²A²]`, expanded as
//!
//! ```text
//! H_α = H_m + H_ph − q(1−α)/m · p⊗A + q²(1−α)²/2m · A² + qα · x⊗Π + q²α²/2v · x²
//! ```
//!
//! with `H_m` diagonal in the bare matter basis. `R_αα′ = exp[iq(α−α′)xA]`
//! maps `H_α` to `H_α′`; its truncated analog `T_αα′` replaces `x` by `PxP`.

use std::sync::OnceLock;

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{fock_operators, CompositeOperator, CompositeSpace, FockOperators, ModeSpec};
use crate::linalg::{self, re, CMat};
use crate::matter1d::MatterBasis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Non-truncated `H_α`.
    Exact { alpha: f64 },
    /// Standard truncation `H_α² = PH_mP + PH_phP + V_α(PxP, PpP)`.
    Standard { alpha: f64 },
    /// `P H_α P`.
    Projected { alpha: f64 },
    /// `h_s(t) = T_st H_s² T_st†`.
    RotatedClass { source: f64, target: f64 },
}

impl ModelKind {
    pub fn is_truncated(&self) -> bool {
        !matches!(self, ModelKind::Exact { .. })
    }

    pub fn label(&self) -> String {
        match self {
            ModelKind::Exact { alpha } => format!("exact(alpha={alpha})"),
            ModelKind::Standard { alpha } => format!("standard(alpha={alpha})"),
            ModelKind::Projected { alpha } => format!("projected(alpha={alpha})"),
            ModelKind::RotatedClass { source, target } => format!("rotated({source}->{target})"),
        }
    }

    fn parameters(&self) -> [f64; 2] {
        match *self {
            ModelKind::Exact { alpha } | ModelKind::Standard { alpha } | ModelKind::Projected { alpha } => [alpha, alpha],
            ModelKind::RotatedClass { source, target } => [source, target],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hamiltonian: CompositeOperator,
    /// `true` when the Hamiltonian acts on the `P` subspace.
    pub on_subspace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaForm {
    /// `η²(Px²P/x_10² − I)`, two-level truncation only.
    Closed,
    /// `P R_01 a†a R_01† P − T_01 a†a T_01†`.
    RotationDifference,
    /// `(PH_1P − H_1²)/ω`.
    HamiltonianDifference,
}

/// A calibrated dipole coupled to one mode at fixed `η` and truncation `M`.
#[derive(Debug)]
pub struct LightMatter {
    basis: MatterBasis,
    mode: ModeSpec,
    space: CompositeSpace,
    fock: FockOperators,
    x: CMat,
    x2: CMat,
    r01_head: OnceLock<CMat>,
    t10: OnceLock<CMat>,
}

impl LightMatter {
    /// Uses every level of `basis`; `truncation` is `M`.
    pub fn new(basis: &MatterBasis, mode: ModeSpec, eta: f64, truncation: usize) -> Result<Self> {
        let space = CompositeSpace::new(basis, &mode, eta, truncation)?;
        let fock = fock_operators(&mode)?;
        Ok(LightMatter {
            x: basis.x_complex(),
            x2: basis.x2_complex(),
            basis: basis.clone(),
            mode,
            space,
            fock,
            r01_head: OnceLock::new(),
            t10: OnceLock::new(),
        })
    }

    /// Keeps the lowest `matter_levels` levels of `basis`.
    pub fn with_levels(basis: &MatterBasis, matter_levels: usize, mode: ModeSpec, eta: f64, truncation: usize) -> Result<Self> {
        Self::new(&basis.truncated(matter_levels)?, mode, eta, truncation)
    }

    pub fn basis(&self) -> &MatterBasis {
        &self.basis
    }

    pub fn mode(&self) -> &ModeSpec {
        &self.mode
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn fock(&self) -> &FockOperators {
        &self.fock
    }

    pub fn x(&self) -> &CMat {
        &self.x
    }

    pub fn x2(&self) -> &CMat {
        &self.x2
    }

    fn kept(&self) -> usize {
        self.space.kept_levels
    }

    /// `PxP` restricted to the kept levels.
    pub fn x_truncated(&self) -> CMat {
        linalg::leading_block(self.x.as_ref(), self.kept())
    }

    fn assemble(&self, alpha: f64, levels: usize, x_sq: MatRef<'_, faer::c64>) -> Result<CompositeOperator> {
        let ph = self.space.photon_levels;
        let dim = levels * ph;
        let q = self.space.charge;
        let m = self.space.mass;
        let v = self.space.volume;
        let w = self.space.omega;

        let mut h = CMat::zeros(dim, dim);
        for mu in 0..levels {
            for n in 0..ph {
                h[(mu * ph + n, mu * ph + n)] = re(self.basis.eps[mu] + w * (n as f64 + 0.5));
            }
        }
        let p = self.basis.p.submatrix(0, 0, levels, levels);
        let x = self.x.submatrix(0, 0, levels, levels);
        let id = linalg::identity(levels);
        let id_ph = linalg::identity(ph);
        let f = &self.fock;
        linalg::add_kron(&mut h, re(-q * (1.0 - alpha) / m), p, f.vector_potential.as_ref());
        linalg::add_kron(
            &mut h,
            re(q * q * (1.0 - alpha).powi(2) / (2.0 * m)),
            id.as_ref(),
            f.vector_potential_sq.as_ref(),
        );
        linalg::add_kron(&mut h, re(q * alpha), x, f.canonical_momentum.as_ref());
        linalg::add_kron(&mut h, re(q * q * alpha * alpha / (2.0 * v)), x_sq, id_ph.as_ref());
        linalg::symmetrize(&mut h);
        CompositeOperator::hermitian(h, levels, ph)
    }

    /// Exact `H_α` on the full product space.
    pub fn h_alpha(&self, alpha: f64) -> Result<CompositeOperator> {
        self.assemble(alpha, self.space.matter_levels, self.x2.as_ref())
    }

    /// `R_αα′ = exp[iq(α−α′) x⊗A]` on the full space.
    pub fn gauge_unitary(&self, alpha: f64, alpha_p: f64) -> Result<CompositeOperator> {
        let s = self.space.charge * (alpha - alpha_p);
        let u = linalg::kron_exp_i(self.x.as_ref(), self.fock.vector_potential.as_ref(), s)?;
        CompositeOperator::general(u, self.space.matter_levels, self.space.photon_levels)
    }

    /// Leading `(M+1)·N_ph` rows of `R_αα′`, i.e. `P R_αα′`.
    pub fn gauge_unitary_head(&self, alpha: f64, alpha_p: f64) -> Result<CMat> {
        let s = self.space.charge * (alpha - alpha_p);
        linalg::kron_exp_i_rows(
            self.x.as_ref(),
            self.fock.vector_potential.as_ref(),
            s,
            self.space.subspace_dim(),
        )
    }

    /// Cached `P R_01`.
    pub fn r01_head(&self) -> Result<&CMat> {
        if let Some(r) = self.r01_head.get() {
            return Ok(r);
        }
        let r = self.gauge_unitary_head(0.0, 1.0)?;
        let _ = self.r01_head.set(r);
        Ok(self.r01_head.get().expect("initialized above"))
    }

    /// `T_αα′ = exp[iq(α−α′) PxP⊗A]` on the `P` subspace.
    pub fn truncated_unitary(&self, alpha: f64, alpha_p: f64) -> Result<CompositeOperator> {
        let s = self.space.charge * (alpha - alpha_p);
        let u = linalg::kron_exp_i(self.x_truncated().as_ref(), self.fock.vector_potential.as_ref(), s)?;
        CompositeOperator::general(u, self.kept(), self.space.photon_levels)
    }

    /// Cached `T_10`.
    pub fn t10(&self) -> Result<&CMat> {
        if let Some(t) = self.t10.get() {
            return Ok(t);
        }
        let t = self.truncated_unitary(1.0, 0.0)?.matrix;
        let _ = self.t10.set(t);
        Ok(self.t10.get().expect("initialized above"))
    }

    pub fn build_model(&self, kind: ModelKind) -> Result<ModelSpec> {
        if kind.parameters().iter().any(|a| !a.is_finite()) {
            return Err(Error::UnsupportedKind(format!("{kind:?}")));
        }
        let kept = self.kept();
        let hamiltonian = match kind {
            ModelKind::Exact { alpha } => self.h_alpha(alpha)?,
            ModelKind::Projected { alpha } => {
                let x2 = linalg::leading_block(self.x2.as_ref(), kept);
                self.assemble(alpha, kept, x2.as_ref())?
            }
            ModelKind::Standard { alpha } => self.standard(alpha)?,
            ModelKind::RotatedClass { source, target } => {
                let h = self.standard(source)?;
                let t = self.truncated_unitary(source, target)?;
                let rotated = linalg::sandwich(t.as_ref(), h.as_ref());
                CompositeOperator::hermitian(rotated, kept, self.space.photon_levels)?
            }
        };
        Ok(ModelSpec {
            kind,
            on_subspace: kind.is_truncated(),
            hamiltonian,
        })
    }

    fn standard(&self, alpha: f64) -> Result<CompositeOperator> {
        let xt = self.x_truncated();
        let xt_sq = &xt * &xt;
        self.assemble(alpha, self.kept(), xt_sq.as_ref())
    }

    /// Difference between the photon-number predictions of `h_1(0)` read as a
    /// Coulomb-gauge model and of the dipole-gauge truncation, on the `P`
    /// subspace. All three forms agree; see [`DeltaForm`].
    pub fn delta_operator(&self, form: DeltaForm) -> Result<CompositeOperator> {
        let kept = self.kept();
        let ph = self.space.photon_levels;
        let matrix = match form {
            DeltaForm::Closed => {
                if kept != 2 {
                    return Err(Error::ClosedFormNeedsTwoLevels(kept - 1));
                }
                let eta2 = self.space.eta * self.space.eta;
                let x10 = self.basis.x10();
                let mut m = linalg::leading_block(self.x2.as_ref(), 2);
                for i in 0..2 {
                    for j in 0..2 {
                        m[(i, j)] = m[(i, j)] * (eta2 / (x10 * x10)) - if i == j { re(eta2) } else { linalg::ZERO };
                    }
                }
                linalg::kron(m.as_ref(), linalg::identity(ph).as_ref())
            }
            DeltaForm::HamiltonianDifference => {
                let projected = self.build_model(ModelKind::Projected { alpha: 1.0 })?.hamiltonian;
                let standard = self.build_model(ModelKind::Standard { alpha: 1.0 })?.hamiltonian;
                let diff = &projected.matrix - &standard.matrix;
                faer::Scale(re(1.0 / self.space.omega)) * &diff
            }
            DeltaForm::RotationDifference => {
                let head = self.r01_head()?;
                let number_diag: Vec<f64> = (0..self.space.dim()).map(|k| (k % ph) as f64).collect();
                let mut scaled = head.clone();
                for (j, &nj) in number_diag.iter().enumerate() {
                    for i in 0..scaled.nrows() {
                        scaled[(i, j)] *= nj;
                    }
                }
                let projected_number = &scaled * head.adjoint();
                let t01 = self.truncated_unitary(0.0, 1.0)?;
                let number = linalg::kron(linalg::identity(kept).as_ref(), self.fock.number.as_ref());
                let rotated_number = linalg::sandwich(t01.as_ref(), number.as_ref());
                &projected_number - &rotated_number
            }
        };
        let mut matrix = matrix;
        linalg::symmetrize(&mut matrix);
        CompositeOperator::hermitian(matrix, kept, ph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::testing::small_basis;

    fn system(eta: f64, levels: usize, photons: usize) -> LightMatter {
        LightMatter::with_levels(small_basis(), levels, ModeSpec::new(1.0, photons), eta, 1).unwrap()
    }

    #[test]
    fn decoupled_spectrum_is_bare_sum() {
        let lm = system(0.0, 4, 10);
        let mut want: Vec<f64> = (0..4)
            .flat_map(|mu| (0..10).map(move |n| small_basis().eps[mu] + n as f64 + 0.5))
            .collect();
        want.sort_by(f64::total_cmp);
        for alpha in [0.0, 0.3, 1.0] {
            let h = lm.h_alpha(alpha).unwrap();
            let (vals, _) = linalg::eigh(h.as_ref()).unwrap();
            for (a, b) in vals.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "alpha {alpha}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn dipole_gauge_term_by_term() {
        let lm = system(0.7, 5, 12);
        let h1 = lm.h_alpha(1.0).unwrap();
        let q = lm.space().charge;
        let f = lm.fock();
        let mut want = CMat::zeros(60, 60);
        let hm = CMat::from_fn(5, 5, |i, j| if i == j { re(lm.basis().eps[i]) } else { linalg::ZERO });
        linalg::add_kron(&mut want, re(1.0), hm.as_ref(), linalg::identity(12).as_ref());
        linalg::add_kron(&mut want, re(1.0), linalg::identity(5).as_ref(), f.h_ph.as_ref());
        linalg::add_kron(&mut want, re(q), lm.x().as_ref(), f.canonical_momentum.as_ref());
        linalg::add_kron(&mut want, re(q * q / 2.0), lm.x2().as_ref(), linalg::identity(12).as_ref());
        assert!(max_abs_diff(h1.as_ref(), want.as_ref()) < 1e-10);
    }

    #[test]
    fn standard_dipole_model_is_rabi_model() {
        let eta = 0.6;
        let lm = system(eta, 6, 14);
        let qrm = lm.build_model(ModelKind::Standard { alpha: 1.0 }).unwrap();
        let f = lm.fock();
        let b = lm.basis();
        let w = 1.0;
        let mut want = CMat::zeros(28, 28);
        let hm = CMat::from_fn(2, 2, |i, j| if i == j { re(b.eps[i]) } else { linalg::ZERO });
        let sx = CMat::from_fn(2, 2, |i, j| if i != j { linalg::ONE } else { linalg::ZERO });
        let quad = CMat::from_fn(14, 14, |i, j| linalg::I * (f.a_dag[(i, j)] - f.a[(i, j)]));
        linalg::add_kron(&mut want, linalg::ONE, hm.as_ref(), linalg::identity(14).as_ref());
        linalg::add_kron(&mut want, linalg::ONE, linalg::identity(2).as_ref(), f.h_ph.as_ref());
        linalg::add_kron(&mut want, re(eta * w), sx.as_ref(), quad.as_ref());
        linalg::add_kron(&mut want, re(eta * eta * w), linalg::identity(2).as_ref(), linalg::identity(14).as_ref());
        assert!(max_abs_diff(qrm.hamiltonian.as_ref(), want.as_ref()) < 1e-10);
    }

    #[test]
    fn standard_equals_projected_only_in_coulomb_gauge() {
        let lm = system(0.8, 6, 12);
        let s0 = lm.build_model(ModelKind::Standard { alpha: 0.0 }).unwrap();
        let p0 = lm.build_model(ModelKind::Projected { alpha: 0.0 }).unwrap();
        assert!(max_abs_diff(s0.hamiltonian.as_ref(), p0.hamiltonian.as_ref()) < 1e-12);
        let s1 = lm.build_model(ModelKind::Standard { alpha: 1.0 }).unwrap();
        let p1 = lm.build_model(ModelKind::Projected { alpha: 1.0 }).unwrap();
        assert!(max_abs_diff(s1.hamiltonian.as_ref(), p1.hamiltonian.as_ref()) > 1e-3);
    }

    #[test]
    fn unitaries_invert_and_reduce_to_identity() {
        let lm = system(0.5, 5, 10);
        let id = lm.gauge_unitary(0.4, 0.4).unwrap();
        assert!(max_abs_diff(id.as_ref(), linalg::identity(50).as_ref()) < 1e-13);
        let r01 = lm.gauge_unitary(0.0, 1.0).unwrap();
        let r10 = lm.gauge_unitary(1.0, 0.0).unwrap();
        let prod = &r01.matrix * &r10.matrix;
        assert!(max_abs_diff(prod.as_ref(), linalg::identity(50).as_ref()) < 1e-10);

        let t = lm.truncated_unitary(1.0, 0.0).unwrap();
        let tt = &t.matrix * t.matrix.adjoint();
        assert!(max_abs_diff(tt.as_ref(), linalg::identity(20).as_ref()) < 1e-12);
        let head = lm.gauge_unitary_head(0.0, 1.0).unwrap();
        assert!(max_abs_diff(head.as_ref(), r01.matrix.submatrix(0, 0, 20, 50)) < 1e-13);
    }

    #[test]
    fn rotated_class_shares_spectrum() {
        let lm = system(0.9, 4, 12);
        let s1 = lm.build_model(ModelKind::Standard { alpha: 1.0 }).unwrap();
        let h10 = lm.build_model(ModelKind::RotatedClass { source: 1.0, target: 0.0 }).unwrap();
        let (a, _) = linalg::eigh(s1.hamiltonian.as_ref()).unwrap();
        let (b, _) = linalg::eigh(h10.hamiltonian.as_ref()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn delta_forms_at_zero_coupling_vanish() {
        let lm = system(0.0, 6, 10);
        for form in [DeltaForm::Closed, DeltaForm::RotationDifference, DeltaForm::HamiltonianDifference] {
            let d = lm.delta_operator(form).unwrap();
            assert!(max_abs_diff(d.as_ref(), CMat::zeros(20, 20).as_ref()) < 1e-12, "{form:?}");
        }
    }

    #[test]
    fn closed_delta_needs_two_levels() {
        let lm = LightMatter::with_levels(small_basis(), 6, ModeSpec::new(1.0, 10), 0.5, 2).unwrap();
        assert!(matches!(
            lm.delta_operator(DeltaForm::Closed),
            Err(Error::ClosedFormNeedsTwoLevels(2))
        ));
        assert!(lm.delta_operator(DeltaForm::HamiltonianDifference).is_ok());
    }

    #[test]
    fn non_finite_gauge_is_unsupported() {
        let lm = system(0.2, 4, 10);
        assert!(matches!(
            lm.build_model(ModelKind::Standard { alpha: f64::NAN }),
            Err(Error::UnsupportedKind(_))
        ));
    }
}
