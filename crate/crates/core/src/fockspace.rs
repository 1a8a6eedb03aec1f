//! Single-mode Fock operators, the matter⊗photon product space and the
//! material-truncation projectors.
//!
//! Composite indices are matter-major: `index = μ·N_ph + n`. The truncated
//! subspace `P = Σ_{μ≤M} |ε_μ⟩⟨ε_μ| ⊗ I_ph` is therefore the leading block of
//! size `(M+1)·N_ph`.

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, re, CMat, CVec, I};
use crate::matter1d::MatterBasis;

pub const MIN_PHOTON_CUTOFF: usize = 8;
/// Tolerance behind the Hermitian flag of [`CompositeOperator`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub omega: f64,
    #[serde(default = "default_volume")]
    pub volume: f64,
    pub cutoff: usize,
}

fn default_volume() -> f64 {
    1.0
}

impl ModeSpec {
    pub fn new(omega: f64, cutoff: usize) -> Self {
        ModeSpec {
            omega,
            volume: 1.0,
            cutoff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !(self.volume > 0.0) {
            return Err(Error::InvalidInput("mode frequency and volume must be positive".into()));
        }
        if self.cutoff < MIN_PHOTON_CUTOFF {
            return Err(Error::InvalidInput(format!(
                "photon cutoff {} is below the minimum {MIN_PHOTON_CUTOFF}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FockOperators {
    pub a: CMat,
    pub a_dag: CMat,
    /// `A = (a + a†)/√(2ωv)`
    pub vector_potential: CMat,
    /// `Π = i√(ω/2v)(a† − a)`
    pub canonical_momentum: CMat,
    /// `A²` from the normal-ordered expansion, exact on every retained state
    /// (the matrix square of the truncated `A` is wrong in the last row).
    pub vector_potential_sq: CMat,
    pub number: CMat,
    /// `ω(a†a + ½)`
    pub h_ph: CMat,
}

pub fn fock_operators(mode: &ModeSpec) -> Result<FockOperators> {
    mode.validate()?;
    let n = mode.cutoff;
    let (w, v) = (mode.omega, mode.volume);
    let a = CMat::from_fn(n, n, |i, j| if j == i + 1 { re((j as f64).sqrt()) } else { linalg::ZERO });
    let a_dag = linalg::dagger(a.as_ref());
    let a_scale = 1.0 / (2.0 * w * v).sqrt();
    let pi_scale = (w / (2.0 * v)).sqrt();
    let vector_potential = CMat::from_fn(n, n, |i, j| (a[(i, j)] + a_dag[(i, j)]) * a_scale);
    let canonical_momentum = CMat::from_fn(n, n, |i, j| I * (a_dag[(i, j)] - a[(i, j)]) * pi_scale);
    // (a + a†)² = a² + a†² + 2a†a + 1
    let vector_potential_sq = CMat::from_fn(n, n, |i, j| {
        let val = if i == j {
            2.0 * i as f64 + 1.0
        } else if j == i + 2 {
            ((i + 1) as f64 * (i + 2) as f64).sqrt()
        } else if i == j + 2 {
            ((j + 1) as f64 * (j + 2) as f64).sqrt()
        } else {
            0.0
        };
        re(val * a_scale * a_scale)
    });
    let number = CMat::from_fn(n, n, |i, j| if i == j { re(i as f64) } else { linalg::ZERO });
    let h_ph = CMat::from_fn(n, n, |i, j| if i == j { re(w * (i as f64 + 0.5)) } else { linalg::ZERO });
    Ok(FockOperators {
        a,
        a_dag,
        vector_potential,
        canonical_momentum,
        vector_potential_sq,
        number,
        h_ph,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositeSpace {
    pub matter_levels: usize,
    pub photon_levels: usize,
    /// `M + 1`, the number of matter levels kept by `P`.
    pub kept_levels: usize,
    pub eta: f64,
    /// `q = η√(2ωv)/x_10`
    pub charge: f64,
    pub omega: f64,
    pub volume: f64,
    pub mass: f64,
}

impl CompositeSpace {
    /// `truncation` is `M`, the index of the highest retained matter level.
    pub fn new(basis: &MatterBasis, mode: &ModeSpec, eta: f64, truncation: usize) -> Result<Self> {
        mode.validate()?;
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidInput(format!("coupling must be finite and non-negative, got {eta}")));
        }
        let kept = truncation + 1;
        if kept > basis.levels() {
            return Err(Error::InvalidInput(format!(
                "truncation M = {truncation} needs {kept} matter levels, basis has {}",
                basis.levels()
            )));
        }
        let x10 = basis.x10();
        if !(x10 > 0.0) {
            return Err(Error::InvalidInput("dipole element x_10 must be positive".into()));
        }
        Ok(CompositeSpace {
            matter_levels: basis.levels(),
            photon_levels: mode.cutoff,
            kept_levels: kept,
            eta,
            charge: eta * (2.0 * mode.omega * mode.volume).sqrt() / x10,
            omega: mode.omega,
            volume: mode.volume,
            mass: basis.mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.matter_levels * self.photon_levels
    }

    pub fn subspace_dim(&self) -> usize {
        self.kept_levels * self.photon_levels
    }

    pub fn truncation(&self) -> usize {
        self.kept_levels - 1
    }

    pub fn index(&self, matter: usize, photon: usize) -> usize {
        matter * self.photon_levels + photon
    }
}

#[derive(Debug, Clone)]
pub struct CompositeOperator {
    pub matrix: CMat,
    pub matter_dim: usize,
    pub photon_dim: usize,
    pub hermitian: bool,
}

impl CompositeOperator {
    /// Tags `matrix` as Hermitian after checking it to [`HERMITIAN_TOLERANCE`].
    pub fn hermitian(mut matrix: CMat, matter_dim: usize, photon_dim: usize) -> Result<Self> {
        check_dims(&matrix, matter_dim * photon_dim)?;
        let err = linalg::hermiticity_error(matrix.as_ref());
        if err >= HERMITIAN_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "operator flagged Hermitian deviates from its adjoint by {err:.3e}"
            )));
        }
        linalg::symmetrize(&mut matrix);
        Ok(CompositeOperator {
            matrix,
            matter_dim,
            photon_dim,
            hermitian: true,
        })
    }

    pub fn general(matrix: CMat, matter_dim: usize, photon_dim: usize) -> Result<Self> {
        check_dims(&matrix, matter_dim * photon_dim)?;
        Ok(CompositeOperator {
            matrix,
            matter_dim,
            photon_dim,
            hermitian: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, faer::c64> {
        self.matrix.as_ref()
    }
}

fn check_dims(m: &CMat, expected: usize) -> Result<()> {
    if m.nrows() != expected || m.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Matter,
    Photon,
}

/// Tensors a single-subsystem operator with the identity of the other factor.
pub fn embed(op: MatRef<'_, faer::c64>, subsystem: Subsystem, matter_dim: usize, photon_dim: usize) -> Result<CompositeOperator> {
    let expected = match subsystem {
        Subsystem::Matter => matter_dim,
        Subsystem::Photon => photon_dim,
    };
    if op.nrows() != expected || op.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: op.nrows().max(op.ncols()),
        });
    }
    let matrix = match subsystem {
        Subsystem::Matter => linalg::kron(op, linalg::identity(photon_dim).as_ref()),
        Subsystem::Photon => linalg::kron(linalg::identity(matter_dim).as_ref(), op),
    };
    let hermitian = linalg::hermiticity_error(op) < HERMITIAN_TOLERANCE;
    Ok(CompositeOperator {
        matrix,
        matter_dim,
        photon_dim,
        hermitian,
    })
}

/// Projector onto a contiguous index range of the composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projector {
    pub start: usize,
    pub end: usize,
    pub dim: usize,
}

impl Projector {
    pub fn rank(&self) -> usize {
        self.end - self.start
    }

    pub fn matrix(&self) -> CMat {
        CMat::from_fn(self.dim, self.dim, |i, j| {
            if i == j && (self.start..self.end).contains(&i) {
                linalg::ONE
            } else {
                linalg::ZERO
            }
        })
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        CVec::from_fn(v.nrows(), |i| if (self.start..self.end).contains(&i) { v[i] } else { linalg::ZERO })
    }

    /// `‖P v‖²`
    pub fn weight(&self, v: &CVec) -> f64 {
        (self.start..self.end.min(v.nrows())).map(|i| v[i].norm_sqr()).sum()
    }
}

/// `(P, Q)` with `P` keeping matter levels `0..=M` and `Q = I − P`.
pub fn projector(space: &CompositeSpace) -> (Projector, Projector) {
    let dim = space.dim();
    let kept = space.subspace_dim();
    (
        Projector { start: 0, end: kept, dim },
        Projector { start: kept, end: dim, dim },
    )
}
