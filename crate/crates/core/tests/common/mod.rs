#![allow(dead_code)]

use std::sync::OnceLock;

use qedtrunc::analysis::{eigensolve, EigenSystem};
use qedtrunc::fockspace::ModeSpec;
use qedtrunc::gauge::{LightMatter, ModelKind};
use qedtrunc::matter1d::{solve_double_well, MatterBasis, MatterSpec};

/// Shallow double well resolved on a modest grid; cheap enough for every
/// integration test binary to solve on its own.
pub fn small_spec() -> MatterSpec {
    MatterSpec {
        mass: 1.0,
        theta: 2.0,
        phi: 0.5,
        half_width: 9.0,
        grid_points: 512,
        levels: 12,
    }
}

pub fn small_basis() -> &'static MatterBasis {
    static BASIS: OnceLock<MatterBasis> = OnceLock::new();
    BASIS.get_or_init(|| solve_double_well(&small_spec()).unwrap())
}

/// Mode resonant with the first matter transition of the small basis.
pub fn resonant_mode(cutoff: usize) -> ModeSpec {
    ModeSpec::new(small_basis().omega0(), cutoff)
}

pub fn light_matter(nm: usize, np: usize, eta: f64) -> LightMatter {
    LightMatter::with_levels(small_basis(), nm, resonant_mode(np), eta, 1).unwrap()
}

pub fn solve(lm: &LightMatter, kind: ModelKind) -> EigenSystem {
    eigensolve(&lm.build_model(kind).unwrap()).unwrap()
}

/// The μ = 70 well resonant with ω = 1, 30 levels.
pub fn calibrated_basis() -> &'static MatterBasis {
    static BASIS: OnceLock<MatterBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let spec = qedtrunc::matter1d::calibrate_potential_with(70.0, 1.0, 30, 2048).unwrap();
        solve_double_well(&spec).unwrap()
    })
}

pub fn calibrated(nm: usize, np: usize, eta: f64) -> LightMatter {
    LightMatter::with_levels(calibrated_basis(), nm, ModeSpec::new(1.0, np), eta, 1).unwrap()
}
