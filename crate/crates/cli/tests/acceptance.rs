//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Set QEDTRUNC_FULL_SUITE=1 to time the complete figure
//! suite instead of extrapolating it from a two-point run.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use qedtrunc::analysis::{
    cs_bound, delta_variation, eigen_average, eigensolve, fidelity, represent, saturating_vector, EigenSystem,
    FramePrescription, Observable, ObservableName,
};
use qedtrunc::fockspace::{projector, ModeSpec};
use qedtrunc::gauge::{DeltaForm, LightMatter, ModelKind};
use qedtrunc::lindblad::{self, decay_rate, evolve, rates, IntegratorOptions, LindbladSystem};
use qedtrunc::linalg::{self, kron, max_abs_diff, CMat};
use qedtrunc::matter1d::{calibrate_potential_with, solve_double_well, MatterBasis};

const TARGET_MU: f64 = 70.0;
const OMEGA: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn lm(basis: &MatterBasis, nm: usize, np: usize, eta: f64) -> LightMatter {
    LightMatter::with_levels(basis, nm, ModeSpec::new(OMEGA, np), eta, 1).unwrap()
}

fn solve(lm: &LightMatter, kind: ModelKind) -> EigenSystem {
    eigensolve(&lm.build_model(kind).unwrap()).unwrap()
}

fn grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| k as f64 / (points - 1) as f64).collect()
}

/// Indices of the composite states with photon number below `np / 2`
/// inside the leading `levels` matter levels.
fn low_block(m: &CMat, levels: usize, np: usize) -> CMat {
    let idx: Vec<usize> = (0..levels).flat_map(|mu| (0..np / 2).map(move |n| mu * np + n)).collect();
    CMat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

const DIPOLE: ModelKind = ModelKind::Standard { alpha: 1.0 };
const ROTATED: ModelKind = ModelKind::RotatedClass { source: 1.0, target: 0.0 };

fn criterion_1(b: &MatterBasis) -> Outcome {
    let (nm, np) = (30, 60);
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for eta in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let clock = Instant::now();
        let l = lm(b, nm, np, eta);
        let e0 = solve(&l, ModelKind::Exact { alpha: 0.0 });
        let e1 = solve(&l, ModelKind::Exact { alpha: 1.0 });
        slowest = slowest.max(clock.elapsed().as_secs_f64());
        for i in 0..6 {
            worst = worst.max(((e0.values[i] - e1.values[i]) / e1.values[i]).abs());
        }
    }
    outcome(
        worst < 1e-6 && slowest < 60.0,
        format!("max relative |E_i(H0) - E_i(H1)| = {worst:.2e} (< 1e-6); slowest point {slowest:.1} s (< 60 s) at N_mat=30, N_ph=60"),
    )
}

fn criterion_2(b: &MatterBasis) -> Outcome {
    let (nm, np) = (16, 40);
    let mut excess = f64::NEG_INFINITY;
    let mut saturation = 0.0f64;
    for eta in grid(101) {
        let l = lm(b, nm, np, eta);
        let (p, _) = projector(l.space());
        for (alpha, models) in [
            (1.0, [DIPOLE, ModelKind::Projected { alpha: 1.0 }]),
            (0.0, [ModelKind::Standard { alpha: 0.0 }, ROTATED]),
        ] {
            let s = solve(&l, ModelKind::Exact { alpha }).state(0);
            let bound = cs_bound(&s, &p).unwrap();
            for kind in models {
                let f = fidelity(&solve(&l, kind).state(0), &s).unwrap();
                excess = excess.max(f - bound);
            }
            let sat = fidelity(&saturating_vector(&s, &p).unwrap(), &s).unwrap();
            saturation = saturation.max((sat - bound).abs());
        }
    }
    outcome(
        excess <= 1e-10 && saturation < 1e-12,
        format!("max F - ||PS||^2 = {excess:.2e} (<= 1e-10) over 101 eta points; saturation |F - ||PS||^2| = {saturation:.2e} (< 1e-12)"),
    )
}

fn criterion_3(b: &MatterBasis) -> Outcome {
    // converged photon cutoff at eta = 1 (the N_ph = 40 residual is 6e-5)
    let (nm, np) = (20, 80);
    let (mut ham, mut rot, mut proj) = (0.0f64, 0.0f64, 0.0f64);
    for eta in [0.25, 0.5, 1.0] {
        let l = lm(b, nm, np, eta);
        let closed = l.delta_operator(DeltaForm::Closed).unwrap();
        let hd = l.delta_operator(DeltaForm::HamiltonianDifference).unwrap();
        let rd = l.delta_operator(DeltaForm::RotationDifference).unwrap();
        ham = ham.max(max_abs_diff(closed.as_ref(), hd.as_ref()));
        rot = rot.max(max_abs_diff(
            low_block(&closed.matrix, 2, np).as_ref(),
            low_block(&rd.matrix, 2, np).as_ref(),
        ));
        let s0 = l.build_model(ModelKind::Standard { alpha: 0.0 }).unwrap();
        let p0 = l.build_model(ModelKind::Projected { alpha: 0.0 }).unwrap();
        proj = proj.max(max_abs_diff(s0.hamiltonian.as_ref(), p0.hamiltonian.as_ref()));
    }
    outcome(
        ham < 1e-10 && rot < 1e-6 && proj < 1e-12,
        format!("closed vs (PH1P - H1^2)/w {ham:.2e} (< 1e-10); closed vs rotation difference {rot:.2e} (< 1e-6, photon block n < N_ph/2, N_ph = 80); Standard(0) vs Projected(0) {proj:.2e} (< 1e-12)"),
    )
}

fn criterion_4(b: &MatterBasis) -> Outcome {
    let clock = Instant::now();
    let mut worst = 0.0f64;
    for eta in grid(101) {
        let l = lm(b, 4, 60, eta);
        for d in delta_variation(&l, 3).unwrap() {
            worst = worst.max(d.abs());
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        worst < 0.02,
        format!("max |<Delta>_i - <Delta>_0| = {worst:.4} (< 0.02) over i <= 3, 101 eta points in {secs:.1} s"),
    )
}

fn criterion_5(b: &MatterBasis) -> Outcome {
    let (nm, np) = (20, 40);
    let mut envelope = 0.0f64;
    let mut abs_error = 0.0;
    for eta in grid(21) {
        let l = lm(b, nm, np, eta);
        let ex = solve(&l, ModelKind::Exact { alpha: 0.0 });
        let qrm = solve(&l, DIPOLE);
        let te = ex.transition_energies(3, OMEGA);
        let tq = qrm.transition_energies(3, OMEGA);
        for (a, q) in te.iter().zip(&tq) {
            envelope = envelope.max((a - q).abs());
        }
        if eta == 1.0 {
            abs_error = (ex.values[0] - qrm.values[0]).abs() / OMEGA;
        }
    }
    outcome(
        envelope <= 0.05 && abs_error > 5.0 * envelope,
        format!("transition envelope {envelope:.4} w (<= 0.05 w, i <= 3, 21 eta points); QRM ground-energy error at eta=1 {abs_error:.4} w (> 5 x envelope = {:.4} w)", 5.0 * envelope),
    )
}

/// Converged (N_mat=20, N_ph=40, truncated N_ph=80) ground-state values at
/// eta = 1 from the oracle run, in the order exact, dipole truncated,
/// h1(0)-as-Coulomb.
const N_ET_ORACLE: [f64; 3] = [0.150594, 0.147288, 0.077315];
const GAMMA_ORACLE: [f64; 3] = [0.077144, 0.076979, 0.030105];
const ORACLE_TOLERANCE: f64 = 1e-5;

fn criterion_6(b: &MatterBasis) -> Outcome {
    let exact_lm = lm(b, 20, 40, 1.0);
    let trunc_lm = lm(b, 20, 80, 1.0);
    let ex = solve(&exact_lm, ModelKind::Exact { alpha: 0.0 });
    let qrm = solve(&trunc_lm, DIPOLE);
    let h10 = solve(&trunc_lm, ROTATED);
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, oracle) in [(ObservableName::NEt, N_ET_ORACLE), (ObservableName::Gamma, GAMMA_ORACLE)] {
        let exact = eigen_average(&Observable::new(name, &exact_lm).unwrap().coulomb, &ex, 0).unwrap();
        let obs = Observable::new(name, &trunc_lm).unwrap();
        let dip = eigen_average(&represent(&obs, FramePrescription::DipoleTruncated, Some(&trunc_lm)).unwrap(), &qrm, 0).unwrap();
        let asc = eigen_average(&represent(&obs, FramePrescription::RotatedFrameAsCoulomb, Some(&trunc_lm)).unwrap(), &h10, 0).unwrap();
        let (e_dip, e_asc) = ((dip - exact).abs(), (asc - exact).abs());
        let drift = [exact, dip, asc]
            .iter()
            .zip(oracle)
            .map(|(v, o)| (v - o).abs())
            .fold(0.0, f64::max);
        pass &= e_asc > 3.0 * e_dip && drift < ORACLE_TOLERANCE;
        detail.push(format!(
            "{name:?}: |as-Coulomb - exact| {e_asc:.4} > 3 x |dipole - exact| {:.4}, oracle drift {drift:.1e}",
            3.0 * e_dip
        ));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_7(b: &MatterBasis) -> Outcome {
    // converged photon cutoff at eta = 1 (the N_ph = 40 residual is 4e-4)
    let (nm, np) = (20, 80);
    let mut worst = 0.0f64;
    for eta in [0.5, 1.0] {
        let l = lm(b, nm, np, eta);
        let f = l.fock();
        let q = CMat::from_fn(np, np, |i, j| linalg::I * (f.a_dag[(i, j)] - f.a[(i, j)]));
        let full = kron(linalg::identity(nm).as_ref(), q.as_ref());
        let head = l.r01_head().unwrap();
        let rotated = head * &full * head.adjoint();
        let corrected = linalg::sandwich(l.t10().unwrap().as_ref(), rotated.as_ref());
        let want = kron(linalg::identity(2).as_ref(), q.as_ref());
        worst = worst.max(max_abs_diff(
            low_block(&corrected, 2, np).as_ref(),
            low_block(&want, 2, np).as_ref(),
        ));
    }
    outcome(
        worst < 1e-5,
        format!("||T10 P R01 Q R01^+ P T10^+ - P Q P||_max = {worst:.2e} (< 1e-5, photon block n < N_ph/2, N_ph = 80, eta in {{0.5, 1}})"),
    )
}

fn criterion_8(b: &MatterBasis) -> Outcome {
    let levels = 8;
    let kappa = 0.05;
    let times: Vec<f64> = (0..=200).map(|k| k as f64).collect();
    let exact_lm = lm(b, 20, 40, 0.5);
    let trunc_lm = lm(b, 20, 80, 0.5);
    let (mut trace, mut min_eig) = (0.0f64, f64::INFINITY);
    for channel in [ObservableName::QEt, ObservableName::POverOmega] {
        let mut systems = vec![(
            solve(&exact_lm, ModelKind::Exact { alpha: 0.0 }),
            Observable::new(channel, &exact_lm).unwrap().coulomb,
        )];
        for frame in [
            FramePrescription::DipoleTruncated,
            FramePrescription::RotatedFrameAsCoulomb,
            FramePrescription::RotatedFrameCorrect,
        ] {
            let obs = Observable::new(channel, &trunc_lm).unwrap();
            systems.push((
                solve(&trunc_lm, frame.model()),
                represent(&obs, frame, Some(&trunc_lm)).unwrap(),
            ));
        }
        for (es, o) in &systems {
            let sys = LindbladSystem::new(es, o, levels, kappa, 1e-8).unwrap();
            let rho0 = basis_state(levels, 1);
            let t = evolve(&sys, &rho0, &times, &[], &IntegratorOptions::default()).unwrap();
            trace = trace.max(t.trace_error);
            min_eig = min_eig.min(t.min_eigenvalue);
        }
    }

    // kappa = 0: eigenstates do not move
    let l = lm(b, 12, 30, 0.5);
    let es = solve(&l, ModelKind::Exact { alpha: 0.0 });
    let q = Observable::new(ObservableName::QEt, &l).unwrap().coulomb;
    let frozen = LindbladSystem::new(&es, &q, levels, 0.0, 1e-8).unwrap();
    let rho0 = basis_state(levels, 3);
    let t = evolve(&frozen, &rho0, &[0.0, 100.0], &[], &IntegratorOptions::default()).unwrap();
    let drift = max_abs_diff(t.states[1].as_ref(), rho0.as_ref());

    // eta = 0, detuned mode: |e0, 1 photon> decays at kappa through Q_ET
    let detuned = LightMatter::with_levels(b, 4, ModeSpec::new(1.3, 20), 0.0, 1).unwrap();
    let es = solve(&detuned, ModelKind::Exact { alpha: 0.0 });
    let q = Observable::new(ObservableName::QEt, &detuned).unwrap().coulomb;
    let free = LindbladSystem::new(&es, &q, 6, kappa, 1e-8).unwrap();
    // levels: e0 (0), e1 (1, at w0 = 1), e0 + one photon (2, at 1.3)
    let rate = decay_rate(&free, 2).unwrap();
    let fit = lindblad::fitted_decay_rate(&free, 2, 40).unwrap();
    let rate_error = (rate - kappa).abs().max((fit - kappa).abs());

    outcome(
        trace < 1e-8 && min_eig > -1e-7 && drift < 1e-9 && rate_error < 1e-6,
        format!("trace deviation {trace:.1e} (< 1e-8), min eigenvalue {min_eig:.1e} (> -1e-7) over 8 fig4 trajectories; kappa=0 drift {drift:.1e}; free-decay rate error {rate_error:.1e} (< 1e-6)"),
    )
}

fn basis_state(n: usize, i: usize) -> CMat {
    CMat::from_fn(n, n, |a, b| if a == i && b == i { linalg::ONE } else { linalg::ZERO })
}

fn criterion_9(b: &MatterBasis) -> Outcome {
    let l = lm(b, 20, 40, 0.5);
    let e0 = solve(&l, ModelKind::Exact { alpha: 0.0 });
    let mut e1 = solve(&l, ModelKind::Exact { alpha: 1.0 });
    let r = l.gauge_unitary(0.0, 1.0).unwrap();
    let reference = r.as_ref() * e0.vectors.subcols(0, 8);
    e1.align_phases(reference.as_ref()).unwrap();
    let mut worst = 0.0f64;
    for channel in [ObservableName::QEt, ObservableName::POverOmega] {
        let obs = Observable::new(channel, &l).unwrap();
        let o1 = represent(&obs, FramePrescription::ExactGauge { alpha: 1.0 }, Some(&l)).unwrap();
        let g0 = rates(&LindbladSystem::new(&e0, &obs.coulomb, 8, 0.05, 1e-8).unwrap(), 5).unwrap();
        let g1 = rates(&LindbladSystem::new(&e1, &o1, 8, 0.05, 1e-8).unwrap(), 5).unwrap();
        let scale = g0.max_abs();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    for m in 0..5 {
                        worst = worst.max((g0.get(i, j, k, m) - g1.get(i, j, k, m)).norm() / scale);
                    }
                }
            }
        }
    }
    outcome(
        worst < 1e-5,
        format!("max |gamma_ijkl(alpha=0) - gamma_ijkl(alpha=1)| / max|gamma| = {worst:.2e} (< 1e-5), i,j,k,l <= 4, eta = 0.5, both channels"),
    )
}

fn cli(args: &[&str], out: &Path) -> (bool, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_qedtrunc"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .expect("spawn CLI");
    (o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())
}

/// Sum of calibration, convergence, fixed cost and the sweep scaled to
/// `points` from the timing lines printed by `run`.
fn projected_seconds(stderr: &str, points: usize) -> f64 {
    let mut total = 0.0;
    for line in stderr.lines() {
        let nums: Vec<f64> = line
            .split(|c: char| !(c.is_ascii_digit() || c == '.'))
            .filter_map(|s| s.parse().ok())
            .collect();
        if line.starts_with("calibration:") {
            total += nums[0];
        } else if line.contains(": timing convergence") {
            // [convergence, sweep, points, fixed]
            let n = nums.len();
            let (conv, sweep, pts, fixed) = (nums[n - 4], nums[n - 3], nums[n - 2], nums[n - 1]);
            total += conv + fixed + sweep / pts * points as f64;
        }
    }
    total
}

fn criterion_10() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("qedtrunc-acceptance-{}", std::process::id()));
    let small = ["--eta-points", "3", "--no-converge", "--matter-levels", "10", "--photon-levels", "24"];
    let mut identical = true;
    for exp in ["fig1b", "fig3", "figS3"] {
        let mut args = vec!["run", exp];
        args.extend(small);
        let dir = tmp.join(exp);
        let snapshot = || {
            let (ok, _) = cli(&args, &dir);
            let mut files: Vec<(std::ffi::OsString, Vec<u8>)> = std::fs::read_dir(&dir)
                .map(|d| d.flatten().map(|e| (e.file_name(), std::fs::read(e.path()).unwrap())).collect())
                .unwrap_or_default();
            files.sort();
            (ok, files)
        };
        let (a_ok, a) = snapshot();
        let (b_ok, b) = snapshot();
        identical &= a_ok && b_ok && !a.is_empty() && a == b;
    }

    let full = std::env::var("QEDTRUNC_FULL_SUITE").is_ok_and(|v| v == "1");
    let clock = Instant::now();
    let (ok, stderr) = if full {
        cli(&["run", "all", "--threads", "1"], &tmp.join("full"))
    } else {
        cli(&["run", "all", "--threads", "1", "--eta-points", "2", "--eta-min", "0.5"], &tmp.join("full"))
    };
    let wall = clock.elapsed().as_secs_f64();
    let minutes = if full { wall } else { projected_seconds(&stderr, 101) } / 60.0;
    let _ = std::fs::remove_dir_all(&tmp);
    let how = if full {
        "measured full suite"
    } else {
        "projected from a two-point converged run scaled to 101 points"
    };
    outcome(
        identical && ok && minutes < 30.0,
        format!("byte-identical CSV and provenance on re-run: {identical}; {how}: {minutes:.1} min on one core (< 30 min)"),
    )
}

fn main() {
    let clock = Instant::now();
    let spec = calibrate_potential_with(TARGET_MU, OMEGA, 30, 2048).expect("calibration");
    let basis = solve_double_well(&spec).expect("matter basis");
    println!("calibrated basis in {:.1} s: x10 = {:.5}, mu = {:.4}", clock.elapsed().as_secs_f64(), basis.x10(), basis.anharmonicity());

    let criteria: [(&str, &dyn Fn() -> Outcome); 10] = [
        ("gauge invariance of the exact theory", &|| criterion_1(&basis)),
        ("Cauchy-Schwarz fidelity bound", &|| criterion_2(&basis)),
        ("Delta operator identities", &|| criterion_3(&basis)),
        ("Delta variation bound", &|| criterion_4(&basis)),
        ("transition-energy accuracy vs absolute error", &|| criterion_5(&basis)),
        ("frame misidentification signal", &|| criterion_6(&basis)),
        ("Q_ET linearity identity", &|| criterion_7(&basis)),
        ("Lindblad contracts", &|| criterion_8(&basis)),
        ("rate gauge invariance", &|| criterion_9(&basis)),
        ("determinism and suite runtime", &criterion_10),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let o = check();
        failures += usize::from(!o.pass);
        println!(
            "criterion {:>2} {} {name}: {} [{:.1} s]",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            clock.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
