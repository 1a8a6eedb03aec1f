//! Figure experiments: each maps a coupling point to rows of one or more
//! tables. Cutoffs are escalated at the largest coupling of the grid and the
//! converged triple is used for every row.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use qedtrunc::analysis::{
    self, cs_bound, eigen_average, eigensolve, fidelity, represent, saturating_vector, thermal_average, EigenSystem,
    FramePrescription, Observable, ObservableName,
};
use qedtrunc::fockspace::{projector, CompositeOperator, ModeSpec};
use qedtrunc::gauge::{DeltaForm, LightMatter, ModelKind};
use qedtrunc::lindblad::{self, IntegratorOptions, LindbladSystem};
use qedtrunc::linalg::{self, CMat};
use qedtrunc::matter1d::{calibrate_potential_with, solve_double_well, MatterBasis, MatterSpec};
use qedtrunc::{Error, Result};

use crate::config::{CutoffTriple, ExperimentConfig};

pub const TRACE_LIMIT: f64 = 1e-8;
pub const POSITIVITY_LIMIT: f64 = -1e-7;
const FIT_SAMPLES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Experiment {
    Fig1b,
    Fig2,
    Fig3,
    Fig4a,
    Fig4b,
    FigS1,
    FigS2,
    FigS3,
    FigS4,
    FigS5,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Fig1b,
        Experiment::Fig2,
        Experiment::Fig3,
        Experiment::Fig4a,
        Experiment::Fig4b,
        Experiment::FigS1,
        Experiment::FigS2,
        Experiment::FigS3,
        Experiment::FigS4,
        Experiment::FigS5,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Fig1b => "fig1b",
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4a => "fig4a",
            Experiment::Fig4b => "fig4b",
            Experiment::FigS1 => "figS1",
            Experiment::FigS2 => "figS2",
            Experiment::FigS3 => "figS3",
            Experiment::FigS4 => "figS4",
            Experiment::FigS5 => "figS5",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Experiment::Fig1b => "ground-state fidelity bounds ||P E_alpha^0||^2 vs eta, Coulomb and dipole gauge",
            Experiment::Fig2 => "thermal <n_ET> vs eta per model/frame and temperature, plus the T=0 inset",
            Experiment::Fig3 => "first three transition energies: exact, QRM, h1(0) read as Coulomb gauge",
            Experiment::Fig4a => "<n_ET>(t) and decay rate vs eta, loss through Q_ET",
            Experiment::Fig4b => "<n_ET>(t) and decay rate vs eta, loss through p/omega",
            Experiment::FigS1 => "dipole-side ground fidelities H1^2, PH1P against the bound",
            Experiment::FigS2 => "Coulomb-side ground fidelities H0^2, h1(0) against the bound, with inset ratio",
            Experiment::FigS3 => "<Delta>_i - <Delta>_0 for i = 1..3 in QRM eigenstates",
            Experiment::FigS4 => "ground-state excited population <Gamma>_0 per prescription",
            Experiment::FigS5 => "six lowest energies and normalized transitions: exact, PH1P, H1^2",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub units: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cutoffs {
    pub matter_levels: usize,
    pub photon_levels: usize,
    pub truncated_photon_levels: usize,
}

impl From<CutoffTriple> for Cutoffs {
    fn from(c: CutoffTriple) -> Self {
        Cutoffs {
            matter_levels: c[0],
            photon_levels: c[1],
            truncated_photon_levels: c[2],
        }
    }
}

/// Calibrated matter basis shared by every experiment of one invocation.
pub struct Setup {
    pub config: ExperimentConfig,
    pub spec: MatterSpec,
    pub basis: MatterBasis,
}

impl Setup {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let spec = calibrate_potential_with(
            config.target_mu,
            config.omega,
            config.max_matter_levels(),
            config.grid_points,
        )?;
        let basis = solve_double_well(&spec)?;
        Ok(Setup { config, spec, basis })
    }

    fn mode(&self, cutoff: usize) -> ModeSpec {
        ModeSpec {
            omega: self.config.omega,
            volume: self.config.volume,
            cutoff,
        }
    }

    fn point(&self, eta: f64, c: Cutoffs) -> Result<Point> {
        let m = self.config.truncation;
        Ok(Point {
            omega: self.config.omega,
            exact: LightMatter::with_levels(&self.basis, c.matter_levels, self.mode(c.photon_levels), eta, m)?,
            trunc: LightMatter::with_levels(
                &self.basis,
                c.matter_levels,
                self.mode(c.truncated_photon_levels),
                eta,
                m,
            )?,
        })
    }
}

/// One coupling value. `exact` carries the photon cutoff of the exact theory;
/// `trunc` the (larger, cheaper) one used for truncated models.
struct Point {
    omega: f64,
    exact: LightMatter,
    trunc: LightMatter,
}

const DIPOLE: ModelKind = ModelKind::Standard { alpha: 1.0 };
const NAIVE: ModelKind = ModelKind::Standard { alpha: 0.0 };
const ROTATED: ModelKind = ModelKind::RotatedClass { source: 1.0, target: 0.0 };

impl Point {
    fn exact_system(&self, alpha: f64) -> Result<EigenSystem> {
        eigensolve(&self.exact.build_model(ModelKind::Exact { alpha })?)
    }

    fn model(lm: &LightMatter, kind: ModelKind) -> Result<EigenSystem> {
        eigensolve(&lm.build_model(kind)?)
    }

    fn operator(lm: &LightMatter, name: ObservableName, frame: FramePrescription) -> Result<CompositeOperator> {
        represent(&Observable::new(name, lm)?, frame, Some(lm))
    }
}

/// Ground/thermal averages of `name` for the prescriptions exact, dipole
/// truncated, h1(0) as Coulomb, naive Coulomb and h1(0) correct.
struct FrameAverages {
    systems: Vec<EigenSystem>,
    operators: Vec<CompositeOperator>,
}

impl FrameAverages {
    fn new(p: &Point, name: ObservableName) -> Result<Self> {
        let frames = [
            FramePrescription::DipoleTruncated,
            FramePrescription::RotatedFrameAsCoulomb,
            FramePrescription::NaiveCoulombTruncated,
            FramePrescription::RotatedFrameCorrect,
        ];
        let mut systems = vec![p.exact_system(0.0)?];
        let mut operators = vec![Observable::new(name, &p.exact)?.coulomb];
        let obs = Observable::new(name, &p.trunc)?;
        for f in frames {
            systems.push(Point::model(&p.trunc, f.model())?);
            operators.push(represent(&obs, f, Some(&p.trunc))?);
        }
        Ok(FrameAverages { systems, operators })
    }

    fn at(&self, temperature: f64) -> Result<Vec<f64>> {
        self.systems
            .iter()
            .zip(&self.operators)
            .map(|(es, op)| thermal_average(op, es, temperature))
            .collect()
    }
}

const FRAME_COLUMNS: [&str; 5] = [
    "exact",
    "dipole_truncated",
    "rotated_as_coulomb",
    "naive_coulomb",
    "rotated_correct",
];

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn numbered(prefix: &str, range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| format!("{prefix}_{i}")).collect()
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Table layouts (name suffix, units, columns) for the η-sweep tables.
fn layouts(exp: Experiment, config: &ExperimentConfig) -> Vec<(String, String, Vec<String>)> {
    let name = exp.name();
    let energy = "energies in units of omega";
    match exp {
        Experiment::Fig1b => vec![(
            name.into(),
            "eta dimensionless; bounds are probabilities".into(),
            columns(&["eta", "bound_coulomb", "bound_dipole"]),
        )],
        Experiment::Fig2 => {
            let mut main = columns(&["eta", "temperature"]);
            main.extend(columns(&FRAME_COLUMNS));
            let mut inset = columns(&["eta"]);
            inset.extend(columns(&FRAME_COLUMNS));
            inset.push("delta_ground".into());
            let _ = config;
            vec![
                (name.into(), "eta dimensionless; temperature in units of omega (k_B = 1); <n_ET> photons".into(), main),
                (format!("{name}_inset"), "eta dimensionless; T = 0 ground-state <n_ET> photons".into(), inset),
            ]
        }
        Experiment::Fig3 => {
            let mut c = columns(&["eta"]);
            c.extend(numbered("exact", 1..4));
            c.extend(numbered("qrm", 1..4));
            c.extend(numbered("rotated_as_coulomb", 1..4));
            c.push("crossing_flag".into());
            vec![(name.into(), format!("eta dimensionless; (E_i - E_0) {energy}"), c)]
        }
        Experiment::Fig4a | Experiment::Fig4b => {
            let mut c = columns(&["eta"]);
            for m in ["exact", "dipole_truncated", "rotated_as_coulomb", "rotated_correct"] {
                c.push(format!("{m}_rate"));
                c.push(format!("{m}_fit"));
            }
            c.push("crossing_flag".into());
            vec![(
                format!("{name}_rates"),
                "eta dimensionless; decay rates of S_1 in units of omega".into(),
                c,
            )]
        }
        Experiment::FigS1 => vec![(
            name.into(),
            "eta dimensionless; fidelities are probabilities".into(),
            columns(&["eta", "fidelity_standard", "fidelity_projected", "bound_dipole", "saturation"]),
        )],
        Experiment::FigS2 => vec![(
            name.into(),
            "eta dimensionless; fidelities are probabilities".into(),
            columns(&["eta", "fidelity_naive", "fidelity_rotated", "bound_coulomb", "inset_ratio", "saturation"]),
        )],
        Experiment::FigS3 => vec![(
            name.into(),
            "eta dimensionless; Delta differences in photons".into(),
            columns(&["eta", "delta_1", "delta_2", "delta_3"]),
        )],
        Experiment::FigS4 => {
            let mut c = columns(&["eta"]);
            c.extend(columns(&FRAME_COLUMNS));
            vec![(name.into(), "eta dimensionless; <Gamma>_0 is a probability".into(), c)]
        }
        Experiment::FigS5 => {
            let mut e = columns(&["eta"]);
            e.extend(numbered("exact", 0..6));
            e.extend(numbered("projected", 0..6));
            e.extend(numbered("standard", 0..6));
            let mut t = columns(&["eta"]);
            t.extend(numbered("exact", 1..6));
            t.extend(numbered("projected", 1..6));
            t.extend(numbered("standard", 1..6));
            t.push("crossing_flag".into());
            vec![
                (format!("{name}_energies"), format!("eta dimensionless; E_i {energy}"), e),
                (format!("{name}_transitions"), format!("eta dimensionless; (E_i - E_0) {energy}"), t),
            ]
        }
    }
}

type Rows = Vec<Vec<Vec<f64>>>;

fn sweep_rows(exp: Experiment, setup: &Setup, c: Cutoffs, eta: f64) -> Result<Rows> {
    let p = setup.point(eta, c)?;
    let w = p.omega;
    match exp {
        Experiment::Fig1b => {
            let (proj, _) = projector(p.exact.space());
            let b0 = cs_bound(&p.exact_system(0.0)?.state(0), &proj)?;
            let b1 = cs_bound(&p.exact_system(1.0)?.state(0), &proj)?;
            Ok(vec![vec![vec![eta, b0, b1]]])
        }
        Experiment::Fig2 => {
            let avg = FrameAverages::new(&p, ObservableName::NEt)?;
            let mut main = Vec::new();
            for &t in &setup.config.temperatures {
                let mut row = vec![eta, t];
                row.extend(avg.at(t)?);
                main.push(row);
            }
            let mut inset = vec![eta];
            inset.extend(avg.at(0.0)?);
            let delta = p.trunc.delta_operator(DeltaForm::HamiltonianDifference)?;
            inset.push(eigen_average(&delta, &avg.systems[1], 0)?);
            Ok(vec![main, vec![inset]])
        }
        Experiment::Fig3 => {
            let ex = p.exact_system(0.0)?;
            let qrm = Point::model(&p.trunc, DIPOLE)?;
            let rot = Point::model(&p.trunc, ROTATED)?;
            let h0 = Point::operator(&p.trunc, ObservableName::Energy, FramePrescription::RotatedFrameAsCoulomb)?;
            let e0 = eigen_average(&h0, &rot, 0)?;
            let mut row = vec![eta];
            row.extend(ex.transition_energies(3, w));
            row.extend(qrm.transition_energies(3, w));
            for i in 1..4 {
                row.push((eigen_average(&h0, &rot, i)? - e0) / w);
            }
            let crossing = (1..4).any(|i| ex.near_degenerate(i, w) || qrm.near_degenerate(i, w));
            row.push(flag(crossing));
            Ok(vec![vec![row]])
        }
        Experiment::Fig4a | Experiment::Fig4b => {
            let mut row = vec![eta];
            let mut crossing = false;
            for m in dissipative_models(&p, channel(exp), setup)? {
                crossing |= m.system_levels_degenerate;
                row.push(lindblad::decay_rate(&m.system, 1)?);
                row.push(lindblad::fitted_decay_rate(&m.system, 1, FIT_SAMPLES).unwrap_or(f64::NAN));
            }
            row.push(flag(crossing));
            Ok(vec![vec![row]])
        }
        Experiment::FigS1 => {
            let ex = p.exact_system(1.0)?;
            let s = ex.state(0);
            let (proj, _) = projector(p.exact.space());
            let std = Point::model(&p.exact, DIPOLE)?;
            let prj = Point::model(&p.exact, ModelKind::Projected { alpha: 1.0 })?;
            let bound = cs_bound(&s, &proj)?;
            let sat = fidelity(&saturating_vector(&s, &proj)?, &s)?;
            Ok(vec![vec![vec![
                eta,
                fidelity(&std.state(0), &s)?,
                fidelity(&prj.state(0), &s)?,
                bound,
                sat,
            ]]])
        }
        Experiment::FigS2 => {
            let ex = p.exact_system(0.0)?;
            let s = ex.state(0);
            let (proj, _) = projector(p.exact.space());
            let naive = Point::model(&p.exact, NAIVE)?;
            let rot = Point::model(&p.exact, ROTATED)?;
            let bound = cs_bound(&s, &proj)?;
            let f_rot = fidelity(&rot.state(0), &s)?;
            let sat = fidelity(&saturating_vector(&s, &proj)?, &s)?;
            Ok(vec![vec![vec![
                eta,
                fidelity(&naive.state(0), &s)?,
                f_rot,
                bound,
                f_rot / bound,
                sat,
            ]]])
        }
        Experiment::FigS3 => {
            let mut row = vec![eta];
            row.extend(analysis::delta_variation(&p.trunc, 3)?);
            Ok(vec![vec![row]])
        }
        Experiment::FigS4 => {
            let avg = FrameAverages::new(&p, ObservableName::Gamma)?;
            let mut row = vec![eta];
            row.extend(avg.at(0.0)?);
            Ok(vec![vec![row]])
        }
        Experiment::FigS5 => {
            let ex = p.exact_system(0.0)?;
            let prj = Point::model(&p.trunc, ModelKind::Projected { alpha: 1.0 })?;
            let std = Point::model(&p.trunc, DIPOLE)?;
            let mut energies = vec![eta];
            let mut trans = vec![eta];
            for es in [&ex, &prj, &std] {
                energies.extend(es.values[..6].iter().map(|e| e / w));
                trans.extend(es.transition_energies(5, w));
            }
            let crossing = (0..6).any(|i| ex.near_degenerate(i, w) || std.near_degenerate(i, w));
            trans.push(flag(crossing));
            Ok(vec![vec![energies], vec![trans]])
        }
    }
}

fn channel(exp: Experiment) -> ObservableName {
    match exp {
        Experiment::Fig4b => ObservableName::POverOmega,
        _ => ObservableName::QEt,
    }
}

struct DissipativeModel {
    system: LindbladSystem,
    /// `n_ET` in the retained eigenbasis.
    number: CMat,
    system_levels_degenerate: bool,
}

/// Exact, dipole-truncated, h1(0)-as-Coulomb and h1(0)-correct master
/// equations for loss through `channel`.
fn dissipative_models(p: &Point, channel: ObservableName, setup: &Setup) -> Result<Vec<DissipativeModel>> {
    let cfg = &setup.config;
    let levels = cfg.dynamics_levels;
    let mut out = Vec::with_capacity(4);
    let exact = p.exact_system(0.0)?;
    let o = Observable::new(channel, &p.exact)?.coulomb;
    let n = Observable::new(ObservableName::NEt, &p.exact)?.coulomb;
    out.push(dissipative(&exact, &o, &n, levels, cfg, p.omega)?);
    let obs_o = Observable::new(channel, &p.trunc)?;
    let obs_n = Observable::new(ObservableName::NEt, &p.trunc)?;
    for frame in [
        FramePrescription::DipoleTruncated,
        FramePrescription::RotatedFrameAsCoulomb,
        FramePrescription::RotatedFrameCorrect,
    ] {
        let es = Point::model(&p.trunc, frame.model())?;
        let o = represent(&obs_o, frame, Some(&p.trunc))?;
        let n = represent(&obs_n, frame, Some(&p.trunc))?;
        out.push(dissipative(&es, &o, &n, levels, cfg, p.omega)?);
    }
    Ok(out)
}

fn dissipative(
    es: &EigenSystem,
    o: &CompositeOperator,
    n: &CompositeOperator,
    levels: usize,
    cfg: &ExperimentConfig,
    omega: f64,
) -> Result<DissipativeModel> {
    Ok(DissipativeModel {
        system: LindbladSystem::new(es, o, levels, cfg.kappa * omega, cfg.tolerances.gap * omega)?,
        number: lindblad::project_to_eigenbasis(es, n, levels)?,
        system_levels_degenerate: es.near_degenerate(1, omega),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryCheck {
    pub model: String,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

fn trajectory_table(exp: Experiment, setup: &Setup, c: Cutoffs) -> Result<(Table, Vec<TrajectoryCheck>)> {
    let cfg = &setup.config;
    let p = setup.point(cfg.eta_dynamics, c)?;
    let models = dissipative_models(&p, channel(exp), setup)?;
    let times: Vec<f64> = (0..cfg.t_points)
        .map(|k| cfg.t_max * k as f64 / (cfg.t_points - 1) as f64 / p.omega)
        .collect();
    let names = ["exact", "dipole_truncated", "rotated_as_coulomb", "rotated_correct"];
    let mut series = Vec::new();
    let mut checks = Vec::new();
    for (m, name) in models.iter().zip(names) {
        let k = m.system.levels();
        let rho0 = CMat::from_fn(k, k, |a, b| if a == 1 && b == 1 { linalg::ONE } else { linalg::ZERO });
        let traj = lindblad::evolve(
            &m.system,
            &rho0,
            &times,
            std::slice::from_ref(&m.number),
            &IntegratorOptions::default(),
        )?;
        if traj.trace_error >= TRACE_LIMIT || traj.min_eigenvalue <= POSITIVITY_LIMIT {
            return Err(Error::StepFailure(format!(
                "{name}: trace error {:.3e}, minimum eigenvalue {:.3e}",
                traj.trace_error, traj.min_eigenvalue
            )));
        }
        checks.push(TrajectoryCheck {
            model: name.into(),
            trace_error: traj.trace_error,
            min_eigenvalue: traj.min_eigenvalue,
        });
        series.push(traj.expectations.into_iter().next().expect("one observable requested"));
    }
    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut r = vec![t * p.omega];
            r.extend(series.iter().map(|s| s[k]));
            r
        })
        .collect();
    let mut cols = columns(&["t"]);
    cols.extend(columns(&names));
    Ok((
        Table {
            name: format!("{}_trajectory", exp.name()),
            units: format!("t in units of 1/omega; <n_ET> photons; eta = {}", cfg.eta_dynamics),
            columns: cols,
            rows,
        },
        checks,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRecord {
    pub escalated: bool,
    pub probe_eta: f64,
    pub report: Option<analysis::ConvergenceReport<CutoffTriple>>,
}

/// Wall-clock split of one run; reported on stderr, never written to files.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timing {
    pub convergence: f64,
    pub sweep: f64,
    pub points: usize,
    pub fixed: f64,
}

pub struct RunOutput {
    pub tables: Vec<Table>,
    pub timing: Timing,
    pub cutoffs: Cutoffs,
    pub convergence: ConvergenceRecord,
    pub trajectory_checks: Vec<TrajectoryCheck>,
}

fn flatten(rows: Rows) -> Vec<f64> {
    rows.into_iter().flatten().flatten().collect()
}

pub fn run(exp: Experiment, setup: &Setup) -> Result<RunOutput> {
    let cfg = &setup.config;
    let grid = cfg.eta_grid();
    let probe_eta = *grid.last().ok_or_else(|| Error::InvalidInput("empty coupling grid".into()))?;
    let schedule = cfg.schedule();
    let clock = Instant::now();
    let (cutoffs, convergence) = if cfg.converge {
        let report = analysis::converge(&schedule, cfg.tolerances.convergence, |c| {
            let mut v = flatten(sweep_rows(exp, setup, c.into(), probe_eta)?);
            if matches!(exp, Experiment::Fig4a | Experiment::Fig4b) {
                let (t, _) = trajectory_table(exp, setup, c.into())?;
                v.extend(t.rows.last().into_iter().flatten());
            }
            Ok(v)
        })?;
        let c: Cutoffs = report.cutoffs.into();
        (
            c,
            ConvergenceRecord {
                escalated: true,
                probe_eta,
                report: Some(report),
            },
        )
    } else {
        (
            schedule[0].into(),
            ConvergenceRecord {
                escalated: false,
                probe_eta,
                report: None,
            },
        )
    };

    let mut timing = Timing {
        convergence: clock.elapsed().as_secs_f64(),
        points: grid.len(),
        ..Timing::default()
    };
    let clock = Instant::now();
    let per_point: Vec<Rows> = grid
        .par_iter()
        .map(|&eta| sweep_rows(exp, setup, cutoffs, eta))
        .collect::<Result<_>>()?;
    let mut tables: Vec<Table> = layouts(exp, cfg)
        .into_iter()
        .map(|(name, units, columns)| Table {
            name,
            units,
            columns,
            rows: Vec::new(),
        })
        .collect();
    for point in per_point {
        for (table, rows) in tables.iter_mut().zip(point) {
            table.rows.extend(rows);
        }
    }
    timing.sweep = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let mut trajectory_checks = Vec::new();
    if matches!(exp, Experiment::Fig4a | Experiment::Fig4b) {
        let (t, checks) = trajectory_table(exp, setup, cutoffs)?;
        tables.insert(0, t);
        trajectory_checks = checks;
    }
    for t in &tables {
        debug_assert!(t.rows.iter().all(|r| r.len() == t.columns.len()), "{}", t.name);
    }
    timing.fixed = clock.elapsed().as_secs_f64();
    Ok(RunOutput {
        tables,
        timing,
        cutoffs,
        convergence,
        trajectory_checks,
    })
}
