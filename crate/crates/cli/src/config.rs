use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const OUTPUT_DIR_ENV: &str = "QEDTRUNC_OUTPUT_DIR";

pub const MAX_MATTER_LEVELS: usize = 60;
pub const MAX_PHOTON_LEVELS: usize = 120;
pub const MAX_TRUNCATED_PHOTON_LEVELS: usize = 240;
pub const MAX_DYNAMICS_LEVELS: usize = qedtrunc::lindblad::MAX_LEVELS;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub convergence: f64,
    pub gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            convergence: qedtrunc::analysis::CONVERGENCE_TOLERANCE,
            gap: qedtrunc::lindblad::DEFAULT_GAP_TOLERANCE,
        }
    }
}

/// `[N_mat, N_ph, N_ph for truncated models]`
pub type CutoffTriple = [usize; 3];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_points: usize,
    /// Explicit grid; replaces `eta_min/eta_max/eta_points` when present.
    pub eta: Option<Vec<f64>>,
    /// Temperatures in units of ω.
    pub temperatures: Vec<f64>,
    pub t_max: f64,
    pub t_points: usize,
    pub kappa: f64,
    pub eta_dynamics: f64,
    pub truncation: usize,
    pub target_mu: f64,
    pub omega: f64,
    pub volume: f64,
    pub grid_points: usize,
    /// Cutoffs used when `converge` is false.
    pub matter_levels: usize,
    pub photon_levels: usize,
    pub truncated_photon_levels: usize,
    pub dynamics_levels: usize,
    pub converge: bool,
    pub cutoff_schedule: Vec<CutoffTriple>,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            eta_min: 0.0,
            eta_max: 1.0,
            eta_points: 101,
            eta: None,
            temperatures: vec![0.25, 0.5, 1.0],
            t_max: 200.0,
            t_points: 201,
            kappa: 0.05,
            eta_dynamics: 0.5,
            truncation: 1,
            target_mu: 70.0,
            omega: 1.0,
            volume: 1.0,
            grid_points: qedtrunc::matter1d::DEFAULT_GRID_POINTS,
            matter_levels: qedtrunc::matter1d::DEFAULT_LEVELS,
            photon_levels: 40,
            truncated_photon_levels: 80,
            dynamics_levels: qedtrunc::lindblad::DEFAULT_LEVELS,
            converge: true,
            cutoff_schedule: vec![[12, 30, 40], [16, 40, 60], [20, 50, 80], [24, 60, 100], [30, 70, 120]],
            tolerances: Tolerances::default(),
            output_dir: PathBuf::from("output"),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

/// Merges `overrides` into the top level of the JSON document `source` and
/// deserializes the result. Errors carry line numbers where available.
pub fn load(source: Option<&str>, overrides: &Map<String, Value>) -> Result<ExperimentConfig, Vec<Issue>> {
    let mut doc = match source {
        Some(text) => serde_json::from_str::<Value>(text).map_err(|e| {
            vec![Issue {
                line: Some(e.line()),
                key: "<document>".into(),
                message: e.to_string(),
            }]
        })?,
        None => Value::Object(Map::new()),
    };
    let obj = doc.as_object_mut().ok_or_else(|| {
        vec![Issue {
            line: Some(1),
            key: "<document>".into(),
            message: "configuration must be a JSON object".into(),
        }]
    })?;
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(doc).map_err(|e| {
        let msg = e.to_string();
        let key = msg.split('`').nth(1).unwrap_or("<document>").to_owned();
        vec![Issue {
            line: source.and_then(|s| key_line(s, &key)),
            key,
            message: msg,
        }]
    })
}

/// 1-based line of the first occurrence of `"key"` in `source`.
pub fn key_line(source: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    source.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn eta_grid(&self) -> Vec<f64> {
        if let Some(g) = &self.eta {
            return g.clone();
        }
        match self.eta_points {
            0 => return Vec::new(),
            1 => return vec![self.eta_min],
            _ => {}
        }
        let step = (self.eta_max - self.eta_min) / (self.eta_points - 1) as f64;
        (0..self.eta_points).map(|k| self.eta_min + step * k as f64).collect()
    }

    /// Cutoff sequence walked by the convergence escalator; a single entry
    /// when escalation is off.
    pub fn schedule(&self) -> Vec<CutoffTriple> {
        if self.converge {
            self.cutoff_schedule.clone()
        } else {
            vec![[self.matter_levels, self.photon_levels, self.truncated_photon_levels]]
        }
    }

    /// Invariant checks; `source` is used to attach line numbers.
    pub fn validate(&self, source: Option<&str>) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| {
            issues.push(Issue {
                line: source.and_then(|s| key_line(s, key)),
                key: key.to_owned(),
                message,
            })
        };

        let grid = self.eta_grid();
        let grid_key = if self.eta.is_some() { "eta" } else { "eta_points" };
        if grid.is_empty() {
            bad(grid_key, "coupling grid is empty".into());
        }
        if grid.iter().any(|e| !e.is_finite() || *e < 0.0) {
            bad(grid_key, "coupling values must be finite and non-negative".into());
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            bad(grid_key, "coupling grid must be strictly ascending".into());
        }
        if self.eta.is_none() && self.eta_points > 1 && !(self.eta_max > self.eta_min) {
            bad("eta_max", "eta_max must exceed eta_min".into());
        }
        if self.temperatures.iter().any(|t| !t.is_finite() || *t < 0.0) {
            bad("temperatures", "temperatures must be finite and non-negative".into());
        }
        if !(self.t_max > 0.0) || self.t_points < 2 {
            bad("t_max", "time grid needs t_max > 0 and t_points >= 2".into());
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            bad("kappa", "kappa must be positive and finite".into());
        }
        if !(self.eta_dynamics >= 0.0) || !self.eta_dynamics.is_finite() {
            bad("eta_dynamics", "eta_dynamics must be finite and non-negative".into());
        }
        if self.truncation < 1 {
            bad("truncation", "truncation M must be at least 1".into());
        }
        if !(self.target_mu > 0.0) {
            bad("target_mu", "target anharmonicity must be positive".into());
        }
        if !(self.omega > 0.0) || !(self.volume > 0.0) {
            bad("omega", "mode frequency and volume must be positive".into());
        }
        if self.grid_points < 256 || self.grid_points % 2 != 0 {
            bad("grid_points", "grid_points must be even and at least 256".into());
        }
        if !(self.tolerances.convergence > 0.0) || !(self.tolerances.gap > 0.0) {
            bad("tolerances", "tolerances must be positive".into());
        }
        if self.dynamics_levels < 2 || self.dynamics_levels > MAX_DYNAMICS_LEVELS {
            bad(
                "dynamics_levels",
                format!("dynamics_levels must lie in 2..={MAX_DYNAMICS_LEVELS}"),
            );
        }
        let schedule_key = if self.converge { "cutoff_schedule" } else { "matter_levels" };
        let schedule = self.schedule();
        if schedule.is_empty() {
            bad(schedule_key, "cutoff schedule is empty".into());
        }
        if self.converge && schedule.len() < 2 {
            bad(schedule_key, "convergence needs at least two cutoff entries".into());
        }
        for &[nm, np, nt] in &schedule {
            if nm > MAX_MATTER_LEVELS {
                bad(schedule_key, format!("N_mat = {nm} exceeds the ceiling {MAX_MATTER_LEVELS}; lower it or disable escalation"));
            }
            if nm < self.truncation + 1 {
                bad(schedule_key, format!("N_mat = {nm} is smaller than M + 1 = {}", self.truncation + 1));
            }
            if np > MAX_PHOTON_LEVELS {
                bad(
                    if self.converge { schedule_key } else { "photon_levels" },
                    format!("N_ph = {np} exceeds the ceiling {MAX_PHOTON_LEVELS}; reduce the photon cutoff or the eta range"),
                );
            }
            if nt > MAX_TRUNCATED_PHOTON_LEVELS {
                bad(
                    if self.converge { schedule_key } else { "truncated_photon_levels" },
                    format!("truncated-model N_ph = {nt} exceeds the ceiling {MAX_TRUNCATED_PHOTON_LEVELS}"),
                );
            }
            if np < qedtrunc::fockspace::MIN_PHOTON_CUTOFF || nt < qedtrunc::fockspace::MIN_PHOTON_CUTOFF {
                bad(schedule_key, format!("photon cutoffs must be at least {}", qedtrunc::fockspace::MIN_PHOTON_CUTOFF));
            }
            if self.dynamics_levels > 2 * np.min(nt) {
                bad("dynamics_levels", "dynamics_levels exceeds the truncated-model dimension".into());
            }
        }
        issues
    }

    pub fn max_matter_levels(&self) -> usize {
        self.schedule().iter().map(|c| c[0]).max().unwrap_or(self.matter_levels)
    }
}
