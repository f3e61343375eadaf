use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ProjectionMode;
use crate::reader::{DetectorMode, DEFAULT_EPSILON, DEFAULT_MAX_ITERS};
use crate::scene::{Point, Scene};
use crate::waveform::{make_phase_plan, PhasePlan};

/// Scenario parameters. Every key is optional in the JSON file; missing keys
/// take the reference-layout defaults and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub pan_a_center: Point,
    pub pan_b_center: Point,
    pub m: usize,
    pub n: usize,
    pub d_ant: f64,
    pub lambda: f64,
    pub bd_position: Point,
    pub reflector_y: f64,
    pub g_smc: f64,

    pub j_p: usize,
    pub tau_p: usize,
    pub j_d: usize,
    pub tau_d: usize,
    /// Optional P2 reflection pattern (0 or 1 per slot); alternating when absent.
    pub gamma_pattern: Option<Vec<u8>>,

    pub k: usize,
    pub snr_p_db: f64,
    pub snr_d_db: f64,
    pub projection_mode: ProjectionMode,
    pub detector_mode: DetectorMode,
    /// Rescale g_AC and g_CB to unit mean gain. `None` uses the preset's choice.
    pub normalize_backscatter: Option<bool>,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Monte Carlo trials. `None` gives 1000 for dynamic range and 10000 per
    /// hypothesis for ROC curves.
    pub trials: Option<usize>,
    pub seed: u64,
    pub theta_grid_deg: Vec<f64>,
    pub bd_y_sweep: Vec<f64>,
    /// ROC thresholds as `ln(eta)`, ascending. Empty selects a data-driven grid.
    pub thresholds: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            pan_a_center: [0.0, 0.0],
            pan_b_center: [6.0, 0.0],
            m: 16,
            n: 16,
            d_ant: 0.5,
            lambda: 0.1,
            bd_position: [3.0, 10.0],
            reflector_y: -4.0,
            g_smc: 0.5,
            j_p: 1,
            tau_p: 16,
            j_d: 2,
            tau_d: 16,
            gamma_pattern: None,
            k: 3,
            snr_p_db: 20.0,
            snr_d_db: 2.0,
            projection_mode: ProjectionMode::Estimated,
            detector_mode: DetectorMode::Full,
            normalize_backscatter: None,
            epsilon: DEFAULT_EPSILON,
            max_iters: DEFAULT_MAX_ITERS,
            trials: None,
            seed: 0,
            theta_grid_deg: (-90..=90).map(f64::from).collect(),
            bd_y_sweep: (0..=120).map(|i| i as f64 * 0.25).collect(),
            thresholds: Vec::new(),
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn scene(&self) -> Scene {
        Scene {
            pan_a_center: self.pan_a_center,
            pan_b_center: self.pan_b_center,
            m: self.m,
            n: self.n,
            d_ant: self.d_ant,
            lambda: self.lambda,
            bd_position: self.bd_position,
            reflector_y: self.reflector_y,
            g_smc: self.g_smc,
        }
    }

    pub fn plan(&self) -> Result<PhasePlan> {
        match &self.gamma_pattern {
            Some(p) => PhasePlan::with_pattern(
                self.j_p,
                self.tau_p,
                self.tau_d,
                &p.iter().map(|&g| g == 1).collect::<Vec<_>>(),
            ),
            None => make_phase_plan(self.j_p, self.tau_p, self.j_d, self.tau_d),
        }
    }

    /// Checks every constraint, naming the offending key and bound.
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("m", self.m),
            ("n", self.n),
            ("j_p", self.j_p),
            ("j_d", self.j_d),
            ("max_iters", self.max_iters),
        ] {
            if v == 0 {
                return Err(bad(key, "must be >= 1"));
            }
        }
        if self.tau_p < self.n {
            return Err(bad(
                "tau_p",
                format!("tau_p >= N required ({} < {})", self.tau_p, self.n),
            ));
        }
        if self.tau_d < self.m {
            return Err(bad(
                "tau_d",
                format!("tau_d >= M required ({} < {})", self.tau_d, self.m),
            ));
        }
        if self.k >= self.m {
            return Err(bad(
                "k",
                format!("K < M required ({} >= {})", self.k, self.m),
            ));
        }
        if self.k > self.n {
            return Err(bad(
                "k",
                format!("K <= N required ({} > {})", self.k, self.n),
            ));
        }
        for (key, v) in [("d_ant", self.d_ant), ("lambda", self.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, format!("must be > 0, got {v}")));
            }
        }
        for (key, v) in [
            ("reflector_y", self.reflector_y),
            ("g_smc", self.g_smc),
            ("snr_p_db", self.snr_p_db),
            ("snr_d_db", self.snr_d_db),
        ] {
            finite(key, v)?;
        }
        for (key, p) in [
            ("pan_a_center", self.pan_a_center),
            ("pan_b_center", self.pan_b_center),
            ("bd_position", self.bd_position),
        ] {
            finite(key, p[0])?;
            finite(key, p[1])?;
        }
        if !(self.epsilon > 0.0) {
            return Err(bad("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if self.trials == Some(0) {
            return Err(bad("trials", "must be >= 1"));
        }
        if let Some(p) = &self.gamma_pattern {
            if p.len() != self.j_d {
                return Err(bad(
                    "gamma_pattern",
                    format!("length {} != j_d = {}", p.len(), self.j_d),
                ));
            }
            if p.iter().any(|&g| g > 1) {
                return Err(bad("gamma_pattern", "entries must be 0 or 1"));
            }
            if !p.contains(&0) || !p.contains(&1) {
                return Err(bad("gamma_pattern", "needs at least one 0 and one 1"));
            }
        } else if !self.j_d.is_multiple_of(2) {
            return Err(bad(
                "j_d",
                format!("must be even for the alternating pattern, got {}", self.j_d),
            ));
        }
        if self.theta_grid_deg.is_empty() {
            return Err(bad("theta_grid_deg", "must not be empty"));
        }
        if self
            .theta_grid_deg
            .iter()
            .any(|t| !(-90.0..=90.0).contains(t))
        {
            return Err(bad("theta_grid_deg", "angles must lie in [-90, 90]"));
        }
        let scene_key = if self.bd_position[1] <= self.reflector_y {
            "bd_position"
        } else {
            "reflector_y"
        };
        self.scene()
            .validate()
            .map_err(|e| bad(scene_key, e.to_string()))?;
        if self.bd_y_sweep.is_empty() {
            return Err(bad("bd_y_sweep", "must not be empty"));
        }
        for &y in &self.bd_y_sweep {
            finite("bd_y_sweep", y)?;
            let s = Scene {
                bd_position: [self.bd_position[0], y],
                ..self.scene()
            };
            s.validate().map_err(|e| bad("bd_y_sweep", e.to_string()))?;
        }
        if self.thresholds.iter().any(|t| t.is_nan())
            || self.thresholds.windows(2).any(|w| w[0] > w[1])
        {
            return Err(bad("thresholds", "must be sorted ascending"));
        }
        self.plan()
            .map_err(|e| bad("gamma_pattern", e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = if text.trim().is_empty() {
        ScenarioConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| bad("<document>", e.to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a JSON config. An empty file gives the defaults.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text)
}
