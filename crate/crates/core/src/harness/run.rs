use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::config::ScenarioConfig;
use crate::harness::table::{emit_csv, Cell, Table};
use crate::metrics::{
    dynamic_range_sweep, radiation_pattern, roc_curve, trial_projector, trial_rng,
    DetectionScenario, ProjectionMode,
};
use crate::reader::DetectorMode;
use crate::scene::{normalize_backscatter, synthesize_channels, ChannelSet, Scene};
use crate::waveform::{
    calibrate_powers, db_to_linear, transmit_phase1, Awgn, PhasePlan, Waveforms,
};

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "BIBC_SIM_OUT";

pub const DEFAULT_ZETA_TRIALS: usize = 1000;
pub const DEFAULT_ROC_TRIALS: usize = 10_000;

pub const RADIATION_HEADER: [&str; 3] = ["theta_deg", "e_t_db", "label"];
pub const DYNAMIC_RANGE_HEADER: [&str; 6] = ["y_m", "mode", "k", "snr_p_db", "zeta_db", "trials"];
pub const ROC_HEADER: [&str; 6] = ["mode", "snr_p_db", "threshold_log", "p_fa", "p_d", "trials"];

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("bibc-out"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Radiation patterns for three array sizes.
    Fig3,
    /// Radiation patterns for K = 1..4.
    Fig4,
    /// Dynamic range versus BD height.
    Fig5,
    /// ROC curves for the three projection modes.
    Fig6,
    /// Everything the config describes, once.
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Fig3,
        Preset::Fig4,
        Preset::Fig5,
        Preset::Fig6,
        Preset::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
            Preset::Custom => "custom",
        }
    }

    fn normalize_default(self) -> bool {
        self != Preset::Fig5
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub run_id: String,
    pub seed: u64,
    /// Every file written, in write order.
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    run_id: &'a str,
    preset: &'a str,
    seed: u64,
    version: &'a str,
    files: Vec<String>,
}

/// Identifier derived from the preset and the config echo.
pub fn run_id(preset: Preset, config_json: &str) -> String {
    let mut h = Sha256::new();
    h.update(preset.as_str().as_bytes());
    h.update(b"\n");
    h.update(config_json.as_bytes());
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs a preset and writes its artifacts into `out_dir`. With `threads`
/// set the Monte Carlo work runs on a dedicated pool of that size; output is
/// identical for every thread count.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    preset: Preset,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<RunArtifact> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let tables = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?
            .install(|| build_tables(cfg, preset))?,
        None => build_tables(cfg, preset)?,
    };

    let config_json = cfg.to_json();
    let id = run_id(preset, &config_json);
    let mut files = Vec::new();
    let write = |name: &str, text: &str, files: &mut Vec<PathBuf>| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        files.push(path);
        Ok(())
    };
    write("config.json", &config_json, &mut files)?;
    for (name, table) in &tables {
        let path = out_dir.join(name);
        emit_csv(table, &path)?;
        files.push(path);
    }
    let record = RunRecord {
        run_id: &id,
        preset: preset.as_str(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        files: files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .collect(),
    };
    let mut run_json = serde_json::to_string_pretty(&record).expect("record serialises");
    run_json.push('\n');
    write("run.json", &run_json, &mut files)?;
    Ok(RunArtifact {
        dir: out_dir.to_path_buf(),
        run_id: id,
        seed: cfg.seed,
        files,
    })
}

struct Setup {
    channels: ChannelSet,
    plan: PhasePlan,
    waveforms: Waveforms,
}

fn setup(cfg: &ScenarioConfig, scene: &Scene, normalize: bool, snr_p_db: f64) -> Result<Setup> {
    let plan = cfg.plan()?;
    let raw = synthesize_channels(scene)?;
    let channels = if normalize {
        normalize_backscatter(&raw)?
    } else {
        raw
    };
    let (p1, p2) = calibrate_powers(
        &channels,
        &plan,
        db_to_linear(snr_p_db),
        db_to_linear(cfg.snr_d_db),
    )?;
    let waveforms = Waveforms::new(&plan, scene.m, scene.n, p1, p2)?;
    Ok(Setup {
        channels,
        plan,
        waveforms,
    })
}

fn build_tables(cfg: &ScenarioConfig, preset: Preset) -> Result<Vec<(&'static str, Table)>> {
    let normalize = cfg
        .normalize_backscatter
        .unwrap_or(preset.normalize_default());
    match preset {
        Preset::Fig3 => {
            let mut t = Table::new(&RADIATION_HEADER);
            let base = setup(cfg, &cfg.scene(), normalize, cfg.snr_p_db)?;
            radiation_rows(&mut t, cfg, &base, ProjectionMode::None, 0, "no_projection")?;
            for (m, n, k) in [(8, 16, 2), (16, 16, 3), (16, 8, 2)] {
                let scene = Scene {
                    m,
                    n,
                    ..cfg.scene()
                };
                let plan_cfg = ScenarioConfig {
                    tau_p: cfg.tau_p.max(n),
                    tau_d: cfg.tau_d.max(m),
                    ..cfg.clone()
                };
                let s = setup(&plan_cfg, &scene, normalize, cfg.snr_p_db)?;
                radiation_rows(
                    &mut t,
                    cfg,
                    &s,
                    ProjectionMode::Perfect,
                    k,
                    &format!("M{m}_N{n}_K{k}"),
                )?;
            }
            Ok(vec![("radiation.csv", t)])
        }
        Preset::Fig4 => {
            let mut t = Table::new(&RADIATION_HEADER);
            let s = setup(cfg, &cfg.scene(), normalize, cfg.snr_p_db)?;
            radiation_rows(&mut t, cfg, &s, ProjectionMode::None, 0, "no_projection")?;
            for k in 1..=4 {
                radiation_rows(
                    &mut t,
                    cfg,
                    &s,
                    ProjectionMode::Perfect,
                    k,
                    &format!("K{k}"),
                )?;
            }
            Ok(vec![("radiation.csv", t)])
        }
        Preset::Fig5 => {
            let trials = cfg.trials.unwrap_or(DEFAULT_ZETA_TRIALS);
            let mut t = Table::new(&DYNAMIC_RANGE_HEADER);
            let mut curves = vec![(ProjectionMode::None, 0, None)];
            curves.extend((1..=4).map(|k| (ProjectionMode::Perfect, k, None)));
            curves.extend([5.0, 20.0].map(|snr| (ProjectionMode::Estimated, 3, Some(snr))));
            for (mode, k, snr) in curves {
                zeta_rows(
                    &mut t,
                    cfg,
                    normalize,
                    mode,
                    k,
                    snr,
                    &cfg.bd_y_sweep,
                    trials,
                )?;
            }
            Ok(vec![("dynamic_range.csv", t)])
        }
        Preset::Fig6 => {
            let trials = cfg.trials.unwrap_or(DEFAULT_ROC_TRIALS);
            let mut t = Table::new(&ROC_HEADER);
            let scene = Scene {
                bd_position: [3.0, 3.0],
                ..cfg.scene()
            };
            for mode in [
                ProjectionMode::Perfect,
                ProjectionMode::Estimated,
                ProjectionMode::None,
            ] {
                for snr in [5.0, 20.0] {
                    roc_rows(&mut t, cfg, &scene, normalize, mode, 3, snr, trials)?;
                }
            }
            Ok(vec![("roc.csv", t)])
        }
        Preset::Custom => {
            let mode = cfg.projection_mode;
            let mut rad = Table::new(&RADIATION_HEADER);
            let s = setup(cfg, &cfg.scene(), normalize, cfg.snr_p_db)?;
            radiation_rows(&mut rad, cfg, &s, ProjectionMode::None, 0, "no_projection")?;
            if mode != ProjectionMode::None {
                radiation_rows(
                    &mut rad,
                    cfg,
                    &s,
                    mode,
                    cfg.k,
                    &format!("{}_K{}", mode.as_str(), cfg.k),
                )?;
            }
            let mut zeta = Table::new(&DYNAMIC_RANGE_HEADER);
            let trials_z = cfg.trials.unwrap_or(DEFAULT_ZETA_TRIALS);
            let snr = (mode == ProjectionMode::Estimated).then_some(cfg.snr_p_db);
            zeta_rows(
                &mut zeta,
                cfg,
                normalize,
                mode,
                cfg.k,
                snr,
                &[cfg.bd_position[1]],
                trials_z,
            )?;
            let mut roc = Table::new(&ROC_HEADER);
            let trials_r = cfg.trials.unwrap_or(DEFAULT_ROC_TRIALS);
            roc_rows(
                &mut roc,
                cfg,
                &cfg.scene(),
                normalize,
                mode,
                cfg.k,
                cfg.snr_p_db,
                trials_r,
            )?;
            Ok(vec![
                ("radiation.csv", rad),
                ("dynamic_range.csv", zeta),
                ("roc.csv", roc),
            ])
        }
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One pattern curve. Estimated projections use the stream-0 P1 draw.
fn radiation_rows(
    t: &mut Table,
    cfg: &ScenarioConfig,
    s: &Setup,
    mode: ProjectionMode,
    k: usize,
    label: &str,
) -> Result<()> {
    let yp = transmit_phase1(
        &s.channels,
        &s.waveforms,
        &s.plan,
        &mut Awgn(trial_rng(cfg.seed, 0)),
    )?;
    let pr = trial_projector(mode, &s.channels, &yp, &s.waveforms, &s.plan, k)?;
    let grid: Vec<f64> = cfg.theta_grid_deg.iter().map(|d| d.to_radians()).collect();
    let pattern = radiation_pattern(
        &pr.p_s,
        &grid,
        s.channels.m(),
        cfg.d_ant,
        s.waveforms.alpha_d,
    )?;
    for (deg, (_, e)) in cfg.theta_grid_deg.iter().zip(pattern) {
        t.push(vec![
            Cell::Float(*deg),
            Cell::Float(db(e)),
            Cell::Text(label.into()),
        ]);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn zeta_rows(
    t: &mut Table,
    cfg: &ScenarioConfig,
    normalize: bool,
    mode: ProjectionMode,
    k: usize,
    snr_p_db: Option<f64>,
    ys: &[f64],
    trials: usize,
) -> Result<()> {
    let base = setup(
        cfg,
        &cfg.scene(),
        normalize,
        snr_p_db.unwrap_or(cfg.snr_p_db),
    )?;
    let chs = ys
        .iter()
        .map(|&y| {
            let raw = synthesize_channels(&Scene {
                bd_position: [cfg.bd_position[0], y],
                ..cfg.scene()
            })?;
            if normalize {
                normalize_backscatter(&raw)
            } else {
                Ok(raw)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let reports =
        dynamic_range_sweep(&chs, &base.waveforms, &base.plan, mode, k, trials, cfg.seed)?;
    for (y, r) in ys.iter().zip(reports) {
        t.push(vec![
            Cell::Float(*y),
            Cell::Text(mode.as_str().into()),
            Cell::Int(k as u64),
            snr_p_db.map_or(Cell::Empty, Cell::Float),
            Cell::Float(r.zeta_db),
            Cell::Int(r.trials as u64),
        ]);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn roc_rows(
    t: &mut Table,
    cfg: &ScenarioConfig,
    scene: &Scene,
    normalize: bool,
    mode: ProjectionMode,
    k: usize,
    snr_p_db: f64,
    trials: usize,
) -> Result<()> {
    let s = setup(cfg, scene, normalize, snr_p_db)?;
    let sc = DetectionScenario {
        channels: s.channels,
        plan: s.plan,
        waveforms: s.waveforms,
        k,
        projection: mode,
        detector: cfg.detector_mode,
        epsilon: cfg.epsilon,
        max_iters: cfg.max_iters,
    };
    let curve = roc_curve(&sc, trials, &cfg.thresholds, cfg.seed)?;
    let label = match cfg.detector_mode {
        DetectorMode::Full => mode.as_str().to_string(),
        DetectorMode::P2only => format!("{}_p2only", mode.as_str()),
    };
    for p in curve.points {
        t.push(vec![
            Cell::Text(label.clone()),
            Cell::Float(snr_p_db),
            Cell::Float(p.log_threshold),
            Cell::Float(p.p_fa),
            Cell::Float(p.p_d),
            Cell::Int(trials as u64),
        ]);
    }
    Ok(())
}
