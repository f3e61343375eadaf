//! Evaluation quantities: dynamic range at the reader, radiated energy versus
//! departure angle, and empirical ROC curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::{build_projector, ls_estimate_direct, Projector};
use crate::error::{Error, Result};
use crate::numerics::{frob2, ComplexMatrix};
use crate::reader::{glrt, p2only_glrt, DetectorMode, ReaderSideInfo};
use crate::scene::{steering_vector, ChannelSet};
use crate::waveform::{
    transmit_phase1, transmit_phase2, Awgn, Hypothesis, Observation, PhasePlan, Waveforms,
};

/// How PanA obtains the projector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    /// `P_s = I`.
    None,
    /// Built from the true `G_AB`.
    Perfect,
    /// Built from the P1 least-squares estimate.
    Estimated,
}

impl ProjectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionMode::None => "none",
            ProjectionMode::Perfect => "perfect",
            ProjectionMode::Estimated => "estimated",
        }
    }
}

/// Generator for one Monte Carlo trial: the run seed selects the key and the
/// trial index selects the stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Projector for one trial. The P1 blocks are consumed only in estimated mode.
pub fn trial_projector(
    mode: ProjectionMode,
    ch: &ChannelSet,
    yp: &[ComplexMatrix],
    wf: &Waveforms,
    plan: &PhasePlan,
    k: usize,
) -> Result<Projector> {
    match mode {
        ProjectionMode::None => Ok(Projector::identity(ch.m())),
        ProjectionMode::Perfect => build_projector(&ch.g_ab, k),
        ProjectionMode::Estimated => {
            let g_ba = ls_estimate_direct(yp, &wf.phi, plan.j_p)?;
            build_projector(&g_ba.transpose(), k)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicRangeReport {
    pub zeta_linear: f64,
    pub zeta_db: f64,
    pub mode: ProjectionMode,
    pub trials: usize,
}

/// `(||G_AB P_s Psi||^2 + ||g_CB g_AC^T P_s Psi||^2) / ||g_CB g_AC^T P_s Psi||^2`
pub fn zeta_ratio(ch: &ChannelSet, p_s: &ComplexMatrix, psi: &ComplexMatrix) -> Result<f64> {
    let probe = p_s * psi;
    let direct = frob2(&(&ch.g_ab * &probe));
    let back = frob2(&(ch.cascade() * &probe));
    if !(back > 1e-30 * (direct + back)) {
        return Err(Error::DegenerateDenominator);
    }
    Ok((direct + back) / back)
}

fn report(sum: f64, trials: usize, mode: ProjectionMode) -> DynamicRangeReport {
    let zeta_linear = sum / trials as f64;
    DynamicRangeReport {
        zeta_linear,
        zeta_db: 10.0 * zeta_linear.log10(),
        mode,
        trials,
    }
}

/// Dynamic range for one channel set. Estimated mode averages the linear
/// ratio over `trials` P1 noise draws (streams `0..trials` of `seed`).
pub fn dynamic_range(
    ch: &ChannelSet,
    wf: &Waveforms,
    plan: &PhasePlan,
    mode: ProjectionMode,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<DynamicRangeReport> {
    Ok(dynamic_range_sweep(std::slice::from_ref(ch), wf, plan, mode, k, trials, seed)?.remove(0))
}

/// [`dynamic_range`] for several channel sets sharing one `G_AB` (a BD
/// position sweep). Each trial's projector is built once and reused.
pub fn dynamic_range_sweep(
    chs: &[ChannelSet],
    wf: &Waveforms,
    plan: &PhasePlan,
    mode: ProjectionMode,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<DynamicRangeReport>> {
    let first = chs
        .first()
        .ok_or_else(|| Error::InvalidInput("no channel sets".into()))?;
    if chs.iter().any(|c| c.g_ab != first.g_ab) {
        return Err(Error::InvalidInput("sweep members must share G_AB".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if mode != ProjectionMode::Estimated {
        let pr = trial_projector(mode, first, &[], wf, plan, k)?;
        return chs
            .iter()
            .map(|c| Ok(report(zeta_ratio(c, &pr.p_s, &wf.psi)?, 1, mode)))
            .collect();
    }
    let per_trial: Vec<Result<Vec<f64>>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut noise = Awgn(trial_rng(seed, t));
            let yp = transmit_phase1(first, wf, plan, &mut noise)?;
            let pr = trial_projector(mode, first, &yp, wf, plan, k)?;
            chs.iter()
                .map(|c| zeta_ratio(c, &pr.p_s, &wf.psi))
                .collect()
        })
        .collect();
    let mut sums = vec![0.0; chs.len()];
    for r in per_trial {
        for (s, z) in sums.iter_mut().zip(r?) {
            *s += z;
        }
    }
    Ok(sums.into_iter().map(|s| report(s, trials, mode)).collect())
}

/// Energy radiated toward a direction with array response `g` (M x 1):
/// `alpha_d ||g^T P_s||^2`, i.e. `||g^T P_s Psi||^2` for an orthogonal probe.
pub fn radiated_energy(p_s: &ComplexMatrix, g: &ComplexMatrix, alpha_d: f64) -> f64 {
    alpha_d * frob2(&(g.transpose() * p_s))
}

/// `(theta, E_t(theta))` over a grid of departure angles in radians.
pub fn radiation_pattern(
    p_s: &ComplexMatrix,
    theta_grid: &[f64],
    m: usize,
    d_ant: f64,
    alpha_d: f64,
) -> Result<Vec<(f64, f64)>> {
    if theta_grid.is_empty() {
        return Err(Error::InvalidInput("empty angle grid".into()));
    }
    if p_s.shape() != (m, m) {
        return Err(Error::dims("radiation_pattern P_s", (m, m), p_s.shape()));
    }
    Ok(theta_grid
        .iter()
        .map(|&t| {
            (
                t,
                radiated_energy(p_s, &steering_vector(t, m, d_ant), alpha_d),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// `ln(eta)`
    pub log_threshold: f64,
    pub p_fa: f64,
    pub p_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub trials_h0: usize,
    pub trials_h1: usize,
}

fn fraction_above(stats: &[f64], thr: f64) -> f64 {
    stats.iter().filter(|&&s| s > thr).count() as f64 / stats.len() as f64
}

/// Sweeps ascending log thresholds over cached statistics.
pub fn roc_from_statistics(h0: &[f64], h1: &[f64], log_thresholds: &[f64]) -> Result<RocCurve> {
    if h0.is_empty() || h1.is_empty() {
        return Err(Error::InvalidInput(
            "need statistics under both hypotheses".into(),
        ));
    }
    if log_thresholds.iter().any(|t| t.is_nan()) || log_thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(
            "thresholds must be sorted ascending".into(),
        ));
    }
    Ok(RocCurve {
        points: log_thresholds
            .iter()
            .map(|&t| RocPoint {
                log_threshold: t,
                p_fa: fraction_above(h0, t),
                p_d: fraction_above(h1, t),
            })
            .collect(),
        trials_h0: h0.len(),
        trials_h1: h1.len(),
    })
}

/// Detection probability at the empirical threshold giving false-alarm rate
/// `p_fa`: the threshold is the `floor(p_fa * n)`-th largest H0 statistic.
pub fn pd_at_pfa(h0: &[f64], h1: &[f64], p_fa: f64) -> Result<f64> {
    if h0.is_empty() || h1.is_empty() || !(0.0..=1.0).contains(&p_fa) {
        return Err(Error::InvalidInput("pd_at_pfa: bad input".into()));
    }
    let mut desc = h0.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let idx = ((p_fa * h0.len() as f64).floor() as usize).min(h0.len() - 1);
    Ok(fraction_above(h1, desc[idx]))
}

/// `-inf` followed by 201 quantiles of the pooled statistics.
pub fn default_thresholds(h0: &[f64], h1: &[f64]) -> Vec<f64> {
    let mut pooled: Vec<f64> = h0.iter().chain(h1).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut out = vec![f64::NEG_INFINITY];
    if let Some(last) = pooled.len().checked_sub(1) {
        out.extend((0..=200).map(|i| pooled[(i * last + 100) / 200]));
    }
    out
}

/// Everything needed to simulate one detection trial under both hypotheses.
#[derive(Debug, Clone)]
pub struct DetectionScenario {
    /// True channels; backscatter normalisation, if any, is already applied.
    pub channels: ChannelSet,
    pub plan: PhasePlan,
    pub waveforms: Waveforms,
    pub k: usize,
    pub projection: ProjectionMode,
    pub detector: DetectorMode,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl DetectionScenario {
    /// Paired statistics `(H0, H1)` of one trial. Both hypotheses share the
    /// P1 draw and the P2 noise; the P1 draw happens in every projection mode
    /// so that modes see the same noise for the same trial.
    pub fn trial(&self, seed: u64, trial: u64) -> Result<(f64, f64)> {
        let mut rng = trial_rng(seed, trial);
        let yp = transmit_phase1(
            &self.channels,
            &self.waveforms,
            &self.plan,
            &mut Awgn(&mut rng),
        )?;
        let pr = trial_projector(
            self.projection,
            &self.channels,
            &yp,
            &self.waveforms,
            &self.plan,
            self.k,
        )?;
        let info = ReaderSideInfo::new(&self.waveforms, &pr, &self.plan)?;
        let stat = |h: Hypothesis, rng: &mut ChaCha8Rng| -> Result<f64> {
            let y = transmit_phase2(
                &self.channels,
                &self.waveforms,
                &self.plan,
                &pr.p_s,
                &mut Awgn(rng),
                h,
            )?;
            let obs = Observation { yp: yp.clone(), y };
            let r = match self.detector {
                DetectorMode::Full => glrt(&obs, &info, self.epsilon, self.max_iters, 1.0)?,
                DetectorMode::P2only => {
                    p2only_glrt(&obs, &info, self.epsilon, self.max_iters, 1.0)?
                }
            };
            Ok(r.log_glr)
        };
        let s0 = stat(Hypothesis::H0, &mut rng.clone())?;
        let s1 = stat(Hypothesis::H1, &mut rng)?;
        Ok((s0, s1))
    }

    /// Statistics for trials `0..trials`, in trial order regardless of the
    /// number of worker threads.
    pub fn statistics(&self, trials: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let pairs: Vec<Result<(f64, f64)>> = (0..trials as u64)
            .into_par_iter()
            .map(|t| self.trial(seed, t))
            .collect();
        let mut h0 = Vec::with_capacity(trials);
        let mut h1 = Vec::with_capacity(trials);
        for p in pairs {
            let (a, b) = p?;
            h0.push(a);
            h1.push(b);
        }
        Ok((h0, h1))
    }
}

/// Monte Carlo ROC. An empty threshold list selects [`default_thresholds`].
pub fn roc_curve(
    scenario: &DetectionScenario,
    trials: usize,
    log_thresholds: &[f64],
    seed: u64,
) -> Result<RocCurve> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let (h0, h1) = scenario.statistics(trials, seed)?;
    if log_thresholds.is_empty() {
        roc_from_statistics(&h0, &h1, &default_thresholds(&h0, &h1))
    } else {
        roc_from_statistics(&h0, &h1, log_thresholds)
    }
}
