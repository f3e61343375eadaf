//! PanB side: channel estimators under both hypotheses and the approximate
//! GLRT statistic.
//!
//! Two detector modes exist. `Full` uses the P1 pilot blocks shared by PanA
//! over the backhaul and estimates `G_AB` itself; `P2Only` sees only the P2
//! blocks, where just the effective direct link `H_DL = G_AB P_s` is
//! identifiable.

mod full;
mod p2only;

pub use full::{
    estimate_gab_h0, estimate_gab_h1_initial, estimate_h1, estimate_hbl, glrt, glrt_log, objective,
    refine_gab_h1, H1Solver,
};
pub use p2only::{
    p2only_estimate_h1, p2only_estimate_hdl_h0, p2only_glrt, p2only_glrt_log, p2only_objective,
};

use serde::{Deserialize, Serialize};

use crate::emitter::Projector;
use crate::error::{Error, Result};
use crate::numerics::{best_rank_one, frob2, ComplexMatrix};
use crate::waveform::{Hypothesis, Observation, PhasePlan, Waveforms};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    Full,
    P2only,
}

impl DetectorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorMode::Full => "full",
            DetectorMode::P2only => "p2only",
        }
    }
}

/// What the reader knows besides the received blocks.
#[derive(Debug, Clone)]
pub struct ReaderSideInfo {
    pub phi: ComplexMatrix,
    pub psi: ComplexMatrix,
    pub projector: Projector,
    pub plan: PhasePlan,
    pub alpha_p: f64,
    pub alpha_d: f64,
}

impl ReaderSideInfo {
    pub fn new(wf: &Waveforms, projector: &Projector, plan: &PhasePlan) -> Result<Self> {
        let (m, n) = (wf.m(), wf.n());
        plan.check_dims(m, n)?;
        if wf.phi.ncols() != plan.tau_p {
            return Err(Error::dims(
                "side info pilot",
                (n, plan.tau_p),
                wf.phi.shape(),
            ));
        }
        if wf.psi.ncols() != plan.tau_d {
            return Err(Error::dims(
                "side info probe",
                (m, plan.tau_d),
                wf.psi.shape(),
            ));
        }
        if projector.m() != m {
            return Err(Error::dims(
                "side info projector",
                (m, m),
                projector.p.shape(),
            ));
        }
        if plan.j_d1() == 0 || plan.j_d0() == 0 {
            return Err(Error::InvalidPlan(
                "need both silent and active P2 slots".into(),
            ));
        }
        Ok(ReaderSideInfo {
            phi: wf.phi.clone(),
            psi: wf.psi.clone(),
            projector: projector.clone(),
            plan: plan.clone(),
            alpha_p: wf.alpha_p,
            alpha_d: wf.alpha_d,
        })
    }

    pub fn m(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub(crate) fn check_p2(&self, obs: &Observation) -> Result<()> {
        if obs.y.len() != self.plan.j_d {
            return Err(Error::InvalidInput(format!(
                "expected {} P2 blocks, got {}",
                self.plan.j_d,
                obs.y.len()
            )));
        }
        for y in &obs.y {
            if y.shape() != (self.n(), self.plan.tau_d) {
                return Err(Error::dims(
                    "P2 block",
                    (self.n(), self.plan.tau_d),
                    y.shape(),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn check_full(&self, obs: &Observation) -> Result<()> {
        self.check_p2(obs)?;
        if obs.yp.len() != self.plan.j_p {
            return Err(Error::InvalidInput(format!(
                "expected {} P1 blocks, got {}",
                self.plan.j_p,
                obs.yp.len()
            )));
        }
        for y in &obs.yp {
            if y.shape() != (self.m(), self.plan.tau_p) {
                return Err(Error::dims(
                    "P1 block",
                    (self.m(), self.plan.tau_p),
                    y.shape(),
                ));
            }
        }
        Ok(())
    }
}

/// Direct-link estimate. Full mode estimates the channel `G_AB` itself;
/// P2-only mode can only estimate `H_DL = G_AB P_s`.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectLink {
    Channel(ComplexMatrix),
    Effective(ComplexMatrix),
}

impl DirectLink {
    /// The matrix multiplying `Psi` in the P2 model.
    pub fn through_projector(&self, p_s: &ComplexMatrix) -> ComplexMatrix {
        match self {
            DirectLink::Channel(g) => g * p_s,
            DirectLink::Effective(h) => h.clone(),
        }
    }

    pub fn g_ab(&self) -> Option<&ComplexMatrix> {
        match self {
            DirectLink::Channel(g) => Some(g),
            DirectLink::Effective(_) => None,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        match self {
            DirectLink::Channel(m) | DirectLink::Effective(m) => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct H1Estimate {
    pub direct: DirectLink,
    pub h_bl: ComplexMatrix,
    /// Completed refine/fit cycles after initialisation.
    pub iterations: usize,
    /// Squared Frobenius change of the direct-link estimate in the last cycle.
    pub final_delta: f64,
    pub converged: bool,
    /// Joint objective after initialisation and after every cycle.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GlrtResult {
    pub log_glr: f64,
    pub decision: Hypothesis,
    pub threshold: f64,
    pub h0_estimate: DirectLink,
    pub h1_estimate: H1Estimate,
}

/// H1 iff `log_glr > ln(eta)`; a tie decides H0. `eta = 0` always decides H1.
pub fn detect(log_glr: f64, eta: f64) -> Hypothesis {
    detect_log(log_glr, eta.ln())
}

pub fn detect_log(log_glr: f64, log_eta: f64) -> Hypothesis {
    if log_glr > log_eta {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// Rank-one backscatter fit against the effective direct link `direct_eff`
/// (the matrix multiplying `Psi`) over the active slots:
/// `Z = sum_{S_d1} (Y_j - D Psi) Psi^H Q / (J_d1 alpha_d Lambda)`,
/// `H_BL = Lambda u delta v^H Q^H` from the best rank-one fit of `Z`.
pub(crate) fn fit_hbl(
    obs: &Observation,
    info: &ReaderSideInfo,
    direct_eff: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let s1 = info.plan.s_d1();
    if s1.is_empty() {
        return Err(Error::InvalidPlan("no active P2 slots".into()));
    }
    let pr = &info.projector;
    let predicted = direct_eff * &info.psi;
    let psi_h_q = info.psi.adjoint() * &pr.q;
    let mut z = ComplexMatrix::zeros(info.n(), pr.q.ncols());
    for &k in &s1 {
        z += (&obs.y[k] - &predicted) * &psi_h_q;
    }
    z.unscale_mut(s1.len() as f64 * info.alpha_d * pr.lambda);
    let r1 = best_rank_one(&z)?;
    Ok((r1.to_matrix() * pr.q.adjoint()).scale(pr.lambda))
}

/// Log-likelihood difference expanded per slot:
/// `2 Re Tr{Y (A - B)^H} - ||A||^2 + ||B||^2`.
pub(crate) fn slot_term(y: &ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let diff = a - b;
    2.0 * diff.dotc(y).re - frob2(a) + frob2(b)
}
