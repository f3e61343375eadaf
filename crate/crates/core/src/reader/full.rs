use crate::error::{Error, Result};
use crate::numerics::{frob2, solve_identity_plus_projector, ComplexMatrix};
use crate::reader::{
    detect, fit_hbl, slot_term, DirectLink, GlrtResult, H1Estimate, ReaderSideInfo,
};
use crate::waveform::Observation;

fn p1_rhs(obs: &Observation, info: &ReaderSideInfo) -> ComplexMatrix {
    let phi_c = info.phi.conjugate();
    let mut acc = ComplexMatrix::zeros(info.n(), info.m());
    for yp in &obs.yp {
        acc += &phi_c * yp.transpose();
    }
    acc
}

/// `sum_k (Y_k - gamma_k H_BL Psi) Psi^H P_s` over the given P2 offsets.
fn p2_rhs(
    obs: &Observation,
    info: &ReaderSideInfo,
    slots: &[usize],
    h_bl: Option<&ComplexMatrix>,
) -> ComplexMatrix {
    let psi_h_ps = info.psi.adjoint() * &info.projector.p_s;
    let sub = h_bl.map(|h| h * &info.psi);
    let gamma = info.plan.gamma_p2();
    let mut acc = ComplexMatrix::zeros(info.n(), info.m());
    for &k in slots {
        match (&sub, gamma[k]) {
            (Some(s), true) => acc += (&obs.y[k] - s) * &psi_h_ps,
            _ => acc += &obs.y[k] * &psi_h_ps,
        }
    }
    acc
}

/// Minimiser of `sum_p ||Y^p - G^T Phi||^2 + sum_d ||Y - G P_s Psi||^2` given
/// the two right-hand sums. The Gram operator is
/// `alpha_p J_p I + alpha_d J Lambda^2 P` because `P_s P_s^H = Lambda^2 P`.
fn solve_g(info: &ReaderSideInfo, rhs: &ComplexMatrix, slots: usize) -> Result<ComplexMatrix> {
    let pr = &info.projector;
    let a = info.alpha_p * info.plan.j_p as f64;
    let b = info.alpha_d * slots as f64 * pr.lambda * pr.lambda;
    solve_identity_plus_projector(a, b, &pr.p, rhs)
}

/// `G_AB` estimate under H0 from all P1 and P2 blocks.
pub fn estimate_gab_h0(obs: &Observation, info: &ReaderSideInfo) -> Result<ComplexMatrix> {
    info.check_full(obs)?;
    let s_d = info.plan.s_d();
    let rhs = p1_rhs(obs, info) + p2_rhs(obs, info, &s_d, None);
    solve_g(info, &rhs, s_d.len())
}

/// Initial `G_AB` estimate under H1 from the P1 blocks and the silent P2 slots.
pub fn estimate_gab_h1_initial(obs: &Observation, info: &ReaderSideInfo) -> Result<ComplexMatrix> {
    info.check_full(obs)?;
    let s0 = info.plan.s_d0();
    let rhs = p1_rhs(obs, info) + p2_rhs(obs, info, &s0, None);
    solve_g(info, &rhs, s0.len())
}

/// Rank-one backscatter-link estimate given a `G_AB` estimate.
pub fn estimate_hbl(
    obs: &Observation,
    info: &ReaderSideInfo,
    g_ab: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    info.check_full(obs)?;
    fit_hbl(obs, info, &(g_ab * &info.projector.p_s))
}

/// `G_AB` re-estimated from every block after removing the backscatter term.
pub fn refine_gab_h1(
    obs: &Observation,
    info: &ReaderSideInfo,
    h_bl: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    info.check_full(obs)?;
    let s_d = info.plan.s_d();
    let rhs = p1_rhs(obs, info) + p2_rhs(obs, info, &s_d, Some(h_bl));
    solve_g(info, &rhs, s_d.len())
}

/// Joint H1 least-squares objective
/// `sum_p ||Y^p - G^T Phi||^2 + sum_d ||Y - G P_s Psi - gamma H_BL Psi||^2`.
pub fn objective(
    obs: &Observation,
    info: &ReaderSideInfo,
    g_ab: &ComplexMatrix,
    h_bl: &ComplexMatrix,
) -> f64 {
    let c = g_ab.transpose() * &info.phi;
    let p1: f64 = obs.yp.iter().map(|y| frob2(&(y - &c))).sum();
    let direct = g_ab * &info.projector.p_s * &info.psi;
    let back = h_bl * &info.psi;
    let p2: f64 = obs
        .y
        .iter()
        .zip(info.plan.gamma_p2())
        .map(|(y, &g)| {
            if g {
                frob2(&(y - &direct - &back))
            } else {
                frob2(&(y - &direct))
            }
        })
        .sum();
    p1 + p2
}

/// Cyclic H1 estimator, one refine/fit cycle per [`H1Solver::step`].
pub struct H1Solver<'a> {
    obs: &'a Observation,
    info: &'a ReaderSideInfo,
    g: ComplexMatrix,
    h: ComplexMatrix,
    iterations: usize,
    last_delta: f64,
}

impl<'a> H1Solver<'a> {
    /// Initial `G_AB` from P1 and the silent slots, then the first `H_BL` fit.
    pub fn new(obs: &'a Observation, info: &'a ReaderSideInfo) -> Result<Self> {
        let g = estimate_gab_h1_initial(obs, info)?;
        let h = estimate_hbl(obs, info, &g)?;
        Ok(H1Solver {
            obs,
            info,
            g,
            h,
            iterations: 0,
            last_delta: f64::INFINITY,
        })
    }

    /// Refines `G_AB` then refits `H_BL`; returns `||G_new - G_old||^2`.
    pub fn step(&mut self) -> Result<f64> {
        let g = refine_gab_h1(self.obs, self.info, &self.h)?;
        self.h = estimate_hbl(self.obs, self.info, &g)?;
        self.last_delta = frob2(&(&g - &self.g));
        self.g = g;
        self.iterations += 1;
        Ok(self.last_delta)
    }

    pub fn g_ab(&self) -> &ComplexMatrix {
        &self.g
    }

    pub fn h_bl(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn objective(&self) -> f64 {
        objective(self.obs, self.info, &self.g, &self.h)
    }
}

pub(crate) fn check_stopping(epsilon: f64, max_iters: usize) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be >= 1".into()));
    }
    Ok(())
}

/// Runs [`H1Solver`] until the squared change in `G_AB` is at most
/// `epsilon` or `max_iters` cycles have run.
pub fn estimate_h1(
    obs: &Observation,
    info: &ReaderSideInfo,
    epsilon: f64,
    max_iters: usize,
) -> Result<H1Estimate> {
    check_stopping(epsilon, max_iters)?;
    let mut alg = H1Solver::new(obs, info)?;
    let mut trace = vec![alg.objective()];
    let mut converged = false;
    while alg.iterations < max_iters {
        let d = alg.step()?;
        trace.push(alg.objective());
        if d <= epsilon {
            converged = true;
            break;
        }
    }
    Ok(H1Estimate {
        direct: DirectLink::Channel(alg.g),
        h_bl: alg.h,
        iterations: alg.iterations,
        final_delta: alg.last_delta,
        converged,
        objective_trace: trace,
    })
}

/// Approximate log GLR in full mode.
pub fn glrt_log(
    obs: &Observation,
    info: &ReaderSideInfo,
    h0: &ComplexMatrix,
    h1: &H1Estimate,
) -> Result<f64> {
    info.check_full(obs)?;
    let g1 = h1.direct.g_ab().ok_or_else(|| {
        Error::InvalidInput("full-mode GLRT needs a G_AB estimate under H1".into())
    })?;
    let ps_psi = &info.projector.p_s * &info.psi;
    let b = h0 * &ps_psi;
    let a0 = g1 * &ps_psi;
    let a1 = &a0 + &h1.h_bl * &info.psi;
    let mut s = 0.0;
    for (y, &g) in obs.y.iter().zip(info.plan.gamma_p2()) {
        s += slot_term(y, if g { &a1 } else { &a0 }, &b);
    }
    let c1 = g1.transpose() * &info.phi;
    let c2 = h0.transpose() * &info.phi;
    for yp in &obs.yp {
        s += slot_term(yp, &c1, &c2);
    }
    Ok(s)
}

/// Full-mode detector: both estimators, the statistic and the decision.
pub fn glrt(
    obs: &Observation,
    info: &ReaderSideInfo,
    epsilon: f64,
    max_iters: usize,
    eta: f64,
) -> Result<GlrtResult> {
    let h0 = estimate_gab_h0(obs, info)?;
    let h1 = estimate_h1(obs, info, epsilon, max_iters)?;
    let log_glr = glrt_log(obs, info, &h0, &h1)?;
    Ok(GlrtResult {
        log_glr,
        decision: detect(log_glr, eta),
        threshold: eta,
        h0_estimate: DirectLink::Channel(h0),
        h1_estimate: h1,
    })
}
