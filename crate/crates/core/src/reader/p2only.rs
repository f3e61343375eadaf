//! Detector without the P1 blocks. Only `H_DL = G_AB P_s` can be estimated.
//!
//! The H1 side mirrors the full-mode cycle: `H_DL` is initialised from the
//! silent slots, then a rank-one `H_BL` fit alternates with a refit of `H_DL`
//! over every P2 slot with the backscatter term removed.

use crate::error::Result;
use crate::numerics::{frob2, ComplexMatrix};
use crate::reader::full::check_stopping;
use crate::reader::{
    detect, fit_hbl, slot_term, DirectLink, GlrtResult, H1Estimate, ReaderSideInfo,
};
use crate::waveform::Observation;

/// `(1/(|S| alpha_d)) sum_{k in S} (Y_k - gamma_k H_BL Psi) Psi^H P`.
fn fit_hdl(
    obs: &Observation,
    info: &ReaderSideInfo,
    slots: &[usize],
    h_bl: Option<&ComplexMatrix>,
) -> ComplexMatrix {
    let psi_h_p = info.psi.adjoint() * &info.projector.p;
    let sub = h_bl.map(|h| h * &info.psi);
    let gamma = info.plan.gamma_p2();
    let mut acc = ComplexMatrix::zeros(info.n(), info.m());
    for &k in slots {
        match (&sub, gamma[k]) {
            (Some(s), true) => acc += (&obs.y[k] - s) * &psi_h_p,
            _ => acc += &obs.y[k] * &psi_h_p,
        }
    }
    acc.unscale_mut(slots.len() as f64 * info.alpha_d);
    acc
}

/// Effective direct link under H0 from all P2 blocks.
pub fn p2only_estimate_hdl_h0(obs: &Observation, info: &ReaderSideInfo) -> Result<ComplexMatrix> {
    info.check_p2(obs)?;
    Ok(fit_hdl(obs, info, &info.plan.s_d(), None))
}

/// `sum_d ||Y - H_DL Psi - gamma H_BL Psi||^2`
pub fn p2only_objective(
    obs: &Observation,
    info: &ReaderSideInfo,
    h_dl: &ComplexMatrix,
    h_bl: &ComplexMatrix,
) -> f64 {
    let direct = h_dl * &info.psi;
    let back = h_bl * &info.psi;
    obs.y
        .iter()
        .zip(info.plan.gamma_p2())
        .map(|(y, &g)| {
            if g {
                frob2(&(y - &direct - &back))
            } else {
                frob2(&(y - &direct))
            }
        })
        .sum()
}

pub fn p2only_estimate_h1(
    obs: &Observation,
    info: &ReaderSideInfo,
    epsilon: f64,
    max_iters: usize,
) -> Result<H1Estimate> {
    check_stopping(epsilon, max_iters)?;
    info.check_p2(obs)?;
    let s_d = info.plan.s_d();
    let mut hdl = fit_hdl(obs, info, &info.plan.s_d0(), None);
    let mut hbl = fit_hbl(obs, info, &hdl)?;
    let mut trace = vec![p2only_objective(obs, info, &hdl, &hbl)];
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iters {
        let next = fit_hdl(obs, info, &s_d, Some(&hbl));
        hbl = fit_hbl(obs, info, &next)?;
        delta = frob2(&(&next - &hdl));
        hdl = next;
        iterations += 1;
        trace.push(p2only_objective(obs, info, &hdl, &hbl));
        if delta <= epsilon {
            converged = true;
            break;
        }
    }
    Ok(H1Estimate {
        direct: DirectLink::Effective(hdl),
        h_bl: hbl,
        iterations,
        final_delta: delta,
        converged,
        objective_trace: trace,
    })
}

/// P2-only log GLR; `h1.direct` may be either variant.
pub fn p2only_glrt_log(
    obs: &Observation,
    info: &ReaderSideInfo,
    hdl0: &ComplexMatrix,
    h1: &H1Estimate,
) -> Result<f64> {
    info.check_p2(obs)?;
    let b = hdl0 * &info.psi;
    let a0 = h1.direct.through_projector(&info.projector.p_s) * &info.psi;
    let a1 = &a0 + &h1.h_bl * &info.psi;
    Ok(obs
        .y
        .iter()
        .zip(info.plan.gamma_p2())
        .map(|(y, &g)| slot_term(y, if g { &a1 } else { &a0 }, &b))
        .sum())
}

pub fn p2only_glrt(
    obs: &Observation,
    info: &ReaderSideInfo,
    epsilon: f64,
    max_iters: usize,
    eta: f64,
) -> Result<GlrtResult> {
    let h0 = p2only_estimate_hdl_h0(obs, info)?;
    let h1 = p2only_estimate_h1(obs, info, epsilon, max_iters)?;
    let log_glr = p2only_glrt_log(obs, info, &h0, &h1)?;
    Ok(GlrtResult {
        log_glr,
        decision: detect(log_glr, eta),
        threshold: eta,
        h0_estimate: DirectLink::Effective(h0),
        h1_estimate: h1,
    })
}
