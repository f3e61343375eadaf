//! Slot structure, pilot and probe waveforms, power calibration and the noisy
//! forward model for both transmission phases.
//!
//! Phase 1 (P1): PanB sends the pilot `Phi` (N x tau_p) while the BD is silent;
//! PanA receives `Y^p = G_BA Phi + W^p`.
//! Phase 2 (P2): PanA sends the projected probe `P_s Psi`; PanB receives
//! `Y = G_AB P_s Psi + gamma g_CB g_AC^T P_s Psi + W`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::scene::{mean_path_gains, ChannelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// BD absent.
    H0,
    /// BD present.
    H1,
}

/// Slot layout of one transmission frame.
///
/// `gamma` covers all `j_p + j_d` slots, P1 first. The P2 index sets are
/// offsets into the P2 slots (the same indexing as [`Observation::y`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhasePlan {
    pub j_p: usize,
    pub tau_p: usize,
    pub j_d: usize,
    pub tau_d: usize,
    gamma: Vec<bool>,
}

impl PhasePlan {
    /// Plan with an explicit P2 reflection pattern. The pattern must contain
    /// at least one silent and one active slot.
    pub fn with_pattern(j_p: usize, tau_p: usize, tau_d: usize, p2_gamma: &[bool]) -> Result<Self> {
        if j_p == 0 {
            return Err(Error::InvalidPlan("J_p must be >= 1".into()));
        }
        if tau_p == 0 || tau_d == 0 {
            return Err(Error::InvalidPlan("slot lengths must be >= 1".into()));
        }
        if !p2_gamma.iter().any(|&g| g) || p2_gamma.iter().all(|&g| g) {
            return Err(Error::InvalidPlan(
                "P2 pattern needs at least one silent and one active slot".into(),
            ));
        }
        let mut gamma = vec![false; j_p];
        gamma.extend_from_slice(p2_gamma);
        Ok(PhasePlan {
            j_p,
            tau_p,
            j_d: p2_gamma.len(),
            tau_d,
            gamma,
        })
    }

    /// Reflection pattern over all slots.
    pub fn gamma(&self) -> &[bool] {
        &self.gamma
    }

    /// Reflection pattern over the P2 slots.
    pub fn gamma_p2(&self) -> &[bool] {
        &self.gamma[self.j_p..]
    }

    /// P1 slot indices.
    pub fn s_p(&self) -> Vec<usize> {
        (0..self.j_p).collect()
    }

    /// P2 slot offsets.
    pub fn s_d(&self) -> Vec<usize> {
        (0..self.j_d).collect()
    }

    /// P2 slot offsets with the BD silent.
    pub fn s_d0(&self) -> Vec<usize> {
        (0..self.j_d).filter(|&k| !self.gamma_p2()[k]).collect()
    }

    /// P2 slot offsets with the BD reflecting.
    pub fn s_d1(&self) -> Vec<usize> {
        (0..self.j_d).filter(|&k| self.gamma_p2()[k]).collect()
    }

    pub fn j_d0(&self) -> usize {
        self.gamma_p2().iter().filter(|&&g| !g).count()
    }

    pub fn j_d1(&self) -> usize {
        self.j_d - self.j_d0()
    }

    /// Checks the slot lengths against the array sizes (`tau_p >= N`,
    /// `tau_d >= M`).
    pub fn check_dims(&self, m: usize, n: usize) -> Result<()> {
        if self.tau_p < n {
            return Err(Error::InvalidPlan(format!(
                "tau_p = {} < N = {n}",
                self.tau_p
            )));
        }
        if self.tau_d < m {
            return Err(Error::InvalidPlan(format!(
                "tau_d = {} < M = {m}",
                self.tau_d
            )));
        }
        Ok(())
    }
}

/// Default plan: silent throughout P1, then 0, 1, 0, 1, ... in P2.
pub fn make_phase_plan(j_p: usize, tau_p: usize, j_d: usize, tau_d: usize) -> Result<PhasePlan> {
    if j_d == 0 || !j_d.is_multiple_of(2) {
        return Err(Error::InvalidPlan(format!(
            "the alternating pattern needs an even J_d >= 2, got {j_d}"
        )));
    }
    let p2: Vec<bool> = (0..j_d).map(|k| k % 2 == 1).collect();
    PhasePlan::with_pattern(j_p, tau_p, tau_d, &p2)
}

fn dft_rows(rows: usize, tau: usize, p_t: f64, what: &str) -> Result<ComplexMatrix> {
    if rows == 0 {
        return Err(Error::InvalidPlan(format!(
            "{what}: need at least one antenna"
        )));
    }
    if tau < rows {
        return Err(Error::InvalidPlan(format!(
            "{what}: slot length {tau} < antenna count {rows}"
        )));
    }
    if !(p_t > 0.0 && p_t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{what}: power must be > 0, got {p_t}"
        )));
    }
    let amp = (p_t / rows as f64).sqrt();
    let w = -2.0 * std::f64::consts::PI / tau as f64;
    Ok(ComplexMatrix::from_fn(rows, tau, |r, t| {
        // Reduce r * t mod tau first so the phase stays small and exact.
        Complex64::from_polar(amp, w * ((r * t) % tau) as f64)
    }))
}

/// Pilot `Phi` (N x tau_p) with `Phi Phi^H = (p_t tau_p / N) I`.
pub fn make_pilot(n: usize, tau_p: usize, p_t: f64) -> Result<ComplexMatrix> {
    dft_rows(n, tau_p, p_t, "pilot")
}

/// Probe `Psi` (M x tau_d) with `Psi Psi^H = (p_t tau_d / M) I`.
pub fn make_probe(m: usize, tau_d: usize, p_t: f64) -> Result<ComplexMatrix> {
    dft_rows(m, tau_d, p_t, "probe")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveforms {
    pub phi: ComplexMatrix,
    pub psi: ComplexMatrix,
    pub alpha_p: f64,
    pub alpha_d: f64,
    pub p_t_phase1: f64,
    pub p_t_phase2: f64,
}

impl Waveforms {
    pub fn new(
        plan: &PhasePlan,
        m: usize,
        n: usize,
        p_t_phase1: f64,
        p_t_phase2: f64,
    ) -> Result<Self> {
        plan.check_dims(m, n)?;
        Ok(Waveforms {
            phi: make_pilot(n, plan.tau_p, p_t_phase1)?,
            psi: make_probe(m, plan.tau_d, p_t_phase2)?,
            alpha_p: p_t_phase1 * plan.tau_p as f64 / n as f64,
            alpha_d: p_t_phase2 * plan.tau_d as f64 / m as f64,
            p_t_phase1,
            p_t_phase2,
        })
    }

    pub fn m(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }
}

/// Per-phase transmit powers hitting the SNR targets (linear scale). The
/// average reflection coefficient is 0.5 because half the P2 slots are active.
pub fn calibrate_powers(
    ch: &ChannelSet,
    plan: &PhasePlan,
    snr_p: f64,
    snr_d: f64,
) -> Result<(f64, f64)> {
    if !(snr_p > 0.0 && snr_p.is_finite()) || !(snr_d > 0.0 && snr_d.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "SNR targets must be positive and finite, got {snr_p} and {snr_d}"
        )));
    }
    let g = mean_path_gains(ch);
    if !(g.ba > 0.0 && g.ac > 0.0 && g.cb > 0.0) {
        return Err(Error::InvalidInput("zero mean channel gain".into()));
    }
    let p1 = snr_p / (g.ba * plan.j_p as f64 * plan.tau_p as f64);
    let p2 = snr_d / (g.ac * g.cb * plan.j_d as f64 * plan.tau_d as f64 * 0.5);
    Ok((p1, p2))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Received blocks of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// P1 blocks at PanA, each M x tau_p.
    pub yp: Vec<ComplexMatrix>,
    /// P2 blocks at PanB, each N x tau_d.
    pub y: Vec<ComplexMatrix>,
}

/// Source of additive receiver noise.
pub trait NoiseSource {
    fn sample(&mut self, rows: usize, cols: usize) -> ComplexMatrix;
}

impl<T: NoiseSource + ?Sized> NoiseSource for &mut T {
    fn sample(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        (**self).sample(rows, cols)
    }
}

/// Zero noise; used to check the forward model exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Noiseless;

impl NoiseSource for Noiseless {
    fn sample(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::zeros(rows, cols)
    }
}

/// Circular complex Gaussian noise, unit variance per complex entry.
#[derive(Debug, Clone)]
pub struct Awgn<R>(pub R);

impl<R: Rng> NoiseSource for Awgn<R> {
    fn sample(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        complex_gaussian(&mut self.0, rows, cols)
    }
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

fn check_waveforms(ch: &ChannelSet, wf: &Waveforms, plan: &PhasePlan) -> Result<()> {
    if wf.n() != ch.n() || wf.phi.ncols() != plan.tau_p {
        return Err(Error::dims("pilot", (ch.n(), plan.tau_p), wf.phi.shape()));
    }
    if wf.m() != ch.m() || wf.psi.ncols() != plan.tau_d {
        return Err(Error::dims("probe", (ch.m(), plan.tau_d), wf.psi.shape()));
    }
    Ok(())
}

/// P1 blocks `G_BA Phi + W^p`, one per P1 slot.
pub fn transmit_phase1<S: NoiseSource>(
    ch: &ChannelSet,
    wf: &Waveforms,
    plan: &PhasePlan,
    noise: &mut S,
) -> Result<Vec<ComplexMatrix>> {
    check_waveforms(ch, wf, plan)?;
    let clean = ch.g_ba() * &wf.phi;
    Ok((0..plan.j_p)
        .map(|_| &clean + noise.sample(ch.m(), plan.tau_p))
        .collect())
}

/// P2 blocks, one per P2 slot. Under H0 the backscatter term is absent in
/// every slot; under H1 it follows the plan's pattern.
pub fn transmit_phase2<S: NoiseSource>(
    ch: &ChannelSet,
    wf: &Waveforms,
    plan: &PhasePlan,
    p_s: &ComplexMatrix,
    noise: &mut S,
    hypothesis: Hypothesis,
) -> Result<Vec<ComplexMatrix>> {
    check_waveforms(ch, wf, plan)?;
    let m = ch.m();
    if p_s.shape() != (m, m) {
        return Err(Error::dims("transmit_phase2 P_s", (m, m), p_s.shape()));
    }
    let probe = p_s * &wf.psi;
    let direct = &ch.g_ab * &probe;
    let backscatter = ch.cascade() * &probe;
    Ok(plan
        .gamma_p2()
        .iter()
        .map(|&g| {
            let w = noise.sample(ch.n(), plan.tau_d);
            if g && hypothesis == Hypothesis::H1 {
                &direct + &backscatter + w
            } else {
                &direct + w
            }
        })
        .collect())
}
