#![allow(dead_code)]

use bibc_core::emitter::{build_projector, Projector};
use bibc_core::numerics::{frob2, ComplexMatrix};
use bibc_core::reader::ReaderSideInfo;
use bibc_core::waveform::{
    complex_gaussian, make_phase_plan, transmit_phase1, transmit_phase2, Awgn, Hypothesis,
    Noiseless, Observation, PhasePlan, Waveforms,
};
use bibc_core::{ChannelSet, Complex64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type LinearMap<'a> = Box<dyn Fn(&ComplexMatrix) -> ComplexMatrix + 'a>;

/// Least squares over an unknown complex matrix `X` of the given shape:
/// minimises `sum_t ||Y_t - L_t(X)||^2` for linear maps `L_t`. The real
/// design matrix is assembled column by column from the responses to the
/// real and imaginary unit basis matrices and solved by Householder QR, so
/// nothing here shares code with the closed-form estimators.
pub fn ls_oracle(shape: (usize, usize), terms: &[(ComplexMatrix, LinearMap)]) -> ComplexMatrix {
    let (r, c) = shape;
    let params = 2 * r * c;
    let mut rhs = Vec::new();
    for (y, _) in terms {
        rhs.extend(y.iter().map(|z| z.re));
        rhs.extend(y.iter().map(|z| z.im));
    }
    let mut a = DMatrix::<f64>::zeros(rhs.len(), params);
    for p in 0..params {
        let mut e = ComplexMatrix::zeros(r, c);
        let idx = p / 2;
        e[(idx % r, idx / r)] = if p % 2 == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 1.0)
        };
        let mut col = Vec::with_capacity(rhs.len());
        for (_, l) in terms {
            let out = l(&e);
            col.extend(out.iter().map(|z| z.re));
            col.extend(out.iter().map(|z| z.im));
        }
        a.set_column(p, &DVector::from_vec(col));
    }
    let b = DVector::from_vec(rhs);
    let qr = a.clone().qr();
    let (q, upper) = (qr.q(), qr.r());
    let solve = |rhs: &DVector<f64>| {
        upper
            .solve_upper_triangular(&(q.transpose() * rhs))
            .expect("full column rank")
    };
    // One round of refinement on the residual.
    let mut x = solve(&b);
    x += solve(&(&b - &a * &x));
    ComplexMatrix::from_fn(r, c, |i, j| {
        let p = 2 * (j * r + i);
        Complex64::new(x[p], x[p + 1])
    })
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    frob2(&(a - b)).sqrt() / frob2(b).sqrt().max(1e-300)
}

/// Random small instance: channels, waveforms, projector, plan and a noisy
/// H1 observation.
pub struct Instance {
    pub ch: ChannelSet,
    pub wf: Waveforms,
    pub plan: PhasePlan,
    pub pr: Projector,
    pub info: ReaderSideInfo,
    pub obs: Observation,
}

pub fn random_instance(seed: u64, noisy: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=6);
    let n = rng.random_range(2..=6);
    let k = rng.random_range(0..m.min(n + 1)).min(m - 1);
    let j_p = rng.random_range(1..=2);
    let j_d = 2 * rng.random_range(1..=2);
    let tau_p = n + rng.random_range(0..=2);
    let tau_d = m + rng.random_range(0..=2);
    let plan = make_phase_plan(j_p, tau_p, j_d, tau_d).unwrap();
    let ch = ChannelSet::new(
        complex_gaussian(&mut rng, n, m),
        complex_gaussian(&mut rng, m, 1),
        complex_gaussian(&mut rng, n, 1),
    )
    .unwrap();
    let wf = Waveforms::new(
        &plan,
        m,
        n,
        rng.random_range(0.2..3.0),
        rng.random_range(0.2..3.0),
    )
    .unwrap();
    // Projector from a perturbed channel, as PanA would build it.
    let g_hat = &ch.g_ab + complex_gaussian(&mut rng, n, m).scale(0.3);
    let pr = build_projector(&g_hat, k).unwrap();
    let info = ReaderSideInfo::new(&wf, &pr, &plan).unwrap();
    let obs = if noisy {
        let mut noise = Awgn(&mut rng);
        let yp = transmit_phase1(&ch, &wf, &plan, &mut noise).unwrap();
        let y = transmit_phase2(&ch, &wf, &plan, &pr.p_s, &mut noise, Hypothesis::H1).unwrap();
        Observation { yp, y }
    } else {
        let yp = transmit_phase1(&ch, &wf, &plan, &mut Noiseless).unwrap();
        let y = transmit_phase2(&ch, &wf, &plan, &pr.p_s, &mut Noiseless, Hypothesis::H1).unwrap();
        Observation { yp, y }
    };
    Instance {
        ch,
        wf,
        plan,
        pr,
        info,
        obs,
    }
}

/// Stacked P1 + P2 terms for an unknown `G_AB`, with `sub[k]` removed from
/// P2 block `k` and only the listed P2 slots used.
pub fn gab_terms<'a>(
    inst: &'a Instance,
    slots: &[usize],
    sub: Option<&ComplexMatrix>,
) -> Vec<(ComplexMatrix, LinearMap<'a>)> {
    let mut terms: Vec<(ComplexMatrix, LinearMap)> = Vec::new();
    for yp in &inst.obs.yp {
        terms.push((
            yp.clone(),
            Box::new(move |g: &ComplexMatrix| g.transpose() * &inst.wf.phi),
        ));
    }
    let gamma = inst.plan.gamma_p2();
    for &k in slots {
        let mut y = inst.obs.y[k].clone();
        if let (Some(h), true) = (sub, gamma[k]) {
            y -= h * &inst.wf.psi;
        }
        terms.push((
            y,
            Box::new(move |g: &ComplexMatrix| g * &inst.pr.p_s * &inst.wf.psi),
        ));
    }
    terms
}

/// Log-likelihood difference evaluated from the residual norms directly.
pub fn direct_log_glr(
    obs: &Observation,
    gamma_p2: &[bool],
    a0: &ComplexMatrix,
    a1: &ComplexMatrix,
    b: &ComplexMatrix,
    c1: Option<(&ComplexMatrix, &ComplexMatrix)>,
) -> f64 {
    let mut s = 0.0;
    for (y, &g) in obs.y.iter().zip(gamma_p2) {
        let a = if g { a1 } else { a0 };
        s += -frob2(&(y - a)) + frob2(&(y - b));
    }
    if let Some((c1, c2)) = c1 {
        for yp in &obs.yp {
            s += -frob2(&(yp - c1)) + frob2(&(yp - c2));
        }
    }
    s
}

/// Sum of squared P2 residuals over the active slots for `H_BL = h`.
pub fn hbl_objective(inst: &Instance, direct_eff: &ComplexMatrix, h: &ComplexMatrix) -> f64 {
    let mut s = 0.0;
    for k in inst.plan.s_d1() {
        s += frob2(&(&inst.obs.y[k] - direct_eff * &inst.wf.psi - h * &inst.wf.psi));
    }
    s
}

/// Best objective over `samples` random rank-one candidates `Lambda c x y^H Q^H`,
/// with the scalar `c` chosen optimally for each direction pair.
pub fn best_random_hbl(
    inst: &Instance,
    direct_eff: &ComplexMatrix,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pr = &inst.pr;
    let residuals: Vec<ComplexMatrix> = inst
        .plan
        .s_d1()
        .iter()
        .map(|&k| &inst.obs.y[k] - direct_eff * &inst.wf.psi)
        .collect();
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let x = complex_gaussian(&mut rng, inst.info.n(), 1);
        let y = complex_gaussian(&mut rng, pr.q.ncols(), 1);
        let h = (x * y.adjoint() * pr.q.adjoint()).scale(pr.lambda);
        let b = &h * &inst.wf.psi;
        let num: Complex64 = residuals.iter().map(|r| b.dotc(r)).sum();
        let c = num / (frob2(&b) * residuals.len() as f64);
        let f: f64 = residuals
            .iter()
            .map(|r| frob2(&(r - b.map(|z| z * c))))
            .sum();
        best = best.min(f);
    }
    best
}
