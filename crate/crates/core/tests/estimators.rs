mod common;

use bibc_core::emitter::{build_projector, ls_estimate_direct};
use bibc_core::metrics::{pd_at_pfa, DetectionScenario, ProjectionMode};
use bibc_core::numerics::{frob2, svd_thin, ComplexMatrix};
use bibc_core::reader::{
    estimate_gab_h0, estimate_gab_h1_initial, estimate_h1, estimate_hbl, glrt_log, objective,
    p2only_estimate_h1, p2only_estimate_hdl_h0, p2only_glrt, p2only_glrt_log, p2only_objective,
    refine_gab_h1, DetectorMode, DirectLink, H1Estimate, H1Solver, ReaderSideInfo,
};
use bibc_core::scene::{normalize_backscatter, synthesize_channels, Scene};
use bibc_core::waveform::{
    calibrate_powers, db_to_linear, make_phase_plan, transmit_phase1, transmit_phase2, Hypothesis,
    Noiseless, Observation, Waveforms,
};
use common::*;
use proptest::prelude::*;

#[test]
fn h0_estimator_matches_stacked_ls() {
    for seed in 0..30 {
        let inst = random_instance(seed, true);
        let got = estimate_gab_h0(&inst.obs, &inst.info).unwrap();
        let oracle = ls_oracle(
            inst.ch.g_ab.shape(),
            &gab_terms(&inst, &inst.plan.s_d(), None),
        );
        assert!(
            rel_err(&got, &oracle) < 1e-8,
            "seed {seed}: {}",
            rel_err(&got, &oracle)
        );
    }
}

#[test]
fn transformed_and_raw_objectives_share_the_minimiser() {
    // The sufficient statistics Phi^* (Y^p)^T / sqrt(alpha_p) and
    // Y Psi^H / sqrt(alpha_d) with the reduced model give the same minimiser
    // as the raw blocks.
    for seed in 0..20 {
        let inst = random_instance(100 + seed, true);
        let (ap, ad) = (inst.wf.alpha_p, inst.wf.alpha_d);
        let raw = ls_oracle(
            inst.ch.g_ab.shape(),
            &gab_terms(&inst, &inst.plan.s_d(), None),
        );
        let mut terms: Vec<(ComplexMatrix, LinearMap)> = Vec::new();
        for yp in &inst.obs.yp {
            let y1 = (inst.wf.phi.conjugate() * yp.transpose()).scale(1.0 / ap.sqrt());
            terms.push((y1, Box::new(move |g: &ComplexMatrix| g.scale(ap.sqrt()))));
        }
        for y in &inst.obs.y {
            let y2 = (y * inst.wf.psi.adjoint()).scale(1.0 / ad.sqrt());
            let ps = inst.pr.p_s.clone();
            terms.push((
                y2,
                Box::new(move |g: &ComplexMatrix| (g * &ps).scale(ad.sqrt())),
            ));
        }
        let transformed = ls_oracle(inst.ch.g_ab.shape(), &terms);
        assert!(
            rel_err(&transformed, &raw) < 1e-8,
            "seed {seed}: {}",
            rel_err(&transformed, &raw)
        );
        let closed = estimate_gab_h0(&inst.obs, &inst.info).unwrap();
        assert!(rel_err(&closed, &transformed) < 1e-8);
    }
}

#[test]
fn h0_reduces_to_average_when_unprojected_and_balanced() {
    use bibc_core::waveform::{complex_gaussian, make_pilot, make_probe};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let plan = make_phase_plan(1, 4, 2, 4).unwrap();
        // alpha_p J_p = alpha_d J_d: p1 * 4/4 * 1 = p2 * 4/4 * 2.
        let wf = Waveforms::new(&plan, 4, 4, 2.0, 1.0).unwrap();
        assert_eq!(wf.phi, make_pilot(4, 4, 2.0).unwrap());
        assert_eq!(wf.psi, make_probe(4, 4, 1.0).unwrap());
        let pr = build_projector(&ComplexMatrix::identity(4, 4), 0).unwrap();
        let info = ReaderSideInfo::new(&wf, &pr, &plan).unwrap();
        let obs = Observation {
            yp: vec![complex_gaussian(&mut rng, 4, 4)],
            y: vec![
                complex_gaussian(&mut rng, 4, 4),
                complex_gaussian(&mut rng, 4, 4),
            ],
        };
        let p1 = ls_estimate_direct(&obs.yp, &wf.phi, 1).unwrap().transpose();
        let p2 = ((&obs.y[0] + &obs.y[1]) * wf.psi.adjoint()).unscale(2.0 * wf.alpha_d);
        let avg = (p1 + p2).unscale(2.0);
        assert!(max_abs(&(estimate_gab_h0(&obs, &info).unwrap() - avg)) < 1e-10);
    }
}

#[test]
fn h1_initial_matches_restricted_ls() {
    for seed in 0..30 {
        let inst = random_instance(200 + seed, true);
        let got = estimate_gab_h1_initial(&inst.obs, &inst.info).unwrap();
        let oracle = ls_oracle(
            inst.ch.g_ab.shape(),
            &gab_terms(&inst, &inst.plan.s_d0(), None),
        );
        assert!(
            rel_err(&got, &oracle) < 1e-8,
            "seed {seed}: {}",
            rel_err(&got, &oracle)
        );
    }
}

#[test]
fn refine_matches_compensated_ls() {
    for seed in 0..30 {
        let inst = random_instance(300 + seed, true);
        let g0 = estimate_gab_h1_initial(&inst.obs, &inst.info).unwrap();
        let h = estimate_hbl(&inst.obs, &inst.info, &g0).unwrap();
        let got = refine_gab_h1(&inst.obs, &inst.info, &h).unwrap();
        let oracle = ls_oracle(
            inst.ch.g_ab.shape(),
            &gab_terms(&inst, &inst.plan.s_d(), Some(&h)),
        );
        assert!(
            rel_err(&got, &oracle) < 1e-8,
            "seed {seed}: {}",
            rel_err(&got, &oracle)
        );
        let zero = ComplexMatrix::zeros(h.nrows(), h.ncols());
        let plain = refine_gab_h1(&inst.obs, &inst.info, &zero).unwrap();
        assert!(max_abs(&(plain - estimate_gab_h0(&inst.obs, &inst.info).unwrap())) < 1e-12);
    }
}

#[test]
fn hbl_fit_beats_random_rank_one_candidates() {
    for seed in 0..8 {
        let inst = random_instance(400 + seed, true);
        let g = estimate_gab_h1_initial(&inst.obs, &inst.info).unwrap();
        let h = estimate_hbl(&inst.obs, &inst.info, &g).unwrap();
        let d = &g * &inst.pr.p_s;
        let ours = hbl_objective(&inst, &d, &h);
        let best = best_random_hbl(&inst, &d, 10_000, seed);
        assert!(ours <= best * (1.0 + 1e-12), "seed {seed}: {ours} > {best}");
        // Range and rank constraints.
        assert!(max_abs(&(&h * &inst.pr.p - &h)) < 1e-9);
        let s = svd_thin(&h, 0.0).unwrap().singular_values;
        assert!(s.len() < 2 || s[1] < 1e-9 * s[0]);
    }
}

#[test]
fn hbl_zero_residual_gives_zero() {
    let inst = random_instance(7, false);
    // Make the active slots carry no backscatter.
    let mut obs = inst.obs.clone();
    let clean = &inst.ch.g_ab * &inst.pr.p_s * &inst.wf.psi;
    for y in obs.y.iter_mut() {
        *y = clean.clone();
    }
    let h = estimate_hbl(&obs, &inst.info, &inst.ch.g_ab).unwrap();
    assert!(max_abs(&h) < 1e-12);
}

#[test]
fn p2only_h0_matches_projected_ls() {
    for seed in 0..30 {
        let inst = random_instance(500 + seed, true);
        let got = p2only_estimate_hdl_h0(&inst.obs, &inst.info).unwrap();
        let mut terms: Vec<(ComplexMatrix, LinearMap)> = Vec::new();
        for y in &inst.obs.y {
            terms.push((y.clone(), Box::new(|h: &ComplexMatrix| h * &inst.wf.psi)));
        }
        let oracle = ls_oracle(inst.ch.g_ab.shape(), &terms) * &inst.pr.p;
        assert!(
            rel_err(&got, &oracle) < 1e-8,
            "seed {seed}: {}",
            rel_err(&got, &oracle)
        );
        assert!(max_abs(&(&got * &inst.pr.p - &got)) < 1e-9);
    }
}

#[test]
fn p2only_h0_of_zero_blocks_is_zero() {
    let inst = random_instance(9, true);
    let mut obs = inst.obs.clone();
    for y in obs.y.iter_mut() {
        y.fill(bibc_core::Complex64::new(0.0, 0.0));
    }
    assert_eq!(
        max_abs(&p2only_estimate_hdl_h0(&obs, &inst.info).unwrap()),
        0.0
    );
}

fn full_statistic_oracle(inst: &common::Instance, h0: &ComplexMatrix, h1: &H1Estimate) -> f64 {
    let g1 = h1.direct.g_ab().unwrap();
    let b = h0 * &inst.pr.p_s * &inst.wf.psi;
    let a0 = g1 * &inst.pr.p_s * &inst.wf.psi;
    let a1 = &a0 + &h1.h_bl * &inst.wf.psi;
    let c1 = g1.transpose() * &inst.wf.phi;
    let c2 = h0.transpose() * &inst.wf.phi;
    direct_log_glr(
        &inst.obs,
        inst.plan.gamma_p2(),
        &a0,
        &a1,
        &b,
        Some((&c1, &c2)),
    )
}

#[test]
fn glrt_expansion_matches_direct_norms() {
    for seed in 0..40 {
        let inst = random_instance(600 + seed, true);
        let h0 = estimate_gab_h0(&inst.obs, &inst.info).unwrap();
        let h1 = estimate_h1(&inst.obs, &inst.info, 1e-10, 50).unwrap();
        let ours = glrt_log(&inst.obs, &inst.info, &h0, &h1).unwrap();
        let oracle = full_statistic_oracle(&inst, &h0, &h1);
        assert!(
            (ours - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
            "seed {seed}: {ours} vs {oracle}"
        );

        let e0 = p2only_estimate_hdl_h0(&inst.obs, &inst.info).unwrap();
        let e1 = p2only_estimate_h1(&inst.obs, &inst.info, 1e-10, 50).unwrap();
        let ours = p2only_glrt_log(&inst.obs, &inst.info, &e0, &e1).unwrap();
        let b = &e0 * &inst.wf.psi;
        let a0 = e1.direct.matrix() * &inst.wf.psi;
        let a1 = &a0 + &e1.h_bl * &inst.wf.psi;
        let oracle = direct_log_glr(&inst.obs, inst.plan.gamma_p2(), &a0, &a1, &b, None);
        assert!(
            (ours - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
            "seed {seed}"
        );
    }
}

#[test]
fn nested_model_gives_zero_statistic() {
    let inst = random_instance(11, true);
    let h0 = estimate_gab_h0(&inst.obs, &inst.info).unwrap();
    let collapsed = H1Estimate {
        direct: DirectLink::Channel(h0.clone()),
        h_bl: ComplexMatrix::zeros(h0.nrows(), h0.ncols()),
        iterations: 0,
        final_delta: 0.0,
        converged: true,
        objective_trace: vec![],
    };
    assert_eq!(
        glrt_log(&inst.obs, &inst.info, &h0, &collapsed).unwrap(),
        0.0
    );

    let e0 = p2only_estimate_hdl_h0(&inst.obs, &inst.info).unwrap();
    let collapsed = H1Estimate {
        direct: DirectLink::Effective(e0.clone()),
        ..collapsed
    };
    assert_eq!(
        p2only_glrt_log(&inst.obs, &inst.info, &e0, &collapsed).unwrap(),
        0.0
    );
}

fn reference_noise_free(
    k: usize,
) -> (
    bibc_core::ChannelSet,
    ReaderSideInfo,
    Observation,
    bibc_core::Projector,
) {
    let ch =
        normalize_backscatter(&synthesize_channels(&Scene::reference(16, 16, [3.0, 3.0])).unwrap())
            .unwrap();
    let plan = make_phase_plan(1, 16, 2, 16).unwrap();
    let (p1, p2) = calibrate_powers(&ch, &plan, db_to_linear(20.0), db_to_linear(2.0)).unwrap();
    let wf = Waveforms::new(&plan, 16, 16, p1, p2).unwrap();
    let pr = build_projector(&ch.g_ab, k).unwrap();
    let yp = transmit_phase1(&ch, &wf, &plan, &mut Noiseless).unwrap();
    let y = transmit_phase2(&ch, &wf, &plan, &pr.p_s, &mut Noiseless, Hypothesis::H1).unwrap();
    let info = ReaderSideInfo::new(&wf, &pr, &plan).unwrap();
    (ch, info, Observation { yp, y }, pr)
}

#[test]
fn noise_free_recovery() {
    for k in [0, 1, 3, 5] {
        let (ch, info, obs, pr) = reference_noise_free(k);
        let h_true = (ch.cascade() * &pr.p).scale(pr.lambda);

        assert!(rel_err(&estimate_gab_h1_initial(&obs, &info).unwrap(), &ch.g_ab) < 1e-9);
        assert!(rel_err(&estimate_hbl(&obs, &info, &ch.g_ab).unwrap(), &h_true) < 1e-9);
        assert!(rel_err(&refine_gab_h1(&obs, &info, &h_true).unwrap(), &ch.g_ab) < 1e-9);

        let est = estimate_h1(&obs, &info, 1e-8, 50).unwrap();
        assert!(
            est.converged && est.iterations <= 2,
            "K = {k}: {} iterations",
            est.iterations
        );
        assert!(rel_err(est.direct.g_ab().unwrap(), &ch.g_ab) < 1e-9);
        assert!(
            rel_err(&est.h_bl, &h_true) < 1e-9,
            "K = {k}: {} {}",
            rel_err(&est.h_bl, &h_true),
            rel_err(est.direct.g_ab().unwrap(), &ch.g_ab)
        );

        let r = p2only_glrt(&obs, &info, 1e-8, 50, 1.0).unwrap();
        assert!(r.h1_estimate.direct.g_ab().is_none());
        assert!(rel_err(r.h1_estimate.direct.matrix(), &(&ch.g_ab * &pr.p_s)) < 1e-9);
        assert!(rel_err(&r.h1_estimate.h_bl, &h_true) < 1e-9);
        assert!(r.log_glr > 0.0);
    }
}

#[test]
fn noise_free_h0_estimates() {
    let ch = synthesize_channels(&Scene::reference(16, 16, [3.0, 3.0])).unwrap();
    let plan = make_phase_plan(1, 16, 2, 16).unwrap();
    let wf = Waveforms::new(&plan, 16, 16, 0.5, 0.2).unwrap();
    let pr = build_projector(&ch.g_ab, 3).unwrap();
    let yp = transmit_phase1(&ch, &wf, &plan, &mut Noiseless).unwrap();
    let y = transmit_phase2(&ch, &wf, &plan, &pr.p_s, &mut Noiseless, Hypothesis::H0).unwrap();
    let info = ReaderSideInfo::new(&wf, &pr, &plan).unwrap();
    let obs = Observation { yp, y };
    assert!(rel_err(&estimate_gab_h0(&obs, &info).unwrap(), &ch.g_ab) < 1e-9);
    let hdl = p2only_estimate_hdl_h0(&obs, &info).unwrap();
    assert!(max_abs(&(hdl - &ch.g_ab * &pr.p_s)) < 1e-10);
}

#[test]
fn infinite_epsilon_stops_after_one_cycle() {
    let inst = random_instance(12, true);
    let est = estimate_h1(&inst.obs, &inst.info, f64::INFINITY, 50).unwrap();
    assert_eq!(est.iterations, 1);
    assert!(est.converged);
    assert!(estimate_h1(&inst.obs, &inst.info, 0.0, 50).is_err());
    assert!(estimate_h1(&inst.obs, &inst.info, 1e-8, 0).is_err());
}

fn own_objective(inst: &common::Instance, g: &ComplexMatrix, h: &ComplexMatrix) -> f64 {
    let mut s = 0.0;
    for yp in &inst.obs.yp {
        s += frob2(&(yp - g.transpose() * &inst.wf.phi));
    }
    for (y, &gamma) in inst.obs.y.iter().zip(inst.plan.gamma_p2()) {
        let mut r = y - g * &inst.pr.p_s * &inst.wf.psi;
        if gamma {
            r -= h * &inst.wf.psi;
        }
        s += frob2(&r);
    }
    s
}

#[test]
fn h1_objective_never_increases() {
    for seed in 0..100 {
        let inst = random_instance(1000 + seed, true);
        let mut alg = H1Solver::new(&inst.obs, &inst.info).unwrap();
        let mut last = own_objective(&inst, alg.g_ab(), alg.h_bl());
        assert!((alg.objective() - last).abs() <= 1e-10 * last);
        for _ in 0..30 {
            // Half steps: G refit with H fixed, then H refit with G fixed.
            let g = refine_gab_h1(&inst.obs, &inst.info, alg.h_bl()).unwrap();
            let mid = own_objective(&inst, &g, alg.h_bl());
            assert!(mid <= last * (1.0 + 1e-12), "seed {seed}: {mid} > {last}");
            alg.step().unwrap();
            let now = own_objective(&inst, alg.g_ab(), alg.h_bl());
            assert!(now <= mid * (1.0 + 1e-12), "seed {seed}: {now} > {mid}");
            last = now;
        }
        let est = estimate_h1(&inst.obs, &inst.info, 1e-12, 50).unwrap();
        assert!(est
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(
            (objective(&inst.obs, &inst.info, est.direct.g_ab().unwrap(), &est.h_bl)
                - est.objective_trace.last().unwrap())
            .abs()
                < 1e-9 * est.objective_trace[0]
        );

        let p2 = p2only_estimate_h1(&inst.obs, &inst.info, 1e-12, 50).unwrap();
        assert!(p2
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(
            (p2only_objective(&inst.obs, &inst.info, p2.direct.matrix(), &p2.h_bl)
                - p2.objective_trace.last().unwrap())
            .abs()
                < 1e-9 * p2.objective_trace[0]
        );
    }
}

#[test]
fn estimates_respect_range_and_rank() {
    for seed in 0..20 {
        let inst = random_instance(2000 + seed, true);
        let p = &inst.pr.p;
        for est in [
            estimate_h1(&inst.obs, &inst.info, 1e-8, 50).unwrap(),
            p2only_estimate_h1(&inst.obs, &inst.info, 1e-8, 50).unwrap(),
        ] {
            assert!(max_abs(&(&est.h_bl * p - &est.h_bl)) < 1e-9);
            let s = svd_thin(&est.h_bl, 0.0).unwrap().singular_values;
            assert!(s.len() < 2 || s[1] < 1e-9 * s[0]);
            if let DirectLink::Effective(h) = &est.direct {
                assert!(max_abs(&(h * p - h)) < 1e-9);
            }
        }
    }
}

fn reference_scenario(detector: DetectorMode) -> DetectionScenario {
    let ch =
        normalize_backscatter(&synthesize_channels(&Scene::reference(16, 16, [3.0, 3.0])).unwrap())
            .unwrap();
    let plan = make_phase_plan(1, 16, 2, 16).unwrap();
    let (p1, p2) = calibrate_powers(&ch, &plan, db_to_linear(20.0), db_to_linear(2.0)).unwrap();
    DetectionScenario {
        waveforms: Waveforms::new(&plan, 16, 16, p1, p2).unwrap(),
        channels: ch,
        plan,
        k: 3,
        projection: ProjectionMode::Estimated,
        detector,
        epsilon: 1e-8,
        max_iters: 50,
    }
}

#[test]
fn statistic_separates_hypotheses_and_p1_data_helps() {
    let trials = 1500;
    let (f0, f1) = reference_scenario(DetectorMode::Full)
        .statistics(trials, 42)
        .unwrap();
    let (q0, q1) = reference_scenario(DetectorMode::P2only)
        .statistics(trials, 42)
        .unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&f1) > mean(&f0));
    assert!(mean(&q1) > mean(&q0));
    for pfa in [0.05, 0.1, 0.2] {
        let full = pd_at_pfa(&f0, &f1, pfa).unwrap();
        let p2 = pd_at_pfa(&q0, &q1, pfa).unwrap();
        assert!(p2 <= full, "P_FA {pfa}: p2only {p2} > full {full}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn closed_forms_match_oracles(seed in any::<u64>()) {
        let inst = random_instance(seed, true);
        let g = estimate_gab_h0(&inst.obs, &inst.info).unwrap();
        let oracle = ls_oracle(inst.ch.g_ab.shape(), &gab_terms(&inst, &inst.plan.s_d(), None));
        prop_assert!(rel_err(&g, &oracle) < 1e-8);
        let h1 = estimate_h1(&inst.obs, &inst.info, 1e-8, 50).unwrap();
        let ours = glrt_log(&inst.obs, &inst.info, &g, &h1).unwrap();
        let direct = full_statistic_oracle(&inst, &g, &h1);
        prop_assert!((ours - direct).abs() <= 1e-8 * direct.abs().max(1.0));
    }
}
