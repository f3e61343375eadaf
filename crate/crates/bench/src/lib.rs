//! Fixtures shared by the criterion benches.

use bibc_core::emitter::{build_projector, ls_estimate_direct};
use bibc_core::reader::ReaderSideInfo;
use bibc_core::scene::{normalize_backscatter, synthesize_channels, Scene};
use bibc_core::waveform::{
    calibrate_powers, db_to_linear, make_phase_plan, transmit_phase1, transmit_phase2, Awgn,
    Hypothesis, Observation, Waveforms,
};
use bibc_core::ChannelSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One reference-layout trial: BD at (3, 3), K = 3, SNR_p = 20 dB,
/// SNR_d = 2 dB, estimated projection, BD present.
pub struct Trial {
    pub channels: ChannelSet,
    pub info: ReaderSideInfo,
    pub obs: Observation,
}

pub fn reference_trial(seed: u64) -> Trial {
    let scene = Scene::reference(16, 16, [3.0, 3.0]);
    let channels = normalize_backscatter(&synthesize_channels(&scene).unwrap()).unwrap();
    let plan = make_phase_plan(1, 16, 2, 16).unwrap();
    let (p1, p2) =
        calibrate_powers(&channels, &plan, db_to_linear(20.0), db_to_linear(2.0)).unwrap();
    let wf = Waveforms::new(&plan, 16, 16, p1, p2).unwrap();
    let mut noise = Awgn(ChaCha8Rng::seed_from_u64(seed));
    let yp = transmit_phase1(&channels, &wf, &plan, &mut noise).unwrap();
    let g_hat = ls_estimate_direct(&yp, &wf.phi, plan.j_p)
        .unwrap()
        .transpose();
    let projector = build_projector(&g_hat, 3).unwrap();
    let y = transmit_phase2(
        &channels,
        &wf,
        &plan,
        &projector.p_s,
        &mut noise,
        Hypothesis::H1,
    )
    .unwrap();
    let info = ReaderSideInfo::new(&wf, &projector, &plan).unwrap();
    Trial {
        channels,
        info,
        obs: Observation { yp, y },
    }
}
