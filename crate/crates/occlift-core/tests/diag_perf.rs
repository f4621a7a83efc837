use std::time::Instant;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use occlift_core::config::ExperimentConfig;
use occlift_core::harness::{build_adjacencies, masking_mode};
use occlift_core::nets::ModelState;
use occlift_core::optim::{AdamHyper, AdamState};
use occlift_core::rng::seeded;
use occlift_core::synth::{generate_dataset, SynthConfig};
use occlift_core::training::*;

#[test]
#[ignore]
fn step_timing() {
    let cfg = ExperimentConfig::default();
    let ds = generate_dataset(&SynthConfig {
        n_train_sequences: 1, n_test_sequences: 0, n_frames: 100,
        labeled_fraction: 1.0, seed: 0, ..SynthConfig::default()
    }).unwrap();
    let t0 = Instant::now();
    let ts = build_training_set(&ds, cfg.t_frames, cfg.t_p, TrainMode::Supervised).unwrap();
    println!("build_training_set: {:?}", t0.elapsed());
    let adjs = build_adjacencies(&cfg, &ds.skeleton).unwrap();
    let masking = masking_mode(&cfg, 17, 7).unwrap();
    let mut state = ModelState::init(cfg.lnet_config(17), cfg.rnet_config(17), 1).unwrap();
    let mut adam_phi = AdamState::for_params(&state.phi_tensors(), AdamHyper::default());
    let mut adam_theta = AdamState::for_params(&state.theta_tensors(), AdamHyper::default());
    let mut rng = seeded(3);
    let tcfg = cfg.train.clone();

    // warmup step timing
    let t0 = Instant::now();
    for i in 0..20 {
        let batch = vec![ts.warmup_frames[i % ts.warmup_frames.len()]];
        warmup_step(&mut state, &mut adam_phi, &ts, &batch, &tcfg, &mut rng, 1).unwrap();
    }
    println!("warmup step: {:?}", t0.elapsed() / 20);

    // joint step timing
    let t0 = Instant::now();
    for i in 0..20 {
        let batch = vec![ts.labeled_windows[i % ts.labeled_windows.len()]];
        joint_step(&mut state, &mut adam_phi, &mut adam_theta, &ts, &batch, &adjs, &masking, &tcfg, &mut rng, 1).unwrap();
    }
    println!("joint step: {:?}", t0.elapsed() / 20);
}
