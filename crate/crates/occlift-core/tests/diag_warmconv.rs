use std::time::Instant;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use occlift_core::config::ExperimentConfig;
use occlift_core::harness::{build_adjacencies, evaluate, EvalConfig};
use occlift_core::nets::ModelState;
use occlift_core::optim::{AdamHyper, AdamState};
use occlift_core::rng::seeded;
use occlift_core::synth::{generate_dataset, Subset, SynthConfig};
use occlift_core::training::*;
use rand::Rng;

#[test]
#[ignore]
fn warmup_convergence() {
    let ds = generate_dataset(&SynthConfig {
        n_train_sequences: 8, n_test_sequences: 2, n_frames: 600, n_cameras: 4,
        noise_px: 5.0, occlusion_rate: 0.3, labeled_fraction: 1.0, n_joints: 17, seed: 1000,
    }).unwrap();
    let cfg = ExperimentConfig::default();
    let adjs = build_adjacencies(&cfg, &ds.skeleton).unwrap();
    let ts = build_training_set(&ds, cfg.t_frames, cfg.t_p, TrainMode::Supervised).unwrap();
    eprintln!("warmup frames {}", ts.warmup_frames.len());

    std::thread::scope(|scope| {
        for (name, batch, lr) in [("b8lr1e-4", 8usize, 1e-4f64), ("b8lr4e-4", 8, 4e-4)] {
            let (ds, cfg, adjs, ts) = (&ds, &cfg, &adjs, &ts);
            scope.spawn(move || {
                let mut state = ModelState::init(cfg.lnet_config(17), cfg.rnet_config(17), 42).unwrap();
                let mut adam = AdamState::for_params(&state.phi_tensors(), AdamHyper::default());
                let mut rng = seeded(5);
                let tcfg = TrainConfig { lr_warmup: lr, ..cfg.train.clone() };
                let t0 = Instant::now();
                for iter in 1..=6000u64 {
                    let b: Vec<(usize, usize)> = (0..batch)
                        .map(|_| ts.warmup_frames[rng.random_range(0..ts.warmup_frames.len())])
                        .collect();
                    let loss = warmup_step(&mut state, &mut adam, ts, &b, &tcfg, &mut rng, iter).unwrap();
                    if iter % 1000 == 0 {
                        let ev = evaluate(&state, adjs, ds, &EvalConfig {
                            subset: Subset::Test, input: Input2D::Detections, window_stride: 37,
                        }).unwrap();
                        eprintln!("{name} iter {iter}: loss {loss:.0} | test lnet mpjpe {:.1} | {:?}",
                            ev.lnet.mpjpe, t0.elapsed());
                    }
                }
            });
        }
    });
}
