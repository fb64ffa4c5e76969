//! Runs the self-validating loop on a synthetic pack and prints one line per
//! iteration plus the ledger check at the end.
//!
//! cargo run --release --example svl_loop -- [oracle|stub|grow] [count] [free]

use std::time::Instant;

use svl_forge::pipeline::{report, run_iteration, InputConfig, PipelineConfig, PredictorConfig, SvlState};
use svl_forge::synthgen::{CorruptionSpec, PackConfig, RotationMode};

fn main() -> svl_forge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("stub");
    let count = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let mode = if args.iter().any(|a| a == "free") {
        RotationMode::FreeEuler
    } else {
        RotationMode::Exact24
    };
    let predictor = match kind {
        "oracle" => PredictorConfig::Oracle,
        "grow" => PredictorConfig::Grow { fraction: 0.6 },
        _ => PredictorConfig::Stub {
            base: CorruptionSpec {
                p_merge: 0.5,
                p_split: 0.3,
                p_erode: 0.3,
                p_dilate: 0.3,
                radius: 1,
                seed: 5,
            },
            decay: 2.0,
            feedback: 0.0,
        },
    };
    let input = InputConfig::Synthetic {
        pack: PackConfig::new(count, (4.0, 12.0), 3, mode, 7),
        noise_sigma: 2000.0,
        noise_seed: 1,
    };
    let mut cfg = PipelineConfig::new(input, predictor);
    cfg.max_iterations = 5;

    let mut state = SvlState::new(&cfg)?;
    for _ in 0..cfg.max_iterations {
        let t = Instant::now();
        let s = run_iteration(&mut state, &cfg)?;
        println!(
            "iteration {}: {} new, {} validated ({} voxels), positive {} voxels, {} predictor calls, {} matches, {} inconsistent, error {:?}, {:.1?}",
            s.iteration,
            s.new_particles,
            s.validated_count,
            s.validated_volume,
            s.positive_volume,
            s.predictor_calls,
            s.matches,
            s.inconsistent,
            s.training.as_ref().map(|t| t.error_factor),
            t.elapsed()
        );
        if s.new_particles == 0 && s.positive_volume == 0 {
            break;
        }
    }
    let r = report(&state);
    println!("{} particles matched, {} in every scan", r.matched_particles, r.full_span);
    if let Some(l) = r.ledger {
        println!("ledger: {} wrong of {} matches, {} correct particles", l.wrong_matches, l.matches, l.correct_particles);
    }
    Ok(())
}
