//! Self-validated learning against plain self-training on one synthetic
//! pack, with the simulated model degrading on wrong training particles.
//!
//! cargo run --release --example st_compare -- [count] [iterations] [feedback]

use svl_forge::pipeline::{st_compare, InputConfig, PipelineConfig, PredictorConfig};
use svl_forge::synthgen::{CorruptionSpec, PackConfig, RotationMode};

fn main() -> svl_forge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count = args.first().and_then(|a| a.parse().ok()).unwrap_or(20);
    let iterations = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let feedback = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(3.0);
    let input = InputConfig::Synthetic {
        pack: PackConfig::new(count, (4.0, 12.0), 3, RotationMode::Exact24, 3),
        noise_sigma: 2000.0,
        noise_seed: 1,
    };
    let predictor = PredictorConfig::Stub {
        base: CorruptionSpec {
            p_merge: 0.5,
            p_split: 0.3,
            p_erode: 0.3,
            p_dilate: 0.3,
            radius: 1,
            seed: 5,
        },
        decay: 2.0,
        feedback,
    };
    let mut cfg = PipelineConfig::new(input, predictor);
    cfg.max_iterations = iterations;

    let cmp = st_compare(&cfg)?;
    println!("arms identical after iteration 1: {}", cmp.identical_after_first);
    println!("iteration  svl validated/correct (error)  st validated/correct (error)");
    for (a, b) in cmp.svl.iter().zip(&cmp.st) {
        println!(
            "{:>9}  {:>4} / {:<4} ({:.3})              {:>4} / {:<4} ({:.3})",
            a.iteration,
            a.validated,
            a.correct,
            a.error_factor.unwrap_or(0.0),
            b.validated,
            b.correct,
            b.error_factor.unwrap_or(0.0)
        );
    }
    Ok(())
}
