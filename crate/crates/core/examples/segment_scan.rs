//! Segments one rendered scan from scratch: Otsu mask, patch-wise boundary
//! prediction, then separation. Compares the particle count with the truth.
//!
//! cargo run --release --example segment_scan -- [oracle|grow] [count]

use std::time::Instant;

use svl_forge::boundary::{predict_boundaries, OraclePredictor, PatchPredictor, PatchSpec, RegionGrowPredictor};
use svl_forge::pipeline::Truth;
use svl_forge::separation::{separate, Connectivity};
use svl_forge::synthgen::{generate_pack, render_scans, PackConfig, RotationMode};
use svl_forge::volume::{label_crops, otsu_threshold, threshold};

fn main() -> svl_forge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("grow");
    let count = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let pack = generate_pack(&PackConfig::new(count, (4.0, 12.0), 1, RotationMode::Exact24, 11))?;
    let (gray, truth) = render_scans(&pack, 2000.0, 3)?.remove(0);

    let m = threshold(&gray, otsu_threshold(&gray));
    let predictor: Box<dyn PatchPredictor> = match kind {
        "oracle" => Box::new(OraclePredictor::new(truth.clone())),
        _ => Box::new(RegionGrowPredictor { fraction: 0.6 }),
    };
    let t = Instant::now();
    let b = predict_boundaries(&gray, &m, predictor.as_ref(), &PatchSpec::default())?;
    let labels = separate(&m, &b.boundary, 10, Connectivity::TwentySix)?;
    println!(
        "{kind}: {} predictor calls, {} boundary voxels, {:.2?}",
        b.predictor_calls,
        b.boundary.popcount(),
        t.elapsed()
    );

    let truth = Truth::new(vec![truth]);
    let crops = label_crops(&labels);
    let correct = crops.values().filter(|c| truth.is_correct(0, c)).count();
    println!(
        "{} particles found ({correct} within Dice 0.9 of a true one), {} true",
        crops.len(),
        pack.particles.len()
    );
    Ok(())
}
