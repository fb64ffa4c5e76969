//! Generates a small reshuffled pack and prints what each scan contains.
//!
//! cargo run --example synth_pack -- [count] [free]

use std::time::Instant;

use svl_forge::synthgen::{generate_pack, render_scans, PackConfig, RotationMode};
use svl_forge::volume::{otsu_threshold, threshold};

fn main() -> svl_forge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count = args.first().and_then(|a| a.parse().ok()).unwrap_or(50);
    let mode = if args.iter().any(|a| a == "free") {
        RotationMode::FreeEuler
    } else {
        RotationMode::Exact24
    };
    let t = Instant::now();
    let pack = generate_pack(&PackConfig::new(count, (4.0, 12.0), 3, mode, 7))?;
    println!(
        "{count} particles in a {:?} container ({:?}), generated in {:.2?}",
        pack.container,
        mode,
        t.elapsed()
    );
    for (i, (gray, labels)) in render_scans(&pack, 2000.0, 1)?.iter().enumerate() {
        let truth = labels.foreground();
        let t = otsu_threshold(gray);
        let m = threshold(gray, t);
        let agree = m.data().iter().zip(truth.data()).filter(|(a, b)| a == b).count();
        println!(
            "scan {i}: {} particle voxels, {} contacts, otsu {t}, mask agreement {:.4}%",
            truth.popcount(),
            pack.scans[i].contacts.len(),
            100.0 * agree as f64 / m.len() as f64
        );
    }
    Ok(())
}
