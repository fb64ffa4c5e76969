//! Damages one scan of a matched pack by erosion and dilation, then lets the
//! other scans vote the damage away.
//!
//! cargo run --release --example correct_pack -- [count] [rate]

use std::collections::BTreeSet;

use svl_forge::correction::{apply_corrections, ScanState};
use svl_forge::matching::{build_records, match_scans, MatchSet, RotationGrid};
use svl_forge::pipeline::Truth;
use svl_forge::synthgen::{corrupt_labels, generate_pack, CorruptionSpec, PackConfig, RotationMode};
use svl_forge::volume::{label_crops, Labels};

fn correct_count(truth: &Truth, labels: &Labels) -> usize {
    label_crops(labels).values().filter(|c| truth.is_correct(0, c)).count()
}

fn main() -> svl_forge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count = args.first().and_then(|a| a.parse().ok()).unwrap_or(20);
    let rate = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let pack = generate_pack(&PackConfig::new(count, (4.0, 12.0), 3, RotationMode::Exact24, 9))?;
    let truth: Vec<Labels> = (0..3).map(|s| pack.label_volume(s)).collect::<svl_forge::Result<_>>()?;

    let catalogs = (0..3)
        .map(|s| build_records(&truth[s], s))
        .collect::<svl_forge::Result<Vec<_>>>()?;
    let set = match_scans(&catalogs, 0.9, &RotationGrid::default(), &MatchSet::default())?;
    println!("{} matches on the clean scans", set.len());

    let spec = CorruptionSpec {
        p_erode: rate,
        p_dilate: rate,
        ..CorruptionSpec::none(2)
    };
    let (damaged, ledger) = corrupt_labels(&truth[0], &spec)?;
    let scan0 = Truth::new(vec![truth[0].clone()]);
    println!(
        "scan 0: {} eroded, {} dilated, {} of {count} particles still correct",
        ledger.eroded.len(),
        ledger.dilated.len(),
        correct_count(&scan0, &damaged)
    );

    let mut states = vec![ScanState::new(damaged, truth[0].foreground())?];
    for t in &truth[1..] {
        states.push(ScanState::new(t.clone(), t.foreground())?);
    }
    let r = apply_corrections(&mut states, &set, &mut BTreeSet::new(), false)?;
    let changed = r.particles.iter().filter(|p| p.added + p.removed > 0).count();
    println!(
        "{} cliques corrected, {changed} particles changed, {} collisions",
        r.cliques_corrected, r.collisions
    );
    println!(
        "scan 0 after correction: {} of {count} correct",
        correct_count(&scan0, &states[0].validated)
    );
    Ok(())
}
