//! Matches the ground-truth particles of a synthetic pack across its scans
//! and checks every accepted match against the ledger.
//!
//! cargo run --release --example match_pack -- [count] [free] [threshold]

use std::time::Instant;

use svl_forge::matching::{build_records, match_scans, MatchSet, RotationGrid};
use svl_forge::synthgen::{generate_pack, PackConfig, RotationMode};

fn main() -> svl_forge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count = args.first().and_then(|a| a.parse().ok()).unwrap_or(50);
    let free = args.iter().any(|a| a == "free");
    let threshold = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(0.9);
    let mode = if free { RotationMode::FreeEuler } else { RotationMode::Exact24 };
    let pack = generate_pack(&PackConfig::new(count, (4.0, 12.0), 3, mode, 7))?;

    let catalogs = (0..pack.scans.len())
        .map(|s| build_records(&pack.label_volume(s)?, s))
        .collect::<svl_forge::Result<Vec<_>>>()?;
    let t = Instant::now();
    let set = match_scans(&catalogs, threshold, &RotationGrid::default(), &MatchSet::default())?;
    let wrong = set.matches.iter().filter(|m| m.id_a != m.id_b).count();
    let perfect = set.matches.iter().filter(|m| m.rotdice == 1.0).count();
    println!(
        "{} matches ({perfect} with RotDice 1.0), {wrong} wrong, {} inconsistent, {:.2?}",
        set.len(),
        set.inconsistent.len(),
        t.elapsed()
    );
    let min = set.matches.iter().map(|m| m.rotdice).fold(1.0, f64::min);
    println!("lowest accepted RotDice {min:.4}");
    Ok(())
}
