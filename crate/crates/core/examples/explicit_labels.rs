//! Training targets for an explicit boundary model from a partial labeling:
//! the smoothed boundary labels and the ignore mask that hides particles the
//! labeling does not cover yet.
//!
//! cargo run --example explicit_labels -- [sigma] [threshold]

use svl_forge::boundary::{explicit_boundary_labels, ignore_mask};
use svl_forge::synthgen::{generate_pack, PackConfig, RotationMode};

fn main() -> svl_forge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let sigma = args.first().and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let cut = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0.25);
    let pack = generate_pack(&PackConfig::new(12, (4.0, 8.0), 1, RotationMode::Exact24, 4))?;
    let truth = pack.label_volume(0)?;
    let m = truth.foreground();

    // pretend only the odd-numbered particles have been validated
    let partial = truth.map(|l| if l % 2 == 1 { l } else { 0 });
    let b = explicit_boundary_labels(&partial, sigma, cut)?;
    let ignore = ignore_mask(&m, &partial, sigma, cut)?;
    let hidden = ignore.len() - ignore.popcount();
    println!("sigma {sigma}, threshold {cut}");
    println!(
        "{} particle voxels, {} labeled, {} boundary targets, {hidden} voxels ignored",
        m.popcount(),
        partial.count(|l| l != 0),
        b.popcount()
    );
    let leaked = (0..m.len())
        .filter(|&i| partial.data()[i] != 0 && !ignore.data()[i])
        .count();
    println!("labeled voxels inside the ignored region: {leaked}");
    Ok(())
}
