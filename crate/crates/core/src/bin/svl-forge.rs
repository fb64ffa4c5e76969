use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};

use svl_forge::boundary::{
    predict_boundaries, OraclePredictor, PatchPredictor, PatchSpec, RegionGrowPredictor, TrainableStubPredictor,
};
use svl_forge::correction::{apply_corrections, ScanState};
use svl_forge::matching::{build_records, match_scans, MatchSet, RotationGrid};
use svl_forge::pipeline::{report, run, st_compare, write_outputs, PipelineConfig};
use svl_forge::separation::{separate, Connectivity};
use svl_forge::synthgen::{generate_pack, render_scans, CorruptionSpec, PackConfig, RotationMode};
use svl_forge::volume::{load_any, load_volume, save_volume, Gray, Labels, Mask};
use svl_forge::{Result, SvlError};

#[derive(Parser)]
#[command(name = "svl-forge", version, about = "Self-validated particle segmentation across reshuffled scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PackMode {
    Exact24,
    Free,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorKind {
    Oracle,
    Grow,
    Stub,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pack and render its scans.
    Synth {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        scans: usize,
        #[arg(long, value_enum, default_value_t = PackMode::Exact24)]
        mode: PackMode,
        /// Gaussian noise sigma in intensity units.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        radius_min: f64,
        #[arg(long, default_value_t = 12.0)]
        radius_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a particle mask into labeled particles along a boundary map.
    Segment {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_size: usize,
        #[arg(long, default_value_t = 26)]
        connectivity: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict boundaries from overlapping patches.
    Boundary {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        positive_mask: PathBuf,
        #[arg(long, value_enum, default_value_t = PredictorKind::Grow)]
        predictor: PredictorKind,
        /// Ground-truth labels, needed by the oracle and stub predictors.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        patch: usize,
        #[arg(long, default_value_t = 4)]
        stride: usize,
        /// Corruption rate of the stub predictor.
        #[arg(long, default_value_t = 0.2)]
        stub_rate: f64,
        #[arg(long, default_value_t = 0.6)]
        grow_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match particles across labeled scans.
    Match {
        #[arg(long, num_args = 2.., required = true)]
        scans: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long, default_value = "15x3")]
        grid: String,
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correct matched particles by consensus.
    Correct {
        #[arg(long, num_args = 2.., required = true)]
        scans: Vec<PathBuf>,
        /// Particle masks of the scans; the label foreground when omitted.
        #[arg(long, num_args = 2..)]
        masks: Vec<PathBuf>,
        #[arg(long)]
        matches: PathBuf,
        #[arg(long, default_value_t = false, action = ArgAction::Set)]
        strict: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the self-validating loop.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare self-validated learning with plain self-training.
    StCompare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| SvlError::Config(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .map_err(|e| SvlError::Config(format!("{}: {e}", path.display())))
}

fn load_mask(path: &Path) -> Result<Mask> {
    Ok(load_any(path)?.into_mask())
}

fn synth(
    count: usize,
    scans: usize,
    mode: PackMode,
    noise: f64,
    seed: u64,
    radius: (f64, f64),
    out: &Path,
) -> Result<()> {
    let mode = match mode {
        PackMode::Exact24 => RotationMode::Exact24,
        PackMode::Free => RotationMode::FreeEuler,
    };
    let pack = generate_pack(&PackConfig::new(count, radius, scans, mode, seed))?;
    for (i, (gray, labels)) in render_scans(&pack, noise, seed)?.into_iter().enumerate() {
        save_volume(&gray, out.join(format!("gray_{i}")))?;
        save_volume(&labels, out.join(format!("labels_{i}")))?;
    }
    std::fs::write(out.join("pack.json"), pack.to_json()?)
        .map_err(|e| SvlError::Config(format!("{}: {e}", out.display())))?;
    println!(
        "{} particles, {} scans, container {:?}",
        pack.particles.len(),
        pack.scans.len(),
        pack.container
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn boundary(
    image: &Path,
    positive: &Path,
    kind: PredictorKind,
    truth: Option<&Path>,
    spec: PatchSpec,
    stub_rate: f64,
    grow_fraction: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let u: Gray = load_volume(image)?;
    let m = load_mask(positive)?;
    let truth = || -> Result<Labels> {
        let path = truth.ok_or_else(|| SvlError::MissingLedger("--truth is required for this predictor".into()))?;
        load_volume(path)
    };
    let predictor: Box<dyn PatchPredictor> = match kind {
        PredictorKind::Oracle => Box::new(OraclePredictor::new(truth()?)),
        PredictorKind::Grow => Box::new(RegionGrowPredictor {
            fraction: grow_fraction,
        }),
        PredictorKind::Stub => {
            let base = CorruptionSpec {
                p_merge: stub_rate,
                p_split: stub_rate,
                p_erode: stub_rate,
                p_dilate: stub_rate,
                radius: 1,
                seed,
            };
            Box::new(TrainableStubPredictor::new(truth()?, base, 1.0, 0.0)?)
        }
    };
    let r = predict_boundaries(&u, &m, predictor.as_ref(), &spec)?;
    save_volume(&r.boundary, out)?;
    println!("{} boundary voxels, {} predictor calls", r.boundary.popcount(), r.predictor_calls);
    Ok(())
}

fn match_cmd(scans: &[PathBuf], threshold: f64, grid: &str, prior: Option<&Path>, out: &Path) -> Result<()> {
    let grid = RotationGrid::parse(grid)?;
    let catalogs = scans
        .iter()
        .enumerate()
        .map(|(i, p)| build_records(&load_volume::<u32>(p)?, i))
        .collect::<Result<Vec<_>>>()?;
    let prior = match prior {
        Some(p) => MatchSet::load_jsonl(p)?,
        None => MatchSet::default(),
    };
    let set = match_scans(&catalogs, threshold, &grid, &prior)?;
    set.save_jsonl(out)?;
    println!("{} matches, {} inconsistent particles", set.len(), set.inconsistent.len());
    Ok(())
}

fn correct(scans: &[PathBuf], masks: &[PathBuf], matches: &Path, strict: bool, out_dir: &Path) -> Result<()> {
    if !masks.is_empty() && masks.len() != scans.len() {
        return Err(SvlError::Config(format!("{} masks for {} scans", masks.len(), scans.len())));
    }
    let mut states = scans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let labels: Labels = load_volume(p)?;
            let mask = match masks.get(i) {
                Some(m) => load_mask(m)?,
                None => labels.foreground(),
            };
            ScanState::new(labels, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    let set = MatchSet::load_jsonl(matches)?;
    let r = apply_corrections(&mut states, &set, &mut BTreeSet::new(), strict)?;
    for (i, s) in states.iter().enumerate() {
        save_volume(&s.validated, out_dir.join(format!("labels_{i}")))?;
        save_volume(&s.locks, out_dir.join(format!("locks_{i}")))?;
    }
    write_json(&out_dir.join("corrections.json"), &r)?;
    println!("{} cliques corrected, {} collisions", r.cliques_corrected, r.collisions);
    Ok(())
}

/// Exit code 0 on convergence, 2 when the iteration limit stopped the run.
fn run_cmd(config: &Path, out: &Path) -> Result<u8> {
    let cfg = PipelineConfig::load(config)?;
    let outcome = run(&cfg)?;
    write_outputs(&outcome.state, out)?;
    let r = report(&outcome.state);
    println!(
        "{} iterations, {} particles matched, {} in every scan",
        r.iterations, r.matched_particles, r.full_span
    );
    for s in &r.scans {
        println!("scan {}: {} particles, {:.2}% of particle volume", s.scan, s.matched_count, s.matched_volume_pct);
    }
    Ok(if outcome.converged { 0 } else { 2 })
}

fn st_compare_cmd(config: &Path, out: &Path) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let cmp = st_compare(&cfg)?;
    write_json(&out.join("comparison.json"), &cmp)?;
    println!("iteration  svl validated/correct  st validated/correct");
    for (a, b) in cmp.svl.iter().zip(&cmp.st) {
        println!("{:>9}  {:>9} / {:<7}  {:>8} / {}", a.iteration, a.validated, a.correct, b.validated, b.correct);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Synth {
            count,
            scans,
            mode,
            noise,
            seed,
            radius_min,
            radius_max,
            out,
        } => synth(count, scans, mode, noise, seed, (radius_min, radius_max), &out)?,
        Command::Segment {
            mask,
            boundary,
            min_size,
            connectivity,
            out,
        } => {
            let m = load_mask(&mask)?;
            let b = load_mask(&boundary)?;
            let conn = Connectivity::try_from(connectivity).map_err(SvlError::Config)?;
            let labels = separate(&m, &b, min_size, conn)?;
            save_volume(&labels, &out)?;
            println!("{} particles", labels.max_label());
        }
        Command::Boundary {
            image,
            positive_mask,
            predictor,
            truth,
            patch,
            stride,
            stub_rate,
            grow_fraction,
            seed,
            out,
        } => {
            let spec = PatchSpec {
                size: patch,
                inference_stride: stride,
                ..PatchSpec::default()
            };
            boundary(
                &image,
                &positive_mask,
                predictor,
                truth.as_deref(),
                spec,
                stub_rate,
                grow_fraction,
                seed,
                &out,
            )?
        }
        Command::Match {
            scans,
            threshold,
            grid,
            prior,
            out,
        } => match_cmd(&scans, threshold, &grid, prior.as_deref(), &out)?,
        Command::Correct {
            scans,
            masks,
            matches,
            strict,
            out_dir,
        } => correct(&scans, &masks, &matches, strict, &out_dir)?,
        Command::Run { config, out } => return run_cmd(&config, &out),
        Command::StCompare { config, out } => st_compare_cmd(&config, &out)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
