//! The self-validating loop: segment what is not yet validated, match it
//! across the reshuffled scans, keep and correct what matches, retrain,
//! repeat.
//!
//! Retraining is simulated. With the stub predictor every scan answers from
//! its ground truth corrupted at a rate that falls with the training
//! coverage and rises with the share of wrong training particles; the
//! training set is either the validated particles (`Mode::Svl`) or, in
//! addition, every unvalidated particle separated so far (`Mode::St`).

mod config;
mod report;

pub use config::{InputConfig, Mode, PipelineConfig, PredictorConfig};
pub use report::{
    ledger_report, metrics_csv, report, IterationSummary, LedgerReport, Report, ScanMetrics,
    ScanReport, Training, Truth, CORRECT_DICE, METRICS_HEADER,
};

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    predict_boundaries, OraclePredictor, PatchPredictor, RegionGrowPredictor, TrainableStubPredictor,
};
use crate::correction::{apply_corrections, Clique, ScanState};
use crate::error::{Result, SvlError};
use crate::matching::{build_records, match_scans, MatchSet, ParticleRecord};
use crate::separation::{label_components, label_sizes, positive_mask, separate};
use crate::synthgen::{generate_pack, render_scans};
use crate::volume::{label_crops, load_volume, otsu_threshold, save_volume, threshold, Gray, Labels, Mask};
use report::{count_labels, volume_pct};

#[derive(Debug, Clone)]
enum ScanPredictor {
    Oracle(OraclePredictor),
    Grow(RegionGrowPredictor),
    Stub(TrainableStubPredictor),
}

impl ScanPredictor {
    fn as_dyn(&self) -> &dyn PatchPredictor {
        match self {
            ScanPredictor::Oracle(p) => p,
            ScanPredictor::Grow(p) => p,
            ScanPredictor::Stub(p) => p,
        }
    }
}

/// Everything the loop carries from one iteration to the next.
#[derive(Debug, Clone)]
pub struct SvlState {
    pub gray: Vec<Gray>,
    /// Validated labels, particle mask and lock mask of every scan.
    pub scans: Vec<ScanState>,
    pub matches: MatchSet,
    /// Cliques corrected so far.
    pub corrected: BTreeSet<Clique>,
    /// Completed iterations.
    pub iteration: usize,
    /// Particle-mask voxels in components of at least `min_voxels`, fixed
    /// when the state is created.
    pub total_volume: Vec<usize>,
    pub metrics: Vec<ScanMetrics>,
    pub history: Vec<IterationSummary>,
    pub truth: Option<Truth>,
    predictors: Vec<ScanPredictor>,
    /// Largest label handed out so far in each scan.
    next_id: Vec<u32>,
    /// Unvalidated particles added to the training set so far (`Mode::St`).
    pseudo: PseudoPool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct PseudoPool {
    count: usize,
    volume: usize,
    wrong: usize,
}

impl SvlState {
    /// Loads or synthesizes the scans named by `cfg.input`.
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let (gray, truth) = match &cfg.input {
            InputConfig::Synthetic {
                pack,
                noise_sigma,
                noise_seed,
            } => {
                let pack = generate_pack(pack)?;
                let (gray, truth) = render_scans(&pack, *noise_sigma, *noise_seed)?.into_iter().unzip();
                (gray, Some(truth))
            }
            InputConfig::Files { gray, truth } => {
                let g = gray.iter().map(load_volume::<u16>).collect::<Result<Vec<_>>>()?;
                let t = if truth.is_empty() {
                    None
                } else {
                    Some(truth.iter().map(load_volume::<u32>).collect::<Result<Vec<_>>>()?)
                };
                (g, t)
            }
        };
        SvlState::from_scans(gray, truth, cfg)
    }

    /// State over given scans. The particle mask of each scan is its Otsu
    /// foreground.
    pub fn from_scans(gray: Vec<Gray>, truth: Option<Vec<Labels>>, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        if gray.len() < 2 {
            return Err(SvlError::TooFewScans(gray.len()));
        }
        if let Some(t) = &truth {
            if t.len() != gray.len() {
                return Err(SvlError::Config(format!(
                    "{} truth volumes for {} scans",
                    t.len(),
                    gray.len()
                )));
            }
            for (g, l) in gray.iter().zip(t) {
                g.same_dims(l)?;
            }
        }
        let predictors = (0..gray.len())
            .map(|i| {
                let truth_of = || {
                    truth
                        .as_ref()
                        .map(|t| t[i].clone())
                        .ok_or_else(|| SvlError::MissingLedger("predictor needs ground-truth labels".into()))
                };
                Ok(match &cfg.predictor {
                    PredictorConfig::Oracle => ScanPredictor::Oracle(OraclePredictor::new(truth_of()?)),
                    PredictorConfig::Grow { fraction } => {
                        ScanPredictor::Grow(RegionGrowPredictor { fraction: *fraction })
                    }
                    PredictorConfig::Stub { base, decay, feedback } => ScanPredictor::Stub(
                        TrainableStubPredictor::new(truth_of()?, base.clone(), *decay, *feedback)?,
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scans = gray
            .par_iter()
            .map(|g| ScanState::new(Labels::new(g.dims(), 0), threshold(g, otsu_threshold(g))))
            .collect::<Result<Vec<_>>>()?;
        let total_volume = scans
            .iter()
            .map(|s| {
                let sizes = label_sizes(&label_components(&s.mask, cfg.connectivity));
                sizes.iter().skip(1).filter(|&&n| n >= cfg.min_voxels).sum()
            })
            .collect();
        let n = gray.len();
        Ok(SvlState {
            gray,
            scans,
            matches: MatchSet::default(),
            corrected: BTreeSet::new(),
            iteration: 0,
            total_volume,
            metrics: Vec::new(),
            history: Vec::new(),
            truth: truth.map(Truth::new),
            predictors,
            next_id: vec![0; n],
            pseudo: PseudoPool::default(),
        })
    }

    /// Positive mask of every scan: particle voxels without a validated label.
    pub fn positive_masks(&self) -> Result<Vec<Mask>> {
        self.scans.iter().map(|s| positive_mask(&s.mask, &s.validated)).collect()
    }

    /// Error factor of the simulated model, if there is one.
    pub fn error_factor(&self) -> Option<f64> {
        match self.predictors.first() {
            Some(ScanPredictor::Stub(p)) => Some(p.error_factor()),
            _ => None,
        }
    }

    fn step(&mut self, cfg: &PipelineConfig) -> Result<IterationSummary> {
        let n = self.scans.len();
        let iteration = self.iteration + 1;
        let positives = self.positive_masks()?;
        let segmented: Vec<(Labels, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let pred = predict_boundaries(&self.gray[i], &positives[i], self.predictors[i].as_dyn(), &cfg.patch)?;
                let labels = separate(&positives[i], &pred.boundary, cfg.min_voxels, cfg.connectivity)?;
                Ok((labels, pred.predictor_calls))
            })
            .collect::<Result<_>>()?;

        // new candidates get ids above every id used so far in their scan
        let offsets = self.next_id.clone();
        let catalogs: Vec<Vec<ParticleRecord>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut records = build_records(&self.scans[i].validated, i)?;
                let off = offsets[i];
                let shifted = segmented[i].0.map(|l| if l == 0 { 0 } else { l + off });
                records.extend(build_records(&shifted, i)?);
                Ok(records)
            })
            .collect::<Result<_>>()?;
        let matches = match_scans(&catalogs, cfg.threshold, &cfg.grid, &self.matches)?;

        let mut merged: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
        for m in &matches.matches {
            for (s, id) in [(m.scan_a, m.id_a), (m.scan_b, m.id_b)] {
                if id > offsets[s] {
                    merged[s].insert(id - offsets[s]);
                }
            }
        }
        for i in 0..n {
            let off = offsets[i];
            let cand = &segmented[i].0;
            let validated = self.scans[i].validated.data_mut();
            for (v, &c) in validated.iter_mut().zip(cand.data()) {
                if c != 0 && merged[i].contains(&c) {
                    *v = c + off;
                }
            }
            self.next_id[i] = off + cand.max_label();
        }
        let corrections = apply_corrections(&mut self.scans, &matches, &mut self.corrected, cfg.strict_vote)?;

        let mut validated_count = 0;
        let mut validated_volume = 0;
        for i in 0..n {
            let (count, volume) = count_labels(&self.scans[i].validated);
            validated_count += count;
            validated_volume += volume;
            self.metrics.push(ScanMetrics {
                iteration,
                scan: i,
                matched_count: count,
                matched_volume_pct: volume_pct(volume, self.total_volume[i]),
                new_particles: merged[i].len(),
                predictor_calls: segmented[i].1,
            });
        }

        let training = match &cfg.predictor {
            PredictorConfig::Stub { .. } => Some(self.retrain(cfg, iteration, &segmented, &merged)?),
            _ => None,
        };

        let summary = IterationSummary {
            iteration,
            new_particles: merged.iter().map(|m| m.len()).sum(),
            predictor_calls: segmented.iter().map(|s| s.1).sum(),
            positive_volume: positives.iter().map(|p| p.popcount()).sum(),
            validated_count,
            validated_volume,
            matches: matches.len(),
            inconsistent: matches.inconsistent.len(),
            corrections,
            training,
        };
        self.matches = matches;
        self.iteration = iteration;
        self.history.push(summary.clone());
        Ok(summary)
    }

    /// Feeds the training set of `cfg.mode` to every scan's stub.
    fn retrain(
        &mut self,
        cfg: &PipelineConfig,
        iteration: usize,
        segmented: &[(Labels, usize)],
        merged: &[BTreeSet<u32>],
    ) -> Result<Training> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| SvlError::MissingLedger("stub retraining needs ground truth".into()))?;
        if cfg.mode == Mode::St {
            // pseudo-labels stay in the training set once added
            for (i, (labels, _)) in segmented.iter().enumerate() {
                for (c, crop) in label_crops(labels) {
                    if !merged[i].contains(&c) {
                        self.pseudo.count += 1;
                        self.pseudo.volume += crop.voxel_count();
                        self.pseudo.wrong += usize::from(!truth.is_correct(i, &crop));
                    }
                }
            }
        }
        let PseudoPool {
            mut count,
            mut volume,
            mut wrong,
        } = self.pseudo;
        for (i, scan) in self.scans.iter().enumerate() {
            for crop in label_crops(&scan.validated).into_values() {
                count += 1;
                volume += crop.voxel_count();
                wrong += usize::from(!truth.is_correct(i, &crop));
            }
        }
        let total: usize = self.total_volume.iter().sum();
        let coverage = if total == 0 { 0.0 } else { (volume as f64 / total as f64).min(1.0) };
        let wrong_fraction = if count == 0 { 0.0 } else { wrong as f64 / count as f64 };
        let mut error_factor = 1.0;
        for (i, p) in self.predictors.iter_mut().enumerate() {
            if let ScanPredictor::Stub(stub) = p {
                let seed = cfg
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add((iteration as u64) << 16 | i as u64);
                stub.retrain(coverage, wrong_fraction, seed)?;
                error_factor = stub.error_factor();
            }
        }
        Ok(Training {
            coverage,
            wrong_fraction,
            error_factor,
        })
    }
}

/// One pass of the loop. On error the state is left as it was.
pub fn run_iteration(state: &mut SvlState, cfg: &PipelineConfig) -> Result<IterationSummary> {
    let mut next = state.clone();
    let summary = next.step(cfg)?;
    *state = next;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SvlState,
    /// Stopped because an iteration validated fewer than `epsilon` particles
    /// rather than by hitting `max_iterations`.
    pub converged: bool,
}

/// Iterates from `state` until convergence or `cfg.max_iterations`.
pub fn run_from(mut state: SvlState, cfg: &PipelineConfig) -> Result<RunOutcome> {
    while state.iteration < cfg.max_iterations {
        let summary = run_iteration(&mut state, cfg)?;
        if summary.new_particles < cfg.epsilon {
            return Ok(RunOutcome { state, converged: true });
        }
    }
    Ok(RunOutcome {
        state,
        converged: false,
    })
}

pub fn run(cfg: &PipelineConfig) -> Result<RunOutcome> {
    run_from(SvlState::new(cfg)?, cfg)
}

/// Writes `metrics.csv`, `matches.jsonl`, `report.json` and the validated
/// labels of scan `i` as `labels_i`.
pub fn write_outputs(state: &SvlState, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SvlError::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| SvlError::io(&path, e))
    };
    write("metrics.csv", metrics_csv(&state.metrics))?;
    write("matches.jsonl", state.matches.to_jsonl()?)?;
    write("report.json", serde_json::to_string_pretty(&report(state))?)?;
    for (i, s) in state.scans.iter().enumerate() {
        save_volume(&s.validated, dir.join(format!("labels_{i}")))?;
    }
    Ok(())
}

/// Per-iteration numbers of one comparison arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPoint {
    pub iteration: usize,
    pub validated: usize,
    /// Validated particles confirmed by the ground truth.
    pub correct: usize,
    pub error_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub svl: Vec<ArmPoint>,
    pub st: Vec<ArmPoint>,
    /// Validated labels and matches agreed after the first iteration.
    pub identical_after_first: bool,
}

fn arm_point(state: &SvlState) -> ArmPoint {
    let truth = state.truth.as_ref().expect("checked by st_compare");
    let validated: Vec<Labels> = state.scans.iter().map(|s| s.validated.clone()).collect();
    let ledger = ledger_report(&state.matches, &validated, truth);
    ArmPoint {
        iteration: state.iteration,
        validated: validated.iter().map(|v| count_labels(v).0).sum(),
        correct: ledger.correct_particles,
        error_factor: state.error_factor(),
    }
}

/// Runs the self-validated and the plain self-training arm from the same
/// start for `cfg.max_iterations` iterations each.
pub fn st_compare(cfg: &PipelineConfig) -> Result<Comparison> {
    let start = SvlState::new(cfg)?;
    if start.truth.is_none() {
        return Err(SvlError::MissingLedger("the comparison scores against ground truth".into()));
    }
    let arm_cfg = |mode| PipelineConfig {
        mode,
        ..cfg.clone()
    };
    let (svl_cfg, st_cfg) = (arm_cfg(Mode::Svl), arm_cfg(Mode::St));
    let mut svl = start.clone();
    let mut st = start;
    let mut out = Comparison {
        svl: Vec::new(),
        st: Vec::new(),
        identical_after_first: false,
    };
    for k in 0..cfg.max_iterations {
        run_iteration(&mut svl, &svl_cfg)?;
        run_iteration(&mut st, &st_cfg)?;
        if k == 0 {
            out.identical_after_first = svl.scans == st.scans && svl.matches == st.matches;
        }
        out.svl.push(arm_point(&svl));
        out.st.push(arm_point(&st));
    }
    Ok(out)
}
