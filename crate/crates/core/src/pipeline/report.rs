use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SvlState;
use crate::correction::CorrectionReport;
use crate::matching::{components, MatchSet};
use crate::separation::label_sizes;
use crate::volume::{label_crops, Labels, MaskCrop};

/// Minimum Dice with its true particle for a segmented particle to count as
/// correct.
pub const CORRECT_DICE: f64 = 0.9;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    pub iteration: usize,
    pub scan: usize,
    /// Validated particles in the scan.
    pub matched_count: usize,
    /// Validated voxels as a percentage of the scan's particle volume.
    pub matched_volume_pct: f64,
    pub new_particles: usize,
    pub predictor_calls: usize,
}

pub const METRICS_HEADER: &str =
    "iteration,scan,matched_count,matched_volume_pct,new_particles,predictor_calls";

pub fn metrics_csv(rows: &[ScanMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.4},{},{}",
            r.iteration, r.scan, r.matched_count, r.matched_volume_pct, r.new_particles, r.predictor_calls
        )
        .expect("writing to a String");
    }
    out
}

/// Retraining inputs of the simulated model after an iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Training {
    /// Training-set volume over total particle volume.
    pub coverage: f64,
    /// Share of training particles that are not correct.
    pub wrong_fraction: f64,
    pub error_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub new_particles: usize,
    pub predictor_calls: usize,
    /// Positive-mask voxels the iteration started from, over all scans.
    pub positive_volume: usize,
    pub validated_count: usize,
    pub validated_volume: usize,
    pub matches: usize,
    pub inconsistent: usize,
    pub corrections: CorrectionReport,
    pub training: Option<Training>,
}

/// Ground-truth labels of every scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    labels: Vec<Labels>,
    sizes: Vec<Vec<usize>>,
}

impl Truth {
    pub fn new(labels: Vec<Labels>) -> Self {
        let sizes = labels.iter().map(label_sizes).collect();
        Truth { labels, sizes }
    }

    pub fn labels(&self) -> &[Labels] {
        &self.labels
    }

    /// True particle overlapping `crop` most (ties to the smaller id) and the
    /// Dice between the two. `(0, 0.0)` when `crop` lies on background.
    pub fn identify(&self, scan: usize, crop: &MaskCrop) -> (u32, f64) {
        let mut overlap: BTreeMap<u32, usize> = BTreeMap::new();
        for p in crop.points() {
            let l = self.labels[scan].get(p);
            if l != 0 {
                *overlap.entry(l).or_default() += 1;
            }
        }
        let Some((&id, &n)) = overlap.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            return (0, 0.0);
        };
        let size = self.sizes[scan][id as usize];
        (id, 2.0 * n as f64 / (crop.voxel_count() + size) as f64)
    }

    /// Whether `crop` is its true particle up to [`CORRECT_DICE`].
    pub fn is_correct(&self, scan: usize, crop: &MaskCrop) -> bool {
        let (id, d) = self.identify(scan, crop);
        id != 0 && d >= CORRECT_DICE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub scan: usize,
    pub matched_count: usize,
    pub matched_volume_pct: f64,
    /// Matched particles with an instance in this scan.
    pub direct: usize,
    /// Matched particles found only between other scans.
    pub elsewhere: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub matches: usize,
    /// Matches joining two different true particles.
    pub wrong_matches: usize,
    pub true_positive_rate: f64,
    /// Validated particles in cliques whose members are all the same true
    /// particle, each segmented correctly.
    pub correct_particles: usize,
    pub correct_cliques: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub iterations: usize,
    /// Physical particles matched across at least two scans.
    pub matched_particles: usize,
    /// Those matched in every scan.
    pub full_span: usize,
    pub scans: Vec<ScanReport>,
    pub ledger: Option<LedgerReport>,
    pub history: Vec<IterationSummary>,
}

pub(crate) fn count_labels(labels: &Labels) -> (usize, usize) {
    let sizes = label_sizes(labels);
    let count = sizes.iter().skip(1).filter(|&&s| s > 0).count();
    let volume = sizes.iter().skip(1).sum();
    (count, volume)
}

pub(crate) fn volume_pct(volume: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * volume as f64 / total as f64
    }
}

/// Scores the matches of `set` against `truth`, using the particles of
/// `validated`.
pub fn ledger_report(set: &MatchSet, validated: &[Labels], truth: &Truth) -> LedgerReport {
    let crops: Vec<BTreeMap<u32, MaskCrop>> = validated.iter().map(label_crops).collect();
    let mut ident: BTreeMap<(usize, u32), (u32, bool)> = BTreeMap::new();
    for (s, map) in crops.iter().enumerate() {
        for (&id, crop) in map {
            let (g, d) = truth.identify(s, crop);
            ident.insert((s, id), (g, g != 0 && d >= CORRECT_DICE));
        }
    }
    let gt = |s: usize, id: u32| ident.get(&(s, id)).copied().unwrap_or((0, false));
    let wrong_matches = set
        .matches
        .iter()
        .filter(|m| {
            let a = gt(m.scan_a, m.id_a).0;
            a == 0 || a != gt(m.scan_b, m.id_b).0
        })
        .count();
    let mut correct_particles = 0;
    let mut correct_cliques = 0;
    for clique in components(set.matches.iter()) {
        let first = gt(clique.iter().next().unwrap().0, clique.iter().next().unwrap().1).0;
        if clique.iter().all(|&(s, id)| {
            let (g, ok) = gt(s, id);
            ok && g == first
        }) {
            correct_cliques += 1;
            correct_particles += clique.len();
        }
    }
    let n = set.matches.len();
    LedgerReport {
        matches: n,
        wrong_matches,
        true_positive_rate: if n == 0 { 0.0 } else { (n - wrong_matches) as f64 / n as f64 },
        correct_particles,
        correct_cliques,
    }
}

/// Summary of the current state.
pub fn report(state: &SvlState) -> Report {
    let cliques = components(state.matches.matches.iter());
    let n = state.scans.len();
    let scans = (0..n)
        .map(|s| {
            let (count, volume) = count_labels(&state.scans[s].validated);
            let direct = cliques.iter().filter(|c| c.iter().any(|m| m.0 == s)).count();
            ScanReport {
                scan: s,
                matched_count: count,
                matched_volume_pct: volume_pct(volume, state.total_volume[s]),
                direct,
                elsewhere: cliques.len() - direct,
            }
        })
        .collect();
    let ledger = state.truth.as_ref().map(|t| {
        let validated: Vec<Labels> = state.scans.iter().map(|s| s.validated.clone()).collect();
        ledger_report(&state.matches, &validated, t)
    });
    Report {
        iterations: state.iteration,
        matched_particles: cliques.len(),
        full_span: cliques.iter().filter(|c| c.len() == n).count(),
        scans,
        ledger,
        history: state.history.clone(),
    }
}
