use std::collections::VecDeque;

use super::{PatchLocation, PatchPredictor};
use crate::error::Result;
use crate::synthgen::{corrupt_labels, CorruptionLedger, CorruptionSpec};
use crate::volume::{Gray, Labels, Mask, FACE_OFFSETS};

/// Answers from a known labeling: the region carrying the centre's label.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    labels: Labels,
    ledger: CorruptionLedger,
}

impl OraclePredictor {
    pub fn new(labels: Labels) -> Self {
        OraclePredictor {
            labels,
            ledger: CorruptionLedger::default(),
        }
    }

    /// Answers from `corrupt_labels(truth, spec)` instead of the truth.
    pub fn corrupted(truth: &Labels, spec: &CorruptionSpec) -> Result<Self> {
        let (labels, ledger) = corrupt_labels(truth, spec)?;
        Ok(OraclePredictor { labels, ledger })
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn ledger(&self) -> &CorruptionLedger {
        &self.ledger
    }
}

impl PatchPredictor for OraclePredictor {
    fn predict(&self, _patch: &Gray, location: &PatchLocation) -> Result<Mask> {
        let l = self.labels.get(location.center);
        let region = self.labels.extract(&location.bbox);
        Ok(if l == 0 {
            region.map(|_| false)
        } else {
            region.map(|v| v == l)
        })
    }
}

/// Flood fill from the patch centre over voxels at least `fraction` times
/// as bright as the centre.
#[derive(Debug, Clone, Copy)]
pub struct RegionGrowPredictor {
    pub fraction: f64,
}

impl Default for RegionGrowPredictor {
    fn default() -> Self {
        RegionGrowPredictor { fraction: 0.6 }
    }
}

impl PatchPredictor for RegionGrowPredictor {
    fn predict(&self, patch: &Gray, location: &PatchLocation) -> Result<Mask> {
        let c = location.local_center();
        let cut = patch.get(c) as f64 * self.fraction;
        let mut out = Mask::new(patch.dims(), false);
        out.set(c, true);
        let mut queue = VecDeque::from([c]);
        while let Some(p) = queue.pop_front() {
            for o in FACE_OFFSETS {
                let q = [p[0] as i64 + o[0], p[1] as i64 + o[1], p[2] as i64 + o[2]];
                let Some(v) = patch.get_signed(q) else {
                    continue;
                };
                let q = [q[0] as usize, q[1] as usize, q[2] as usize];
                if v as f64 >= cut && !out.get(q) {
                    out.set(q, true);
                    queue.push_back(q);
                }
            }
        }
        Ok(out)
    }
}

/// Simulated trainable model: an oracle whose corruption rates are the base
/// rates times an error factor that falls as the training set grows.
///
/// After `retrain(coverage, wrong_fraction, seed)` the factor is
/// `(1 - coverage)^decay + feedback * wrong_fraction`, where `coverage` is
/// the fraction of particle volume in the training set and `wrong_fraction`
/// the share of training particles that are not true particles.
#[derive(Debug, Clone)]
pub struct TrainableStubPredictor {
    truth: Labels,
    base: CorruptionSpec,
    pub decay: f64,
    pub feedback: f64,
    error: f64,
    oracle: OraclePredictor,
}

impl TrainableStubPredictor {
    /// Starts untrained (error factor 1).
    pub fn new(truth: Labels, base: CorruptionSpec, decay: f64, feedback: f64) -> Result<Self> {
        let oracle = OraclePredictor::corrupted(&truth, &base)?;
        Ok(TrainableStubPredictor {
            truth,
            base,
            decay,
            feedback,
            error: 1.0,
            oracle,
        })
    }

    pub fn error_factor(&self) -> f64 {
        self.error
    }

    pub fn error_for(&self, coverage: f64, wrong_fraction: f64) -> f64 {
        (1.0 - coverage.clamp(0.0, 1.0)).powf(self.decay) + self.feedback * wrong_fraction
    }

    pub fn retrain(&mut self, coverage: f64, wrong_fraction: f64, seed: u64) -> Result<()> {
        self.error = self.error_for(coverage, wrong_fraction);
        self.oracle = OraclePredictor::corrupted(&self.truth, &self.base.scaled(self.error, seed))?;
        Ok(())
    }

    pub fn current_labels(&self) -> &Labels {
        self.oracle.labels()
    }
}

impl PatchPredictor for TrainableStubPredictor {
    fn predict(&self, patch: &Gray, location: &PatchLocation) -> Result<Mask> {
        self.oracle.predict(patch, location)
    }
}
