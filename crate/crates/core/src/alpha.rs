//! Activity-adaptive weighting: the schedule mapping history length to the
//! cluster-attraction weight, and the grid search choosing its two shape
//! parameters on validation Logloss.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::trainer::{self, TrainSetup};

/// alpha(L) = exp(-w1 * (L / mean_length)^w2), non-increasing in L,
/// always in (0, 1], exactly 1 at L = 0.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub w1: f64,
    pub w2: f64,
    pub mean_length: f64,
}

impl AlphaSchedule {
    pub fn new(w1: f64, w2: f64, mean_length: f64) -> Result<Self> {
        if w1 <= 0.0 || w2 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha schedule requires w1 > 0 and w2 > 0, got ({w1}, {w2})"
            )));
        }
        if mean_length <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mean_length must be positive, got {mean_length}"
            )));
        }
        Ok(AlphaSchedule {
            w1,
            w2,
            mean_length,
        })
    }

    pub fn alpha(&self, history_len: usize) -> f64 {
        let ratio = history_len as f64 / self.mean_length;
        // exp underflows to 0.0 for extreme arguments; the floor keeps the
        // schedule inside its documented (0, 1] range
        (-(self.w1) * ratio.powf(self.w2))
            .exp()
            .max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchConfig {
    #[serde(default = "default_w1_grid")]
    pub w1_grid: Vec<f64>,
    #[serde(default = "default_w2_grid")]
    pub w2_grid: Vec<f64>,
}

fn default_w1_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

fn default_w2_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            w1_grid: default_w1_grid(),
            w2_grid: default_w2_grid(),
        }
    }
}

impl SearchConfig {
    pub fn candidates(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &w1 in &self.w1_grid {
            for &w2 in &self.w2_grid {
                out.push((w1, w2));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1_grid.is_empty() || self.w2_grid.is_empty() {
            return Err(Error::InvalidConfig("empty candidate grid".into()));
        }
        if self
            .w1_grid
            .iter()
            .chain(&self.w2_grid)
            .any(|&w| w <= 0.0 || !w.is_finite())
        {
            return Err(Error::InvalidConfig(
                "all grid values must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the per-candidate search table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateReport {
    pub w1: f64,
    pub w2: f64,
    pub seed: u64,
    pub train_logloss: Option<f64>,
    pub val_logloss: Option<f64>,
    pub val_auc: Option<f64>,
    pub val_auc_non_active: Option<f64>,
    pub val_auc_slightly_active: Option<f64>,
    pub val_auc_highly_active: Option<f64>,
    pub failed: Option<String>,
}

pub struct SearchOutcome {
    pub winner: AlphaSchedule,
    pub table: Vec<CandidateReport>,
    /// Wall time per candidate, in the table's order. Kept apart from the
    /// table so the table itself stays deterministic.
    pub wall_times_ms: Vec<u128>,
}

/// Train one model per (w1, w2) candidate with a fixed base seed and pick
/// the one with the lowest validation Logloss. Ties break toward higher
/// validation AUC, then lexicographically smaller (w1, w2). Diverged
/// candidates are recorded as failed and excluded.
pub fn search(
    cfg: &SearchConfig,
    setup: &TrainSetup,
    ds: &Dataset,
    splits: &Splits,
    parallel: usize,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let candidates = cfg.candidates();
    let mean_length = setup.schedule.mean_length;

    let run_one = |&(w1, w2): &(f64, f64)| -> (CandidateReport, u128) {
        let started = std::time::Instant::now();
        let mut report = CandidateReport {
            w1,
            w2,
            seed: setup.train.seed,
            train_logloss: None,
            val_logloss: None,
            val_auc: None,
            val_auc_non_active: None,
            val_auc_slightly_active: None,
            val_auc_highly_active: None,
            failed: None,
        };
        let schedule = match AlphaSchedule::new(w1, w2, mean_length) {
            Ok(s) => s,
            Err(e) => {
                report.failed = Some(e.to_string());
                return (report, started.elapsed().as_millis());
            }
        };
        let mut candidate_setup = setup.clone();
        candidate_setup.schedule = schedule;
        match trainer::train(&candidate_setup, ds, splits) {
            Ok(outcome) => {
                if let Some((epoch, step)) = outcome.diverged {
                    report.failed = Some(format!(
                        "training diverged at epoch {epoch}, step {step}"
                    ));
                } else {
                    report.val_logloss = Some(outcome.best_val_logloss);
                    match trainer::evaluate(&outcome.params, ds, &splits.train, splits) {
                        Ok(m) => report.train_logloss = Some(m.overall.logloss),
                        Err(e) => report.failed = Some(e.to_string()),
                    }
                    match trainer::evaluate(&outcome.params, ds, &splits.val, splits) {
                        Ok(m) => {
                            report.val_auc = m.overall.auc;
                            report.val_auc_non_active = m.buckets[0].auc;
                            report.val_auc_slightly_active = m.buckets[1].auc;
                            report.val_auc_highly_active = m.buckets[2].auc;
                        }
                        Err(e) => report.failed = Some(e.to_string()),
                    }
                }
            }
            Err(e) => report.failed = Some(e.to_string()),
        }
        (report, started.elapsed().as_millis())
    };

    let results: Vec<(CandidateReport, u128)> = if parallel <= 1 {
        candidates.iter().map(run_one).collect()
    } else {
        // chunked scope-spawned workers; each candidate is seeded
        // independently, so scheduling cannot change any result
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in candidates.chunks(candidates.len().div_ceil(parallel)) {
                handles.push(scope.spawn(move || chunk.iter().map(run_one).collect::<Vec<_>>()));
            }
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("search worker panicked"))
                .collect()
        })
    };

    let (table, wall_times_ms): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mut best: Option<&CandidateReport> = None;
    for report in table.iter().filter(|r| r.failed.is_none()) {
        best = Some(match best {
            None => report,
            Some(cur) => {
                let a = (
                    report.val_logloss.unwrap_or(f64::INFINITY),
                    -report.val_auc.unwrap_or(f64::NEG_INFINITY),
                    report.w1,
                    report.w2,
                );
                let c = (
                    cur.val_logloss.unwrap_or(f64::INFINITY),
                    -cur.val_auc.unwrap_or(f64::NEG_INFINITY),
                    cur.w1,
                    cur.w2,
                );
                if a < c {
                    report
                } else {
                    cur
                }
            }
        });
    }
    let best = best.ok_or_else(|| {
        Error::InvalidConfig("every search candidate failed; nothing to select".into())
    })?;
    Ok(SearchOutcome {
        winner: AlphaSchedule::new(best.w1, best.w2, mean_length)?,
        table,
        wall_times_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_history_gives_exactly_one() {
        let s = AlphaSchedule::new(2.0, 0.5, 4.0).unwrap();
        assert_eq!(s.alpha(0), 1.0);
    }

    #[test]
    fn alpha_at_mean_length_is_exp_minus_w1() {
        for w2 in [0.5, 1.0, 2.0] {
            let s = AlphaSchedule::new(1.0, w2, 6.0).unwrap();
            assert!((s.alpha(6) - (-1.0f64).exp()).abs() < 1e-12);
            assert!((s.alpha(6) - 0.3679).abs() < 1e-4);
        }
    }

    #[test]
    fn quadruple_mean_with_sqrt_shape() {
        let s = AlphaSchedule::new(2.0, 0.5, 5.0).unwrap();
        let got = s.alpha(20);
        assert!((got - (-4.0f64).exp()).abs() < 1e-12);
        assert!((got - 0.0183).abs() < 1e-4);
    }

    #[test]
    fn monotone_non_increasing_and_in_range() {
        let mut rng = crate::rng::stream(5, "alpha-prop", 0);
        for _ in 0..1000 {
            let w1 = rng.gen_range(0.01..8.0);
            let w2 = rng.gen_range(0.05..4.0);
            let mean = rng.gen_range(0.5..50.0);
            let s = AlphaSchedule::new(w1, w2, mean).unwrap();
            let l1 = rng.gen_range(0..200);
            let l2 = l1 + rng.gen_range(1..50);
            let a1 = s.alpha(l1);
            let a2 = s.alpha(l2);
            assert!(a1 > 0.0 && a1 <= 1.0);
            assert!(a2 > 0.0 && a2 <= 1.0);
            assert!(a1 >= a2, "alpha must not increase: {a1} < {a2}");
            // strictness holds wherever the values are representable above
            // the underflow floor
            if l1 > 0 && a2 > 1e-300 {
                assert!(a1 > a2, "strict decrease expected for positive lengths");
            }
        }
    }

    #[test]
    fn grid_enumerates_full_product() {
        let cfg = SearchConfig::default();
        assert_eq!(cfg.candidates().len(), 15);
    }

    #[test]
    fn invalid_grid_rejected() {
        let cfg = SearchConfig {
            w1_grid: vec![0.5, -1.0],
            w2_grid: vec![1.0],
        };
        assert!(cfg.validate().is_err());
        let empty = SearchConfig {
            w1_grid: vec![],
            w2_grid: vec![1.0],
        };
        assert!(empty.validate().is_err());
    }
}
