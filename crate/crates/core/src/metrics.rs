//! Ranking metrics: AUC via rank sums (exact, tie-aware), relative
//! improvement over a base model, and per-activity-bucket reporting.

use serde::{Deserialize, Serialize};

use crate::data::Bucket;
use crate::error::{Error, Result};
use crate::loss::LOG_CLAMP;

/// AUC by the rank-sum identity: sort once, give tied scores their average
/// rank, and normalize the positive rank mass. Equals pairwise counting
/// with half credit for ties, exactly.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes; got {pos} positives and {neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos as f64 * (pos as f64 + 1.0)) / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Relative improvement of a target AUC over a base AUC, in percent,
/// normalized by the distance from chance. Undefined at base <= 0.5.
pub fn rela_impr(target_auc: f64, base_auc: f64) -> Result<f64> {
    if base_auc <= 0.5 {
        return Err(Error::UndefinedMetric(format!(
            "relative improvement needs base AUC > 0.5, got {base_auc}"
        )));
    }
    Ok(((target_auc - 0.5) / (base_auc - 0.5) - 1.0) * 100.0)
}

pub fn logloss_metric(scores: &[f64], labels: &[u8]) -> f64 {
    let n = scores.len().max(1);
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if y == 1 {
                -p.max(LOG_CLAMP).ln()
            } else {
                -(1.0 - p).max(LOG_CLAMP).ln()
            }
        })
        .sum();
    total / n as f64
}

/// Metrics for one group of samples. An undefined AUC carries its reason.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub count: usize,
    pub positives: usize,
    pub auc: Option<f64>,
    pub auc_unavailable_reason: Option<String>,
    pub logloss: f64,
    pub rela_impr_pct: Option<f64>,
    pub rela_impr_unavailable_reason: Option<String>,
}

impl GroupMetrics {
    fn from_scores(scores: &[f64], labels: &[u8]) -> Self {
        let (auc_v, reason) = if scores.is_empty() {
            (None, Some("empty group".to_string()))
        } else {
            match auc(scores, labels) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        GroupMetrics {
            count: scores.len(),
            positives: labels.iter().filter(|&&l| l == 1).count(),
            auc: auc_v,
            auc_unavailable_reason: reason,
            logloss: logloss_metric(scores, labels),
            rela_impr_pct: None,
            rela_impr_unavailable_reason: None,
        }
    }

    fn fill_rela_impr(&mut self, base: &GroupMetrics) {
        match (self.auc, base.auc) {
            (Some(t), Some(b)) => match rela_impr(t, b) {
                Ok(v) => self.rela_impr_pct = Some(v),
                Err(e) => self.rela_impr_unavailable_reason = Some(e.to_string()),
            },
            _ => {
                self.rela_impr_unavailable_reason =
                    Some("AUC undefined on target or base".to_string());
            }
        }
    }
}

/// Overall and per-activity-bucket metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: GroupMetrics,
    /// Indexed by [`Bucket::index`]: non-active, slightly-active,
    /// highly-active.
    pub buckets: Vec<GroupMetrics>,
}

impl MetricsReport {
    /// Stable sorted-key JSON rendering.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = serde_json::to_string_pretty(&value).expect("report renders");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Flat `group<TAB>metric<TAB>value` table for plotting tools.
    pub fn to_flat_table(&self) -> String {
        let mut out = String::from("group\tmetric\tvalue\n");
        let mut emit = |group: &str, g: &GroupMetrics| {
            use std::fmt::Write as _;
            let _ = writeln!(out, "{group}\tcount\t{}", g.count);
            let _ = writeln!(out, "{group}\tpositives\t{}", g.positives);
            let _ = writeln!(
                out,
                "{group}\tauc\t{}",
                g.auc.map_or("NA".into(), |v| v.to_string())
            );
            let _ = writeln!(out, "{group}\tlogloss\t{}", g.logloss);
            if let Some(r) = g.rela_impr_pct {
                let _ = writeln!(out, "{group}\trela_impr_pct\t{r}");
            }
        };
        emit("overall", &self.overall);
        for b in Bucket::ALL {
            emit(b.name(), &self.buckets[b.index()]);
        }
        out
    }
}

/// Build the report for one prediction set, grouped by bucket assignment.
/// When `base` is supplied, every group gains a relative-improvement column
/// against the matching group of the base report.
pub fn bucket_report(
    scores: &[f64],
    labels: &[u8],
    buckets: &[Bucket],
    base: Option<&MetricsReport>,
) -> MetricsReport {
    assert_eq!(scores.len(), labels.len());
    assert_eq!(scores.len(), buckets.len());
    let mut overall = GroupMetrics::from_scores(scores, labels);
    let mut groups = Vec::new();
    for bucket in Bucket::ALL {
        let (s, l): (Vec<f64>, Vec<u8>) = scores
            .iter()
            .zip(labels)
            .zip(buckets)
            .filter(|&((_, _), b)| *b == bucket)
            .map(|((s, l), _)| (*s, *l))
            .unzip();
        groups.push(GroupMetrics::from_scores(&s, &l));
    }
    if let Some(base) = base {
        overall.fill_rela_impr(&base.overall);
        for (g, b) in groups.iter_mut().zip(&base.buckets) {
            g.fill_rela_impr(b);
        }
    }
    MetricsReport {
        overall,
        buckets: groups,
    }
}
