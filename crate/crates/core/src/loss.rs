//! Training losses: binary cross-entropy for the primary task, instance-level
//! contrastive learning, and the auto-quantized contrastive loss that blends
//! instance and cluster attraction per-sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Floor applied to logarithm arguments inside the Logloss.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    /// Instance temperature in the auto-quantized loss.
    #[serde(default = "default_tau")]
    pub tau1: f64,
    /// Cluster temperature in the auto-quantized loss.
    #[serde(default = "default_tau")]
    pub tau2: f64,
    /// Temperature for the standalone instance-level loss.
    #[serde(default = "default_tau")]
    pub icl_tau: f64,
    /// Auxiliary task weight.
    #[serde(default = "default_aux_weight")]
    pub aux_weight: f64,
    /// Positive codewords per anchor.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_tau() -> f64 {
    0.1
}
fn default_aux_weight() -> f64 {
    0.05
}
fn default_top_k() -> usize {
    5
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau1: default_tau(),
            tau2: default_tau(),
            icl_tau: default_tau(),
            aux_weight: default_aux_weight(),
            top_k: default_top_k(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self, codebook_capacity: Option<usize>) -> Result<()> {
        for (name, tau) in [("tau1", self.tau1), ("tau2", self.tau2), ("icl_tau", self.icl_tau)] {
            if tau <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {tau}"
                )));
            }
        }
        if self.aux_weight < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "aux_weight must be nonnegative, got {}",
                self.aux_weight
            )));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if let Some(t) = codebook_capacity {
            if self.top_k > t {
                return Err(Error::InvalidConfig(format!(
                    "top_k {} exceeds codebook capacity {t}",
                    self.top_k
                )));
            }
        }
        Ok(())
    }
}

/// Mean binary cross-entropy. Log arguments are clamped at `LOG_CLAMP`, so
/// predictions exactly at 0 or 1 stay finite; predictions outside [0, 1]
/// are an error.
pub fn logloss(tape: &mut Tape, yhat: Var, labels: &[u8]) -> Result<Var> {
    let y = tape.value(yhat);
    if y.numel() != labels.len() {
        return Err(crate::tensor::shape_err("logloss", &y.shape, &[labels.len()]));
    }
    for (position, &v) in y.data.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::PredictionOutOfRange { position, value: v });
        }
    }
    let shape = y.shape.clone();
    let pos_mask = tape.leaf_owned(Tensor::new(
        shape.clone(),
        labels.iter().map(|&l| l as f64).collect(),
    ));
    let neg_mask = tape.leaf_owned(Tensor::new(
        shape,
        labels.iter().map(|&l| 1.0 - l as f64).collect(),
    ));

    let clamped_pos = tape.clamp_min(yhat, LOG_CLAMP);
    let log_pos = tape.log(clamped_pos);
    let neg_pred = tape.scale(yhat, -1.0);
    let one_minus = tape.add_const(neg_pred, 1.0);
    let clamped_neg = tape.clamp_min(one_minus, LOG_CLAMP);
    let log_neg = tape.log(clamped_neg);

    let pos_term = tape.mul(log_pos, pos_mask)?;
    let neg_term = tape.mul(log_neg, neg_mask)?;
    let sum = tape.add(pos_term, neg_term)?;
    let mean = tape.mean_all(sum);
    Ok(tape.scale(mean, -1.0))
}

/// Output of a contrastive loss: the mean scalar node, the per-anchor loss
/// column, and bookkeeping about degenerate batches.
pub struct ContrastiveOut {
    pub loss: Var,
    pub per_anchor: Var,
    /// True when B = 1 left the loss without negatives (it is exactly zero).
    pub degenerate: bool,
    /// Selected positive codeword indices per anchor (auto-quantized only).
    pub topk: Vec<Vec<usize>>,
}

/// In-batch similarity plumbing shared by both contrastive losses.
///
/// For anchor `b`, the candidate set is its own augmented view plus all
/// other anchors and views in the batch (2B-2 negatives). Returns
/// `(d_other, d_view, pos_cos)`: exp-similarities of anchors against anchors
/// (self masked out), anchors against views, and the positive-pair cosine.
fn in_batch_terms(
    tape: &mut Tape,
    z: Var,
    z_plus: Var,
    tau: f64,
) -> Result<(Var, Var, Var)> {
    let b = tape.value(z).rows();
    let zn = tape.l2_normalize_rows(z);
    let zpn = tape.l2_normalize_rows(z_plus);

    let sim_zz = tape.matmul_nt(zn, zn)?;
    let sim_zz = tape.scale(sim_zz, 1.0 / tau);
    let d_zz = tape.exp(sim_zz);
    let mut off_diag = vec![1.0; b * b];
    for i in 0..b {
        off_diag[i * b + i] = 0.0;
    }
    let mask = tape.leaf_owned(Tensor::matrix(b, b, off_diag));
    let d_other = tape.mul(d_zz, mask)?;

    let sim_zp = tape.matmul_nt(zn, zpn)?;
    let sim_zp = tape.scale(sim_zp, 1.0 / tau);
    let d_view = tape.exp(sim_zp);

    let prod = tape.mul(zn, zpn)?;
    let pos_cos = tape.row_sum(prod);
    Ok((d_other, d_view, pos_cos))
}

/// Instance-level contrastive loss over in-batch negatives. With B = 1 there
/// are no negatives and the loss is exactly zero.
pub fn icl_loss(tape: &mut Tape, z: Var, z_plus: Var, cfg: &LossConfig) -> Result<ContrastiveOut> {
    let b = tape.value(z).rows();
    if tape.value(z).shape != tape.value(z_plus).shape {
        return Err(crate::tensor::shape_err(
            "icl_loss",
            &tape.value(z).shape,
            &tape.value(z_plus).shape,
        ));
    }
    if b == 1 {
        let zero = tape.leaf_owned(Tensor::matrix(1, 1, vec![0.0]));
        return Ok(ContrastiveOut {
            loss: zero,
            per_anchor: zero,
            degenerate: true,
            topk: Vec::new(),
        });
    }
    let tau = cfg.icl_tau;
    let (d_other, d_view, pos_cos) = in_batch_terms(tape, z, z_plus, tau)?;
    let den_other = tape.row_sum(d_other);
    let den_view = tape.row_sum(d_view);
    let den = tape.add(den_other, den_view)?;
    let log_den = tape.log(den);
    let log_num = tape.scale(pos_cos, 1.0 / tau);
    let per_anchor = tape.sub(log_den, log_num)?;
    let loss = tape.mean_all(per_anchor);
    Ok(ContrastiveOut {
        loss,
        per_anchor,
        degenerate: false,
        topk: Vec::new(),
    })
}

/// Top-K codeword indices per anchor from a B x T similarity readout,
/// ties broken toward the lower index, descending order.
fn select_topk(sims: &Tensor, k: usize) -> Vec<Vec<usize>> {
    let (b, t) = (sims.rows(), sims.cols());
    (0..b)
        .map(|i| {
            let row = sims.row(i);
            let mut idx: Vec<usize> = (0..t).collect();
            idx.sort_by(|&a, &c| row[c].partial_cmp(&row[a]).unwrap().then(a.cmp(&c)));
            idx.truncate(k);
            idx
        })
        .collect()
}

/// Auto-quantized contrastive loss: per anchor, the numerator geometrically
/// blends the instance term (exponent 1 - alpha) with the summed top-K
/// codeword terms (exponent alpha); the denominator spans the in-batch
/// instance set and the full codebook. Gradients flow to `z`, `z_plus`, and
/// the codewords; top-K selection itself is not differentiated through.
pub fn aqcl_loss(
    tape: &mut Tape,
    z: Var,
    z_plus: Var,
    codewords: Var,
    alphas: &[f64],
    cfg: &LossConfig,
) -> Result<ContrastiveOut> {
    let b = tape.value(z).rows();
    let t = tape.value(codewords).rows();
    cfg.validate(Some(t))?;
    if alphas.len() != b {
        return Err(crate::tensor::shape_err("aqcl_loss", &[alphas.len()], &[b]));
    }
    if tape.value(z).shape != tape.value(z_plus).shape {
        return Err(crate::tensor::shape_err(
            "aqcl_loss",
            &tape.value(z).shape,
            &tape.value(z_plus).shape,
        ));
    }
    for &a in alphas {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {a}"
            )));
        }
    }

    let (d_other, d_view, pos_cos) = in_batch_terms(tape, z, z_plus, cfg.tau1)?;

    let zn = tape.l2_normalize_rows(z);
    let qn = tape.l2_normalize_rows(codewords);
    let sim_zq = tape.matmul_nt(zn, qn)?; // B x T
    let topk = select_topk(tape.value(sim_zq), cfg.top_k);
    let sim_zq = tape.scale(sim_zq, 1.0 / cfg.tau2);
    let d_zq = tape.exp(sim_zq);

    let mut mask = vec![0.0; b * t];
    for (i, picks) in topk.iter().enumerate() {
        for &p in picks {
            mask[i * t + p] = 1.0;
        }
    }
    let mask = tape.leaf_owned(Tensor::matrix(b, t, mask));
    let d_zq_top = tape.mul(d_zq, mask)?;
    let cluster_num = tape.row_sum(d_zq_top); // B x 1

    // log numerator = (1 - alpha) * pos_cos / tau1 + alpha * log(cluster_num)
    let log_inst = tape.scale(pos_cos, 1.0 / cfg.tau1);
    let one_minus_alpha = tape.leaf_owned(Tensor::matrix(
        b,
        1,
        alphas.iter().map(|a| 1.0 - a).collect(),
    ));
    let alpha_t = tape.leaf_owned(Tensor::matrix(b, 1, alphas.to_vec()));
    let inst_part = tape.mul(log_inst, one_minus_alpha)?;
    let log_cluster = tape.log(cluster_num);
    let cluster_part = tape.mul(log_cluster, alpha_t)?;
    let log_num = tape.add(inst_part, cluster_part)?;

    // denominator: all in-batch instance terms plus every codeword term
    let den_other = tape.row_sum(d_other);
    let den_view = tape.row_sum(d_view);
    let den_inst = tape.add(den_other, den_view)?;
    let den_codes = tape.row_sum(d_zq);
    let den = tape.add(den_inst, den_codes)?;
    let log_den = tape.log(den);

    let per_anchor = tape.sub(log_den, log_num)?;
    let loss = tape.mean_all(per_anchor);
    Ok(ContrastiveOut {
        loss,
        per_anchor,
        degenerate: false,
        topk,
    })
}

/// Overall objective: primary Logloss plus the weighted auxiliary term.
pub fn total_loss(tape: &mut Tape, primary: Var, auxiliary: Var, aux_weight: f64) -> Result<Var> {
    let weighted = tape.scale(auxiliary, aux_weight);
    tape.add(primary, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::renormalize_rows;
    use crate::reference;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_rows(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = stream(seed, "loss-test", 0);
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
        )
    }

    #[test]
    fn logloss_half_prediction() {
        let mut tape = Tape::new();
        let yhat = tape.leaf_owned(Tensor::matrix(1, 1, vec![0.5]));
        let l = logloss(&mut tape, yhat, &[1]).unwrap();
        assert!((tape.value(l).scalar_value() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn logloss_two_sample_mean() {
        let mut tape = Tape::new();
        let yhat = tape.leaf_owned(Tensor::matrix(2, 1, vec![0.9, 0.1]));
        let l = logloss(&mut tape, yhat, &[1, 0]).unwrap();
        let expect = -(0.9f64.ln() + 0.9f64.ln()) / 2.0;
        assert!((tape.value(l).scalar_value() - expect).abs() < 1e-12);
        assert!((tape.value(l).scalar_value() - 0.10536).abs() < 1e-5);
    }

    #[test]
    fn logloss_clamp_keeps_boundary_finite() {
        let mut tape = Tape::new();
        let yhat = tape.leaf_owned(Tensor::matrix(2, 1, vec![1.0, 0.0]));
        let l = logloss(&mut tape, yhat, &[0, 1]).unwrap();
        let v = tape.value(l).scalar_value();
        assert!(v.is_finite());
        assert!((v - (-LOG_CLAMP.ln())).abs() < 1e-9, "{v}");
        assert!((v - 27.6310).abs() < 1e-3);
    }

    #[test]
    fn logloss_rejects_out_of_range() {
        let mut tape = Tape::new();
        let yhat = tape.leaf_owned(Tensor::matrix(1, 1, vec![1.5]));
        assert!(matches!(
            logloss(&mut tape, yhat, &[1]),
            Err(Error::PredictionOutOfRange { .. })
        ));
    }

    #[test]
    fn icl_matches_reference_per_anchor() {
        for seed in 0..5 {
            let b = 6;
            let dim = 8;
            let z = random_rows(b, dim, seed);
            let zp = random_rows(b, dim, seed + 50);
            let cfg = LossConfig::default();
            let mut tape = Tape::new();
            let zv = tape.leaf(&z);
            let zpv = tape.leaf(&zp);
            let out = icl_loss(&mut tape, zv, zpv, &cfg).unwrap();
            let got = tape.value(out.per_anchor).data.clone();

            for anchor in 0..b {
                let mut negatives: Vec<&[f64]> = Vec::new();
                for other in 0..b {
                    if other != anchor {
                        negatives.push(z.row(other));
                        negatives.push(zp.row(other));
                    }
                }
                let expect =
                    reference::naive_icl(z.row(anchor), zp.row(anchor), &negatives, cfg.icl_tau);
                assert!(
                    (got[anchor] - expect).abs() < 1e-10,
                    "anchor {anchor}: {} vs {expect}",
                    got[anchor]
                );
            }
        }
    }

    #[test]
    fn icl_single_sample_batch_is_exactly_zero() {
        let mut tape = Tape::new();
        let z = tape.leaf_owned(random_rows(1, 8, 3));
        let zp = tape.leaf_owned(random_rows(1, 8, 4));
        let out = icl_loss(&mut tape, z, zp, &LossConfig::default()).unwrap();
        assert!(out.degenerate);
        assert_eq!(tape.value(out.loss).scalar_value(), 0.0);
    }

    #[test]
    fn icl_uniform_similarities_hit_log_count() {
        // identical vectors everywhere: every pairwise similarity is 1, so
        // the softmax is uniform and the loss is log(1 + |negatives|)
        let b = 5;
        let row = vec![0.3, -0.7, 0.2];
        let z = Tensor::matrix(b, 3, row.repeat(b));
        let cfg = LossConfig {
            icl_tau: 0.37,
            ..LossConfig::default()
        };
        let mut tape = Tape::new();
        let zv = tape.leaf(&z);
        let zpv = tape.leaf(&z);
        let out = icl_loss(&mut tape, zv, zpv, &cfg).unwrap();
        let expect = ((2 * b - 1) as f64).ln();
        assert!((tape.value(out.loss).scalar_value() - expect).abs() < 1e-10);
    }

    #[test]
    fn icl_sharper_temperature_reduces_loss_when_positive_dominates() {
        // positive pair aligned, negatives orthogonal: lowering tau has to
        // strictly lower the loss
        let z = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let zp = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let mut last = f64::INFINITY;
        for tau in [1.0, 0.5, 0.1] {
            let cfg = LossConfig {
                icl_tau: tau,
                ..LossConfig::default()
            };
            let mut tape = Tape::new();
            let zv = tape.leaf(&z);
            let zpv = tape.leaf(&zp);
            let out = icl_loss(&mut tape, zv, zpv, &cfg).unwrap();
            let v = tape.value(out.loss).scalar_value();
            assert!(v < last, "tau {tau}: {v} !< {last}");
            last = v;
        }
    }

    #[test]
    fn aqcl_matches_reference_per_anchor() {
        for seed in 0..5 {
            let (b, dim, t, k) = (4, 8, 6, 2);
            let z = random_rows(b, dim, seed);
            let zp = random_rows(b, dim, seed + 60);
            let mut q = random_rows(t, dim, seed + 120);
            renormalize_rows(&mut q);
            let alphas: Vec<f64> = (0..b).map(|i| i as f64 / b as f64).collect();
            let cfg = LossConfig {
                top_k: k,
                ..LossConfig::default()
            };
            let mut tape = Tape::new();
            let zv = tape.leaf(&z);
            let zpv = tape.leaf(&zp);
            let qv = tape.leaf(&q);
            let out = aqcl_loss(&mut tape, zv, zpv, qv, &alphas, &cfg).unwrap();
            let got = tape.value(out.per_anchor).data.clone();

            let q_rows: Vec<Vec<f64>> = (0..t).map(|i| q.row(i).to_vec()).collect();
            for anchor in 0..b {
                let mut negatives: Vec<&[f64]> = Vec::new();
                for other in 0..b {
                    if other != anchor {
                        negatives.push(z.row(other));
                        negatives.push(zp.row(other));
                    }
                }
                let expect = reference::naive_aqcl(
                    z.row(anchor),
                    zp.row(anchor),
                    &negatives,
                    &q_rows,
                    k,
                    alphas[anchor],
                    cfg.tau1,
                    cfg.tau2,
                );
                assert!(
                    (got[anchor] - expect).abs() < 1e-10,
                    "anchor {anchor}: {} vs {expect}",
                    got[anchor]
                );
            }
        }
    }

    #[test]
    fn aqcl_alpha_one_ignores_positive_view() {
        // with alpha = 1 the instance factor has exponent zero, so moving
        // z_plus of an anchor must leave the numerator's log unchanged;
        // only the denominator moves, and replacing z_plus with a fresh
        // vector changes nothing about the cluster part
        let (b, dim, t) = (4, 8, 6);
        let z = random_rows(b, dim, 1);
        let zp1 = random_rows(b, dim, 2);
        let zp2 = random_rows(b, dim, 3);
        let mut q = random_rows(t, dim, 4);
        renormalize_rows(&mut q);
        let alphas = vec![1.0; b];
        let cfg = LossConfig {
            top_k: 2,
            ..LossConfig::default()
        };

        let log_num = |zp: &Tensor| -> Vec<f64> {
            let mut tape = Tape::new();
            let zv = tape.leaf(&z);
            let zpv = tape.leaf(zp);
            let qv = tape.leaf(&q);
            let out = aqcl_loss(&mut tape, zv, zpv, qv, &alphas, &cfg).unwrap();
            // per-anchor loss = log_den - log_num; recover log_num by
            // recomputing log_den from the readouts
            let per = tape.value(out.per_anchor).data.clone();
            let zn = crate::tensor::l2_normalize_rows(&z);
            let zpn = crate::tensor::l2_normalize_rows(zp);
            let qn = crate::tensor::l2_normalize_rows(&q);
            (0..b)
                .map(|i| {
                    let mut den = 0.0;
                    for j in 0..b {
                        if j != i {
                            den += (crate::tensor::dot(zn.row(i), zn.row(j)) / cfg.tau1).exp();
                        }
                        den += (crate::tensor::dot(zn.row(i), zpn.row(j)) / cfg.tau1).exp();
                    }
                    for r in 0..t {
                        den += (crate::tensor::dot(zn.row(i), qn.row(r)) / cfg.tau2).exp();
                    }
                    den.ln() - per[i]
                })
                .collect()
        };

        let n1 = log_num(&zp1);
        let n2 = log_num(&zp2);
        for (a, b) in n1.iter().zip(&n2) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn aqcl_alpha_zero_dominates_icl_pointwise() {
        for seed in 0..10 {
            let (b, dim, t) = (5, 8, 6);
            let z = random_rows(b, dim, seed * 3 + 1);
            let zp = random_rows(b, dim, seed * 3 + 2);
            let mut q = random_rows(t, dim, seed * 3 + 3);
            renormalize_rows(&mut q);
            let cfg = LossConfig {
                top_k: 2,
                icl_tau: 0.1,
                ..LossConfig::default()
            };
            let mut tape = Tape::new();
            let zv = tape.leaf(&z);
            let zpv = tape.leaf(&zp);
            let qv = tape.leaf(&q);
            let aq = aqcl_loss(&mut tape, zv, zpv, qv, &vec![0.0; b], &cfg).unwrap();
            let ic = icl_loss(&mut tape, zv, zpv, &cfg).unwrap();
            let aq_vals = tape.value(aq.per_anchor).data.clone();
            let ic_vals = tape.value(ic.per_anchor).data.clone();
            for (a, i) in aq_vals.iter().zip(&ic_vals) {
                assert!(a >= i, "{a} < {i}");
            }
        }
    }

    #[test]
    fn contrastive_losses_scale_invariant() {
        let (b, dim, t) = (4, 8, 5);
        let z = random_rows(b, dim, 7);
        let zp = random_rows(b, dim, 8);
        let mut q = random_rows(t, dim, 9);
        renormalize_rows(&mut q);
        let mut z_scaled = z.clone();
        for v in z_scaled.data.iter_mut() {
            *v *= 2.5;
        }
        let cfg = LossConfig {
            top_k: 2,
            ..LossConfig::default()
        };
        let alphas = vec![0.4; b];
        let eval = |zt: &Tensor| -> (f64, f64) {
            let mut tape = Tape::new();
            let zv = tape.leaf(zt);
            let zpv = tape.leaf(&zp);
            let qv = tape.leaf(&q);
            let a = aqcl_loss(&mut tape, zv, zpv, qv, &alphas, &cfg).unwrap();
            let i = icl_loss(&mut tape, zv, zpv, &cfg).unwrap();
            (
                tape.value(a.loss).scalar_value(),
                tape.value(i.loss).scalar_value(),
            )
        };
        let (a1, i1) = eval(&z);
        let (a2, i2) = eval(&z_scaled);
        assert!((a1 - a2).abs() < 1e-10);
        assert!((i1 - i2).abs() < 1e-10);
    }

    #[test]
    fn aqcl_permutation_equivariant() {
        let (b, dim, t) = (6, 8, 5);
        let z = random_rows(b, dim, 21);
        let zp = random_rows(b, dim, 22);
        let mut q = random_rows(t, dim, 23);
        renormalize_rows(&mut q);
        let alphas: Vec<f64> = (0..b).map(|i| 0.1 + 0.1 * i as f64).collect();
        let cfg = LossConfig {
            top_k: 3,
            ..LossConfig::default()
        };
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permute = |t: &Tensor| {
            let mut out = Tensor::zeros(t.shape.clone());
            for (new, &old) in perm.iter().enumerate() {
                out.data[new * dim..(new + 1) * dim].copy_from_slice(t.row(old));
            }
            out
        };
        let zp2 = permute(&zp);
        let z2 = permute(&z);
        let alphas2: Vec<f64> = perm.iter().map(|&o| alphas[o]).collect();

        let run = |zt: &Tensor, zpt: &Tensor, al: &[f64]| {
            let mut tape = Tape::new();
            let zv = tape.leaf(zt);
            let zpv = tape.leaf(zpt);
            let qv = tape.leaf(&q);
            let out = aqcl_loss(&mut tape, zv, zpv, qv, al, &cfg).unwrap();
            tape.value(out.loss).scalar_value()
        };
        let l1 = run(&z, &zp, &alphas);
        let l2 = run(&z2, &zp2, &alphas2);
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn topk_tie_breaks_low_index() {
        let sims = Tensor::matrix(1, 3, vec![0.9, 0.9, 0.1]);
        assert_eq!(select_topk(&sims, 2), vec![vec![0, 1]]);
    }

    #[test]
    fn total_loss_composition() {
        let mut tape = Tape::new();
        let a = tape.leaf_owned(Tensor::scalar(0.7));
        let b = tape.leaf_owned(Tensor::scalar(2.0));
        let t = total_loss(&mut tape, a, b, 0.05).unwrap();
        assert!((tape.value(t).scalar_value() - 0.8).abs() < 1e-12);
        let t0 = total_loss(&mut tape, a, b, 0.0).unwrap();
        assert_eq!(tape.value(t0).scalar_value(), 0.7);
    }

    #[test]
    fn total_gradient_is_sum_of_parts() {
        let z = random_rows(4, 6, 31);
        let zp = random_rows(4, 6, 32);
        let mut q = random_rows(5, 6, 33);
        renormalize_rows(&mut q);
        let cfg = LossConfig {
            top_k: 2,
            ..LossConfig::default()
        };

        let mut tape = Tape::new();
        let zv = tape.leaf(&z);
        let zpv = tape.leaf(&zp);
        let qv = tape.leaf(&q);
        // stand-in primary: mean of sigmoid readouts of z's first column
        let probs = tape.sigmoid(zv);
        let pm = tape.mean_all(probs);
        let aux = aqcl_loss(&mut tape, zv, zpv, qv, &[0.3, 0.5, 0.2, 0.9], &cfg).unwrap();
        let total = total_loss(&mut tape, pm, aux.loss, 0.05).unwrap();

        let g_total = tape.backward(total).unwrap();
        let g_primary = tape.backward(pm).unwrap();
        let g_aux = tape.backward(aux.loss).unwrap();
        for i in 0..z.numel() {
            let lhs = g_total.grad(zv).data[i];
            let rhs = g_primary.grad(zv).data[i] + 0.05 * g_aux.grad(zv).data[i];
            assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn gradients_flow_to_codebook() {
        let z = random_rows(4, 6, 41);
        let zp = random_rows(4, 6, 42);
        let mut q = random_rows(5, 6, 43);
        renormalize_rows(&mut q);
        let mut tape = Tape::new();
        let zv = tape.leaf(&z);
        let zpv = tape.leaf(&zp);
        let qv = tape.leaf(&q);
        let cfg = LossConfig {
            top_k: 2,
            ..LossConfig::default()
        };
        let out = aqcl_loss(&mut tape, zv, zpv, qv, &[0.5; 4], &cfg).unwrap();
        let g = tape.backward(out.loss).unwrap();
        assert!(g.grad(qv).data.iter().any(|&v| v != 0.0));
        assert!(g.grad(zv).data.iter().any(|&v| v != 0.0));
        assert!(g.grad(zpv).data.iter().any(|&v| v != 0.0));
    }
}
