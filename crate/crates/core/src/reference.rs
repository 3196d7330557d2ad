//! Independent reference implementations used to verify the main code paths.
//!
//! Everything here is deliberately written the slow, obvious way and shares
//! no code with the modules it checks: direct loops over explicit sets for
//! the contrastive losses, a log-domain dual solver for entropic transport,
//! and O(P*N) pair counting for AUC.

use crate::tensor::Tensor;

/// Central finite-difference derivative of `f` w.r.t. one coordinate of `x`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Relative-error agreement test between an analytic gradient and a
/// finite-difference estimate. Near-zero pairs fall back to an absolute
/// floor so FD noise on vanishing gradients does not fail the check.
pub fn grads_agree(analytic: f64, fd: f64, rel_tol: f64) -> bool {
    let diff = (analytic - fd).abs();
    diff <= rel_tol * analytic.abs().max(fd.abs()) || diff <= 1e-7
}

/// Check every coordinate of `x0` by central differences against `analytic`.
/// Returns the worst offending coordinate on failure.
pub fn check_grad(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    analytic: &[f64],
    rel_tol: f64,
) -> Result<(), (usize, f64, f64)> {
    assert_eq!(x0.len(), analytic.len());
    for i in 0..x0.len() {
        let fd = central_diff(f, x0, i, 1e-6);
        if !grads_agree(analytic[i], fd, rel_tol) {
            return Err((i, analytic[i], fd));
        }
    }
    Ok(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / ((na + 1e-12) * (nb + 1e-12))
}

/// Instance-level contrastive loss for one anchor, evaluated directly over
/// explicit positive/negative sets.
pub fn naive_icl(anchor: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> f64 {
    let num = (cosine(anchor, positive) / tau).exp();
    let mut den = num;
    for n in negatives {
        den += (cosine(anchor, n) / tau).exp();
    }
    -(num / den).ln()
}

/// Auto-quantized contrastive loss for one anchor, evaluated directly:
/// geometric blend of the instance term and the summed top-K codeword terms
/// over a denominator spanning the instance set plus the whole codebook.
#[allow(clippy::too_many_arguments)]
pub fn naive_aqcl(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    codewords: &[Vec<f64>],
    k: usize,
    alpha: f64,
    tau1: f64,
    tau2: f64,
) -> f64 {
    let d1_pos = (cosine(anchor, positive) / tau1).exp();

    // top-K by cosine, ties broken toward the lower index
    let mut sims: Vec<(usize, f64)> = codewords
        .iter()
        .enumerate()
        .map(|(t, q)| (t, cosine(anchor, q)))
        .collect();
    sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let top_sum: f64 = sims[..k].iter().map(|(_, s)| (s / tau2).exp()).sum();

    let mut den = d1_pos;
    for n in negatives {
        den += (cosine(anchor, n) / tau1).exp();
    }
    for q in codewords {
        den += (cosine(anchor, q) / tau2).exp();
    }

    let log_num = (1.0 - alpha) * d1_pos.ln() + alpha * top_sum.ln();
    den.ln() - log_num
}

/// Entropic optimal transport solved in the log domain by dual ascent on the
/// Sinkhorn potentials, iterated to a tight marginal tolerance. Marginals are
/// uniform: rows 1/T, columns 1/B. `scores` is T x B row-major similarity
/// (maximization form, matching the assignment objective).
pub fn entropic_ot_log_domain(
    scores: &Tensor,
    epsilon: f64,
    tol: f64,
    max_iters: usize,
) -> Tensor {
    let (t, b) = (scores.rows(), scores.cols());
    let log_r = -(t as f64).ln(); // log(1/T)
    let log_c = -(b as f64).ln(); // log(1/B)
    let mut f = vec![0.0; t];
    let mut g = vec![0.0; b];

    let logsumexp = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
        let collected: Vec<f64> = vals.collect();
        let m = collected.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + collected.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    };

    for _ in 0..max_iters {
        for i in 0..t {
            let lse = logsumexp(&mut (0..b).map(|j| (scores.data[i * b + j] + g[j]) / epsilon));
            f[i] = epsilon * (log_r - lse);
        }
        for j in 0..b {
            let lse = logsumexp(&mut (0..t).map(|i| (scores.data[i * b + j] + f[i]) / epsilon));
            g[j] = epsilon * (log_c - lse);
        }

        // row-marginal violation after the column update
        let mut worst = 0.0f64;
        for i in 0..t {
            let row: f64 = (0..b)
                .map(|j| ((scores.data[i * b + j] + f[i] + g[j]) / epsilon).exp())
                .sum();
            worst = worst.max((row - (1.0 / t as f64)).abs());
        }
        if worst < tol {
            break;
        }
    }

    let mut plan = vec![0.0; t * b];
    for i in 0..t {
        for j in 0..b {
            plan[i * b + j] = ((scores.data[i * b + j] + f[i] + g[j]) / epsilon).exp();
        }
    }
    Tensor::matrix(t, b, plan)
}

/// AUC by explicit pair counting with half credit for ties.
/// Returns None when either class is missing.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, (&sp, &lp)) in scores.iter().zip(labels).enumerate() {
        if lp != 1 {
            continue;
        }
        for (j, (&sn, &ln)) in scores.iter().zip(labels).enumerate() {
            if i == j || ln != 0 {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        None
    } else {
        Some(wins / pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_icl_frozen_example() {
        // sim(anchor, positive)=1, one orthogonal negative, tau=1:
        // -log(e / (e + 1))
        let a = [1.0, 0.0];
        let p = [1.0, 0.0];
        let n = [0.0, 1.0];
        let loss = naive_icl(&a, &p, &[&n], 1.0);
        let expect = -(std::f64::consts::E / (std::f64::consts::E + 1.0)).ln();
        assert!((loss - expect).abs() < 1e-12);
        assert!((loss - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn naive_aqcl_single_codeword_example() {
        // T=1, K=1, alpha=1, codeword == z == z+, one orthogonal negative,
        // tau1=tau2=1: loss = -log(e / (e + 1 + e))
        let z = [1.0, 0.0];
        let neg = [0.0, 1.0];
        let q = vec![vec![1.0, 0.0]];
        let loss = naive_aqcl(&z, &z, &[&neg], &q, 1, 1.0, 1.0, 1.0);
        let e = std::f64::consts::E;
        let expect = -(e / (e + 1.0 + e)).ln();
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn ot_oracle_satisfies_marginals() {
        let scores = Tensor::matrix(2, 3, vec![0.5, -0.2, 0.1, -0.4, 0.3, 0.0]);
        let plan = entropic_ot_log_domain(&scores, 0.05, 1e-12, 100_000);
        for i in 0..2 {
            let row: f64 = plan.row(i).iter().sum();
            assert!((row - 0.5).abs() < 1e-10);
        }
        for j in 0..3 {
            let col: f64 = (0..2).map(|i| plan.data[i * 3 + j]).sum();
            assert!((col - 1.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pairwise_auc_perfect_and_tied() {
        assert_eq!(pairwise_auc(&[0.9, 0.1], &[1, 0]), Some(1.0));
        assert_eq!(pairwise_auc(&[0.5, 0.5, 0.5], &[1, 0, 1]), Some(0.5));
        assert_eq!(pairwise_auc(&[0.5, 0.6], &[1, 1]), None);
    }
}
