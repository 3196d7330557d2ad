//! Online interest codebook: balanced batch-to-codeword assignment through
//! entropy-regularized transport solved by Sinkhorn-Knopp, one-hot
//! conversion, and the stop-gradient codebook loss.

use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tape::{Tape, Var};
use crate::tensor::{self, Tensor};

/// The T interest codewords, kept row-normalized on the unit sphere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Codebook {
    pub codewords: Tensor,
    pub tau3: f64,
}

impl Codebook {
    /// Rows drawn uniformly on the unit sphere.
    pub fn init(capacity: usize, z_dim: usize, tau3: f64, seed: u64) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::InvalidConfig(format!(
                "codebook capacity must be >= 2, got {capacity}"
            )));
        }
        if tau3 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tau3 must be positive, got {tau3}"
            )));
        }
        let mut rng = stream(seed, "codebook-init", 0);
        let data: Vec<f64> = (0..capacity * z_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut codewords = Tensor::matrix(capacity, z_dim, data);
        renormalize_rows(&mut codewords);
        Ok(Codebook { codewords, tau3 })
    }

    pub fn capacity(&self) -> usize {
        self.codewords.rows()
    }

    pub fn z_dim(&self) -> usize {
        self.codewords.cols()
    }
}

/// Project every row back onto the unit sphere (zero rows are left in place).
pub fn renormalize_rows(t: &mut Tensor) {
    let (m, n) = (t.rows(), t.cols());
    for i in 0..m {
        let row = &mut t.data[i * n..(i + 1) * n];
        let norm = tensor::l2_norm(row);
        if norm > 0.0 {
            for x in row {
                *x /= norm;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropy weight.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Alternation rounds; each round is one column step then one row step.
    #[serde(default = "default_n_iters")]
    pub n_iters: usize,
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_n_iters() -> usize {
    3
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: default_epsilon(),
            n_iters: default_n_iters(),
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sinkhorn epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.n_iters == 0 {
            return Err(Error::InvalidConfig("sinkhorn n_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Balanced soft assignment of a batch to the codewords.
///
/// Builds `M = exp(S / epsilon)` from cosine scores (max-subtracted per
/// column before exponentiation to guard against overflow), then alternates
/// column normalization (columns sum to 1/B) and row normalization (rows sum
/// to 1/T) for `n_iters` rounds, ending on a row step.
pub fn sinkhorn_assign(codebook: &Codebook, z: &Tensor, cfg: &SinkhornConfig) -> Result<Tensor> {
    cfg.validate()?;
    if z.cols() != codebook.z_dim() {
        return Err(tensor::shape_err(
            "sinkhorn_assign",
            &codebook.codewords.shape,
            &z.shape,
        ));
    }
    let qn = tensor::l2_normalize_rows(&codebook.codewords);
    let zn = tensor::l2_normalize_rows(z);
    let scores = tensor::matmul_nt(&qn, &zn)?; // T x B
    Ok(sinkhorn_from_scores(&scores, cfg))
}

/// Sinkhorn iterations on a precomputed T x B score matrix.
pub fn sinkhorn_from_scores(scores: &Tensor, cfg: &SinkhornConfig) -> Tensor {
    let (t, b) = (scores.rows(), scores.cols());
    let mut m = vec![0.0; t * b];
    for j in 0..b {
        let col_max = (0..t)
            .map(|i| scores.data[i * b + j])
            .fold(f64::NEG_INFINITY, f64::max);
        for i in 0..t {
            m[i * b + j] = ((scores.data[i * b + j] - col_max) / cfg.epsilon).exp();
        }
    }

    let row_target = 1.0 / t as f64;
    let col_target = 1.0 / b as f64;
    for _ in 0..cfg.n_iters {
        for j in 0..b {
            let sum: f64 = (0..t).map(|i| m[i * b + j]).sum();
            if sum > 0.0 {
                let scale = col_target / sum;
                for i in 0..t {
                    m[i * b + j] *= scale;
                }
            }
        }
        for i in 0..t {
            let row = &mut m[i * b..(i + 1) * b];
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                let scale = row_target / sum;
                for x in row.iter_mut() {
                    *x *= scale;
                }
            }
        }
    }
    Tensor::matrix(t, b, m)
}

/// Convert a soft assignment into its one-hot version: each column becomes
/// one-hot at its argmax, ties broken toward the lower codeword index.
pub fn discretize(assignment: &Tensor) -> Tensor {
    let (t, b) = (assignment.rows(), assignment.cols());
    let mut out = vec![0.0; t * b];
    for j in 0..b {
        let mut best = 0usize;
        let mut best_val = assignment.data[j];
        for i in 1..t {
            let v = assignment.data[i * b + j];
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        out[best * b + j] = 1.0;
    }
    Tensor::matrix(t, b, out)
}

/// Column argmax indices of an assignment matrix (same tie rule as
/// [`discretize`]): the interest id of each sample.
pub fn assignment_indices(assignment: &Tensor) -> Vec<usize> {
    let (t, b) = (assignment.rows(), assignment.cols());
    (0..b)
        .map(|j| {
            let mut best = 0usize;
            let mut best_val = assignment.data[j];
            for i in 1..t {
                let v = assignment.data[i * b + j];
                if v > best_val {
                    best_val = v;
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Cross-entropy between the one-hot assignment and the codeword softmax
/// under stop-gradient representations: adjoints reach the codebook only.
///
/// `z` is a tape node for the batch representations; `onehot` is the T x B
/// discrete assignment. Returns the scalar loss node.
pub fn codebook_loss(
    tape: &mut Tape,
    codewords: Var,
    z: Var,
    onehot: &Tensor,
    tau3: f64,
) -> Result<Var> {
    let b = tape.value(z).rows();
    let t = tape.value(codewords).rows();
    if onehot.rows() != t || onehot.cols() != b {
        return Err(tensor::shape_err(
            "codebook_loss",
            &onehot.shape,
            &[t, b],
        ));
    }
    let z_sg = tape.stop_gradient(z);
    let zn = tape.l2_normalize_rows(z_sg);
    let qn = tape.l2_normalize_rows(codewords);
    let sims = tape.matmul_nt(zn, qn)?; // B x T
    let scaled = tape.scale(sims, 1.0 / tau3);
    let probs = tape.softmax_rows(scaled);
    let logp = tape.log(probs);
    // transpose the one-hot to B x T so it can mask log-probabilities
    let mut mask = vec![0.0; b * t];
    for i in 0..t {
        for j in 0..b {
            mask[j * t + i] = onehot.data[i * b + j];
        }
    }
    let mask = tape.leaf_owned(Tensor::matrix(b, t, mask));
    let picked = tape.mul(logp, mask)?;
    let total = tape.sum_all(picked);
    Ok(tape.scale(total, -1.0))
}

/// Indices of the K codewords most cosine-similar to `z`, in
/// descending-similarity order, ties broken toward the lower index.
pub fn topk_codewords(codebook: &Codebook, z: &[f64], k: usize) -> Result<Vec<usize>> {
    let t = codebook.capacity();
    if k == 0 || k > t {
        return Err(Error::InvalidConfig(format!(
            "top-K must satisfy 1 <= K <= T; got K={k}, T={t}"
        )));
    }
    let d = codebook.z_dim();
    if z.len() != d {
        return Err(tensor::shape_err(
            "topk_codewords",
            &[z.len()],
            &[d],
        ));
    }
    let qn = tensor::l2_normalize_rows(&codebook.codewords);
    let zn_len = tensor::l2_norm(z) + tensor::NORM_GUARD;
    let mut sims: Vec<(usize, f64)> = (0..t)
        .map(|i| (i, tensor::dot(qn.row(i), z) / zn_len))
        .collect();
    sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(sims[..k].iter().map(|(i, _)| *i).collect())
}

/// Histogram of discrete assignments, one count per codeword.
pub fn usage_histogram(capacity: usize, indices: &[usize]) -> Vec<u64> {
    let mut h = vec![0u64; capacity];
    for &i in indices {
        h[i] += 1;
    }
    h
}

pub fn marginal_violation(assignment: &Tensor) -> (f64, f64) {
    let (t, b) = (assignment.rows(), assignment.cols());
    let row_target = 1.0 / t as f64;
    let col_target = 1.0 / b as f64;
    let mut row_worst = 0.0f64;
    for i in 0..t {
        let sum: f64 = assignment.row(i).iter().sum();
        row_worst = row_worst.max((sum - row_target).abs());
    }
    let mut col_worst = 0.0f64;
    for j in 0..b {
        let sum: f64 = (0..t).map(|i| assignment.data[i * b + j]).sum();
        col_worst = col_worst.max((sum - col_target).abs());
    }
    (row_worst, col_worst)
}
