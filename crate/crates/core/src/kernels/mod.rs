//! Closed-form numeric kernels: Fourier positional encoding, scaled
//! dot-product and multi-task attention, VAE loss terms, and flow matching
//! with a tiny tanh network.

pub mod flow;
pub mod mlp;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::rng::item_rng;

pub use flow::{euler_sample, flow_loss, flow_path, ConstantField, ExponentialField, FlowBatch, VelocityField};
pub use mlp::{gradient_check, mlp_train_step, run_flow_demo, FlowDemo, FlowDemoParams, TinyMlp};

pub type Matrix = DMatrix<f64>;

const DOMAIN_ATTENTION: u64 = 45;

/// Default weight of the KL term in the VAE loss.
pub const DEFAULT_KL_WEIGHT: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("time {0} outside [0, 1]")]
    TOutOfRange(f64),
    #[error("variance entry {0} is not positive")]
    NonPositiveVariance(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, KernelError>;

fn shape(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

/// `[p, sin(2^0 π p), cos(2^0 π p), …, sin(2^(n-1) π p), cos(2^(n-1) π p)]`
/// per row, each block holding the three coordinates in order.
pub fn fourier_encode(points: &Matrix, n_frequencies: usize) -> Result<Matrix> {
    if points.ncols() != 3 {
        return Err(KernelError::ShapeMismatch(format!("points have {} columns, expected 3", points.ncols())));
    }
    let mut out = Matrix::zeros(points.nrows(), 3 + 6 * n_frequencies);
    for r in 0..points.nrows() {
        for c in 0..3 {
            let p = points[(r, c)];
            out[(r, c)] = p;
            for f in 0..n_frequencies {
                let arg = (1u64 << f) as f64 * std::f64::consts::PI * p;
                out[(r, 3 + 6 * f + c)] = arg.sin();
                out[(r, 6 + 6 * f + c)] = arg.cos();
            }
        }
    }
    Ok(out)
}

/// Row-wise `softmax(Q Kᵀ / √d)`, stabilized by subtracting each row's maximum.
pub fn attention_probs(q: &Matrix, k: &Matrix) -> Result<Matrix> {
    if q.ncols() != k.ncols() {
        return Err(KernelError::ShapeMismatch(format!(
            "Q is {:?} but K is {:?}",
            shape(q),
            shape(k)
        )));
    }
    if k.nrows() == 0 {
        return Err(KernelError::ShapeMismatch("K has no rows".into()));
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut logits = q * k.transpose() * scale;
    for mut row in logits.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(logits)
}

/// Scaled dot-product attention `softmax(Q Kᵀ / √d) V`.
pub fn sdpa(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    if k.nrows() != v.nrows() {
        return Err(KernelError::ShapeMismatch(format!(
            "K is {:?} but V is {:?}",
            shape(k),
            shape(v)
        )));
    }
    Ok(attention_probs(q, k)? * v)
}

/// Query, key and value matrices of one attention branch.
#[derive(Debug, Clone, Copy)]
pub struct Qkv<'a> {
    pub q: &'a Matrix,
    pub k: &'a Matrix,
    pub v: &'a Matrix,
}

/// `Z_SA + λ_ref · sdpa(ref) + λ_mv · sdpa(mv)`. A branch whose weight is
/// exactly zero is skipped, so zero weights return `Z_SA` bit for bit.
pub fn multi_task_attention(z_sa: &Matrix, reference: Qkv, multiview: Qkv, lambda_ref: f64, lambda_mv: f64) -> Result<Matrix> {
    let mut out = z_sa.clone();
    for (branch, lambda, name) in [(reference, lambda_ref, "reference"), (multiview, lambda_mv, "multi-view")] {
        if branch.q.nrows() != z_sa.nrows() || branch.v.ncols() != z_sa.ncols() {
            return Err(KernelError::ShapeMismatch(format!(
                "{name} branch gives {}x{} output for Z_SA of shape {:?}",
                branch.q.nrows(),
                branch.v.ncols(),
                shape(z_sa)
            )));
        }
        if lambda != 0.0 {
            out += sdpa(branch.q, branch.k, branch.v)? * lambda;
        }
    }
    Ok(out)
}

/// Token sequence with the mean and variance of its diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub tokens: Matrix,
    pub mean: Matrix,
    pub variance: Matrix,
}

impl LatentSequence {
    pub fn new(tokens: Matrix, mean: Matrix, variance: Matrix) -> Result<Self> {
        if shape(&tokens) != shape(&mean) || shape(&mean) != shape(&variance) {
            return Err(KernelError::ShapeMismatch(format!(
                "tokens {:?}, mean {:?}, variance {:?}",
                shape(&tokens),
                shape(&mean),
                shape(&variance)
            )));
        }
        if let Some(i) = variance.iter().position(|&v| !(v > 0.0)) {
            return Err(KernelError::NonPositiveVariance(i));
        }
        Ok(Self { tokens, mean, variance })
    }
}

/// KL divergence of `N(μ, σ²)` from `N(0, 1)`, averaged over all entries:
/// `½ · mean(μ² + σ² − ln σ² − 1)`.
pub fn kl_loss(seq: &LatentSequence) -> f64 {
    let n = seq.mean.len() as f64;
    let sum: f64 = seq
        .mean
        .iter()
        .zip(seq.variance.iter())
        .map(|(&m, &v)| m * m + v - v.ln() - 1.0)
        .sum();
    (0.5 * sum / n).max(0.0)
}

/// Mean squared error between predicted and true SDF values.
pub fn recon_loss(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(KernelError::ShapeMismatch(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Reconstruction plus weighted KL.
pub fn vae_loss(pred: &[f64], truth: &[f64], seq: &LatentSequence, kl_weight: f64) -> Result<f64> {
    Ok(recon_loss(pred, truth)? + kl_weight * kl_loss(seq))
}

/// Outcome of [`check_attention_properties`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionCheck {
    pub trials: usize,
    /// Zero branch weights returned `Z_SA` bit for bit in every trial.
    pub identity_exact: bool,
    pub max_row_sum_error: f64,
    /// Largest deviation of `f(λ_ref, λ_mv)` from `Z_SA + λ_ref·A_ref + λ_mv·A_mv`,
    /// and of `f(2λ) − Z_SA` from `2·(f(λ) − Z_SA)`.
    pub max_linearity_error: f64,
}

impl AttentionCheck {
    pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
    pub const LINEARITY_TOLERANCE: f64 = 1e-12;

    pub fn passed(&self) -> bool {
        self.identity_exact
            && self.max_row_sum_error <= Self::ROW_SUM_TOLERANCE
            && self.max_linearity_error <= Self::LINEARITY_TOLERANCE
    }
}

/// Runs the multi-task attention properties on `trials` random problems with
/// `tokens` queries of width `dim`; branch key counts differ from the query count.
pub fn check_attention_properties(seed: u64, trials: usize, tokens: usize, dim: usize) -> Result<AttentionCheck> {
    if trials == 0 || tokens == 0 || dim == 0 {
        return Err(KernelError::InvalidParameter("trials, tokens and dim must be positive".into()));
    }
    let mut check = AttentionCheck {
        trials,
        identity_exact: true,
        max_row_sum_error: 0.0,
        max_linearity_error: 0.0,
    };
    for trial in 0..trials {
        let mut rng = item_rng(seed, DOMAIN_ATTENTION, trial as u64);
        let mut gauss = |rows: usize| Matrix::from_fn(rows, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = gauss(tokens);
        let (rq, rk, rv) = (gauss(tokens), gauss(tokens + 3), gauss(tokens + 3));
        let (mq, mk, mv) = (gauss(tokens), gauss(2 * tokens), gauss(2 * tokens));
        let lambdas = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let r = Qkv { q: &rq, k: &rk, v: &rv };
        let m = Qkv { q: &mq, k: &mk, v: &mv };

        let same = multi_task_attention(&z, r, m, 0.0, 0.0)?;
        check.identity_exact &= same.iter().zip(z.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        for (q, k) in [(&rq, &rk), (&mq, &mk)] {
            let p = attention_probs(q, k)?;
            for row in p.row_iter() {
                check.max_row_sum_error = check.max_row_sum_error.max((row.sum() - 1.0).abs());
            }
        }
        let expected = &z + sdpa(&rq, &rk, &rv)? * lambdas[0] + sdpa(&mq, &mk, &mv)? * lambdas[1];
        let got = multi_task_attention(&z, r, m, lambdas[0], lambdas[1])?;
        let doubled = multi_task_attention(&z, r, m, 2.0 * lambdas[0], 2.0 * lambdas[1])?;
        let scaling = ((&doubled - &z) - (&got - &z) * 2.0).amax();
        check.max_linearity_error = check.max_linearity_error.max((got - expected).amax()).max(scaling);
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seq_rng;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seq_rng(seed, 0);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn fourier_examples() {
        let zero = fourier_encode(&Matrix::zeros(1, 3), 4).unwrap();
        for f in 0..4 {
            for c in 0..3 {
                assert_eq!(zero[(0, 3 + 6 * f + c)], 0.0);
                assert_eq!(zero[(0, 6 + 6 * f + c)], 1.0);
            }
        }
        let p = Matrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, 1.0, 0.0, 0.0]);
        assert_eq!(fourier_encode(&p, 0).unwrap(), p);
        let e = fourier_encode(&p, 1).unwrap();
        assert_eq!(e.ncols(), 9);
        assert!(e[(1, 3)].abs() < 1e-15);
        assert_eq!(e[(1, 6)], -1.0);
        assert!(fourier_encode(&Matrix::zeros(1, 2), 1).is_err());
    }

    #[test]
    fn single_key_copies_value() {
        let q = random(5, 4, 1);
        let k = random(1, 4, 2);
        let v = random(1, 3, 3);
        let out = sdpa(&q, &k, &v).unwrap();
        for r in 0..5 {
            assert_eq!(out.row(r), v.row(0));
        }
    }

    #[test]
    fn zero_query_averages_values() {
        let v = random(6, 3, 4);
        let out = sdpa(&Matrix::zeros(2, 5), &random(6, 5, 5), &v).unwrap();
        let mean = v.row_mean();
        for r in 0..2 {
            assert!((out.row(r) - &mean).norm() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_one_and_stay_in_hull() {
        let (q, k, v) = (random(4, 8, 6) * 30.0, random(4, 8, 7) * 30.0, random(4, 8, 8));
        let p = attention_probs(&q, &k).unwrap();
        for row in p.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let out = sdpa(&q, &k, &v).unwrap();
        for c in 0..8 {
            let (lo, hi) = (v.column(c).min(), v.column(c).max());
            assert!(out.column(c).iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
        }
        assert!(matches!(sdpa(&q, &random(3, 8, 1), &v), Err(KernelError::ShapeMismatch(_))));
    }

    #[test]
    fn multi_task_attention_properties() {
        let z = random(3, 4, 9);
        let (rq, rk, rv) = (random(3, 4, 10), random(2, 4, 11), random(2, 4, 12));
        let (mq, mk, mv) = (random(3, 4, 13), random(5, 4, 14), random(5, 4, 15));
        let r = Qkv { q: &rq, k: &rk, v: &rv };
        let m = Qkv { q: &mq, k: &mk, v: &mv };
        let mut z_neg = z.clone();
        z_neg[(0, 0)] = -0.0;
        let same = multi_task_attention(&z_neg, r, m, 0.0, 0.0).unwrap();
        assert!(same.iter().zip(z_neg.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let base = multi_task_attention(&z, r, m, 0.0, 0.0).unwrap();
        let one = multi_task_attention(&z, r, m, 0.7, 0.0).unwrap();
        let two = multi_task_attention(&z, r, m, 1.4, 0.0).unwrap();
        assert!(((&two - &base) - (&one - &base) * 2.0).amax() < 1e-12);
        let single = random(1, 4, 16);
        let s = Qkv { q: &rq, k: &single, v: &rv.rows(0, 1).into_owned() };
        let out = multi_task_attention(&z, s, m, 1.0, 0.0).unwrap();
        for row in 0..3 {
            assert!((out.row(row) - z.row(row) - rv.row(0)).amax() < 1e-15);
        }
    }

    #[test]
    fn attention_check_passes() {
        let c = check_attention_properties(4, 20, 6, 5).unwrap();
        assert!(c.passed(), "{c:?}");
        assert!(check_attention_properties(4, 0, 6, 5).is_err());
    }

    #[test]
    fn kl_values() {
        let ones = Matrix::from_element(2, 3, 1.0);
        let zeros = Matrix::zeros(2, 3);
        let s = LatentSequence::new(zeros.clone(), zeros.clone(), ones.clone()).unwrap();
        assert_eq!(kl_loss(&s), 0.0);
        let one = Matrix::from_element(1, 1, 1.0);
        let s = LatentSequence::new(one.clone(), one.clone(), one.clone()).unwrap();
        assert_eq!(kl_loss(&s), 0.5);
        let mut bad = ones.clone();
        bad[(1, 2)] = 0.0;
        assert_eq!(
            LatentSequence::new(zeros.clone(), zeros.clone(), bad),
            Err(KernelError::NonPositiveVariance(5))
        );
        let mut perturbed = ones.clone();
        perturbed[(0, 0)] = 1.001;
        let s = LatentSequence::new(zeros.clone(), zeros, perturbed).unwrap();
        assert!(kl_loss(&s) > 0.0);
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = seq_rng(3, 1);
        for _ in 0..200 {
            let mean = Matrix::from_fn(4, 3, |_, _| rng.random_range(-3.0..3.0));
            let var = Matrix::from_fn(4, 3, |_, _| rng.random_range(0.01..5.0));
            let s = LatentSequence::new(mean.clone(), mean, var).unwrap();
            assert!(kl_loss(&s) >= 0.0);
        }
    }

    #[test]
    fn recon_and_combined() {
        let t = [0.5, -0.25, 1.0];
        assert_eq!(recon_loss(&t, &t).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|x| x + 1.0).collect();
        assert_eq!(recon_loss(&p, &t).unwrap(), 1.0);
        assert!(recon_loss(&p[..2], &t).is_err());
        let m = Matrix::from_element(1, 2, 0.5);
        let s = LatentSequence::new(m.clone(), m.clone(), m).unwrap();
        let total = vae_loss(&p, &t, &s, DEFAULT_KL_WEIGHT).unwrap();
        assert!((total - (1.0 + 1e-3 * kl_loss(&s))).abs() < 1e-12);
    }
}
