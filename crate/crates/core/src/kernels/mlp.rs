//! Tiny tanh network trained by full-batch gradient descent on the
//! flow-matching loss, and a 2D demonstration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::flow::{euler_sample, flow_loss, flow_path, FlowBatch, VelocityField};
use super::{KernelError, Matrix, Result};
use crate::rng::{item_rng, seq_rng};

const DOMAIN_INIT: u64 = 41;
const DOMAIN_BATCH: u64 = 42;
const DOMAIN_EVAL: u64 = 43;
const DOMAIN_ENDPOINT: u64 = 44;

/// Fully connected network with tanh hidden layers and a linear output.
/// The input row is `[x, c, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    sizes: Vec<usize>,
    /// Per layer, `out × in`.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl TinyMlp {
    /// Weights drawn from `N(0, 1/fan_in)`, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(KernelError::InvalidParameter(format!("layer sizes {sizes:?}")));
        }
        let mut rng = seq_rng(seed, DOMAIN_INIT);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            weights.push(Matrix::from_fn(w[1], w[0], |_, _| {
                let z: f64 = rng.sample(StandardNormal);
                z * scale
            }));
            biases.push(vec![0.0; w[1]]);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Network for `dim`-dimensional states with `cond` condition channels.
    pub fn for_flow(dim: usize, cond: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![dim + cond + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        Self::new(&sizes, seed)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..w.nrows() {
                out.extend(w.row(r).iter());
            }
            out.extend(b);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] = it.next().unwrap();
                }
            }
            for x in b.iter_mut() {
                *x = it.next().unwrap();
            }
        }
    }

    fn input(&self, x: &Matrix, c: &Matrix, t: &[f64]) -> Matrix {
        let (d, k) = (x.ncols(), c.ncols());
        assert_eq!(d + k + 1, self.sizes[0], "input width does not match the network");
        Matrix::from_fn(x.nrows(), d + k + 1, |r, j| {
            if j < d {
                x[(r, j)]
            } else if j < d + k {
                c[(r, j - d)]
            } else {
                t[r]
            }
        })
    }

    /// Activations of every layer, input first.
    fn forward_all(&self, input: Matrix) -> Vec<Matrix> {
        let mut acts = vec![input];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].clone() * w.transpose();
            for mut row in z.row_iter_mut() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x += b[j];
                }
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &Matrix, c: &Matrix, t: &[f64]) -> Matrix {
        self.forward_all(self.input(x, c, t)).pop().unwrap()
    }

    /// Flow-matching loss and its gradient, flattened like [`parameters`](Self::parameters).
    pub fn loss_and_gradient(&self, batch: &FlowBatch) -> (f64, Vec<f64>) {
        let acts = self.forward_all(self.input(&batch.xt, &batch.c, &batch.t));
        let n = batch.len() as f64;
        let residual = acts.last().unwrap() - &batch.ut;
        let loss = residual.norm_squared() / n;
        let mut delta = residual * (2.0 / n);
        let mut grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(self.weights.len());
        for l in (0..self.weights.len()).rev() {
            let gw = delta.transpose() * &acts[l];
            let gb: Vec<f64> = (0..delta.ncols()).map(|j| delta.column(j).sum()).collect();
            grads.push((gw, gb));
            if l > 0 {
                let mut next = &delta * &self.weights[l];
                next.zip_apply(&acts[l], |d, a| *d *= 1.0 - a * a);
                delta = next;
            }
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.parameter_count());
        for (gw, gb) in grads {
            for r in 0..gw.nrows() {
                flat.extend(gw.row(r).iter());
            }
            flat.extend(gb);
        }
        (loss, flat)
    }
}

impl VelocityField for TinyMlp {
    fn velocity(&self, x: &Matrix, c: &Matrix, t: &[f64]) -> Matrix {
        self.forward(x, c, t)
    }
}

/// One gradient-descent step; returns the updated model and the loss before the step.
pub fn mlp_train_step(model: &TinyMlp, batch: &FlowBatch, learning_rate: f64) -> (TinyMlp, f64) {
    let (loss, grad) = model.loss_and_gradient(batch);
    let mut next = model.clone();
    if learning_rate != 0.0 {
        let params: Vec<f64> = model
            .parameters()
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - learning_rate * g)
            .collect();
        next.set_parameters(&params);
    }
    (next, loss)
}

/// Largest relative difference between the analytic gradient and central
/// finite differences with step `eps`; the denominator is floored at 1e-8.
pub fn gradient_check(model: &TinyMlp, batch: &FlowBatch, eps: f64) -> f64 {
    let (_, analytic) = model.loss_and_gradient(batch);
    let params = model.parameters();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + eps;
        probe.set_parameters(&p);
        let plus = flow_loss(&probe, batch).unwrap();
        p[i] = params[i] - eps;
        probe.set_parameters(&p);
        let minus = flow_loss(&probe, batch).unwrap();
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowDemoParams {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub hidden: usize,
    pub shift: [f64; 2],
    pub eval_samples: usize,
    pub endpoint_samples: usize,
    pub euler_steps: usize,
}

impl Default for FlowDemoParams {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 0.05,
            seed: 1,
            batch_size: 256,
            hidden: 32,
            shift: [3.0, 0.0],
            eval_samples: 1024,
            endpoint_samples: 10_000,
            euler_steps: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowDemo {
    /// Training-batch loss before each step.
    pub loss_curve: Vec<f64>,
    /// Loss on a fixed evaluation batch before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub endpoint_mean: [f64; 2],
    pub endpoint_std: [f64; 2],
    #[serde(skip)]
    pub model: TinyMlp,
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Pairs `x0 ~ N(0, I)` with `x1 = x0 + shift` at uniform times.
fn shifted_batch(size: usize, shift: [f64; 2], rng: &mut impl Rng) -> FlowBatch {
    let x0 = gaussian(size, 2, rng);
    let x1 = Matrix::from_fn(size, 2, |r, j| x0[(r, j)] + shift[j]);
    let t: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
    flow_path(&x0, &x1, &t, None).expect("batch shapes agree")
}

/// Trains a one-hidden-layer network to transport `N(0, I)` onto its shift,
/// then pushes fresh noise through Euler integration.
pub fn run_flow_demo(params: &FlowDemoParams) -> Result<FlowDemo> {
    if params.steps == 0 || params.batch_size == 0 || params.eval_samples == 0 || params.endpoint_samples == 0 {
        return Err(KernelError::InvalidParameter("steps and sample counts must be positive".into()));
    }
    if !(params.learning_rate >= 0.0 && params.learning_rate.is_finite()) {
        return Err(KernelError::InvalidParameter(format!("learning rate {}", params.learning_rate)));
    }
    let mut model = TinyMlp::for_flow(2, 0, &[params.hidden], params.seed)?;
    let eval = shifted_batch(params.eval_samples, params.shift, &mut seq_rng(params.seed, DOMAIN_EVAL));
    let initial_loss = flow_loss(&model, &eval)?;
    let mut loss_curve = Vec::with_capacity(params.steps);
    for step in 0..params.steps {
        let batch = shifted_batch(params.batch_size, params.shift, &mut item_rng(params.seed, DOMAIN_BATCH, step as u64));
        let (next, loss) = mlp_train_step(&model, &batch, params.learning_rate);
        model = next;
        loss_curve.push(loss);
    }
    let final_loss = flow_loss(&model, &eval)?;
    let x0 = gaussian(params.endpoint_samples, 2, &mut seq_rng(params.seed, DOMAIN_ENDPOINT));
    let x1 = euler_sample(&model, &x0, &Matrix::zeros(x0.nrows(), 0), params.euler_steps)?;
    let n = x1.nrows() as f64;
    let mean = [x1.column(0).sum() / n, x1.column(1).sum() / n];
    let std = [0, 1].map(|j| (x1.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n).sqrt());
    Ok(FlowDemo {
        loss_curve,
        initial_loss,
        final_loss,
        endpoint_mean: mean,
        endpoint_std: std,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_batch() -> FlowBatch {
        let mut rng = seq_rng(9, 0);
        let x0 = gaussian(7, 2, &mut rng);
        let x1 = gaussian(7, 2, &mut rng);
        let c = gaussian(7, 1, &mut rng);
        let t: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
        flow_path(&x0, &x1, &t, Some(&c)).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = TinyMlp::for_flow(2, 1, &[5, 4], 3).unwrap();
        let err = gradient_check(&model, &small_batch(), 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let model = TinyMlp::for_flow(2, 1, &[4], 1).unwrap();
        let batch = small_batch();
        let (next, loss) = mlp_train_step(&model, &batch, 0.0);
        assert_eq!(next, model);
        assert_eq!(loss, flow_loss(&model, &batch).unwrap());
    }

    #[test]
    fn parameters_roundtrip() {
        let mut model = TinyMlp::new(&[3, 4, 2], 5).unwrap();
        let p: Vec<f64> = (0..model.parameter_count()).map(|i| i as f64 * 0.1).collect();
        model.set_parameters(&p);
        assert_eq!(model.parameters(), p);
        assert_eq!(model.parameter_count(), 3 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn demo_learns_the_shift() {
        let demo = run_flow_demo(&FlowDemoParams::default()).unwrap();
        assert!(demo.final_loss < 0.01 * demo.initial_loss, "{} vs {}", demo.final_loss, demo.initial_loss);
        assert!((demo.endpoint_mean[0] - 3.0).abs() < 0.1, "{:?}", demo.endpoint_mean);
        assert!(demo.endpoint_mean[1].abs() < 0.1, "{:?}", demo.endpoint_mean);
        assert_eq!(demo.loss_curve.len(), 500);
    }
}
