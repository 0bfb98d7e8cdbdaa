//! Affine (conditional optimal transport) flow path, flow-matching loss and
//! Euler sampling.

use super::{KernelError, Matrix, Result};

/// Noise/data pairs with their interpolants and target velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBatch {
    pub x0: Matrix,
    pub x1: Matrix,
    pub t: Vec<f64>,
    pub xt: Matrix,
    pub ut: Matrix,
    /// Conditioning rows; may have zero columns.
    pub c: Matrix,
}

impl FlowBatch {
    pub fn len(&self) -> usize {
        self.x0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x0.ncols()
    }
}

/// `x_t = (1 − t)·x0 + t·x1` and `u_t = x1 − x0`, row by row.
pub fn flow_path(x0: &Matrix, x1: &Matrix, t: &[f64], c: Option<&Matrix>) -> Result<FlowBatch> {
    if x0.shape() != x1.shape() || t.len() != x0.nrows() {
        return Err(KernelError::ShapeMismatch(format!(
            "x0 {:?}, x1 {:?}, {} times",
            x0.shape(),
            x1.shape(),
            t.len()
        )));
    }
    if let Some(&bad) = t.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(KernelError::TOutOfRange(bad));
    }
    let c = match c {
        Some(c) if c.nrows() != x0.nrows() => {
            return Err(KernelError::ShapeMismatch(format!(
                "{} condition rows for {} samples",
                c.nrows(),
                x0.nrows()
            )))
        }
        Some(c) => c.clone(),
        None => Matrix::zeros(x0.nrows(), 0),
    };
    let mut xt = x0.clone();
    for (r, &tr) in t.iter().enumerate() {
        for j in 0..x0.ncols() {
            xt[(r, j)] = (1.0 - tr) * x0[(r, j)] + tr * x1[(r, j)];
        }
    }
    Ok(FlowBatch {
        x0: x0.clone(),
        x1: x1.clone(),
        t: t.to_vec(),
        xt,
        ut: x1 - x0,
        c,
    })
}

/// A time-dependent velocity field `u(x, c, t)` evaluated row by row.
pub trait VelocityField {
    fn velocity(&self, x: &Matrix, c: &Matrix, t: &[f64]) -> Matrix;
}

/// `u(x, c, t) = v` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField(pub Vec<f64>);

impl VelocityField for ConstantField {
    fn velocity(&self, x: &Matrix, _: &Matrix, _: &[f64]) -> Matrix {
        Matrix::from_fn(x.nrows(), x.ncols(), |_, j| self.0[j])
    }
}

/// `u(x, c, t) = x`, whose exact flow over unit time scales by `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialField;

impl VelocityField for ExponentialField {
    fn velocity(&self, x: &Matrix, _: &Matrix, _: &[f64]) -> Matrix {
        x.clone()
    }
}

/// Mean over the batch of `‖u(x_t, c, t) − u_t‖²`.
pub fn flow_loss(model: &impl VelocityField, batch: &FlowBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(KernelError::ShapeMismatch("empty batch".into()));
    }
    let pred = model.velocity(&batch.xt, &batch.c, &batch.t);
    if pred.shape() != batch.ut.shape() {
        return Err(KernelError::ShapeMismatch(format!(
            "model output {:?} for targets {:?}",
            pred.shape(),
            batch.ut.shape()
        )));
    }
    Ok((pred - &batch.ut).norm_squared() / batch.len() as f64)
}

/// First-order Euler integration from `t = 0` to `t = 1` in `steps` steps.
pub fn euler_sample(model: &impl VelocityField, x0: &Matrix, c: &Matrix, steps: usize) -> Result<Matrix> {
    if steps == 0 {
        return Err(KernelError::InvalidParameter("Euler steps must be at least 1".into()));
    }
    let h = 1.0 / steps as f64;
    let mut x = x0.clone();
    for i in 0..steps {
        let t = vec![i as f64 * h; x.nrows()];
        x += model.velocity(&x, c, &t) * h;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_endpoints_and_midpoint() {
        let x0 = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, -1.0, 0.5, 2.0]);
        let x1 = Matrix::from_row_slice(3, 2, &[2.0, 4.0, 3.0, 3.0, -0.5, 0.0]);
        let b = flow_path(&x0, &x1, &[0.5, 0.0, 1.0], None).unwrap();
        assert_eq!(b.xt.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(b.ut.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 4.0]);
        assert_eq!(b.xt.row(1), x0.row(1));
        assert_eq!(b.xt.row(2), x1.row(2));
        assert_eq!(b.c.ncols(), 0);
    }

    #[test]
    fn target_velocity_is_time_independent() {
        let x0 = Matrix::from_row_slice(1, 2, &[0.3, -0.7]);
        let x1 = Matrix::from_row_slice(1, 2, &[1.1, 0.4]);
        let first = flow_path(&x0, &x1, &[0.0], None).unwrap().ut;
        for k in 1..=10 {
            assert_eq!(flow_path(&x0, &x1, &[k as f64 / 10.0], None).unwrap().ut, first);
        }
    }

    #[test]
    fn path_errors() {
        let x = Matrix::zeros(2, 2);
        assert_eq!(flow_path(&x, &x, &[0.5, 1.5], None), Err(KernelError::TOutOfRange(1.5)));
        assert!(flow_path(&x, &Matrix::zeros(2, 3), &[0.0, 0.0], None).is_err());
        assert!(flow_path(&x, &x, &[0.0], None).is_err());
    }

    struct Oracle(Matrix);

    impl VelocityField for Oracle {
        fn velocity(&self, _: &Matrix, _: &Matrix, _: &[f64]) -> Matrix {
            self.0.clone()
        }
    }

    #[test]
    fn loss_examples() {
        let x0 = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let x1 = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 3.0]);
        let b = flow_path(&x0, &x1, &[0.25, 0.75], None).unwrap();
        assert_eq!(flow_loss(&Oracle(&x1 - &x0), &b).unwrap(), 0.0);
        let shifted = &x1 - &x0 + Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(flow_loss(&Oracle(shifted), &b).unwrap(), 1.0);
        let zero = ConstantField(vec![0.0, 0.0]);
        let expected = (1.0 + 0.0 + 4.0 + 16.0) / 2.0;
        assert_eq!(flow_loss(&zero, &b).unwrap(), expected);
    }

    #[test]
    fn constant_field_is_exact_for_any_step_count() {
        let x0 = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 0.5]);
        let v = ConstantField(vec![0.5, -0.25]);
        for steps in [1, 2, 4, 8] {
            let x = euler_sample(&v, &x0, &Matrix::zeros(2, 0), steps).unwrap();
            assert_eq!(x[(0, 0)], 0.5);
            assert_eq!(x[(1, 1)], 0.25);
        }
        assert!(euler_sample(&v, &x0, &Matrix::zeros(2, 0), 0).is_err());
    }

    #[test]
    fn exponential_flow_converges_first_order() {
        let x0 = Matrix::from_element(1, 1, 1.0);
        let c = Matrix::zeros(1, 0);
        let e = std::f64::consts::E;
        let err = |s| (euler_sample(&ExponentialField, &x0, &c, s).unwrap()[(0, 0)] - e).abs();
        assert!(err(1000) / e < 2e-3);
        for s in [50, 100] {
            let ratio = err(s) / err(2 * s);
            assert!((1.7..=2.3).contains(&ratio), "{ratio}");
        }
    }
}
