//! Reverse-mode gradients of mean batch losses.
//!
//! A loss is anything that maps one network output (plus its sample) to a
//! scalar and reports the derivative with respect to that output. Composite
//! objectives over several sample sets are built by linear combination of
//! `loss_grad` results.

use serde::{Deserialize, Serialize};

use super::network::{forward, Network, Trajectory};
use super::scalar::Scalar;
use super::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target<T> {
    None,
    Class(usize),
    Vector(Vec<T>),
    /// Reference probability vector over classes.
    Distribution(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub input: Vec<T>,
    pub target: Target<T>,
}

impl<T> Sample<T> {
    pub fn unlabeled(input: Vec<T>) -> Self {
        Self {
            input,
            target: Target::None,
        }
    }

    pub fn class(input: Vec<T>, class: usize) -> Self {
        Self {
            input,
            target: Target::Class(class),
        }
    }

    pub fn vector(input: Vec<T>, y: Vec<T>) -> Self {
        Self {
            input,
            target: Target::Vector(y),
        }
    }

    pub fn distribution(input: Vec<T>, q: Vec<T>) -> Self {
        Self {
            input,
            target: Target::Distribution(q),
        }
    }
}

pub trait OutputLoss<T: Scalar> {
    /// Per-sample loss and its gradient with respect to `output`.
    fn eval(&self, sample: &Sample<T>, output: &[T]) -> Result<(T, Vec<T>), NnError>;
}

impl<T: Scalar, L: OutputLoss<T> + ?Sized> OutputLoss<T> for &L {
    fn eval(&self, sample: &Sample<T>, output: &[T]) -> Result<(T, Vec<T>), NnError> {
        (**self).eval(sample, output)
    }
}

/// `‖h_L − x‖²`, the squared fixed-point residual.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResidualLoss;

impl<T: Scalar> OutputLoss<T> for ResidualLoss {
    fn eval(&self, sample: &Sample<T>, output: &[T]) -> Result<(T, Vec<T>), NnError> {
        squared_distance(output, &sample.input)
    }
}

/// `‖h_L − y‖²` for vector targets.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredError;

impl<T: Scalar> OutputLoss<T> for SquaredError {
    fn eval(&self, sample: &Sample<T>, output: &[T]) -> Result<(T, Vec<T>), NnError> {
        match &sample.target {
            Target::Vector(y) => squared_distance(output, y),
            _ => Err(NnError::TargetKind("vector")),
        }
    }
}

/// `−ln p_y` on a probability output.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl<T: Scalar> OutputLoss<T> for CrossEntropy {
    fn eval(&self, sample: &Sample<T>, output: &[T]) -> Result<(T, Vec<T>), NnError> {
        let y = match sample.target {
            Target::Class(y) => y,
            _ => return Err(NnError::TargetKind("class")),
        };
        if y >= output.len() {
            return Err(NnError::LabelOutOfRange {
                label: y,
                classes: output.len(),
            });
        }
        let p = output[y];
        let mut g = vec![T::zero(); output.len()];
        g[y] = -T::one() / p;
        Ok((-p.ln(), g))
    }
}

/// `KL(p ‖ q) = Σ p ln(p/q)` with `p` the network output and `q` the target distribution.
#[derive(Debug, Clone, Copy, Default)]
pub struct KlToTarget;

impl<T: Scalar> OutputLoss<T> for KlToTarget {
    fn eval(&self, sample: &Sample<T>, output: &[T]) -> Result<(T, Vec<T>), NnError> {
        let q = match &sample.target {
            Target::Distribution(q) => q,
            _ => return Err(NnError::TargetKind("distribution")),
        };
        if q.len() != output.len() {
            return Err(NnError::DimensionMismatch {
                expected: output.len(),
                found: q.len(),
            });
        }
        let mut value = T::zero();
        let mut g = Vec::with_capacity(q.len());
        for (&p, &qk) in output.iter().zip(q) {
            if p > T::zero() {
                value += p * (p.ln() - qk.ln());
                g.push(p.ln() + T::one() - qk.ln());
            } else {
                g.push(T::one() - qk.ln());
            }
        }
        Ok((value, g))
    }
}

/// Multiplies another loss by a constant.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<L, T> {
    pub factor: T,
    pub inner: L,
}

impl<T: Scalar, L: OutputLoss<T>> OutputLoss<T> for Scaled<L, T> {
    fn eval(&self, sample: &Sample<T>, output: &[T]) -> Result<(T, Vec<T>), NnError> {
        let (v, g) = self.inner.eval(sample, output)?;
        Ok((v * self.factor, g.into_iter().map(|x| x * self.factor).collect()))
    }
}

fn squared_distance<T: Scalar>(output: &[T], y: &[T]) -> Result<(T, Vec<T>), NnError> {
    if y.len() != output.len() {
        return Err(NnError::DimensionMismatch {
            expected: output.len(),
            found: y.len(),
        });
    }
    let two = T::of(2.0);
    let diff: Vec<T> = output.iter().zip(y).map(|(&a, &b)| a - b).collect();
    let value = diff.iter().map(|&d| d * d).sum();
    Ok((value, diff.into_iter().map(|d| two * d).collect()))
}

/// Mean loss over a batch together with its exact parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub value: T,
    pub grad: Vec<T>,
}

/// Parameter gradient and input gradient for one backward pass.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

/// Pull `∂loss/∂h_L` back through the trajectory.
pub fn backprop<T: Scalar>(
    net: &Network<T>,
    traj: &Trajectory<T>,
    output_grad: &[T],
) -> Result<Backward<T>, NnError> {
    if output_grad.len() != net.output_dim() {
        return Err(NnError::DimensionMismatch {
            expected: net.output_dim(),
            found: output_grad.len(),
        });
    }
    let layers = net.layers();
    let mut blocks: Vec<Vec<T>> = Vec::with_capacity(layers.len());
    let mut delta = output_grad.to_vec();
    for (k, layer) in layers.iter().enumerate().rev() {
        let gz = layer.activation.backprop(&traj.states[k + 1], &delta);
        let h = &traj.states[k];
        let mut block = Vec::with_capacity(layer.num_params());
        for &g in &gz {
            block.extend(h.iter().map(|&hj| g * hj));
        }
        block.extend_from_slice(&gz);
        blocks.push(block);
        delta = layer.weights.transpose().matvec(&gz)?;
    }
    blocks.reverse();
    Ok(Backward {
        params: blocks.concat(),
        input: delta,
    })
}

/// Mean of `loss` over `batch` and its gradient with respect to all parameters.
pub fn loss_grad<T: Scalar, L: OutputLoss<T> + ?Sized>(
    net: &Network<T>,
    loss: &L,
    batch: &[Sample<T>],
) -> Result<LossGrad<T>, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let n = T::of(batch.len() as f64);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); net.num_params()];
    for s in batch {
        let traj = forward(net, &s.input)?;
        let (v, g_out) = loss.eval(s, traj.output())?;
        total += v;
        let back = backprop(net, &traj, &g_out)?;
        for (a, b) in grad.iter_mut().zip(back.params) {
            *a += b;
        }
    }
    let value = total / n;
    if !value.is_finite() {
        return Err(NnError::NonFinite("loss"));
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(LossGrad { value, grad })
}

/// Mean loss without the backward pass.
pub fn loss_value<T: Scalar, L: OutputLoss<T> + ?Sized>(
    net: &Network<T>,
    loss: &L,
    batch: &[Sample<T>],
) -> Result<T, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut total = T::zero();
    for s in batch {
        let out = net.eval(&s.input)?;
        total += loss.eval(s, &out)?.0;
    }
    let value = total / T::of(batch.len() as f64);
    if !value.is_finite() {
        return Err(NnError::NonFinite("loss"));
    }
    Ok(value)
}

/// `θ ← θ − lr·g`.
pub fn descend<T: Scalar>(net: &mut Network<T>, grad: &[T], lr: T) -> Result<(), NnError> {
    let theta: Vec<T> = net
        .params()
        .iter()
        .zip(grad)
        .map(|(&p, &g)| p - lr * g)
        .collect();
    net.set_params(&theta)
}
