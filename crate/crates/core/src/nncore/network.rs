use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::scalar::{all_finite, Scalar};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
    /// Normalized exponential; only valid on the final layer.
    Softmax,
}

impl Activation {
    pub(crate) fn apply<T: Scalar>(self, z: &mut [T]) {
        match self {
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Relu => z.iter_mut().for_each(|v| {
                if !(*v > T::zero()) {
                    *v = T::zero()
                }
            }),
            Activation::Identity => {}
            Activation::Softmax => {
                let m = z.iter().copied().fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for v in z.iter_mut() {
                    *v = (*v - m).exp();
                    total += *v;
                }
                z.iter_mut().for_each(|v| *v /= total);
            }
        }
    }

    /// `Jᵀ·upstream` where `J = ∂h/∂z`, expressed through the layer output `h`.
    pub(crate) fn backprop<T: Scalar>(self, h: &[T], upstream: &[T]) -> Vec<T> {
        match self {
            Activation::Tanh => h
                .iter()
                .zip(upstream)
                .map(|(&y, &g)| g * (T::one() - y * y))
                .collect(),
            Activation::Relu => h
                .iter()
                .zip(upstream)
                .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
                .collect(),
            Activation::Identity => upstream.to_vec(),
            Activation::Softmax => {
                let inner: T = h.iter().zip(upstream).map(|(&y, &g)| y * g).sum();
                h.iter()
                    .zip(upstream)
                    .map(|(&y, &g)| y * (g - inner))
                    .collect()
            }
        }
    }

    /// `∂h/∂z` as a dense matrix.
    pub(crate) fn jacobian<T: Scalar>(self, h: &[T]) -> Matrix<T> {
        match self {
            Activation::Softmax => {
                let n = h.len();
                let mut j = Matrix::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        let delta = if a == b { h[a] } else { T::zero() };
                        j[(a, b)] = delta - h[a] * h[b];
                    }
                }
                j
            }
            _ => {
                let ones = vec![T::one(); h.len()];
                Matrix::from_diag(&self.backprop(h, &ones))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self, NnError> {
        if bias.len() != weights.rows() {
            return Err(NnError::DimensionMismatch {
                expected: weights.rows(),
                found: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// `activation(W·x + b)`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        let mut z = self.weights.matvec(x)?;
        for (v, &b) in z.iter_mut().zip(&self.bias) {
            *v += b;
        }
        self.activation.apply(&mut z);
        Ok(z)
    }

    /// Jacobian of this layer with respect to its input, given its output `h`.
    pub fn input_jacobian(&self, h: &[T]) -> Matrix<T> {
        self.activation
            .jacobian(h)
            .matmul(&self.weights)
            .expect("layer dimensions chain")
    }
}

/// A small dense feedforward network.
///
/// Parameters flatten layer by layer: weights row-major, then bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

/// Activation sequence `h_0..h_L` for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub states: Vec<Vec<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn input(&self) -> &[T] {
        &self.states[0]
    }

    pub fn output(&self) -> &[T] {
        self.states.last().expect("trajectory has an input state")
    }

    pub fn depth(&self) -> usize {
        self.states.len() - 1
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidArgument("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::LayerChain {
                    layer: k + 1,
                    expected: pair[0].out_dim(),
                    found: pair[1].in_dim(),
                });
            }
        }
        let last = layers.len() - 1;
        if let Some(k) = layers[..last]
            .iter()
            .position(|l| l.activation == Activation::Softmax)
        {
            return Err(NnError::SoftmaxNotFinal(k));
        }
        for l in &layers {
            if !l.weights.all_finite() || !all_finite(&l.bias) {
                return Err(NnError::NonFinite("network parameter"));
            }
        }
        Ok(Self { layers })
    }

    /// Single identity-activation layer computing `A·x`.
    pub fn linear(a: Matrix<T>) -> Result<Self, NnError> {
        let bias = vec![T::zero(); a.rows()];
        Self::new(vec![Layer::new(a, bias, Activation::Identity)?])
    }

    /// Single layer `activation(A·x + b)`.
    pub fn affine(a: Matrix<T>, b: Vec<T>, activation: Activation) -> Result<Self, NnError> {
        Self::new(vec![Layer::new(a, b, activation)?])
    }

    /// Seeded Gaussian initialization with std `scale / sqrt(fan_in)` and zero biases.
    ///
    /// `dims` has one more entry than `activations`.
    pub fn random(
        dims: &[usize],
        activations: &[Activation],
        scale: f64,
        seed: u64,
    ) -> Result<Self, NnError> {
        if dims.len() != activations.len() + 1 {
            return Err(NnError::InvalidArgument(format!(
                "{} dims for {} layers",
                dims.len(),
                activations.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(NnError::InvalidArgument("layer width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (k, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let std = scale / (fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std.max(0.0))
                .map_err(|e| NnError::InvalidArgument(e.to_string()))?;
            let data = (0..fan_in * fan_out)
                .map(|_| T::of(normal.sample(&mut rng)))
                .collect();
            let w = Matrix::from_vec(fan_out, fan_in, data)?;
            layers.push(Layer::new(w, vec![T::zero(); fan_out], act)?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn is_square(&self) -> bool {
        self.input_dim() == self.output_dim()
    }

    pub fn has_softmax_head(&self) -> bool {
        self.layers[self.layers.len() - 1].activation == Activation::Softmax
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, theta: &[T]) -> Result<(), NnError> {
        if theta.len() != self.num_params() {
            return Err(NnError::DimensionMismatch {
                expected: self.num_params(),
                found: theta.len(),
            });
        }
        if !all_finite(theta) {
            return Err(NnError::NonFinite("network parameter"));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights.as_mut_slice().copy_from_slice(&theta[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&theta[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn with_params(&self, theta: &[T]) -> Result<Self, NnError> {
        let mut out = self.clone();
        out.set_params(theta)?;
        Ok(out)
    }

    /// Squared Euclidean norm of all parameters.
    pub fn param_norm_sq(&self) -> T {
        self.params().iter().map(|&v| v * v).sum()
    }

    /// Copy of the network with every weight and bias multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        let theta: Vec<T> = self.params().iter().map(|&v| v * c).collect();
        self.with_params(&theta).expect("scaled parameters stay finite")
    }

    /// Final output only.
    pub fn eval(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        Ok(forward(self, x)?.states.pop().expect("nonempty"))
    }
}

/// Layer-by-layer evaluation `h_{k+1} = σ_k(W_k h_k + b_k)`.
pub fn forward<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<Trajectory<T>, NnError> {
    if x.len() != net.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: net.input_dim(),
            found: x.len(),
        });
    }
    if !all_finite(x) {
        return Err(NnError::NonFinite("input"));
    }
    let mut states = Vec::with_capacity(net.layers.len() + 1);
    states.push(x.to_vec());
    for layer in &net.layers {
        let next = layer.apply(states.last().expect("nonempty"))?;
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// Per-layer input Jacobians along the trajectory of `x`.
pub fn layer_jacobians<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<Vec<Matrix<T>>, NnError> {
    let traj = forward(net, x)?;
    let out: Vec<Matrix<T>> = net
        .layers
        .iter()
        .enumerate()
        .map(|(k, l)| l.input_jacobian(&traj.states[k + 1]))
        .collect();
    if out.iter().any(|j| !j.all_finite()) {
        return Err(NnError::NonFinite("jacobian"));
    }
    Ok(out)
}

/// `∂h_L/∂x` at `x`.
pub fn jacobian<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<Matrix<T>, NnError> {
    let mut j = Matrix::identity(net.input_dim());
    for lj in layer_jacobians(net, x)? {
        j = lj.matmul(&j)?;
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_layer_tanh(seed: u64) -> Network<f64> {
        Network::random(&[3, 5, 3], &[Activation::Tanh, Activation::Tanh], 1.2, seed).unwrap()
    }

    #[test]
    fn identity_net_keeps_input() {
        let net = Network::linear(Matrix::<f64>::identity(2)).unwrap();
        let t = forward(&net, &[1.0, 2.0]).unwrap();
        assert_eq!(t.states, vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert_eq!(jacobian(&net, &[1.0, 2.0]).unwrap(), Matrix::identity(2));
    }

    #[test]
    fn zero_tanh_layer_outputs_zero() {
        let net = Network::affine(Matrix::<f64>::zeros(2, 3), vec![0.0; 2], Activation::Tanh).unwrap();
        assert_eq!(net.eval(&[4.0, -1.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_net_jacobian_is_the_matrix() {
        let a = Matrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.7]]).unwrap();
        let net = Network::linear(a.clone()).unwrap();
        assert_eq!(jacobian(&net, &[0.1, 5.0]).unwrap(), a);
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let net = two_layer_tanh(3);
        let x = [0.4, -0.9, 0.25];
        let l = net.layers();
        let mut h1 = vec![0.0; 5];
        for i in 0..5 {
            let mut s = l[0].bias[i];
            for j in 0..3 {
                s += l[0].weights[(i, j)] * x[j];
            }
            h1[i] = s.tanh();
        }
        let mut h2 = vec![0.0; 3];
        for i in 0..3 {
            let mut s = l[1].bias[i];
            for j in 0..5 {
                s += l[1].weights[(i, j)] * h1[j];
            }
            h2[i] = s.tanh();
        }
        let out = net.eval(&x).unwrap();
        for (a, b) in out.iter().zip(&h2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_rule_over_layers() {
        let net = two_layer_tanh(11);
        let x = [0.2, 0.1, -0.5];
        let js = layer_jacobians(&net, &x).unwrap();
        let prod = js[1].matmul(&js[0]).unwrap();
        assert!(prod.max_abs_diff(&jacobian(&net, &x).unwrap()) < 1e-10);
    }

    #[test]
    fn validation_errors() {
        let w = Matrix::<f64>::zeros(2, 2);
        let soft = Layer::new(w.clone(), vec![0.0; 2], Activation::Softmax).unwrap();
        let id = Layer::new(w.clone(), vec![0.0; 2], Activation::Identity).unwrap();
        assert!(matches!(
            Network::new(vec![soft.clone(), id.clone()]),
            Err(NnError::SoftmaxNotFinal(0))
        ));
        let wide = Layer::new(Matrix::zeros(2, 3), vec![0.0; 2], Activation::Tanh).unwrap();
        assert!(matches!(
            Network::new(vec![id.clone(), wide]),
            Err(NnError::LayerChain { .. })
        ));
        let net = Network::new(vec![id, soft]).unwrap();
        assert!(matches!(
            forward(&net, &[1.0]),
            Err(NnError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            forward(&net, &[1.0, f64::INFINITY]),
            Err(NnError::NonFinite(_))
        ));
        let mut bad = Matrix::<f64>::zeros(1, 1);
        bad[(0, 0)] = f64::NAN;
        assert!(Network::linear(bad).is_err());
    }

    #[test]
    fn params_round_trip_and_seeded_init() {
        let a = two_layer_tanh(9);
        let b = two_layer_tanh(9);
        assert_eq!(a, b);
        let theta = a.params();
        assert_eq!(theta.len(), 3 * 5 + 5 + 5 * 3 + 3);
        let c = a.with_params(&theta).unwrap();
        assert_eq!(a, c);
        assert_ne!(a, two_layer_tanh(10));
    }

    #[test]
    fn works_in_single_precision() {
        let net = Network::<f32>::random(&[2, 4, 2], &[Activation::Tanh, Activation::Identity], 1.0, 1)
            .unwrap();
        let x = [0.3f32, -0.2];
        let js = layer_jacobians(&net, &x).unwrap();
        let prod = js[1].matmul(&js[0]).unwrap();
        assert!(prod.max_abs_diff(&jacobian(&net, &x).unwrap()) < 1e-6);
    }
}
