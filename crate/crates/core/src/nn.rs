//! Dense networks with hand-written backpropagation, pooling reducers, the
//! summed one-vs-rest binary cross-entropy and Adam.
//!
//! Everything operates on row batches: a `Matrix` with one sample per row.
//! Trainable models expose their parameters as one flat vector through
//! [`Parameterized`], which is the layout the optimizer, the checkpoint
//! format and the finite-difference checks all share.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Flat parameter access shared by every trainable model.
pub trait Parameterized {
    fn num_params(&self) -> usize;
    /// Appends the parameters to `out`.
    fn write_params(&self, out: &mut Vec<f64>);
    /// Reads parameters from the front of `src` and returns how many were used.
    fn read_params(&mut self, src: &[f64]) -> usize;

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.write_params(&mut out);
        out
    }

    fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                expected: (self.num_params(), 1),
                found: (src.len(), 1),
            });
        }
        self.read_params(src);
        Ok(())
    }
}

/// Fully connected layer `y = act(x Wᵀ + b)` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// He-uniform weights for ReLU layers, Xavier-uniform otherwise; zero bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let limit = match activation {
            Activation::Relu => libm::sqrt(6.0 / inputs.max(1) as f64),
            _ => libm::sqrt(6.0 / (inputs + outputs).max(1) as f64),
        };
        let weight = Matrix::from_fn(outputs, inputs, |_, _| rng.uniform_in(-limit, limit));
        Dense { weight, bias: vec![0.0; outputs], activation }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_t(&self.weight);
        let act = self.activation;
        for i in 0..y.rows() {
            for (v, b) in y.row_mut(i).iter_mut().zip(&self.bias) {
                *v = act.apply(*v + b);
            }
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGradient {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Multilayer perceptron whose last layer is linear, so its output is a raw
/// logit (or raw feature vector when used as an embedding).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Cached activations from [`Mlp::forward`]: the input followed by every
/// layer's output.
#[derive(Clone, Debug)]
pub struct MlpTape {
    activations: Vec<Matrix>,
}

impl MlpTape {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("tape holds the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<DenseGradient>,
}

impl MlpGradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGradients {
            layers: mlp
                .layers
                .iter()
                .map(|l| DenseGradient {
                    weight: Matrix::zeros(l.outputs(), l.inputs()),
                    bias: vec![0.0; l.outputs()],
                })
                .collect(),
        }
    }

    /// Flat layout matching [`Parameterized::write_params`] on the owning MLP.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.write_flat(&mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

impl Mlp {
    /// `widths = [in, h_1, …, out]`; hidden layers use `hidden`, the last is linear.
    pub fn new(widths: &[usize], hidden: Activation, rng: &mut RngStream) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::BadConfig("an MLP needs at least two non-zero widths"));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Identity } else { hidden };
                Dense::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::EmptyInput);
        };
        if last.activation != Activation::Identity {
            return Err(Error::BadConfig("the final MLP layer must be linear"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch {
                    expected: (pair[1].outputs(), pair[0].outputs()),
                    found: pair[1].weight.shape(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::ShapeMismatch {
                    expected: (l.outputs(), 1),
                    found: (l.bias.len(), 1),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpTape)> {
        if x.cols() != self.input_width() {
            return Err(Error::ShapeMismatch {
                expected: (x.rows(), self.input_width()),
                found: x.shape(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"));
            activations.push(next);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((out, MlpTape { activations }))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::ShapeMismatch {
                expected: (x.rows(), self.input_width()),
                found: x.shape(),
            });
        }
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h);
        }
        Ok(h)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::from_vec(1, x.len(), x.to_vec()))?.into_vec())
    }

    /// Gradients of `Σ ⟨upstream, output⟩` with respect to the parameters
    /// and the input batch.
    pub fn backward(&self, tape: &MlpTape, upstream: &Matrix) -> Result<(MlpGradients, Matrix)> {
        let out = tape.output();
        if upstream.shape() != out.shape() || tape.activations.len() != self.layers.len() + 1 {
            return Err(Error::ShapeMismatch { expected: out.shape(), found: upstream.shape() });
        }
        let mut delta = upstream.clone();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.activations[l + 1];
            if layer.activation != Activation::Identity {
                for (d, &yv) in delta.data_mut().iter_mut().zip(y.data()) {
                    *d *= layer.activation.derivative_from_output(yv);
                }
            }
            let x = &tape.activations[l];
            let weight = delta.t_matmul(x);
            let mut bias = vec![0.0; layer.outputs()];
            for i in 0..delta.rows() {
                for (b, d) in bias.iter_mut().zip(delta.row(i)) {
                    *b += d;
                }
            }
            grads.push(DenseGradient { weight, bias });
            delta = delta.matmul(&layer.weight);
        }
        grads.reverse();
        Ok((MlpGradients { layers: grads }, delta))
    }
}

impl Parameterized for Mlp {
    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&src[at..at + w]);
            at += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&src[at..at + b]);
            at += b;
        }
        at
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Summed binary cross-entropy over classes, with optional class weights.
/// Returns the loss and its gradient with respect to the logits.
pub fn bce_with_logits(s: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    if s.len() != y.len() {
        return Err(Error::ShapeMismatch { expected: (s.len(), 1), found: (y.len(), 1) });
    }
    if let Some(w) = weights {
        if w.len() != s.len() {
            return Err(Error::ShapeMismatch { expected: (s.len(), 1), found: (w.len(), 1) });
        }
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; s.len()];
    for d in 0..s.len() {
        let w = weights.map_or(1.0, |w| w[d]);
        // −y log σ(s) − (1−y) log(1−σ(s)) = softplus(s) − y s
        loss += w * (softplus(s[d]) - y[d] * s[d]);
        grad[d] = w * (sigmoid(s[d]) - y[d]);
    }
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Sum,
    Mean,
}

/// What [`pool_backward`] needs to route an upstream gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolTape {
    mode: PoolMode,
    rows: usize,
    /// Winning row per column in max mode.
    winners: Vec<usize>,
}

impl PoolTape {
    pub fn winners(&self) -> &[usize] {
        &self.winners
    }
}

/// Column-wise reduction of `rows`. Max ties go to the lowest row index.
pub fn pool(rows: &Matrix, mode: PoolMode) -> Result<(Vec<f64>, PoolTape)> {
    if rows.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let n = rows.rows();
    let mut out = rows.row(0).to_vec();
    let mut winners = Vec::new();
    match mode {
        PoolMode::Max => {
            winners = vec![0; rows.cols()];
            for i in 1..n {
                for (j, &v) in rows.row(i).iter().enumerate() {
                    if v > out[j] {
                        out[j] = v;
                        winners[j] = i;
                    }
                }
            }
        }
        PoolMode::Sum | PoolMode::Mean => {
            for i in 1..n {
                for (o, v) in out.iter_mut().zip(rows.row(i)) {
                    *o += v;
                }
            }
            if mode == PoolMode::Mean {
                let inv = 1.0 / n as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
        }
    }
    Ok((out, PoolTape { mode, rows: n, winners }))
}

pub fn pool_backward(tape: &PoolTape, upstream: &[f64]) -> Matrix {
    let mut g = Matrix::zeros(tape.rows, upstream.len());
    match tape.mode {
        PoolMode::Max => {
            for (j, (&w, &u)) in tape.winners.iter().zip(upstream).enumerate() {
                g[(w, j)] = u;
            }
        }
        PoolMode::Sum | PoolMode::Mean => {
            let scale = if tape.mode == PoolMode::Mean { 1.0 / tape.rows as f64 } else { 1.0 };
            for i in 0..tape.rows {
                for (gv, u) in g.row_mut(i).iter_mut().zip(upstream) {
                    *gv = u * scale;
                }
            }
        }
    }
    g
}

/// A shared feature extractor applied to canonical points.
pub trait Trunk: Parameterized {
    type Tape;

    fn output_width(&self) -> usize;

    /// One feature row per input point.
    fn forward(&self, points: &[&Matrix]) -> Result<(Matrix, Self::Tape)>;

    fn predict(&self, points: &[&Matrix]) -> Result<Matrix> {
        Ok(self.forward(points)?.0)
    }

    /// Backpropagates `upstream` (one row per point). Parameter gradients
    /// are added into `param_grads` when given; input gradients are
    /// returned when `want_input` is set.
    fn backward(
        &self,
        tape: &Self::Tape,
        upstream: &Matrix,
        param_grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Result<Vec<Matrix>>;
}

/// An MLP on the row-major flattening of a fixed-shape point.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatMlp {
    pub rows: usize,
    pub cols: usize,
    pub mlp: Mlp,
}

impl FlatMlp {
    pub fn new(rows: usize, cols: usize, mlp: Mlp) -> Result<Self> {
        if mlp.input_width() != rows * cols {
            return Err(Error::ShapeMismatch { expected: (rows, cols), found: (mlp.input_width(), 1) });
        }
        Ok(FlatMlp { rows, cols, mlp })
    }

    fn stack(&self, points: &[&Matrix]) -> Result<Matrix> {
        let width = self.rows * self.cols;
        let mut data = Vec::with_capacity(points.len() * width);
        for p in points {
            if p.shape() != (self.rows, self.cols) {
                return Err(Error::ShapeMismatch { expected: (self.rows, self.cols), found: p.shape() });
            }
            data.extend_from_slice(p.data());
        }
        Ok(Matrix::from_vec(points.len(), width, data))
    }
}

impl Parameterized for FlatMlp {
    fn num_params(&self) -> usize {
        self.mlp.num_params()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.mlp.write_params(out)
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        self.mlp.read_params(src)
    }
}

impl Trunk for FlatMlp {
    type Tape = MlpTape;

    fn output_width(&self) -> usize {
        self.mlp.output_width()
    }

    fn forward(&self, points: &[&Matrix]) -> Result<(Matrix, MlpTape)> {
        self.mlp.forward(&self.stack(points)?)
    }

    fn predict(&self, points: &[&Matrix]) -> Result<Matrix> {
        self.mlp.predict(&self.stack(points)?)
    }

    fn backward(
        &self,
        tape: &MlpTape,
        upstream: &Matrix,
        param_grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Result<Vec<Matrix>> {
        let (g, gx) = self.mlp.backward(tape, upstream)?;
        if let Some(out) = param_grads {
            add_flat(out, &g);
        }
        if !want_input {
            return Ok(Vec::new());
        }
        Ok((0..gx.rows())
            .map(|i| Matrix::from_vec(self.rows, self.cols, gx.row(i).to_vec()))
            .collect())
    }
}

pub(crate) fn add_flat(out: &mut [f64], g: &MlpGradients) {
    let mut at = 0;
    for l in &g.layers {
        for v in l.weight.data().iter().chain(&l.bias) {
            out[at] += v;
            at += 1;
        }
    }
}

/// A shared trunk followed by one scalar head per class:
/// `s_d(p) = head_d(trunk(p))`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadedModel<T> {
    pub trunk: T,
    pub heads: Vec<Mlp>,
}

/// One training example after canonicalization: the canonical point chosen
/// for each class, and the label.
#[derive(Clone, Debug)]
pub struct CanonicalExample {
    pub points: Vec<Matrix>,
    pub label: usize,
}

impl<T: Trunk> HeadedModel<T> {
    pub fn new(trunk: T, heads: Vec<Mlp>) -> Result<Self> {
        if heads.len() < 2 {
            return Err(Error::BadConfig("need one head per class and at least two classes"));
        }
        for h in &heads {
            if h.input_width() != trunk.output_width() || h.output_width() != 1 {
                return Err(Error::ShapeMismatch {
                    expected: (trunk.output_width(), 1),
                    found: (h.input_width(), h.output_width()),
                });
            }
        }
        Ok(HeadedModel { trunk, heads })
    }

    pub fn num_classes(&self) -> usize {
        self.heads.len()
    }

    /// Logits of class `d` for a batch of points.
    pub fn logits(&self, class: usize, points: &[&Matrix]) -> Result<Vec<f64>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let feats = self.trunk.predict(points)?;
        Ok(self.heads[class].predict(&feats)?.into_vec())
    }

    /// Logit of class `d` and its gradient with respect to the point.
    pub fn logit_and_input_gradient(&self, class: usize, point: &Matrix) -> Result<(f64, Matrix)> {
        let (feats, ttape) = self.trunk.forward(&[point])?;
        let (s, htape) = self.heads[class].forward(&feats)?;
        let (_, dfeat) = self.heads[class].backward(&htape, &Matrix::from_vec(1, 1, vec![1.0]))?;
        let mut gx = self.trunk.backward(&ttape, &dfeat, None, true)?;
        Ok((s[(0, 0)], gx.swap_remove(0)))
    }

    fn head_offset(&self, class: usize) -> usize {
        self.trunk.num_params() + self.heads[..class].iter().map(|h| h.num_params()).sum::<usize>()
    }

    /// Summed one-vs-rest BCE over `batch`, with the gradient with respect
    /// to every parameter. The canonical points are constants here: no
    /// gradient flows into the choice of transform.
    pub fn loss_and_gradient(&self, batch: &[CanonicalExample]) -> Result<(f64, Vec<f64>)> {
        let mut grads = vec![0.0; self.num_params()];
        let mut total = 0.0;
        if batch.is_empty() {
            return Ok((0.0, grads));
        }
        for (d, head) in self.heads.iter().enumerate() {
            let points: Vec<&Matrix> = batch
                .iter()
                .map(|e| e.points.get(d).ok_or(Error::MissingClass { class: d }))
                .collect::<Result<_>>()?;
            let (feats, ttape) = self.trunk.forward(&points)?;
            let (s, htape) = head.forward(&feats)?;
            let y: Vec<f64> = batch.iter().map(|e| if e.label == d { 1.0 } else { 0.0 }).collect();
            let (loss, ds) = bce_with_logits(s.data(), &y, None)?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss);
            }
            total += loss;
            let (hg, dfeat) = head.backward(&htape, &Matrix::from_vec(ds.len(), 1, ds))?;
            let off = self.head_offset(d);
            let n = head.num_params();
            add_flat(&mut grads[off..off + n], &hg);
            let tn = self.trunk.num_params();
            self.trunk.backward(&ttape, &dfeat, Some(&mut grads[..tn]), false)?;
        }
        Ok((total, grads))
    }
}

impl<T: Trunk> Parameterized for HeadedModel<T> {
    fn num_params(&self) -> usize {
        self.trunk.num_params() + self.heads.iter().map(|h| h.num_params()).sum::<usize>()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.trunk.write_params(out);
        for h in &self.heads {
            h.write_params(out);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = self.trunk.read_params(src);
        for h in &mut self.heads {
            at += h.read_params(&src[at..]);
        }
        at
    }
}

/// Adam on a flat parameter vector, with optional decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: (self.m.len(), 1),
                found: (grads.len(), 1),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate
                * (m_hat / (libm::sqrt(v_hat) + self.epsilon) + self.weight_decay * params[i]);
        }
        Ok(())
    }

    /// Convenience wrapper for a single model.
    pub fn step_model<P: Parameterized + ?Sized>(&mut self, model: &mut P, grads: &[f64]) -> Result<()> {
        let mut p = model.params();
        self.step(&mut p, grads)?;
        model.read_params(&p);
        Ok(())
    }
}

/// Outcome of [`directional_gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub probes: usize,
    pub max_relative_error: f64,
}

/// Compares `⟨analytic, v⟩` with the central difference
/// `(f(θ + hv) − f(θ − hv)) / 2h` along `probes` random Gaussian directions.
/// The relative error uses `max(|a|, |n|, 1e-8)` as denominator.
pub fn directional_gradient_check(
    f: &mut dyn FnMut(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    probes: usize,
    h: f64,
    rng: &mut RngStream,
) -> GradientCheck {
    let mut worst: f64 = 0.0;
    let mut shifted = theta.to_vec();
    for _ in 0..probes {
        let v: Vec<f64> = (0..theta.len()).map(|_| rng.normal()).collect();
        let a: f64 = analytic.iter().zip(&v).map(|(g, d)| g * d).sum();
        for ((s, t), d) in shifted.iter_mut().zip(theta).zip(&v) {
            *s = t + h * d;
        }
        let plus = f(&shifted);
        for ((s, t), d) in shifted.iter_mut().zip(theta).zip(&v) {
            *s = t - h * d;
        }
        let minus = f(&shifted);
        let n = (plus - minus) / (2.0 * h);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    GradientCheck { probes, max_relative_error: worst }
}
