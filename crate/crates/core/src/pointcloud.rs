//! Point clouds: the multiset metric, k-nearest-neighbour graphs, three
//! permutation-invariant backbones, and their canonicalization over SO(3).
//!
//! Rotations act on the right, `x_i ↦ x_i Rᵀ`, so a cloud stored as an
//! `N × 3` matrix `X` becomes `X Rᵀ`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::canon::{
    one_vs_rest_decide, Budget, CanonDecision, HeadedClassifier, MultiClassCanonicalizer, PointObjective,
    Prior, RefineSettings, TransformationFamily,
};
use crate::error::{Error, Result};
use crate::groups::{enumerate_permutations, haar_rotation3, refine_rotation3, Refinement, Rotation3, RotationObjective, MAX_ENUMERATION};
use crate::linalg::Matrix;
use crate::nn::{add_flat, pool, pool_backward, Activation, HeadedModel, Mlp, MlpTape, Parameterized, PoolMode, PoolTape, Trunk};
use crate::rng::RngStream;

/// An `N × 3` array of finite coordinates, `N ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Matrix,
}

impl PointCloud {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        if points.cols() != 3 {
            return Err(Error::ShapeMismatch { expected: (points.rows(), 3), found: points.shape() });
        }
        if !points.is_finite() {
            return Err(Error::NonFiniteScore);
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn into_points(self) -> Matrix {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn rotated(&self, r: &Rotation3) -> PointCloud {
        PointCloud { points: rotate_points(&self.points, r) }
    }
}

/// `X Rᵀ`.
pub fn rotate_points(x: &Matrix, r: &Rotation3) -> Matrix {
    x.matmul_t(r.matrix())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMode {
    /// Exact minimum over all row permutations; `N ≤ 8`.
    Brute,
    /// Lexicographically sorted rows matched in order: an upper bound.
    Greedy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultisetDistance {
    pub value: f64,
    pub exact: bool,
}

/// `min_s ‖X − ρ(s) Y‖_F` over row permutations `s`.
pub fn multiset_distance(x: &Matrix, y: &Matrix, mode: DistanceMode) -> Result<MultisetDistance> {
    if x.shape() != y.shape() {
        return Err(Error::SizeMismatch { left: x.rows(), right: y.rows() });
    }
    let n = x.rows();
    match mode {
        DistanceMode::Brute => {
            if n > MAX_ENUMERATION {
                return Err(Error::TooLargeForBrute { n });
            }
            let mut best = f64::INFINITY;
            for s in enumerate_permutations(n)? {
                best = best.min(matched_squared(x, y, s.mapping().iter().copied().enumerate()));
            }
            Ok(MultisetDistance { value: libm::sqrt(best), exact: true })
        }
        DistanceMode::Greedy => {
            let (xs, ys) = (lex_order(x), lex_order(y));
            let acc = matched_squared(x, y, xs.into_iter().zip(ys));
            Ok(MultisetDistance { value: libm::sqrt(acc), exact: false })
        }
    }
}

/// Squared distance of a matching. Row terms are summed in sorted order, so
/// swapping the arguments reproduces the value bit for bit and both modes
/// agree exactly on the same matching.
fn matched_squared(x: &Matrix, y: &Matrix, pairs: impl Iterator<Item = (usize, usize)>) -> f64 {
    let mut terms: Vec<f64> = pairs
        .map(|(i, j)| x.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

fn lex_order(m: &Matrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.rows()).collect();
    idx.sort_by(|&a, &b| {
        m.row(a)
            .iter()
            .zip(m.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Neighbour lists, nearest first, of length `min(k, N − 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnnGraph {
    pub k: usize,
    pub neighbors: Vec<Vec<usize>>,
}

/// Euclidean k-nearest neighbours over the rows of `x`, excluding self;
/// equal distances go to the lower index.
pub fn knn_graph(x: &Matrix, k: usize) -> KnnGraph {
    let n = x.rows();
    let keep = k.min(n.saturating_sub(1));
    let neighbors = (0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(keep).map(|(_, j)| j).collect()
        })
        .collect();
    KnnGraph { k, neighbors }
}

/// A shared per-point MLP `φ`, a column-wise pool, and an outer MLP.
/// Sum pooling gives a DeepSet, max pooling a PointNet, and mean pooling
/// over graph nodes gives the plain node-wise baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct SetNet {
    pub phi: Mlp,
    pub head: Mlp,
    pub pool: PoolMode,
}

pub struct SetNetTape {
    phi: Vec<(MlpTape, PoolTape)>,
    head: MlpTape,
}

impl SetNet {
    pub fn new(phi: Mlp, head: Mlp, pool: PoolMode) -> Result<Self> {
        if phi.output_width() != head.input_width() {
            return Err(Error::ShapeMismatch { expected: (phi.output_width(), 1), found: (head.input_width(), 1) });
        }
        Ok(SetNet { phi, head, pool })
    }

    /// `in → hidden… → width` for `φ` and `width → outer… → out` after pooling.
    pub fn build(
        inputs: usize,
        phi_hidden: &[usize],
        width: usize,
        outer_hidden: &[usize],
        outputs: usize,
        pool: PoolMode,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut pw = vec![inputs];
        pw.extend_from_slice(phi_hidden);
        pw.push(width);
        let mut hw = vec![width];
        hw.extend_from_slice(outer_hidden);
        hw.push(outputs);
        SetNet::new(Mlp::new(&pw, Activation::Relu, rng)?, Mlp::new(&hw, Activation::Relu, rng)?, pool)
    }
}

impl Parameterized for SetNet {
    fn num_params(&self) -> usize {
        self.phi.num_params() + self.head.num_params()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.phi.write_params(out);
        self.head.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let at = self.phi.read_params(src);
        at + self.head.read_params(&src[at..])
    }
}

impl Trunk for SetNet {
    type Tape = SetNetTape;

    fn output_width(&self) -> usize {
        self.head.output_width()
    }

    fn forward(&self, points: &[&Matrix]) -> Result<(Matrix, SetNetTape)> {
        let mut pooled = Vec::with_capacity(points.len() * self.phi.output_width());
        let mut tapes = Vec::with_capacity(points.len());
        for x in points {
            let (h, t) = self.phi.forward(x)?;
            let (p, pt) = pool(&h, self.pool)?;
            pooled.extend(p);
            tapes.push((t, pt));
        }
        let pooled = Matrix::from_vec(points.len(), self.phi.output_width(), pooled);
        let (out, head) = self.head.forward(&pooled)?;
        Ok((out, SetNetTape { phi: tapes, head }))
    }

    fn backward(
        &self,
        tape: &SetNetTape,
        upstream: &Matrix,
        mut param_grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Result<Vec<Matrix>> {
        let (hg, dpooled) = self.head.backward(&tape.head, upstream)?;
        let split = self.phi.num_params();
        if let Some(g) = param_grads.as_deref_mut() {
            add_flat(&mut g[split..], &hg);
        }
        let mut inputs = Vec::new();
        for (b, (t, pt)) in tape.phi.iter().enumerate() {
            let dh = pool_backward(pt, dpooled.row(b));
            let (pg, dx) = self.phi.backward(t, &dh)?;
            if let Some(g) = param_grads.as_deref_mut() {
                add_flat(&mut g[..split], &pg);
            }
            if want_input {
                inputs.push(dx);
            }
        }
        Ok(inputs)
    }
}

/// DGCNN: EdgeConv layers `x_i' = max_{j ∈ kNN(i)} ReLU(Ψ(x_j − x_i, x_i))`,
/// a global max pool over points and an MLP head. The neighbour graph is
/// rebuilt on each layer's input features when `dynamic` is set, otherwise
/// the coordinate graph is reused throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct Dgcnn {
    pub edge_layers: Vec<Mlp>,
    pub head: Mlp,
    pub k: usize,
    pub dynamic: bool,
}

pub struct EdgeConvTape {
    graph: KnnGraph,
    mlp: MlpTape,
    /// Pre-activation edge outputs.
    z: Matrix,
    /// Row of `z` holding each point's maximum, per column.
    winners: Vec<Vec<usize>>,
    in_width: usize,
}

pub struct DgcnnTape {
    clouds: Vec<(Vec<EdgeConvTape>, PoolTape)>,
    head: MlpTape,
}

/// One EdgeConv layer over explicit neighbour lists. Returns the new
/// per-point features and the tape for backpropagation.
pub fn edge_conv(x: &Matrix, graph: &KnnGraph, psi: &Mlp) -> Result<(Matrix, EdgeConvTape)> {
    let n = x.rows();
    let c = x.cols();
    if psi.input_width() != 2 * c {
        return Err(Error::ShapeMismatch { expected: (n, psi.input_width() / 2), found: x.shape() });
    }
    if graph.neighbors.len() != n || graph.neighbors.iter().any(|l| l.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let edges: usize = graph.neighbors.iter().map(Vec::len).sum();
    let mut e = Matrix::zeros(edges, 2 * c);
    let mut row = 0;
    for (i, list) in graph.neighbors.iter().enumerate() {
        for &j in list {
            let r = e.row_mut(row);
            for t in 0..c {
                r[t] = x[(j, t)] - x[(i, t)];
                r[c + t] = x[(i, t)];
            }
            row += 1;
        }
    }
    let (z, mlp) = psi.forward(&e)?;
    let width = z.cols();
    let mut out = Matrix::zeros(n, width);
    let mut winners = Vec::with_capacity(n);
    let mut start = 0;
    for (i, list) in graph.neighbors.iter().enumerate() {
        let mut win = vec![start; width];
        for r in start + 1..start + list.len() {
            for (col, w) in win.iter_mut().enumerate() {
                if z[(r, col)] > z[(*w, col)] {
                    *w = r;
                }
            }
        }
        for (col, &w) in win.iter().enumerate() {
            out[(i, col)] = z[(w, col)].max(0.0);
        }
        winners.push(win);
        start += list.len();
    }
    Ok((out, EdgeConvTape { graph: graph.clone(), mlp, z, winners, in_width: c }))
}

/// Gradients of [`edge_conv`]: parameter gradients of `Ψ` and the input
/// gradient, with the neighbour graph held fixed.
pub fn edge_conv_backward(psi: &Mlp, tape: &EdgeConvTape, upstream: &Matrix) -> Result<(crate::nn::MlpGradients, Matrix)> {
    let mut dz = Matrix::zeros(tape.z.rows(), tape.z.cols());
    for (i, win) in tape.winners.iter().enumerate() {
        for (col, &w) in win.iter().enumerate() {
            if tape.z[(w, col)] > 0.0 {
                dz[(w, col)] += upstream[(i, col)];
            }
        }
    }
    let (g, de) = psi.backward(&tape.mlp, &dz)?;
    let c = tape.in_width;
    let mut dx = Matrix::zeros(tape.graph.neighbors.len(), c);
    let mut row = 0;
    for (i, list) in tape.graph.neighbors.iter().enumerate() {
        for &j in list {
            let r = de.row(row);
            for t in 0..c {
                dx[(j, t)] += r[t];
                dx[(i, t)] += r[c + t] - r[t];
            }
            row += 1;
        }
    }
    Ok((g, dx))
}

impl Dgcnn {
    pub fn new(edge_layers: Vec<Mlp>, head: Mlp, k: usize, dynamic: bool) -> Result<Self> {
        if edge_layers.is_empty() || k == 0 {
            return Err(Error::BadConfig("DGCNN needs at least one edge layer and k ≥ 1"));
        }
        for w in edge_layers.windows(2) {
            if w[1].input_width() != 2 * w[0].output_width() {
                return Err(Error::ShapeMismatch { expected: (2 * w[0].output_width(), 1), found: (w[1].input_width(), 1) });
            }
        }
        if head.input_width() != edge_layers[edge_layers.len() - 1].output_width() {
            return Err(Error::ShapeMismatch { expected: (head.input_width(), 1), found: (edge_layers[edge_layers.len() - 1].output_width(), 1) });
        }
        Ok(Dgcnn { edge_layers, head, k, dynamic })
    }

    /// Edge layers of the given widths, each `Ψ` a two-layer MLP.
    pub fn build(
        inputs: usize,
        widths: &[usize],
        head_hidden: &[usize],
        outputs: usize,
        k: usize,
        dynamic: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut c = inputs;
        for &w in widths {
            layers.push(Mlp::new(&[2 * c, w, w], Activation::Relu, rng)?);
            c = w;
        }
        let mut hw = vec![c];
        hw.extend_from_slice(head_hidden);
        hw.push(outputs);
        Dgcnn::new(layers, Mlp::new(&hw, Activation::Relu, rng)?, k, dynamic)
    }

    /// Per-point features after all edge layers.
    pub fn point_features(&self, x: &Matrix) -> Result<(Matrix, Vec<EdgeConvTape>)> {
        let base = knn_graph(x, self.k);
        let mut f = x.clone();
        let mut tapes = Vec::with_capacity(self.edge_layers.len());
        for (l, psi) in self.edge_layers.iter().enumerate() {
            let graph = if self.dynamic && l > 0 { knn_graph(&f, self.k) } else { base.clone() };
            let (next, t) = edge_conv(&f, &graph, psi)?;
            f = next;
            tapes.push(t);
        }
        Ok((f, tapes))
    }

    fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        let mut out = Vec::with_capacity(self.edge_layers.len() + 1);
        for l in &self.edge_layers {
            out.push(at);
            at += l.num_params();
        }
        out.push(at);
        out
    }
}

impl Parameterized for Dgcnn {
    fn num_params(&self) -> usize {
        self.edge_layers.iter().map(Mlp::num_params).sum::<usize>() + self.head.num_params()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.edge_layers {
            l.write_params(out);
        }
        self.head.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.edge_layers {
            at += l.read_params(&src[at..]);
        }
        at + self.head.read_params(&src[at..])
    }
}

impl Trunk for Dgcnn {
    type Tape = DgcnnTape;

    fn output_width(&self) -> usize {
        self.head.output_width()
    }

    fn forward(&self, points: &[&Matrix]) -> Result<(Matrix, DgcnnTape)> {
        let width = self.edge_layers[self.edge_layers.len() - 1].output_width();
        let mut pooled = Vec::with_capacity(points.len() * width);
        let mut clouds = Vec::with_capacity(points.len());
        for x in points {
            let (f, tapes) = self.point_features(x)?;
            let (p, pt) = pool(&f, PoolMode::Max)?;
            pooled.extend(p);
            clouds.push((tapes, pt));
        }
        let (out, head) = self.head.forward(&Matrix::from_vec(points.len(), width, pooled))?;
        Ok((out, DgcnnTape { clouds, head }))
    }

    fn backward(
        &self,
        tape: &DgcnnTape,
        upstream: &Matrix,
        mut param_grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Result<Vec<Matrix>> {
        let offsets = self.offsets();
        let (hg, dpooled) = self.head.backward(&tape.head, upstream)?;
        if let Some(g) = param_grads.as_deref_mut() {
            add_flat(&mut g[offsets[self.edge_layers.len()]..], &hg);
        }
        let mut inputs = Vec::new();
        for (b, (tapes, pt)) in tape.clouds.iter().enumerate() {
            let mut df = pool_backward(pt, dpooled.row(b));
            for (l, (psi, t)) in self.edge_layers.iter().zip(tapes).enumerate().rev() {
                let (pg, dx) = edge_conv_backward(psi, t, &df)?;
                if let Some(g) = param_grads.as_deref_mut() {
                    add_flat(&mut g[offsets[l]..offsets[l + 1]], &pg);
                }
                df = dx;
            }
            if want_input {
                inputs.push(df);
            }
        }
        Ok(inputs)
    }
}

/// SO(3) acting on raw `N × 3` coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RotationFamily;

struct RotatedObjective<'a> {
    x: &'a Matrix,
    objective: &'a PointObjective<'a>,
}

impl RotationObjective for RotatedObjective<'_> {
    fn value(&mut self, r: &Rotation3) -> f64 {
        self.objective.value(&rotate_points(self.x, r)).0
    }

    fn value_and_gradient(&mut self, r: &Rotation3) -> Option<(f64, Matrix)> {
        let (v, gy) = self.objective.value_and_gradient(&rotate_points(self.x, r))?;
        // y = x Rᵀ, so ∂f/∂R = (∂f/∂y)ᵀ x.
        Some((v, gy.t_matmul(self.x)))
    }
}

impl TransformationFamily for RotationFamily {
    type Input = Matrix;
    type Transform = Rotation3;
    type Element = Rotation3;

    fn sample(&self, _g: &Matrix, rng: &mut RngStream, count: usize) -> Vec<Rotation3> {
        (0..count).map(|_| haar_rotation3(rng)).collect()
    }

    fn identity(&self, _g: &Matrix) -> Rotation3 {
        Rotation3::identity()
    }

    fn apply(&self, u: &Rotation3, g: &Matrix) -> Result<Matrix> {
        if g.cols() != 3 {
            return Err(Error::ShapeMismatch { expected: (g.rows(), 3), found: g.shape() });
        }
        Ok(rotate_points(g, u))
    }

    fn refine(
        &self,
        u: &Rotation3,
        g: &Matrix,
        objective: &PointObjective<'_>,
        settings: RefineSettings,
    ) -> Option<Result<Refinement<Rotation3>>> {
        let mut f = RotatedObjective { x: g, objective };
        Some(refine_rotation3(u, &mut f, settings.steps, settings.step_size))
    }

    fn compose(&self, u: &Rotation3, v: &Rotation3) -> Result<Rotation3> {
        Ok(u.compose(v))
    }

    fn inverse(&self, v: &Rotation3) -> Result<Rotation3> {
        Ok(v.inverse())
    }

    fn act(&self, v: &Rotation3, g: &Matrix) -> Result<Matrix> {
        self.apply(v, g)
    }
}

/// An adaptively canonicalized point-cloud classifier.
pub type AcPointClassifier<T> = HeadedClassifier<T, RotationFamily>;

pub fn ac_point_classifier<T: Trunk>(trunk: T, heads: Vec<Mlp>) -> Result<AcPointClassifier<T>> {
    Ok(HeadedClassifier { net: HeadedModel::new(trunk, heads)?, family: RotationFamily, prior: Prior::default() })
}

/// Per-class canonicalizing decisions for `x` and the predicted class.
pub fn ac_classify<T: Trunk>(
    model: &AcPointClassifier<T>,
    x: &PointCloud,
    budget: &Budget,
    rng: &RngStream,
) -> Result<(Vec<CanonDecision<Rotation3>>, usize)> {
    let decisions = model.decide(x.points(), budget, rng)?;
    let class = one_vs_rest_decide(&decisions, model.num_classes())?;
    Ok((decisions, class))
}
