//! Graph-spectral machinery and the anisotropic nonlinear spectral filter.
//!
//! A graph signal is decomposed over frequency bands of a graph shift
//! operator. Inside a band the eigenbasis is only defined up to an
//! orthogonal change of basis, so every class searches its own per-band
//! orthogonal blocks `U_k` by prior maximization. The rotated, padded
//! coefficients feed a shared MLP `φ` and a per-class head `Ψ_d`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::canon::{
    prior_maximize_over, Budget, CanonDecision, MultiClassCanonicalizer, Perturb, PointObjective,
    Prior, RefineSettings, TransformationFamily,
};
use crate::error::{Error, Result};
use crate::groups::{haar_orthogonal, refine_orthogonal_blocks, Refinement};
use crate::linalg::{eigh_symmetric, EigenPairs, Matrix, SYMMETRY_TOL};
use crate::nn::{Activation, FlatMlp, HeadedModel, Mlp};
use crate::rng::RngStream;

/// Relative tolerance for snapping eigenvalues onto band boundaries.
pub const BOUNDARY_SNAP: f64 = 1e-9;

/// An undirected weighted graph carrying an `n × T` node signal. The
/// adjacency is shared so that datasets on a fixed graph store it once.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: Arc<Matrix>,
    signal: Matrix,
}

pub fn validate_adjacency(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::AsymmetricAdjacency { asymmetry: asym });
    }
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if a[(i, j)] < 0.0 {
                return Err(Error::NegativeWeight { row: i, col: j });
            }
        }
    }
    Ok(())
}

impl Graph {
    pub fn new(adjacency: Arc<Matrix>, signal: Matrix) -> Result<Self> {
        validate_adjacency(&adjacency)?;
        if signal.rows() != adjacency.rows() || signal.cols() == 0 {
            return Err(Error::ShapeMismatch {
                expected: (adjacency.rows(), signal.cols().max(1)),
                found: signal.shape(),
            });
        }
        Ok(Graph { adjacency, signal })
    }

    /// Builds a symmetric adjacency from `(i, j, w)` triples.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], signal: Matrix) -> Result<Self> {
        Graph::new(Arc::new(adjacency_from_edges(n, edges)?), signal)
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn channels(&self) -> usize {
        self.signal.cols()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn shared_adjacency(&self) -> &Arc<Matrix> {
        &self.adjacency
    }

    pub fn signal(&self) -> &Matrix {
        &self.signal
    }

    /// Upper-triangular non-zero entries `(i, j, w)` with `i ≤ j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let a = &self.adjacency;
        let mut out = Vec::new();
        for i in 0..a.rows() {
            for j in i..a.cols() {
                if a[(i, j)] != 0.0 {
                    out.push((i, j, a[(i, j)]));
                }
            }
        }
        out
    }
}

pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Matrix> {
    let mut a = Matrix::zeros(n, n);
    for &(i, j, w) in edges {
        if i >= n || j >= n {
            return Err(Error::ShapeMismatch { expected: (n, n), found: (i.max(j) + 1, 0) });
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { row: i, col: j });
        }
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    Ok(a)
}

/// Unweighted cycle `C_n` on nodes `0 … n−1`.
pub fn cycle_adjacency(n: usize) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        let j = (i + 1) % n;
        if i != j {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
    }
    a
}

/// 4-neighbour torus grid with unit weights; node `(x, y)` has index `y·side + x`.
pub fn torus_adjacency(side: usize) -> Matrix {
    let n = side * side;
    let mut a = Matrix::zeros(n, n);
    for y in 0..side {
        for x in 0..side {
            let i = y * side + x;
            for j in [y * side + (x + 1) % side, ((y + 1) % side) * side + x] {
                if i != j {
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                }
            }
        }
    }
    a
}

/// Graph shift operator choices. Only the normalized Laplacian comes with
/// a guaranteed spectrum in `[0, 2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gso {
    NormalizedLaplacian,
    CombinatorialLaplacian,
    Adjacency,
}

impl Gso {
    pub fn name(self) -> &'static str {
        match self {
            Gso::NormalizedLaplacian => "normalized-laplacian",
            Gso::CombinatorialLaplacian => "combinatorial-laplacian",
            Gso::Adjacency => "adjacency",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "normalized-laplacian" => Some(Gso::NormalizedLaplacian),
            "combinatorial-laplacian" => Some(Gso::CombinatorialLaplacian),
            "adjacency" => Some(Gso::Adjacency),
            _ => None,
        }
    }
}

/// `I − D^{-1/2} A D^{-1/2}`; isolated nodes keep their identity row.
pub fn normalized_laplacian(a: &Matrix) -> Result<Matrix> {
    validate_adjacency(a)?;
    let n = a.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            if d > 0.0 {
                1.0 / libm::sqrt(d)
            } else {
                0.0
            }
        })
        .collect();
    Ok(Matrix::from_fn(n, n, |i, j| {
        let off = a[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    }))
}

pub fn combinatorial_laplacian(a: &Matrix) -> Result<Matrix> {
    validate_adjacency(a)?;
    let n = a.rows();
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            a.row(i).iter().sum::<f64>() - a[(i, i)]
        } else {
            -a[(i, j)]
        }
    }))
}

pub fn gso_matrix(a: &Matrix, gso: Gso) -> Result<Matrix> {
    match gso {
        Gso::NormalizedLaplacian => normalized_laplacian(a),
        Gso::CombinatorialLaplacian => combinatorial_laplacian(a),
        Gso::Adjacency => {
            validate_adjacency(a)?;
            Ok(a.clone())
        }
    }
}

/// `V f(Λ) Vᵀ`.
pub fn apply_scalar_function(l: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    Ok(eigh_symmetric(l)?.reconstruct_with(f))
}

/// `p(L)` for `p(x) = c_0 + c_1 x + …` by Horner's scheme on matrices.
pub fn polynomial_of(l: &Matrix, coefficients: &[f64]) -> Matrix {
    let n = l.rows();
    let mut acc = Matrix::zeros(n, n);
    for &c in coefficients.iter().rev() {
        acc = acc.matmul(l);
        for i in 0..n {
            acc[(i, i)] += c;
        }
    }
    acc
}

/// Band boundaries `b_0 < … < b_B`. Band `k` (0-based) is
/// `[b_k, b_{k+1})`; the lowest band also takes everything below `b_0`
/// and the top band is closed at `b_B`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandPlan {
    boundaries: Vec<f64>,
    decay: Option<f64>,
}

impl BandPlan {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::BadConfig("a band plan needs at least two boundaries"));
        }
        if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadConfig("band boundaries must be finite and strictly increasing"));
        }
        Ok(BandPlan { boundaries, decay: None })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn band_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn decay(&self) -> Option<f64> {
        self.decay
    }

    pub fn top(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }

    /// The band housing `lambda`, or `None` above the top boundary.
    pub fn band_of(&self, lambda: f64) -> Option<usize> {
        let b = &self.boundaries;
        let last = self.band_count();
        let tol = BOUNDARY_SNAP * self.top().abs().max(f64::MIN_POSITIVE);
        for (j, &bj) in b.iter().enumerate().skip(1) {
            if (lambda - bj).abs() <= tol {
                return Some(j.min(last - 1));
            }
        }
        if lambda > self.top() {
            return None;
        }
        (0..last).find(|&k| lambda < b[k + 1])
    }

    /// Stable 64-bit fingerprint of the boundaries, used to key caches.
    pub fn fingerprint(&self) -> u64 {
        let tags: Vec<u64> = self.boundaries.iter().map(|b| b.to_bits()).collect();
        crate::rng::hash_tags(0x0062_616e_6470_6c61, &tags)
    }
}

/// `b_k = λ_max·r^{S−k}` for `k = 0 … S`.
pub fn dyadic_band_plan(lambda_max: f64, decay: f64, bands: usize) -> Result<BandPlan> {
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::BadDecay(decay));
    }
    if bands == 0 {
        return Err(Error::BadConfig("a dyadic plan needs at least one band"));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::BadConfig("the largest eigenvalue must be positive"));
    }
    let boundaries = (0..=bands)
        .map(|k| lambda_max * libm::pow(decay, (bands - k) as f64))
        .collect();
    let mut plan = BandPlan::new(boundaries)?;
    plan.decay = Some(decay);
    Ok(plan)
}

/// Per-band orthonormal eigenbases `X_k` (`n × M_k`) with their eigenvalues,
/// both in ascending eigenvalue order.
#[derive(Clone, Debug, PartialEq)]
pub struct BandDecomposition {
    n: usize,
    bases: Vec<Matrix>,
    eigenvalues: Vec<Vec<f64>>,
}

impl BandDecomposition {
    pub fn from_parts(n: usize, bases: Vec<Matrix>, eigenvalues: Vec<Vec<f64>>) -> Result<Self> {
        if bases.len() != eigenvalues.len() {
            return Err(Error::BadConfig("one eigenvalue list per band is required"));
        }
        for (x, e) in bases.iter().zip(&eigenvalues) {
            if x.rows() != n || x.cols() != e.len() {
                return Err(Error::ShapeMismatch { expected: (n, e.len()), found: x.shape() });
            }
        }
        Ok(BandDecomposition { n, bases, eigenvalues })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn band_count(&self) -> usize {
        self.bases.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(Matrix::cols).collect()
    }

    pub fn basis(&self, k: usize) -> &Matrix {
        &self.bases[k]
    }

    pub fn eigenvalues(&self, k: usize) -> &[f64] {
        &self.eigenvalues[k]
    }

    /// `P_k = X_k X_kᵀ`.
    pub fn projection(&self, k: usize) -> Matrix {
        self.bases[k].matmul_t(&self.bases[k])
    }

    /// Replaces every basis `X_k` by `X_k W_k`.
    pub fn change_basis(&self, w: &OrthogonalBlock) -> Result<Self> {
        check_block_dims(w, &self.dims())?;
        let bases = self
            .bases
            .iter()
            .zip(&w.blocks)
            .map(|(x, wk)| if x.cols() == 0 { x.clone() } else { x.matmul(wk) })
            .collect();
        Ok(BandDecomposition { n: self.n, bases, eigenvalues: self.eigenvalues.clone() })
    }
}

/// Splits eigenpairs over the bands of `plan`.
pub fn assign_bands(eig: &EigenPairs, plan: &BandPlan) -> BandDecomposition {
    let n = eig.vectors.rows();
    let b = plan.band_count();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); b];
    for (i, &lambda) in eig.values.iter().enumerate() {
        if let Some(k) = plan.band_of(lambda) {
            members[k].push(i);
        }
    }
    let mut bases = Vec::with_capacity(b);
    let mut eigenvalues = Vec::with_capacity(b);
    for idx in members {
        let x = Matrix::from_fn(n, idx.len(), |r, c| eig.vectors[(r, idx[c])]);
        eigenvalues.push(idx.iter().map(|&i| eig.values[i]).collect());
        bases.push(x);
    }
    BandDecomposition { n, bases, eigenvalues }
}

pub fn band_decompose(l: &Matrix, plan: &BandPlan) -> Result<BandDecomposition> {
    Ok(assign_bands(&eigh_symmetric(l)?, plan))
}

/// Dyadic plan on the given operator's own largest eigenvalue, and the
/// resulting decomposition, from a single eigendecomposition.
pub fn dyadic_decompose(l: &Matrix, decay: f64, bands: usize) -> Result<(BandPlan, BandDecomposition)> {
    let eig = eigh_symmetric(l)?;
    let lambda_max = eig.values.last().copied().ok_or(Error::EmptyInput)?;
    let plan = dyadic_band_plan(lambda_max, decay, bands)?;
    let dec = assign_bands(&eig, &plan);
    Ok((plan, dec))
}

/// Per-band coefficients `C_k = X_kᵀ S`, each `M_k × T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs {
    channels: usize,
    bands: Vec<Matrix>,
}

impl SpectralCoeffs {
    pub fn new(channels: usize, bands: Vec<Matrix>) -> Result<Self> {
        if let Some(b) = bands.iter().find(|b| b.cols() != channels) {
            return Err(Error::ShapeMismatch { expected: (b.rows(), channels), found: b.shape() });
        }
        Ok(SpectralCoeffs { channels, bands })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, k: usize) -> &Matrix {
        &self.bands[k]
    }

    pub fn bands(&self) -> &[Matrix] {
        &self.bands
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bands.iter().map(Matrix::rows).collect()
    }

    /// Total energy `Σ_k ‖C_k‖²`.
    pub fn energy(&self) -> f64 {
        self.bands.iter().map(|b| b.inner(b)).sum()
    }

    /// Drops the bands whose `J_k` is zero from memory by emptying them.
    pub fn keep_bands(&self, j_dims: &[usize]) -> SpectralCoeffs {
        let bands = self
            .bands
            .iter()
            .zip(j_dims)
            .map(|(b, &j)| if j == 0 { Matrix::zeros(0, self.channels) } else { b.clone() })
            .collect();
        SpectralCoeffs { channels: self.channels, bands }
    }
}

impl Perturb for SpectralCoeffs {
    fn perturbed(&self, eps: f64, rng: &mut RngStream) -> Self {
        let dirs: Vec<Matrix> = self
            .bands
            .iter()
            .map(|b| Matrix::from_fn(b.rows(), b.cols(), |_, _| rng.normal()))
            .collect();
        let norm = libm::sqrt(dirs.iter().map(|d| d.inner(d)).sum());
        let bands = self
            .bands
            .iter()
            .zip(&dirs)
            .map(|(b, d)| {
                let mut out = b.clone();
                if norm > 0.0 {
                    out.axpy(eps / norm, d);
                }
                out
            })
            .collect();
        SpectralCoeffs { channels: self.channels, bands }
    }
}

pub fn spectral_coefficients(dec: &BandDecomposition, signal: &Matrix) -> Result<SpectralCoeffs> {
    if signal.rows() != dec.n {
        return Err(Error::ShapeMismatch { expected: (dec.n, signal.cols()), found: signal.shape() });
    }
    let bands = dec.bases.iter().map(|x| x.t_matmul(signal)).collect();
    Ok(SpectralCoeffs { channels: signal.cols(), bands })
}

fn check_j(j_dims: &[usize], bands: usize) -> Result<()> {
    if j_dims.len() != bands {
        return Err(Error::ShapeMismatch { expected: (bands, 1), found: (j_dims.len(), 1) });
    }
    Ok(())
}

/// Concatenates the bands after keeping the first `min(M_k, J_k)` rows of
/// each and zero-filling up to `J_k`; the result is `Σ J_k × T`.
pub fn pad_truncate(c: &SpectralCoeffs, j_dims: &[usize]) -> Result<Matrix> {
    check_j(j_dims, c.band_count())?;
    let total: usize = j_dims.iter().sum();
    let mut out = Matrix::zeros(total, c.channels);
    let mut offset = 0;
    for (band, &j) in c.bands.iter().zip(j_dims) {
        for r in 0..j.min(band.rows()) {
            out.row_mut(offset + r).copy_from_slice(band.row(r));
        }
        offset += j;
    }
    Ok(out)
}

/// Nearest-rank quantile of the observed dimensions per band, with bands
/// whose quantile exceeds `limit` switched off (`J_k = 0`).
pub fn j_dims_from_observed(observed: &[Vec<usize>], quantile: f64, limit: Option<usize>) -> Result<Vec<usize>> {
    let first = observed.first().ok_or(Error::EmptyInput)?;
    let bands = first.len();
    if observed.iter().any(|o| o.len() != bands) {
        return Err(Error::BadConfig("observed band counts differ"));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::BadConfig("quantile must lie in [0, 1]"));
    }
    let n = observed.len();
    let rank = (libm::ceil(quantile * n as f64) as usize).clamp(1, n) - 1;
    Ok((0..bands)
        .map(|k| {
            let mut col: Vec<usize> = observed.iter().map(|o| o[k]).collect();
            col.sort_unstable();
            let q = col[rank];
            match limit {
                Some(l) if q > l => 0,
                _ => q,
            }
        })
        .collect())
}

/// One orthogonal block per band. Bands that never reach `φ` (`J_k = 0`)
/// carry an empty `0 × 0` block.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalBlock {
    pub blocks: Vec<Matrix>,
}

impl OrthogonalBlock {
    pub fn identity(dims: &[usize]) -> Self {
        OrthogonalBlock { blocks: dims.iter().map(|&m| Matrix::identity(m)).collect() }
    }

    pub fn haar(dims: &[usize], rng: &mut RngStream) -> Self {
        OrthogonalBlock { blocks: dims.iter().map(|&m| haar_orthogonal(m, rng)).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Matrix::rows).collect()
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.blocks.iter().map(Matrix::orthogonality_defect).fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        OrthogonalBlock { blocks: self.blocks.iter().map(Matrix::transpose).collect() }
    }
}

fn check_block_dims(u: &OrthogonalBlock, dims: &[usize]) -> Result<()> {
    if u.blocks.len() != dims.len() {
        return Err(Error::ShapeMismatch { expected: (dims.len(), 1), found: (u.blocks.len(), 1) });
    }
    for (k, (b, &m)) in u.blocks.iter().zip(dims).enumerate() {
        if b.rows() != m || b.cols() != m {
            return Err(Error::BlockDimMismatch { band: k, expected: m, found: b.rows() });
        }
    }
    Ok(())
}

/// Cross-class orientation spread `Σ_k Σ_{d<d'} ‖U_k^{(d)} − U_k^{(d')}‖²`
/// and its gradient with respect to every class's blocks.
pub fn orientation_regularizer(blocks: &[OrthogonalBlock]) -> Result<(f64, Vec<OrthogonalBlock>)> {
    let Some(first) = blocks.first() else {
        return Ok((0.0, Vec::new()));
    };
    let dims = first.dims();
    for b in blocks {
        if b.dims() != dims {
            return Err(Error::DimMismatch);
        }
    }
    let mut penalty = 0.0;
    let mut grads: Vec<OrthogonalBlock> = blocks
        .iter()
        .map(|b| OrthogonalBlock { blocks: b.blocks.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect() })
        .collect();
    for d in 0..blocks.len() {
        for e in d + 1..blocks.len() {
            for k in 0..dims.len() {
                let diff = blocks[d].blocks[k].sub(&blocks[e].blocks[k]);
                penalty += diff.inner(&diff);
                grads[d].blocks[k].axpy(2.0, &diff);
                grads[e].blocks[k].axpy(-2.0, &diff);
            }
        }
    }
    Ok((penalty, grads))
}

/// Per-band orthogonal blocks acting on spectral coefficients. Group
/// elements are basis changes `X_k → X_k W_k`, which send `C_k` to
/// `W_kᵀ C_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandFamily {
    pub j_dims: Vec<usize>,
    /// Reward `weight · Σ_k ‖U_k − O_k‖²` against each of `others`.
    pub regularization: Option<(f64, Vec<OrthogonalBlock>)>,
}

impl BandFamily {
    pub fn new(j_dims: Vec<usize>) -> Self {
        BandFamily { j_dims, regularization: None }
    }

    /// Block dimensions used for `g`: `M_k` on active bands, 0 elsewhere.
    pub fn active_dims(&self, g: &SpectralCoeffs) -> Vec<usize> {
        g.dims().iter().zip(&self.j_dims).map(|(&m, &j)| if j == 0 { 0 } else { m }).collect()
    }

    fn point_rows(&self) -> usize {
        self.j_dims.iter().sum()
    }

    fn bonus_gradient(&self, u: &OrthogonalBlock) -> Option<Vec<Matrix>> {
        let (weight, others) = self.regularization.as_ref()?;
        let mut g: Vec<Matrix> = u.blocks.iter().map(|b| Matrix::zeros(b.rows(), b.cols())).collect();
        for o in others {
            for ((gk, uk), ok) in g.iter_mut().zip(&u.blocks).zip(&o.blocks) {
                if uk.shape() == ok.shape() {
                    gk.axpy(2.0 * weight, &uk.sub(ok));
                }
            }
        }
        Some(g)
    }

    /// Chain rule from a gradient on the padded point back to the blocks.
    fn block_gradient(&self, g: &SpectralCoeffs, gp: &Matrix, u: &OrthogonalBlock) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(u.blocks.len());
        let mut offset = 0;
        for ((c, &j), uk) in g.bands.iter().zip(&self.j_dims).zip(&u.blocks) {
            let m = uk.rows();
            let mut gk = Matrix::zeros(m, m);
            if m > 0 && j > 0 {
                let keep = j.min(m);
                let rows = gp.row_block(offset, offset + keep);
                let partial = rows.matmul_t(c);
                for r in 0..keep {
                    gk.row_mut(r).copy_from_slice(partial.row(r));
                }
            }
            offset += j;
            out.push(gk);
        }
        out
    }
}

impl TransformationFamily for BandFamily {
    type Input = SpectralCoeffs;
    type Transform = OrthogonalBlock;
    type Element = OrthogonalBlock;

    fn sample(&self, g: &SpectralCoeffs, rng: &mut RngStream, count: usize) -> Vec<OrthogonalBlock> {
        let dims = self.active_dims(g);
        (0..count).map(|_| OrthogonalBlock::haar(&dims, rng)).collect()
    }

    fn identity(&self, g: &SpectralCoeffs) -> OrthogonalBlock {
        OrthogonalBlock::identity(&self.active_dims(g))
    }

    fn apply(&self, u: &OrthogonalBlock, g: &SpectralCoeffs) -> Result<Matrix> {
        check_j(&self.j_dims, g.band_count())?;
        check_block_dims(u, &self.active_dims(g))?;
        let mut out = Matrix::zeros(self.point_rows(), g.channels);
        let mut offset = 0;
        for ((c, &j), uk) in g.bands.iter().zip(&self.j_dims).zip(&u.blocks) {
            let keep = j.min(c.rows());
            if keep > 0 {
                let rotated = uk.row_block(0, keep).matmul(c);
                for r in 0..keep {
                    out.row_mut(offset + r).copy_from_slice(rotated.row(r));
                }
            }
            offset += j;
        }
        Ok(out)
    }

    fn bonus(&self, u: &OrthogonalBlock) -> f64 {
        let Some((weight, others)) = &self.regularization else {
            return 0.0;
        };
        let mut total = 0.0;
        for o in others {
            for (uk, ok) in u.blocks.iter().zip(&o.blocks) {
                if uk.shape() == ok.shape() {
                    let d = uk.sub(ok);
                    total += d.inner(&d);
                }
            }
        }
        weight * total
    }

    fn refine(
        &self,
        u: &OrthogonalBlock,
        g: &SpectralCoeffs,
        objective: &PointObjective<'_>,
        settings: RefineSettings,
    ) -> Option<Result<Refinement<OrthogonalBlock>>> {
        let mut f = |blocks: &[Matrix]| {
            let cand = OrthogonalBlock { blocks: blocks.to_vec() };
            let Ok(p) = self.apply(&cand, g) else {
                return (f64::NAN, Vec::new());
            };
            let Some((v, gp)) = objective.value_and_gradient(&p) else {
                return (f64::NAN, Vec::new());
            };
            let mut grads = self.block_gradient(g, &gp, &cand);
            if let Some(bg) = self.bonus_gradient(&cand) {
                for (a, b) in grads.iter_mut().zip(&bg) {
                    a.axpy(1.0, b);
                }
            }
            (v + self.bonus(&cand), grads)
        };
        let r = refine_orthogonal_blocks(&u.blocks, &mut f, settings.steps, settings.step_size);
        Some(r.map(|r| Refinement {
            point: OrthogonalBlock { blocks: r.point },
            value: r.value,
            trajectory: r.trajectory,
            evaluations: r.evaluations,
        }))
    }

    fn compose(&self, u: &OrthogonalBlock, v: &OrthogonalBlock) -> Result<OrthogonalBlock> {
        if u.blocks.len() != v.blocks.len() {
            return Err(Error::ShapeMismatch { expected: (v.blocks.len(), 1), found: (u.blocks.len(), 1) });
        }
        let blocks = u
            .blocks
            .iter()
            .zip(&v.blocks)
            .enumerate()
            .map(|(k, (uk, vk))| {
                if uk.rows() == 0 {
                    Ok(uk.clone())
                } else if uk.rows() != vk.rows() {
                    Err(Error::BlockDimMismatch { band: k, expected: uk.rows(), found: vk.rows() })
                } else {
                    Ok(uk.matmul_t(vk))
                }
            })
            .collect::<Result<_>>()?;
        Ok(OrthogonalBlock { blocks })
    }

    fn inverse(&self, v: &OrthogonalBlock) -> Result<OrthogonalBlock> {
        Ok(v.transpose())
    }

    fn act(&self, v: &OrthogonalBlock, g: &SpectralCoeffs) -> Result<SpectralCoeffs> {
        check_block_dims(v, &g.dims())?;
        let bands = g.bands.iter().zip(&v.blocks).map(|(c, w)| w.t_matmul(c)).collect();
        Ok(SpectralCoeffs { channels: g.channels, bands })
    }
}

/// Layer widths for [`Anlsf::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct AnlsfShape {
    pub phi_hidden: Vec<usize>,
    /// Width of `φ`'s output, the head input.
    pub embedding: usize,
    pub head_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for AnlsfShape {
    fn default() -> Self {
        AnlsfShape { phi_hidden: vec![128], embedding: 128, head_hidden: vec![], activation: Activation::Relu }
    }
}

/// Anisotropic nonlinear spectral filter classifier:
/// `s_d = Ψ_d(φ(pad(U^{(d)} C)))` with `U^{(d)}` chosen per input by
/// prior maximization.
#[derive(Clone, Debug, PartialEq)]
pub struct Anlsf {
    pub net: HeadedModel<FlatMlp>,
    pub family: BandFamily,
    pub prior: Prior,
    /// Weight of the cross-class orientation reward in the search objective.
    pub reg_weight: f64,
}

impl Anlsf {
    pub fn new(
        j_dims: Vec<usize>,
        channels: usize,
        classes: usize,
        shape: &AnlsfShape,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let rows: usize = j_dims.iter().sum();
        if rows == 0 {
            return Err(Error::BadConfig("at least one band must be active"));
        }
        let mut widths = vec![rows * channels];
        widths.extend_from_slice(&shape.phi_hidden);
        widths.push(shape.embedding);
        let phi = FlatMlp::new(rows, channels, Mlp::new(&widths, shape.activation, rng)?)?;
        let heads = (0..classes)
            .map(|_| {
                let mut w = vec![shape.embedding];
                w.extend_from_slice(&shape.head_hidden);
                w.push(1);
                Mlp::new(&w, shape.activation, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Anlsf {
            net: HeadedModel::new(phi, heads)?,
            family: BandFamily::new(j_dims),
            prior: Prior::default(),
            reg_weight: 0.0,
        })
    }

    pub fn j_dims(&self) -> &[usize] {
        &self.family.j_dims
    }

    /// Logit of `class` with the given blocks, no search.
    pub fn forward(&self, g: &SpectralCoeffs, block: &OrthogonalBlock, class: usize) -> Result<f64> {
        let p = self.family.apply(block, g)?;
        Ok(self.net.logits(class, &[&p])?[0])
    }
}

impl MultiClassCanonicalizer for Anlsf {
    type Family = BandFamily;

    fn family(&self) -> &BandFamily {
        &self.family
    }

    fn num_classes(&self) -> usize {
        self.net.num_classes()
    }

    /// Classes are decided in order; with a positive regularization weight
    /// each class is rewarded for differing from the classes before it.
    fn decide_with(
        &self,
        g: &SpectralCoeffs,
        candidates: &[Vec<OrthogonalBlock>],
        budget: &Budget,
    ) -> Result<Vec<CanonDecision<OrthogonalBlock>>> {
        let mut out: Vec<CanonDecision<OrthogonalBlock>> = Vec::with_capacity(self.num_classes());
        for (d, cands) in candidates.iter().enumerate().take(self.num_classes()) {
            let score = crate::canon::ClassScore { model: &self.net, class: d };
            let mut dec = if self.reg_weight > 0.0 && d > 0 {
                let fam = BandFamily {
                    j_dims: self.family.j_dims.clone(),
                    regularization: Some((self.reg_weight, out.iter().map(|x| x.transform.clone()).collect())),
                };
                prior_maximize_over(&fam, &self.prior, &score, g, cands, budget)?
            } else {
                prior_maximize_over(&self.family, &self.prior, &score, g, cands, budget)?
            };
            dec.class = d;
            out.push(dec);
        }
        Ok(out)
    }
}

impl crate::canon::Trainable for Anlsf {
    type Trunk = FlatMlp;

    fn net(&self) -> &HeadedModel<FlatMlp> {
        &self.net
    }

    fn net_mut(&mut self) -> &mut HeadedModel<FlatMlp> {
        &mut self.net
    }
}

/// Maps a `Σ J_k × T'` coefficient matrix back to the node domain:
/// `Σ_k X_k U_kᵀ ĉ_k`, where `ĉ_k` is band `k`'s slice zero-extended to `M_k` rows.
pub fn anlsf_node_synthesis(
    dec: &BandDecomposition,
    block: &OrthogonalBlock,
    j_dims: &[usize],
    coefficients: &Matrix,
) -> Result<Matrix> {
    check_j(j_dims, dec.band_count())?;
    let total: usize = j_dims.iter().sum();
    if coefficients.rows() != total {
        return Err(Error::ShapeMismatch { expected: (total, coefficients.cols()), found: coefficients.shape() });
    }
    let t = coefficients.cols();
    let mut out = Matrix::zeros(dec.n, t);
    let mut offset = 0;
    for (k, &j) in j_dims.iter().enumerate() {
        let x = &dec.bases[k];
        let m = x.cols();
        let keep = j.min(m);
        if keep > 0 {
            let u = &block.blocks[k];
            if u.rows() != m {
                return Err(Error::BlockDimMismatch { band: k, expected: m, found: u.rows() });
            }
            let mut c = Matrix::zeros(m, t);
            for r in 0..keep {
                c.row_mut(r).copy_from_slice(coefficients.row(offset + r));
            }
            out = out.add(&x.matmul(&u.t_matmul(&c)));
        }
        offset += j;
    }
    Ok(out)
}

/// Coefficients, rotation, a coefficient-domain map `φ`, then synthesis.
pub fn synthesize_with(
    dec: &BandDecomposition,
    signal: &Matrix,
    block: &OrthogonalBlock,
    j_dims: &[usize],
    phi: &dyn Fn(&Matrix) -> Matrix,
) -> Result<Matrix> {
    let coeffs = spectral_coefficients(dec, signal)?;
    let fam = BandFamily::new(j_dims.to_vec());
    let p = fam.apply(block, &coeffs)?;
    anlsf_node_synthesis(dec, block, j_dims, &phi(&p))
}
