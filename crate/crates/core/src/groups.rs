//! Sampling and local refinement over the transformation groups: O(m),
//! products of orthogonal blocks, SO(3) and small symmetric groups.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{polar_orthogonal, qr, Matrix};
use crate::rng::RngStream;

/// Default ascent step for the refiners.
pub const DEFAULT_STEP_SIZE: f64 = 0.05;
/// Default number of refinement steps.
pub const DEFAULT_REFINE_STEPS: usize = 10;
/// Step halvings tried before a refinement step is abandoned.
pub const MAX_HALVINGS: usize = 5;
/// Central-difference width for chart gradients on SO(3).
pub const FD_STEP: f64 = 1e-5;

/// Haar-distributed element of O(m): QR of an i.i.d. Gaussian matrix with
/// `diag(r) > 0`.
pub fn haar_orthogonal(m: usize, rng: &mut RngStream) -> Matrix {
    if m == 0 {
        return Matrix::zeros(0, 0);
    }
    loop {
        let g = Matrix::from_fn(m, m, |_, _| rng.normal());
        match qr(&g) {
            Ok((q, _)) => return q,
            // Probability zero; redraw.
            Err(_) => continue,
        }
    }
}

/// A 3×3 rotation matrix (`RᵀR = I`, `det R = +1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation3(Matrix);

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Matrix::identity(3))
    }

    /// Validates orthogonality and orientation within `1e-10`.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.shape() != (3, 3) {
            return Err(Error::ShapeMismatch { expected: (3, 3), found: m.shape() });
        }
        let det = m.determinant()?;
        if m.orthogonality_defect() > 1e-10 || (det - 1.0).abs() > 1e-10 {
            return Err(Error::BadConfig("matrix is not a rotation"));
        }
        Ok(Rotation3(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn inverse(&self) -> Rotation3 {
        Rotation3(self.0.transpose())
    }

    /// `self · other`.
    pub fn compose(&self, other: &Rotation3) -> Rotation3 {
        Rotation3(self.0.matmul(&other.0))
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = m[(i, 0)] * p[0] + m[(i, 1)] * p[1] + m[(i, 2)] * p[2];
        }
        out
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        libm::acos(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisAngle {
    axis: [f64; 3],
    angle: f64,
}

impl AxisAngle {
    /// Normalizes `axis`; the angle must lie in `[0, π]`.
    pub fn new(axis: [f64; 3], angle: f64) -> Result<Self> {
        let norm = libm::sqrt(axis.iter().map(|a| a * a).sum());
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::BadConfig("axis must be a non-zero finite vector"));
        }
        if !(0.0..=PI).contains(&angle) {
            return Err(Error::BadConfig("angle must lie in [0, pi]"));
        }
        Ok(AxisAngle { axis: [axis[0] / norm, axis[1] / norm, axis[2] / norm], angle })
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

fn skew(w: [f64; 3]) -> Matrix {
    Matrix::from_rows(&[[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
}

/// Rodrigues' formula `I + sin θ K + (1 − cos θ) K²`.
pub fn rotation_from_axis_angle(p: &AxisAngle) -> Rotation3 {
    let k = skew(p.axis);
    let k2 = k.matmul(&k);
    let mut r = Matrix::identity(3);
    r.axpy(libm::sin(p.angle), &k);
    r.axpy(1.0 - libm::cos(p.angle), &k2);
    Rotation3(r)
}

/// `exp([w]×)` for an arbitrary rotation vector.
pub fn exp_so3(w: [f64; 3]) -> Rotation3 {
    let theta = libm::sqrt(w.iter().map(|a| a * a).sum());
    if theta < 1e-300 {
        return Rotation3::identity();
    }
    let k = skew([w[0] / theta, w[1] / theta, w[2] / theta]);
    let k2 = k.matmul(&k);
    let mut r = Matrix::identity(3);
    r.axpy(libm::sin(theta), &k);
    r.axpy(1.0 - libm::cos(theta), &k2);
    Rotation3(r)
}

/// Uniform rotation: a Haar O(3) draw with the first column negated when
/// the determinant is −1.
pub fn haar_rotation3(rng: &mut RngStream) -> Rotation3 {
    let mut q = haar_orthogonal(3, rng);
    if q.determinant().unwrap_or(1.0) < 0.0 {
        for i in 0..3 {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    Rotation3(q)
}

/// Outcome of a monotone-best local refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement<T> {
    pub point: T,
    pub value: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub trajectory: Vec<f64>,
    /// Objective evaluations spent (value-only and value+gradient calls).
    pub evaluations: usize,
}

/// Differentiable objective over a tuple of orthogonal blocks: the value
/// together with the Euclidean gradient, one matrix per block.
pub trait BlockObjective {
    fn value_and_gradient(&mut self, blocks: &[Matrix]) -> (f64, Vec<Matrix>);
}

impl<F: FnMut(&[Matrix]) -> (f64, Vec<Matrix>)> BlockObjective for F {
    fn value_and_gradient(&mut self, blocks: &[Matrix]) -> (f64, Vec<Matrix>) {
        self(blocks)
    }
}

fn all_finite(g: &[Matrix]) -> bool {
    g.iter().all(Matrix::is_finite)
}

/// Projected gradient ascent on `O(m_1) × … × O(m_B)`: each step moves along
/// the Euclidean gradient and retracts every block with
/// [`polar_orthogonal`]. A trial point that would lower the objective is
/// retried with half the step size, up to [`MAX_HALVINGS`] times; after that
/// the best iterate so far is returned. Every trial point costs one
/// objective evaluation, which also supplies the gradient for the next step.
/// The iteration itself is not meant to be differentiated through.
pub fn refine_orthogonal_blocks(
    start: &[Matrix],
    objective: &mut dyn BlockObjective,
    steps: usize,
    step_size: f64,
) -> Result<Refinement<Vec<Matrix>>> {
    let mut current: Vec<Matrix> = start.to_vec();
    let (mut value, mut grad) = objective.value_and_gradient(&current);
    let mut evaluations = 1;
    if steps == 0 {
        return Ok(Refinement { point: current, value, trajectory: vec![value], evaluations });
    }
    if !all_finite(&grad) {
        return Err(Error::NonFiniteGradient);
    }
    let mut trajectory = vec![value];
    let mut eta = step_size;
    for _ in 0..steps {
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Option<Vec<Matrix>> = current
                .iter()
                .zip(&grad)
                .map(|(u, g)| {
                    let mut moved = u.clone();
                    moved.axpy(eta, g);
                    polar_orthogonal(&moved).ok()
                })
                .collect();
            if let Some(trial) = trial {
                let (v, g) = objective.value_and_gradient(&trial);
                evaluations += 1;
                if v.is_finite() && v >= value && all_finite(&g) {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((next, v, g)) = accepted else { break };
        current = next;
        value = v;
        grad = g;
        trajectory.push(value);
    }
    Ok(Refinement { point: current, value, trajectory, evaluations })
}

/// Single-block form of [`refine_orthogonal_blocks`]. `objective` returns
/// the value and the Euclidean gradient at a point of O(m).
pub fn refine_orthogonal(
    u0: &Matrix,
    objective: &mut dyn FnMut(&Matrix) -> (f64, Matrix),
    steps: usize,
    step_size: f64,
) -> Result<Refinement<Matrix>> {
    let mut wrapped = |blocks: &[Matrix]| {
        let (v, g) = objective(&blocks[0]);
        (v, vec![g])
    };
    let r = refine_orthogonal_blocks(core::slice::from_ref(u0), &mut wrapped, steps, step_size)?;
    Ok(Refinement {
        point: r.point.into_iter().next().expect("one block"),
        value: r.value,
        trajectory: r.trajectory,
        evaluations: r.evaluations,
    })
}

/// Objective on SO(3). Supplying the Euclidean gradient is optional; without
/// it the chart gradient falls back to central finite differences.
pub trait RotationObjective {
    fn value(&mut self, r: &Rotation3) -> f64;
    fn value_and_gradient(&mut self, _r: &Rotation3) -> Option<(f64, Matrix)> {
        None
    }
}

impl<F: FnMut(&Rotation3) -> f64> RotationObjective for F {
    fn value(&mut self, r: &Rotation3) -> f64 {
        self(r)
    }
}

/// Gradient of `ω ↦ f(exp([ω]×)·R)` at `ω = 0` given the Euclidean gradient
/// `G` of `f` at `R`.
pub fn chart_gradient(r: &Rotation3, euclidean: &Matrix) -> [f64; 3] {
    let a = r.0.matmul_t(euclidean);
    [a[(1, 2)] - a[(2, 1)], a[(2, 0)] - a[(0, 2)], a[(0, 1)] - a[(1, 0)]]
}

fn fd_chart_gradient(objective: &mut dyn RotationObjective, r: &Rotation3) -> [f64; 3] {
    let mut grad = [0.0; 3];
    for (i, slot) in grad.iter_mut().enumerate() {
        let mut w = [0.0; 3];
        w[i] = FD_STEP;
        let plus = objective.value(&exp_so3(w).compose(r));
        w[i] = -FD_STEP;
        let minus = objective.value(&exp_so3(w).compose(r));
        *slot = (plus - minus) / (2.0 * FD_STEP);
    }
    grad
}

/// Value and chart gradient at `r`. The gradient is `None` when the value
/// is not finite or falls below `threshold`, so no finite differences are
/// spent on points that will be rejected.
fn evaluate_rotation(
    objective: &mut dyn RotationObjective,
    r: &Rotation3,
    threshold: f64,
    evaluations: &mut usize,
) -> (f64, Option<[f64; 3]>) {
    *evaluations += 1;
    if let Some((v, g)) = objective.value_and_gradient(r) {
        return (v, Some(chart_gradient(r, &g)));
    }
    let v = objective.value(r);
    if !v.is_finite() || v < threshold {
        return (v, None);
    }
    *evaluations += 6;
    (v, Some(fd_chart_gradient(objective, r)))
}

/// Gradient ascent on SO(3) through left axis-angle increments
/// `R ← exp([η∇])·R`, with the same monotone-best contract as
/// [`refine_orthogonal_blocks`]. Without an analytic gradient every
/// accepted point costs six extra evaluations for central differences.
pub fn refine_rotation3(
    r0: &Rotation3,
    objective: &mut dyn RotationObjective,
    steps: usize,
    step_size: f64,
) -> Result<Refinement<Rotation3>> {
    let mut evaluations = 0;
    if steps == 0 {
        let value = objective.value(r0);
        return Ok(Refinement { point: r0.clone(), value, trajectory: vec![value], evaluations: 1 });
    }
    let mut current = r0.clone();
    let (mut value, grad) = evaluate_rotation(objective, &current, f64::NEG_INFINITY, &mut evaluations);
    let mut grad = match grad {
        Some(g) if g.iter().all(|x| x.is_finite()) => g,
        _ => return Err(Error::NonFiniteGradient),
    };
    let mut trajectory = vec![value];
    let mut eta = step_size;
    for _ in 0..steps {
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let w = [eta * grad[0], eta * grad[1], eta * grad[2]];
            let moved = exp_so3(w).compose(&current);
            // Re-project so round-off never accumulates across steps.
            let trial = polar_orthogonal(&moved.0).map(Rotation3).unwrap_or(moved);
            let (v, g) = evaluate_rotation(objective, &trial, value, &mut evaluations);
            match g {
                Some(g) if v >= value && g.iter().all(|x| x.is_finite()) => {
                    accepted = Some((trial, v, g));
                    break;
                }
                _ => eta *= 0.5,
            }
        }
        let Some((next, v, g)) = accepted else { break };
        current = next;
        value = v;
        grad = g;
        trajectory.push(value);
    }
    Ok(Refinement { point: current, value, trajectory, evaluations })
}

/// A bijection on `{0, …, n−1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::BadConfig("mapping is not a bijection"));
            }
            seen[m] = true;
        }
        Ok(Permutation(mapping))
    }

    pub fn random(n: usize, rng: &mut RngStream) -> Self {
        let mut m: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut m);
        Permutation(m)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &m) in self.0.iter().enumerate() {
            inv[m] = i;
        }
        Permutation(inv)
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation(other.0.iter().map(|&i| self.0[i]).collect())
    }

    /// Row `i` of the output is row `mapping[i]` of `m`.
    pub fn permute_rows(&self, m: &Matrix) -> Matrix {
        assert_eq!(self.0.len(), m.rows());
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for (i, &src) in self.0.iter().enumerate() {
            out.row_mut(i).copy_from_slice(m.row(src));
        }
        out
    }
}

/// Largest `n` accepted by [`enumerate_permutations`].
pub const MAX_ENUMERATION: usize = 8;

/// All `n!` permutations in lexicographic order.
pub fn enumerate_permutations(n: usize) -> Result<Vec<Permutation>> {
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge { n, max: MAX_ENUMERATION });
    }
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![Permutation(current.clone())];
    while next_permutation(&mut current) {
        out.push(Permutation(current.clone()));
    }
    Ok(out)
}

fn next_permutation(a: &mut [usize]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = a.len() - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}
