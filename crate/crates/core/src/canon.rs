//! Prior maximization: pick, for every class, the transform whose
//! canonicalized input receives the highest prior value of that class's
//! logit, then predict the class with the largest logit.
//!
//! The engine is generic over a [`TransformationFamily`]. Canonical points
//! are always matrices, which keeps scores and gradients uniform across the
//! graph, point-cloud and permutation families. The module also carries the
//! finite-resolution property checks used throughout the test suites:
//! the max-difference inequality ([`lipschitz_oracle`]), invariance under
//! group actions ([`invariance_oracle`]) and a perturbation probe
//! ([`continuity_probe`]).

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::groups::{enumerate_permutations, Permutation, Refinement};
use crate::linalg::Matrix;
use crate::nn::{CanonicalExample, HeadedModel, Trunk};
use crate::rng::RngStream;

/// A scalar score of a canonical point, typically the logit of one class.
pub trait Score {
    fn value(&self, p: &Matrix) -> f64;

    /// Value with its gradient with respect to `p`, when available.
    fn value_and_gradient(&self, _p: &Matrix) -> Option<(f64, Matrix)> {
        None
    }

    /// Batched evaluation; models with a faster batched path override this.
    fn values(&self, points: &[Matrix]) -> Vec<f64> {
        points.iter().map(|p| self.value(p)).collect()
    }
}

impl<F: Fn(&Matrix) -> f64> Score for F {
    fn value(&self, p: &Matrix) -> f64 {
        self(p)
    }
}

/// Class `d` of a [`HeadedModel`] seen as a score on canonical points.
pub struct ClassScore<'a, T> {
    pub model: &'a HeadedModel<T>,
    pub class: usize,
}

impl<T: Trunk> Score for ClassScore<'_, T> {
    fn value(&self, p: &Matrix) -> f64 {
        self.model.logits(self.class, &[p]).map_or(f64::NAN, |v| v[0])
    }

    fn value_and_gradient(&self, p: &Matrix) -> Option<(f64, Matrix)> {
        self.model.logit_and_input_gradient(self.class, p).ok()
    }

    fn values(&self, points: &[Matrix]) -> Vec<f64> {
        let refs: Vec<&Matrix> = points.iter().collect();
        self.model
            .logits(self.class, &refs)
            .unwrap_or_else(|_| vec![f64::NAN; points.len()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorTransform {
    Identity,
    Sigmoid,
    Tanh,
}

/// Monotone map `h` applied to a raw logit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prior {
    pub direction: Direction,
    pub transform: PriorTransform,
}

impl Default for Prior {
    fn default() -> Self {
        Prior { direction: Direction::Ascending, transform: PriorTransform::Identity }
    }
}

impl Prior {
    pub fn new(direction: Direction, transform: PriorTransform) -> Self {
        Prior { direction, transform }
    }

    /// `h(s)`.
    pub fn value(&self, s: f64) -> f64 {
        match self.transform {
            PriorTransform::Identity => s,
            PriorTransform::Sigmoid => crate::nn::sigmoid(s),
            PriorTransform::Tanh => libm::tanh(s),
        }
    }

    /// `h'(s)`.
    pub fn derivative(&self, s: f64) -> f64 {
        match self.transform {
            PriorTransform::Identity => 1.0,
            PriorTransform::Sigmoid => {
                let p = crate::nn::sigmoid(s);
                p * (1.0 - p)
            }
            PriorTransform::Tanh => {
                let t = libm::tanh(s);
                1.0 - t * t
            }
        }
    }

    fn sign(&self) -> f64 {
        match self.direction {
            Direction::Ascending => 1.0,
            Direction::Descending => -1.0,
        }
    }

    /// The quantity actually maximized: `h(s)`, negated for descending priors.
    pub fn objective(&self, s: f64) -> f64 {
        self.sign() * self.value(s)
    }

    pub fn objective_derivative(&self, s: f64) -> f64 {
        self.sign() * self.derivative(s)
    }
}

/// A score composed with a prior, evaluated on canonical points.
pub struct PointObjective<'a> {
    pub score: &'a dyn Score,
    pub prior: &'a Prior,
}

impl PointObjective<'_> {
    /// Returns `(objective, raw logit)`.
    pub fn value(&self, p: &Matrix) -> (f64, f64) {
        let s = self.score.value(p);
        (self.prior.objective(s), s)
    }

    pub fn value_and_gradient(&self, p: &Matrix) -> Option<(f64, Matrix)> {
        let (s, g) = self.score.value_and_gradient(p)?;
        Some((self.prior.objective(s), g.scale(self.prior.objective_derivative(s))))
    }
}

/// The settings a refinement call needs from the budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineSettings {
    pub steps: usize,
    pub step_size: f64,
}

/// A parameterized family of input transforms `κ_u`.
pub trait TransformationFamily {
    type Input;
    type Transform: Clone;
    /// Group elements acting on inputs.
    type Element: Clone;

    /// `count` candidates. Implementations draw them sequentially from `rng`
    /// so the first `k` of a larger draw equal a draw of `k`.
    fn sample(&self, g: &Self::Input, rng: &mut RngStream, count: usize) -> Vec<Self::Transform>;

    fn identity(&self, g: &Self::Input) -> Self::Transform;

    fn apply(&self, u: &Self::Transform, g: &Self::Input) -> Result<Matrix>;

    /// Objective term that depends on the transform alone.
    fn bonus(&self, _u: &Self::Transform) -> f64 {
        0.0
    }

    /// Local ascent on `objective(apply(u, g)) + bonus(u)`. `None` when the
    /// family has no refinement.
    fn refine(
        &self,
        _u: &Self::Transform,
        _g: &Self::Input,
        _objective: &PointObjective<'_>,
        _settings: RefineSettings,
    ) -> Option<Result<Refinement<Self::Transform>>> {
        None
    }

    /// `compose(u, v)` satisfies `apply(compose(u, v), g) = apply(u, act(v, g))`.
    fn compose(&self, _u: &Self::Transform, _v: &Self::Element) -> Result<Self::Transform> {
        Err(Error::ComposeUnsupported)
    }

    fn inverse(&self, _v: &Self::Element) -> Result<Self::Element> {
        Err(Error::ComposeUnsupported)
    }

    fn act(&self, _v: &Self::Element, _g: &Self::Input) -> Result<Self::Input> {
        Err(Error::ComposeUnsupported)
    }
}

/// Families whose transform set is small enough to list.
pub trait FiniteFamily: TransformationFamily {
    fn enumerate(&self, g: &Self::Input) -> Result<Vec<Self::Transform>>;
}

/// Search budget for one prior maximization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    /// Number of candidates, `K ≥ 1`.
    pub candidates: usize,
    pub refine_steps: usize,
    pub step_size: f64,
    /// Refine only the best sampled candidate instead of all of them.
    pub refine_top_only: bool,
    /// Use the identity as candidate 0 and draw the remaining `K − 1`.
    pub include_identity: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            candidates: 8,
            refine_steps: crate::groups::DEFAULT_REFINE_STEPS,
            step_size: crate::groups::DEFAULT_STEP_SIZE,
            refine_top_only: false,
            include_identity: false,
        }
    }
}

impl Budget {
    pub fn sampling(candidates: usize) -> Self {
        Budget { candidates, refine_steps: 0, ..Budget::default() }
    }

    /// The frozen identity canonicalization: one candidate, no search.
    pub fn identity_only() -> Self {
        Budget { candidates: 1, refine_steps: 0, include_identity: true, ..Budget::default() }
    }

    fn settings(&self) -> RefineSettings {
        RefineSettings { steps: self.refine_steps, step_size: self.step_size }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonDecision<T> {
    pub class: usize,
    pub transform: T,
    /// Raw logit `s_d` at the chosen transform.
    pub logit: f64,
    /// `h_d(s_d)`.
    pub prior_value: f64,
    /// Maximized quantity, including any family bonus.
    pub objective: f64,
    pub candidate_index: usize,
    /// Objective improvement contributed by refinement.
    pub refine_gain: f64,
    /// Score evaluations spent, sampling and refinement together.
    pub evaluations: usize,
}

/// Draws the candidate set for a budget.
pub fn draw_candidates<F: TransformationFamily>(
    fam: &F,
    g: &F::Input,
    budget: &Budget,
    rng: &mut RngStream,
) -> Result<Vec<F::Transform>> {
    if budget.candidates == 0 {
        return Err(Error::BadConfig("the candidate budget must be at least 1"));
    }
    if budget.include_identity {
        let mut out = vec![fam.identity(g)];
        out.extend(fam.sample(g, rng, budget.candidates - 1));
        Ok(out)
    } else {
        Ok(fam.sample(g, rng, budget.candidates))
    }
}

/// Samples candidates from `rng` and maximizes over them.
pub fn prior_maximize<F: TransformationFamily>(
    fam: &F,
    prior: &Prior,
    score: &dyn Score,
    g: &F::Input,
    budget: &Budget,
    rng: &mut RngStream,
) -> Result<CanonDecision<F::Transform>> {
    let candidates = draw_candidates(fam, g, budget, rng)?;
    prior_maximize_over(fam, prior, score, g, &candidates, budget)
}

struct Scored<T> {
    index: usize,
    transform: T,
    objective: f64,
    sampled_objective: f64,
    evaluations: usize,
}

/// Maximizes over an explicit candidate list. Candidates whose score is not
/// finite are skipped; ties go to the lowest candidate index.
pub fn prior_maximize_over<F: TransformationFamily>(
    fam: &F,
    prior: &Prior,
    score: &dyn Score,
    g: &F::Input,
    candidates: &[F::Transform],
    budget: &Budget,
) -> Result<CanonDecision<F::Transform>> {
    if candidates.is_empty() {
        return Err(Error::BadConfig("the candidate budget must be at least 1"));
    }
    let points = candidates.iter().map(|u| fam.apply(u, g)).collect::<Result<Vec<_>>>()?;
    let logits = score.values(&points);
    let mut scored: Vec<Scored<F::Transform>> = Vec::with_capacity(candidates.len());
    for (i, (u, &s)) in candidates.iter().zip(&logits).enumerate() {
        let obj = prior.objective(s) + fam.bonus(u);
        if obj.is_finite() {
            scored.push(Scored {
                index: i,
                transform: u.clone(),
                objective: obj,
                sampled_objective: obj,
                evaluations: 1,
            });
        }
    }
    if scored.is_empty() {
        return Err(Error::NonFiniteScore);
    }

    if budget.refine_steps > 0 {
        let objective = PointObjective { score, prior };
        let top = best_index(&scored);
        for (pos, cand) in scored.iter_mut().enumerate() {
            if budget.refine_top_only && pos != top {
                continue;
            }
            if let Some(Ok(r)) = fam.refine(&cand.transform, g, &objective, budget.settings()) {
                cand.evaluations += r.evaluations;
                if r.value.is_finite() && r.value >= cand.objective {
                    cand.transform = r.point;
                    cand.objective = r.value;
                }
            }
        }
    }

    let best = best_index(&scored);
    let evaluations = scored.iter().map(|c| c.evaluations).sum::<usize>()
        + (candidates.len() - scored.len());
    let chosen = scored.swap_remove(best);
    let point = fam.apply(&chosen.transform, g)?;
    let logit = score.value(&point);
    Ok(CanonDecision {
        class: 0,
        prior_value: prior.value(logit),
        logit,
        objective: chosen.objective,
        candidate_index: chosen.index,
        refine_gain: chosen.objective - chosen.sampled_objective,
        evaluations,
        transform: chosen.transform,
    })
}

fn best_index<T>(scored: &[Scored<T>]) -> usize {
    let mut best = 0;
    for (i, c) in scored.iter().enumerate().skip(1) {
        if c.objective > scored[best].objective {
            best = i;
        }
    }
    best
}

/// Argmax over raw logits, ties to the lowest class id. `decisions[d]` must
/// belong to class `d`.
pub fn one_vs_rest_decide<T>(decisions: &[CanonDecision<T>], num_classes: usize) -> Result<usize> {
    if num_classes < 2 {
        return Err(Error::BadConfig("one-vs-rest needs at least two classes"));
    }
    for class in 0..num_classes {
        match decisions.get(class) {
            Some(d) if d.class == class => {}
            _ => return Err(Error::MissingClass { class }),
        }
    }
    Ok(argmax_lowest(decisions[..num_classes].iter().map(|d| d.logit)))
}

/// Index of the largest value, ties to the lowest index; NaN never wins.
pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// A per-class canonicalizing classifier: one family and one score per class.
pub trait MultiClassCanonicalizer {
    type Family: TransformationFamily;

    fn family(&self) -> &Self::Family;
    fn num_classes(&self) -> usize;

    /// Decides every class from explicit per-class candidate lists.
    fn decide_with(
        &self,
        g: &<Self::Family as TransformationFamily>::Input,
        candidates: &[Vec<<Self::Family as TransformationFamily>::Transform>],
        budget: &Budget,
    ) -> Result<Vec<CanonDecision<<Self::Family as TransformationFamily>::Transform>>>;

    /// Per-class candidate lists, class `d` drawn from `rng.derive([d])`.
    fn draw_all(
        &self,
        g: &<Self::Family as TransformationFamily>::Input,
        budget: &Budget,
        rng: &RngStream,
    ) -> Result<Vec<Vec<<Self::Family as TransformationFamily>::Transform>>> {
        (0..self.num_classes())
            .map(|d| draw_candidates(self.family(), g, budget, &mut rng.derive(&[d as u64])))
            .collect()
    }

    fn decide(
        &self,
        g: &<Self::Family as TransformationFamily>::Input,
        budget: &Budget,
        rng: &RngStream,
    ) -> Result<Vec<CanonDecision<<Self::Family as TransformationFamily>::Transform>>> {
        let candidates = self.draw_all(g, budget, rng)?;
        self.decide_with(g, &candidates, budget)
    }

    fn classify(
        &self,
        g: &<Self::Family as TransformationFamily>::Input,
        budget: &Budget,
        rng: &RngStream,
    ) -> Result<usize> {
        one_vs_rest_decide(&self.decide(g, budget, rng)?, self.num_classes())
    }
}

/// A plain ensemble: shared family and prior, independent class scores.
pub struct ScoreEnsemble<'a, F> {
    pub family: F,
    pub prior: Prior,
    pub scores: Vec<Box<dyn Score + 'a>>,
}

impl<F: TransformationFamily> MultiClassCanonicalizer for ScoreEnsemble<'_, F> {
    type Family = F;

    fn family(&self) -> &F {
        &self.family
    }

    fn num_classes(&self) -> usize {
        self.scores.len()
    }

    fn decide_with(
        &self,
        g: &F::Input,
        candidates: &[Vec<F::Transform>],
        budget: &Budget,
    ) -> Result<Vec<CanonDecision<F::Transform>>> {
        self.scores
            .iter()
            .zip(candidates)
            .enumerate()
            .map(|(d, (s, c))| {
                let mut dec = prior_maximize_over(&self.family, &self.prior, s.as_ref(), g, c, budget)?;
                dec.class = d;
                Ok(dec)
            })
            .collect()
    }
}

/// No search at all: the input matrix is its own canonical point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IdentityFamily;

impl TransformationFamily for IdentityFamily {
    type Input = Matrix;
    type Transform = ();
    type Element = ();

    fn sample(&self, _g: &Matrix, _rng: &mut RngStream, count: usize) -> Vec<()> {
        vec![(); count]
    }

    fn identity(&self, _g: &Matrix) {}

    fn apply(&self, _u: &(), g: &Matrix) -> Result<Matrix> {
        Ok(g.clone())
    }

    fn compose(&self, _u: &(), _v: &()) -> Result<()> {
        Ok(())
    }

    fn inverse(&self, _v: &()) -> Result<()> {
        Ok(())
    }

    fn act(&self, _v: &(), g: &Matrix) -> Result<Matrix> {
        Ok(g.clone())
    }
}

/// A canonicalizer whose class scores are the heads of one trainable
/// [`HeadedModel`].
pub trait Trainable: MultiClassCanonicalizer {
    type Trunk: Trunk;

    fn net(&self) -> &HeadedModel<Self::Trunk>;
    fn net_mut(&mut self) -> &mut HeadedModel<Self::Trunk>;

    /// Canonicalizes `g` for every class and returns the chosen points as a
    /// training example, along with the decisions.
    #[allow(clippy::type_complexity)]
    fn canonical_example(
        &self,
        g: &<Self::Family as TransformationFamily>::Input,
        label: usize,
        budget: &Budget,
        rng: &RngStream,
    ) -> Result<(CanonicalExample, Vec<CanonDecision<<Self::Family as TransformationFamily>::Transform>>)> {
        let decisions = self.decide(g, budget, rng)?;
        let points = decisions
            .iter()
            .map(|d| self.family().apply(&d.transform, g))
            .collect::<Result<Vec<_>>>()?;
        Ok((CanonicalExample { points, label }, decisions))
    }
}

/// Shared trunk, one head per class, one family: the plain adaptive
/// canonicalization classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadedClassifier<T, F> {
    pub net: HeadedModel<T>,
    pub family: F,
    pub prior: Prior,
}

impl<T: Trunk, F: TransformationFamily> MultiClassCanonicalizer for HeadedClassifier<T, F> {
    type Family = F;

    fn family(&self) -> &F {
        &self.family
    }

    fn num_classes(&self) -> usize {
        self.net.num_classes()
    }

    fn decide_with(
        &self,
        g: &F::Input,
        candidates: &[Vec<F::Transform>],
        budget: &Budget,
    ) -> Result<Vec<CanonDecision<F::Transform>>> {
        (0..self.num_classes())
            .zip(candidates)
            .map(|(d, c)| {
                let score = ClassScore { model: &self.net, class: d };
                let mut dec = prior_maximize_over(&self.family, &self.prior, &score, g, c, budget)?;
                dec.class = d;
                Ok(dec)
            })
            .collect()
    }
}

impl<T: Trunk, F: TransformationFamily> Trainable for HeadedClassifier<T, F> {
    type Trunk = T;

    fn net(&self) -> &HeadedModel<T> {
        &self.net
    }

    fn net_mut(&mut self) -> &mut HeadedModel<T> {
        &mut self.net
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvarianceMode {
    /// Candidates for the acted input are the original ones composed with `v⁻¹`.
    OrbitConsistent,
    /// Candidates for the acted input are drawn independently.
    Resampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub prediction: usize,
    pub acted_prediction: usize,
    pub agree: bool,
    /// Largest per-class logit difference.
    pub max_logit_delta: f64,
}

/// Compares the classifier's decision on `g` with its decision on `act(v, g)`.
pub fn invariance_oracle<C: MultiClassCanonicalizer>(
    model: &C,
    g: &<C::Family as TransformationFamily>::Input,
    v: &<C::Family as TransformationFamily>::Element,
    mode: InvarianceMode,
    budget: &Budget,
    rng: &RngStream,
) -> Result<InvarianceReport> {
    let fam = model.family();
    let acted = fam.act(v, g)?;
    let candidates = model.draw_all(g, budget, rng)?;
    let acted_candidates = match mode {
        InvarianceMode::OrbitConsistent => {
            let v_inv = fam.inverse(v)?;
            candidates
                .iter()
                .map(|c| c.iter().map(|u| fam.compose(u, &v_inv)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?
        }
        InvarianceMode::Resampled => model.draw_all(&acted, budget, &rng.derive(&[u64::MAX]))?,
    };
    let before = model.decide_with(g, &candidates, budget)?;
    let after = model.decide_with(&acted, &acted_candidates, budget)?;
    let prediction = one_vs_rest_decide(&before, model.num_classes())?;
    let acted_prediction = one_vs_rest_decide(&after, model.num_classes())?;
    let max_logit_delta =
        before.iter().zip(&after).map(|(a, b)| (a.logit - b.logit).abs()).fold(0.0, f64::max);
    Ok(InvarianceReport {
        prediction,
        acted_prediction,
        agree: prediction == acted_prediction,
        max_logit_delta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzReport {
    /// `|max_u f(κ_u g) − max_u y(κ_u g)|`.
    pub lhs: f64,
    /// `max_u |f(κ_u g) − y(κ_u g)|`.
    pub rhs: f64,
    pub holds: bool,
}

/// Slack allowed by [`lipschitz_oracle`].
pub const LIPSCHITZ_SLACK: f64 = 1e-12;

/// Exact maxima over an enumerable family, compared pointwise.
pub fn lipschitz_oracle<F: FiniteFamily>(
    fam: &F,
    f: &dyn Score,
    y: &dyn Score,
    g: &F::Input,
) -> Result<LipschitzReport> {
    let all = fam.enumerate(g)?;
    if all.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut fmax, mut ymax, mut rhs) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    for u in &all {
        let p = fam.apply(u, g)?;
        let (a, b) = (f.value(&p), y.value(&p));
        fmax = fmax.max(a);
        ymax = ymax.max(b);
        rhs = rhs.max((a - b).abs());
    }
    let lhs = (fmax - ymax).abs();
    Ok(LipschitzReport { lhs, rhs, holds: lhs <= rhs + LIPSCHITZ_SLACK })
}

/// Inputs that admit a random additive perturbation of prescribed size.
pub trait Perturb: Sized {
    /// `self + δ` with `‖δ‖ = eps` along a random direction.
    fn perturbed(&self, eps: f64, rng: &mut RngStream) -> Self;
}

impl Perturb for Matrix {
    fn perturbed(&self, eps: f64, rng: &mut RngStream) -> Self {
        let dir = Matrix::from_fn(self.rows(), self.cols(), |_, _| rng.normal());
        let norm = dir.frobenius_norm();
        let mut out = self.clone();
        if norm > 0.0 {
            out.axpy(eps / norm, &dir);
        }
        out
    }
}

/// For each `ε`, the change of the best prior objective over a fixed
/// candidate set when `g` moves by `ε` in a random direction.
pub fn continuity_probe<F>(
    fam: &F,
    prior: &Prior,
    score: &dyn Score,
    g: &F::Input,
    candidates: &[F::Transform],
    epsilons: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<(f64, f64)>>
where
    F: TransformationFamily,
    F::Input: Perturb,
{
    let best = |input: &F::Input| -> Result<f64> {
        let budget = Budget { candidates: candidates.len(), refine_steps: 0, ..Budget::default() };
        Ok(prior_maximize_over(fam, prior, score, input, candidates, &budget)?.objective)
    };
    let base = best(g)?;
    epsilons
        .iter()
        .map(|&eps| {
            let moved = g.perturbed(eps, rng);
            Ok((eps, (best(&moved)? - base).abs()))
        })
        .collect()
}

/// Row permutations of an `n × c` point matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PermutationFamily {
    pub n: usize,
}

impl TransformationFamily for PermutationFamily {
    type Input = Matrix;
    type Transform = Permutation;
    type Element = Permutation;

    fn sample(&self, _g: &Matrix, rng: &mut RngStream, count: usize) -> Vec<Permutation> {
        (0..count).map(|_| Permutation::random(self.n, rng)).collect()
    }

    fn identity(&self, _g: &Matrix) -> Permutation {
        Permutation::identity(self.n)
    }

    fn apply(&self, u: &Permutation, g: &Matrix) -> Result<Matrix> {
        if g.rows() != self.n || u.len() != self.n {
            return Err(Error::ShapeMismatch { expected: (self.n, g.cols()), found: g.shape() });
        }
        Ok(u.permute_rows(g))
    }

    fn compose(&self, u: &Permutation, v: &Permutation) -> Result<Permutation> {
        Ok(v.compose(u))
    }

    fn inverse(&self, v: &Permutation) -> Result<Permutation> {
        Ok(v.inverse())
    }

    fn act(&self, v: &Permutation, g: &Matrix) -> Result<Matrix> {
        self.apply(v, g)
    }
}

impl FiniteFamily for PermutationFamily {
    fn enumerate(&self, _g: &Matrix) -> Result<Vec<Permutation>> {
        enumerate_permutations(self.n)
    }
}
