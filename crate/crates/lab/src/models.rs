//! A closed set of the models the harness can train, behind one enum so the
//! CLI, checkpoints and cross-validation can treat them uniformly.

use anisocanon::canon::{Budget, HeadedClassifier, IdentityFamily, Prior};
use anisocanon::nn::{Activation, HeadedModel, Mlp, Parameterized, PoolMode};
use anisocanon::pointcloud::{ac_point_classifier, AcPointClassifier, Dgcnn, SetNet};
use anisocanon::spectral::{Anlsf, AnlsfShape, SpectralCoeffs};
use anisocanon::{Matrix, RngStream};

use crate::config::{ExperimentConfig, ModelId};
use crate::error::{LabError, LabResult};
use crate::train::{evaluate, train_one_vs_rest, Evaluation, TrainConfig, TrainOutcome};

pub type NodeMlp = HeadedClassifier<SetNet, IdentityFamily>;

#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Anlsf(Anlsf),
    NodeMlp(NodeMlp),
    Set(AcPointClassifier<SetNet>),
    Dgcnn(AcPointClassifier<Dgcnn>),
}

/// Model inputs, one per sample.
#[derive(Clone, Debug)]
pub enum Inputs {
    Spectral(Vec<SpectralCoeffs>),
    Matrices(Vec<Matrix>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Spectral(v) => v.len(),
            Inputs::Matrices(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything needed to size a model besides the config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub j_dims: Vec<usize>,
    pub channels: usize,
    pub classes: usize,
}

fn heads(width: usize, classes: usize, hidden: &[usize], rng: &mut RngStream) -> LabResult<Vec<Mlp>> {
    (0..classes)
        .map(|_| {
            let mut w = vec![width];
            w.extend_from_slice(hidden);
            w.push(1);
            Ok(Mlp::new(&w, Activation::Relu, rng)?)
        })
        .collect()
}

/// A freshly initialized model; all randomness comes from `seed`.
pub fn build_model(cfg: &ExperimentConfig, shape: &ModelShape, seed: u64) -> LabResult<AnyModel> {
    let mut rng = RngStream::new(seed, 0x6d6f_6465);
    let h = cfg.hidden;
    Ok(match cfg.model {
        ModelId::Anlsf => {
            let s = AnlsfShape { phi_hidden: vec![h], embedding: h, head_hidden: vec![], activation: Activation::Relu };
            let mut m = Anlsf::new(shape.j_dims.clone(), shape.channels, shape.classes, &s, &mut rng)?;
            m.reg_weight = cfg.reg_weight;
            AnyModel::Anlsf(m)
        }
        ModelId::NodeMlp => {
            let trunk = SetNet::build(shape.channels, &[h], h, &[h], h, PoolMode::Mean, &mut rng)?;
            let heads = heads(h, shape.classes, &[], &mut rng)?;
            AnyModel::NodeMlp(HeadedClassifier {
                net: HeadedModel::new(trunk, heads)?,
                family: IdentityFamily,
                prior: Prior::default(),
            })
        }
        ModelId::DeepSet | ModelId::PointNet => {
            let pool = if cfg.model == ModelId::DeepSet { PoolMode::Sum } else { PoolMode::Max };
            let trunk = SetNet::build(3, &[h], h, &[h], h, pool, &mut rng)?;
            AnyModel::Set(ac_point_classifier(trunk, heads(h, shape.classes, &[h], &mut rng)?)?)
        }
        ModelId::Dgcnn => {
            let widths = [h / 2, h / 2];
            let trunk = Dgcnn::build(3, &widths, &[h], h, cfg.knn, false, &mut rng)?;
            AnyModel::Dgcnn(ac_point_classifier(trunk, heads(h, shape.classes, &[h], &mut rng)?)?)
        }
    })
}

fn mismatch() -> LabError {
    LabError::Data("model and inputs do not match".into())
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Anlsf($m) => $body,
            AnyModel::NodeMlp($m) => $body,
            AnyModel::Set($m) => $body,
            AnyModel::Dgcnn($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn num_classes(&self) -> usize {
        dispatch!(self, m => m.net.num_classes())
    }

    pub fn params(&self) -> Vec<f64> {
        dispatch!(self, m => m.net.params())
    }

    pub fn set_params(&mut self, p: &[f64]) -> LabResult<()> {
        dispatch!(self, m => m.net.set_params(p)?);
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, trunk first, then heads.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut mlps: Vec<&Mlp> = Vec::new();
        match self {
            AnyModel::Anlsf(m) => mlps.push(&m.net.trunk.mlp),
            AnyModel::NodeMlp(m) => mlps.extend([&m.net.trunk.phi, &m.net.trunk.head]),
            AnyModel::Set(m) => mlps.extend([&m.net.trunk.phi, &m.net.trunk.head]),
            AnyModel::Dgcnn(m) => {
                mlps.extend(m.net.trunk.edge_layers.iter());
                mlps.push(&m.net.trunk.head);
            }
        }
        dispatch!(self, m => mlps.extend(m.net.heads.iter()));
        mlps.iter().flat_map(|m| m.layers().iter().map(|l| l.weight.shape())).collect()
    }

    pub fn train(
        &mut self,
        inputs: &Inputs,
        labels: &[usize],
        indices: &[usize],
        cfg: &TrainConfig,
    ) -> LabResult<TrainOutcome> {
        match (self, inputs) {
            (AnyModel::Anlsf(m), Inputs::Spectral(x)) => train_one_vs_rest(m, x, labels, indices, cfg),
            (AnyModel::NodeMlp(m), Inputs::Matrices(x)) => train_one_vs_rest(m, x, labels, indices, cfg),
            (AnyModel::Set(m), Inputs::Matrices(x)) => train_one_vs_rest(m, x, labels, indices, cfg),
            (AnyModel::Dgcnn(m), Inputs::Matrices(x)) => train_one_vs_rest(m, x, labels, indices, cfg),
            _ => Err(mismatch()),
        }
    }

    pub fn evaluate(
        &self,
        inputs: &Inputs,
        labels: &[usize],
        indices: &[usize],
        budget: &Budget,
        seed: u64,
    ) -> LabResult<Evaluation> {
        match (self, inputs) {
            (AnyModel::Anlsf(m), Inputs::Spectral(x)) => evaluate(m, x, labels, indices, budget, seed),
            (AnyModel::NodeMlp(m), Inputs::Matrices(x)) => evaluate(m, x, labels, indices, budget, seed),
            (AnyModel::Set(m), Inputs::Matrices(x)) => evaluate(m, x, labels, indices, budget, seed),
            (AnyModel::Dgcnn(m), Inputs::Matrices(x)) => evaluate(m, x, labels, indices, budget, seed),
            _ => Err(mismatch()),
        }
    }
}
