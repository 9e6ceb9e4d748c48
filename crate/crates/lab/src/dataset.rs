//! Generating a task's dataset from a config and turning it into model
//! inputs.

use std::f64::consts::PI;

use anisocanon::data::{
    make_band_orientation_graphs, make_grid_task, make_shape_dataset, BandOrientationConfig, GridTaskConfig,
    LabeledCloud, LabeledGraph, ShapeConfig,
};
use anisocanon::groups::{haar_rotation3, rotation_from_axis_angle, AxisAngle};
use anisocanon::RngStream;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ModelId, TaskId};
use crate::error::{LabError, LabResult};
use crate::models::{Inputs, ModelShape};
use crate::spectra::{coefficients, fit_j_dims, DecompositionCache};

const POSE_STREAM: u64 = 0x706f_7365;

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Graphs(Vec<LabeledGraph>),
    Clouds(Vec<LabeledCloud>),
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        match self {
            Dataset::Graphs(g) => g.iter().map(|s| s.label).collect(),
            Dataset::Clouds(c) => c.iter().map(|s| s.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Graphs(g) => g.len(),
            Dataset::Clouds(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generator name and parameters, as recorded in a dataset manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorInfo {
    pub generator: &'static str,
    pub config: Value,
    pub seed: u64,
    pub notes: Vec<&'static str>,
}

fn grid_config(cfg: &ExperimentConfig) -> GridTaskConfig {
    let mut g = if cfg.task == TaskId::GridFull {
        GridTaskConfig::full(cfg.data_seed)
    } else {
        GridTaskConfig::scaled(cfg.data_seed)
    };
    g.noise_sigma = cfg.noise_sigma;
    g
}

fn orientation_config(cfg: &ExperimentConfig) -> BandOrientationConfig {
    let mut b = BandOrientationConfig::new(16, cfg.orientation_classes, cfg.per_class, cfg.data_seed);
    b.noise_sigma = cfg.noise_sigma;
    b.separation = PI / cfg.orientation_classes as f64;
    b
}

pub fn generate(cfg: &ExperimentConfig) -> LabResult<(Dataset, GeneratorInfo)> {
    Ok(match cfg.task {
        TaskId::GridFull | TaskId::GridScaled => {
            let g = grid_config(cfg);
            let info = GeneratorInfo {
                generator: "grid-orientation",
                config: json!({"side": g.side, "period": g.period, "noise_sigma": g.noise_sigma, "samples": g.samples}),
                seed: g.seed,
                notes: vec![
                    "torus grid with 4-neighbourhood and unit edge weights",
                    "node index is y * side + x; the sinusoid argument is the integer grid coordinate",
                    "channel 0 holds sin over x on columns [0, side/2); channel 1 holds sin over x (label 0) or y (label 1) on the other half",
                ],
            };
            (Dataset::Graphs(make_grid_task(&g)?), info)
        }
        TaskId::BandOrientation => {
            let b = orientation_config(cfg);
            let info = GeneratorInfo {
                generator: "band-orientation",
                config: json!({
                    "nodes": b.nodes, "classes": b.classes, "per_class": b.per_class,
                    "separation": b.separation, "noise_sigma": b.noise_sigma, "mode": b.mode,
                }),
                seed: b.seed,
                notes: vec!["cycle graphs with random node relabelling; class is the in-eigenspace angle between the two channels"],
            };
            (Dataset::Graphs(make_band_orientation_graphs(&b)?), info)
        }
        TaskId::Shapes => {
            let s = ShapeConfig::new(cfg.points, cfg.per_class, cfg.data_seed);
            let info = GeneratorInfo {
                generator: "shapes",
                config: json!({
                    "points": s.points, "per_class": s.per_class, "jitter": s.jitter,
                    "classes": ["ellipsoid", "planar-cross", "helix"],
                }),
                seed: s.seed,
                notes: vec![
                    "canonical poses; the harness rotates training clouds about z and test clouds by Haar-random SO(3)",
                ],
            };
            (Dataset::Clouds(make_shape_dataset(&s)?), info)
        }
    })
}

/// Model inputs for one dataset. Graph tasks use the same inputs for
/// training and testing; shapes use a z-axis pose for training and an
/// SO(3) pose for testing, both fixed per sample by the data seed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub labels: Vec<usize>,
    pub shape: ModelShape,
    pub train: Inputs,
    pub test: Inputs,
}

pub fn prepare(cfg: &ExperimentConfig, data: &Dataset, cache: &DecompositionCache) -> LabResult<Prepared> {
    let labels = data.labels();
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(LabError::Data("a dataset needs at least two classes".into()));
    }
    match (data, cfg.model) {
        (Dataset::Graphs(g), ModelId::Anlsf) => {
            let settings = cfg.band_settings();
            let graphs: Vec<_> = g.iter().map(|s| &s.graph).collect();
            let j_dims = fit_j_dims(&graphs, &settings, cache)?;
            let x = g
                .iter()
                .map(|s| coefficients(&s.graph, &j_dims, &settings, cache))
                .collect::<LabResult<Vec<_>>>()?;
            let channels = g[0].graph.channels();
            let inputs = Inputs::Spectral(x);
            Ok(Prepared { labels, shape: ModelShape { j_dims, channels, classes }, train: inputs.clone(), test: inputs })
        }
        (Dataset::Graphs(g), ModelId::NodeMlp) => {
            let channels = g[0].graph.channels();
            let inputs = Inputs::Matrices(g.iter().map(|s| s.graph.signal().clone()).collect());
            Ok(Prepared {
                labels,
                shape: ModelShape { j_dims: Vec::new(), channels, classes },
                train: inputs.clone(),
                test: inputs,
            })
        }
        (Dataset::Clouds(c), ModelId::DeepSet | ModelId::PointNet | ModelId::Dgcnn) => {
            let base = RngStream::new(cfg.data_seed, POSE_STREAM);
            let mut train = Vec::with_capacity(c.len());
            let mut test = Vec::with_capacity(c.len());
            for (i, s) in c.iter().enumerate() {
                let mut rng = base.derive(&[i as u64]);
                let angle = rng.uniform_in(-PI, PI);
                let axis = [0.0, 0.0, angle.signum()];
                let z = rotation_from_axis_angle(&AxisAngle::new(axis, angle.abs())?);
                train.push(s.cloud.rotated(&z).into_points());
                test.push(s.cloud.rotated(&haar_rotation3(&mut rng)).into_points());
            }
            Ok(Prepared {
                labels,
                shape: ModelShape { j_dims: Vec::new(), channels: 3, classes },
                train: Inputs::Matrices(train),
                test: Inputs::Matrices(test),
            })
        }
        _ => Err(LabError::Data(format!("model `{}` cannot read this dataset", cfg.model.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_grid_prepares_for_both_graph_models() {
        let mut cfg = ExperimentConfig::preset(TaskId::GridScaled);
        let (data, info) = generate(&cfg).unwrap();
        assert_eq!(data.len(), 200);
        assert_eq!(info.generator, "grid-orientation");
        let cache = DecompositionCache::new();
        let p = prepare(&cfg, &data, &cache).unwrap();
        assert_eq!(cache.misses(), 1);
        assert_eq!(p.shape.channels, 2);
        assert!(p.shape.j_dims.iter().all(|&j| j <= 64));
        cfg.model = ModelId::NodeMlp;
        let p = prepare(&cfg, &data, &cache).unwrap();
        assert!(matches!(p.train, Inputs::Matrices(ref m) if m[0].shape() == (400, 2)));
    }

    #[test]
    fn shape_poses_differ_between_train_and_test() {
        let mut cfg = ExperimentConfig::preset(TaskId::Shapes);
        cfg.per_class = 2;
        let (data, _) = generate(&cfg).unwrap();
        let p = prepare(&cfg, &data, &DecompositionCache::new()).unwrap();
        let (Inputs::Matrices(a), Inputs::Matrices(b)) = (&p.train, &p.test) else { panic!() };
        assert_eq!(a.len(), 6);
        // A z rotation keeps every point's z coordinate.
        let Dataset::Clouds(c) = &data else { panic!() };
        for (x, s) in a.iter().zip(c) {
            for r in 0..x.rows() {
                assert!((x[(r, 2)] - s.cloud.points()[(r, 2)]).abs() < 1e-12);
            }
        }
        assert!(a[0].max_abs_diff(&b[0]) > 1e-3);
    }
}
