use std::io::Cursor;

use anisocanon::data::{LabeledCloud, LabeledGraph};
use anisocanon::pointcloud::PointCloud;
use anisocanon::spectral::Graph;
use anisocanon::Matrix;
use anisocanon_lab::config::{ExperimentConfig, ModelId, TaskId};
use anisocanon_lab::dataset::{generate, prepare};
use anisocanon_lab::experiments::{fold_seeds, kfold_evaluate};
use anisocanon_lab::formats::{load_model, read_clouds, read_graphs, save_model, write_clouds, write_graphs};
use anisocanon_lab::models::build_model;
use anisocanon_lab::spectra::DecompositionCache;
use anisocanon_lab::train::stratified_folds;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE), Just(1e-300), Just(0.1 + 0.2)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_files_round_trip_bitwise(
        n in 2usize..7,
        bits in proptest::collection::vec(any::<bool>(), 21),
        weights in proptest::collection::vec(0.01..5.0f64, 21),
        signal in proptest::collection::vec(finite(), 14),
        label in 0usize..3,
    ) {
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if bits[k] {
                    edges.push((i, j, weights[k]));
                }
                k += 1;
            }
        }
        let s = Matrix::from_vec(n, 2, signal[..2 * n].to_vec());
        let g = LabeledGraph { graph: Graph::from_edges(n, &edges, s).unwrap(), label };
        let mut buf = Vec::new();
        write_graphs(&mut buf, std::slice::from_ref(&g)).unwrap();
        let back = read_graphs(Cursor::new(buf)).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(back[0].label, label);
        let bits_of = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits_of(back[0].graph.signal()), bits_of(g.graph.signal()));
        prop_assert_eq!(bits_of(back[0].graph.adjacency()), bits_of(g.graph.adjacency()));
    }

    #[test]
    fn cloud_files_round_trip_bitwise(points in proptest::collection::vec(finite(), 3..30), label in 0usize..3) {
        let rows = points.len() / 3;
        let m = Matrix::from_vec(rows, 3, points[..rows * 3].to_vec());
        let c = LabeledCloud { cloud: PointCloud::new(m).unwrap(), label };
        let mut buf = Vec::new();
        write_clouds(&mut buf, std::slice::from_ref(&c)).unwrap();
        let back = read_clouds(Cursor::new(buf)).unwrap();
        prop_assert_eq!(&back, &vec![c]);
    }
}

#[test]
fn checkpoint_restores_identical_predictions() {
    let mut cfg = ExperimentConfig::preset(TaskId::BandOrientation);
    cfg.per_class = 8;
    cfg.epochs = 2;
    cfg.folds = 2;
    cfg.run_folds = 1;
    cfg.hidden = 16;
    let (data, _) = generate(&cfg).unwrap();
    let p = prepare(&cfg, &data, &DecompositionCache::new()).unwrap();
    let (_, _, runs) = kfold_evaluate(&cfg, &p).unwrap();
    let run = &runs[0];
    let mut buf = Vec::new();
    save_model(&mut buf, &cfg, &p.shape, &run.model, run.init_seed, run.fold).unwrap();
    let (cfg2, shape2, model2, header) = load_model(&mut Cursor::new(buf)).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(shape2, p.shape);
    assert_eq!(header.fold, 0);
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(model2.params()), bits(run.model.params()));
    let (_, _, eval_seed) = fold_seeds(cfg.seed, 0);
    let budget = cfg.effective_eval_budget();
    let a = run.model.evaluate(&p.test, &p.labels, &run.test_indices, &budget, eval_seed).unwrap();
    let b = model2.evaluate(&p.test, &p.labels, &run.test_indices, &budget, eval_seed).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, run.evaluation);
}

#[test]
fn zero_epochs_keep_the_initial_parameters() {
    let mut cfg = ExperimentConfig::preset(TaskId::Shapes);
    cfg.per_class = 4;
    cfg.points = 8;
    cfg.epochs = 0;
    cfg.folds = 2;
    cfg.run_folds = 1;
    cfg.hidden = 8;
    let (data, _) = generate(&cfg).unwrap();
    let p = prepare(&cfg, &data, &DecompositionCache::new()).unwrap();
    let (_, _, runs) = kfold_evaluate(&cfg, &p).unwrap();
    let fresh = build_model(&cfg, &p.shape, runs[0].init_seed).unwrap();
    assert_eq!(fresh.params(), runs[0].model.params());
    assert_eq!(runs[0].outcome.history.len(), 0);
}

#[test]
fn leave_one_out_folds_cover_each_sample_once() {
    let labels = [0, 1, 0, 1, 0, 1];
    let folds = stratified_folds(&labels, 6, 3).unwrap();
    let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
    assert!(folds.iter().all(|f| f.len() == 1));
    seen.sort_unstable();
    assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
    assert!(stratified_folds(&labels, 7, 3).is_err());
}

#[test]
fn separable_band_orientation_trains_to_high_accuracy() {
    let mut cfg = ExperimentConfig::preset(TaskId::BandOrientation);
    cfg.orientation_classes = 2;
    cfg.noise_sigma = 0.0;
    cfg.per_class = 30;
    cfg.run_folds = 1;
    cfg.epochs = 40;
    let (data, _) = generate(&cfg).unwrap();
    let p = prepare(&cfg, &data, &DecompositionCache::new()).unwrap();
    let (report, _, _) = kfold_evaluate(&cfg, &p).unwrap();
    assert!(report.mean_accuracy >= 0.99, "{}", report.summary_line());
}

#[test]
fn identity_only_models_ignore_the_search_budget() {
    let mut cfg = ExperimentConfig::preset(TaskId::GridScaled);
    cfg.model = ModelId::NodeMlp;
    cfg.hidden = 8;
    cfg.epochs = 1;
    cfg.folds = 4;
    cfg.run_folds = 1;
    let (data, _) = generate(&cfg).unwrap();
    let p = prepare(&cfg, &data, &DecompositionCache::new()).unwrap();
    let (a, _, _) = kfold_evaluate(&cfg, &p).unwrap();
    cfg.eval_budget.candidates = 3;
    cfg.train_budget.refine_steps = 4;
    let (b, _, _) = kfold_evaluate(&cfg, &p).unwrap();
    assert_eq!(a.folds[0].accuracy, b.folds[0].accuracy);
    assert_eq!(a.folds[0].eval_evaluations, b.folds[0].eval_evaluations);
}
