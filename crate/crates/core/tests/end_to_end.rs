//! Whole-pipeline properties through the public API only.

use anisocanon::canon::{
    invariance_oracle, prior_maximize, Budget, InvarianceMode, MultiClassCanonicalizer, PermutationFamily, Prior,
    TransformationFamily,
};
use anisocanon::data::{make_band_orientation_graphs, BandOrientationConfig};
use anisocanon::groups::haar_rotation3;
use anisocanon::nn::{Activation, Mlp, PoolMode};
use anisocanon::pointcloud::{ac_point_classifier, SetNet};
use anisocanon::spectral::{
    dyadic_decompose, normalized_laplacian, spectral_coefficients, Anlsf, AnlsfShape, OrthogonalBlock,
};
use anisocanon::{Matrix, RngStream};

fn band_inputs(count: usize) -> Vec<anisocanon::spectral::SpectralCoeffs> {
    let cfg = BandOrientationConfig::new(12, 3, count, 4);
    make_band_orientation_graphs(&cfg)
        .unwrap()
        .iter()
        .map(|s| {
            let l = normalized_laplacian(s.graph.adjacency()).unwrap();
            let (_, dec) = dyadic_decompose(&l, 0.5, 4).unwrap();
            spectral_coefficients(&dec, s.graph.signal()).unwrap()
        })
        .collect()
}

#[test]
fn anlsf_decisions_follow_basis_changes_exactly() {
    let inputs = band_inputs(3);
    let dims = inputs[0].dims();
    let mut rng = RngStream::new(11, 0);
    let shape = AnlsfShape { phi_hidden: vec![16], embedding: 16, head_hidden: vec![8], activation: Activation::Tanh };
    let mut model = Anlsf::new(dims.clone(), 2, 3, &shape, &mut rng).unwrap();
    model.reg_weight = 0.2;
    let budget = Budget { candidates: 6, refine_steps: 4, ..Budget::default() };
    for (i, g) in inputs.iter().enumerate() {
        let w = OrthogonalBlock::haar(&g.dims(), &mut rng);
        let r = invariance_oracle(&model, g, &w, InvarianceMode::OrbitConsistent, &budget, &RngStream::new(i as u64, 1))
            .unwrap();
        assert!(r.agree);
        assert!(r.max_logit_delta <= 1e-9, "{}", r.max_logit_delta);
    }
}

#[test]
fn point_classifier_decisions_follow_rotations_exactly() {
    let mut rng = RngStream::new(12, 0);
    let trunk = SetNet::build(3, &[12], 12, &[], 12, PoolMode::Max, &mut rng).unwrap();
    let heads = (0..3).map(|_| Mlp::new(&[12, 6, 1], Activation::Relu, &mut rng).unwrap()).collect();
    let model = ac_point_classifier(trunk, heads).unwrap();
    let budget = Budget { candidates: 5, refine_steps: 3, ..Budget::default() };
    for t in 0..10 {
        let x = Matrix::from_fn(16, 3, |_, _| rng.normal());
        let r = haar_rotation3(&mut rng);
        let rep =
            invariance_oracle(&model, &x, &r, InvarianceMode::OrbitConsistent, &budget, &RngStream::new(t, 2)).unwrap();
        assert!(rep.agree && rep.max_logit_delta <= 1e-9, "{}", rep.max_logit_delta);
    }
}

#[test]
fn more_candidates_never_lower_the_sampled_optimum() {
    let fam = PermutationFamily { n: 5 };
    let g = Matrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64 * 0.37 - 1.0);
    let weights = Matrix::from_fn(5, 2, |i, j| ((i + 2 * j) as f64).sin());
    let score = |p: &Matrix| p.inner(&weights);
    let mut last = f64::NEG_INFINITY;
    for k in [1, 2, 4, 8, 16, 32] {
        let d = prior_maximize(&fam, &Prior::default(), &score, &g, &Budget::sampling(k), &mut RngStream::new(3, 0))
            .unwrap();
        assert!(d.objective >= last);
        assert_eq!(d.evaluations, k);
        last = d.objective;
    }
}

#[test]
fn decisions_are_reproducible_from_the_stream() {
    let inputs = band_inputs(1);
    let mut rng = RngStream::new(13, 0);
    let model = Anlsf::new(inputs[0].dims(), 2, 3, &AnlsfShape::default(), &mut rng).unwrap();
    let budget = Budget { candidates: 4, refine_steps: 2, ..Budget::default() };
    let a = model.decide(&inputs[0], &budget, &RngStream::new(5, 5)).unwrap();
    let b = model.decide(&inputs[0], &budget, &RngStream::new(5, 5)).unwrap();
    assert_eq!(a, b);
    let fam = model.family();
    for d in &a {
        let p = fam.apply(&d.transform, &inputs[0]).unwrap();
        assert!(p.is_finite());
    }
}
