//! Synthetic datasets: the grid-orientation toy task, three point-cloud
//! shapes, and a family of cycle graphs whose class lives in an in-band
//! orientation. Every generator is a pure function of its config.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::groups::Permutation;
use crate::linalg::Matrix;
use crate::pointcloud::PointCloud;
use crate::rng::RngStream;
use crate::spectral::{cycle_adjacency, torus_adjacency, Graph};

const GRID_STREAM: u64 = 0x6772_6964;
const SHAPE_STREAM: u64 = 0x7368_6170;
const BAND_STREAM: u64 = 0x6261_6e64;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridTaskConfig {
    pub side: usize,
    pub period: usize,
    pub noise_sigma: f64,
    pub samples: usize,
    pub seed: u64,
}

impl GridTaskConfig {
    /// 40 × 40 torus, period 20, σ = 0.1, 1000 samples.
    pub fn full(seed: u64) -> Self {
        GridTaskConfig { side: 40, period: 20, noise_sigma: 0.1, samples: 1000, seed }
    }

    /// 20 × 20 torus, period 10, σ = 0.1, 200 samples.
    pub fn scaled(seed: u64) -> Self {
        GridTaskConfig { side: 20, period: 10, noise_sigma: 0.1, samples: 200, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 2 || !self.side.is_multiple_of(2) {
            return Err(Error::BadConfig("grid side must be even"));
        }
        if self.period == 0 || !self.side.is_multiple_of(self.period) {
            return Err(Error::BadConfig("the period must divide the grid side"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::BadConfig("noise sigma must be finite and non-negative"));
        }
        if self.samples == 0 {
            return Err(Error::BadConfig("at least one sample is required"));
        }
        Ok(())
    }
}

/// Node index of grid coordinate `(x, y)`.
pub fn grid_index(side: usize, x: usize, y: usize) -> usize {
    y * side + x
}

/// The noiseless two-channel grid signal of `label`.
pub fn grid_signal(side: usize, period: usize, label: usize) -> Matrix {
    let w = 2.0 * PI / period as f64;
    let mut s = Matrix::zeros(side * side, 2);
    for y in 0..side {
        for x in 0..side {
            let i = grid_index(side, x, y);
            if x < side / 2 {
                s[(i, 0)] = libm::sin(w * x as f64);
            } else {
                let arg = if label == 0 { x } else { y };
                s[(i, 1)] = libm::sin(w * arg as f64);
            }
        }
    }
    s
}

/// Balanced alternating labels; sample `i` draws its noise from stream `i`.
/// All graphs share one adjacency.
pub fn make_grid_task(cfg: &GridTaskConfig) -> Result<Vec<LabeledGraph>> {
    cfg.validate()?;
    let adjacency = Arc::new(torus_adjacency(cfg.side));
    let clean = [grid_signal(cfg.side, cfg.period, 0), grid_signal(cfg.side, cfg.period, 1)];
    let base = RngStream::new(cfg.seed, GRID_STREAM);
    let half = cfg.side / 2;
    (0..cfg.samples)
        .map(|i| {
            let label = i % 2;
            let mut s = clean[label].clone();
            if cfg.noise_sigma > 0.0 {
                let mut rng = base.derive(&[i as u64]);
                for y in 0..cfg.side {
                    for x in 0..cfg.side {
                        let c = if x < half { 0 } else { 1 };
                        s[(grid_index(cfg.side, x, y), c)] += cfg.noise_sigma * rng.normal();
                    }
                }
            }
            Ok(LabeledGraph { graph: Graph::new(adjacency.clone(), s)?, label })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Ellipsoid,
    PlanarCross,
    Helix,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Ellipsoid, Shape::PlanarCross, Shape::Helix];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Ellipsoid => "ellipsoid",
            Shape::PlanarCross => "planar-cross",
            Shape::Helix => "helix",
        }
    }
}

pub const ELLIPSOID_AXES: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeConfig {
    pub points: usize,
    pub per_class: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl ShapeConfig {
    pub fn new(points: usize, per_class: usize, seed: u64) -> Self {
        ShapeConfig { points, per_class, jitter: 0.01, seed }
    }
}

/// One canonical-pose shape, before jitter.
pub fn sample_shape(shape: Shape, points: usize, rng: &mut RngStream) -> Matrix {
    let mut m = Matrix::zeros(points, 3);
    for i in 0..points {
        let p = match shape {
            Shape::Ellipsoid => {
                let mut u = [rng.normal(), rng.normal(), rng.normal()];
                let n = libm::sqrt(u.iter().map(|v| v * v).sum::<f64>()).max(f64::MIN_POSITIVE);
                for (v, a) in u.iter_mut().zip(ELLIPSOID_AXES) {
                    *v = *v / n * a;
                }
                u
            }
            Shape::PlanarCross => {
                let (a, b) = (rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0));
                if i % 2 == 0 {
                    [a, b, 0.0]
                } else {
                    [a, 0.0, b]
                }
            }
            Shape::Helix => {
                let t = rng.uniform();
                [0.5 * libm::cos(4.0 * PI * t), 0.5 * libm::sin(4.0 * PI * t), 2.0 * t - 1.0]
            }
        };
        m.row_mut(i).copy_from_slice(&p);
    }
    m
}

/// `per_class` clouds of each shape in canonical pose, class-major order,
/// with Gaussian jitter on every coordinate.
pub fn make_shape_dataset(cfg: &ShapeConfig) -> Result<Vec<LabeledCloud>> {
    if cfg.points < 8 {
        return Err(Error::BadConfig("shapes need at least 8 points"));
    }
    if !(cfg.jitter >= 0.0 && cfg.jitter.is_finite()) {
        return Err(Error::BadConfig("jitter must be finite and non-negative"));
    }
    let base = RngStream::new(cfg.seed, SHAPE_STREAM);
    let mut out = Vec::with_capacity(3 * cfg.per_class);
    for (label, &shape) in Shape::ALL.iter().enumerate() {
        for i in 0..cfg.per_class {
            let mut rng = base.derive(&[label as u64, i as u64]);
            let mut m = sample_shape(shape, cfg.points, &mut rng);
            if cfg.jitter > 0.0 {
                m.data_mut().iter_mut().for_each(|v| *v += cfg.jitter * rng.normal());
            }
            out.push(LabeledCloud { cloud: PointCloud::new(m)?, label });
        }
    }
    Ok(out)
}

/// Cycle graphs with randomly relabelled nodes. Both channels lie in the
/// 2-dimensional eigenspace of frequency `mode`; channel 0 has a random
/// phase and channel 1 is offset from it by `label · separation`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandOrientationConfig {
    pub nodes: usize,
    pub classes: usize,
    pub per_class: usize,
    pub separation: f64,
    pub noise_sigma: f64,
    pub mode: usize,
    pub seed: u64,
}

impl BandOrientationConfig {
    pub fn new(nodes: usize, classes: usize, per_class: usize, seed: u64) -> Self {
        BandOrientationConfig { nodes, classes, per_class, separation: PI / 4.0, noise_sigma: 0.05, mode: 1, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::BadConfig("band-orientation graphs need at least 8 nodes"));
        }
        if self.classes < 2 {
            return Err(Error::BadConfig("at least two classes are required"));
        }
        if self.mode == 0 || 2 * self.mode >= self.nodes {
            return Err(Error::BadConfig("the mode must index a two-dimensional eigenspace"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite() && self.separation.is_finite()) {
            return Err(Error::BadConfig("noise and separation must be finite"));
        }
        // Reflections send a relative angle θ to −θ, so classes must stay in [0, π].
        if (self.classes - 1) as f64 * self.separation.abs() > PI + 1e-12 {
            return Err(Error::BadConfig("class angles must fit in [0, π]"));
        }
        Ok(())
    }

    pub fn eigenvalue(&self) -> f64 {
        1.0 - libm::cos(2.0 * PI * self.mode as f64 / self.nodes as f64)
    }
}

/// One graph of the family. The random draws do not depend on `label`.
pub fn band_orientation_sample(cfg: &BandOrientationConfig, label: usize, rng: &mut RngStream) -> Result<Graph> {
    let n = cfg.nodes;
    let relabel = Permutation::random(n, rng);
    let phase = rng.uniform_in(0.0, 2.0 * PI);
    let w = 2.0 * PI * cfg.mode as f64 / n as f64;
    let offset = label as f64 * cfg.separation;
    let mut s = Matrix::zeros(n, 2);
    for v in 0..n {
        s[(v, 0)] = libm::cos(w * v as f64 - phase);
        s[(v, 1)] = libm::cos(w * v as f64 - phase - offset);
    }
    if cfg.noise_sigma > 0.0 {
        s.data_mut().iter_mut().for_each(|x| *x += cfg.noise_sigma * rng.normal());
    }
    // Node v of the cycle becomes node relabel[v].
    let inv = relabel.inverse();
    let a = cycle_adjacency(n);
    let pa = Matrix::from_fn(n, n, |i, j| a[(inv.mapping()[i], inv.mapping()[j])]);
    let ps = inv.permute_rows(&s);
    Graph::new(Arc::new(pa), ps)
}

/// Class-major, `per_class` graphs per class.
pub fn make_band_orientation_graphs(cfg: &BandOrientationConfig) -> Result<Vec<LabeledGraph>> {
    cfg.validate()?;
    let base = RngStream::new(cfg.seed, BAND_STREAM);
    let mut out = Vec::with_capacity(cfg.classes * cfg.per_class);
    for label in 0..cfg.classes {
        for i in 0..cfg.per_class {
            let mut rng = base.derive(&[label as u64, i as u64]);
            out.push(LabeledGraph { graph: band_orientation_sample(cfg, label, &mut rng)?, label });
        }
    }
    Ok(out)
}

/// Relative angle in `[0, π]` between two vectors of the plane.
pub fn relative_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    libm::atan2(cross, dot).abs()
}

/// Coefficients of both channels in an orthonormal basis of the mode's
/// eigenspace, derived from the graph itself: a `2 × 2` matrix whose
/// columns are the channels.
pub fn eigenspace_coefficients(cfg: &BandOrientationConfig, g: &Graph) -> Result<Matrix> {
    let l = crate::spectral::normalized_laplacian(g.adjacency())?;
    let eig = crate::linalg::eigh_symmetric(&l)?;
    let target = cfg.eigenvalue();
    let idx: Vec<usize> = (0..eig.values.len()).filter(|&i| (eig.values[i] - target).abs() < 1e-8).collect();
    if idx.len() != 2 {
        return Err(Error::BadConfig("the mode's eigenspace is not two-dimensional"));
    }
    let basis = Matrix::from_fn(g.n(), 2, |r, c| eig.vectors[(r, idx[c])]);
    Ok(basis.t_matmul(g.signal()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{haar_rotation3, Permutation};
    use crate::pointcloud::{multiset_distance, DistanceMode};
    use crate::spectral::{dyadic_decompose, normalized_laplacian, spectral_coefficients};

    #[test]
    fn grid_config_validation() {
        assert!(GridTaskConfig::full(0).validate().is_ok());
        assert!(GridTaskConfig::scaled(0).validate().is_ok());
        for bad in [
            GridTaskConfig { side: 39, ..GridTaskConfig::full(0) },
            GridTaskConfig { period: 30, ..GridTaskConfig::full(0) },
            GridTaskConfig { noise_sigma: -1.0, ..GridTaskConfig::full(0) },
            GridTaskConfig { samples: 0, ..GridTaskConfig::full(0) },
        ] {
            assert!(matches!(make_grid_task(&bad), Err(Error::BadConfig(_))));
        }
    }

    #[test]
    fn noiseless_grid_is_exact() {
        let cfg = GridTaskConfig { side: 8, period: 4, noise_sigma: 0.0, samples: 4, seed: 1 };
        let data = make_grid_task(&cfg).unwrap();
        for d in &data {
            let s = d.graph.signal();
            for y in 0..8 {
                for x in 0..8 {
                    let i = grid_index(8, x, y);
                    let sx = libm::sin(2.0 * PI * x as f64 / 4.0);
                    let sy = libm::sin(2.0 * PI * y as f64 / 4.0);
                    if x < 4 {
                        assert_eq!(s[(i, 0)], sx);
                        assert_eq!(s[(i, 1)], 0.0);
                    } else {
                        assert_eq!(s[(i, 0)], 0.0);
                        assert_eq!(s[(i, 1)], if d.label == 0 { sx } else { sy });
                    }
                }
            }
        }
        assert!(Arc::ptr_eq(data[0].graph.shared_adjacency(), data[3].graph.shared_adjacency()));
    }

    #[test]
    fn full_grid_config_is_balanced_and_deterministic() {
        let cfg = GridTaskConfig { samples: 1000, ..GridTaskConfig::scaled(7) };
        let a = make_grid_task(&cfg).unwrap();
        assert_eq!(a.len(), 1000);
        let ones = a.iter().filter(|d| d.label == 1).count();
        assert_eq!(ones, 500);
        let b = make_grid_task(&cfg).unwrap();
        assert_eq!(a[17].graph.signal(), b[17].graph.signal());
        let c = make_grid_task(&GridTaskConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a[17].graph.signal(), c[17].graph.signal());
        let odd = make_grid_task(&GridTaskConfig { samples: 7, ..GridTaskConfig::scaled(7) }).unwrap();
        let ones = odd.iter().filter(|d| d.label == 1).count() as i64;
        assert!((ones - (7 - ones)).abs() <= 1);
    }

    #[test]
    fn grid_transpose_is_an_automorphism_of_isotropic_features() {
        let side = 12;
        let adj = torus_adjacency(side);
        let l = normalized_laplacian(&adj).unwrap();
        let tau = Permutation::new(
            (0..side * side).map(|i| grid_index(side, i / side, i % side)).collect(),
        )
        .unwrap();
        let conj = tau.permute_rows(&tau.permute_rows(&l).transpose()).transpose();
        assert!(conj.max_abs_diff(&l) < 1e-12);

        // Per-band energies of any channel are unchanged by the transpose.
        let (_, dec) = dyadic_decompose(&l, 0.5, 4).unwrap();
        let s = grid_signal(side, 6, 1);
        let ts = tau.permute_rows(&s);
        let a = spectral_coefficients(&dec, &s).unwrap();
        let b = spectral_coefficients(&dec, &ts).unwrap();
        for (ca, cb) in a.bands().iter().zip(b.bands()) {
            for c in 0..2 {
                let ea: f64 = (0..ca.rows()).map(|r| ca[(r, c)] * ca[(r, c)]).sum();
                let eb: f64 = (0..cb.rows()).map(|r| cb[(r, c)] * cb[(r, c)]).sum();
                assert!((ea - eb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn grid_classes_share_per_node_value_multisets() {
        // Any mean-pooled per-node readout sees the same multiset for both
        // labels, so such a model cannot beat chance on this task.
        for (side, period) in [(40, 20), (20, 10)] {
            let rows = |label| {
                let s = grid_signal(side, period, label);
                // Equal phases give equal values up to rounding in sin.
                let q = |v: f64| libm::round(v * 1e9) as i64;
                let mut r: Vec<[i64; 2]> = (0..side * side).map(|i| [q(s[(i, 0)]), q(s[(i, 1)])]).collect();
                r.sort_unstable();
                r
            };
            assert_eq!(rows(0), rows(1));
        }
    }

    #[test]
    fn ellipsoid_satisfies_its_quadric() {
        let mut rng = RngStream::new(1, 0);
        let m = sample_shape(Shape::Ellipsoid, 50, &mut rng);
        for i in 0..50 {
            let q: f64 = (0..3).map(|j| (m[(i, j)] / ELLIPSOID_AXES[j]).powi(2)).sum();
            assert!((q - 1.0).abs() < 1e-9);
        }
        let cross = sample_shape(Shape::PlanarCross, 20, &mut rng);
        assert!((0..20).all(|i| cross[(i, 1)] == 0.0 || cross[(i, 2)] == 0.0));
    }

    #[test]
    fn shape_dataset_counts_and_metric() {
        let data = make_shape_dataset(&ShapeConfig::new(8, 100, 3)).unwrap();
        assert_eq!(data.len(), 300);
        for c in 0..3 {
            assert_eq!(data.iter().filter(|d| d.label == c).count(), 100);
        }
        assert!(make_shape_dataset(&ShapeConfig::new(7, 1, 0)).is_err());

        let mut rng = RngStream::new(4, 0);
        let x = data[150].cloud.points();
        let a = x.matmul_t(haar_rotation3(&mut rng).matrix());
        let b = x.matmul_t(haar_rotation3(&mut rng).matrix());
        assert!(multiset_distance(&a, &b, DistanceMode::Brute).unwrap().value > 1e-3);
        let pa = Permutation::random(8, &mut rng).permute_rows(&a);
        assert!(multiset_distance(&a, &pa, DistanceMode::Brute).unwrap().value < 1e-12);
    }

    fn separation_accuracy(cfg: &BandOrientationConfig) -> f64 {
        let data = make_band_orientation_graphs(cfg).unwrap();
        let mut correct = 0;
        for d in &data {
            let c = eigenspace_coefficients(cfg, &d.graph).unwrap();
            // Exhaustive 1° search over O(2) for the rotation that best
            // matches each class template; reflections are the `flip` half.
            let mut best = (f64::NEG_INFINITY, 0);
            for class in 0..cfg.classes {
                let th = class as f64 * cfg.separation;
                let template = Matrix::from_rows(&[[1.0, libm::cos(th)], [0.0, libm::sin(th)]]);
                for deg in 0..360 {
                    let t = (deg as f64).to_radians();
                    for flip in [1.0, -1.0] {
                        let r = Matrix::from_rows(&[
                            [libm::cos(t), -libm::sin(t)],
                            [flip * libm::sin(t), flip * libm::cos(t)],
                        ]);
                        let v = r.matmul(&c).inner(&template);
                        if v > best.0 {
                            best = (v, class);
                        }
                    }
                }
            }
            if best.1 == d.label {
                correct += 1;
            }
        }
        correct as f64 / data.len() as f64
    }

    #[test]
    fn band_orientation_cases() {
        let cfg = BandOrientationConfig { separation: PI / 2.0, noise_sigma: 0.0, ..BandOrientationConfig::new(12, 2, 20, 5) };
        let data = make_band_orientation_graphs(&cfg).unwrap();
        for d in &data {
            let c = eigenspace_coefficients(&cfg, &d.graph).unwrap();
            let angle = relative_angle([c[(0, 0)], c[(1, 0)]], [c[(0, 1)], c[(1, 1)]]);
            let expected = d.label as f64 * PI / 2.0;
            assert!((angle - expected).abs() < 1e-9, "{angle} vs {expected}");
        }

        let same = BandOrientationConfig { separation: 0.0, ..BandOrientationConfig::new(12, 2, 5, 5) };
        for i in 0..5u64 {
            let g0 = band_orientation_sample(&same, 0, &mut RngStream::new(i, 0)).unwrap();
            let g1 = band_orientation_sample(&same, 1, &mut RngStream::new(i, 0)).unwrap();
            assert_eq!(g0, g1);
        }

        let quarter = BandOrientationConfig::new(16, 4, 50, 6);
        assert!(separation_accuracy(&quarter) >= 0.99);

        assert!(make_band_orientation_graphs(&BandOrientationConfig { nodes: 7, ..quarter.clone() }).is_err());
        assert!(make_band_orientation_graphs(&BandOrientationConfig { classes: 6, ..quarter }).is_err());
    }

    #[test]
    fn relabelled_cycles_keep_their_spectrum() {
        let cfg = BandOrientationConfig::new(10, 2, 3, 9);
        for d in make_band_orientation_graphs(&cfg).unwrap() {
            let deg: Vec<f64> = (0..10).map(|i| d.graph.adjacency().row(i).iter().sum()).collect();
            assert!(deg.iter().all(|&x| x == 2.0));
            let e = crate::linalg::eigh_symmetric(&normalized_laplacian(d.graph.adjacency()).unwrap()).unwrap();
            let mut expected: Vec<f64> = (0..10).map(|k| 1.0 - libm::cos(2.0 * PI * k as f64 / 10.0)).collect();
            expected.sort_by(f64::total_cmp);
            for (a, b) in e.values.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
