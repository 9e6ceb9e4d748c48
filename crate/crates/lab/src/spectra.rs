//! Turns graphs into per-band spectral coefficients. Decompositions are
//! cached per adjacency so datasets on one shared graph pay for a single
//! eigendecomposition.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use anisocanon::spectral::{
    dyadic_decompose, gso_matrix, j_dims_from_observed, BandDecomposition, BandPlan, Gso, Graph,
    SpectralCoeffs,
};
use anisocanon::Matrix;

use crate::error::LabResult;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandSettings {
    pub gso: Gso,
    pub decay: f64,
    pub bands: usize,
    pub j_quantile: f64,
    /// Bands whose quantile dimension exceeds this are switched off.
    pub band_dim_limit: Option<usize>,
}

impl Default for BandSettings {
    fn default() -> Self {
        BandSettings { gso: Gso::NormalizedLaplacian, decay: 0.5, bands: 8, j_quantile: 0.9, band_dim_limit: None }
    }
}

type CacheEntry = (Arc<Matrix>, Arc<(BandPlan, BandDecomposition)>);

/// Decomposition cache keyed by adjacency identity. The cache keeps its own
/// handle on each adjacency, so a key is never reused while it is cached.
#[derive(Default)]
pub struct DecompositionCache {
    entries: Mutex<HashMap<usize, CacheEntry>>,
    misses: Mutex<usize>,
}

impl DecompositionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn misses(&self) -> usize {
        *self.misses.lock().expect("cache lock")
    }

    pub fn get(&self, graph: &Graph, settings: &BandSettings) -> LabResult<Arc<(BandPlan, BandDecomposition)>> {
        let adj = graph.shared_adjacency();
        let key = Arc::as_ptr(adj) as usize;
        if let Some((_, d)) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(d.clone());
        }
        let l = gso_matrix(adj, settings.gso)?;
        let d = Arc::new(dyadic_decompose(&l, settings.decay, settings.bands)?);
        *self.misses.lock().expect("cache lock") += 1;
        self.entries.lock().expect("cache lock").insert(key, (adj.clone(), d.clone()));
        Ok(d)
    }
}

/// `J_k` from the band dimensions of the given graphs.
pub fn fit_j_dims(
    graphs: &[&Graph],
    settings: &BandSettings,
    cache: &DecompositionCache,
) -> LabResult<Vec<usize>> {
    let observed = graphs
        .iter()
        .map(|g| Ok(cache.get(g, settings)?.1.dims()))
        .collect::<LabResult<Vec<_>>>()?;
    Ok(j_dims_from_observed(&observed, settings.j_quantile, settings.band_dim_limit)?)
}

/// Coefficients of the active bands; inactive bands come back empty.
pub fn coefficients(
    graph: &Graph,
    j_dims: &[usize],
    settings: &BandSettings,
    cache: &DecompositionCache,
) -> LabResult<SpectralCoeffs> {
    let d = cache.get(graph, settings)?;
    let dec = &d.1;
    let t = graph.channels();
    let bands = (0..dec.band_count())
        .map(|k| {
            if j_dims.get(k).copied().unwrap_or(0) == 0 {
                Matrix::zeros(0, t)
            } else {
                dec.basis(k).t_matmul(graph.signal())
            }
        })
        .collect();
    Ok(SpectralCoeffs::new(t, bands)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anisocanon::spectral::{spectral_coefficients, torus_adjacency};

    #[test]
    fn shared_adjacency_is_decomposed_once() {
        let adj = Arc::new(torus_adjacency(6));
        let g1 = Graph::new(adj.clone(), Matrix::from_fn(36, 2, |i, j| (i + j) as f64)).unwrap();
        let g2 = Graph::new(adj, Matrix::from_fn(36, 2, |i, j| (i * j) as f64)).unwrap();
        let cache = DecompositionCache::new();
        let settings = BandSettings { bands: 3, ..BandSettings::default() };
        let j = fit_j_dims(&[&g1, &g2], &settings, &cache).unwrap();
        let c1 = coefficients(&g1, &j, &settings, &cache).unwrap();
        coefficients(&g2, &j, &settings, &cache).unwrap();
        assert_eq!(cache.misses(), 1);
        let full = spectral_coefficients(&cache.get(&g1, &settings).unwrap().1, g1.signal()).unwrap();
        assert_eq!(&c1, &full);

        let limited = BandSettings { band_dim_limit: Some(10), ..settings };
        let j = fit_j_dims(&[&g1], &limited, &cache).unwrap();
        assert!(j.iter().all(|&d| d <= 10));
        let c = coefficients(&g1, &j, &limited, &cache).unwrap();
        for (band, &jk) in c.bands().iter().zip(&j) {
            assert_eq!(band.rows() == 0, jk == 0);
        }
    }
}
