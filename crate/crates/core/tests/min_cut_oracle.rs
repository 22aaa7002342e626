//! Minimum cuts against exhaustive enumeration of terminal-consistent
//! bipartitions on small tessellations.

use microforge_core::crack::min_cut_crack;
use microforge_core::points::{PointPattern, Window};
use microforge_core::tessellation::{build_voronoi, facet_graph, Tessellation};
use microforge_core::{Axis, Error, RandomStream};
use rand::Rng;

/// Minimum cut weight over all labelings with source cells fixed on one
/// side and sink cells on the other; areas summed in ascending facet order.
fn exhaustive_min_cut(tess: &Tessellation, axis: Axis) -> Option<f64> {
    let g = facet_graph(tess, axis);
    let n = g.n_cells;
    let mut fixed: Vec<Option<bool>> = vec![None; n];
    for &c in &g.source_cells {
        fixed[c] = Some(true);
    }
    for &c in &g.sink_cells {
        if fixed[c] == Some(true) {
            return None;
        }
        fixed[c] = Some(false);
    }
    let free: Vec<usize> = (0..n).filter(|&c| fixed[c].is_none()).collect();
    let mut best = f64::INFINITY;
    for bits in 0u32..(1u32 << free.len()) {
        let mut side: Vec<bool> = fixed.iter().map(|f| f.unwrap_or(false)).collect();
        for (k, &c) in free.iter().enumerate() {
            side[c] = bits >> k & 1 == 1;
        }
        let w: f64 = tess
            .facets
            .iter()
            .filter(|f| side[f.cells.0] != side[f.cells.1])
            .map(|f| f.area)
            .sum();
        best = best.min(w);
    }
    Some(best)
}

fn random_tessellation(seed: u64) -> Tessellation {
    let mut rng = RandomStream::new(seed, 0).rng();
    let n = rng.random_range(2..=12);
    let w = Window::new([0.0; 3], [rng.random_range(1.0..3.0), rng.random_range(1.0..3.0), rng.random_range(1.0..3.0)]);
    let points = (0..n)
        .map(|_| [0, 1, 2].map(|k| w.min[k] + rng.random::<f64>() * (w.max[k] - w.min[k])))
        .collect();
    build_voronoi(&PointPattern { window: w, points }, w).unwrap()
}

#[test]
fn min_cut_equals_exhaustive_minimum() {
    let mut compared = 0;
    for seed in 0..200 {
        let t = random_tessellation(seed);
        for axis in Axis::ALL {
            match (exhaustive_min_cut(&t, axis), min_cut_crack(&t, axis)) {
                (Some(best), Ok(cut)) => {
                    assert_eq!(cut.cut_weight, best, "seed {seed} axis {axis:?}");
                    compared += 1;
                }
                (None, Err(Error::NoFiniteCut(_))) => {}
                (o, c) => panic!("seed {seed} axis {axis:?}: oracle {o:?} vs {c:?}"),
            }
        }
    }
    assert!(compared > 100, "only {compared} finite cases");
}

#[test]
fn regular_grid_attachments() {
    // 3x3x3 germs at cell centers of a unit grid
    let w = Window::cube(3.0);
    let mut points = Vec::new();
    for z in 0..3 {
        for y in 0..3 {
            for x in 0..3 {
                points.push([x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5]);
            }
        }
    }
    let t = build_voronoi(&PointPattern { window: w, points }, w).unwrap();
    // 3 * 3 * 2 face-adjacent pairs per axis
    assert_eq!(t.facets.len(), 54);
    assert!(t.facets.iter().all(|f| (f.area - 1.0).abs() < 1e-9));
    for axis in Axis::ALL {
        let g = facet_graph(&t, axis);
        assert_eq!(g.terminal_attachments(), 18);
        assert_eq!(g.edges.len(), 54);
        let cut = min_cut_crack(&t, axis).unwrap();
        assert!((cut.cut_weight - 9.0).abs() < 1e-9);
    }
}
