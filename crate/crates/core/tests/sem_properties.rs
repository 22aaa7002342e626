use microforge_core::boolean::{sample_boolean, voxelize_grains, GrainShapeSpec, GrainSpec, Orientation};
use microforge_core::dist::SizeDist;
use microforge_core::points::Window;
use microforge_core::sem::*;
use microforge_core::{Dims, LabelMask, RandomStream};

fn quiet(delta: f64) -> SemConfig {
    SemConfig { noise_stddev: 0.0, attenuation_depth_vox: delta, ..SemConfig::default() }
}

/// Column `(x, y)` is solid up to height `(x + 3y) mod nz`.
fn staircase(d: Dims) -> LabelMask {
    LabelMask::from_fn(d, |x, y, z| z < (x + 3 * y) % d.nz)
}

#[test]
fn shine_through_is_monotone_in_depth() {
    let d = Dims::new(24, 8, 24);
    let solid = staircase(d);
    let cfg = quiet(6.0);
    let s = sem_signal(&solid, &cfg).unwrap();
    let mut samples: Vec<(i64, f32)> = Vec::new();
    for (k, &z0) in s.planes.iter().enumerate() {
        for y in 0..d.ny {
            for x in 0..d.nx {
                if solid.get(x, y, z0) {
                    continue;
                }
                let top = (x + 3 * y) % d.nz;
                let depth = if top == 0 { i64::MAX } else { z0 as i64 - (top as i64 - 1) };
                samples.push((depth, s.images.get(x, y, k)));
            }
        }
    }
    samples.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let violations = samples.windows(2).filter(|w| w[1].1 > w[0].1).count();
    assert_eq!(violations, 0);
    assert!(samples.iter().any(|s| s.0 == 1));
}

#[test]
fn threshold_recovers_slices_without_noise() {
    let w = Window::cube(40.0);
    let spec = GrainSpec {
        shape: GrainShapeSpec::Cylinder { radius: SizeDist::constant(3.0), height: SizeDist::constant(20.0) },
        orientation: Orientation::Isotropic,
    };
    let grains = sample_boolean(&spec, 2e-3, w, RandomStream::new(5, 0)).unwrap();
    let solid = voxelize_grains(&grains, Dims::cube(40), [1.0; 3]).unwrap();
    let cfg = quiet(1e-9);
    let s = simulate_sem_stack(&solid, &cfg, RandomStream::new(5, 1)).unwrap();
    let mid = ((cfg.solid_intensity + cfg.background_intensity) / 2.0) as f32;
    let recovered = LabelMask::from_bits(s.images.dims(), s.images.data().iter().map(|&v| v > mid).collect()).unwrap();
    assert_eq!(recovered, s.truth);
    assert_eq!(s.truth, solid);
}

#[test]
fn noisy_stack_has_shine_through() {
    // pores directly above solid are brighter than pores above nothing
    let d = Dims::new(16, 16, 16);
    let solid = LabelMask::from_fn(d, |x, _, z| x < 8 && z < 4);
    let cfg = SemConfig::default();
    let s = simulate_sem_stack(&solid, &cfg, RandomStream::new(6, 0)).unwrap();
    let mean = |xs: std::ops::Range<usize>| {
        let mut acc = 0.0;
        for y in 0..16 {
            for x in xs.clone() {
                acc += s.images.get(x, y, 6) as f64;
            }
        }
        acc / (16 * xs.len()) as f64
    };
    assert!(mean(0..8) > mean(8..16) + 0.3);
}
