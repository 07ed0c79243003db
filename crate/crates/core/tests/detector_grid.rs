//! MNOMP refinement against an exhaustive fine-grid search on a tiny cube.

use std::f64::consts::PI;

use mmtrack::detector::{mnomp_detect, CfarConfig};
use mmtrack::signal::{BasebandCube, RadarParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn objective(data: &[Complex64], n: usize, m: usize, l: usize, wx: f64, wy: f64) -> f64 {
    (0..l)
        .map(|li| {
            let mut u = Complex64::new(0.0, 0.0);
            for mi in 0..m {
                for ni in 0..n {
                    u += data[(li * m + mi) * n + ni]
                        * Complex64::cis(-(ni as f64 * wx + mi as f64 * wy));
                }
            }
            u.norm_sqr()
        })
        .sum()
}

fn circular(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[test]
fn refined_frequency_matches_fine_grid_argmax() {
    let (n, m, l) = (4, 4, 2);
    let mut radar = RadarParams::simulation();
    radar.n = n;
    radar.m = m;
    radar.l = l;
    let cfg = CfarConfig {
        alpha: Some(1e-3),
        k_max: 1,
        ..CfarConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fine = 1024;
    let cell = 2.0 * PI / fine as f64;
    for _ in 0..5 {
        let w = [
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
        ];
        let g: Vec<Complex64> = (0..l)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        let mut data = vec![Complex64::new(0.0, 0.0); n * m * l];
        for li in 0..l {
            for mi in 0..m {
                for ni in 0..n {
                    let noise = Complex64::new(
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                    );
                    data[(li * m + mi) * n + ni] =
                        g[li] * Complex64::cis(ni as f64 * w[0] + mi as f64 * w[1]) + noise;
                }
            }
        }
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for iy in 0..fine {
            for ix in 0..fine {
                let (wx, wy) = (ix as f64 * cell, iy as f64 * cell);
                let s = objective(&data, n, m, l, wx, wy);
                if s > best.0 {
                    best = (s, wx, wy);
                }
            }
        }
        let cube = BasebandCube::from_data(n, m, l, data).unwrap();
        let set = mnomp_detect(&cube, &radar, &cfg).unwrap();
        let d = &set.detections[0];
        assert!(
            circular(d.omega[0], best.1) <= cell,
            "wx {} vs {}",
            d.omega[0],
            best.1
        );
        assert!(
            circular(d.omega[1], best.2) <= cell,
            "wy {} vs {}",
            d.omega[1],
            best.2
        );
    }
}
