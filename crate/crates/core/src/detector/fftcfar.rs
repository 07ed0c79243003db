use num_complex::Complex64;

use super::cfar::{ring_mean, ring_offsets, CfarConfig};
use super::nomp::to_detection;
use super::spectrum::compute_spectra;
use super::DetectionSet;
use crate::error::{Error, Result};
use crate::signal::{BasebandCube, RadarParams};

/// Range-Doppler FFT per antenna, noncoherent sum over antennas, 2D CA-CFAR
/// with toroidal rings. A cell is reported when it exceeds the threshold and
/// is the maximum of its 3x3 neighbourhood. Frequencies are bin centres; the
/// per-antenna bin values give the azimuth.
pub fn fft_cfar_detect(
    cube: &BasebandCube,
    params: &RadarParams,
    cfg: &CfarConfig,
) -> Result<DetectionSet> {
    cfg.validate()?;
    if !cube.matches(params) {
        return Err(Error::invalid("cube shape does not match radar parameters"));
    }
    let (n, m, l) = (cube.n, cube.m, cube.l);
    let alpha = cfg.alpha_for(n, m, l)?;
    let offsets = ring_offsets(cfg.train_band, cfg.guard_band);
    let spectra = compute_spectra(cube, 1);
    let power = spectra.coarse_power();
    let limits = params.limits();

    let at = |ix: isize, iy: isize| {
        let x = ix.rem_euclid(n as isize) as usize;
        let y = iy.rem_euclid(m as isize) as usize;
        power[y * n + x]
    };
    let mut hits = Vec::new();
    for iy in 0..m {
        for ix in 0..n {
            let p = power[iy * n + ix];
            let noise = ring_mean(&power, n, m, ix, iy, &offsets);
            if p <= alpha * noise {
                continue;
            }
            let mut peak = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if (dx, dy) != (0, 0) && at(ix as isize + dx, iy as isize + dy) > p {
                        peak = false;
                        break 'nb;
                    }
                }
            }
            if peak {
                hits.push((ix, iy));
            }
        }
    }

    // each cell holds N M |gamma|^2 + L sigma2 in expectation
    let mut background: Vec<f64> = power.clone();
    for &(ix, iy) in &hits {
        background[iy * n + ix] = f64::NAN;
    }
    let kept: Vec<f64> = background.into_iter().filter(|p| p.is_finite()).collect();
    let sigma2_hat = if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / (kept.len() * l) as f64
    };

    let norm = (n * m) as f64;
    let detections = hits
        .into_iter()
        .map(|(ix, iy)| {
            let gains: Vec<Complex64> =
                (0..l).map(|li| spectra.coarse(li, ix, iy) / norm).collect();
            to_detection(
                [spectra.omega_x(ix), spectra.omega_y(iy)],
                gains,
                &limits,
                n,
                m,
                sigma2_hat,
                true,
            )
        })
        .collect();
    Ok(DetectionSet {
        detections,
        sigma2_hat,
        residual_energy: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synthesize_frame, EchoSource, PolarState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn on_grid_target_found_at_its_bin() {
        let p = RadarParams::simulation();
        let lim = p.limits();
        let src = EchoSource {
            state: PolarState {
                range: 20.0 / 128.0 * lim.r_max,
                velocity: 2.0 * 6.0 / 64.0 * lim.v_max,
                azimuth: 0.25,
            },
            gamma: Complex64::new(0.3, 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cube = synthesize_frame(&p, &[src], 1.0, &mut rng).unwrap();
        let out = fft_cfar_detect(&cube, &p, &CfarConfig::default()).unwrap();
        assert_eq!(out.detections.len(), 1);
        let d = &out.detections[0];
        assert!((d.state.range - src.state.range).abs() < 1e-9);
        assert!((d.state.velocity - src.state.velocity).abs() < 1e-9);
        assert!((d.state.azimuth - 0.25).abs() < 0.05);
        assert!((out.sigma2_hat - 1.0).abs() < 0.05);
    }
}
