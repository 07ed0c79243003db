use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::wrap_pi;

/// `u(w) = a_L(w)^H g` and its first two derivatives in `w`.
fn correlate(gains: &[Complex64], w: f64) -> [Complex64; 3] {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (l, &g) in gains.iter().enumerate() {
        let lf = l as f64;
        let t = g * Complex64::cis(-lf * w);
        out[0] += t;
        out[1] += t * Complex64::new(0.0, -lf);
        out[2] -= t * (lf * lf);
    }
    out
}

/// Least-squares fit of `gamma a_L(wz)` to the gain vector: periodogram
/// argmax on a grid oversampled 16 times (at least 64 points), then Newton
/// iterations on `|a_L(w)^H g|^2`. Returns `(wz in [-pi, pi), gamma)`.
pub fn azimuth_ls(gains: &[Complex64]) -> Result<(f64, Complex64)> {
    let l = gains.len();
    if l < 2 {
        return Err(Error::Unidentifiable(format!(
            "azimuth needs at least 2 antennas, got {l}"
        )));
    }
    let grid = (16 * l).max(64);
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..grid {
        let w = -PI + 2.0 * PI * k as f64 / grid as f64;
        let p = correlate(gains, w)[0].norm_sqr();
        if p > best.1 {
            best = (w, p);
        }
    }
    let step_limit = 2.0 * PI / grid as f64;
    let mut w = best.0;
    for _ in 0..30 {
        let [u, du, ddu] = correlate(gains, w);
        let grad = 2.0 * (u.conj() * du).re;
        let curv = 2.0 * (du.norm_sqr() + (u.conj() * ddu).re);
        if curv >= 0.0 {
            break;
        }
        let step = -grad / curv;
        if step.abs() > step_limit {
            break;
        }
        w += step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    let w = wrap_pi(w);
    let gamma = correlate(gains, w)[0] / l as f64;
    Ok((w, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crb::{crb_freq, SignalPoint};
    use crate::signal::complex_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn steer(l: usize, w: f64, g: Complex64) -> Vec<Complex64> {
        (0..l).map(|k| g * Complex64::cis(k as f64 * w)).collect()
    }

    #[test]
    fn noiseless_exact() {
        let g = Complex64::new(2.0, 1.0);
        let (w, gamma) = azimuth_ls(&steer(8, 0.7, g)).unwrap();
        assert!((w - 0.7).abs() < 1e-9);
        assert!((gamma - g).norm() < 1e-9);
    }

    #[test]
    fn boresight() {
        let (w, gamma) = azimuth_ls(&[Complex64::new(1.5, 0.0); 4]).unwrap();
        assert!(w.abs() < 1e-12);
        assert!((gamma - Complex64::new(1.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_antenna_rejected() {
        assert!(azimuth_ls(&[Complex64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn noisy_mse_near_bound() {
        // 20 dB per-antenna SNR on an 8-element gain vector
        let l = 8;
        let g = Complex64::new(1.0, 0.0);
        let sigma2 = 0.01;
        let w0 = 0.4;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 4000;
        let mut mse = 0.0;
        for _ in 0..trials {
            let mut v = steer(l, w0, g);
            for x in v.iter_mut() {
                *x += complex_normal(&mut rng, sigma2);
            }
            let (w, _) = azimuth_ls(&v).unwrap();
            mse += (w - w0).powi(2);
        }
        mse /= trials as f64;
        let p = SignalPoint {
            omega: [0.0, 0.0, w0],
            g: 1.0,
            phi: 0.0,
            sigma2,
            n: 2,
            m: 2,
            l,
        };
        // the frequency bound with N = M = 1 scaling: 6 sigma2 / (L (L^2 - 1) g^2)
        let bound = crb_freq(&p).unwrap()[(2, 2)] * 4.0;
        let ratio_db = 10.0 * (mse / bound).log10();
        assert!(ratio_db.abs() < 3.0, "mse {mse} bound {bound}");
    }
}
