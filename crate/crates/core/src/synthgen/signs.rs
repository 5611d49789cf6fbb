//! Long-memory sign sequences.
//!
//! Signs are taken from a stationary Gaussian sequence generated by
//! circulant embedding. Taking signs maps a Gaussian autocorrelation rho
//! onto `(2/pi) asin(rho)` (the arcsine law), so the Gaussian target is
//! pre-warped with `sin` to land the sign autocorrelation exactly on the
//! requested power law `C(l) = 0.5 * l^-gamma`.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// fGn autocovariance at lag `k` for Hurst index `h` (unit variance).
fn fgn_rho(k: usize, h: f64) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Gaussian covariance whose sign process has ACF `0.5 * l^-gamma`.
fn sign_target_rho(k: usize, gamma: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        (std::f64::consts::FRAC_PI_2 * 0.5 * (k as f64).powf(-gamma)).sin()
    }
}

/// Sample `n` points of a stationary Gaussian sequence with the covariance
/// `rho` via circulant embedding (Davies-Harte). Slightly negative embedding
/// eigenvalues are clipped.
fn circulant_gaussian<R: Rng>(rng: &mut R, n: usize, rho: impl Fn(usize) -> f64) -> Vec<f64> {
    assert!(n >= 1);
    if n == 1 {
        return vec![rng.sample(StandardNormal)];
    }
    let m = (2 * (n - 1)).next_power_of_two();
    let half = m / 2;
    let mut c: Vec<Complex<f64>> = (0..m)
        .map(|k| {
            let lag = if k <= half { k } else { m - k };
            Complex::new(rho(lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut c);
    let lambda: Vec<f64> = c.iter().map(|z| z.re.max(0.0)).collect();

    let mut a = vec![Complex::new(0.0, 0.0); m];
    let scale = 1.0 / (m as f64).sqrt();
    a[0] = Complex::new((lambda[0]).sqrt() * rng.sample::<f64, _>(StandardNormal), 0.0) * scale;
    a[half] =
        Complex::new((lambda[half]).sqrt() * rng.sample::<f64, _>(StandardNormal), 0.0) * scale;
    for k in 1..half {
        let amp = (lambda[k] / 2.0).sqrt() * scale;
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        a[k] = Complex::new(amp * re, amp * im);
        a[m - k] = a[k].conj();
    }
    planner.plan_fft_forward(m).process(&mut a);
    a.truncate(n);
    a.into_iter().map(|z| z.re).collect()
}

/// Sample `n` points of fractional Gaussian noise with Hurst index `h`.
pub fn fractional_gaussian_noise<R: Rng>(rng: &mut R, n: usize, h: f64) -> Vec<f64> {
    assert!(h > 0.0 && h < 1.0, "Hurst index must lie in (0, 1)");
    circulant_gaussian(rng, n, |k| fgn_rho(k, h))
}

/// Signs with long-memory autocorrelation `C(l) = 0.5 * l^-gamma`.
pub fn long_memory_signs<R: Rng>(rng: &mut R, n: usize, gamma: f64) -> Vec<i8> {
    circulant_gaussian(rng, n, |k| sign_target_rho(k, gamma))
        .into_iter()
        .map(|x| if x >= 0.0 { 1 } else { -1 })
        .collect()
}
