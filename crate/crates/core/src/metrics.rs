//! Image error metrics: RMSE over linear radiance, PSNR and SSIM over
//! values clamped to [0, 1].

use crate::image::{Image, ImageError};
use crate::Float;

fn check_dims(a: &Image, b: &Image) -> Result<(), ImageError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(ImageError::DimensionMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    Ok(())
}

/// Root of the mean squared channel difference, in linear radiance.
pub fn rmse(a: &Image, b: &Image) -> Result<Float, ImageError> {
    check_dims(a, b)?;
    let mut acc = 0.0;
    for (pa, pb) in a.pixels().iter().zip(b.pixels()) {
        let d = *pa - *pb;
        acc += d.r * d.r + d.g * d.g + d.b * d.b;
    }
    Ok((acc / (3 * a.pixels().len()) as Float).sqrt())
}

/// PSNR in dB against `peak`; identical images report +infinity.
pub fn psnr(a: &Image, b: &Image, peak: Float) -> Result<Float, ImageError> {
    check_dims(a, b)?;
    let mut acc = 0.0;
    for (pa, pb) in a.pixels().iter().zip(b.pixels()) {
        let d = pa.clamp01() - pb.clamp01();
        acc += d.r * d.r + d.g * d.g + d.b * d.b;
    }
    let mse = acc / (3 * a.pixels().len()) as Float;
    if mse == 0.0 {
        return Ok(Float::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: Float = 1.5;
const SSIM_K1: Float = 0.01;
const SSIM_K2: Float = 0.03;

fn gaussian_window() -> [Float; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for dy in -half..=half {
        for dx in -half..=half {
            let v = (-((dx * dx + dy * dy) as Float) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[((dy + half) * SSIM_WINDOW as isize + dx + half) as usize] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

fn luminance_plane(img: &Image) -> Vec<Float> {
    img.pixels().iter().map(|p| p.clamp01().luminance()).collect()
}

/// Mean local SSIM on luminance: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1 after clamping. Windows are
/// evaluated where they fit entirely; images smaller than the window fall
/// back to one uniform global window.
pub fn ssim(a: &Image, b: &Image) -> Result<Float, ImageError> {
    check_dims(a, b)?;
    let la = luminance_plane(a);
    let lb = luminance_plane(b);
    let (w, h) = (a.width(), a.height());
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        let n = (w * h) as Float;
        let wgt = 1.0 / n;
        let mut window = Vec::with_capacity(w * h);
        for i in 0..w * h {
            window.push((wgt, la[i], lb[i]));
        }
        return Ok(ssim_of_window(&window, c1, c2));
    }

    let kernel = gaussian_window();
    let half = SSIM_WINDOW / 2;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut window = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for cy in half..h - half {
        for cx in half..w - half {
            window.clear();
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let x = cx + dx - half;
                    let y = cy + dy - half;
                    let i = y * w + x;
                    window.push((kernel[dy * SSIM_WINDOW + dx], la[i], lb[i]));
                }
            }
            total += ssim_of_window(&window, c1, c2);
            count += 1;
        }
    }
    Ok(total / count as Float)
}

fn ssim_of_window(window: &[(Float, Float, Float)], c1: Float, c2: Float) -> Float {
    let mut mu_a = 0.0;
    let mut mu_b = 0.0;
    for &(wgt, va, vb) in window {
        mu_a += wgt * va;
        mu_b += wgt * vb;
    }
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for &(wgt, va, vb) in window {
        var_a += wgt * (va - mu_a) * (va - mu_a);
        var_b += wgt * (vb - mu_b) * (vb - mu_b);
        cov += wgt * (va - mu_a) * (vb - mu_b);
    }
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rgb;

    fn constant(w: usize, h: usize, v: Float) -> Image {
        let mut img = Image::new(w, h);
        img.pixels_mut().fill(Rgb::splat(v));
        img
    }

    fn noisy(w: usize, h: usize, seed: u64, amp: Float) -> Image {
        let mut rng = crate::rng::CounterRng::from_stream(seed, &[1]);
        let mut img = Image::new(w, h);
        for p in img.pixels_mut() {
            *p = Rgb::new(rng.next_f64(), rng.next_f64(), rng.next_f64()) * amp;
        }
        img
    }

    #[test]
    fn identical_images_score_perfectly() {
        let a = noisy(16, 16, 3, 1.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), Float::INFINITY);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_of_constant_offset() {
        let a = constant(8, 8, 0.0);
        let b = constant(8, 8, 0.5);
        assert!((rmse(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn psnr_analytic_case() {
        // mse = 0.01 with peak 1 => 20 dB.
        let a = constant(8, 8, 0.2);
        let b = constant(8, 8, 0.3);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn rmse_is_symmetric_and_triangular() {
        let a = noisy(12, 12, 1, 1.0);
        let b = noisy(12, 12, 2, 1.0);
        let c = noisy(12, 12, 3, 1.0);
        let ab = rmse(&a, &b).unwrap();
        let ba = rmse(&b, &a).unwrap();
        assert_eq!(ab, ba);
        let ac = rmse(&a, &c).unwrap();
        let cb = rmse(&c, &b).unwrap();
        assert!(ab <= ac + cb + 1e-15);
    }

    #[test]
    fn ssim_stays_in_range_and_penalizes_noise() {
        let a = noisy(32, 32, 5, 1.0);
        let b = noisy(32, 32, 6, 1.0);
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!(s < 0.9, "independent noise should not be similar: {s}");
        // Small images use the global-window fallback.
        let tiny_a = constant(4, 4, 0.3);
        let tiny_b = constant(4, 4, 0.3);
        assert!((ssim(&tiny_a, &tiny_b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = constant(4, 4, 0.1);
        let b = constant(4, 5, 0.1);
        assert!(rmse(&a, &b).is_err());
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(ssim(&a, &b).is_err());
    }
}
