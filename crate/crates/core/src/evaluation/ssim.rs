use crate::data::RainFrame;
use crate::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
/// `(0.01 L)^2` and `(0.03 L)^2` for dynamic range `L = 1`.
pub const C1: f64 = 1e-4;
pub const C2: f64 = 9e-4;

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let mut t = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

/// Separable valid-region filtering of an `h × w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let line = &x[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&line[c..c + WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(r + k) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean structural similarity over all fully contained 11×11 Gaussian windows.
pub fn ssim_planes(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::Shape("SSIM planes do not match their dimensions".into()));
    }
    if h < WINDOW || w < WINDOW {
        return Err(Error::Domain(format!(
            "{h}x{w} frames are smaller than the {WINDOW}x{WINDOW} SSIM window"
        )));
    }
    let taps = gaussian_taps();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &taps);
    let mu_b = filter_valid(b, h, w, &taps);
    let e_aa = filter_valid(&prod(a, a), h, w, &taps);
    let e_bb = filter_valid(&prod(b, b), h, w, &taps);
    let e_ab = filter_valid(&prod(a, b), h, w, &taps);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok(total / n as f64)
}

/// SSIM of two normalized frames with dynamic range 1.
pub fn ssim(a: &RainFrame, b: &RainFrame) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("SSIM of {:?} and {:?} frames", a.dims(), b.dims())));
    }
    let (h, w) = a.dims();
    ssim_planes(a.normalized()?, b.normalized()?, h, w)
}
