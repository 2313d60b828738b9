//! Structural similarity with the standard 11x11 Gaussian window.

use super::{MetricError, Plane};
use crate::util::compensated_sum;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering with the 1D window, horizontal then
/// vertical. Output is (w - 10) x (h - 10).
fn filter_valid(data: &[f64], w: usize, h: usize, win: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wv) in win.iter().enumerate() {
                acc += wv * data[y * w + x + k];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wv) in win.iter().enumerate() {
                acc += wv * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM between two planes on unit dynamic range.
pub fn ssim_plane(a: &Plane, b: &Plane) -> Result<f64, MetricError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricError::ShapeMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: b.width,
            b_h: b.height,
        });
    }
    let (w, h) = (a.width, a.height);
    if w < WINDOW || h < WINDOW {
        return Err(MetricError::ImageTooSmall(w.min(h)));
    }
    let win = gaussian_window();
    let n = a.data.len();
    let mut aa = vec![0.0; n];
    let mut bb = vec![0.0; n];
    let mut ab = vec![0.0; n];
    for i in 0..n {
        aa[i] = a.data[i] * a.data[i];
        bb[i] = b.data[i] * b.data[i];
        ab[i] = a.data[i] * b.data[i];
    }
    let mu_a = filter_valid(&a.data, w, h, &win);
    let mu_b = filter_valid(&b.data, w, h, &win);
    let m_aa = filter_valid(&aa, w, h, &win);
    let m_bb = filter_valid(&bb, w, h, &win);
    let m_ab = filter_valid(&ab, w, h, &win);

    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let values = (0..mu_a.len()).map(|i| {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    });
    Ok(compensated_sum(values) / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct per-window implementation used as an independent oracle:
    /// moments accumulated with explicit nested loops and variances computed
    /// from centered sums rather than the raw-moment identity.
    fn ssim_reference(a: &Plane, b: &Plane) -> f64 {
        let win = gaussian_window();
        let (w, h) = (a.width, a.height);
        let mut total = 0.0;
        let mut count = 0usize;
        for y0 in 0..=(h - WINDOW) {
            for x0 in 0..=(w - WINDOW) {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                for j in 0..WINDOW {
                    for i in 0..WINDOW {
                        let wv = win[i] * win[j];
                        mu_a += wv * a.data[(y0 + j) * w + x0 + i];
                        mu_b += wv * b.data[(y0 + j) * w + x0 + i];
                    }
                }
                let mut va = 0.0;
                let mut vb = 0.0;
                let mut cov = 0.0;
                for j in 0..WINDOW {
                    for i in 0..WINDOW {
                        let wv = win[i] * win[j];
                        let da = a.data[(y0 + j) * w + x0 + i] - mu_a;
                        let db = b.data[(y0 + j) * w + x0 + i] - mu_b;
                        va += wv * da * da;
                        vb += wv * db * db;
                        cov += wv * da * db;
                    }
                }
                let c1 = K1 * K1;
                let c2 = K2 * K2;
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    fn noisy_plane(w: usize, h: usize, salt: u64) -> Plane {
        let data = (0..w * h)
            .map(|i| {
                let bits = crate::util::splitmix64(salt ^ i as u64);
                0.2 + 0.6 * ((bits >> 11) as f64 / (1u64 << 53) as f64)
            })
            .collect();
        Plane::new(w, h, data)
    }

    #[test]
    fn matches_the_independent_reference_on_random_pairs() {
        let a = noisy_plane(64, 64, 11);
        let b = noisy_plane(64, 64, 97);
        let fast = ssim_plane(&a, &b).unwrap();
        let slow = ssim_reference(&a, &b);
        assert!((fast - slow).abs() < 1e-6, "fast {fast} slow {slow}");
    }

    #[test]
    fn reference_agrees_on_correlated_pairs_too() {
        let a = noisy_plane(32, 48, 5);
        let mut b = a.clone();
        for (i, v) in b.data.iter_mut().enumerate() {
            *v = (*v + noisy_plane(32, 48, 1234).data[i]) / 2.0;
        }
        let fast = ssim_plane(&a, &b).unwrap();
        let slow = ssim_reference(&a, &b);
        assert!((fast - slow).abs() < 1e-6);
    }
}
