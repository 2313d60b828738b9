//! Minimal ISP stage: synchronized white-balance gains plus Bayer
//! mosaic/demosaic on the degraded image only.
//!
//! Both images of an (lq, gt) pair receive identical white-balance gains
//! drawn from the configured range under the ISP seed; the degraded image is
//! additionally sampled to a Bayer mosaic and reconstructed with bilinear
//! demosaicing, mimicking what a camera pipeline does to the aberrated
//! capture while the clean reference stays full-color.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl BayerPattern {
    /// Channel index (0 = R, 1 = G, 2 = B) at pixel parity (x % 2, y % 2).
    fn channel_at(self, x: usize, y: usize) -> usize {
        let key = (x % 2, y % 2);
        match self {
            BayerPattern::Rggb => match key {
                (0, 0) => 0,
                (1, 0) | (0, 1) => 1,
                _ => 2,
            },
            BayerPattern::Bggr => match key {
                (0, 0) => 2,
                (1, 0) | (0, 1) => 1,
                _ => 0,
            },
            BayerPattern::Grbg => match key {
                (1, 0) => 0,
                (0, 0) | (1, 1) => 1,
                _ => 2,
            },
            BayerPattern::Gbrg => match key {
                (0, 1) => 0,
                (0, 0) | (1, 1) => 1,
                _ => 2,
            },
        }
    }
}

impl std::str::FromStr for BayerPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerPattern::Rggb),
            "BGGR" => Ok(BayerPattern::Bggr),
            "GRBG" => Ok(BayerPattern::Grbg),
            "GBRG" => Ok(BayerPattern::Gbrg),
            other => Err(format!("unknown bayer pattern {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IspConfig {
    pub enabled: bool,
    pub bayer_pattern: BayerPattern,
    /// Multiplicative white-balance gain range [lo, hi] for the R and B
    /// channels (green stays at 1).
    pub wb_gain_range: (f64, f64),
    pub seed: u64,
}

impl IspConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            bayer_pattern: BayerPattern::Rggb,
            wb_gain_range: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.wb_gain_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(format!(
                "wb gain range ({lo}, {hi}) must satisfy 0 < lo <= hi"
            ));
        }
        Ok(())
    }
}

fn apply_gains(img: &mut ImageBuffer, gains: [f64; 3]) {
    for (c, g) in gains.iter().enumerate() {
        if *g != 1.0 {
            img.channel_mut(c).iter_mut().for_each(|v| *v *= g);
        }
    }
}

/// Samples the full-color image onto the Bayer lattice and reconstructs it
/// with bilinear interpolation (borders reflected).
fn mosaic_demosaic(img: &ImageBuffer, pattern: BayerPattern) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let mut raw = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            raw[y * w + x] = img.get(pattern.channel_at(x, y), x, y);
        }
    }
    let sample = |x: i64, y: i64| -> f64 {
        let xr = super::reflect(x, w);
        let yr = super::reflect(y, h);
        raw[yr * w + xr]
    };
    let mut out = ImageBuffer::new(w, h);
    out.source_id = img.source_id.clone();
    out.color_state = img.color_state;
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as i64, y as i64);
            let here = pattern.channel_at(x, y);
            for c in 0..3 {
                let v = if c == here {
                    sample(xi, yi)
                } else if c == 1 {
                    // Green at an R/B site: 4-neighbor cross.
                    (sample(xi - 1, yi)
                        + sample(xi + 1, yi)
                        + sample(xi, yi - 1)
                        + sample(xi, yi + 1))
                        / 4.0
                } else if here == 1 {
                    // R or B at a green site: the two aligned neighbors.
                    if pattern.channel_at(x + 1, y) == c {
                        (sample(xi - 1, yi) + sample(xi + 1, yi)) / 2.0
                    } else {
                        (sample(xi, yi - 1) + sample(xi, yi + 1)) / 2.0
                    }
                } else {
                    // Opposite corner channel: 4 diagonal neighbors.
                    (sample(xi - 1, yi - 1)
                        + sample(xi + 1, yi - 1)
                        + sample(xi - 1, yi + 1)
                        + sample(xi + 1, yi + 1))
                        / 4.0
                };
                out.set(c, x, y, v);
            }
        }
    }
    out
}

/// Applies the ISP stage to a degraded/clean pair.
///
/// Identical white-balance gains (seeded) go to both images; only the
/// degraded image is mosaicked and demosaicked. Disabled configs return the
/// pair unchanged.
pub fn apply_isp(
    lq: &ImageBuffer,
    gt: &ImageBuffer,
    isp: &IspConfig,
) -> (ImageBuffer, ImageBuffer) {
    if !isp.enabled {
        return (lq.clone(), gt.clone());
    }
    let (lo, hi) = isp.wb_gain_range;
    let mut rng = ChaCha8Rng::seed_from_u64(isp.seed);
    let gains = if lo == hi {
        [lo, 1.0, lo]
    } else {
        let r = rng.gen_range(lo..=hi);
        let b = rng.gen_range(lo..=hi);
        [r, 1.0, b]
    };
    let mut gt_out = gt.clone();
    apply_gains(&mut gt_out, gains);
    let mut lq_wb = lq.clone();
    apply_gains(&mut lq_wb, gains);
    let lq_out = mosaic_demosaic(&lq_wb, isp.bayer_pattern);
    (lq_out, gt_out)
}
