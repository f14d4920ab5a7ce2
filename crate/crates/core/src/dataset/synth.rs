//! Synthetic crack images: value-noise textured backgrounds with dark,
//! thin random-walk strokes. The mask is exactly the stroke pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ImageSample;
use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};

const MAX_ATTEMPTS: usize = 32;
const WALKS_PER_STROKE: usize = 8;
const NOISE_CELL: usize = 8;
const HEADING_SIGMA: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of strokes per image.
    pub strokes_per_image: [usize; 2],
    /// Inclusive range of square brush widths in pixels.
    pub stroke_width: [usize; 2],
    /// Range the per-image crack fraction must land in.
    pub target_crack_fraction: [f64; 2],
    /// Amplitude of per-pixel uniform noise added on top of the texture.
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 200,
            height: 64,
            width: 64,
            strokes_per_image: [1, 3],
            stroke_width: [1, 2],
            target_crack_fraction: [0.01, 0.05],
            noise_amplitude: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let [flo, fhi] = self.target_crack_fraction;
        if !(flo > 0.0 && flo <= fhi && fhi < 0.5) {
            return bad(format!(
                "target crack fraction [{flo}, {fhi}] must lie within (0, 0.5)"
            ));
        }
        if self.height == 0 || self.width == 0 {
            return bad("image dimensions must be positive".into());
        }
        let [slo, shi] = self.strokes_per_image;
        if slo == 0 || slo > shi {
            return bad(format!("stroke count range [{slo}, {shi}] is invalid"));
        }
        let [wlo, whi] = self.stroke_width;
        if wlo == 0 || wlo > whi {
            return bad(format!("stroke width range [{wlo}, {whi}] is invalid"));
        }
        if !(0.0..0.5).contains(&self.noise_amplitude) {
            return bad(format!(
                "noise amplitude {} must lie in [0, 0.5)",
                self.noise_amplitude
            ));
        }
        Ok(())
    }
}

/// Generates `config.count` samples. Sample `i` depends only on
/// `(config, i)`, so the batch is reproducible and order-independent.
pub fn gen_synthetic(config: &SynthConfig) -> Result<Vec<ImageSample>> {
    config.validate()?;
    (0..config.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            generate_one(config, i, &mut rng)
        })
        .collect()
}

fn generate_one(config: &SynthConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<ImageSample> {
    let (h, w) = (config.height, config.width);
    let [flo, fhi] = config.target_crack_fraction;
    let total = (h * w) as f64;
    for _ in 0..MAX_ATTEMPTS {
        let target = rng.random_range(flo..=fhi);
        let strokes = rng.random_range(config.strokes_per_image[0]..=config.strokes_per_image[1]);
        let mut mask = Mask::zeros(h, w);
        let mut painted = 0usize;
        for k in 0..strokes {
            let share = target * (k + 1) as f64 / strokes as f64;
            let brush = rng.random_range(config.stroke_width[0]..=config.stroke_width[1]);
            for _ in 0..WALKS_PER_STROKE {
                if painted as f64 / total >= share {
                    break;
                }
                painted += random_walk(&mut mask, brush, share, total, painted, rng);
            }
        }
        let fraction = painted as f64 / total;
        if fraction >= flo && fraction <= fhi {
            let pixels = render(config, &mask, rng);
            return ImageSample::new(format!("synth_{index:04}"), pixels, mask);
        }
    }
    Err(Error::Generation(format!(
        "sample {index}: crack fraction stayed outside [{flo}, {fhi}] after {MAX_ATTEMPTS} attempts"
    )))
}

/// Walks from a random start with a slowly turning heading, painting a
/// square brush at each 8-connected step until `share` of the image is
/// crack or the walk leaves the frame. Returns the newly painted count.
fn random_walk(
    mask: &mut Mask,
    brush: usize,
    share: f64,
    total: f64,
    mut painted: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let (h, w) = mask.dims();
    let start = painted;
    let turn = Normal::new(0.0, HEADING_SIGMA).expect("valid sigma");
    let mut py = rng.random_range(0.0..h as f64);
    let mut px = rng.random_range(0.0..w as f64);
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    let lo = (brush as isize - 1) / 2;
    let hi = brush as isize / 2;
    let max_steps = 4 * (h + w);
    for _ in 0..max_steps {
        let (cy, cx) = (py.floor() as isize, px.floor() as isize);
        if cy < 0 || cx < 0 || cy >= h as isize || cx >= w as isize {
            break;
        }
        for dy in -lo..=hi {
            for dx in -lo..=hi {
                let (y, x) = (cy + dy, cx + dx);
                if y >= 0 && x >= 0 && y < h as isize && x < w as isize {
                    let (y, x) = (y as usize, x as usize);
                    if !mask.get(y, x) {
                        mask.set(y, x, true);
                        painted += 1;
                    }
                }
            }
        }
        if painted as f64 / total >= share {
            break;
        }
        heading += turn.sample(rng);
        // snapped to the 8-neighbourhood; one rounded component is always nonzero
        py += heading.sin().round();
        px += heading.cos().round();
    }
    painted - start
}

/// Background: a per-image tinted base level modulated by bilinear value
/// noise, plus per-pixel uniform noise. Crack pixels are darkened.
fn render(config: &SynthConfig, mask: &Mask, rng: &mut ChaCha8Rng) -> Grid3 {
    let (h, w) = mask.dims();
    let base = rng.random_range(0.55..0.75);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.04..0.04));
    let darkness = rng.random_range(0.25..0.45);

    let gh = h / NOISE_CELL + 2;
    let gw = w / NOISE_CELL + 2;
    let lattice: Vec<f64> = (0..gh * gw)
        .map(|_| rng.random_range(-0.08..0.08))
        .collect();
    let texture = |y: usize, x: usize| {
        let fy = y as f64 / NOISE_CELL as f64;
        let fx = x as f64 / NOISE_CELL as f64;
        let (iy, ix) = (fy.floor() as usize, fx.floor() as usize);
        let (ty, tx) = (fy - iy as f64, fx - ix as f64);
        let at = |a: usize, b: usize| lattice[a * gw + b];
        let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
        let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    };

    let amp = config.noise_amplitude;
    let mut grid = Grid3::zeros(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            let level = base + texture(y, x);
            let shade = if mask.get(y, x) { darkness } else { 1.0 };
            for (c, t) in tint.iter().enumerate() {
                let noise = if amp > 0.0 {
                    rng.random_range(-amp..amp)
                } else {
                    0.0
                };
                grid.set(y, x, c, ((level + t) * shade + noise).clamp(0.0, 1.0));
            }
        }
    }
    grid
}
