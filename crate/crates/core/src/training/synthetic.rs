//! Procedural image sequences with exact ego-motion ground truth.
//!
//! A camera looks straight down its optical axis (+z) at a textured plane
//! and moves in that plane: translation along its own x/y axes plus yaw
//! about z. Pixel `(u, v)` sees the plane point at camera coordinates
//! `((u + ½ − W/2)·m, (v + ½ − H/2)·m)`, with `m` meters per pixel.

use memvo_tensor::Tensor;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{integrate_relative, Pose6DoF, PoseSE3};
use crate::io::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Pattern {
    /// Sum of random sinusoidal gratings covering the whole plane.
    Texture,
    /// A textured square of the given side (pixels) centered on the first
    /// camera's optical axis, on a zero background.
    Square { side: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSequenceSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub pattern: Pattern,
    pub meters_per_pixel: f64,
    /// Camera-frame translation per frame along x and y, meters.
    pub velocity: [f64; 2],
    /// Rotation about the optical axis per frame, radians.
    pub yaw_rate: f64,
    /// Each motion component is scaled by `1 + jitter·u`, `u ~ U[−1, 1]`,
    /// independently per frame.
    pub jitter: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSequenceSpec {
    fn default() -> Self {
        Self {
            frames: 11,
            height: 64,
            width: 64,
            pattern: Pattern::Texture,
            meters_per_pixel: 0.05,
            velocity: [0.05, 0.0],
            yaw_rate: 0.0,
            jitter: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(invalid("synthetic sequences need frames and non-empty images"));
        }
        if !(self.meters_per_pixel > 0.0) {
            return Err(invalid("meters_per_pixel must be positive"));
        }
        let finite = self.velocity.iter().all(|v| v.is_finite())
            && self.yaw_rate.is_finite()
            && self.jitter >= 0.0
            && self.jitter.is_finite()
            && self.noise >= 0.0
            && self.noise.is_finite();
        if !finite {
            return Err(invalid("motion must be finite; jitter and noise non-negative"));
        }
        if let Pattern::Square { side } = self.pattern {
            if !(side > 0.0) {
                return Err(invalid("square side must be positive"));
            }
        }
        Ok(())
    }
}

/// Frames plus ground truth from [`make_synthetic_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub sequence: Sequence,
    /// Relative poses `P_{t−1}⁻¹·P_t`, one per step.
    pub relative: Vec<Pose6DoF>,
}

#[derive(Debug, Clone, Copy)]
struct Grating {
    amplitude: f64,
    kx: f64,
    ky: f64,
    phase: f64,
}

const GRATINGS: usize = 5;

/// Per-channel grating sets; wave vectors are in cycles per pixel so the
/// texture scales with the image, not the metric unit.
fn textures(rng: &mut ChaCha8Rng) -> [Vec<Grating>; 3] {
    std::array::from_fn(|_| {
        (0..GRATINGS)
            .map(|_| {
                let wavelength = rng.random_range(6.0..20.0);
                let dir = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                Grating {
                    amplitude: rng.random_range(0.5..1.0),
                    kx: k * dir.cos(),
                    ky: k * dir.sin(),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect()
    })
}

/// Intensity in `[0, 1]` at plane point `(x, y)` given in pixels.
fn texture_value(gratings: &[Grating], x: f64, y: f64) -> f64 {
    let total: f64 = gratings.iter().map(|g| g.amplitude).sum();
    let s: f64 = gratings
        .iter()
        .map(|g| g.amplitude * (g.kx * x + g.ky * y + g.phase).sin())
        .sum();
    0.5 + 0.5 * s / total
}

fn render(
    spec: &SyntheticSequenceSpec,
    pose: &PoseSE3,
    textures: &[Vec<Grating>; 3],
    noise: &mut Option<(ChaCha8Rng, Normal<f64>)>,
) -> Tensor {
    let (h, w, m) = (spec.height, spec.width, spec.meters_per_pixel);
    let mut data = vec![0.0; 3 * h * w];
    for v in 0..h {
        for u in 0..w {
            let q = Vector3::new(
                (u as f64 + 0.5 - w as f64 / 2.0) * m,
                (v as f64 + 0.5 - h as f64 / 2.0) * m,
                1.0,
            );
            let world = pose.transform_point(&q);
            let (x, y) = (world.x / m, world.y / m);
            let inside = match spec.pattern {
                Pattern::Texture => true,
                Pattern::Square { side } => x.abs() <= side / 2.0 && y.abs() <= side / 2.0,
            };
            for (c, tex) in textures.iter().enumerate() {
                data[c * h * w + v * w + u] = if inside { texture_value(tex, x, y) } else { 0.0 };
            }
        }
    }
    if let Some((rng, dist)) = noise {
        for x in &mut data {
            *x += dist.sample(rng);
        }
    }
    Tensor::new(vec![3, h, w], data).expect("buffer sized for [3, H, W]")
}

pub fn make_synthetic_sequence(spec: &SyntheticSequenceSpec) -> Result<SyntheticSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let textures = textures(&mut rng);
    let wobble = |value: f64, rng: &mut ChaCha8Rng| {
        if spec.jitter > 0.0 {
            value * (1.0 + spec.jitter * rng.random_range(-1.0..=1.0))
        } else {
            value
        }
    };
    let relative: Vec<Pose6DoF> = (1..spec.frames)
        .map(|_| {
            let vx = wobble(spec.velocity[0], &mut rng);
            let vy = wobble(spec.velocity[1], &mut rng);
            let yaw = wobble(spec.yaw_rate, &mut rng);
            Pose6DoF::new(Vector3::new(vx, vy, 0.0), Vector3::new(0.0, 0.0, yaw))
        })
        .collect();
    let poses = integrate_relative(&relative, &PoseSE3::identity());
    let mut noise = (spec.noise > 0.0).then(|| {
        (
            ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15),
            Normal::new(0.0, spec.noise).expect("finite positive deviation"),
        )
    });
    let frames = poses
        .iter()
        .map(|p| render(spec, p, &textures, &mut noise))
        .collect();
    Ok(SyntheticSequence {
        sequence: Sequence::new(frames, poses)?,
        relative,
    })
}

/// Several sequences with motion drawn uniformly from per-component ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub sequences: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub pattern: Pattern,
    pub meters_per_pixel: f64,
    /// Forward (camera x) translation per frame, meters.
    pub speed: [f64; 2],
    /// Sideways (camera y) translation per frame, meters.
    pub lateral: [f64; 2],
    /// Yaw per frame, radians.
    pub yaw_rate: [f64; 2],
    pub jitter: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            sequences: 8,
            frames: 11,
            height: 64,
            width: 64,
            pattern: Pattern::Texture,
            meters_per_pixel: 0.05,
            speed: [0.05, 0.1],
            lateral: [-0.02, 0.02],
            yaw_rate: [-0.02, 0.02],
            jitter: 0.1,
            noise: 0.01,
            seed: 0,
        }
    }
}

fn sample_range(rng: &mut ChaCha8Rng, range: [f64; 2]) -> Result<f64> {
    let [lo, hi] = range;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("invalid range [{lo}, {hi}]")));
    }
    Ok(if lo == hi { lo } else { rng.random_range(lo..hi) })
}

impl DatasetSpec {
    pub fn sequence_specs(&self) -> Result<Vec<SyntheticSequenceSpec>> {
        if self.sequences == 0 {
            return Err(invalid("a dataset needs at least one sequence"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.sequences)
            .map(|_| {
                let spec = SyntheticSequenceSpec {
                    frames: self.frames,
                    height: self.height,
                    width: self.width,
                    pattern: self.pattern,
                    meters_per_pixel: self.meters_per_pixel,
                    velocity: [
                        sample_range(&mut rng, self.speed)?,
                        sample_range(&mut rng, self.lateral)?,
                    ],
                    yaw_rate: sample_range(&mut rng, self.yaw_rate)?,
                    jitter: self.jitter,
                    noise: self.noise,
                    seed: rng.random(),
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    pub fn generate(&self) -> Result<Vec<Sequence>> {
        self.sequence_specs()?
            .iter()
            .map(|s| make_synthetic_sequence(s).map(|g| g.sequence))
            .collect()
    }
}
