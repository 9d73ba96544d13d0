use rand::rngs::SmallRng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::physics::{channel_weights, SpecklePhysics, SynthOptions};
use super::rng::{stream, TAG_CALIBRATION, TAG_CAMERA, TAG_FIELD, TAG_INIT};
use super::SynthError;
use crate::trace::{AcquisitionConfig, Frame, FrameStream};

/// Rows per independently seeded block.
const BLOCK_ROWS: usize = 8;

/// Below this mean the photon count is drawn exactly; above it a normal
/// draw with matching variance is used.
const EXACT_POISSON_LIMIT: f64 = 30.0;

const CALIBRATION_DRAWS: u64 = 8;

/// Complex field, real and imaginary parts interleaved.
type Field = Vec<[f64; 2]>;

/// Evolves one or more independent complex speckle fields and integrates
/// their intensity over each exposure.
///
/// Each field component has variance 1/2, so `|E|²` has unit mean. The
/// state carries over between frames; the gap between exposures is
/// bridged with the matching autoregression step.
#[derive(Debug, Clone)]
pub struct SpeckleGenerator {
    config: AcquisitionConfig,
    physics: SpecklePhysics,
    options: SynthOptions,
    seed: u64,
    weights: Vec<f64>,
    kernel: Option<Vec<f64>>,
    fields: Vec<Field>,
    frame_index: u64,
}

fn normal(rng: &mut SmallRng) -> f64 {
    rng.sample(StandardNormal)
}

/// AR(1) coefficients for a step of `dt`: `(ρ, innovation scale)`.
fn ar_step(dt: f64, tau_c: f64) -> (f64, f64) {
    if tau_c.is_infinite() || dt <= 0.0 {
        return (1.0, 0.0);
    }
    let rho = (-dt / tau_c).exp();
    (rho, ((1.0 - rho * rho) * 0.5).sqrt())
}

/// 1-D Gaussian taps with `Σk² = 1`, or `None` when pixels stay
/// uncorrelated.
fn gaussian_kernel(speckle_px: f64) -> Option<Vec<f64>> {
    let sigma = (speckle_px * speckle_px - 1.0).max(0.0).sqrt() / 2.0;
    if sigma < 1e-3 {
        return None;
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    Some(k)
}

impl SpeckleGenerator {
    pub fn new(
        physics: SpecklePhysics,
        config: AcquisitionConfig,
        options: SynthOptions,
        seed: u64,
    ) -> Result<Self, SynthError> {
        config.validate()?;
        physics.validate()?;
        let weights = channel_weights(physics.beta);
        let kernel = gaussian_kernel(physics.speckle_px);
        let mut gen = Self {
            config,
            physics,
            options,
            seed,
            weights,
            kernel,
            fields: Vec::new(),
            frame_index: 0,
        };
        gen.fields = (0..gen.weights.len())
            .map(|c| gen.white_field(TAG_INIT, 0, c as u64))
            .collect();
        if gen.kernel.is_some() {
            for c in 0..gen.fields.len() {
                let f = std::mem::take(&mut gen.fields[c]);
                gen.fields[c] = gen.filter(f);
            }
        }
        Ok(gen)
    }

    pub fn physics(&self) -> &SpecklePhysics {
        &self.physics
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    fn width(&self) -> usize {
        self.config.roi_width as usize
    }

    fn block_len(&self) -> usize {
        BLOCK_ROWS * self.width()
    }

    /// Circular complex white noise with component variance 1/2.
    fn white_field(&self, tag: u64, frame: u64, key: u64) -> Field {
        let mut out = vec![[0.0; 2]; self.config.pixels()];
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        out.par_chunks_mut(self.block_len())
            .enumerate()
            .for_each(|(b, chunk)| {
                let mut rng = stream(self.seed, tag, frame, b as u64, key);
                for z in chunk {
                    *z = [scale * normal(&mut rng), scale * normal(&mut rng)];
                }
            });
        out
    }

    /// Separable circular convolution with the speckle kernel.
    fn filter(&self, field: Field) -> Field {
        let Some(k) = &self.kernel else { return field };
        let w = self.width();
        let h = self.config.roi_height as usize;
        let r = (k.len() / 2) as isize;
        let mut rows = vec![[0.0; 2]; field.len()];
        rows.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
            let src = &field[y * w..(y + 1) * w];
            for (x, o) in out.iter_mut().enumerate() {
                let mut acc = [0.0; 2];
                for (j, kv) in k.iter().enumerate() {
                    let xx = (x as isize + j as isize - r).rem_euclid(w as isize) as usize;
                    acc[0] += kv * src[xx][0];
                    acc[1] += kv * src[xx][1];
                }
                *o = acc;
            }
        });
        let mut out = vec![[0.0; 2]; field.len()];
        out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
            for (j, kv) in k.iter().enumerate() {
                let yy = (y as isize + j as isize - r).rem_euclid(h as isize) as usize;
                let src = &rows[yy * w..(yy + 1) * w];
                for (o, s) in dst.iter_mut().zip(src) {
                    o[0] += kv * s[0];
                    o[1] += kv * s[1];
                }
            }
        });
        out
    }

    /// Exposure-averaged intensity of the next frame, unit mean, no camera.
    pub fn next_intensity(&mut self, tau_c: f64) -> Vec<f64> {
        let exposure = self.config.exposure;
        let m = self.options.substeps(exposure, tau_c);
        let dt = exposure / m as f64;
        let step = ar_step(dt, tau_c);
        // Last sub-sample of the previous exposure to the first of this one.
        let gap = if self.frame_index == 0 {
            (1.0, 0.0)
        } else {
            ar_step(self.config.frame_interval() - exposure + dt, tau_c)
        };
        let mut intensity = vec![0.0; self.config.pixels()];
        let frame = self.frame_index;
        for c in 0..self.fields.len() {
            let w = self.weights[c] / m as f64;
            if self.kernel.is_none() {
                let seed = self.seed;
                let block = self.block_len();
                self.fields[c]
                    .par_chunks_mut(block)
                    .zip(intensity.par_chunks_mut(block))
                    .enumerate()
                    .for_each(|(b, (zs, out))| {
                        let mut rng = stream(seed, TAG_FIELD, frame, b as u64, c as u64);
                        for (z, o) in zs.iter_mut().zip(out.iter_mut()) {
                            let (mut re, mut im) = (z[0], z[1]);
                            let mut acc = 0.0;
                            for i in 0..m {
                                let (rho, s) = if i == 0 { gap } else { step };
                                if s > 0.0 {
                                    re = rho * re + s * normal(&mut rng);
                                    im = rho * im + s * normal(&mut rng);
                                }
                                acc += re * re + im * im;
                            }
                            *z = [re, im];
                            *o += w * acc;
                        }
                    });
            } else {
                for i in 0..m {
                    let (rho, s) = if i == 0 { gap } else { step };
                    if s > 0.0 {
                        let key = ((c as u64) << 32) | i as u64;
                        let innovation = self.filter(self.white_field(TAG_FIELD, frame, key));
                        let sqrt2 = std::f64::consts::SQRT_2;
                        self.fields[c]
                            .par_iter_mut()
                            .zip(innovation.par_iter())
                            .for_each(|(z, n)| {
                                // Innovation has component variance 1/2; rescale to unit.
                                z[0] = rho * z[0] + s * sqrt2 * n[0];
                                z[1] = rho * z[1] + s * sqrt2 * n[1];
                            });
                    }
                    intensity
                        .par_iter_mut()
                        .zip(self.fields[c].par_iter())
                        .for_each(|(o, z)| {
                            *o += w * (z[0] * z[0] + z[1] * z[1]);
                        });
                }
            }
        }
        self.frame_index += 1;
        intensity
    }

    /// Next camera frame for the given decorrelation time and mean signal.
    pub fn next_frame(&mut self, tau_c: f64, mean_e: f64) -> Frame {
        let index = self.frame_index;
        let intensity = self.next_intensity(tau_c);
        let samples = expose(
            &intensity,
            mean_e,
            &self.config,
            self.options.camera_noise,
            self.seed,
            index,
        );
        Frame::new(
            self.config.roi_width,
            self.config.roi_height,
            index as f64 / self.config.fps,
            samples,
        )
    }
}

fn poisson_small(lambda: f64, rng: &mut SmallRng) -> f64 {
    let u: f64 = rng.random();
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0u32;
    while u > cdf && k < 400 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k as f64
}

/// Camera model: photoelectrons `mean_e·I`, optional shot and read noise,
/// conversion to ADU, dark offset, rounding and clipping to the bit depth.
pub fn expose(
    intensity: &[f64],
    mean_e: f64,
    config: &AcquisitionConfig,
    noisy: bool,
    seed: u64,
    frame: u64,
) -> Vec<u16> {
    let max = config.max_adu() as f64;
    let block = BLOCK_ROWS * config.roi_width as usize;
    let mut out = vec![0u16; intensity.len()];
    out.par_chunks_mut(block)
        .zip(intensity.par_chunks(block))
        .enumerate()
        .for_each(|(b, (dst, src))| {
            let mut rng = stream(seed, TAG_CAMERA, frame, b as u64, 0);
            for (d, &i) in dst.iter_mut().zip(src) {
                let lambda = (mean_e * i).max(0.0);
                let electrons = if noisy {
                    let shot = if lambda < EXACT_POISSON_LIMIT {
                        poisson_small(lambda, &mut rng)
                    } else {
                        lambda + lambda.sqrt() * normal(&mut rng)
                    };
                    if config.read_noise > 0.0 {
                        shot + config.read_noise * normal(&mut rng)
                    } else {
                        shot
                    }
                } else {
                    lambda
                };
                let adu = electrons / config.gain + config.dark_offset;
                *d = adu.round().clamp(0.0, max) as u16;
            }
        });
    out
}

/// Constant-physics speckle stream with default integration options.
pub fn generate_speckle_sequence(
    physics: &SpecklePhysics,
    config: &AcquisitionConfig,
    n_frames: usize,
    seed: u64,
) -> Result<FrameStream, SynthError> {
    generate_speckle_sequence_with(physics, config, &SynthOptions::default(), n_frames, seed)
}

pub fn generate_speckle_sequence_with(
    physics: &SpecklePhysics,
    config: &AcquisitionConfig,
    options: &SynthOptions,
    n_frames: usize,
    seed: u64,
) -> Result<FrameStream, SynthError> {
    if n_frames == 0 {
        return Err(SynthError::NoFrames);
    }
    let mut gen = SpeckleGenerator::new(*physics, *config, *options, seed)?;
    let mut stream = FrameStream::new(*config);
    for _ in 0..n_frames {
        stream
            .frames
            .push(gen.next_frame(physics.tau_c, physics.mean_e));
    }
    Ok(stream)
}

/// Frames of uniform illumination: camera noise only, no speckle.
pub fn generate_flat_sequence(
    config: &AcquisitionConfig,
    mean_e: f64,
    n_frames: usize,
    seed: u64,
) -> Result<FrameStream, SynthError> {
    config.validate()?;
    if n_frames == 0 {
        return Err(SynthError::NoFrames);
    }
    if !(mean_e.is_finite() && mean_e > 0.0) {
        return Err(SynthError::InvalidPhysics {
            field: "mean_e",
            reason: "must be a finite positive number".into(),
        });
    }
    let ones = vec![1.0; config.pixels()];
    let mut stream = FrameStream::new(*config);
    for k in 0..n_frames {
        let samples = expose(&ones, mean_e, config, true, seed, k as u64);
        stream.frames.push(Frame::new(
            config.roi_width,
            config.roi_height,
            k as f64 / config.fps,
            samples,
        ));
    }
    Ok(stream)
}

/// Static-limit contrast of the generated field, averaged over several
/// independent patterns. Equals `beta` up to sampling error when pixels
/// are uncorrelated; larger speckles leave fewer independent samples per
/// frame and bias the spatial estimate low.
pub fn calibrate_beta(
    physics: &SpecklePhysics,
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<f64, SynthError> {
    let options = SynthOptions {
        fixed_substeps: Some(1),
        camera_noise: false,
        ..SynthOptions::default()
    };
    let mut total = 0.0;
    for draw in 0..CALIBRATION_DRAWS {
        let sub_seed = stream(seed, TAG_CALIBRATION, draw, 0, 0).random::<u64>();
        let mut gen = SpeckleGenerator::new(*physics, *config, options, sub_seed)?;
        let i = gen.next_intensity(f64::INFINITY);
        let n = i.len() as f64;
        let mean = i.iter().sum::<f64>() / n;
        let var = i.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        total += var / (mean * mean);
    }
    Ok(total / CALIBRATION_DRAWS as f64)
}
