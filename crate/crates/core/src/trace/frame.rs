use super::{AcquisitionConfig, TraceError};

/// One monochrome camera frame, row-major ADU samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Seconds since stream start.
    pub timestamp: f64,
    pub samples: Vec<u16>,
}

impl Frame {
    pub fn new(width: u32, height: u32, timestamp: f64, samples: Vec<u16>) -> Self {
        debug_assert_eq!(samples.len(), width as usize * height as usize);
        Self {
            width,
            height,
            timestamp,
            samples,
        }
    }

    pub fn filled(width: u32, height: u32, timestamp: f64, value: u16) -> Self {
        Self::new(
            width,
            height,
            timestamp,
            vec![value; width as usize * height as usize],
        )
    }

    pub fn check_dimensions(&self, config: &AcquisitionConfig) -> Result<(), TraceError> {
        if self.width != config.roi_width
            || self.height != config.roi_height
            || self.samples.len() != config.pixels()
        {
            return Err(TraceError::DimensionMismatch {
                expected: (config.roi_width, config.roi_height),
                found: (self.width, self.height),
            });
        }
        Ok(())
    }
}

/// A timestamped sequence of frames together with the acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStream {
    pub config: AcquisitionConfig,
    pub frames: Vec<Frame>,
}

impl FrameStream {
    pub fn new(config: AcquisitionConfig) -> Self {
        Self {
            config,
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Exact integer first and second moments of a frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameMoments {
    pub count: u64,
    pub sum: u64,
    pub sum_sq: u64,
}

impl FrameMoments {
    pub fn from_samples(samples: &[u16]) -> Self {
        // u16² summed over < 2^32 samples cannot overflow u64.
        let mut sum = 0u64;
        let mut sum_sq = 0u64;
        for chunk in samples.chunks(4096) {
            let mut s = 0u64;
            let mut sq = 0u64;
            for &v in chunk {
                let v = v as u64;
                s += v;
                sq += v * v;
            }
            sum += s;
            sum_sq += sq;
        }
        Self {
            count: samples.len() as u64,
            sum,
            sum_sq,
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    /// Population variance, evaluated from the exact integer moments.
    pub fn variance(&self) -> f64 {
        let n = self.count as u128;
        let numer = n * self.sum_sq as u128 - (self.sum as u128) * (self.sum as u128);
        numer as f64 / (n * n) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_frame() {
        let m = FrameMoments::from_samples(&[0, 2, 0, 2]);
        assert_eq!(m.count, 4);
        assert_eq!(m.sum, 4);
        assert_eq!(m.sum_sq, 8);
        assert_eq!(m.mean(), 1.0);
        assert_eq!(m.variance(), 1.0);
    }

    #[test]
    fn variance_of_large_constant_frame_is_exactly_zero() {
        let samples = vec![65535u16; 1920 * 1200];
        let m = FrameMoments::from_samples(&samples);
        assert_eq!(m.variance(), 0.0);
    }

    #[test]
    fn dimension_check() {
        let cfg = AcquisitionConfig::default();
        let f = Frame::filled(16, 16, 0.0, 1);
        assert!(matches!(
            f.check_dimensions(&cfg),
            Err(TraceError::DimensionMismatch { .. })
        ));
    }
}
