//! Binary frame files.
//!
//! Layout, all little-endian, 64-byte header:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `SCOS` |
//! | 4 | 2 | format version (u16) |
//! | 6 | 4 | width (u32) |
//! | 10 | 4 | height (u32) |
//! | 14 | 8 | fps (f64) |
//! | 22 | 2 | bit depth (u16) |
//! | 24 | 8 | gain, e⁻/ADU (f64) |
//! | 32 | 8 | read noise, e⁻ (f64) |
//! | 40 | 8 | dark offset, ADU (f64) |
//! | 48 | 8 | exposure, s (f64) |
//! | 56 | 8 | frame count (u64) |
//!
//! followed by `frame_count` frames of `width·height` u16 samples, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::IoError;
use crate::trace::{AcquisitionConfig, Frame, FrameMoments, FrameStream};

pub const MAGIC: [u8; 4] = *b"SCOS";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScosHeader {
    pub version: u16,
    pub config: AcquisitionConfig,
    pub frame_count: u64,
}

impl ScosHeader {
    pub fn frame_bytes(&self) -> u64 {
        self.config.roi_width as u64 * self.config.roi_height as u64 * 2
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN + self.frame_count * self.frame_bytes()
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN as usize] {
        let c = &self.config;
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&c.roi_width.to_le_bytes());
        b[10..14].copy_from_slice(&c.roi_height.to_le_bytes());
        b[14..22].copy_from_slice(&c.fps.to_le_bytes());
        b[22..24].copy_from_slice(&c.bit_depth.to_le_bytes());
        b[24..32].copy_from_slice(&c.gain.to_le_bytes());
        b[32..40].copy_from_slice(&c.read_noise.to_le_bytes());
        b[40..48].copy_from_slice(&c.dark_offset.to_le_bytes());
        b[48..56].copy_from_slice(&c.exposure.to_le_bytes());
        b[56..64].copy_from_slice(&self.frame_count.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN as usize]) -> Result<Self, IoError> {
        if b[0..4] != MAGIC {
            return Err(IoError::BadMagic {
                found: [b[0], b[1], b[2], b[3]],
            });
        }
        let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(IoError::UnsupportedVersion { version });
        }
        let config = AcquisitionConfig {
            roi_width: u32_at(6),
            roi_height: u32_at(10),
            fps: f64_at(14),
            bit_depth: u16_at(22),
            gain: f64_at(24),
            read_noise: f64_at(32),
            dark_offset: f64_at(40),
            exposure: f64_at(48),
        };
        config.validate().map_err(IoError::InvalidHeader)?;
        Ok(Self {
            version,
            config,
            frame_count: u64::from_le_bytes(b[56..64].try_into().unwrap()),
        })
    }
}

/// Sequential frame reader. Holds one frame buffer regardless of the
/// number of frames.
pub struct ScosReader<R> {
    inner: R,
    header: ScosHeader,
    next: u64,
    bytes: Vec<u8>,
}

impl<R: Read> ScosReader<R> {
    pub fn new(mut inner: R) -> Result<Self, IoError> {
        let mut b = [0u8; HEADER_LEN as usize];
        inner.read_exact(&mut b).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => IoError::Truncated {
                offset: 0,
                expected: HEADER_LEN,
            },
            _ => IoError::Io(e),
        })?;
        let header = ScosHeader::from_bytes(&b)?;
        Ok(Self {
            inner,
            bytes: vec![0; header.frame_bytes() as usize],
            header,
            next: 0,
        })
    }

    pub fn header(&self) -> &ScosHeader {
        &self.header
    }

    pub fn frames_read(&self) -> u64 {
        self.next
    }

    fn fill(&mut self) -> Result<bool, IoError> {
        if self.next >= self.header.frame_count {
            return Ok(false);
        }
        let start = HEADER_LEN + self.next * self.header.frame_bytes();
        let mut got = 0;
        while got < self.bytes.len() {
            match self.inner.read(&mut self.bytes[got..]) {
                Ok(0) => {
                    return Err(IoError::Truncated {
                        offset: start + got as u64,
                        expected: self.header.file_len(),
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(IoError::Io(e)),
            }
        }
        Ok(true)
    }

    fn timestamp(&self) -> f64 {
        self.next as f64 / self.header.config.fps
    }

    /// Next frame, or `None` after the last one.
    pub fn read_frame(&mut self) -> Result<Option<Frame>, IoError> {
        let mut samples = Vec::new();
        Ok(self.read_frame_into(&mut samples)?.map(|t| {
            let c = &self.header.config;
            Frame::new(c.roi_width, c.roi_height, t, samples)
        }))
    }

    /// Decodes the next frame into `samples`, returning its timestamp.
    pub fn read_frame_into(&mut self, samples: &mut Vec<u16>) -> Result<Option<f64>, IoError> {
        if !self.fill()? {
            return Ok(None);
        }
        samples.clear();
        samples.extend(
            self.bytes
                .chunks_exact(2)
                .map(|p| u16::from_le_bytes([p[0], p[1]])),
        );
        let limit = self.header.config.max_adu();
        if let Some(i) = samples.iter().position(|&v| v > limit) {
            return Err(IoError::SampleOutOfRange {
                offset: HEADER_LEN + self.next * self.header.frame_bytes() + 2 * i as u64,
                value: samples[i],
                bit_depth: self.header.config.bit_depth,
            });
        }
        let t = self.timestamp();
        self.next += 1;
        Ok(Some(t))
    }

    /// Moments of the next frame straight from the byte buffer.
    pub fn read_moments(&mut self) -> Result<Option<(f64, FrameMoments)>, IoError> {
        if !self.fill()? {
            return Ok(None);
        }
        let m = moments_le(&self.bytes);
        // The maximum bounds every sample, so one comparison checks the frame.
        if m.1 > self.header.config.max_adu() {
            let i = self
                .bytes
                .chunks_exact(2)
                .position(|p| u16::from_le_bytes([p[0], p[1]]) == m.1)
                .unwrap_or(0);
            return Err(IoError::SampleOutOfRange {
                offset: HEADER_LEN + self.next * self.header.frame_bytes() + 2 * i as u64,
                value: m.1,
                bit_depth: self.header.config.bit_depth,
            });
        }
        let t = self.timestamp();
        self.next += 1;
        Ok(Some((t, m.0)))
    }
}

/// Exact moments and maximum of little-endian u16 samples.
fn moments_le(bytes: &[u8]) -> (FrameMoments, u16) {
    let (mut sum, mut sum_sq, mut max) = (0u64, 0u64, 0u16);
    for chunk in bytes.chunks(8192) {
        // Per-chunk u32/u64 partial sums stay exact: 4096 · 65535 < 2^32.
        let (mut s, mut q, mut m) = (0u32, 0u64, 0u16);
        for p in chunk.chunks_exact(2) {
            let v = u16::from_le_bytes([p[0], p[1]]);
            s += u32::from(v);
            q += u64::from(u32::from(v) * u32::from(v));
            m = m.max(v);
        }
        sum += u64::from(s);
        sum_sq += q;
        max = max.max(m);
    }
    (
        FrameMoments {
            count: bytes.len() as u64 / 2,
            sum,
            sum_sq,
        },
        max,
    )
}

impl<R: Read> Iterator for ScosReader<R> {
    type Item = Result<Frame, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_frame().transpose()
    }
}

/// Opens a frame file and checks its length against the header.
pub fn open_scos(path: &Path) -> Result<ScosReader<BufReader<File>>, IoError> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let reader = ScosReader::new(BufReader::with_capacity(1 << 20, file))?;
    let expected = reader.header().file_len();
    if len < expected {
        return Err(IoError::Truncated {
            offset: len,
            expected,
        });
    }
    if len > expected {
        return Err(IoError::SizeMismatch {
            expected,
            found: len,
        });
    }
    Ok(reader)
}

pub struct ScosWriter<W: Write> {
    inner: W,
    header: ScosHeader,
    written: u64,
    bytes: Vec<u8>,
}

impl<W: Write> ScosWriter<W> {
    pub fn new(mut inner: W, config: AcquisitionConfig, frame_count: u64) -> Result<Self, IoError> {
        config.validate().map_err(IoError::InvalidHeader)?;
        let header = ScosHeader {
            version: FORMAT_VERSION,
            config,
            frame_count,
        };
        inner.write_all(&header.to_bytes())?;
        Ok(Self {
            inner,
            header,
            written: 0,
            bytes: Vec::with_capacity(header.frame_bytes() as usize),
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), IoError> {
        frame
            .check_dimensions(&self.header.config)
            .map_err(IoError::InvalidHeader)?;
        if self.written >= self.header.frame_count {
            return Err(IoError::FrameCountMismatch {
                declared: self.header.frame_count,
                written: self.written + 1,
            });
        }
        let limit = self.header.config.max_adu();
        if let Some(i) = frame.samples.iter().position(|&v| v > limit) {
            return Err(IoError::SampleOutOfRange {
                offset: HEADER_LEN + self.written * self.header.frame_bytes() + 2 * i as u64,
                value: frame.samples[i],
                bit_depth: self.header.config.bit_depth,
            });
        }
        self.bytes.clear();
        for v in &frame.samples {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&self.bytes)?;
        self.written += 1;
        Ok(())
    }

    /// Flushes and checks that the declared number of frames was written.
    pub fn finish(mut self) -> Result<W, IoError> {
        if self.written != self.header.frame_count {
            return Err(IoError::FrameCountMismatch {
                declared: self.header.frame_count,
                written: self.written,
            });
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_stream(path: &Path, stream: &FrameStream) -> Result<(), IoError> {
    let mut w = ScosWriter::new(
        BufWriter::new(File::create(path)?),
        stream.config,
        stream.frames.len() as u64,
    )?;
    for f in &stream.frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_stream(path: &Path) -> Result<FrameStream, IoError> {
    let mut r = open_scos(path)?;
    let mut stream = FrameStream::new(r.header().config);
    while let Some(f) = r.read_frame()? {
        stream.frames.push(f);
    }
    Ok(stream)
}
