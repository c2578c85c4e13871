//! In-memory video model and the `.rvf` container.
//!
//! An `.rvf` file is a single UTF-8 JSON header line such as
//! `{"T":2,"H":4,"W":4,"C":3}` terminated by `\n`, followed by exactly
//! `T*H*W*C` raw bytes in row-major `(T, H, W, C)` order. Frames use `C = 3`
//! (RGB). Mask stacks use `C = 2`: per pixel the binary plane (0 or 1)
//! followed by the modulation value quantized to `round(c * 255)`.
//!
//! A directory of `%06d.png` frames can also be read, which is convenient
//! for inspecting corrupted output with ordinary image tools.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Channels per frame pixel.
pub const FRAME_CHANNELS: usize = 3;
/// Channels per mask pixel in the container (binary, modulation).
pub const MASK_CHANNELS: usize = 2;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed rvf header: {0}")]
    MalformedHeader(String),
    #[error("payload length mismatch: header declares {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("inconsistent png dimensions: {path} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    InconsistentPng {
        path: PathBuf,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("png directory {0} has no frames named %06d.png")]
    EmptyDirectory(PathBuf),
    #[error("png frame numbering is not contiguous: expected {expected:06}.png, found {found}")]
    NonContiguous { expected: usize, found: String },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("invalid mask value: {0}")]
    MaskValue(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FrameError + '_ {
    move |source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Frames per second as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

/// Header line of an `.rvf` container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RvfHeader {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<FrameRate>,
}

impl RvfHeader {
    pub fn payload_len(&self) -> Option<usize> {
        self.t
            .checked_mul(self.h)?
            .checked_mul(self.w)?
            .checked_mul(self.c)
    }
}

/// Writes a header and payload to `path`.
pub fn write_rvf(path: &Path, header: &RvfHeader, payload: &[u8]) -> Result<(), FrameError> {
    let line = serde_json::to_string(header).expect("header serializes");
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    out.write_all(line.as_bytes()).map_err(io_err(path))?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.write_all(payload).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Reads a header and payload from `path`, checking the payload length.
pub fn read_rvf(path: &Path) -> Result<(RvfHeader, Vec<u8>), FrameError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(io_err(path))?;
    if line.last() != Some(&b'\n') {
        return Err(FrameError::MalformedHeader(
            "missing newline after header".into(),
        ));
    }
    line.pop();
    let text = std::str::from_utf8(&line)
        .map_err(|e| FrameError::MalformedHeader(format!("header is not UTF-8: {e}")))?;
    let header: RvfHeader =
        serde_json::from_str(text).map_err(|e| FrameError::MalformedHeader(e.to_string()))?;
    let expected = header
        .payload_len()
        .ok_or_else(|| FrameError::MalformedHeader("dimensions overflow".into()))?;
    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload).map_err(io_err(path))?;
    if payload.len() != expected {
        return Err(FrameError::PayloadLength {
            expected,
            actual: payload.len(),
        });
    }
    Ok((header, payload))
}

/// A video `V = {f_1..f_T}` stored as a dense `(T, H, W, 3)` byte tensor.
///
/// The payload is shared, so clones are cheap and the sequence can be
/// handed to concurrent workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    t: usize,
    h: usize,
    w: usize,
    data: Arc<[u8]>,
    frame_rate: Option<FrameRate>,
}

impl FrameSequence {
    pub fn new(t: usize, h: usize, w: usize, data: Vec<u8>) -> Result<Self, FrameError> {
        if t == 0 || h == 0 || w == 0 {
            return Err(FrameError::Shape(format!(
                "T, H and W must be positive, got ({t}, {h}, {w})"
            )));
        }
        let expected = t
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .and_then(|v| v.checked_mul(FRAME_CHANNELS))
            .ok_or_else(|| FrameError::Shape("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(FrameError::PayloadLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            t,
            h,
            w,
            data: data.into(),
            frame_rate: None,
        })
    }

    pub fn zeros(t: usize, h: usize, w: usize) -> Result<Self, FrameError> {
        Self::new(t, h, w, vec![0; t * h * w * FRAME_CHANNELS])
    }

    /// Builds a sequence from per-frame `(H, W, 3)` buffers.
    pub fn from_frames(h: usize, w: usize, frames: Vec<Vec<u8>>) -> Result<Self, FrameError> {
        let t = frames.len();
        let frame_len = h * w * FRAME_CHANNELS;
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != frame_len) {
            return Err(FrameError::Shape(format!(
                "frame {i} has {} bytes, expected {frame_len}",
                f.len()
            )));
        }
        Self::new(t, h, w, frames.concat())
    }

    pub fn with_frame_rate(mut self, rate: Option<FrameRate>) -> Self {
        self.frame_rate = rate;
        self
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        FRAME_CHANNELS
    }

    /// `(T, H, W)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn frame_rate(&self) -> Option<FrameRate> {
        self.frame_rate
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * FRAME_CHANNELS
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Frame `t` (0-based) as an `(H, W, 3)` slice.
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.frame_len())
    }

    pub fn header(&self) -> RvfHeader {
        RvfHeader {
            t: self.t,
            h: self.h,
            w: self.w,
            c: FRAME_CHANNELS,
            fps: self.frame_rate,
        }
    }
}

/// Per-frame binary map `B_t` and modulation map `C_t`, both `(T, H, W)`.
///
/// The fused mask `P_t = B_t * C_t` is computed on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    t: usize,
    h: usize,
    w: usize,
    binary: Vec<u8>,
    modulation: Vec<f32>,
}

impl MaskStack {
    pub fn new(
        t: usize,
        h: usize,
        w: usize,
        binary: Vec<u8>,
        modulation: Vec<f32>,
    ) -> Result<Self, FrameError> {
        if t == 0 || h == 0 || w == 0 {
            return Err(FrameError::Shape(format!(
                "T, H and W must be positive, got ({t}, {h}, {w})"
            )));
        }
        let n = t * h * w;
        if binary.len() != n || modulation.len() != n {
            return Err(FrameError::PayloadLength {
                expected: n,
                actual: binary.len().min(modulation.len()),
            });
        }
        if let Some(b) = binary.iter().find(|&&b| b > 1) {
            return Err(FrameError::MaskValue(format!("binary value {b} is not 0 or 1")));
        }
        if let Some(c) = modulation.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(FrameError::MaskValue(format!(
                "modulation value {c} outside [0, 1]"
            )));
        }
        Ok(Self {
            t,
            h,
            w,
            binary,
            modulation,
        })
    }

    /// `(T, H, W)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn binary(&self) -> &[u8] {
        &self.binary
    }

    pub fn modulation(&self) -> &[f32] {
        &self.modulation
    }

    pub fn binary_frame(&self, t: usize) -> &[u8] {
        let n = self.h * self.w;
        &self.binary[t * n..(t + 1) * n]
    }

    pub fn modulation_frame(&self, t: usize) -> &[f32] {
        let n = self.h * self.w;
        &self.modulation[t * n..(t + 1) * n]
    }

    /// `P = B * C` at flat index `i` of the `(T, H, W)` grid.
    pub fn fused(&self, i: usize) -> f32 {
        f32::from(self.binary[i]) * self.modulation[i]
    }

    /// Fraction of pixels with `B = 1` in frame `t`.
    pub fn coverage(&self, t: usize) -> f64 {
        let frame = self.binary_frame(t);
        frame.iter().filter(|&&b| b == 1).count() as f64 / frame.len() as f64
    }

    /// Fraction of pixels with `B = 1` over the whole stack.
    pub fn mean_coverage(&self) -> f64 {
        self.binary.iter().filter(|&&b| b == 1).count() as f64 / self.binary.len() as f64
    }

    /// Centroid `(y, x)` of the binary map in frame `t`, `None` when empty.
    pub fn centroid(&self, t: usize) -> Option<(f64, f64)> {
        let frame = self.binary_frame(t);
        let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
        for (i, &b) in frame.iter().enumerate() {
            if b == 1 {
                sy += (i / self.w) as f64;
                sx += (i % self.w) as f64;
                n += 1;
            }
        }
        (n > 0).then(|| (sy / n as f64, sx / n as f64))
    }

    /// Interleaved container payload: `[b, round(c * 255)]` per pixel.
    pub fn to_container_bytes(&self) -> Vec<u8> {
        self.binary
            .iter()
            .zip(&self.modulation)
            .flat_map(|(&b, &c)| [b, (c * 255.0).round() as u8])
            .collect()
    }

    pub fn header(&self) -> RvfHeader {
        RvfHeader {
            t: self.t,
            h: self.h,
            w: self.w,
            c: MASK_CHANNELS,
            fps: None,
        }
    }
}

/// Reads a `.rvf` file or a directory of `%06d.png` frames.
pub fn read_sequence(path: &Path) -> Result<FrameSequence, FrameError> {
    if path.is_dir() {
        return read_png_dir(path);
    }
    let (header, payload) = read_rvf(path)?;
    if header.c != FRAME_CHANNELS {
        return Err(FrameError::Shape(format!(
            "frame container must have C = 3, found C = {}",
            header.c
        )));
    }
    Ok(FrameSequence::new(header.t, header.h, header.w, payload)?.with_frame_rate(header.fps))
}

/// Writes `seq` as a `.rvf` container.
pub fn write_sequence(seq: &FrameSequence, path: &Path) -> Result<(), FrameError> {
    write_rvf(path, &seq.header(), seq.as_bytes())
}

pub fn write_mask(mask: &MaskStack, path: &Path) -> Result<(), FrameError> {
    write_rvf(path, &mask.header(), &mask.to_container_bytes())
}

/// Reads a mask container. Modulation comes back quantized to multiples of 1/255.
pub fn read_mask(path: &Path) -> Result<MaskStack, FrameError> {
    let (header, payload) = read_rvf(path)?;
    if header.c != MASK_CHANNELS {
        return Err(FrameError::Shape(format!(
            "mask container must have C = 2, found C = {}",
            header.c
        )));
    }
    let (binary, modulation) = payload
        .chunks_exact(MASK_CHANNELS)
        .map(|px| (px[0], f32::from(px[1]) / 255.0))
        .unzip();
    MaskStack::new(header.t, header.h, header.w, binary, modulation)
}

fn png_frame_index(name: &str) -> Option<usize> {
    let stem = name.strip_suffix(".png")?;
    if stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()) {
        stem.parse().ok()
    } else {
        None
    }
}

fn read_png_dir(dir: &Path) -> Result<FrameSequence, FrameError> {
    let mut entries: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            png_frame_index(&name).map(|i| (i, e.path()))
        })
        .collect();
    if entries.is_empty() {
        return Err(FrameError::EmptyDirectory(dir.to_path_buf()));
    }
    entries.sort();
    let mut frames = Vec::with_capacity(entries.len());
    let mut dims: Option<(u32, u32)> = None;
    for (expected, (index, path)) in entries.iter().enumerate() {
        if *index != expected {
            return Err(FrameError::NonContiguous {
                expected,
                found: path.display().to_string(),
            });
        }
        let img = image::open(path)
            .map_err(|source| FrameError::Image {
                path: path.clone(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        match dims {
            None => dims = Some((w, h)),
            Some((want_w, want_h)) if (want_w, want_h) != (w, h) => {
                return Err(FrameError::InconsistentPng {
                    path: path.clone(),
                    got_w: w,
                    got_h: h,
                    want_w,
                    want_h,
                })
            }
            Some(_) => {}
        }
        frames.push(img.into_raw());
    }
    let (w, h) = dims.expect("at least one frame");
    FrameSequence::from_frames(h as usize, w as usize, frames)
}

/// Writes each frame as `%06d.png` into `dir`, creating it if needed.
pub fn write_png_dir(seq: &FrameSequence, dir: &Path) -> Result<(), FrameError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (t, frame) in seq.frames().enumerate() {
        let path = dir.join(format!("{t:06}.png"));
        image::save_buffer(
            &path,
            frame,
            seq.width() as u32,
            seq.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| FrameError::Image { path, source })?;
    }
    Ok(())
}
