//! Frame sequences, annotation boxes and the little-endian binary caches.
//!
//! Cache layouts (all little-endian):
//!
//! | file        | layout                                                                       |
//! |-------------|------------------------------------------------------------------------------|
//! | flow        | `FLO1`, u32 width, u32 height, height*width * (f32 u, f32 v)                 |
//! | saliency    | `SAL1`, u32 width, u32 height, height*width * f32                            |
//! | trajectory  | `TRJ1`, u32 count, count * (u32 frame, f32 x, f32 y, u32 scale, 15 * (f32 dx, f32 dy)) |
//! | descriptor  | `DSC1`, u32 count, u32 dim, count*dim * f32                                  |
//! | boxes (CSV) | `frame,x,y,w,h,score`                                                        |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgproc::Plane;
use crate::optical_flow::FlowField;
use crate::saliency::SaliencyMap;
use crate::trajectories::{Trajectory, TRACK_LENGTH};

pub const FLOW_MAGIC: &[u8; 4] = b"FLO1";
pub const SALIENCY_MAGIC: &[u8; 4] = b"SAL1";
pub const TRAJECTORY_MAGIC: &[u8; 4] = b"TRJ1";
pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"DSC1";

/// An 8-bit frame, grayscale (1 channel) or RGB (3 channels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    pub index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>, index: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("frame {index} has zero size")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "frame {index}: expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data, index })
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>, index: usize) -> Result<Self> {
        Self::new(width, height, 1, data, index)
    }

    /// Grayscale intensities as floats. RGB is reduced to rounded luma
    /// `0.299 R + 0.587 G + 0.114 B`.
    pub fn to_plane(&self) -> Plane {
        let data = match self.channels {
            1 => self.data.iter().map(|&v| v as f32).collect(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|p| luma(p[0], p[1], p[2]) as f32)
                .collect(),
        };
        Plane::from_vec(self.width, self.height, data)
    }

    /// Single-channel copy of this frame.
    pub fn to_gray(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self.data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
        Frame { width: self.width, height: self.height, channels: 1, data, index: self.index }
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().clamp(0.0, 255.0) as u8
}

/// Actor annotation; pixels `x..x+w`, `y..y+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotationBox {
    pub frame_index: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl AnnotationBox {
    /// Inclusive containment test on integer pixel coordinates.
    pub fn contains(&self, px: i64, py: i64) -> bool {
        px >= self.x as i64
            && py >= self.y as i64
            && px < (self.x + self.w) as i64
            && py < (self.y + self.h) as i64
    }
}

// ---------------------------------------------------------------------------
// PNM frames
// ---------------------------------------------------------------------------

pub fn frame_file_name(index: usize, channels: usize) -> String {
    let ext = if channels == 3 { "ppm" } else { "pgm" };
    format!("frame_{index:06}.{ext}")
}

/// Parse a binary PGM (P5) or PPM (P6) with maxval 255.
pub fn decode_pnm(bytes: &[u8], index: usize) -> Result<Frame> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("frame {index:06}: truncated PNM header")));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("frame {index:06}: unsupported PNM magic {other}"))),
    };
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("frame {index:06}: bad PNM header field {s:?}")))
    };
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("frame {index:06}: maxval {maxval} unsupported")));
    }
    let len = width * height * channels;
    if bytes.len() < pos + len {
        return Err(Error::Format(format!("frame {index:06}: truncated raster")));
    }
    Frame::new(width, height, channels, bytes[pos..pos + len].to_vec(), index)
}

pub fn encode_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.data);
    out
}

pub fn write_frame(dir: &Path, frame: &Frame) -> Result<()> {
    let path = dir.join(frame_file_name(frame.index, frame.channels));
    fs::write(&path, encode_pnm(frame)).map_err(|e| Error::io(&path, e))
}

/// Load `frame_%06d.pgm` / `.ppm` files numbered consecutively from 0.
pub fn load_sequence(dir: &Path) -> Result<Vec<Frame>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(idx) = parse_frame_name(&name) {
            indices.push((idx, entry.path()));
        }
    }
    indices.sort();
    let mut frames: Vec<Frame> = Vec::with_capacity(indices.len());
    for (expected, (idx, path)) in indices.into_iter().enumerate() {
        if idx != expected {
            return Err(Error::MissingFrame(expected));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let frame = decode_pnm(&bytes, idx)?;
        if let Some(first) = frames.first() {
            if (frame.width, frame.height, frame.channels) != (first.width, first.height, first.channels) {
                return Err(Error::Dimension(format!(
                    "frame {idx:06} is {}x{}x{}, expected {}x{}x{}",
                    frame.width, frame.height, frame.channels, first.width, first.height, first.channels
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn parse_frame_name(name: &str) -> Option<usize> {
    let stem = name.strip_prefix("frame_")?;
    let digits = stem.strip_suffix(".pgm").or_else(|| stem.strip_suffix(".ppm"))?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

/// Parse `frame,x,y,w,h` lines and clip each box to `width x height`.
/// Boxes with no area left after clipping are dropped.
pub fn parse_annotations(text: &str, width: u32, height: u32) -> Result<Vec<AnnotationBox>> {
    let mut boxes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line_no == 1 && fields.iter().any(|f| f.chars().any(|c| c.is_ascii_alphabetic())) {
            continue;
        }
        if fields.len() < 5 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 5 fields, got {}", fields.len()) });
        }
        let mut vals = [0i64; 5];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse().map_err(|_| Error::Parse { line: line_no, msg: format!("non-integer field {f:?}") })?;
        }
        let [frame, x, y, w, h] = vals;
        if frame < 0 {
            return Err(Error::Parse { line: line_no, msg: "negative frame index".into() });
        }
        let x0 = x.max(0);
        let y0 = y.max(0);
        let x1 = (x + w).min(width as i64);
        let y1 = (y + h).min(height as i64);
        if x1 - x0 < 1 || y1 - y0 < 1 {
            continue;
        }
        boxes.push(AnnotationBox {
            frame_index: frame as u32,
            x: x0 as u32,
            y: y0 as u32,
            w: (x1 - x0) as u32,
            h: (y1 - y0) as u32,
        });
    }
    Ok(boxes)
}

pub fn load_annotations(path: &Path, width: u32, height: u32) -> Result<Vec<AnnotationBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, width, height)
}

pub fn write_annotations(path: &Path, boxes: &[AnnotationBox]) -> Result<()> {
    let mut out = String::from("frame,x,y,w,h\n");
    for b in boxes {
        out.push_str(&format!("{},{},{},{},{}\n", b.frame_index, b.x, b.y, b.w, b.h));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Binary helpers
// ---------------------------------------------------------------------------

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format(format!("unexpected end of {what} data")));
        }
        if &bytes[..4] != magic {
            return Err(Error::Format(format!(
                "bad {what} magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        Ok(Self { bytes, pos: 4, what })
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("unexpected end of {} data", self.what)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!("trailing bytes after {} data", self.what)));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Flow
// ---------------------------------------------------------------------------

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.u.len() * 8);
    out.extend_from_slice(FLOW_MAGIC);
    put_u32(&mut out, flow.width as u32);
    put_u32(&mut out, flow.height as u32);
    for (u, v) in flow.u.iter().zip(&flow.v) {
        put_f32(&mut out, *u);
        put_f32(&mut out, *v);
    }
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    let mut r = ByteReader::new(bytes, FLOW_MAGIC, "flow")?;
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let pairs = r.f32_vec(width * height * 2)?;
    r.finish()?;
    let (u, v) = pairs.chunks_exact(2).map(|p| (p[0], p[1])).unzip();
    Ok(FlowField { width, height, u, v })
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    write_bytes(path, &encode_flow(flow))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    decode_flow(&read_bytes(path)?)
}

// ---------------------------------------------------------------------------
// Saliency
// ---------------------------------------------------------------------------

pub fn encode_saliency(map: &SaliencyMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + map.values.len() * 4);
    out.extend_from_slice(SALIENCY_MAGIC);
    put_u32(&mut out, map.width as u32);
    put_u32(&mut out, map.height as u32);
    for v in &map.values {
        put_f32(&mut out, *v);
    }
    out
}

pub fn decode_saliency(bytes: &[u8], frame_index: u32) -> Result<SaliencyMap> {
    let mut r = ByteReader::new(bytes, SALIENCY_MAGIC, "saliency")?;
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let values = r.f32_vec(width * height)?;
    r.finish()?;
    Ok(SaliencyMap { width, height, values, frame_index })
}

pub fn write_saliency(path: &Path, map: &SaliencyMap) -> Result<()> {
    write_bytes(path, &encode_saliency(map))
}

pub fn read_saliency(path: &Path, frame_index: u32) -> Result<SaliencyMap> {
    decode_saliency(&read_bytes(path)?, frame_index)
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

pub fn encode_trajectories(tracks: &[Trajectory]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + tracks.len() * (16 + TRACK_LENGTH * 8));
    out.extend_from_slice(TRAJECTORY_MAGIC);
    put_u32(&mut out, tracks.len() as u32);
    for t in tracks {
        put_u32(&mut out, t.start_frame);
        put_f32(&mut out, t.start_point.0);
        put_f32(&mut out, t.start_point.1);
        put_u32(&mut out, t.scale_index);
        for &(dx, dy) in &t.displacements {
            put_f32(&mut out, dx);
            put_f32(&mut out, dy);
        }
    }
    out
}

pub fn decode_trajectories(bytes: &[u8]) -> Result<Vec<Trajectory>> {
    let mut r = ByteReader::new(bytes, TRAJECTORY_MAGIC, "trajectory")?;
    let count = r.u32()? as usize;
    let mut tracks = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let start_frame = r.u32()?;
        let x = r.f32()?;
        let y = r.f32()?;
        let scale_index = r.u32()?;
        let mut displacements = [(0.0f32, 0.0f32); TRACK_LENGTH];
        for d in displacements.iter_mut() {
            *d = (r.f32()?, r.f32()?);
        }
        tracks.push(Trajectory { start_frame, start_point: (x, y), scale_index, displacements });
    }
    r.finish()?;
    Ok(tracks)
}

pub fn write_trajectories(path: &Path, tracks: &[Trajectory]) -> Result<()> {
    write_bytes(path, &encode_trajectories(tracks))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    decode_trajectories(&read_bytes(path)?)
}

// ---------------------------------------------------------------------------
// Descriptors
// ---------------------------------------------------------------------------

/// `count x dim` row-major descriptor matrix as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl DescriptorMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f32]>) -> Self {
        let mut m = Self::new(dim);
        for r in rows {
            m.push(r);
        }
        m
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn push(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.dim, "descriptor row dimension");
        self.data.extend_from_slice(row);
    }
}

pub fn encode_descriptors(m: &DescriptorMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + m.data.len() * 4);
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    put_u32(&mut out, m.len() as u32);
    put_u32(&mut out, m.dim as u32);
    for v in &m.data {
        put_f32(&mut out, *v);
    }
    out
}

pub fn decode_descriptors(bytes: &[u8]) -> Result<DescriptorMatrix> {
    let mut r = ByteReader::new(bytes, DESCRIPTOR_MAGIC, "descriptor")?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let data = r.f32_vec(count * dim)?;
    r.finish()?;
    Ok(DescriptorMatrix { dim, data })
}

pub fn write_descriptors(path: &Path, m: &DescriptorMatrix) -> Result<()> {
    write_bytes(path, &encode_descriptors(m))
}

pub fn read_descriptors(path: &Path) -> Result<DescriptorMatrix> {
    decode_descriptors(&read_bytes(path)?)
}

// ---------------------------------------------------------------------------
// Scored boxes
// ---------------------------------------------------------------------------

/// One row of a box CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub frame: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub score: f64,
}

pub fn format_boxes(boxes: &[ScoredBox]) -> String {
    let mut out = String::from("frame,x,y,w,h,score\n");
    for b in boxes {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        out.push_str(&format!("{},{},{},{},{},{}\n", b.frame, b.x, b.y, b.w, b.h, b.score));
    }
    out
}

pub fn parse_boxes(text: &str) -> Result<Vec<ScoredBox>> {
    let mut boxes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || (line_no == 1 && line.starts_with("frame")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 6 fields, got {}", f.len()) });
        }
        let int = |s: &str| {
            s.parse::<u32>().map_err(|_| Error::Parse { line: line_no, msg: format!("non-integer field {s:?}") })
        };
        let score = f[5]
            .parse::<f64>()
            .map_err(|_| Error::Parse { line: line_no, msg: format!("bad score {:?}", f[5]) })?;
        boxes.push(ScoredBox { frame: int(f[0])?, x: int(f[1])?, y: int(f[2])?, w: int(f[3])?, h: int(f[4])?, score });
    }
    Ok(boxes)
}

pub fn write_boxes(path: &Path, boxes: &[ScoredBox]) -> Result<()> {
    fs::write(path, format_boxes(boxes)).map_err(|e| Error::io(path, e))
}

pub fn read_boxes(path: &Path) -> Result<Vec<ScoredBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text)
}
