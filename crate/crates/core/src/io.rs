//! Depth map files: PFM (canonical, lossless float), 16-bit PGM and 16-bit
//! PNG, plus a JSON sidecar describing how the map was written.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DepthMap;
use crate::pipeline::invert_disparity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    Pfm,
    Pgm16,
    Png16,
}

impl DepthFormat {
    /// Guesses the format from a file extension (`pfm`, `pgm`, `png`).
    pub fn from_path(path: &Path) -> Option<DepthFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pfm" => Some(DepthFormat::Pfm),
            "pgm" => Some(DepthFormat::Pgm16),
            "png" => Some(DepthFormat::Png16),
            _ => None,
        }
    }
}

impl std::str::FromStr for DepthFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pfm" => Ok(DepthFormat::Pfm),
            "pgm16" | "pgm" => Ok(DepthFormat::Pgm16),
            "png16" | "png" => Ok(DepthFormat::Png16),
            _ => Err(Error::invalid(format!("unknown depth format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOptions {
    /// PNG16 samples are read as `value / 65535 * depth_scale`.
    pub depth_scale: f64,
    /// Treat stored zeros as missing pixels.
    pub zero_is_missing: bool,
    /// Input holds disparity; convert to depth after loading.
    pub invert_depth: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            depth_scale: 1.0,
            zero_is_missing: false,
            invert_depth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriteOptions {
    /// PNG16 stores `round(depth / depth_scale * 65535)`.
    pub depth_scale: f64,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions { depth_scale: 1.0 }
    }
}

/// Written next to every depth file as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub format: DepthFormat,
    pub width: usize,
    pub height: usize,
    pub invalid_pixels: usize,
    /// Stored value standing in for invalid pixels (`null` for PFM, which
    /// stores NaN).
    pub missing_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub depth_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub preset: Option<String>,
}

impl DepthSidecar {
    pub fn path_for(depth_path: &Path) -> PathBuf {
        depth_path.with_extension("json")
    }

    pub fn write(&self, depth_path: &Path) -> Result<()> {
        let path = Self::path_for(depth_path);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(depth_path: &Path) -> Result<DepthSidecar> {
        let path = Self::path_for(depth_path);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn read_depth_file(path: &Path, format: DepthFormat, opts: &ReadOptions) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth(&bytes, format, opts)
}

/// Decodes a depth map from an in-memory file.
///
/// Non-finite or negative PFM samples are loaded as invalid pixels.
pub fn decode_depth(bytes: &[u8], format: DepthFormat, opts: &ReadOptions) -> Result<DepthMap> {
    let (w, h, samples) = match format {
        DepthFormat::Pfm => decode_pfm(bytes)?,
        DepthFormat::Pgm16 => decode_pgm(bytes)?,
        DepthFormat::Png16 => decode_png16(bytes, opts.depth_scale)?,
    };
    let valid: Vec<bool> = samples
        .iter()
        .map(|v| v.is_finite() && *v >= 0.0 && !(opts.zero_is_missing && *v == 0.0))
        .collect();
    let map = DepthMap::with_mask(w, h, samples, valid)?;
    if opts.invert_depth {
        invert_disparity(&map)
    } else {
        Ok(map)
    }
}

/// Writes the map and its sidecar. Returns the sidecar contents.
pub fn write_depth_file(
    map: &DepthMap,
    path: &Path,
    format: DepthFormat,
    opts: &WriteOptions,
) -> Result<DepthSidecar> {
    let bytes = encode_depth(map, format, opts)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = DepthSidecar {
        format,
        width: map.width(),
        height: map.height(),
        invalid_pixels: map.width() * map.height() - map.valid_count(),
        missing_value: match format {
            DepthFormat::Pfm => None,
            _ => Some(0.0),
        },
        depth_scale: (format == DepthFormat::Png16).then_some(opts.depth_scale),
        label_deg: None,
        preset: None,
    };
    sidecar.write(path)?;
    Ok(sidecar)
}

pub fn encode_depth(map: &DepthMap, format: DepthFormat, opts: &WriteOptions) -> Result<Vec<u8>> {
    match format {
        DepthFormat::Pfm => Ok(encode_pfm(map)),
        DepthFormat::Pgm16 => Ok(encode_pgm(map)),
        DepthFormat::Png16 => encode_png16(map, opts.depth_scale),
    }
}

/// Whitespace-separated header reader that tracks byte offsets.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Header { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<(&'a str, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("missing {what}")));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(start, format!("{what} is not ASCII")))?;
        Ok((s, start))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (s, at) = self.token(what)?;
        s.parse()
            .map_err(|_| Error::format(at, format!("cannot parse {what} from {s:?}")))
    }

    /// Consumes the single whitespace byte that ends a binary header.
    fn end_of_header(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::format(self.pos, "header must end with a whitespace byte")),
        }
    }
}

fn dimensions(h: &mut Header) -> Result<(usize, usize)> {
    let w: usize = h.number("width")?;
    let at = h.pos;
    let ht: usize = h.number("height")?;
    if w == 0 || ht == 0 {
        return Err(Error::format(at, format!("empty image {w}x{ht}")));
    }
    Ok((w, ht))
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    let available = bytes.len().saturating_sub(start);
    if available < len {
        return Err(Error::format(
            bytes.len(),
            format!("truncated payload: expected {len} bytes from offset {start}, found {available}"),
        ));
    }
    Ok(&bytes[start..start + len])
}

fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut h = Header::new(bytes);
    let (magic, at) = h.token("magic")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(Error::format(at, "unsupported channel count 3 (expected single-channel Pf)")),
        other => return Err(Error::format(at, format!("not a PFM file (magic {other:?})"))),
    }
    let (w, ht) = dimensions(&mut h)?;
    let scale_at = h.pos;
    let scale: f64 = h.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(scale_at, format!("invalid scale {scale}")));
    }
    let little = scale < 0.0;
    let start = h.end_of_header()?;
    let data = payload(bytes, start, w * ht * 4)?;
    let mut out = vec![0.0; w * ht];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        // stored bottom row first
        let (file_row, col) = (i / w, i % w);
        out[(ht - 1 - file_row) * w + col] = v as f64;
    }
    Ok((w, ht, out))
}

fn encode_pfm(map: &DepthMap) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for r in (0..h).rev() {
        for c in 0..w {
            let v = map.get(r, c).map_or(f32::NAN, |v| v as f32);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut h = Header::new(bytes);
    let (magic, at) = h.token("magic")?;
    let plain = match magic {
        "P2" => true,
        "P5" => false,
        other => return Err(Error::format(at, format!("not a grayscale PGM (magic {other:?})"))),
    };
    let (w, ht) = dimensions(&mut h)?;
    let max_at = h.pos;
    let maxval: u32 = h.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(max_at, format!("maxval {maxval} outside 1..=65535")));
    }
    let check = |v: u32, at: usize| {
        if v > maxval {
            Err(Error::format(at, format!("sample {v} exceeds maxval {maxval}")))
        } else {
            Ok(v as f64)
        }
    };
    let mut out = Vec::with_capacity(w * ht);
    if plain {
        for _ in 0..w * ht {
            let (s, at) = h
                .token("sample")
                .map_err(|_| Error::format(bytes.len(), "truncated payload: not enough samples"))?;
            let v: u32 = s
                .parse()
                .map_err(|_| Error::format(at, format!("cannot parse sample from {s:?}")))?;
            out.push(check(v, at)?);
        }
    } else {
        let start = h.end_of_header()?;
        let bps = if maxval < 256 { 1 } else { 2 };
        let data = payload(bytes, start, w * ht * bps)?;
        for (i, chunk) in data.chunks_exact(bps).enumerate() {
            let v = if bps == 1 {
                chunk[0] as u32
            } else {
                u16::from_be_bytes([chunk[0], chunk[1]]) as u32
            };
            out.push(check(v, start + i * bps)?);
        }
    }
    Ok((w, ht, out))
}

fn to_u16(v: f64) -> u16 {
    v.round().clamp(0.0, 65535.0) as u16
}

fn encode_pgm(map: &DepthMap) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            let v = map.get(r, c).map_or(0, to_u16);
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

fn decode_png16(bytes: &[u8], scale: f64) -> Result<(usize, usize, Vec<f64>)> {
    const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];
    if bytes.len() < 8 || bytes[..8] != SIGNATURE {
        return Err(Error::format(0, "missing PNG signature"));
    }
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format(8, format!("PNG decode failed: {e}")))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::format(
                8,
                format!("unsupported PNG layout {:?} (expected 16-bit grayscale)", other.color()),
            ))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 65535.0 * scale)
        .collect();
    Ok((w, h, values))
}

fn encode_png16(map: &DepthMap, scale: f64) -> Result<Vec<u8>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("depth scale must be positive, got {scale}")));
    }
    let (w, h) = (map.width(), map.height());
    let data: Vec<u16> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| map.get(r, c).map_or(0, |v| to_u16(v / scale * 65535.0)))
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w as u32, h as u32, data)
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}
