//! Raster containers and netpbm export.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Copy of the half-open rectangle `[x0, x1) × [y0, y1)`.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> RgbImage {
        RgbImage::from_fn(x1 - x0, y1 - y0, |x, y| self.get(x0 + x, y0 + y))
    }

    /// Rec. 601 luma in [0, 255].
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels().map(luma).collect()
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
        let (header, body) = netpbm_header(bytes, "P6")?;
        let [w, h, maxval] = header;
        if maxval != 255 || body.len() < (w * h * 3) as usize {
            return Err(Error::Domain("unsupported or truncated P6 data".into()));
        }
        Ok(RgbImage {
            width: w,
            height: h,
            data: body[..(w * h * 3) as usize].to_vec(),
        })
    }

    /// Load any raster format the `image` crate understands (PNG, PPM).
    pub fn load(path: &Path) -> Result<RgbImage> {
        let img = ::image::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?
            .to_rgb8();
        Ok(RgbImage {
            width: img.width(),
            height: img.height(),
            data: img.into_raw(),
        })
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode_ppm())
    }
}

#[inline]
pub fn luma(p: [u8; 3]) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

/// Per-pixel instance identities: 0 is background, `k + 1` is object `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IdBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

impl IdBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, id: u16) {
        self.data[y as usize * self.width as usize + x as usize] = id;
    }

    /// Tight half-open bounds `(x0, y0, x1, y1)` of pixels equal to `id`.
    pub fn bounds_of(&self, id: u16) -> Option<(u32, u32, u32, u32)> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) == id {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        b
    }

    pub fn count(&self, id: u16) -> usize {
        self.data.iter().filter(|v| **v == id).count()
    }

    /// 16-bit big-endian PGM.
    pub fn encode_pgm16(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for v in &self.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn decode_pgm16(bytes: &[u8]) -> Result<IdBuffer> {
        let (header, body) = netpbm_header(bytes, "P5")?;
        let [w, h, maxval] = header;
        let n = (w * h) as usize;
        if maxval != 65535 || body.len() < 2 * n {
            return Err(Error::Domain("unsupported or truncated 16-bit P5 data".into()));
        }
        let data = body[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        Ok(IdBuffer {
            width: w,
            height: h,
            data,
        })
    }
}

/// Binary mask raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![true; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// 8-bit PGM with 255 inside the mask.
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|b| if *b { 255u8 } else { 0 }));
        out
    }
}

fn netpbm_header<'a>(bytes: &'a [u8], magic: &str) -> Result<([u32; 3], &'a [u8])> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
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
            return Err(Error::Domain("truncated netpbm header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or(""));
    }
    if fields[0] != magic {
        return Err(Error::Domain(format!("expected {magic}, found {}", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| Error::Domain(format!("bad header field `{s}`")))
    };
    let header = [num(fields[1])?, num(fields[2])?, num(fields[3])?];
    // exactly one whitespace byte separates the header from the raster
    Ok((header, &bytes[(pos + 1).min(bytes.len())..]))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
