//! HDR image container, compositing, and PFM/PPM I/O.
//!
//! Pixels are linear radiance in double precision, row-major from the top
//! left. PFM files store f32 with the conventional bottom-to-top scanline
//! order and scale -1.0 (little-endian); PPM is 8-bit with gamma 1/2.2.

use thiserror::Error;

use crate::{Float, Rgb};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("malformed image file: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pfm,
    Ppm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![Rgb::black(); width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, ImageError> {
        if pixels.len() != width * height {
            return Err(ImageError::Malformed(format!(
                "{} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: Rgb) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn mean(&self) -> Rgb {
        let mut acc = Rgb::black();
        for &p in &self.pixels {
            acc += p;
        }
        acc / self.pixels.len() as Float
    }

    /// Mean over a pixel rectangle (x0..x1, y0..y1), half-open.
    pub fn region_mean(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Rgb {
        let mut acc = Rgb::black();
        let mut n = 0usize;
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                acc += self.pixel(x, y);
                n += 1;
            }
        }
        acc / n.max(1) as Float
    }
}

/// Pixelwise sum in linear radiance.
pub fn composite(a: &Image, b: &Image) -> Result<Image, ImageError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(ImageError::DimensionMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    let pixels = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| x + y)
        .collect();
    Ok(Image { width: a.width, height: a.height, pixels })
}

pub fn write_image<P: AsRef<std::path::Path>>(
    img: &Image,
    path: P,
    format: ImageFormat,
) -> Result<(), ImageError> {
    let bytes = match format {
        ImageFormat::Pfm => pfm_to_bytes(img),
        ImageFormat::Ppm => ppm_to_bytes(img),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Read a PFM or PPM file, sniffing the magic bytes.
pub fn read_image<P: AsRef<std::path::Path>>(path: P) -> Result<Image, ImageError> {
    let bytes = std::fs::read(path)?;
    match bytes.get(..2) {
        Some(b"PF") => pfm_from_bytes(&bytes),
        Some(b"P6") => ppm_from_bytes(&bytes),
        _ => Err(ImageError::Malformed("unknown magic; expected PF or P6".into())),
    }
}

pub fn pfm_to_bytes(img: &Image) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            let p = img.pixel(x, y);
            out.extend_from_slice(&(p.r as f32).to_le_bytes());
            out.extend_from_slice(&(p.g as f32).to_le_bytes());
            out.extend_from_slice(&(p.b as f32).to_le_bytes());
        }
    }
    out
}

pub fn pfm_from_bytes(bytes: &[u8]) -> Result<Image, ImageError> {
    let bad = |m: &str| ImageError::Malformed(m.to_string());
    // Header: three whitespace-terminated fields (magic, "w h", scale).
    let mut at = 0usize;
    let mut token = |what: &str| -> Result<String, ImageError> {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(ImageError::Malformed(format!("missing {what} in header")));
        }
        let s = std::str::from_utf8(&bytes[start..at])
            .map_err(|_| ImageError::Malformed(format!("non-ascii {what}")))?
            .to_string();
        at += 1; // single whitespace after each field
        Ok(s)
    };
    if token("magic")? != "PF" {
        return Err(bad("not a color PFM (magic PF)"));
    }
    let width: usize = token("width")?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token("height")?.parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = token("scale")?.parse().map_err(|_| bad("bad scale"))?;
    let little_endian = scale < 0.0;
    let need = width * height * 12;
    let data = bytes
        .get(at..at + need)
        .ok_or_else(|| bad("truncated pixel data"))?;
    let mut img = Image::new(width, height);
    let mut i = 0usize;
    for y in (0..height).rev() {
        for x in 0..width {
            let mut ch = [0f32; 3];
            for c in &mut ch {
                let raw: [u8; 4] = data[i..i + 4].try_into().unwrap();
                *c = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                i += 4;
            }
            img.set_pixel(x, y, Rgb::new(ch[0] as Float, ch[1] as Float, ch[2] as Float));
        }
    }
    Ok(img)
}

/// Display tonemap for PPM output: clamp then gamma 1/2.2.
pub fn tonemap_byte(x: Float) -> u8 {
    let clamped = x.clamp(0.0, 1.0);
    (255.0 * clamped.powf(1.0 / 2.2)).round() as u8
}

pub fn ppm_to_bytes(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for y in 0..img.height {
        for x in 0..img.width {
            let p = img.pixel(x, y);
            out.push(tonemap_byte(p.r));
            out.push(tonemap_byte(p.g));
            out.push(tonemap_byte(p.b));
        }
    }
    out
}

pub fn ppm_from_bytes(bytes: &[u8]) -> Result<Image, ImageError> {
    let bad = |m: &str| ImageError::Malformed(m.to_string());
    let text_end = bytes
        .iter()
        .scan(0usize, |fields, &b| {
            if b.is_ascii_whitespace() {
                *fields += 1;
            }
            Some(*fields)
        })
        .position(|fields| fields >= 4)
        .ok_or_else(|| bad("short header"))?;
    let header = std::str::from_utf8(&bytes[..=text_end]).map_err(|_| bad("non-ascii header"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("P6") {
        return Err(bad("not a binary PPM"));
    }
    let width: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad width"))?;
    let height: usize = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad height"))?;
    let maxval: u32 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 supported"));
    }
    let data = bytes
        .get(text_end + 1..text_end + 1 + width * height * 3)
        .ok_or_else(|| bad("truncated pixel data"))?;
    let mut img = Image::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let i = (y * width + x) * 3;
            let decode = |b: u8| ((b as Float) / 255.0).powf(2.2);
            img.set_pixel(x, y, Rgb::new(decode(data[i]), decode(data[i + 1]), decode(data[i + 2])));
        }
    }
    Ok(img)
}
