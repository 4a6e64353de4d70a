//! 8-bit RGB rasters and binary PPM (P6) / PGM (P5) I/O.

use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Usage(format!("zero-size image {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Data(format!(
                "image {width}x{height} needs {} bytes, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let data = color.iter().copied().cycle().take(3 * width * height).collect();
        Self::new(width, height, data).expect("positive size")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: Rgb) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Pixel with coordinates clamped to the image (edge replication).
    pub fn pixel_clamped(&self, x: i64, y: i64) -> Rgb {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.pixel(x, y)
    }

    /// Fills `[x, x+w) × [y, y+h)`, clipped to the image.
    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, c: Rgb) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.set_pixel(xx, yy, c);
            }
        }
    }

    /// Fills the ellipse inscribed in the `w×h` box at `(x, y)`; a pixel is
    /// inside when its center satisfies the ellipse inequality.
    pub fn fill_ellipse(&mut self, x: usize, y: usize, w: usize, h: usize, c: Rgb) {
        let (rx, ry) = (w as f64 / 2.0, h as f64 / 2.0);
        let (cx, cy) = (x as f64 + rx, y as f64 + ry);
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                let dx = (xx as f64 + 0.5 - cx) / rx;
                let dy = (yy as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.set_pixel(xx, yy, c);
                }
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let (magic, w, h, offset) = parse_pnm_header(bytes)?;
        if magic != "P6" {
            return Err(Error::Format {
                offset: 0,
                msg: format!("expected P6, found {magic}"),
            });
        }
        let need = 3 * w * h;
        let payload = &bytes[offset..];
        if payload.len() < need {
            return Err(Error::Format {
                offset: offset + payload.len(),
                msg: format!("truncated P6 payload, expected {need} bytes"),
            });
        }
        Self::new(w, h, payload[..need].to_vec())
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm(&bytes)
    }
}

pub fn pgm_bytes(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    debug_assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    std::fs::write(path, pgm_bytes(width, height, gray)).map_err(|e| Error::io(path, e))
}

/// Parses `MAGIC W H MAXVAL` followed by one whitespace byte. Comments are
/// not supported. Returns the payload offset.
fn parse_pnm_header(bytes: &[u8]) -> Result<(String, usize, usize, usize)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                offset: pos,
                msg: "truncated PNM header".into(),
            });
        }
        fields.push((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), start));
    }
    pos += 1;
    let num = |i: usize| -> Result<usize> {
        fields[i].0.parse().map_err(|_| Error::Format {
            offset: fields[i].1,
            msg: format!("bad PNM header field {:?}", fields[i].0),
        })
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(Error::Format {
            offset: fields[3].1,
            msg: format!("unsupported maxval {maxval}"),
        });
    }
    Ok((fields[0].0.clone(), w, h, pos.min(bytes.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p6_header_is_exact() {
        let img = RasterImage::filled(64, 64, WHITE);
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n64 64\n255\n"));
        assert_eq!(bytes.len(), 13 + 64 * 64 * 3);
    }

    #[test]
    fn ppm_round_trip() {
        let mut img = RasterImage::filled(5, 3, WHITE);
        img.set_pixel(2, 1, [10, 20, 30]);
        assert_eq!(RasterImage::from_ppm(&img.to_ppm()).unwrap(), img);
    }

    #[test]
    fn truncated_ppm_reports_offset() {
        let img = RasterImage::filled(4, 4, WHITE);
        let bytes = img.to_ppm();
        let err = RasterImage::from_ppm(&bytes[..bytes.len() - 5]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, bytes.len() - 5),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn zero_size_rejected() {
        assert!(matches!(RasterImage::new(0, 4, vec![]), Err(Error::Usage(_))));
    }

    #[test]
    fn ellipse_stays_in_box() {
        let mut img = RasterImage::filled(20, 20, WHITE);
        img.fill_ellipse(4, 5, 10, 8, [128, 128, 128]);
        for y in 0..20 {
            for x in 0..20 {
                if img.pixel(x, y) != WHITE {
                    assert!((4..14).contains(&x) && (5..13).contains(&y));
                }
            }
        }
        assert_eq!(img.pixel(9, 9), [128, 128, 128]);
    }
}
