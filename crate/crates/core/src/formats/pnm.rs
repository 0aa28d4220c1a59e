//! Binary PGM (`P5`, one channel) and PPM (`P6`, three channels), 8-bit.

use std::path::Path;

use super::FormatError;
use crate::operators::ImageGrid;

pub fn encode_pnm(img: &ImageGrid) -> Result<Vec<u8>, FormatError> {
    let (h, w, c) = img.shape();
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(FormatError::Unsupported(format!("{c} channels"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(img.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, msg: impl Into<String>) -> FormatError {
        FormatError::Header {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, FormatError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                let mut e = self.err(format!("{what} out of range"));
                if let FormatError::Header { offset, .. } = &mut e {
                    *offset = start;
                }
                e
            })
    }
}

/// Values map to `v / 255`.
pub fn decode_pnm(bytes: &[u8]) -> Result<ImageGrid, FormatError> {
    let mut hdr = Header { bytes, pos: 0 };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(hdr.err("expected magic P5 or P6")),
    };
    hdr.pos = 2;
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval_at = hdr.pos;
    let maxval = hdr.number("maxval")?;
    if maxval != 255 {
        return Err(FormatError::Header {
            offset: maxval_at,
            msg: format!("only maxval 255 is supported, got {maxval}"),
        });
    }
    if width == 0 || height == 0 {
        return Err(hdr.err("zero image dimension"));
    }
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(hdr.err("expected a single whitespace byte after maxval")),
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| hdr.err("image dimensions overflow"))?;
    let payload = &bytes[hdr.pos..];
    if payload.len() < n {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            expected: hdr.pos + n,
        });
    }
    let data = payload[..n].iter().map(|&b| b as f64 / 255.0).collect();
    ImageGrid::new(height, width, channels, data).map_err(|e| FormatError::Unsupported(e.to_string()))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn write_image(img: &ImageGrid, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(img)?).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_white_pixel() {
        let img = decode_pnm(b"P5 1 1 255\n\xff").unwrap();
        assert_eq!(img.shape(), (1, 1, 1));
        assert_eq!(img.get(0, 0, 0), 1.0);
    }

    #[test]
    fn comments_in_header() {
        let img = decode_pnm(b"P6\n# made by hand\n2 1\n# max\n255\n\x00\x00\x00\xff\x80\x00").unwrap();
        assert_eq!(img.shape(), (1, 2, 3));
        assert_eq!(img.get(0, 1, 1), 128.0 / 255.0);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let err = decode_pnm(b"P5\n2 2\n255\n\x01\x02\x03").unwrap_err();
        match err {
            FormatError::Truncated { offset, expected } => {
                assert_eq!(offset, 14);
                assert_eq!(expected, 15);
            }
            e => panic!("{e}"),
        }
        assert!(err_text(b"P5\n2 2\n255\n\x01").contains("byte 12"));
    }

    fn err_text(b: &[u8]) -> String {
        decode_pnm(b).unwrap_err().to_string()
    }

    #[test]
    fn malformed_headers() {
        assert!(err_text(b"P3 1 1 255\n0").contains("byte 0"));
        assert!(err_text(b"P5 x 1 255\n0").contains("byte 3"));
        assert!(err_text(b"P5 1 1 65535\n00").contains("maxval"));
        assert!(err_text(b"P5 1 1 255").contains("whitespace"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ppm");
        let img = ImageGrid::new(1, 2, 3, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        write_image(&img, &p).unwrap();
        let back = read_image(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 510.0);
        }
        assert!(read_image(dir.path().join("missing.pgm")).is_err());
    }

    proptest! {
        #[test]
        fn quantization_bound(h in 1usize..6, w in 1usize..6, color in any::<bool>(), vals in prop::collection::vec(0.0f64..=1.0, 75)) {
            let c = if color { 3 } else { 1 };
            let img = ImageGrid::new(h, w, c, vals[..h * w * c].to_vec()).unwrap();
            let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), img.shape());
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
            }
        }
    }
}
