use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor4;

/// Overlay colours: true positives, false positives, false negatives.
pub const OVERLAY_TP: [u8; 3] = [0, 255, 0];
pub const OVERLAY_FP: [u8; 3] = [255, 0, 0];
pub const OVERLAY_FN: [u8; 3] = [0, 0, 255];

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) => return Err(Error::Image(format!("unknown magic {:?}", String::from_utf8_lossy(m)))),
        None => return Err(Error::Image("file too short for a PNM header".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let name = ["width", "height", "maxval"][i];
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Image(format!("missing or malformed {name} in header")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Image("header must end with one whitespace byte".into()));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Image(format!("maxval {maxval} is not supported (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Image(format!("empty image {width}x{height}")));
    }
    Ok(Header {
        channels,
        width,
        height,
        payload: pos + 1,
    })
}

/// Decodes binary 8-bit PGM (P5) or PPM (P6) into (1, 1|3, h, w) with values byte/255.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor4> {
    let h = parse_header(bytes)?;
    let plane = h.width * h.height;
    let need = plane * h.channels;
    let data = &bytes[h.payload..];
    if data.len() < need {
        return Err(Error::Image(format!("truncated payload: {} of {need} bytes", data.len())));
    }
    let mut t = Tensor4::zeros([1, h.channels, h.height, h.width]);
    for c in 0..h.channels {
        for (p, v) in t.plane_mut(0, c).iter_mut().enumerate() {
            *v = data[p * h.channels + c] as f32 / 255.0;
        }
    }
    Ok(t)
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes sample 0 of a 1- or 3-channel tensor as P5 or P6, values clamped to [0, 1].
pub fn encode_pnm(t: &Tensor4) -> Result<Vec<u8>> {
    let d = t.dims();
    let magic = match d.c {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Image(format!("cannot encode {c} channels as PGM/PPM"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", d.w, d.h).into_bytes();
    out.reserve(d.plane() * d.c);
    for p in 0..d.plane() {
        for c in 0..d.c {
            out.push(to_byte(t.plane(0, c)[p]));
        }
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor4> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|e| Error::Sample {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Loads an image and binarizes it (channel mean ≥ 0.5 is foreground).
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(Mask::from_tensor(&load_image(path)?))
}

pub fn save_image(t: &Tensor4, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(t)?).map_err(|e| Error::io(path, e))
}

/// P5 with foreground 255 and background 0.
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&mask.to_tensor(), path)
}

/// RGB error map: TP green, FP red, FN blue, TN black.
pub fn overlay(pred: &Mask, gt: &Mask) -> Result<Tensor4> {
    if !pred.same_dims(gt) {
        return Err(Error::Shape(format!(
            "prediction {}x{} and ground truth {}x{} differ",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(Tensor4::from_fn([1, 3, pred.height(), pred.width()], |_, c, y, x| {
        let rgb = match (pred.get(y, x), gt.get(y, x)) {
            (true, true) => OVERLAY_TP,
            (true, false) => OVERLAY_FP,
            (false, true) => OVERLAY_FN,
            (false, false) => [0; 3],
        };
        rgb[c] as f32 / 255.0
    }))
}

pub fn save_overlay(pred: &Mask, gt: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&overlay(pred, gt)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_gray_and_rgb() {
        let t = decode_pnm(b"P5\n2 2\n255\n\x00\xff\x80\x40").unwrap();
        assert_eq!(t.dims().as_array(), [1, 1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        let t = decode_pnm(b"P6 1 1 255 \xff\x00\x00").unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn comments_in_header() {
        let t = decode_pnm(b"P5\n# made by hand\n1 # width done\n1\n255\n\x7f").unwrap();
        assert_eq!(t.data(), &[127.0 / 255.0]);
    }

    #[test]
    fn header_errors() {
        assert!(decode_pnm(b"P9\n1 1\n255\n\x00").unwrap_err().to_string().contains("magic"));
        assert!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00").unwrap_err().to_string().contains("maxval"));
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00").unwrap_err().to_string().contains("truncated"));
        assert!(decode_pnm(b"P5\n2").is_err());
    }

    #[test]
    fn encode_then_decode_is_byte_identical() {
        let src = b"P5\n3 2\n255\n\x00\x01\x02\xfd\xfe\xff".to_vec();
        assert_eq!(encode_pnm(&decode_pnm(&src).unwrap()).unwrap(), src);
        let rgb = b"P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06".to_vec();
        assert_eq!(encode_pnm(&decode_pnm(&rgb).unwrap()).unwrap(), rgb);
    }

    #[test]
    fn mask_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        save_mask(&Mask::from_fn(2, 2, |_, _| true), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[255; 4]);
        let m = Mask::from_fn(3, 5, |y, x| (x + y) % 2 == 0);
        save_mask(&m, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), m);
    }

    #[test]
    fn overlay_colours() {
        let gt = Mask::from_fn(1, 4, |_, x| x < 2);
        let pred = Mask::from_fn(1, 4, |_, x| x % 2 == 0);
        let o = overlay(&pred, &gt).unwrap();
        let px = |x| [0, 1, 2].map(|c| (o.get(0, c, 0, x) * 255.0) as u8);
        assert_eq!([px(0), px(1), px(2), px(3)], [OVERLAY_TP, OVERLAY_FN, OVERLAY_FP, [0; 3]]);
        let same = overlay(&gt, &gt).unwrap();
        assert!((0..4).all(|x| {
            let p = [0, 1, 2].map(|c| same.get(0, c, 0, x));
            p == [0.0, 1.0, 0.0] || p == [0.0; 3]
        }));
    }
}
