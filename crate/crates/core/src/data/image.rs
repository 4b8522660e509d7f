//! Binary PPM/PGM output and the damage colour palette.

use crate::error::{Error, Result};
use crate::mask::Mask;

/// Colours of damage levels 0..=4: background, no damage, minor, major, destroyed.
pub const PALETTE: [[u8; 3]; 5] = [[0, 0, 0], [255, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

fn plane(mask: &Mask) -> Result<(usize, usize)> {
    match mask.shape() {
        &[h, w] => Ok((h, w)),
        s => Err(Error::Input(format!("expected an [H, W] mask, got {s:?}"))),
    }
}

pub fn render_damage_palette(mask: &Mask) -> Result<RgbImage> {
    let (height, width) = plane(mask)?;
    mask.check_max(PALETTE.len() as u8 - 1, "damage mask")?;
    let data = mask.data().iter().flat_map(|&c| PALETTE[c as usize]).collect();
    Ok(RgbImage { width, height, data })
}

/// Inverse of [`render_damage_palette`]; fails on colours outside the palette.
pub fn palette_to_mask(img: &RgbImage) -> Result<Mask> {
    let labels = img
        .data
        .chunks_exact(3)
        .map(|px| {
            PALETTE
                .iter()
                .position(|c| c == px)
                .map(|i| i as u8)
                .ok_or_else(|| Error::Input(format!("colour {px:?} is not in the damage palette")))
        })
        .collect::<Result<_>>()?;
    Mask::new(&[img.height, img.width], labels)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Binary PGM of a mask, labels scaled by `scale` (255 for 0/1 masks).
pub fn encode_pgm(mask: &Mask, scale: u8) -> Result<Vec<u8>> {
    let (h, w) = plane(mask)?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.data().iter().map(|&v| v.saturating_mul(scale)));
    Ok(out)
}

fn header_fields(bytes: &[u8], magic: &[u8; 2]) -> Result<(Vec<usize>, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(0, format!("expected {} header", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let value = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format(start, "malformed header number"))?;
        fields.push(value);
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(pos, "missing whitespace after header"));
    }
    Ok((fields, pos + 1))
}

fn decode_netpbm(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let (f, start) = header_fields(bytes, magic)?;
    let (w, h, maxval) = (f[0], f[1], f[2]);
    if maxval != 255 {
        return Err(Error::format(start - 1, format!("unsupported maxval {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(Error::format(start - 1, "zero-sized image"));
    }
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(start - 1, "image size overflows"))?;
    if bytes.len() - start != need {
        return Err(Error::format(start, format!("expected {need} payload bytes, found {}", bytes.len() - start)));
    }
    Ok((w, h, bytes[start..].to_vec()))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let (width, height, data) = decode_netpbm(bytes, b"P6", 3)?;
    Ok(RgbImage { width, height, data })
}

/// Raw grey levels of a binary PGM as an `[H, W]` mask.
pub fn decode_pgm(bytes: &[u8]) -> Result<Mask> {
    let (w, h, data) = decode_netpbm(bytes, b"P5", 1)?;
    Mask::new(&[h, w], data)
}
