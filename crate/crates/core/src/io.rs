//! Image, flow, feature-map and dataset file formats.
//!
//! * Images: binary PGM (`P5`, 8 or 16 bit) and grayscale PNG, read as
//!   floats in `[0, 1]`.
//! * Flow: Middlebury `.flo` and KITTI 16-bit RGB PNG.
//! * Feature maps: `SFMAP1` dumps (header, then f32 values pixel-major).
//! * Datasets: manifest text files with one `image1 image2 flow [extra]`
//!   tuple per line.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{FeatureMap, Image};
use crate::sampler::{occlusion_proxy, ImagePair};

pub const FLO_MAGIC: f32 = 202021.25;
/// Stored for invalid pixels when sentinel output is enabled; any component
/// at or above this magnitude reads back as invalid.
pub const FLO_INVALID: f32 = 1e9;
pub const FEATURE_MAGIC: &[u8; 7] = b"SFMAP1\n";
const PNG_SIGNATURE: [u8; 8] = [137, 80, 78, 71, 13, 10, 26, 10];

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decoded PGM with its native maximum value.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub image: Image,
    pub maxval: u16,
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Pgm> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos).as_deref() != Some("P5") {
        return Err(Error::format(path, "not a binary PGM (missing P5 magic)"));
    }
    let mut field = |name: &str| -> Result<usize> {
        pgm_token(bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::format(path, format!("malformed PGM {name}")))
    };
    let (w, h, maxval) = (field("width")?, field("height")?, field("maxval")?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("unsupported PGM header {w}x{h} maxval {maxval}")));
    }
    pos += 1;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = w * h * bpp;
    if bytes.len() < pos + need {
        return Err(Error::format(path, format!("PGM data truncated: {} of {need} bytes", bytes.len().saturating_sub(pos))));
    }
    let raw = &bytes[pos..pos + need];
    let scale = 1.0 / maxval as f32;
    let data = if bpp == 1 {
        raw.iter().map(|&b| f32::from(b) * scale).collect()
    } else {
        raw.chunks_exact(2).map(|c| f32::from(u16::from_be_bytes([c[0], c[1]])) * scale).collect()
    };
    Ok(Pgm {
        image: Image::new(w, h, data)?,
        maxval: maxval as u16,
    })
}

/// `P5` with the given maxval; values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(image: &Image, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let mut out = format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).into_bytes();
    let m = f32::from(maxval);
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * m).round() as u16;
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

pub fn save_pgm(path: &Path, image: &Image, maxval: u16) -> Result<()> {
    write_bytes(path, &encode_pgm(image, maxval))
}

fn png_reader(path: &Path) -> Result<png::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    decoder
        .read_info()
        .map_err(|e| Error::format(path, format!("PNG decode failed: {e}")))
}

/// Raw PNG samples as u16 with the channel count.
fn read_png_samples(path: &Path) -> Result<(usize, usize, png::ColorType, png::BitDepth, Vec<u16>)> {
    let mut reader = png_reader(path)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "PNG too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, format!("PNG decode failed: {e}")))?;
    let samples = match info.bit_depth {
        png::BitDepth::Eight => buf[..info.buffer_size()].iter().map(|&b| u16::from(b)).collect(),
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
        d => return Err(Error::format(path, format!("unsupported PNG bit depth {d:?}"))),
    };
    Ok((info.width as usize, info.height as usize, info.color_type, info.bit_depth, samples))
}

fn load_png_gray(path: &Path) -> Result<Image> {
    let (w, h, color, depth, samples) = read_png_samples(path)?;
    if color != png::ColorType::Grayscale {
        let hint = if color == png::ColorType::Rgb && depth == png::BitDepth::Sixteen {
            " (16-bit RGB looks like a KITTI flow file; load it as flow)"
        } else {
            ""
        };
        return Err(Error::format(path, format!("unsupported PNG color type {color:?}{hint}, expected grayscale")));
    }
    let maxval = if depth == png::BitDepth::Sixteen { 65535.0 } else { 255.0 };
    Image::new(w, h, samples.iter().map(|&s| f32::from(s) / maxval).collect())
}

/// 8-bit grayscale PNG, values clamped to `[0, 1]`.
pub fn save_png_gray(path: &Path, image: &Image) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width() as u32, image.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path, format!("PNG encode failed: {e}")))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::format(path, format!("PNG encode failed: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::format(path, format!("PNG encode failed: {e}")))
}

/// Loads a PGM (`P5`) or grayscale PNG as floats in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(&PNG_SIGNATURE) {
        return load_png_gray(path);
    }
    if bytes.starts_with(b"P5") {
        return Ok(decode_pgm(&bytes, path)?.image);
    }
    let kind = match bytes.get(..2) {
        Some(b"P2") => "ASCII PGM (P2)",
        Some(b"P6") | Some(b"P3") => "color PPM",
        Some([0xff, 0xd8]) => "JPEG",
        _ => "unknown",
    };
    Err(Error::format(
        path,
        format!("unsupported image format: {kind} (expected binary PGM or grayscale PNG)"),
    ))
}

/// Saves by extension: `.png` as 8-bit PNG, anything else as 16-bit PGM.
pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => save_png_gray(path, image),
        _ => save_pgm(path, image, 65535),
    }
}

pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::format(path, "flow file shorter than its header"));
    }
    let word = |i: usize| [bytes[4 * i], bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::format(path, format!("bad .flo magic {magic} (expected {FLO_MAGIC})")));
    }
    let (w, h) = (i32::from_le_bytes(word(1)), i32::from_le_bytes(word(2)));
    if w <= 0 || h <= 0 {
        return Err(Error::format(path, format!("bad .flo size {w}x{h}")));
    }
    let n = w as usize * h as usize;
    if bytes.len() != 12 + 8 * n {
        return Err(Error::format(path, format!("expected {} bytes for {w}x{h} flow, found {}", 12 + 8 * n, bytes.len())));
    }
    let (mut u, mut v, mut valid) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let a = f32::from_le_bytes(word(3 + 2 * i));
        let b = f32::from_le_bytes(word(4 + 2 * i));
        valid.push(a.is_finite() && b.is_finite() && a.abs() < FLO_INVALID && b.abs() < FLO_INVALID);
        u.push(a);
        v.push(b);
    }
    FlowField::from_parts(w as usize, h as usize, u, v, valid)
}

/// Middlebury layout. With `invalid_sentinel`, invalid pixels are written
/// as `u = v = 1e9`; otherwise their stored vectors are written unchanged.
pub fn encode_flo(flow: &FlowField, invalid_sentinel: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for i in 0..flow.len() {
        let (a, b) = if invalid_sentinel && !flow.valid[i] {
            (FLO_INVALID, FLO_INVALID)
        } else {
            (flow.u[i], flow.v[i])
        };
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

pub fn save_flo(path: &Path, flow: &FlowField, invalid_sentinel: bool) -> Result<()> {
    write_bytes(path, &encode_flo(flow, invalid_sentinel))
}

/// KITTI encoding of one component: `round(x · 64 + 2^15)`.
pub fn kitti_encode(x: f32) -> u16 {
    (x * 64.0 + 32768.0).round().clamp(0.0, 65535.0) as u16
}

/// KITTI decoding of one component: `(value − 2^15) / 64`.
pub fn kitti_decode(value: u16) -> f32 {
    (f32::from(value) - 32768.0) / 64.0
}

fn load_kitti_png(path: &Path) -> Result<FlowField> {
    let (w, h, color, depth, samples) = read_png_samples(path)?;
    if depth != png::BitDepth::Sixteen || color != png::ColorType::Rgb {
        let what = if color == png::ColorType::Grayscale && depth == png::BitDepth::Sixteen {
            "16-bit single-channel PNG looks like a disparity map, not a flow file".to_string()
        } else {
            format!("{color:?} {depth:?} PNG is not a KITTI flow file")
        };
        return Err(Error::format(path, format!("{what} (expected 16-bit RGB with u, v, valid)")));
    }
    let n = w * h;
    let (mut u, mut v, mut valid) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in samples.chunks_exact(3) {
        u.push(kitti_decode(px[0]));
        v.push(kitti_decode(px[1]));
        valid.push(px[2] != 0);
    }
    FlowField::from_parts(w, h, u, v, valid)
}

/// 16-bit RGB KITTI flow PNG (`u`, `v`, validity).
pub fn save_kitti_png(path: &Path, flow: &FlowField) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), flow.width() as u32, flow.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut bytes = Vec::with_capacity(6 * flow.len());
    for i in 0..flow.len() {
        for s in [kitti_encode(flow.u[i]), kitti_encode(flow.v[i]), u16::from(flow.valid[i])] {
            bytes.extend_from_slice(&s.to_be_bytes());
        }
    }
    let fail = |e: png::EncodingError| Error::format(path, format!("PNG encode failed: {e}"));
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(&bytes).map_err(fail)?;
    writer.finish().map_err(fail)
}

/// Loads `.flo` or KITTI PNG flow.
pub fn load_flow(path: &Path) -> Result<FlowField> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(&PNG_SIGNATURE) {
        return load_kitti_png(path);
    }
    decode_flo(&bytes, path)
}

pub fn encode_featuremap(fm: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_MAGIC.len() + 16 + 4 * fm.data().len());
    out.extend_from_slice(FEATURE_MAGIC);
    for v in [fm.width(), fm.height(), fm.dim(), fm.window()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in fm.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_featuremap(bytes: &[u8], path: &Path) -> Result<FeatureMap> {
    let head = FEATURE_MAGIC.len() + 16;
    if bytes.len() < head || !bytes.starts_with(FEATURE_MAGIC) {
        return Err(Error::format(path, "not a feature-map dump (missing SFMAP1 header)"));
    }
    let field = |i: usize| {
        let o = FEATURE_MAGIC.len() + 4 * i;
        u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
    };
    let (w, h, d, window) = (field(0), field(1), field(2), field(3));
    let n = w * h * d;
    if bytes.len() != head + 4 * n {
        return Err(Error::format(path, format!("feature dump size mismatch for {w}x{h}x{d}")));
    }
    let data = bytes[head..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut fm = FeatureMap::new(w, h, d, data)?;
    fm.set_window(window);
    Ok(fm)
}

pub fn save_featuremap(path: &Path, fm: &FeatureMap) -> Result<()> {
    write_bytes(path, &encode_featuremap(fm))
}

pub fn load_featuremap(path: &Path) -> Result<FeatureMap> {
    decode_featuremap(&read_bytes(path)?, path)
}

/// Where the occlusion mask of a dataset pair came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OcclusionSource {
    /// Mask image, nonzero = occluded.
    Mask,
    /// Forward-backward check of the ground truth with a backward `.flo`.
    ConsistencyProxy,
    /// No information: every pixel counts as visible.
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub image1: PathBuf,
    pub image2: PathBuf,
    pub flow: PathBuf,
    /// Occlusion mask image or backward `.flo`.
    pub extra: Option<PathBuf>,
}

/// Tolerance of the ground-truth forward-backward occlusion proxy.
pub const PROXY_TOLERANCE: f32 = 1.5;

/// Reads a dataset manifest: one whitespace-separated tuple per line,
/// paths relative to the manifest's directory, `#` starts a comment.
pub fn read_manifest(path: &Path) -> Result<Vec<DatasetEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(Error::format(
                path,
                format!("line {}: expected 3 or 4 paths, found {}", i + 1, cols.len()),
            ));
        }
        entries.push(DatasetEntry {
            image1: base.join(cols[0]),
            image2: base.join(cols[1]),
            flow: base.join(cols[2]),
            extra: cols.get(3).map(|c| base.join(c)),
        });
    }
    if entries.is_empty() {
        return Err(Error::format(path, "dataset manifest lists no pairs"));
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, rows: &[[String; 4]]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        writeln!(w, "{} {} {} {}", r[0], r[1], r[2], r[3]).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_pair(entry: &DatasetEntry) -> Result<(ImagePair, OcclusionSource)> {
    let i1 = load_image(&entry.image1)?;
    let i2 = load_image(&entry.image2)?;
    let flow = load_flow(&entry.flow)?;
    let (occlusion, source) = match &entry.extra {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("flo")) => {
            let backward = load_flow(p)?;
            if (backward.width(), backward.height()) != (flow.width(), flow.height()) {
                return Err(Error::format(p, "backward flow size differs from forward flow"));
            }
            (occlusion_proxy(&flow, &backward, PROXY_TOLERANCE), OcclusionSource::ConsistencyProxy)
        }
        Some(p) => {
            let mask = load_image(p)?;
            (mask.data().iter().map(|&m| m > 0.0).collect(), OcclusionSource::Mask)
        }
        None => (vec![false; flow.len()], OcclusionSource::None),
    };
    Ok((ImagePair::new(i1, i2, flow, occlusion)?, source))
}

pub fn load_dataset(manifest: &Path) -> Result<Vec<(ImagePair, OcclusionSource)>> {
    read_manifest(manifest)?.iter().map(load_pair).collect()
}

/// 0/255 image of a boolean mask.
pub fn mask_image(mask: &[bool], width: usize, height: usize) -> Result<Image> {
    Image::new(width, height, mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_scaling_and_round_trip() {
        let p = Path::new("mem.pgm");
        let bytes = b"P5\n2 1\n255\n\xff\x00".to_vec();
        let pgm = decode_pgm(&bytes, p).unwrap();
        assert_eq!(pgm.image.data(), &[1.0, 0.0]);
        assert_eq!(encode_pgm(&pgm.image, pgm.maxval), bytes);
        let wide = b"P5\n1 2\n65535\n\x12\x34\xff\xfe".to_vec();
        let pgm = decode_pgm(&wide, p).unwrap();
        assert_eq!(encode_pgm(&pgm.image, pgm.maxval), wide);
    }

    #[test]
    fn pgm_header_comments() {
        let bytes = b"P5\n# made by hand\n1 1\n# depth\n255\n\x80".to_vec();
        let pgm = decode_pgm(&bytes, Path::new("c.pgm")).unwrap();
        assert_eq!(pgm.image.get(0, 0), 128.0 / 255.0);
    }

    #[test]
    fn flo_round_trip_and_magic() {
        let mut f = FlowField::from_fn(3, 2, |x, y| (x as f32 * 0.37 - 1.0, y as f32 * -2.5));
        f.valid[4] = false;
        let p = Path::new("mem.flo");
        let back = decode_flo(&encode_flo(&f, false), p).unwrap();
        assert_eq!((back.u.clone(), back.v.clone()), (f.u.clone(), f.v.clone()));
        let sentinel = decode_flo(&encode_flo(&f, true), p).unwrap();
        assert_eq!(sentinel.valid, f.valid);
        let mut bad = encode_flo(&f, false);
        bad[0] ^= 1;
        assert!(decode_flo(&bad, p).is_err());
    }

    #[test]
    fn kitti_component_codec() {
        assert_eq!(kitti_decode(32768 + 64), 1.0);
        assert_eq!(kitti_encode(1.0), 32768 + 64);
        for x in [-3.5f32, 0.0, 0.015625, 12.25] {
            assert_eq!(kitti_decode(kitti_encode(x)), x);
        }
    }

    #[test]
    fn featuremap_round_trip() {
        let mut fm = FeatureMap::zeros(2, 3, 4);
        fm.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 0.5 - 3.0);
        fm.set_window(9);
        let back = decode_featuremap(&encode_featuremap(&fm), Path::new("m")).unwrap();
        assert_eq!(back, fm);
    }
}
