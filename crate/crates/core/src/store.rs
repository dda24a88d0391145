//! Image loading, template and ground-truth files, manifests and reports.
//!
//! # Template file (`PCC1`)
//!
//! All integers are little-endian.
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `PCC1` |
//! | 4 | 2 | format version (`u16`, currently 1) |
//! | 6 | 4 | width (`u32`, columns) |
//! | 10 | 4 | height (`u32`, rows) |
//! | 14 | 32 | bank fingerprint |
//! | 46 | 8 | mask keep fraction (`f64` bits) |
//! | 54 | 1 | flags, bit 0 = degenerate mask |
//! | 55 | 2 + a | subject id: `u16` byte length then UTF-8 |
//! | 57 + a | 2 + b | sample id: `u16` byte length then UTF-8 |
//! | 59 + a + b | w·h | code, one byte per pixel (0–5), row-major |
//! | … | h·⌈w/8⌉ | mask, one bit per pixel, each row padded to a byte, least significant bit first |
//!
//! Padding bits must be zero and nothing may follow the mask, so every
//! accepted file re-serializes to the same bytes.
//!
//! # Ground-truth sidecar (`PGTH`)
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `PGTH` |
//! | 4 | 4 | width (`u32`) |
//! | 8 | 4 | height (`u32`) |
//! | 12 | w·h | orientation label 0–5 or 255 for no line, row-major |
//!
//! # Manifest
//!
//! CSV with the header `subject_id,sample_id,image_path,session,excluded`.
//! Relative image paths are resolved against the manifest's directory.
//! `excluded` accepts `0`/`1`/`true`/`false` (empty means `false`).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::coding::{CompetitiveCode, PalmLineMask, Template, ORIENTATIONS};
use crate::synth::NO_ORIENTATION;
use crate::{Error, Result};

pub const TEMPLATE_MAGIC: &[u8; 4] = b"PCC1";
pub const TEMPLATE_VERSION: u16 = 1;
/// Template bytes that do not depend on image size or id lengths.
pub const TEMPLATE_FIXED_HEADER: usize = 4 + 2 + 4 + 4 + 32 + 8 + 1 + 2 + 2;
pub const GROUND_TRUTH_MAGIC: &[u8; 4] = b"PGTH";
pub const GROUND_TRUTH_HEADER: usize = 4 + 4 + 4;
pub const MANIFEST_HEADER: [&str; 5] = ["subject_id", "sample_id", "image_path", "session", "excluded"];
/// Upper bound on pixels accepted from a file header.
pub const MAX_PIXELS: usize = 1 << 26;

const FLAG_DEGENERATE: u8 = 1;

/// Loads an 8-bit single-channel PNG or PGM. Anything else, including
/// colour and 16-bit images, is rejected rather than converted.
pub fn load_image(path: impl AsRef<Path>) -> Result<Array2<u8>> {
    let path = path.as_ref();
    let unsupported = |reason: String| Error::UnsupportedImage {
        path: path.to_owned(),
        reason,
    };
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Pnm) => {}
        Some(f) => return Err(unsupported(format!("{f:?} is not PNG or PGM"))),
        None => return Err(unsupported("unrecognised format".into())),
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(e) => Error::Io(e),
        image::ImageError::Unsupported(e) => unsupported(e.to_string()),
        e => Error::Corrupt {
            path: path.to_owned(),
            reason: e.to_string(),
        },
    })?;
    let DynamicImage::ImageLuma8(gray) = decoded else {
        return Err(unsupported(format!(
            "pixel type {:?} is not 8-bit grayscale",
            decoded.color()
        )));
    };
    let (w, h) = gray.dimensions();
    Ok(Array2::from_shape_vec((h as usize, w as usize), gray.into_raw()).expect("buffer matches dimensions"))
}

/// Writes an 8-bit grayscale PNG.
pub fn save_image(image: &Array2<u8>, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = image.dim();
    let buf = image::GrayImage::from_raw(w as u32, h as u32, image.iter().copied().collect())
        .expect("buffer matches dimensions");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(e) => Error::Io(e),
        e => Error::Io(std::io::Error::other(e)),
    })
}

/// Rounds and clamps intensities to `0..=255`.
pub fn to_u8(image: &Array2<f64>) -> Array2<u8> {
    image.mapv(|v| v.round().clamp(0.0, 255.0) as u8)
}

pub fn to_f64(image: &Array2<u8>) -> Array2<f64> {
    image.mapv(f64::from)
}

/// Byte cursor that reports truncation instead of panicking.
struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Truncated(what));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let n = self.u16(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }

    fn finish(self) -> Result<()> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", self.bytes.len())))
        }
    }
}

fn checked_dims(width: u32, height: u32) -> Result<(usize, usize)> {
    let (w, h) = (width as usize, height as usize);
    if w == 0 || h == 0 || w.saturating_mul(h) > MAX_PIXELS {
        return Err(Error::Format(format!("implausible size {width}x{height}")));
    }
    Ok((h, w))
}

fn push_string(out: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    let n = u16::try_from(s.len()).map_err(|_| Error::invalid(format!("{what} longer than 65535 bytes")))?;
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Size in bytes of the serialized template.
pub fn template_file_len(t: &Template) -> usize {
    let (h, w) = t.dim();
    TEMPLATE_FIXED_HEADER + t.subject_id.len() + t.sample_id.len() + h * w + h * w.div_ceil(8)
}

pub fn template_to_bytes(t: &Template) -> Result<Vec<u8>> {
    let (h, w) = t.dim();
    let width = u32::try_from(w).map_err(|_| Error::invalid("template too wide"))?;
    let height = u32::try_from(h).map_err(|_| Error::invalid("template too tall"))?;
    let mut out = Vec::with_capacity(template_file_len(t));
    out.extend_from_slice(TEMPLATE_MAGIC);
    out.extend_from_slice(&TEMPLATE_VERSION.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&t.bank_fingerprint);
    out.extend_from_slice(&t.mask.keep_fraction().to_bits().to_le_bytes());
    out.push(if t.mask.is_degenerate() { FLAG_DEGENERATE } else { 0 });
    push_string(&mut out, &t.subject_id, "subject id")?;
    push_string(&mut out, &t.sample_id, "sample id")?;
    out.extend(t.code.codes().iter().copied());
    for row in t.mask.mask().rows() {
        for chunk in row.as_slice().expect("standard layout").chunks(8) {
            out.push(chunk.iter().enumerate().fold(0u8, |b, (i, &m)| b | (u8::from(m) << i)));
        }
    }
    debug_assert_eq!(out.len(), template_file_len(t));
    Ok(out)
}

pub fn template_from_bytes(bytes: &[u8]) -> Result<Template> {
    let mut r = Reader { bytes };
    if r.take(4, "magic")? != TEMPLATE_MAGIC {
        return Err(Error::BadMagic { expected: "PCC1" });
    }
    let version = r.u16("version")?;
    if version != TEMPLATE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    let (h, w) = checked_dims(width, height)?;
    let fingerprint: [u8; 32] = r.array("fingerprint")?;
    let keep_fraction = f64::from_bits(u64::from_le_bytes(r.array("keep fraction")?));
    let [flags] = r.array("flags")?;
    if flags & !FLAG_DEGENERATE != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
    }
    let subject = r.string("subject id")?;
    let sample = r.string("sample id")?;
    let codes = r.take(h * w, "code payload")?;
    if let Some(bad) = codes.iter().find(|&&c| c >= ORIENTATIONS) {
        return Err(Error::Format(format!("code value {bad} out of range")));
    }
    let row_bytes = w.div_ceil(8);
    let packed = r.take(h * row_bytes, "mask payload")?;
    r.finish()?;
    let pad_bits = row_bytes * 8 - w;
    let mut mask = Vec::with_capacity(h * w);
    for row in packed.chunks(row_bytes) {
        if pad_bits > 0 && row[row_bytes - 1] >> (8 - pad_bits) != 0 {
            return Err(Error::Format("nonzero mask padding".into()));
        }
        mask.extend((0..w).map(|x| row[x / 8] >> (x % 8) & 1 == 1));
    }
    let code = CompetitiveCode::new(Array2::from_shape_vec((h, w), codes.to_vec()).expect("sized"))?;
    let mask = PalmLineMask::from_parts(
        Array2::from_shape_vec((h, w), mask).expect("sized"),
        keep_fraction,
        flags & FLAG_DEGENERATE != 0,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    Template::new(code, mask, subject, sample, fingerprint)
}

pub fn save_template(t: &Template, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, template_to_bytes(t)?)?;
    Ok(())
}

pub fn load_template(path: impl AsRef<Path>) -> Result<Template> {
    let path = path.as_ref();
    template_from_bytes(&fs::read(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(reason) => Error::Corrupt {
            path: path.to_owned(),
            reason,
        },
        Error::Truncated(what) => Error::Corrupt {
            path: path.to_owned(),
            reason: format!("truncated {what}"),
        },
        e => e,
    }
}

pub fn ground_truth_to_bytes(orientation: &Array2<u8>) -> Result<Vec<u8>> {
    let (h, w) = orientation.dim();
    let width = u32::try_from(w).map_err(|_| Error::invalid("ground truth too wide"))?;
    let height = u32::try_from(h).map_err(|_| Error::invalid("ground truth too tall"))?;
    if orientation.iter().any(|&o| o >= ORIENTATIONS && o != NO_ORIENTATION) {
        return Err(Error::invalid("orientation labels must be 0..6 or 255"));
    }
    let mut out = Vec::with_capacity(GROUND_TRUTH_HEADER + h * w);
    out.extend_from_slice(GROUND_TRUTH_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend(orientation.iter().copied());
    Ok(out)
}

pub fn ground_truth_from_bytes(bytes: &[u8]) -> Result<Array2<u8>> {
    let mut r = Reader { bytes };
    if r.take(4, "magic")? != GROUND_TRUTH_MAGIC {
        return Err(Error::BadMagic { expected: "PGTH" });
    }
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    let (h, w) = checked_dims(width, height)?;
    let labels = r.take(h * w, "orientation payload")?;
    r.finish()?;
    if let Some(bad) = labels.iter().find(|&&o| o >= ORIENTATIONS && o != NO_ORIENTATION) {
        return Err(Error::Format(format!("orientation label {bad} out of range")));
    }
    Ok(Array2::from_shape_vec((h, w), labels.to_vec()).expect("sized"))
}

pub fn save_ground_truth(orientation: &Array2<u8>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ground_truth_to_bytes(orientation)?)?;
    Ok(())
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Array2<u8>> {
    let path = path.as_ref();
    ground_truth_from_bytes(&fs::read(path)?).map_err(|e| with_path(e, path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub sample_id: String,
    pub image_path: PathBuf,
    pub session: String,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Entries not flagged as excluded, in file order.
    pub fn active(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| !e.excluded)
    }

    pub fn subjects(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.entries.iter().map(|e| e.subject_id.as_str()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Flags every entry whose `(subject_id, sample_id)` is listed.
    /// Returns how many entries were newly flagged.
    pub fn exclude(&mut self, keys: &[(String, String)]) -> usize {
        let mut n = 0;
        for e in &mut self.entries {
            if !e.excluded && keys.iter().any(|(s, a)| *s == e.subject_id && *a == e.sample_id) {
                e.excluded = true;
                n += 1;
            }
        }
        n
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" => Some(false),
        "1" | "true" => Some(true),
        _ => None,
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Manifest {
        line,
        reason: e.to_string(),
    }
}

/// Parses manifest text; relative image paths are joined onto `base_dir`.
pub fn parse_manifest_str(text: &str, base_dir: &Path) -> Result<Manifest> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("manifest"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Manifest {
            line: 1,
            reason: format!("header must be {}", MANIFEST_HEADER.join(",")),
        });
    }
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let (subject, sample, image, session) = (field(0), field(1), field(2), field(3));
        for (name, v) in [("subject_id", subject), ("sample_id", sample), ("image_path", image)] {
            if v.is_empty() {
                return Err(Error::Manifest {
                    line,
                    reason: format!("empty {name}"),
                });
            }
        }
        let excluded = parse_flag(field(4)).ok_or_else(|| Error::Manifest {
            line,
            reason: format!("excluded must be 0, 1, true or false, got {:?}", field(4)),
        })?;
        let key = (subject.to_owned(), sample.to_owned());
        if let Some(&first) = seen.get(&key) {
            return Err(Error::DuplicateEntry {
                subject: key.0,
                sample: key.1,
                first,
                second: line,
            });
        }
        seen.insert(key, line);
        let path = Path::new(image);
        entries.push(ManifestEntry {
            subject_id: subject.to_owned(),
            sample_id: sample.to_owned(),
            image_path: if path.is_absolute() {
                path.to_owned()
            } else {
                base_dir.join(path)
            },
            session: session.to_owned(),
            excluded,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput("manifest has no entries"));
    }
    Ok(Manifest { entries })
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_manifest_str(&text, path.parent().unwrap_or(Path::new("")))
}

/// Writes a manifest with image paths made relative to the manifest's
/// directory where possible.
pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER).map_err(csv_io)?;
    for e in &manifest.entries {
        let image = e.image_path.strip_prefix(base).unwrap_or(&e.image_path);
        let image = image
            .to_str()
            .ok_or_else(|| Error::invalid("image path is not UTF-8"))?;
        w.write_record([
            e.subject_id.as_str(),
            e.sample_id.as_str(),
            image,
            e.session.as_str(),
            if e.excluded { "1" } else { "0" },
        ])
        .map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(path, bytes)?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Reads an exclusion list: one `subject_id,sample_id` per line, blank
/// lines and lines starting with `#` ignored.
pub fn parse_exclusion_list(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut keys = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (s, a) = line.split_once(',').ok_or_else(|| Error::Manifest {
            line: i + 1,
            reason: "expected subject_id,sample_id".into(),
        })?;
        keys.push((s.trim().to_owned(), a.trim().to_owned()));
    }
    Ok(keys)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
