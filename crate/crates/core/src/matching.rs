//! Angular differences and the CompCode / class-specific matching scores.
//!
//! All scores are dissimilarities in `[0, 1]`; `0` means identical codes.
//! Scoring first histograms the per-pixel angular differences over the
//! participating pixels and then maps the four bins, so the linear and
//! exponential mappings cost the same per pixel.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::coding::{CompetitiveCode, Template, ORIENTATIONS};
use crate::error::{Error, Result};

pub const DEFAULT_K: f64 = 1.0;
pub const DEFAULT_WINDOW: usize = 2;
/// Share of a metric's effective pixels that must survive a shift.
pub const MIN_VALID_FRACTION: f64 = 0.25;

/// Cyclic distance between two orientation indices, `0..=3`.
#[inline]
pub fn angular_distance(a: u8, b: u8) -> u8 {
    let d = a.abs_diff(b);
    d.min(ORIENTATIONS - d)
}

const fn delta_table() -> [u8; 36] {
    let mut t = [0u8; 36];
    let mut a = 0usize;
    while a < 6 {
        let mut b = 0usize;
        while b < 6 {
            let d = a.abs_diff(b);
            t[a * 6 + b] = if d < 6 - d { d } else { 6 - d } as u8;
            b += 1;
        }
        a += 1;
    }
    t
}

static DELTA: [u8; 36] = delta_table();

/// Per-pixel angular difference field and the pixels that take part in scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchDifference {
    pub delta: Array2<u8>,
    pub valid: Array2<bool>,
}

impl MatchDifference {
    pub fn dim(&self) -> (usize, usize) {
        self.delta.dim()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Mean of the valid differences; the linear-classifier form with an
    /// all-ones weight restricted to valid pixels.
    pub fn mean(&self) -> Option<f64> {
        let n = self.n_valid();
        if n == 0 {
            return None;
        }
        let sum = Zip::from(&self.delta)
            .and(&self.valid)
            .fold(0u64, |acc, &d, &v| acc + if v { d as u64 } else { 0 });
        Some(sum as f64 / n as f64)
    }
}

pub fn angular_difference(c1: &CompetitiveCode, c2: &CompetitiveCode) -> Result<MatchDifference> {
    if c1.dim() != c2.dim() {
        return Err(Error::DimensionMismatch {
            expected: c1.dim(),
            actual: c2.dim(),
        });
    }
    let delta = Zip::from(c1.codes())
        .and(c2.codes())
        .map_collect(|&a, &b| angular_distance(a, b));
    Ok(MatchDifference {
        valid: Array2::from_elem(delta.dim(), true),
        delta,
    })
}

/// Angular difference of `probe` shifted by `offset` against `gallery`:
/// `delta[y][x]` compares `gallery[y][x]` with `probe[y + dy][x + dx]`;
/// pixels whose partner falls outside the frame are invalid.
pub fn shifted_difference(
    gallery: &CompetitiveCode,
    probe: &CompetitiveCode,
    offset: (i32, i32),
) -> Result<MatchDifference> {
    if gallery.dim() != probe.dim() {
        return Err(Error::DimensionMismatch {
            expected: gallery.dim(),
            actual: probe.dim(),
        });
    }
    let (h, w) = gallery.dim();
    let mut delta = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), false);
    for y in 0..h {
        let py = y as i64 + offset.1 as i64;
        if py < 0 || py >= h as i64 {
            continue;
        }
        for x in 0..w {
            let px = x as i64 + offset.0 as i64;
            if px < 0 || px >= w as i64 {
                continue;
            }
            delta[(y, x)] = angular_distance(gallery.codes()[(y, x)], probe.codes()[(py as usize, px as usize)]);
            valid[(y, x)] = true;
        }
    }
    Ok(MatchDifference { delta, valid })
}

/// How angular differences are mapped before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mapping {
    Linear,
    /// `exp(-k * delta)`.
    Exponential {
        k: f64,
    },
}

/// Which pixels take part in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskPolicy {
    /// Every pixel.
    Full,
    /// The enrolled template's palm-line mask.
    Gallery,
    /// Pixels kept by both masks.
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub mapping: Mapping,
    pub mask: MaskPolicy,
}

impl Metric {
    pub fn compcode() -> Self {
        Metric {
            mapping: Mapping::Linear,
            mask: MaskPolicy::Full,
        }
    }

    /// Mask only.
    pub fn masked_compcode() -> Self {
        Metric {
            mapping: Mapping::Linear,
            mask: MaskPolicy::Gallery,
        }
    }

    /// Mapping only.
    pub fn exp_compcode(k: f64) -> Self {
        Metric {
            mapping: Mapping::Exponential { k },
            mask: MaskPolicy::Full,
        }
    }

    pub fn cscc(k: f64) -> Self {
        Metric {
            mapping: Mapping::Exponential { k },
            mask: MaskPolicy::Gallery,
        }
    }

    /// Stable method id used in reports.
    pub fn id(&self) -> &'static str {
        match (self.mapping, self.mask) {
            (Mapping::Linear, MaskPolicy::Full) => "compcode",
            (Mapping::Linear, _) => "m-cc",
            (Mapping::Exponential { .. }, MaskPolicy::Full) => "e-cc",
            (Mapping::Exponential { .. }, _) => "cscc",
        }
    }

    pub fn from_id(id: &str, k: f64) -> Result<Self> {
        match id {
            "compcode" => Ok(Metric::compcode()),
            "m-cc" => Ok(Metric::masked_compcode()),
            "e-cc" => Ok(Metric::exp_compcode(k)),
            "cscc" => Ok(Metric::cscc(k)),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Mapping::Exponential { k } = self.mapping {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::invalid(format!("mapping factor k must be positive, got {k}")));
            }
        }
        Ok(())
    }

    /// Score from a histogram of angular differences over the valid pixels.
    fn score(&self, hist: &[u64; 4]) -> (f64, f64, usize) {
        let n: u64 = hist.iter().sum();
        let nf = n as f64;
        match self.mapping {
            Mapping::Linear => {
                let sum: u64 = hist.iter().enumerate().map(|(d, &c)| d as u64 * c).sum();
                let raw = sum as f64 / nf;
                (raw / 3.0, raw, n as usize)
            }
            Mapping::Exponential { k } => {
                let s = hist
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| c as f64 * (-k * d as f64).exp())
                    .sum::<f64>()
                    / nf;
                let floor = (-3.0 * k).exp();
                let value = ((1.0 - s) / (1.0 - floor)).clamp(0.0, 1.0);
                (value, s, n as usize)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    /// Normalised dissimilarity in `[0, 1]`.
    pub value: f64,
    /// Mean of the mapped differences before normalisation.
    pub raw_mean: f64,
    pub n_valid: usize,
    /// `(dx, dy)` applied to the probe.
    pub offset: (i32, i32),
}

fn check_pair(gallery: &Template, probe: &Template) -> Result<()> {
    if gallery.bank_fingerprint != probe.bank_fingerprint {
        return Err(Error::FingerprintMismatch);
    }
    if gallery.dim() != probe.dim() {
        return Err(Error::DimensionMismatch {
            expected: gallery.dim(),
            actual: probe.dim(),
        });
    }
    Ok(())
}

/// Histogram of angular differences at one offset, restricted by the mask policy.
fn histogram(gallery: &Template, probe: &Template, policy: MaskPolicy, offset: (i32, i32)) -> [u64; 4] {
    let (h, w) = gallery.dim();
    let (dx, dy) = (offset.0 as i64, offset.1 as i64);
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as i64 - dy).min(h as i64).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as i64 - dx).min(w as i64).max(0) as usize;
    let mut bins = [0u64; 8];
    if x0 >= x1 {
        return [0; 4];
    }
    let gcodes = gallery.code.codes();
    let pcodes = probe.code.codes();
    let gmask = gallery.mask.mask();
    let pmask = probe.mask.mask();
    for y in y0..y1 {
        let py = (y as i64 + dy) as usize;
        let grow = gcodes.row(y);
        let prow = pcodes.row(py);
        let gm = gmask.row(y);
        let pm = pmask.row(py);
        for x in x0..x1 {
            let px = (x as i64 + dx) as usize;
            let keep = match policy {
                MaskPolicy::Full => true,
                MaskPolicy::Gallery => gm[x],
                MaskPolicy::Intersection => gm[x] && pm[px],
            };
            let d = DELTA[grow[x] as usize * 6 + prow[px] as usize];
            // Dropped pixels land in bins 4..8 and are ignored.
            bins[(d | ((!keep as u8) << 2)) as usize] += 1;
        }
    }
    [bins[0], bins[1], bins[2], bins[3]]
}

fn effective_pixels(gallery: &Template, probe: &Template, policy: MaskPolicy) -> usize {
    histogram(gallery, probe, policy, (0, 0)).iter().sum::<u64>() as usize
}

/// Plain CompCode distance over every pixel.
pub fn compcode_distance(t1: &Template, t2: &Template) -> Result<MatchScore> {
    aligned_distance(t1, t2, 0, Metric::compcode())
}

/// Class-specific distance: gallery mask gates the comparison and
/// differences pass through `exp(-k * delta)`.
pub fn cscc_distance(gallery: &Template, probe: &Template, k: f64) -> Result<MatchScore> {
    aligned_distance(gallery, probe, 0, Metric::cscc(k))
}

/// Offsets in `[-window, window]^2`, nearest first so ties keep the smaller shift.
fn offsets(window: usize) -> Vec<(i32, i32)> {
    let w = window as i32;
    let mut v: Vec<(i32, i32)> = (-w..=w).flat_map(|dy| (-w..=w).map(move |dx| (dx, dy))).collect();
    v.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    v
}

/// Minimum score over all integer shifts of the probe within `window`.
pub fn aligned_distance(gallery: &Template, probe: &Template, window: usize, metric: Metric) -> Result<MatchScore> {
    check_pair(gallery, probe)?;
    metric.validate()?;
    let effective = effective_pixels(gallery, probe, metric.mask);
    if effective == 0 {
        return Err(Error::NoOverlap { valid: 0, required: 1 });
    }
    let required = ((MIN_VALID_FRACTION * effective as f64).ceil() as usize).max(1);
    let mut best: Option<MatchScore> = None;
    let mut largest = 0;
    for offset in offsets(window) {
        let hist = histogram(gallery, probe, metric.mask, offset);
        let n: u64 = hist.iter().sum();
        largest = largest.max(n as usize);
        if (n as usize) < required {
            continue;
        }
        let (value, raw_mean, n_valid) = metric.score(&hist);
        if best.is_none_or(|b| value < b.value) {
            best = Some(MatchScore {
                value,
                raw_mean,
                n_valid,
                offset,
            });
        }
    }
    best.ok_or(Error::NoOverlap {
        valid: largest,
        required,
    })
}
