//! Competitive code extraction and palm-line masks.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::scalar::Scalar;

pub const ORIENTATIONS: u8 = 6;
pub const DEFAULT_KEEP_FRACTION: f64 = 0.70;

/// Per-pixel index of the filter with the most negative response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetitiveCode(Array2<u8>);

impl CompetitiveCode {
    pub fn new(codes: Array2<u8>) -> Result<Self> {
        if let Some(bad) = codes.iter().find(|&&c| c >= ORIENTATIONS) {
            return Err(Error::invalid(format!("code value {bad} outside 0..{ORIENTATIONS}")));
        }
        Ok(CompetitiveCode(codes))
    }

    pub fn codes(&self) -> &Array2<u8> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// Statistic used to rank pixels for the palm-line mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskStrength {
    /// `max_k |r_k|`.
    #[default]
    MaxAbs,
    /// `-min_k r_k`, the depth of the winning response.
    MinResponse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PalmLineMask {
    mask: Array2<bool>,
    keep_fraction: f64,
    /// Set when every pixel had the same strength and the mask fell back to all-true.
    degenerate: bool,
}

impl PalmLineMask {
    pub fn from_parts(mask: Array2<bool>, keep_fraction: f64, degenerate: bool) -> Result<Self> {
        check_keep(keep_fraction)?;
        Ok(PalmLineMask {
            mask,
            keep_fraction,
            degenerate,
        })
    }

    /// All pixels kept.
    pub fn full(dim: (usize, usize)) -> Self {
        PalmLineMask {
            mask: Array2::from_elem(dim, true),
            keep_fraction: 1.0,
            degenerate: false,
        }
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn keep_fraction(&self) -> f64 {
        self.keep_fraction
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }
}

/// The unit of enrollment and matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub code: CompetitiveCode,
    pub mask: PalmLineMask,
    pub subject_id: String,
    pub sample_id: String,
    pub bank_fingerprint: [u8; 32],
}

impl Template {
    pub fn new(
        code: CompetitiveCode,
        mask: PalmLineMask,
        subject_id: impl Into<String>,
        sample_id: impl Into<String>,
        bank_fingerprint: [u8; 32],
    ) -> Result<Self> {
        if code.dim() != mask.mask.dim() {
            return Err(Error::DimensionMismatch {
                expected: code.dim(),
                actual: mask.mask.dim(),
            });
        }
        Ok(Template {
            code,
            mask,
            subject_id: subject_id.into(),
            sample_id: sample_id.into(),
            bank_fingerprint,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.code.dim()
    }
}

fn check_keep(keep_fraction: f64) -> Result<()> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "keep_fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    Ok(())
}

fn check_bank<T: Scalar>(bank: &FilterBank<T>) -> Result<()> {
    if !bank.is_zero_dc() {
        return Err(Error::NotZeroDc);
    }
    if bank.len() != ORIENTATIONS as usize {
        return Err(Error::invalid(format!(
            "competitive coding needs {ORIENTATIONS} orientations, bank has {}",
            bank.len()
        )));
    }
    Ok(())
}

/// Argmin over orientations; ties go to the smallest index.
pub fn code_from_responses<T: Scalar>(responses: &[Array2<T>]) -> Result<CompetitiveCode> {
    let first = responses.first().ok_or(Error::EmptyInput("responses"))?;
    if responses.len() > ORIENTATIONS as usize {
        return Err(Error::invalid("more responses than orientations"));
    }
    let mut best = first.clone();
    let mut codes = Array2::<u8>::zeros(first.dim());
    for (k, r) in responses.iter().enumerate().skip(1) {
        if r.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                actual: r.dim(),
            });
        }
        Zip::from(&mut best).and(&mut codes).and(r).for_each(|b, c, &v| {
            if v < *b {
                *b = v;
                *c = k as u8;
            }
        });
    }
    Ok(CompetitiveCode(codes))
}

pub fn competitive_code<T: Scalar>(image: ArrayView2<T>, bank: &FilterBank<T>) -> Result<CompetitiveCode> {
    check_bank(bank)?;
    if image.is_empty() {
        return Err(Error::EmptyInput("image"));
    }
    code_from_responses(&anchored_responses(image, bank)?)
}

/// Bank responses to the image shifted so its minimum is zero.
///
/// The shift changes nothing in exact arithmetic because every filter is
/// zero-DC. In floating point it makes the responses to `I` and `I + c`
/// bit-identical whenever pixel values and `c` sit on a common grid that
/// subtracts exactly, such as 8-bit data with integer offsets.
pub fn anchored_responses<T: Scalar>(image: ArrayView2<T>, bank: &FilterBank<T>) -> Result<Vec<Array2<T>>> {
    let floor = image.iter().fold(T::infinity(), |m, &v| m.min(v));
    if !floor.is_finite() {
        return bank.responses(image);
    }
    let shifted = image.mapv(|v| v - floor);
    bank.responses(shifted.view())
}

fn strength_map<T: Scalar>(responses: &[Array2<T>], strength: MaskStrength) -> Array2<T> {
    let mut out = match strength {
        MaskStrength::MaxAbs => responses[0].mapv(|v| v.abs()),
        MaskStrength::MinResponse => responses[0].mapv(|v| -v),
    };
    for r in &responses[1..] {
        Zip::from(&mut out).and(r).for_each(|o, &v| {
            let s = match strength {
                MaskStrength::MaxAbs => v.abs(),
                MaskStrength::MinResponse => -v,
            };
            if s > *o {
                *o = s;
            }
        });
    }
    out
}

/// Keeps the `round(keep_fraction * pixels)` strongest pixels. Ties in
/// strength go to the earlier pixel in raster order, so masks are nested
/// across keep fractions.
pub fn mask_from_responses<T: Scalar>(
    responses: &[Array2<T>],
    keep_fraction: f64,
    strength: MaskStrength,
    image_scale: T,
) -> Result<PalmLineMask> {
    check_keep(keep_fraction)?;
    if responses.is_empty() {
        return Err(Error::EmptyInput("responses"));
    }
    let map = strength_map(responses, strength);
    let dim = map.dim();
    let total = map.len();
    let (lo, hi) = map.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if hi - lo <= T::lit(1e-9) * (T::one() + image_scale) {
        return Ok(PalmLineMask {
            mask: Array2::from_elem(dim, true),
            keep_fraction,
            degenerate: true,
        });
    }
    let keep = ((keep_fraction * total as f64).round() as usize).clamp(1, total);
    let flat: Vec<T> = map.iter().copied().collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| flat[b].partial_cmp(&flat[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut bits = vec![false; total];
    for &i in &order[..keep] {
        bits[i] = true;
    }
    Ok(PalmLineMask {
        mask: Array2::from_shape_vec(dim, bits).expect("shape preserved"),
        keep_fraction,
        degenerate: false,
    })
}

fn image_scale<T: Scalar>(image: &ArrayView2<T>) -> T {
    image.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

pub fn palm_line_mask<T: Scalar>(
    image: ArrayView2<T>,
    bank: &FilterBank<T>,
    keep_fraction: f64,
) -> Result<PalmLineMask> {
    palm_line_mask_with(image, bank, keep_fraction, MaskStrength::default())
}

pub fn palm_line_mask_with<T: Scalar>(
    image: ArrayView2<T>,
    bank: &FilterBank<T>,
    keep_fraction: f64,
    strength: MaskStrength,
) -> Result<PalmLineMask> {
    check_keep(keep_fraction)?;
    check_bank(bank)?;
    let responses = anchored_responses(image, bank)?;
    mask_from_responses(&responses, keep_fraction, strength, image_scale(&image))
}

/// Code and mask from a single pass over the bank.
pub fn encode_template<T: Scalar>(
    image: ArrayView2<T>,
    bank: &FilterBank<T>,
    keep_fraction: f64,
    subject_id: &str,
    sample_id: &str,
) -> Result<Template> {
    encode_template_with(
        image,
        bank,
        keep_fraction,
        MaskStrength::default(),
        subject_id,
        sample_id,
    )
}

pub fn encode_template_with<T: Scalar>(
    image: ArrayView2<T>,
    bank: &FilterBank<T>,
    keep_fraction: f64,
    strength: MaskStrength,
    subject_id: &str,
    sample_id: &str,
) -> Result<Template> {
    check_keep(keep_fraction)?;
    check_bank(bank)?;
    if image.is_empty() {
        return Err(Error::EmptyInput("image"));
    }
    let responses = anchored_responses(image, bank)?;
    let code = code_from_responses(&responses)?;
    let mask = mask_from_responses(&responses, keep_fraction, strength, image_scale(&image))?;
    Template::new(code, mask, subject_id, sample_id, bank.fingerprint())
}
