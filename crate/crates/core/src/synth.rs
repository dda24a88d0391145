//! Synthetic palmprint-like images with known orientation and line masks.
//!
//! Lines follow the upside-down Gaussian profile of [`LineModel`] and are
//! composited with a pixelwise minimum, so the darkest line wins. Every line
//! is labelled with the index of the filter orientation that matches it: the
//! filter with orientation `theta` responds to lines whose *normal* points
//! along `theta`, so a line with tangent angle `phi` gets label
//! `round((phi + pi/2) / (pi/6)) mod 6`.
//!
//! Ground truth is rendered on a canvas padded by [`MAX_TRANSLATE`] pixels so
//! translated samples never need to invent content at the border.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::LineModel;

/// Marker for pixels that carry no line orientation.
pub const NO_ORIENTATION: u8 = 255;
pub const MAX_TRANSLATE: i32 = 8;
const ORIENTATIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Span { min, max }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::invalid(format!(
                "{name}: empty range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Side of the square image, pixels.
    pub size: usize,
    pub principal_lines: usize,
    pub wrinkles: usize,
    pub principal_amplitude: Span,
    pub principal_width: Span,
    pub wrinkle_amplitude: Span,
    pub wrinkle_width: Span,
    pub wrinkle_length: Span,
    /// Far-field gray level `A + B`; each line gets `B = background - A`.
    pub background: Span,
    pub noise_std: f64,
    /// Accepted fraction of ground-truth line pixels; layouts outside are redrawn.
    pub coverage: Span,
    pub seed: u64,
}

/// Image side the default line counts refer to.
pub const REFERENCE_SIZE: usize = 128;
pub const DEFAULT_NOISE_STD: f64 = 30.0;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: REFERENCE_SIZE,
            principal_lines: 3,
            wrinkles: 12,
            principal_amplitude: Span::new(50.0, 90.0),
            principal_width: Span::new(1.8, 3.0),
            wrinkle_amplitude: Span::new(25.0, 50.0),
            wrinkle_width: Span::new(1.0, 1.8),
            wrinkle_length: Span::new(10.0, 24.0),
            background: Span::new(150.0, 200.0),
            noise_std: DEFAULT_NOISE_STD,
            coverage: Span::new(0.04, 0.40),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Defaults with line counts rescaled from [`REFERENCE_SIZE`] to `size`:
    /// principal lines cross the whole image and scale with its side,
    /// wrinkles are local and scale with its area.
    pub fn for_size(size: usize) -> Self {
        let base = SynthConfig::default();
        let r = size as f64 / REFERENCE_SIZE as f64;
        SynthConfig {
            size,
            principal_lines: (base.principal_lines as f64 * r).round() as usize,
            wrinkles: (base.wrinkles as f64 * r * r).round() as usize,
            ..base
        }
    }

    /// Changes the side only; line counts stay as they are.
    pub fn with_size(mut self, size: usize) -> Self {
        self.size = size;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::invalid(format!(
                "image size must be at least 32, got {}",
                self.size
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        self.principal_amplitude.validate("principal_amplitude")?;
        self.principal_width.validate("principal_width")?;
        self.wrinkle_amplitude.validate("wrinkle_amplitude")?;
        self.wrinkle_width.validate("wrinkle_width")?;
        self.wrinkle_length.validate("wrinkle_length")?;
        self.background.validate("background")?;
        self.coverage.validate("coverage")?;
        if self.principal_amplitude.min <= 0.0 || self.wrinkle_amplitude.min <= 0.0 {
            return Err(Error::invalid("line amplitudes must be positive"));
        }
        if self.principal_width.min <= 0.0 || self.wrinkle_width.min <= 0.0 {
            return Err(Error::invalid("line widths must be positive"));
        }
        Ok(())
    }
}

/// One rendered image with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: Array2<f64>,
    /// Orientation label `0..6` or [`NO_ORIENTATION`].
    pub orientation: Array2<u8>,
    /// True exactly where `orientation` holds a label.
    pub line_mask: Array2<bool>,
    /// Distance to the centre of the labelling line, `INFINITY` off-line.
    pub line_distance: Array2<f64>,
}

impl SynthSample {
    pub fn coverage(&self) -> f64 {
        self.line_mask.iter().filter(|&&m| m).count() as f64 / self.line_mask.len() as f64
    }
}

/// A path in pixel coordinates `(x, y) = (column, row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline(pub Vec<(f64, f64)>);

impl Polyline {
    pub fn segment(a: (f64, f64), b: (f64, f64)) -> Self {
        Polyline(vec![a, b])
    }

    fn within(&self, h: usize, w: usize) -> bool {
        self.0
            .iter()
            .all(|&(x, y)| x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64)
    }
}

/// Orientation label for a line with tangent angle `tangent` (radians).
pub fn orientation_label(tangent: f64) -> u8 {
    let normal = (tangent + PI / 2.0).rem_euclid(PI);
    ((normal / (PI / ORIENTATIONS as f64)).round() as usize % ORIENTATIONS) as u8
}

/// Per-pixel nearest distance and tangent of a polyline, limited to `reach`.
fn distance_field(path: &Polyline, h: usize, w: usize, reach: f64) -> Array2<(f64, f64)> {
    let mut field = Array2::from_elem((h, w), (f64::INFINITY, 0.0));
    for seg in path.0.windows(2) {
        let (ax, ay) = seg[0];
        let (bx, by) = seg[1];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let tangent = dy.atan2(dx);
        let x0 = (ax.min(bx) - reach).floor().max(0.0) as usize;
        let x1 = ((ax.max(bx) + reach).ceil() as usize).min(w - 1);
        let y0 = (ay.min(by) - reach).floor().max(0.0) as usize;
        let y1 = ((ay.max(by) + reach).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64, y as f64);
                let t = if len2 > 0.0 {
                    (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (ax + t * dx, ay + t * dy);
                let d = ((px - qx).powi(2) + (py - qy).powi(2)).sqrt();
                let cell = &mut field[(y, x)];
                if d < cell.0 {
                    *cell = (d, tangent);
                }
            }
        }
    }
    field
}

/// Darkens `canvas` along `path` with the line profile, compositing by
/// pixelwise minimum.
pub fn render_line(canvas: &Array2<f64>, path: &Polyline, line: &LineModel<f64>) -> Result<Array2<f64>> {
    let (h, w) = canvas.dim();
    if path.0.len() < 2 {
        return Err(Error::invalid("path needs at least two points"));
    }
    if !path.within(h, w) {
        return Err(Error::invalid("path leaves the canvas"));
    }
    let field = distance_field(path, h, w, 6.0 * line.width + 1.0);
    let mut out = canvas.clone();
    for (o, &(d, _)) in out.iter_mut().zip(field.iter()) {
        if d.is_finite() {
            *o = o.min(line.profile(d));
        }
    }
    Ok(out)
}

struct LineSpec {
    path: Polyline,
    amplitude: f64,
    width: f64,
}

/// The noiseless rendering of one identity on a padded canvas.
#[derive(Debug, Clone)]
pub struct PalmIdentity {
    size: usize,
    canvas: Array2<f64>,
    orientation: Array2<u8>,
    distance: Array2<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

fn bezier(p: [(f64, f64); 4], samples: usize) -> Polyline {
    let pts = (0..=samples)
        .map(|i| {
            let t = i as f64 / samples as f64;
            let u = 1.0 - t;
            let b = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
            let x = b.iter().zip(&p).map(|(w, q)| w * q.0).sum();
            let y = b.iter().zip(&p).map(|(w, q)| w * q.1).sum();
            (x, y)
        })
        .collect();
    Polyline(pts)
}

fn edge_point<R: Rng>(rng: &mut R, side: u8, extent: f64) -> (f64, f64) {
    let t = rng.random_range(0.15 * extent..0.85 * extent);
    match side % 4 {
        0 => (t, 0.0),
        1 => (extent, t),
        2 => (t, extent),
        _ => (0.0, t),
    }
}

impl PalmIdentity {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x9a1));
        let background = config.background.sample(&mut rng);
        let mut best: Option<(f64, PalmIdentity)> = None;
        for _ in 0..32 {
            let lines = Self::draw_lines(config, &mut rng);
            let palm = Self::render(config.size, background, &lines);
            let inner = palm.crop_truth((0, 0)).1;
            let cov = inner.iter().filter(|&&o| o != NO_ORIENTATION).count() as f64 / inner.len() as f64;
            if config.coverage.contains(cov) {
                return Ok(palm);
            }
            let miss = (config.coverage.min - cov).max(cov - config.coverage.max);
            if best.as_ref().is_none_or(|(m, _)| miss < *m) {
                best = Some((miss, palm));
            }
        }
        Ok(best.expect("at least one attempt").1)
    }

    fn draw_lines<R: Rng>(config: &SynthConfig, rng: &mut R) -> Vec<LineSpec> {
        let margin = MAX_TRANSLATE as f64;
        let extent = (config.size - 1) as f64 + 2.0 * margin;
        let mut lines = Vec::with_capacity(config.principal_lines + config.wrinkles);
        for _ in 0..config.principal_lines {
            let a: u8 = rng.random_range(0..4);
            let b = a + rng.random_range(1..4);
            let p0 = edge_point(rng, a, extent);
            let p3 = edge_point(rng, b, extent);
            let inner = |rng: &mut R| {
                (
                    rng.random_range(0.2 * extent..0.8 * extent),
                    rng.random_range(0.2 * extent..0.8 * extent),
                )
            };
            let p1 = inner(rng);
            let p2 = inner(rng);
            lines.push(LineSpec {
                path: bezier([p0, p1, p2, p3], 256),
                amplitude: config.principal_amplitude.sample(rng),
                width: config.principal_width.sample(rng),
            });
        }
        for _ in 0..config.wrinkles {
            let k = rng.random_range(0..ORIENTATIONS) as f64;
            let tangent = k * PI / ORIENTATIONS as f64 + rng.random_range(-PI / 12.0..PI / 12.0) * 0.999;
            let len = config.wrinkle_length.sample(rng);
            let cx = rng.random_range(0.0..extent);
            let cy = rng.random_range(0.0..extent);
            let (dx, dy) = (tangent.cos() * len / 2.0, tangent.sin() * len / 2.0);
            let clamp = |v: f64| v.clamp(0.0, extent);
            lines.push(LineSpec {
                path: Polyline::segment((clamp(cx - dx), clamp(cy - dy)), (clamp(cx + dx), clamp(cy + dy))),
                amplitude: config.wrinkle_amplitude.sample(rng),
                width: config.wrinkle_width.sample(rng),
            });
        }
        lines
    }

    fn render(size: usize, background: f64, lines: &[LineSpec]) -> Self {
        let side = size + 2 * MAX_TRANSLATE as usize;
        let mut canvas = Array2::from_elem((side, side), background);
        let mut orientation = Array2::from_elem((side, side), NO_ORIENTATION);
        let mut distance = Array2::from_elem((side, side), f64::INFINITY);
        let mut strongest = Array2::<f64>::zeros((side, side));
        for line in lines {
            let field = distance_field(&line.path, side, side, 6.0 * line.width + 1.0);
            let two_s2 = 2.0 * line.width * line.width;
            for (idx, &(d, tangent)) in field.indexed_iter() {
                if !d.is_finite() {
                    continue;
                }
                let darkening = line.amplitude * (-(d * d) / two_s2).exp();
                let px = &mut canvas[idx];
                *px = px.min(background - darkening);
                if d <= line.width && darkening > strongest[idx] {
                    strongest[idx] = darkening;
                    orientation[idx] = orientation_label(tangent);
                    distance[idx] = d;
                }
            }
        }
        PalmIdentity {
            size,
            canvas,
            orientation,
            distance,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn window(&self, translate: (i32, i32)) -> (usize, usize) {
        let m = MAX_TRANSLATE;
        ((m - translate.1) as usize, (m - translate.0) as usize)
    }

    fn crop_truth(&self, translate: (i32, i32)) -> (Array2<f64>, Array2<u8>) {
        let (r0, c0) = self.window(translate);
        let n = self.size;
        (
            self.distance.slice(s![r0..r0 + n, c0..c0 + n]).to_owned(),
            self.orientation.slice(s![r0..r0 + n, c0..c0 + n]).to_owned(),
        )
    }

    fn crop(&self, padded: &Array2<f64>, translate: (i32, i32)) -> Result<SynthSample> {
        if translate.0.abs() > MAX_TRANSLATE || translate.1.abs() > MAX_TRANSLATE {
            return Err(Error::invalid(format!(
                "translation {translate:?} exceeds {MAX_TRANSLATE} pixels"
            )));
        }
        let (r0, c0) = self.window(translate);
        let n = self.size;
        let image = padded.slice(s![r0..r0 + n, c0..c0 + n]).to_owned();
        let (line_distance, orientation) = self.crop_truth(translate);
        let line_mask = orientation.mapv(|o| o != NO_ORIENTATION);
        Ok(SynthSample {
            image,
            orientation,
            line_mask,
            line_distance,
        })
    }

    /// Padded canvas plus Gaussian noise, clipped to `[0, 255]` and rounded.
    pub fn noisy_canvas(&self, noise_std: f64, seed: u64) -> Array2<f64> {
        add_noise(&self.canvas, noise_std, seed)
    }

    /// A sample whose content is moved by `translate = (dx, dy)` pixels, so
    /// `sample[y + dy][x + dx] == reference[y][x]` before noise.
    pub fn sample(&self, translate: (i32, i32), noise_std: f64, seed: u64) -> Result<SynthSample> {
        self.crop(&self.noisy_canvas(noise_std, seed), translate)
    }
}

fn add_noise(canvas: &Array2<f64>, noise_std: f64, seed: u64) -> Array2<f64> {
    let quantize = |v: f64| v.clamp(0.0, 255.0).round();
    if noise_std == 0.0 {
        return canvas.mapv(quantize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).expect("finite std");
    canvas.mapv(|v| quantize(v + normal.sample(&mut rng)))
}

/// Renders one palm. Output is a pure function of `config`.
pub fn generate_palm(config: &SynthConfig) -> Result<SynthSample> {
    let palm = PalmIdentity::generate(config)?;
    palm.sample((0, 0), config.noise_std, derive_seed(config.seed, 0x5a3))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// `(dx, dy)` in pixels, each at most [`MAX_TRANSLATE`] in magnitude.
    pub translate: (i32, i32),
    pub noise_std: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            translate: (1, -1),
            noise_std: DEFAULT_NOISE_STD,
        }
    }
}

/// The first sample equals [`generate_palm`]; the second is that same noisy
/// image translated by `jitter.translate` with fresh noise added on top.
pub fn generate_genuine_pair(config: &SynthConfig, jitter: Jitter) -> Result<(SynthSample, SynthSample)> {
    if !(jitter.noise_std >= 0.0) {
        return Err(Error::invalid("jitter noise_std must be non-negative"));
    }
    let palm = PalmIdentity::generate(config)?;
    let noisy = palm.noisy_canvas(config.noise_std, derive_seed(config.seed, 0x5a3));
    let first = palm.crop(&noisy, (0, 0))?;
    let renoised = add_noise(&noisy, jitter.noise_std, derive_seed(config.seed, 0x7e1));
    let second = palm.crop(&renoised, jitter.translate)?;
    Ok((first, second))
}

/// Layout of a synthetic multi-identity dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub identities: usize,
    pub samples: usize,
    /// Each sample is translated by a uniform draw from `[-max_shift, max_shift]^2`.
    pub max_shift: i32,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            identities: 50,
            samples: 5,
            max_shift: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub subject: usize,
    pub index: usize,
    pub translate: (i32, i32),
    pub sample: SynthSample,
}

impl DatasetSample {
    pub fn subject_id(&self) -> String {
        subject_label(self.subject)
    }

    pub fn sample_id(&self) -> String {
        format!("{:02}", self.index)
    }
}

pub fn subject_label(subject: usize) -> String {
    format!("s{subject:04}")
}

/// Configuration of identity `subject` within a dataset seeded by `config.seed`.
pub fn identity_config(config: &SynthConfig, subject: usize) -> SynthConfig {
    config
        .clone()
        .with_seed(derive_seed(config.seed, 0x1d00_0000 + subject as u64))
}

/// Every sample of one identity: the same palm with an independent shift
/// and independent noise per sample.
pub fn identity_samples(
    config: &SynthConfig,
    subject: usize,
    samples: usize,
    max_shift: i32,
) -> Result<Vec<DatasetSample>> {
    if !(0..=MAX_TRANSLATE).contains(&max_shift) {
        return Err(Error::invalid(format!("max_shift must lie in 0..={MAX_TRANSLATE}")));
    }
    let id_config = identity_config(config, subject);
    let palm = PalmIdentity::generate(&id_config)?;
    (0..samples)
        .map(|index| {
            let seed = derive_seed(id_config.seed, 0x5000 + index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let translate = (
                rng.random_range(-max_shift..=max_shift),
                rng.random_range(-max_shift..=max_shift),
            );
            let sample = palm.sample(translate, config.noise_std, derive_seed(seed, 0x6e))?;
            Ok(DatasetSample {
                subject,
                index,
                translate,
                sample,
            })
        })
        .collect()
}

/// Samples in subject-major order. Pure function of `(config, spec)`.
pub fn generate_dataset(config: &SynthConfig, spec: DatasetSpec) -> Result<Vec<DatasetSample>> {
    use rayon::prelude::*;
    let per_subject: Vec<Vec<DatasetSample>> = (0..spec.identities)
        .into_par_iter()
        .map(|s| identity_samples(config, s, spec.samples, spec.max_shift))
        .collect::<Result<_>>()?;
    Ok(per_subject.into_iter().flatten().collect())
}

/// A single straight line through the image centre (shifted by `offset`
/// along its normal) whose filter orientation is `orientation` radians.
pub fn straight_line_sample(
    size: usize,
    orientation: f64,
    offset: f64,
    line: &LineModel<f64>,
    noise_std: f64,
    seed: u64,
) -> Result<SynthSample> {
    if size < 32 {
        return Err(Error::invalid("image size must be at least 32"));
    }
    let background = line.amplitude + line.brightness;
    let tangent = orientation - PI / 2.0;
    let c = (size - 1) as f64 / 2.0 + MAX_TRANSLATE as f64;
    let (nx, ny) = (orientation.cos(), orientation.sin());
    let (cx, cy) = (c + offset * nx, c + offset * ny);
    let extent = (size - 1) as f64 + 2.0 * MAX_TRANSLATE as f64;
    // Clip the infinite line to the padded canvas.
    let (tx, ty) = (tangent.cos(), tangent.sin());
    let reach = 2.0 * extent;
    let mut t_lo = -reach;
    let mut t_hi = reach;
    for (p, d) in [(cx, tx), (cy, ty)] {
        if d.abs() > 1e-12 {
            let (a, b) = ((0.0 - p) / d, (extent - p) / d);
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
    }
    let path = Polyline::segment((cx + t_lo * tx, cy + t_lo * ty), (cx + t_hi * tx, cy + t_hi * ty));
    let spec = LineSpec {
        path,
        amplitude: line.amplitude,
        width: line.width,
    };
    let palm = PalmIdentity::render(size, background, &[spec]);
    palm.sample((0, 0), noise_std, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn render_line_profile() {
        let canvas = Array2::from_elem((40, 40), 180.0);
        let line = LineModel::new(60.0, 2.0, 120.0).unwrap();
        let out = render_line(&canvas, &Polyline::segment((20.0, 0.0), (20.0, 39.0)), &line).unwrap();
        assert_eq!(out[(10, 20)], 120.0);
        assert_abs_diff_eq!(out[(10, 38)], 180.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out[(10, 22)], 60.0 * (1.0 - (-0.5f64).exp()) + 120.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out[(10, 22)], 60.0 * 0.3935 + 120.0, epsilon = 1e-2);
    }

    #[test]
    fn render_line_rejects_out_of_bounds() {
        let canvas = Array2::from_elem((40, 40), 180.0);
        let line = LineModel::new(60.0, 2.0, 120.0).unwrap();
        assert!(render_line(&canvas, &Polyline::segment((-1.0, 0.0), (20.0, 39.0)), &line).is_err());
        assert!(render_line(&canvas, &Polyline::segment((0.0, 0.0), (20.0, 40.0)), &line).is_err());
    }

    #[test]
    fn render_line_keeps_darker_content() {
        let canvas = Array2::from_elem((40, 40), 50.0);
        let line = LineModel::new(60.0, 2.0, 120.0).unwrap();
        let out = render_line(&canvas, &Polyline::segment((20.0, 0.0), (20.0, 39.0)), &line).unwrap();
        assert!(out.iter().all(|&v| v == 50.0));
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = SynthConfig::default().with_seed(42);
        let a = generate_palm(&cfg).unwrap();
        let b = generate_palm(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_palm(&cfg.clone().with_seed(43)).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn empty_layout_is_constant() {
        let cfg = SynthConfig {
            principal_lines: 0,
            wrinkles: 0,
            noise_std: 0.0,
            background: Span::new(170.0, 170.0),
            coverage: Span::new(0.0, 1.0),
            ..SynthConfig::default()
        };
        let s = generate_palm(&cfg).unwrap();
        assert!(s.image.iter().all(|&v| v == 170.0));
        assert!(s.line_mask.iter().all(|&m| !m));
    }

    #[test]
    fn mask_matches_orientation_and_range() {
        for seed in 0..5 {
            let s = generate_palm(&SynthConfig::default().with_seed(seed)).unwrap();
            for (m, o) in s.line_mask.iter().zip(s.orientation.iter()) {
                assert_eq!(*m, *o != NO_ORIENTATION);
                assert!(*o == NO_ORIENTATION || *o < 6);
            }
            assert!(s.image.iter().all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0));
        }
    }

    #[test]
    fn labels_follow_filter_convention() {
        // Horizontal line: normal points down the rows, theta = pi/2.
        assert_eq!(orientation_label(0.0), 3);
        // Vertical line: normal along the columns, theta = 0.
        assert_eq!(orientation_label(PI / 2.0), 0);
        assert_eq!(orientation_label(-PI / 2.0), 0);
        for k in 0..6 {
            let theta = k as f64 * PI / 6.0;
            assert_eq!(orientation_label(theta - PI / 2.0 + 0.2), k as u8);
        }
    }

    #[test]
    fn straight_line_ground_truth() {
        let line = LineModel::new(60.0, 2.0, 120.0).unwrap();
        for k in 0..6 {
            let theta = k as f64 * PI / 6.0;
            let s = straight_line_sample(64, theta, 3.0, &line, 0.0, 1).unwrap();
            let labelled: Vec<u8> = s.orientation.iter().copied().filter(|&o| o != NO_ORIENTATION).collect();
            assert!(!labelled.is_empty());
            assert!(labelled.iter().all(|&o| o == k as u8));
        }
    }

    #[test]
    fn genuine_pair_zero_jitter_identical() {
        let cfg = SynthConfig::default().with_seed(3);
        let (a, b) = generate_genuine_pair(
            &cfg,
            Jitter {
                translate: (0, 0),
                noise_std: 0.0,
            },
        )
        .unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a, generate_palm(&cfg).unwrap());
    }

    #[test]
    fn genuine_pair_translation_peak() {
        let cfg = SynthConfig::default().with_seed(5).with_size(64);
        let (a, b) = generate_genuine_pair(
            &cfg,
            Jitter {
                translate: (2, 0),
                noise_std: 2.0,
            },
        )
        .unwrap();
        let n = 64i32;
        let ma = a.image.mean().unwrap();
        let mb = b.image.mean().unwrap();
        let mut best = (f64::NEG_INFINITY, (0, 0));
        for dy in -4..=4 {
            for dx in -4..=4 {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                for y in 8..n - 8 {
                    for x in 8..n - 8 {
                        let va = a.image[(y as usize, x as usize)] - ma;
                        let vb = b.image[((y + dy) as usize, (x + dx) as usize)] - mb;
                        acc += va * vb;
                        cnt += 1.0;
                    }
                }
                if acc / cnt > best.0 {
                    best = (acc / cnt, (dx, dy));
                }
            }
        }
        assert_eq!(best.1, (2, 0));
    }

    #[test]
    fn translation_limit_enforced() {
        let cfg = SynthConfig::default().with_size(64);
        let j = Jitter {
            translate: (9, 0),
            noise_std: 0.0,
        };
        assert!(generate_genuine_pair(&cfg, j).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(generate_palm(&SynthConfig::default().with_size(16)).is_err());
        let bad = SynthConfig {
            background: Span::new(10.0, 5.0),
            ..SynthConfig::default()
        };
        assert!(generate_palm(&bad).is_err());
    }
}
