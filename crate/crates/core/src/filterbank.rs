//! Gabor filter bank used to extract line orientations.
//!
//! Filters are sampled on the integer grid `i, j in [-n, n]` with `(x, y) = (j, i)`,
//! shifted to zero DC, and applied correlation-style: the response at pixel
//! `p` is `sum_q K[q] * I[p + q]`. Borders use symmetric reflection
//! (`... c b a | a b c ...`).

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_ORIENTATIONS: usize = 6;
pub const DEFAULT_SIGMA: f64 = 5.6179;
pub const DEFAULT_FREQUENCY: f64 = 0.0916;
pub const DEFAULT_HALF_SIZE: usize = 17;

/// Parameters of a single Gabor filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams<T> {
    /// Orientation in radians, `[0, pi)`.
    pub theta: T,
    /// Frequency of the sinusoid, cycles per pixel.
    pub frequency: T,
    /// Standard deviation of the Gaussian envelope, pixels.
    pub sigma: T,
    /// The kernel spans `(2n + 1) x (2n + 1)` samples.
    pub half_size: usize,
}

impl<T: Scalar> FilterParams<T> {
    pub fn new(theta: T, frequency: T, sigma: T, half_size: usize) -> Result<Self> {
        let p = FilterParams {
            theta,
            frequency,
            sigma,
            half_size,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.frequency > T::zero()) || !self.frequency.is_finite() {
            return Err(Error::invalid(format!(
                "frequency must be positive, got {}",
                self.frequency
            )));
        }
        if self.half_size < 1 {
            return Err(Error::invalid("half_size must be at least 1"));
        }
        if !(self.theta >= T::zero() && self.theta < T::PI()) {
            return Err(Error::invalid(format!("theta must lie in [0, pi), got {}", self.theta)));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        2 * self.half_size + 1
    }

    /// Continuous Gabor function at `(x, y)`.
    pub fn evaluate(&self, x: T, y: T) -> Complex<T> {
        let two = T::lit(2.0);
        let s2 = self.sigma * self.sigma;
        let envelope = (-(x * x + y * y) / (two * s2)).exp() / (two * T::PI() * s2);
        let phase = two * T::PI() * self.frequency * (x * self.theta.cos() + y * self.theta.sin());
        Complex::new(envelope * phase.cos(), envelope * phase.sin())
    }
}

/// A sampled complex Gabor kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborFilter<T> {
    params: FilterParams<T>,
    kernel: Array2<Complex<T>>,
    /// Mean removed by [`zero_dc`]; zero for a freshly sampled filter.
    dc_offset: Complex<T>,
    zero_dc: bool,
}

impl<T: Scalar> GaborFilter<T> {
    pub fn params(&self) -> &FilterParams<T> {
        &self.params
    }

    pub fn kernel(&self) -> &Array2<Complex<T>> {
        &self.kernel
    }

    pub fn is_zero_dc(&self) -> bool {
        self.zero_dc
    }

    pub fn real_kernel(&self) -> Array2<T> {
        self.kernel.mapv(|c| c.re)
    }

    pub fn zero_dc(self) -> Self {
        zero_dc(self)
    }
}

/// Samples the Gabor function on the integer grid. The result is not zero-DC.
pub fn make_gabor<T: Scalar>(params: FilterParams<T>) -> Result<GaborFilter<T>> {
    params.validate()?;
    let n = params.half_size as isize;
    let side = params.side();
    let kernel = Array2::from_shape_fn((side, side), |(r, c)| {
        let i = r as isize - n;
        let j = c as isize - n;
        params.evaluate(T::lit(j as f64), T::lit(i as f64))
    });
    Ok(GaborFilter {
        params,
        kernel,
        dc_offset: Complex::new(T::zero(), T::zero()),
        zero_dc: false,
    })
}

/// Subtracts the kernel mean, real and imaginary parts independently.
pub fn zero_dc_kernel<T: Scalar>(kernel: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let mean = complex_mean(kernel);
    kernel.mapv(|c| c - mean)
}

fn complex_mean<T: Scalar>(kernel: &Array2<Complex<T>>) -> Complex<T> {
    let count = T::from_usize_lossy(kernel.len().max(1));
    let sum = kernel
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |acc, &c| acc + c);
    Complex::new(sum.re / count, sum.im / count)
}

pub fn zero_dc<T: Scalar>(filter: GaborFilter<T>) -> GaborFilter<T> {
    let mean = complex_mean(&filter.kernel);
    GaborFilter {
        params: filter.params,
        kernel: filter.kernel.mapv(|c| c - mean),
        dc_offset: filter.dc_offset + mean,
        zero_dc: true,
    }
}

#[inline]
fn reflect(idx: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = idx;
    // Single reflection suffices while the pad is no larger than the image.
    if i < 0 {
        i = -i - 1;
    }
    if i >= len {
        i = 2 * len - i - 1;
    }
    i as usize
}

/// Pads the image by `pad` pixels on every side using symmetric reflection.
pub fn pad_symmetric<T: Scalar>(image: ArrayView2<T>, pad: usize) -> Array2<T> {
    let (h, w) = image.dim();
    Array2::from_shape_fn((h + 2 * pad, w + 2 * pad), |(r, c)| {
        let y = reflect(r as isize - pad as isize, h);
        let x = reflect(c as isize - pad as isize, w);
        image[(y, x)]
    })
}

fn check_fits<T>(image: &ArrayView2<T>, side: usize) -> Result<()> {
    let (h, w) = image.dim();
    if h < side || w < side {
        return Err(Error::DimensionMismatch {
            expected: (side, side),
            actual: (h, w),
        });
    }
    Ok(())
}

/// Direct spatial correlation of `image` with an arbitrary odd square kernel.
pub fn correlate<T: Scalar>(image: ArrayView2<T>, kernel: ArrayView2<T>) -> Result<Array2<T>> {
    let (kh, kw) = kernel.dim();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::invalid("kernel must be square with odd side"));
    }
    check_fits(&image, kh)?;
    let n = kh / 2;
    let padded = pad_symmetric(image, n);
    let (h, w) = image.dim();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for a in 0..kh {
                let prow = padded.row(y + a);
                let krow = kernel.row(a);
                for b in 0..kw {
                    acc += krow[b] * prow[x + b];
                }
            }
            out[(y, x)] = acc;
        }
    }
    Ok(out)
}

/// Real-part response of `filter` over `image`, same size as the image.
pub fn convolve<T: Scalar>(image: ArrayView2<T>, filter: &GaborFilter<T>) -> Result<Array2<T>> {
    correlate(image, filter.real_kernel().view())
}

/// Horizontal then vertical pass of a rank-one kernel `col[a] * row[b]` over
/// an already padded image; accumulates `scale * result` into `out`.
fn separable_pass<T: Scalar>(
    padded: &Array2<T>,
    col: &[T],
    row: &[T],
    scale: T,
    scratch: &mut Array2<T>,
    out: &mut Array2<T>,
) {
    let (h, w) = out.dim();
    let side = row.len();
    let (ph, _) = padded.dim();
    for r in 0..ph {
        let src = padded.row(r);
        let src = src.as_slice().expect("standard layout");
        let mut dst = scratch.row_mut(r);
        for x in 0..w {
            let win = &src[x..x + side];
            let mut acc = T::zero();
            for (k, v) in row.iter().zip(win) {
                acc += *k * *v;
            }
            dst[x] = acc;
        }
    }
    for y in 0..h {
        for (a, &ca) in col.iter().enumerate() {
            let coef = ca * scale;
            let src = scratch.row(y + a);
            let mut dst = out.row_mut(y);
            for x in 0..w {
                dst[x] += coef * src[x];
            }
        }
    }
}

/// An ordered set of Gabor filters sharing frequency, envelope and size.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T> {
    filters: Vec<GaborFilter<T>>,
}

impl<T: Scalar> FilterBank<T> {
    /// Zero-DC bank with orientations `k * pi / count`.
    pub fn new(count: usize, frequency: T, sigma: T, half_size: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("bank needs at least two orientations"));
        }
        let filters = (0..count)
            .map(|k| {
                let theta = T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(count);
                make_gabor(FilterParams::new(theta, frequency, sigma, half_size)?).map(zero_dc)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FilterBank { filters })
    }

    pub fn from_filters(filters: Vec<GaborFilter<T>>) -> Result<Self> {
        let first = filters.first().ok_or(Error::EmptyInput("filter bank"))?.params;
        for pair in filters.windows(2) {
            if !(pair[1].params.theta > pair[0].params.theta) {
                return Err(Error::invalid("orientations must be strictly increasing"));
            }
        }
        for f in &filters {
            let p = f.params;
            if p.frequency != first.frequency || p.sigma != first.sigma || p.half_size != first.half_size {
                return Err(Error::invalid("filters must share frequency, sigma and size"));
            }
        }
        Ok(FilterBank { filters })
    }

    pub fn filters(&self) -> &[GaborFilter<T>] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn is_zero_dc(&self) -> bool {
        self.filters.iter().all(GaborFilter::is_zero_dc)
    }

    pub fn half_size(&self) -> usize {
        self.filters[0].params.half_size
    }

    pub fn frequency(&self) -> T {
        self.filters[0].params.frequency
    }

    pub fn sigma(&self) -> T {
        self.filters[0].params.sigma
    }

    /// SHA-256 over a canonical little-endian encoding of the parameters.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"PCCBANK1");
        h.update((self.filters.len() as u32).to_le_bytes());
        for f in &self.filters {
            let p = f.params;
            h.update(p.theta.as_f64().to_le_bytes());
            h.update(p.frequency.as_f64().to_le_bytes());
            h.update(p.sigma.as_f64().to_le_bytes());
            h.update((p.half_size as u32).to_le_bytes());
            h.update([f.zero_dc as u8]);
        }
        h.finalize().into()
    }

    /// Real responses of every filter, in bank order.
    ///
    /// Each real kernel is `C * (c_y c_x^T - s_y s_x^T) - dc`, so the response
    /// is computed with three separable passes instead of a dense window.
    pub fn responses(&self, image: ArrayView2<T>) -> Result<Vec<Array2<T>>> {
        let n = self.half_size();
        let side = 2 * n + 1;
        check_fits(&image, side)?;
        let (h, w) = image.dim();
        let padded = pad_symmetric(image, n);
        let mut scratch = Array2::zeros((h + 2 * n, w));

        let ones = vec![T::one(); side];
        let mut box_sum = Array2::zeros((h, w));
        separable_pass(&padded, &ones, &ones, T::one(), &mut scratch, &mut box_sum);

        let two = T::lit(2.0);
        self.filters
            .iter()
            .map(|f| {
                let p = f.params;
                let s2 = p.sigma * p.sigma;
                let norm = T::one() / (two * T::PI() * s2);
                let omega = two * T::PI() * p.frequency;
                let (sin_t, cos_t) = p.theta.sin_cos();
                let axis = |dir: T| -> (Vec<T>, Vec<T>) {
                    (0..side)
                        .map(|idx| {
                            let t = T::lit(idx as f64 - n as f64);
                            let g = (-(t * t) / (two * s2)).exp();
                            let (s, c) = (omega * t * dir).sin_cos();
                            (g * c, g * s)
                        })
                        .unzip()
                };
                let (cx, sx) = axis(cos_t);
                let (cy, sy) = axis(sin_t);
                let mut out = box_sum.mapv(|v| -f.dc_offset.re * v);
                separable_pass(&padded, &cy, &cx, norm, &mut scratch, &mut out);
                separable_pass(&padded, &sy, &sx, -norm, &mut scratch, &mut out);
                Ok(out)
            })
            .collect()
    }
}

impl FilterBank<f64> {
    pub fn default_bank() -> Self {
        FilterBank::new(
            DEFAULT_ORIENTATIONS,
            DEFAULT_FREQUENCY,
            DEFAULT_SIGMA,
            DEFAULT_HALF_SIZE,
        )
        .expect("default parameters are valid")
    }
}

impl FilterBank<f32> {
    pub fn default_bank() -> Self {
        FilterBank::new(
            DEFAULT_ORIENTATIONS,
            DEFAULT_FREQUENCY as f32,
            DEFAULT_SIGMA as f32,
            DEFAULT_HALF_SIZE,
        )
        .expect("default parameters are valid")
    }
}

/// Cross-section of a dark palm line: `A * (1 - exp(-d^2 / 2 sigma_L^2)) + B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel<T> {
    pub amplitude: T,
    pub width: T,
    pub brightness: T,
}

impl<T: Scalar> LineModel<T> {
    pub fn new(amplitude: T, width: T, brightness: T) -> Result<Self> {
        if !(amplitude > T::zero()) {
            return Err(Error::invalid("line amplitude must be positive"));
        }
        if !(width > T::zero()) {
            return Err(Error::invalid("line width must be positive"));
        }
        Ok(LineModel {
            amplitude,
            width,
            brightness,
        })
    }

    /// Gray level at perpendicular distance `d` from the line centre.
    pub fn profile(&self, d: T) -> T {
        let two = T::lit(2.0);
        self.amplitude * (T::one() - (-(d * d) / (two * self.width * self.width)).exp()) + self.brightness
    }
}

/// Closed-form response (up to a positive factor) of a zero-DC filter at the
/// centre of a line whose orientation differs from the filter's by `delta_theta`.
pub fn predicted_line_response<T: Scalar>(line: &LineModel<T>, params: &FilterParams<T>, delta_theta: T) -> T {
    let two = T::lit(2.0);
    let pi = T::PI();
    let s2 = params.sigma * params.sigma;
    let l2 = line.width * line.width;
    let sin = delta_theta.sin();
    let exponent = pi * pi * params.frequency * params.frequency * two * s2 * s2 / (s2 + l2) * sin * sin;
    -line.amplitude * (-exponent).exp()
}
