//! Statistics of matching-difference fields: the impostor difference
//! distribution, mean and covariance fields, stationarity diagnostics,
//! Fisher discriminant weights, decidability and the optimal coding search.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_rational::Ratio;
use num_traits::{Num, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::ORIENTATIONS;
use crate::error::{Error, Result};
use crate::matching::{angular_distance, MatchDifference};
use crate::scalar::Scalar;

/// Number of distinct angular differences.
pub const LEVELS: usize = ORIENTATIONS as usize / 2 + 1;
pub const DEFAULT_PATCH: usize = 32;
pub const MAX_PATCH_DIM: usize = 4096;
/// Relative ridge used when the caller does not give one.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;
pub const DEFAULT_KERNEL_HALF_WIDTH: usize = 4;
/// Groups whose mean is below this many standard errors of a variance
/// estimate are treated as noise when averaging coefficients of variation.
pub const DEFAULT_NOISE_FLOOR_SE: f64 = 8.0;
/// Kernel entries at or above this share of the central peak count as support.
pub const DEFAULT_SUPPORT_FRACTION: f64 = 0.1;

/// Difference distribution obtained by enumerating every ordered code pair
/// with all codes equally likely.
pub fn theoretical_pmf() -> [Ratio<i64>; LEVELS] {
    let mut counts = [0i64; LEVELS];
    for a in 0..ORIENTATIONS {
        for b in 0..ORIENTATIONS {
            counts[angular_distance(a, b) as usize] += 1;
        }
    }
    let total = (ORIENTATIONS as i64).pow(2);
    counts.map(|c| Ratio::new(c, total))
}

/// Moment of the theoretical difference distribution, `E[delta^power]`.
pub fn theoretical_moment(power: u32) -> Ratio<i64> {
    theoretical_pmf().iter().enumerate().fold(Ratio::zero(), |acc, (d, p)| {
        acc + p * Ratio::from_integer((d as i64).pow(power))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferencePmf {
    pub probabilities: [f64; LEVELS],
    pub counts: [u64; LEVELS],
    pub sample_count: u64,
    /// Set when fewer than [`Self::MIN_SAMPLES`] pixels were counted.
    pub low_confidence: bool,
}

impl DifferencePmf {
    pub const MIN_SAMPLES: u64 = 10_000;

    pub fn from_counts(counts: [u64; LEVELS]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::EmptyInput("difference samples"));
        }
        Ok(DifferencePmf {
            probabilities: counts.map(|c| c as f64 / n as f64),
            counts,
            sample_count: n,
            low_confidence: n < Self::MIN_SAMPLES,
        })
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(d, p)| d as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probabilities
            .iter()
            .enumerate()
            .map(|(d, p)| p * (d as f64 - m).powi(2))
            .sum()
    }
}

/// Empirical frequencies of the valid differences across all fields.
pub fn impostor_difference_pmf(diffs: &[MatchDifference]) -> Result<DifferencePmf> {
    let mut counts = [0u64; LEVELS];
    for diff in diffs {
        for (&d, &v) in diff.delta.iter().zip(diff.valid.iter()) {
            if v {
                counts[d as usize] += 1;
            }
        }
    }
    DifferencePmf::from_counts(counts)
}

fn check_dims(diffs: &[MatchDifference], min: usize) -> Result<(usize, usize)> {
    if diffs.is_empty() {
        return Err(Error::EmptyInput("difference fields"));
    }
    if diffs.len() < min {
        return Err(Error::InsufficientData(format!(
            "need at least {min} difference fields, got {}",
            diffs.len()
        )));
    }
    let dim = diffs[0].dim();
    for d in diffs {
        if d.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: d.dim(),
            });
        }
    }
    Ok(dim)
}

/// Pixelwise mean of the valid differences. Pixels never valid are NaN.
pub fn empirical_mean_field<T: Scalar>(diffs: &[MatchDifference]) -> Result<Array2<T>> {
    let dim = check_dims(diffs, 2)?;
    let mut sum = Array2::<u64>::zeros(dim);
    let mut count = Array2::<u64>::zeros(dim);
    for diff in diffs {
        ndarray::Zip::from(&mut sum)
            .and(&mut count)
            .and(&diff.delta)
            .and(&diff.valid)
            .for_each(|s, c, &d, &v| {
                if v {
                    *s += d as u64;
                    *c += 1;
                }
            });
    }
    Ok(ndarray::Zip::from(&sum).and(&count).map_collect(|&s, &c| {
        if c == 0 {
            T::nan()
        } else {
            T::from_u64(s).unwrap() / T::from_u64(c).unwrap()
        }
    }))
}

/// Square grid of pixels sampled from a field: rows `origin.0 + stride * i`,
/// columns `origin.1 + stride * j` for `i, j < size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PatchGeometry {
    pub origin: (usize, usize),
    pub size: usize,
    pub stride: usize,
}

impl PatchGeometry {
    pub fn new(origin: (usize, usize), size: usize, stride: usize) -> Result<Self> {
        if size == 0 || stride == 0 {
            return Err(Error::invalid("patch size and stride must be positive"));
        }
        if size * size > MAX_PATCH_DIM {
            return Err(Error::invalid(format!(
                "patch of {size}x{size} exceeds {MAX_PATCH_DIM} pixels"
            )));
        }
        Ok(PatchGeometry { origin, size, stride })
    }

    /// Patch of `size` pixels per side centred in a field of shape `dim`.
    pub fn centered(dim: (usize, usize), size: usize, stride: usize) -> Result<Self> {
        let extent = (size.max(1) - 1) * stride + 1;
        if extent > dim.0 || extent > dim.1 {
            return Err(Error::invalid(format!("patch extent {extent} exceeds field {dim:?}")));
        }
        Self::new(((dim.0 - extent) / 2, (dim.1 - extent) / 2), size, stride)
    }

    pub fn dim(&self) -> usize {
        self.size * self.size
    }

    fn fits(&self, dim: (usize, usize)) -> bool {
        let extent = (self.size - 1) * self.stride;
        self.origin.0 + extent < dim.0 && self.origin.1 + extent < dim.1
    }

    /// Vectorised patch (row-major) of a difference field.
    pub fn extract(&self, diff: &MatchDifference) -> Result<Array1<u8>> {
        if !self.fits(diff.dim()) {
            return Err(Error::invalid(format!("patch {self:?} outside field {:?}", diff.dim())));
        }
        let mut out = Array1::zeros(self.dim());
        for i in 0..self.size {
            for j in 0..self.size {
                let at = (self.origin.0 + self.stride * i, self.origin.1 + self.stride * j);
                if !diff.valid[at] {
                    return Err(Error::InsufficientData(format!("pixel {at:?} in patch is not valid")));
                }
                out[i * self.size + j] = diff.delta[at];
            }
        }
        Ok(out)
    }
}

/// Streaming mean and scatter matrix. Partial accumulators built on
/// disjoint shards combine with [`CovarianceAccumulator::merge`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator<T> {
    count: usize,
    mean: Array1<T>,
    scatter: Array2<T>,
}

impl<T: Scalar> CovarianceAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        CovarianceAccumulator {
            count: 0,
            mean: Array1::zeros(dim),
            scatter: Array2::zeros((dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds each row of `rows` as one sample.
    pub fn push_rows(&mut self, rows: ArrayView2<T>) -> Result<()> {
        if rows.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: (rows.nrows(), self.dim()),
                actual: rows.dim(),
            });
        }
        if rows.nrows() == 0 {
            return Ok(());
        }
        let n = rows.nrows();
        let mean = rows.mean_axis(Axis(0)).expect("nonempty batch");
        let centred = &rows - &mean.view().insert_axis(Axis(0));
        let mut scatter = Array2::zeros((self.dim(), self.dim()));
        general_mat_mul(T::one(), &centred.t(), &centred, T::zero(), &mut scatter);
        self.merge(CovarianceAccumulator {
            count: n,
            mean,
            scatter,
        })
    }

    pub fn push(&mut self, sample: ArrayView1<T>) -> Result<()> {
        self.push_rows(sample.insert_axis(Axis(0)))
    }

    /// Combines two accumulators as if all samples had gone into one.
    pub fn merge(&mut self, other: CovarianceAccumulator<T>) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: (self.dim(), self.dim()),
                actual: (other.dim(), other.dim()),
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other;
            return Ok(());
        }
        let na = T::from_usize_lossy(self.count);
        let nb = T::from_usize_lossy(other.count);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        let weight = na * nb / n;
        let col = delta.view().insert_axis(Axis(1));
        let row = delta.view().insert_axis(Axis(0));
        self.scatter += &other.scatter;
        general_mat_mul(weight, &col, &row, T::one(), &mut self.scatter);
        self.mean.scaled_add(nb / n, &delta);
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self, size: usize) -> Result<FieldStatistics<T>> {
        if self.count < 2 {
            return Err(Error::InsufficientData(format!(
                "covariance needs at least 2 samples, got {}",
                self.count
            )));
        }
        if size * size != self.dim() {
            return Err(Error::invalid(format!(
                "patch side {size} does not match dimension {}",
                self.dim()
            )));
        }
        let mut covariance = self.scatter.mapv(|v| v / T::from_usize_lossy(self.count - 1));
        // Exact symmetry regardless of accumulation order.
        let half = T::lit(0.5);
        for i in 0..self.dim() {
            for j in 0..i {
                let v = (covariance[(i, j)] + covariance[(j, i)]) * half;
                covariance[(i, j)] = v;
                covariance[(j, i)] = v;
            }
        }
        Ok(FieldStatistics {
            mean_field: self
                .mean
                .clone()
                .into_shape_with_order((size, size))
                .expect("square patch"),
            covariance,
            sample_count: self.count,
            low_confidence: self.count < 10 * size,
        })
    }
}

/// Mean field and covariance of vectorised patches.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStatistics<T> {
    pub mean_field: Array2<T>,
    pub covariance: Array2<T>,
    pub sample_count: usize,
    /// Fewer than ten samples per patch side.
    pub low_confidence: bool,
}

impl<T: Scalar> FieldStatistics<T> {
    pub fn side(&self) -> usize {
        self.mean_field.nrows()
    }

    pub fn mean_vector(&self) -> ArrayView1<'_, T> {
        self.mean_field
            .view()
            .into_shape_with_order(self.covariance.nrows())
            .expect("contiguous mean")
    }

    pub fn trace(&self) -> T {
        self.covariance.diag().sum()
    }
}

/// Unbiased covariance of the patch across difference fields, computed in
/// parallel shards and merged.
pub fn empirical_covariance<T: Scalar>(diffs: &[MatchDifference], patch: PatchGeometry) -> Result<FieldStatistics<T>> {
    check_dims(diffs, 2)?;
    let dim = patch.dim();
    let shard = 256;
    let parts: Vec<Result<CovarianceAccumulator<T>>> = diffs
        .par_chunks(shard)
        .map(|chunk| {
            let mut rows = Array2::<T>::zeros((chunk.len(), dim));
            for (mut row, diff) in rows.rows_mut().into_iter().zip(chunk) {
                let v = patch.extract(diff)?;
                row.assign(&v.mapv(|d| T::from_u8(d).unwrap()));
            }
            let mut acc = CovarianceAccumulator::new(dim);
            acc.push_rows(rows.view())?;
            Ok(acc)
        })
        .collect();
    let mut total = CovarianceAccumulator::new(dim);
    for part in parts {
        total.merge(part?)?;
    }
    total.finish(patch.size)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityOptions {
    /// Kernel is `(2h + 1) x (2h + 1)` displacements.
    pub half_width: usize,
    /// Pixels this close to the patch border are left out; defaults to `half_width`.
    pub margin: Option<usize>,
    /// Absolute threshold on `|group mean|`; defaults to a multiple of the
    /// standard error of the mean variance.
    pub noise_floor: Option<f64>,
    pub noise_floor_se: f64,
    pub support_fraction: f64,
}

impl Default for StationarityOptions {
    fn default() -> Self {
        StationarityOptions {
            half_width: DEFAULT_KERNEL_HALF_WIDTH,
            margin: None,
            noise_floor: None,
            noise_floor_se: DEFAULT_NOISE_FLOOR_SE,
            support_fraction: DEFAULT_SUPPORT_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    /// Mean coefficient of variation over displacement groups above the noise floor.
    pub group_cv: f64,
    pub groups_used: usize,
    pub noise_floor: f64,
    /// Group means indexed by `(di + h, dj + h)`.
    pub kernel: Vec<Vec<f64>>,
    /// Side of the smallest centred square holding every entry at or
    /// above `support_fraction` of the centre.
    pub support: usize,
    /// The centre holds the largest absolute kernel entry.
    pub central_peak: bool,
    pub mean_field_cv: f64,
}

/// Groups covariance entries by pixel displacement and measures how much
/// entries with the same displacement disagree.
pub fn stationarity_score<T: Scalar>(
    stats: &FieldStatistics<T>,
    options: StationarityOptions,
) -> Result<StationarityReport> {
    let side = stats.side();
    let h = options.half_width;
    let margin = options.margin.unwrap_or(h);
    if side <= 2 * margin {
        return Err(Error::invalid(format!(
            "patch side {side} leaves nothing inside margin {margin}"
        )));
    }
    let width = 2 * h + 1;
    let mut sum = vec![0.0f64; width * width];
    let mut sum_sq = vec![0.0f64; width * width];
    let mut count = vec![0usize; width * width];
    let cov = &stats.covariance;
    for_each_pair(side, margin, h, |g, p, q| {
        sum[g] += cov[(p, q)].as_f64();
        count[g] += 1;
    });
    let means: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect();
    for_each_pair(side, margin, h, |g, p, q| {
        sum_sq[g] += (cov[(p, q)].as_f64() - means[g]).powi(2);
    });
    let centre = h * width + h;
    let noise_floor = options.noise_floor.unwrap_or_else(|| {
        let n = stats.sample_count.max(2) as f64;
        options.noise_floor_se * means[centre].abs() / (n - 1.0).sqrt()
    });
    let mut cv_sum = 0.0;
    let mut used = 0;
    for g in 0..width * width {
        if count[g] < 2 || means[g].abs() <= noise_floor {
            continue;
        }
        let var = sum_sq[g] / count[g] as f64;
        cv_sum += var.sqrt() / means[g].abs();
        used += 1;
    }
    let group_cv = if used == 0 { 0.0 } else { cv_sum / used as f64 };

    let peak = means[centre].abs();
    let central_peak = means.iter().all(|m| m.abs() <= peak);
    let mut radius = 0;
    for di in 0..width {
        for dj in 0..width {
            if means[di * width + dj].abs() >= options.support_fraction * peak {
                radius = radius.max(di.abs_diff(h)).max(dj.abs_diff(h));
            }
        }
    }
    let kernel = means.chunks(width).map(|r| r.to_vec()).collect();

    let mean_values: Vec<f64> = stats.mean_field.iter().map(|v| v.as_f64()).collect();
    let mean_field_cv = Moments::from_samples(&mean_values)
        .map(|m| if m.mean == 0.0 { 0.0 } else { m.std / m.mean.abs() })
        .unwrap_or(0.0);

    Ok(StationarityReport {
        group_cv,
        groups_used: used,
        noise_floor,
        kernel,
        support: 2 * radius + 1,
        central_peak,
        mean_field_cv,
    })
}

/// Calls `f(group, p, q)` for every pixel pair inside the margin whose
/// displacement lies within `h` in both axes.
fn for_each_pair(side: usize, margin: usize, h: usize, mut f: impl FnMut(usize, usize, usize)) {
    let width = 2 * h + 1;
    let (lo, hi) = (margin as i64, (side - margin) as i64);
    for pi in lo..hi {
        for pj in lo..hi {
            let p = (pi as usize) * side + pj as usize;
            for di in -(h as i64)..=h as i64 {
                let qi = pi + di;
                if qi < lo || qi >= hi {
                    continue;
                }
                for dj in -(h as i64)..=h as i64 {
                    let qj = pj + dj;
                    if qj < lo || qj >= hi {
                        continue;
                    }
                    let g = (di + h as i64) as usize * width + (dj + h as i64) as usize;
                    f(g, p, qi as usize * side + qj as usize);
                }
            }
        }
    }
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky factorisation.
pub fn cholesky_solve<T: Scalar>(a: ArrayView2<T>, b: ArrayView1<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            actual: (a.ncols(), b.len()),
        });
    }
    let max_diag = a.diag().iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tol = T::from_usize_lossy(n.max(1)) * T::epsilon() * max_diag;
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let row_j = l.row(j);
        let mut d = a[(j, j)] - row_j.slice(ndarray::s![..j]).dot(&row_j.slice(ndarray::s![..j]));
        if !(d > tol) {
            return Err(Error::Singular(format!(
                "non-positive pivot {} at column {j}",
                d.as_f64()
            )));
        }
        d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = l.row(i).slice(ndarray::s![..j]).dot(&l.row(j).slice(ndarray::s![..j]));
            l[(i, j)] = (a[(i, j)] - s) / d;
        }
    }
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let s = l.row(i).slice(ndarray::s![..i]).dot(&y.slice(ndarray::s![..i]));
        y[i] = (b[i] - s) / l[(i, i)];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let s = l
            .column(i)
            .slice(ndarray::s![i + 1..])
            .dot(&x.slice(ndarray::s![i + 1..]));
        x[i] = (y[i] - s) / l[(i, i)];
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherReport<T> {
    pub weight: Array1<T>,
    pub ridge: T,
    /// `|cos|` between the weight and the all-ones vector. The discriminant
    /// direction is defined only up to sign.
    pub cosine_ones: f64,
}

impl<T: Scalar> FisherReport<T> {
    pub fn cosine_with(&self, direction: ArrayView1<T>) -> f64 {
        abs_cosine(self.weight.view(), direction)
    }
}

pub fn abs_cosine<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == T::zero() || nb == T::zero() {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).abs().as_f64()
}

/// Fisher discriminant `w = (Sg + Si + ridge I)^-1 (mg - mi)`.
///
/// `ridge = None` uses `1e-6 * trace / dim` of the pooled covariance.
pub fn fisher_weight<T: Scalar>(
    genuine: &FieldStatistics<T>,
    impostor: &FieldStatistics<T>,
    ridge: Option<T>,
) -> Result<FisherReport<T>> {
    let n = genuine.covariance.nrows();
    if impostor.covariance.dim() != genuine.covariance.dim() {
        return Err(Error::DimensionMismatch {
            expected: genuine.covariance.dim(),
            actual: impostor.covariance.dim(),
        });
    }
    let mut pooled = &genuine.covariance + &impostor.covariance;
    let ridge = match ridge {
        Some(r) if r < T::zero() || !r.is_finite() => {
            return Err(Error::invalid("ridge must be finite and non-negative"));
        }
        Some(r) => r,
        None => T::lit(DEFAULT_RIDGE_SCALE) * pooled.diag().sum() / T::from_usize_lossy(n.max(1)),
    };
    pooled.diag_mut().mapv_inplace(|v| v + ridge);
    let gap = &genuine.mean_vector() - &impostor.mean_vector();
    let weight = cholesky_solve(pooled.view(), gap.view())?;
    let ones = Array1::<T>::ones(n);
    Ok(FisherReport {
        cosine_ones: abs_cosine(weight.view(), ones.view()),
        weight,
        ridge,
    })
}

/// Sample moments with population normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!("need 2 samples, got {}", values.len())));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Ok(Moments {
            count: values.len(),
            mean,
            std: m2.sqrt(),
            skewness,
            excess_kurtosis,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecidabilityReport {
    pub d_prime: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// `d' = |mu1 - mu2| / sqrt((sigma1^2 + sigma2^2) / 2)` with population deviations.
pub fn decidability(genuine: &[f64], impostor: &[f64]) -> Result<DecidabilityReport> {
    let g = Moments::from_samples(genuine)?;
    let i = Moments::from_samples(impostor)?;
    let pooled = (g.std * g.std + i.std * i.std) / 2.0;
    if pooled == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(DecidabilityReport {
        d_prime: (g.mean - i.mean).abs() / pooled.sqrt(),
        mu1: g.mean,
        mu2: i.mean,
        sigma1: g.std,
        sigma2: i.std,
    })
}

/// Values assigned to each angular difference together with the difference distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodingScheme<T> {
    pub z: [T; LEVELS],
    pub pmf: [T; LEVELS],
}

impl<T: Clone + Num + PartialOrd> CodingScheme<T> {
    /// Requires a nonnegative pmf summing to one within `tolerance`.
    pub fn new(z: [T; LEVELS], pmf: [T; LEVELS], tolerance: T) -> Result<Self> {
        if pmf.iter().any(|p| *p < T::zero()) {
            return Err(Error::invalid("pmf has a negative entry"));
        }
        let total = pmf.iter().cloned().fold(T::zero(), |a, b| a + b);
        let gap = if total > T::one() {
            total - T::one()
        } else {
            T::one() - total
        };
        if gap > tolerance {
            return Err(Error::invalid("pmf does not sum to one"));
        }
        Ok(CodingScheme { z, pmf })
    }

    pub fn mean(&self) -> T {
        self.z
            .iter()
            .zip(&self.pmf)
            .fold(T::zero(), |acc, (z, p)| acc + z.clone() * p.clone())
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.z.iter().zip(&self.pmf).fold(T::zero(), |acc, (z, p)| {
            let d = z.clone() - m.clone();
            acc + p.clone() * d.clone() * d
        })
    }

    /// Squared decidability when every genuine difference is zero:
    /// `(z(0) - mu)^2 / (2 sigma^2)`. `None` when the impostor variance vanishes.
    pub fn ideal_dprime_squared(&self) -> Option<T> {
        let var = self.variance();
        if var == T::zero() {
            return None;
        }
        let d = self.z[0].clone() - self.mean();
        Some(d.clone() * d / ((T::one() + T::one()) * var))
    }

    /// `z(0) != z(1) = z(2) = z(3)`.
    pub fn is_zero_one_pattern(&self) -> bool {
        self.z[1] == self.z[2] && self.z[2] == self.z[3] && self.z[0] != self.z[1]
    }
}

impl CodingScheme<f64> {
    pub fn ideal_dprime(&self) -> Option<f64> {
        self.ideal_dprime_squared().map(f64::sqrt)
    }
}

/// Squared upper bound on the ideal-case decidability, `(1 - p0) / (2 p0)`.
pub fn ideal_dprime_bound_squared<T: Clone + Num>(p0: T) -> T {
    (T::one() - p0.clone()) / ((T::one() + T::one()) * p0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodingSearch<T> {
    pub best: CodingScheme<T>,
    pub best_dprime_squared: T,
    /// Every searched `z` with its squared decidability; `None` when degenerate.
    pub landscape: Vec<([T; LEVELS], Option<T>)>,
}

impl<T: Clone + Num + PartialOrd> CodingSearch<T> {
    pub fn maximizers(&self) -> impl Iterator<Item = &[T; LEVELS]> {
        self.landscape
            .iter()
            .filter(|(_, v)| v.as_ref() == Some(&self.best_dprime_squared))
            .map(|(z, _)| z)
    }
}

/// Exhaustive search over `z(1..4)` in `grid^3` with `z(0) = 1`. The first
/// maximiser in lexicographic grid order is reported as `best`.
pub fn optimal_coding_search<T: Clone + Num + PartialOrd>(pmf: &[T; LEVELS], grid: &[T]) -> Result<CodingSearch<T>> {
    if grid.len() < 5 {
        return Err(Error::invalid(format!(
            "grid needs at least 5 values, got {}",
            grid.len()
        )));
    }
    let mut landscape = Vec::with_capacity(grid.len().pow(3));
    let mut best: Option<([T; LEVELS], T)> = None;
    for a in grid {
        for b in grid {
            for c in grid {
                let z = [T::one(), a.clone(), b.clone(), c.clone()];
                let scheme = CodingScheme {
                    z: z.clone(),
                    pmf: pmf.clone(),
                };
                let value = scheme.ideal_dprime_squared();
                if let Some(v) = &value {
                    if best.as_ref().is_none_or(|(_, bv)| v > bv) {
                        best = Some((z.clone(), v.clone()));
                    }
                }
                landscape.push((z, value));
            }
        }
    }
    let (z, value) = best.ok_or_else(|| Error::InsufficientData("every grid point is degenerate".into()))?;
    Ok(CodingSearch {
        best: CodingScheme { z, pmf: pmf.clone() },
        best_dprime_squared: value,
        landscape,
    })
}
