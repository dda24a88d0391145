//! Verification benchmarks: pair planning, ROC analysis, EER, FRR at fixed
//! FAR and per-method reports.
//!
//! Scores are dissimilarities throughout; a pair is accepted when its score
//! is strictly below the threshold.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ndarray::{Array1, Array2};

use crate::coding::{encode_template, Template};
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::matching::{
    aligned_distance, angular_difference, shifted_difference, MatchDifference, Metric, DEFAULT_K, DEFAULT_WINDOW,
};
use crate::stats::{
    decidability, empirical_covariance, empirical_mean_field, fisher_weight, impostor_difference_pmf,
    stationarity_score, DecidabilityReport, DifferencePmf, PatchGeometry, StationarityOptions, StationarityReport,
};
use crate::synth::{
    derive_seed, generate_palm, identity_config, subject_label, DatasetSample, PalmIdentity, SynthConfig, SynthSample,
    MAX_TRANSLATE,
};

pub const SCHEMA: &str = "eval/1";
pub const DEFAULT_FAR_TARGETS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const METHOD_IDS: [&str; 4] = ["compcode", "m-cc", "e-cc", "cscc"];

/// Index pairs into a template list. The first index is the enrolled
/// (gallery) template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPlan {
    pub genuine_pairs: Vec<(usize, usize)>,
    pub impostor_pairs: Vec<(usize, usize)>,
    pub sampling_seed: u64,
    /// Number of cross-subject pairs available before sampling.
    pub impostor_population: usize,
}

/// All genuine pairs plus up to `max_impostor` cross-subject pairs drawn
/// uniformly without replacement. `subjects[i]` labels template `i`.
pub fn plan_pairs<S: AsRef<str>>(subjects: &[S], max_impostor: Option<usize>, seed: u64) -> Result<PairPlan> {
    let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
    for s in subjects {
        *counts.entry(s.as_ref()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need 2 subjects, found {}",
            counts.len()
        )));
    }
    if let Some((s, _)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(Error::InsufficientData(format!("subject {s} has fewer than 2 samples")));
    }
    let n = subjects.len();
    let same = |i: usize, j: usize| subjects[i].as_ref() == subjects[j].as_ref();
    let mut genuine_pairs = Vec::new();
    let mut population = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if same(i, j) {
                genuine_pairs.push((i, j));
            } else {
                population += 1;
            }
        }
    }
    let wanted = max_impostor.unwrap_or(population).min(population);
    let mut ranks: Vec<usize> = if wanted == population {
        (0..population).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, population, wanted).into_vec()
    };
    ranks.sort_unstable();
    let mut impostor_pairs = Vec::with_capacity(wanted);
    let mut next = ranks.iter().peekable();
    let mut rank = 0usize;
    'outer: for i in 0..n {
        for j in i + 1..n {
            if same(i, j) {
                continue;
            }
            match next.peek() {
                None => break 'outer,
                Some(&&r) if r == rank => {
                    impostor_pairs.push((i, j));
                    next.next();
                }
                _ => {}
            }
            rank += 1;
        }
    }
    Ok(PairPlan {
        genuine_pairs,
        impostor_pairs,
        sampling_seed: seed,
        impostor_population: population,
    })
}

/// `far[k]` and `gar[k]` are the fractions of impostor and genuine scores
/// strictly below `thresholds[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    #[serde(with = "extended_reals")]
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub gar: Vec<f64>,
    pub genuine_count: usize,
    pub impostor_count: usize,
}

fn sorted(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// JSON has no infinities; they are written as the strings `"-inf"` and `"inf"`.
mod extended_reals {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Value {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Value> = values
            .iter()
            .map(|&x| match x {
                f64::INFINITY => Value::Text("inf".into()),
                f64::NEG_INFINITY => Value::Text("-inf".into()),
                _ => Value::Finite(x),
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Value>::deserialize(d)?
            .into_iter()
            .map(|v| match v {
                Value::Finite(x) => Ok(x),
                Value::Text(t) if t == "inf" => Ok(f64::INFINITY),
                Value::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
                Value::Text(t) => Err(D::Error::custom(format!("unexpected threshold {t:?}"))),
            })
            .collect()
    }
}

/// Sweeps every distinct score plus both infinities.
pub fn roc(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyInput("score set"));
    }
    let g = sorted(genuine)?;
    let im = sorted(impostor)?;
    let mut thresholds = vec![f64::NEG_INFINITY];
    let mut all: Vec<f64> = g.iter().chain(&im).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    thresholds.extend(all);
    thresholds.push(f64::INFINITY);
    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let (mut gi, mut ii) = (0usize, 0usize);
    let mut far = Vec::with_capacity(thresholds.len());
    let mut gar = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        while gi < g.len() && g[gi] < t {
            gi += 1;
        }
        while ii < im.len() && im[ii] < t {
            ii += 1;
        }
        far.push(ii as f64 / ni);
        gar.push(gi as f64 / ng);
    }
    Ok(RocCurve {
        thresholds,
        far,
        gar,
        genuine_count: g.len(),
        impostor_count: im.len(),
    })
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn frr(&self, k: usize) -> f64 {
        1.0 - self.gar[k]
    }

    /// `(FAR, GAR)` at an arbitrary threshold `t`.
    pub fn rates_at(&self, t: f64) -> (f64, f64) {
        let k = self.thresholds.partition_point(|&x| x < t);
        let k = k.min(self.len() - 1);
        (self.far[k], self.gar[k])
    }

    /// Smallest step in FAR or FRR; ties in EER comparisons are judged against this.
    pub fn quantum(&self) -> f64 {
        1.0 / self.genuine_count.min(self.impostor_count) as f64
    }
}

/// Error rate where FAR meets FRR, interpolated linearly between the two
/// curve points that bracket the crossing.
pub fn eer(curve: &RocCurve) -> f64 {
    let d = |k: usize| curve.far[k] - curve.frr(k);
    for k in 0..curve.len() {
        let dk = d(k);
        if dk >= 0.0 {
            if dk == 0.0 || k == 0 {
                return curve.far[k];
            }
            let dp = d(k - 1);
            let alpha = -dp / (dk - dp);
            return curve.far[k - 1] + alpha * (curve.far[k] - curve.far[k - 1]);
        }
    }
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrrAtFar {
    pub far_target: f64,
    pub frr: f64,
    /// Fewer than `10 / far_target` impostor scores back the estimate.
    pub extrapolated: bool,
}

/// FRR at the last curve point with `FAR <= far_target`, interpolated
/// towards the next point.
pub fn frr_at_far(curve: &RocCurve, far_target: f64) -> Result<FrrAtFar> {
    if !(far_target > 0.0 && far_target <= 1.0) {
        return Err(Error::invalid(format!("far target {far_target} outside (0, 1]")));
    }
    let k = curve.far.partition_point(|&f| f <= far_target) - 1;
    let mut frr = curve.frr(k);
    if k + 1 < curve.len() && curve.far[k + 1] > curve.far[k] {
        let beta = (far_target - curve.far[k]) / (curve.far[k + 1] - curve.far[k]);
        frr += beta * (curve.frr(k + 1) - frr);
    }
    Ok(FrrAtFar {
        far_target,
        frr: frr.clamp(0.0, 1.0),
        extrapolated: (curve.impostor_count as f64) < 10.0 / far_target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_match_seconds: f64,
    pub total_match_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub method: String,
    pub metric: Metric,
    pub window: usize,
    pub genuine_scores: Vec<f64>,
    pub impostor_scores: Vec<f64>,
    pub failed_pairs: usize,
    pub roc: RocCurve,
    pub eer: f64,
    pub frr_at_far: Vec<FrrAtFar>,
    pub d_prime: Option<DecidabilityReport>,
    pub timing: Timing,
}

impl EvalReport {
    /// Report with the timing fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> EvalReport {
        EvalReport {
            timing: Timing {
                mean_match_seconds: 0.0,
                total_match_seconds: 0.0,
            },
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `threshold,far,gar` rows; infinite thresholds are written as `-inf` / `inf`.
    pub fn roc_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["threshold", "far", "gar"]).map_err(csv_error)?;
        for k in 0..self.roc.len() {
            w.write_record([
                self.roc.thresholds[k].to_string(),
                self.roc.far[k].to_string(),
                self.roc.gar[k].to_string(),
            ])
            .map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Metrics for one method from its two score sets.
pub fn evaluate_scores(
    metric: Metric,
    window: usize,
    genuine: Vec<f64>,
    impostor: Vec<f64>,
    far_targets: &[f64],
    failed_pairs: usize,
    timing: Timing,
) -> Result<EvalReport> {
    let curve = roc(&genuine, &impostor)?;
    let frr = far_targets
        .iter()
        .map(|&t| frr_at_far(&curve, t))
        .collect::<Result<Vec<_>>>()?;
    // Sorted inputs make the moments independent of pair order.
    let d_prime = decidability(&sorted(&genuine)?, &sorted(&impostor)?).ok();
    Ok(EvalReport {
        schema: SCHEMA.to_string(),
        method: metric.id().to_string(),
        metric,
        window,
        eer: eer(&curve),
        roc: curve,
        frr_at_far: frr,
        d_prime,
        failed_pairs,
        genuine_scores: genuine,
        impostor_scores: impostor,
        timing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub window: usize,
    pub far_targets: Vec<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            window: DEFAULT_WINDOW,
            far_targets: DEFAULT_FAR_TARGETS.to_vec(),
        }
    }
}

/// Methods for the fixed ablation ids, in report order.
pub fn methods_from_ids<S: AsRef<str>>(ids: &[S], k: f64) -> Result<Vec<Metric>> {
    ids.iter().map(|id| Metric::from_id(id.as_ref(), k)).collect()
}

pub fn all_methods(k: f64) -> Vec<Metric> {
    methods_from_ids(&METHOD_IDS, k).expect("fixed ids are valid")
}

pub fn default_methods() -> Vec<Metric> {
    all_methods(DEFAULT_K)
}

/// Scores every planned pair with every method. Pairs run in parallel;
/// within a pair the methods run back to back so they share cache state
/// and load conditions when timed.
pub fn run_benchmark(
    templates: &[Template],
    plan: &PairPlan,
    methods: &[Metric],
    config: &BenchmarkConfig,
) -> Result<Vec<EvalReport>> {
    if methods.is_empty() {
        return Err(Error::EmptyInput("methods"));
    }
    let check = |&(a, b): &(usize, usize)| a < templates.len() && b < templates.len() && a != b;
    if !plan.genuine_pairs.iter().chain(&plan.impostor_pairs).all(check) {
        return Err(Error::invalid("pair plan references a missing template or a self pair"));
    }
    let score_set = |pairs: &[(usize, usize)]| -> Vec<Vec<(Option<f64>, f64)>> {
        pairs
            .par_iter()
            .map(|&(a, b)| {
                methods
                    .iter()
                    .map(|&m| {
                        let start = Instant::now();
                        let r = aligned_distance(&templates[a], &templates[b], config.window, m);
                        let secs = start.elapsed().as_secs_f64();
                        (r.ok().map(|s| s.value), secs)
                    })
                    .collect()
            })
            .collect()
    };
    let genuine = score_set(&plan.genuine_pairs);
    let impostor = score_set(&plan.impostor_pairs);
    let mut reports = Vec::with_capacity(methods.len());
    for (m, &metric) in methods.iter().enumerate() {
        let mut failed = 0usize;
        let mut total_time = 0.0;
        let mut collect = |rows: &[Vec<(Option<f64>, f64)>]| -> Vec<f64> {
            rows.iter()
                .filter_map(|row| {
                    let (score, secs) = row[m];
                    total_time += secs;
                    if score.is_none() {
                        failed += 1;
                    }
                    score
                })
                .collect()
        };
        let g = collect(&genuine);
        let i = collect(&impostor);
        let pairs = genuine.len() + impostor.len();
        let timing = Timing {
            mean_match_seconds: total_time / pairs.max(1) as f64,
            total_match_seconds: total_time,
        };
        reports.push(evaluate_scores(
            metric,
            config.window,
            g,
            i,
            &config.far_targets,
            failed,
            timing,
        )?);
    }
    Ok(reports)
}

/// Encodes synthetic samples in parallel, preserving order.
pub fn encode_samples(samples: &[DatasetSample], bank: &FilterBank<f64>, keep_fraction: f64) -> Result<Vec<Template>> {
    samples
        .par_iter()
        .map(|s| {
            encode_template(
                s.sample.image.view(),
                bank,
                keep_fraction,
                &s.subject_id(),
                &s.sample_id(),
            )
        })
        .collect()
}

/// ROC curves of several reports on a log-FAR axis as a standalone SVG.
pub fn roc_svg(reports: &[EvalReport]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let min_far = reports
        .iter()
        .map(|r| 1.0 / r.roc.impostor_count.max(1) as f64)
        .fold(1.0f64, f64::min)
        .max(1e-8);
    let lo = min_far.log10().floor();
    let x = |far: f64| PAD + (far.max(min_far).log10() - lo) / -lo * (W - 2.0 * PAD);
    let y = |gar: f64| H - PAD - gar * (H - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let mut e = lo as i32;
    while e <= 0 {
        let px = x(10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.1}" y1="{PAD}" x2="{px:.1}" y2="{:.1}" stroke="#ddd"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"##,
            H - PAD,
            H - PAD + 18.0
        );
        e += 1;
    }
    for tick in 0..=5 {
        let g = tick as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{g:.1}</text>"#,
            PAD - 6.0,
            y(g) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">FAR</text><text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">GAR</text>"#,
        W / 2.0,
        H - 16.0,
        H / 2.0,
        H / 2.0
    );
    for (n, r) in reports.iter().enumerate() {
        let color = COLORS[n % COLORS.len()];
        let points: Vec<String> = r
            .roc
            .far
            .iter()
            .zip(&r.roc.gar)
            .map(|(&f, &g)| format!("{:.1},{:.1}", x(f), y(g)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = PAD + 18.0 * (n as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{} (EER {:.4})</text>"#,
            W - PAD - 170.0,
            W - PAD - 150.0,
            W - PAD - 145.0,
            ly + 4.0,
            r.method,
            r.eer
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Per-pixel difference maps of one genuine and one impostor population.
#[derive(Debug, Clone)]
pub struct DifferenceSets {
    pub genuine: Vec<MatchDifference>,
    pub impostor: Vec<MatchDifference>,
    /// Enrolled template the genuine probes were compared against, when
    /// the genuine set comes from a single identity.
    pub gallery: Option<Template>,
}

/// Difference maps of the pairs in `plan`. Genuine pairs are aligned with
/// the CompCode score inside `window`; impostor pairs are taken unshifted.
pub fn template_difference_sets(templates: &[Template], plan: &PairPlan, window: usize) -> Result<DifferenceSets> {
    let genuine = plan
        .genuine_pairs
        .par_iter()
        .map(|&(a, b)| aligned_difference(&templates[a], &templates[b], window))
        .collect::<Result<Vec<_>>>()?;
    let impostor = plan
        .impostor_pairs
        .par_iter()
        .map(|&(a, b)| angular_difference(&templates[a].code, &templates[b].code))
        .collect::<Result<Vec<_>>>()?;
    Ok(DifferenceSets {
        genuine,
        impostor,
        gallery: None,
    })
}

fn aligned_difference(gallery: &Template, probe: &Template, window: usize) -> Result<MatchDifference> {
    let best = aligned_distance(gallery, probe, window, Metric::compcode())?;
    shifted_difference(&gallery.code, &probe.code, best.offset)
}

/// Synthetic populations for the statistics study.
///
/// Impostors are the first `impostors` cross pairs, in lexicographic order,
/// of the smallest pool of synthetic identities that has enough pairs.
/// Genuines are `genuines` noisy probes of one further identity, translated
/// over the `window` grid in turn and aligned against a clean-shift gallery
/// sample of the same identity.
pub fn synth_difference_sets(
    config: &SynthConfig,
    bank: &FilterBank<f64>,
    keep_fraction: f64,
    impostors: usize,
    genuines: usize,
    window: usize,
) -> Result<DifferenceSets> {
    let mut pool = 2usize;
    while pool * (pool - 1) / 2 < impostors {
        pool += 1;
    }
    let encode = |s: &SynthSample, subject: usize, sample: String| {
        encode_template(s.image.view(), bank, keep_fraction, &subject_label(subject), &sample)
    };
    let templates = (0..pool)
        .into_par_iter()
        .map(|i| encode(&generate_palm(&identity_config(config, i))?, i, "00".into()))
        .collect::<Result<Vec<_>>>()?;
    let impostor = (0..pool)
        .flat_map(|i| (i + 1..pool).map(move |j| (i, j)))
        .take(impostors)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, j)| angular_difference(&templates[i].code, &templates[j].code))
        .collect::<Result<Vec<_>>>()?;

    let subject = pool;
    let id_config = identity_config(config, subject);
    let palm = PalmIdentity::generate(&id_config)?;
    let noisy = |translate, k: u64| palm.sample(translate, config.noise_std, derive_seed(id_config.seed, 0x6e00 + k));
    let gallery = encode(&noisy((0, 0), 0)?, subject, "00".into())?;
    let w = window.min(MAX_TRANSLATE as usize) as i32;
    let side = 2 * w + 1;
    let genuine = (0..genuines)
        .into_par_iter()
        .map(|k| {
            let cell = k as i32 % (side * side);
            let translate = (cell % side - w, cell / side - w);
            let probe = encode(&noisy(translate, k as u64 + 1)?, subject, format!("{:02}", k + 1))?;
            aligned_difference(&gallery, &probe, window)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DifferenceSets {
        genuine,
        impostor,
        gallery: Some(gallery),
    })
}

pub const STATS_SCHEMA: &str = "stats/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherSummary {
    pub ridge: f64,
    pub cosine_ones: f64,
    /// `|cos|` with the gallery's mask indicator over the patch.
    pub cosine_mask: Option<f64>,
}

/// Everything the statistics study reports. Parts that cannot be computed
/// are left out and explained in `warnings`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub schema: String,
    pub patch: PatchGeometry,
    pub genuine_count: usize,
    pub impostor_count: usize,
    pub impostor_pmf: Option<DifferencePmf>,
    pub impostor_mean_field: Option<Vec<Vec<f64>>>,
    pub genuine_mean_field: Option<Vec<Vec<f64>>>,
    pub impostor_stationarity: Option<StationarityReport>,
    pub genuine_stationarity: Option<StationarityReport>,
    pub fisher: Option<FisherSummary>,
    pub warnings: Vec<String>,
}

fn note<V>(warnings: &mut Vec<String>, what: &str, r: Result<V>) -> Option<V> {
    r.map_err(|e| warnings.push(format!("{what}: {e}"))).ok()
}

fn rows(field: &Array2<f64>) -> Vec<Vec<f64>> {
    field.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Runs the statistics study on `sets` over `patch`. `ridge` of `None`
/// uses the default Fisher regularization.
pub fn study(sets: &DifferenceSets, patch: PatchGeometry, ridge: Option<f64>) -> StatsReport {
    let mut warnings = Vec::new();
    let impostor_pmf = note(&mut warnings, "impostor pmf", impostor_difference_pmf(&sets.impostor));
    let impostor_mean = note(
        &mut warnings,
        "impostor mean field",
        empirical_mean_field::<f64>(&sets.impostor),
    );
    let genuine_mean = note(
        &mut warnings,
        "genuine mean field",
        empirical_mean_field::<f64>(&sets.genuine),
    );
    let imp_stats = note(
        &mut warnings,
        "impostor covariance",
        empirical_covariance::<f64>(&sets.impostor, patch),
    );
    let gen_stats = note(
        &mut warnings,
        "genuine covariance",
        empirical_covariance::<f64>(&sets.genuine, patch),
    );
    let options = StationarityOptions::default();
    let impostor_stationarity = imp_stats
        .as_ref()
        .and_then(|s| note(&mut warnings, "impostor stationarity", stationarity_score(s, options)));
    let genuine_stationarity = gen_stats
        .as_ref()
        .and_then(|s| note(&mut warnings, "genuine stationarity", stationarity_score(s, options)));
    let fisher = match (&gen_stats, &imp_stats) {
        (Some(g), Some(i)) => note(&mut warnings, "fisher weight", fisher_weight(g, i, ridge)).map(|f| FisherSummary {
            ridge: f.ridge,
            cosine_ones: f.cosine_ones,
            cosine_mask: sets
                .gallery
                .as_ref()
                .map(|t| f.cosine_with(mask_indicator(t, patch).view())),
        }),
        _ => None,
    };
    for (name, s) in [("genuine", &gen_stats), ("impostor", &imp_stats)] {
        if let Some(s) = s.as_ref().filter(|s| s.low_confidence) {
            warnings.push(format!(
                "{name} covariance rests on {} samples for {} dimensions",
                s.sample_count,
                s.covariance.nrows()
            ));
        }
    }
    if impostor_pmf.as_ref().is_some_and(|p| p.low_confidence) {
        warnings.push("impostor pmf rests on few samples".into());
    }
    StatsReport {
        schema: STATS_SCHEMA.into(),
        patch,
        genuine_count: sets.genuine.len(),
        impostor_count: sets.impostor.len(),
        impostor_pmf,
        impostor_mean_field: impostor_mean.as_ref().map(rows),
        genuine_mean_field: genuine_mean.as_ref().map(rows),
        impostor_stationarity,
        genuine_stationarity,
        fisher,
        warnings,
    }
}

/// The template's mask over the patch as a 0/1 vector in patch order.
pub fn mask_indicator(template: &Template, patch: PatchGeometry) -> Array1<f64> {
    let (r0, c0) = patch.origin;
    let mask = template.mask.mask();
    (0..patch.size * patch.size)
        .map(|i| {
            let (a, b) = (i / patch.size, i % patch.size);
            f64::from(u8::from(mask[[r0 + patch.stride * a, c0 + patch.stride * b]]))
        })
        .collect()
}
