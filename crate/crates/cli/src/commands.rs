//! Subcommand implementations. Each one is a thin composition of library calls.

use std::fs;
use std::path::{Path, PathBuf};

use palmcode::coding::{encode_template, Template};
use palmcode::eval::{
    encode_samples, plan_pairs, roc_svg, run_benchmark, study, synth_difference_sets, template_difference_sets,
    BenchmarkConfig, DifferenceSets,
};
use palmcode::matching::aligned_distance;
use palmcode::stats::PatchGeometry;
use palmcode::store::{
    load_image, load_template, parse_exclusion_list, parse_manifest, save_ground_truth, save_image, save_template,
    to_f64, to_u8, write_json, write_manifest, Manifest, ManifestEntry,
};
use palmcode::synth::generate_dataset;
use palmcode::{Error, FilterBankF64};
use rayon::prelude::*;

use crate::config::RunConfig;

pub const TEMPLATE_EXT: &str = "pcc";
pub const TRUTH_EXT: &str = "pgth";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(Error),
    /// Some items failed; each was already reported.
    Partial(String),
}

impl CliError {
    /// 0 success, 1 usage, 2 data error, 3 internal or environment error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Partial(_) => 2,
            CliError::Failed(e) => match e {
                Error::InvalidParameter(_) => 1,
                Error::Io(_) | Error::NotZeroDc => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Partial(m) => f.write_str(m),
            CliError::Failed(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failed(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(Error::Io(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Prefixes IO errors with the path they concern.
fn at<T>(path: &Path, r: palmcode::Result<T>) -> palmcode::Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        e => e,
    })
}

/// File stem for a template or sample: `{subject}_{sample}` with anything
/// outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn file_stem(subject: &str, sample: &str) -> String {
    format!("{subject}_{sample}")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn bank(cfg: &RunConfig) -> CliResult<FilterBankF64> {
    cfg.bank().map_err(CliError::Usage)
}

fn load_manifest(cfg: &RunConfig) -> CliResult<Manifest> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Usage("no manifest given".into()))?;
    let mut manifest = at(path, parse_manifest(path))?;
    if let Some(list) = &cfg.exclusions {
        manifest.exclude(&at(list, parse_exclusion_list(list))?);
    }
    Ok(manifest)
}

fn encode_entry(entry: &ManifestEntry, bank: &FilterBankF64, keep: f64) -> palmcode::Result<Template> {
    let image = to_f64(&at(&entry.image_path, load_image(&entry.image_path))?);
    encode_template(image.view(), bank, keep, &entry.subject_id, &entry.sample_id)
}

/// `*.pcc` files of a directory in file-name order.
pub fn template_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut paths = fs::read_dir(dir)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == TEMPLATE_EXT));
    paths.sort();
    Ok(paths)
}

/// Templates from a directory, a manifest of images, or a synthetic
/// dataset, in that order of preference.
pub fn load_population(cfg: &RunConfig, bank: &FilterBankF64) -> CliResult<Vec<Template>> {
    if let Some(dir) = &cfg.templates {
        let templates = template_paths(dir)?
            .par_iter()
            .map(|p| at(p, load_template(p)))
            .collect::<palmcode::Result<Vec<_>>>()?;
        let fp = bank.fingerprint();
        if templates.iter().any(|t| t.bank_fingerprint != fp) {
            return Err(Error::FingerprintMismatch.into());
        }
        return Ok(templates);
    }
    if cfg.manifest.is_some() {
        let manifest = load_manifest(cfg)?;
        let active: Vec<&ManifestEntry> = manifest.active().collect();
        return Ok(active
            .par_iter()
            .map(|e| encode_entry(e, bank, cfg.keep_fraction))
            .collect::<palmcode::Result<Vec<_>>>()?);
    }
    let samples = generate_dataset(&cfg.synth_config(), cfg.dataset_spec())?;
    Ok(encode_samples(&samples, bank, cfg.keep_fraction)?)
}

pub fn synth(cfg: &RunConfig) -> CliResult {
    let samples = generate_dataset(&cfg.synth_config(), cfg.dataset_spec())?;
    let images = cfg.out.join("images");
    let truth = cfg.out.join("truth");
    fs::create_dir_all(&images)?;
    fs::create_dir_all(&truth)?;
    let entries = samples
        .par_iter()
        .map(|s| {
            let stem = file_stem(&s.subject_id(), &s.sample_id());
            let image_path = images.join(format!("{stem}.png"));
            save_image(&to_u8(&s.sample.image), &image_path)?;
            save_ground_truth(&s.sample.orientation, truth.join(format!("{stem}.{TRUTH_EXT}")))?;
            Ok(ManifestEntry {
                subject_id: s.subject_id(),
                sample_id: s.sample_id(),
                image_path,
                session: "1".into(),
                excluded: false,
            })
        })
        .collect::<palmcode::Result<Vec<_>>>()?;
    let n = entries.len();
    write_manifest(&Manifest { entries }, cfg.out.join("manifest.csv"))?;
    println!("synth: wrote {n} samples to {}", cfg.out.display());
    Ok(())
}

pub fn extract(cfg: &RunConfig) -> CliResult {
    let bank = bank(cfg)?;
    let manifest = load_manifest(cfg)?;
    let dir = cfg.out.join("templates");
    fs::create_dir_all(&dir)?;
    let active: Vec<&ManifestEntry> = manifest.active().collect();
    let results: Vec<palmcode::Result<()>> = active
        .par_iter()
        .map(|e| {
            let t = encode_entry(e, &bank, cfg.keep_fraction)?;
            save_template(
                &t,
                dir.join(format!("{}.{TEMPLATE_EXT}", file_stem(&e.subject_id, &e.sample_id))),
            )
        })
        .collect();
    let mut failed = 0;
    for (e, r) in active.iter().zip(&results) {
        if let Err(err) = r {
            eprintln!("extract: {} {}: {err}", e.subject_id, e.sample_id);
            failed += 1;
        }
    }
    println!("extract: written {} failed {failed}", results.len() - failed);
    if failed > 0 {
        return Err(CliError::Partial(format!(
            "{failed} of {} entries failed",
            results.len()
        )));
    }
    Ok(())
}

/// The single output line of `match`.
pub fn match_line(method: &str, score: &palmcode::matching::MatchScore) -> String {
    format!(
        "method={method}\tvalue={}\traw_mean={}\tn_valid={}\toffset={},{}",
        score.value, score.raw_mean, score.n_valid, score.offset.0, score.offset.1
    )
}

pub fn match_pair(cfg: &RunConfig, gallery: &Path, probe: &Path) -> CliResult {
    let fp = bank(cfg)?.fingerprint();
    let a = at(gallery, load_template(gallery))?;
    let b = at(probe, load_template(probe))?;
    if a.bank_fingerprint != fp || b.bank_fingerprint != fp {
        return Err(Error::FingerprintMismatch.into());
    }
    let metric = cfg.metric();
    let score = aligned_distance(&a, &b, cfg.window, metric)?;
    println!("{}", match_line(metric.id(), &score));
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> CliResult {
    let bank = bank(cfg)?;
    let templates = load_population(cfg, &bank)?;
    let subjects: Vec<&str> = templates.iter().map(|t| t.subject_id.as_str()).collect();
    let plan = plan_pairs(&subjects, cfg.max_impostor, cfg.seed)?;
    let config = BenchmarkConfig {
        window: cfg.window,
        far_targets: cfg.far_targets.clone(),
    };
    let reports = run_benchmark(&templates, &plan, &cfg.metrics(), &config)?;
    fs::create_dir_all(&cfg.out)?;
    for r in &reports {
        write_json(r, cfg.out.join(format!("eval_{}.json", r.method)))?;
        fs::write(cfg.out.join(format!("roc_{}.csv", r.method)), r.roc_csv()?)?;
        let d = r.d_prime.map_or(f64::NAN, |d| d.d_prime);
        println!(
            "eval: method={} genuine={} impostor={} eer={:.6} d_prime={d:.4} mean_match_us={:.1}",
            r.method,
            r.genuine_scores.len(),
            r.impostor_scores.len(),
            r.eer,
            r.timing.mean_match_seconds * 1e6
        );
    }
    fs::write(cfg.out.join("roc.svg"), roc_svg(&reports))?;
    Ok(())
}

/// Difference populations for `stats`: synthetic by default, otherwise
/// drawn from the pairs of the loaded templates.
pub fn stats_sets(cfg: &RunConfig, bank: &FilterBankF64) -> CliResult<DifferenceSets> {
    if cfg.templates.is_none() && cfg.manifest.is_none() {
        return Ok(synth_difference_sets(
            &cfg.synth_config(),
            bank,
            cfg.keep_fraction,
            cfg.samples,
            cfg.genuine_samples,
            cfg.window,
        )?);
    }
    let templates = load_population(cfg, bank)?;
    let subjects: Vec<&str> = templates.iter().map(|t| t.subject_id.as_str()).collect();
    let plan = plan_pairs(&subjects, Some(cfg.samples), cfg.seed)?;
    Ok(template_difference_sets(&templates, &plan, cfg.window)?)
}

pub fn stats(cfg: &RunConfig) -> CliResult {
    let bank = bank(cfg)?;
    let sets = stats_sets(cfg, &bank)?;
    let dim = sets
        .impostor
        .first()
        .or(sets.genuine.first())
        .map(|d| d.dim())
        .ok_or(Error::EmptyInput("difference maps"))?;
    let patch = PatchGeometry::centered(dim, cfg.patch, cfg.stride)?;
    let report = study(&sets, patch, cfg.ridge);
    fs::create_dir_all(&cfg.out)?;
    write_json(&report, cfg.out.join("stats.json"))?;
    for w in &report.warnings {
        eprintln!("stats: warning: {w}");
    }
    let cv = |r: &Option<palmcode::stats::StationarityReport>| r.as_ref().map_or(f64::NAN, |r| r.group_cv);
    println!(
        "stats: genuine={} impostor={} impostor_mean={:.4} impostor_group_cv={:.4} genuine_group_cv={:.4}",
        report.genuine_count,
        report.impostor_count,
        report.impostor_pmf.as_ref().map_or(f64::NAN, |p| p.mean()),
        cv(&report.impostor_stationarity),
        cv(&report.genuine_stationarity),
    );
    Ok(())
}
