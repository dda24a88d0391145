//! Run configuration: defaults, a flat `key = value` file, then flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use palmcode::coding::DEFAULT_KEEP_FRACTION;
use palmcode::eval::{methods_from_ids, DEFAULT_FAR_TARGETS, METHOD_IDS};
use palmcode::filterbank::{DEFAULT_FREQUENCY, DEFAULT_HALF_SIZE, DEFAULT_ORIENTATIONS, DEFAULT_SIGMA};
use palmcode::matching::{Metric, DEFAULT_K, DEFAULT_WINDOW};
use palmcode::stats::DEFAULT_PATCH;
use palmcode::synth::{DatasetSpec, SynthConfig, DEFAULT_NOISE_STD};
use palmcode::FilterBankF64;

/// Every key the config file accepts, in documentation order.
pub const KEYS: [&str; 27] = [
    "seed",
    "threads",
    "out",
    "manifest",
    "templates",
    "exclusions",
    "bank.orientations",
    "bank.frequency",
    "bank.sigma",
    "bank.half_size",
    "mask.keep_fraction",
    "match.k",
    "match.window",
    "match.method",
    "eval.methods",
    "eval.far_targets",
    "eval.max_impostor",
    "stats.patch",
    "stats.stride",
    "stats.ridge",
    "stats.samples",
    "stats.genuine_samples",
    "synth.size",
    "synth.identities",
    "synth.samples",
    "synth.max_shift",
    "synth.noise_std",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub orientations: usize,
    pub frequency: f64,
    pub sigma: f64,
    pub half_size: usize,
    pub keep_fraction: f64,
    pub k: f64,
    pub window: usize,
    pub method: String,
    pub methods: Vec<String>,
    pub far_targets: Vec<f64>,
    pub max_impostor: Option<usize>,
    pub patch: usize,
    pub stride: usize,
    /// `None` picks the default ridge relative to the covariance trace.
    pub ridge: Option<f64>,
    pub samples: usize,
    pub genuine_samples: usize,
    pub synth_size: usize,
    pub identities: usize,
    pub samples_per_identity: usize,
    pub max_shift: i32,
    pub noise_std: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = DatasetSpec::default();
        RunConfig {
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            manifest: None,
            templates: None,
            exclusions: None,
            orientations: DEFAULT_ORIENTATIONS,
            frequency: DEFAULT_FREQUENCY,
            sigma: DEFAULT_SIGMA,
            half_size: DEFAULT_HALF_SIZE,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            k: DEFAULT_K,
            window: DEFAULT_WINDOW,
            method: "cscc".into(),
            methods: METHOD_IDS.iter().map(|s| s.to_string()).collect(),
            far_targets: DEFAULT_FAR_TARGETS.to_vec(),
            max_impostor: None,
            patch: DEFAULT_PATCH,
            stride: 1,
            ridge: None,
            samples: 10_000,
            genuine_samples: 400,
            synth_size: 64,
            identities: spec.identities,
            samples_per_identity: spec.samples,
            max_shift: spec.max_shift,
            noise_std: DEFAULT_NOISE_STD,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value.parse().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one key. Values are checked as a whole by [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "manifest" => self.manifest = optional_path(value),
            "templates" => self.templates = optional_path(value),
            "exclusions" => self.exclusions = optional_path(value),
            "bank.orientations" => self.orientations = parse(key, value)?,
            "bank.frequency" => self.frequency = parse(key, value)?,
            "bank.sigma" => self.sigma = parse(key, value)?,
            "bank.half_size" => self.half_size = parse(key, value)?,
            "mask.keep_fraction" => self.keep_fraction = parse(key, value)?,
            "match.k" => self.k = parse(key, value)?,
            "match.window" => self.window = parse(key, value)?,
            "match.method" => self.method = value.to_owned(),
            "eval.methods" => {
                self.methods = if value == "all" {
                    METHOD_IDS.iter().map(|s| s.to_string()).collect()
                } else {
                    parse_list(key, value)?
                }
            }
            "eval.far_targets" => self.far_targets = parse_list(key, value)?,
            "eval.max_impostor" => {
                self.max_impostor = match value {
                    "" | "all" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "stats.patch" => self.patch = parse(key, value)?,
            "stats.stride" => self.stride = parse(key, value)?,
            "stats.ridge" => {
                self.ridge = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "stats.samples" => self.samples = parse(key, value)?,
            "stats.genuine_samples" => self.genuine_samples = parse(key, value)?,
            "synth.size" => self.synth_size = parse(key, value)?,
            "synth.identities" => self.identities = parse(key, value)?,
            "synth.samples" => self.samples_per_identity = parse(key, value)?,
            "synth.max_shift" => self.max_shift = parse(key, value)?,
            "synth.noise_std" => self.noise_std = parse(key, value)?,
            _ => {
                return Err(format!(
                    "unknown config key {key:?}, expected one of {}",
                    KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
            self.set(key.trim(), value)
                .map_err(|e| format!("config line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.orientations != DEFAULT_ORIENTATIONS {
            return Err(format!("bank.orientations must be {DEFAULT_ORIENTATIONS}"));
        }
        self.bank()?;
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err("mask.keep_fraction must lie in (0, 1]".into());
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err("match.k must be positive".into());
        }
        Metric::from_id(&self.method, self.k).map_err(|e| e.to_string())?;
        if self.methods.is_empty() {
            return Err("eval.methods is empty".into());
        }
        methods_from_ids(&self.methods, self.k).map_err(|e| e.to_string())?;
        if self.far_targets.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err("eval.far_targets must lie in (0, 1]".into());
        }
        if self.patch == 0 || self.stride == 0 {
            return Err("stats.patch and stats.stride must be positive".into());
        }
        if self.ridge.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return Err("stats.ridge must be non-negative".into());
        }
        if self.manifest.is_some() && self.templates.is_some() {
            return Err("give either manifest or templates, not both".into());
        }
        self.synth_config().validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn bank(&self) -> Result<FilterBankF64, String> {
        FilterBankF64::new(self.orientations, self.frequency, self.sigma, self.half_size).map_err(|e| e.to_string())
    }

    pub fn metric(&self) -> Metric {
        Metric::from_id(&self.method, self.k).expect("validated")
    }

    pub fn metrics(&self) -> Vec<Metric> {
        methods_from_ids(&self.methods, self.k).expect("validated")
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            noise_std: self.noise_std,
            ..SynthConfig::for_size(self.synth_size).with_seed(self.seed)
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            identities: self.identities,
            samples: self.samples_per_identity,
            max_shift: self.max_shift,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let samples = [
            ("seed", "7"),
            ("threads", "2"),
            ("out", "x"),
            ("manifest", "m.csv"),
            ("templates", ""),
            ("exclusions", "e.txt"),
            ("bank.orientations", "6"),
            ("bank.frequency", "0.1"),
            ("bank.sigma", "5"),
            ("bank.half_size", "15"),
            ("mask.keep_fraction", "0.5"),
            ("match.k", "2"),
            ("match.window", "3"),
            ("match.method", "m-cc"),
            ("eval.methods", "compcode, cscc"),
            ("eval.far_targets", "0.1,0.01"),
            ("eval.max_impostor", "100"),
            ("stats.patch", "16"),
            ("stats.stride", "2"),
            ("stats.ridge", "0.001"),
            ("stats.samples", "50"),
            ("stats.genuine_samples", "20"),
            ("synth.size", "48"),
            ("synth.identities", "4"),
            ("synth.samples", "3"),
            ("synth.max_shift", "2"),
            ("synth.noise_std", "10"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut c = RunConfig::default();
        for (k, v) in samples {
            assert!(KEYS.contains(&k), "{k} undocumented");
            c.set(k, v).unwrap();
        }
        c.validate().unwrap();
        assert_eq!(c.methods, ["compcode", "cscc"]);
        assert_eq!(c.max_impostor, Some(100));
        assert_eq!(c.ridge, Some(0.001));
    }

    #[test]
    fn file_syntax() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\n\nseed = 9\n  match.window=1  \n").unwrap();
        assert_eq!((c.seed, c.window), (9, 1));
        assert!(c.apply_text("seed 9").unwrap_err().contains("line 1"));
        assert!(c.apply_text("\nnope = 1").unwrap_err().contains("line 2"));
        assert!(c.apply_text("seed = x").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        for (k, v) in [
            ("mask.keep_fraction", "0"),
            ("match.k", "-1"),
            ("match.method", "nope"),
            ("eval.far_targets", "2"),
            ("bank.orientations", "8"),
            ("bank.sigma", "0"),
            ("stats.patch", "0"),
            ("synth.size", "4"),
        ] {
            let mut c = RunConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k} = {v} accepted");
        }
    }
}
