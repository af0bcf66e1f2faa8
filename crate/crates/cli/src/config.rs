//! Run configuration.
//!
//! The file format is one `key = value` per line. Lists are bracketed and
//! comma separated, `#` starts a comment, and `none` clears an optional key.
//! Values are applied in the order defaults, file, command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lrp_core::experiments::ExperimentConfig;
use lrp_core::{KernelSpec, KernelVariant};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Syntax { path: PathBuf, line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{key}: expected {expected}, found `{found}`")]
    Type {
        key: String,
        expected: &'static str,
        found: String,
    },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

/// Every key accepted in a config file, in canonical order.
pub const KEYS: &[&str] = &[
    "d",
    "beta",
    "kernel",
    "seed",
    "sizes",
    "replicas",
    "delta",
    "block_k",
    "eps_grid",
    "theta_hat",
    "exact_threshold",
    "bootstrap_rounds",
    "elongation",
    "tail_distance",
    "tail_replicas",
    "ball_radius",
    "volume_min_radius",
    "volume_max_radius",
    "ball_box",
    "ball_replicas",
    "k_max",
    "eta",
    "blocks_per_side",
    "beta_low",
    "beta_high",
    "w",
    "radius",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub d: usize,
    pub beta: f64,
    pub variant: KernelVariant,
    /// Everything except the kernel, which is assembled by [`Settings::finish`].
    pub experiment: ExperimentConfig,
    /// Coupling check endpoints.
    pub beta_low: f64,
    pub beta_high: f64,
    /// Coarse displacement for `renorm-check`; defaults to `2 e_1`.
    pub w: Option<Vec<i64>>,
    /// Kernel table radius for `kernel dump`, largest `r` for `boxcount`.
    pub radius: u64,
}

impl Default for Settings {
    fn default() -> Self {
        let experiment = ExperimentConfig::default();
        Settings {
            d: experiment.spec.dimension,
            beta: experiment.spec.beta,
            variant: experiment.spec.variant,
            experiment,
            beta_low: 0.5,
            beta_high: 2.0,
            w: None,
            radius: 64,
        }
    }
}

fn scalar<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Type {
        key: key.to_string(),
        expected,
        found: value.trim().to_string(),
    })
}

fn optional<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
    match value.trim() {
        "none" => Ok(None),
        v => scalar(key, v, expected).map(Some),
    }
}

/// `[a, b, c]`; the brackets may be omitted on the command line.
fn list<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Vec<T>, ConfigError> {
    let v = value.trim();
    let inner = match (v.strip_prefix('['), v.strip_suffix(']')) {
        (Some(_), Some(_)) => &v[1..v.len() - 1],
        (None, None) => v,
        _ => {
            return Err(ConfigError::Type {
                key: key.to_string(),
                expected: "a bracketed list",
                found: v.to_string(),
            })
        }
    };
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|item| scalar(key, item, expected)).collect()
}

fn variant(value: &str) -> Result<KernelVariant, ConfigError> {
    let v = value.trim();
    if v == "selfsim" {
        return Ok(KernelVariant::SelfSimilar);
    }
    v.strip_prefix("power:")
        .and_then(|s| s.parse().ok())
        .map(|s| KernelVariant::PowerLaw { s })
        .ok_or_else(|| ConfigError::Type {
            key: "kernel".into(),
            expected: "`selfsim` or `power:<s>`",
            found: v.to_string(),
        })
}

impl Settings {
    /// Assigns one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let e = &mut self.experiment;
        match key {
            "d" => self.d = scalar(key, value, "a positive integer")?,
            "beta" => self.beta = scalar(key, value, "a number")?,
            "kernel" => self.variant = variant(value)?,
            "seed" => e.seed = scalar(key, value, "an unsigned 64-bit integer")?,
            "sizes" => e.sizes = list(key, value, "integers")?,
            "replicas" => e.replicas = scalar(key, value, "a positive integer")?,
            "delta" => e.delta = scalar(key, value, "a number")?,
            "block_k" => e.block_k = scalar(key, value, "an integer")?,
            "eps_grid" => e.eps_grid = list(key, value, "numbers")?,
            "theta_hat" => e.theta_hat = optional(key, value, "a number or `none`")?,
            "exact_threshold" => e.exact_threshold = scalar(key, value, "an integer")?,
            "bootstrap_rounds" => e.bootstrap_rounds = scalar(key, value, "an integer")?,
            "elongation" => e.elongation = optional(key, value, "an integer or `none`")?,
            "tail_distance" => e.tail_distance = scalar(key, value, "an integer")?,
            "tail_replicas" => e.tail_replicas = scalar(key, value, "an integer")?,
            "ball_radius" => e.ball_radius = scalar(key, value, "an integer")?,
            "volume_min_radius" => e.volume_min_radius = scalar(key, value, "an integer")?,
            "volume_max_radius" => e.volume_max_radius = scalar(key, value, "an integer")?,
            "ball_box" => e.ball_box = scalar(key, value, "an integer")?,
            "ball_replicas" => e.ball_replicas = scalar(key, value, "an integer")?,
            "k_max" => e.k_max = scalar(key, value, "an integer")?,
            "eta" => e.eta = optional(key, value, "a number or `none`")?,
            "blocks_per_side" => e.blocks_per_side = list(key, value, "integers")?,
            "beta_low" => self.beta_low = scalar(key, value, "a number")?,
            "beta_high" => self.beta_high = scalar(key, value, "a number")?,
            "w" => self.w = Some(list(key, value, "integers")?),
            "radius" => self.radius = scalar(key, value, "an integer")?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a config file on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text, path)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(syntax(format!("duplicate key `{key}`")));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Builds the kernel and checks every key for consistency.
    pub fn finish(mut self) -> Result<Self, ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            key: key.to_string(),
            message,
        };
        self.experiment.spec = KernelSpec::new(self.d, self.beta, self.variant).map_err(|e| {
            let key = if self.d == 0 { "d" } else { "beta" };
            invalid(key, e.to_string())
        })?;
        if self.d > lrp_core::sampler::MAX_DIM {
            return Err(invalid("d", format!("at most {} dimensions are supported", lrp_core::sampler::MAX_DIM)));
        }
        self.experiment.validate().map_err(|e| {
            let text = e.to_string();
            let key = KEYS
                .iter()
                .find(|k| text.contains(&format!(" {k}:")))
                .copied()
                .unwrap_or("config");
            invalid(key, text)
        })?;
        for (key, b) in [("beta_low", self.beta_low), ("beta_high", self.beta_high)] {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(invalid(key, format!("must be finite and >= 0, got {b}")));
            }
        }
        if self.beta_low > self.beta_high {
            return Err(invalid("beta_low", "must not exceed beta_high".into()));
        }
        let w = self.displacement();
        if w.len() != self.d {
            return Err(invalid("w", format!("has {} coordinates but d = {}", w.len(), self.d)));
        }
        if self.radius == 0 {
            return Err(invalid("radius", "must be positive".into()));
        }
        Ok(self)
    }

    pub fn displacement(&self) -> Vec<i64> {
        self.w.clone().unwrap_or_else(|| {
            let mut w = vec![0; self.d.max(1)];
            w[0] = 2;
            w
        })
    }

    /// Canonical `key = value` text: every key, fixed order, shortest
    /// round-trip floats.
    pub fn canonical(&self) -> String {
        fn join<T: std::fmt::Debug>(xs: &[T]) -> String {
            let items: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        }
        fn opt<T: std::fmt::Debug>(x: Option<T>) -> String {
            x.map_or_else(|| "none".to_string(), |v| format!("{v:?}"))
        }
        let e = &self.experiment;
        let kernel = match self.variant {
            KernelVariant::SelfSimilar => "selfsim".to_string(),
            KernelVariant::PowerLaw { s } => format!("power:{s:?}"),
        };
        let values: Vec<(&str, String)> = vec![
            ("d", self.d.to_string()),
            ("beta", format!("{:?}", self.beta)),
            ("kernel", kernel),
            ("seed", e.seed.to_string()),
            ("sizes", join(&e.sizes)),
            ("replicas", e.replicas.to_string()),
            ("delta", format!("{:?}", e.delta)),
            ("block_k", e.block_k.to_string()),
            ("eps_grid", join(&e.eps_grid)),
            ("theta_hat", opt(e.theta_hat)),
            ("exact_threshold", e.exact_threshold.to_string()),
            ("bootstrap_rounds", e.bootstrap_rounds.to_string()),
            ("elongation", opt(e.elongation)),
            ("tail_distance", e.tail_distance.to_string()),
            ("tail_replicas", e.tail_replicas.to_string()),
            ("ball_radius", e.ball_radius.to_string()),
            ("volume_min_radius", e.volume_min_radius.to_string()),
            ("volume_max_radius", e.volume_max_radius.to_string()),
            ("ball_box", e.ball_box.to_string()),
            ("ball_replicas", e.ball_replicas.to_string()),
            ("k_max", e.k_max.to_string()),
            ("eta", opt(e.eta)),
            ("blocks_per_side", join(&e.blocks_per_side)),
            ("beta_low", format!("{:?}", self.beta_low)),
            ("beta_high", format!("{:?}", self.beta_high)),
            ("w", join(&self.displacement())),
            ("radius", self.radius.to_string()),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut out = String::new();
        for (key, value) in values {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// SHA-256 of [`Settings::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Defaults, then the optional file, then `(key, value)` overrides.
pub fn load(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<Settings, ConfigError> {
    let mut settings = Settings::default();
    if let Some(path) = file {
        settings.apply_file(path)?;
    }
    for (key, value) in overrides {
        settings.set(key, value)?;
    }
    settings.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_text(text: &str) -> Result<Settings, ConfigError> {
        let mut s = Settings::default();
        s.apply_text(text, Path::new("test.conf"))?;
        s.finish()
    }

    #[test]
    fn empty_file_gives_documented_defaults() {
        let s = from_text("").unwrap();
        assert_eq!(s.experiment.spec, KernelSpec::self_similar(1, 1.0).unwrap());
        assert_eq!(s.experiment.sizes, vec![64, 128, 256, 512, 1024]);
        assert_eq!(s.displacement(), vec![2]);
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("lrp-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "beta = 1.0\nreplicas = 7\n").unwrap();
        let s = load(Some(&path), &[("beta", "2.5".into())]).unwrap();
        assert_eq!(s.beta, 2.5);
        assert_eq!(s.experiment.spec.beta, 2.5);
        assert_eq!(s.experiment.replicas, 7);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn rejects_decreasing_sizes_with_key_name() {
        match from_text("sizes = [64, 32]") {
            Err(ConfigError::Invalid { key, message }) => {
                assert_eq!(key, "sizes");
                assert!(message.contains("not strictly increasing"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_types() {
        assert!(matches!(from_text("colour = red"), Err(ConfigError::UnknownKey(k)) if k == "colour"));
        assert!(matches!(from_text("replicas = many"), Err(ConfigError::Type { key, .. }) if key == "replicas"));
        assert!(matches!(from_text("sizes = [64, 128"), Err(ConfigError::Type { .. })));
        assert!(matches!(from_text("beta 2"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(from_text("beta = 1\nbeta = 2"), Err(ConfigError::Syntax { line: 2, .. })));
    }

    #[test]
    fn eps_grid_precondition_names_the_key() {
        let err = from_text("theta_hat = 0.5\ntail_distance = 16\neps_grid = [0.1, 0.5]").unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "eps_grid"), "{err}");
    }

    #[test]
    fn canonical_text_round_trips_and_hashes_stably() {
        let s = from_text("# comment\nd = 2\nbeta = 0.25 # trailing\nsizes = [8,16, 32]\neta = 1.5\nkernel = power:3.5\n").unwrap();
        let text = s.canonical();
        assert!(text.contains("sizes = [8, 16, 32]\n"));
        assert!(text.contains("w = [2, 0]\n"));
        let again = from_text(&text).unwrap();
        assert_eq!(again, Settings { w: Some(vec![2, 0]), ..s.clone() });
        assert_eq!(again.canonical(), text);
        assert_eq!(again.hash(), s.hash());
        assert_eq!(s.hash().len(), 64);
        assert_ne!(from_text("seed = 2").unwrap().hash(), from_text("seed = 3").unwrap().hash());
    }

    #[test]
    fn displacement_must_match_dimension() {
        assert!(matches!(from_text("d = 2\nw = [3]"), Err(ConfigError::Invalid { key, .. }) if key == "w"));
        assert!(matches!(from_text("beta_low = 3\nbeta_high = 1"), Err(ConfigError::Invalid { .. })));
    }
}
