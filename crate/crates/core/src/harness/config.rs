use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::orlicz::{default_ladder, Domain, PhiFunction};
use crate::settings::Resolution;
use crate::signal::Signal;
use crate::smoothness::BoundaryMode;

/// Where a run writes its CSV and JSON files. Relative file names are
/// resolved against `dir`; the whole directory can be overridden at run time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// A declarative experiment. Loaded from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kernel: String,
    pub phi: String,
    pub signal: String,
    pub domain: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_ladder")]
    pub lambda_ladder: Vec<f64>,
    pub n_grid: Vec<u32>,
    /// Run the shifted operator `K_n(f - c) + c` with `c` the signal's lower bound.
    #[serde(default)]
    pub shifted: bool,
    #[serde(default)]
    pub boundary: BoundaryMode,
    /// Seed for any randomized step; the shipped runners are deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_alpha() -> f64 {
    0.5
}

/// `2^2 .. 2^8`.
pub fn dyadic_n_grid() -> Vec<u32> {
    (2..=8).map(|j| 1u32 << j).collect()
}

/// The objects named by a config, resolved and verified.
pub struct Resolved {
    pub kernel: Kernel,
    pub phi: PhiFunction,
    pub signal: Signal,
    pub domain: Domain,
}

impl ExperimentConfig {
    pub fn new(name: &str, kernel: &str, phi: &str, signal: &str, domain: &str) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            kernel: kernel.to_string(),
            phi: phi.to_string(),
            signal: signal.to_string(),
            domain: domain.to_string(),
            alpha: default_alpha(),
            lambda_ladder: default_ladder(),
            n_grid: dyadic_n_grid(),
            shifted: false,
            boundary: BoundaryMode::default(),
            seed: 0,
            resolution: Resolution::default(),
            output: OutputPaths::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::parse("config", "<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Chooses the format by extension; unknown extensions try TOML, then JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            Some("toml") => Self::from_toml_str(&text),
            _ => Self::from_toml_str(&text).or_else(|_| Self::from_json_str(&text)),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(format!("config does not serialize to TOML: {e}")))
    }

    /// Structural checks that do not need the registries.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidInput(format!(
                "config name {:?} must be a plain file stem",
                self.name
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.n_grid.is_empty()
            || self.n_grid[0] == 0
            || self.n_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidInput(
                "n_grid must be non-empty, positive and strictly increasing".into(),
            ));
        }
        let ladder = &self.lambda_ladder;
        if ladder.is_empty()
            || ladder.iter().any(|l| !(*l > 0.0 && l.is_finite()))
            || ladder.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidInput(
                "lambda_ladder must be positive and strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    /// Looks up every name in the registries and verifies the kernel and φ.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let kernel = Kernel::parse(&self.kernel, &self.resolution)?;
        let phi = PhiFunction::parse(&self.phi)?;
        let signal = Signal::parse(&self.signal)?;
        let domain = Domain::parse(&self.domain)?;
        Ok(Resolved {
            kernel,
            phi,
            signal,
            domain,
        })
    }

    /// Output directory: `override_dir`, else `output.dir`, else `out`.
    pub fn out_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        override_dir
            .map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn csv_path(&self, override_dir: Option<&Path>) -> PathBuf {
        let file = self
            .output
            .csv
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", self.name)));
        self.out_dir(override_dir).join(file)
    }

    pub fn json_path(&self, override_dir: Option<&Path>) -> PathBuf {
        let file = self
            .output
            .json
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.json", self.name)));
        self.out_dir(override_dir).join(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let cfg = ExperimentConfig::new("t", "fejer", "p:2", "hat", "real:R=8");
        let toml = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&toml).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&json).unwrap(), cfg);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "name = \"m\"\nkernel = \"fejer\"\nphi = \"p:1\"\nsignal = \"hat\"\ndomain = \"real\"\nn_grid = [4, 8]\n",
        )
        .unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.lambda_ladder.len(), 21);
        assert_eq!(cfg.resolution, Resolution::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::new("t", "fejer", "p:2", "hat", "real");
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.5;
        cfg.n_grid = vec![8, 4];
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![4];
        cfg.kernel = "nope".into();
        assert!(cfg.resolve().is_err());
        let unknown = "name = \"m\"\nkernel = \"fejer\"\nphi = \"p:1\"\nsignal = \"hat\"\ndomain = \"real\"\nn_grid = [4]\nextra = 1\n";
        assert!(ExperimentConfig::from_toml_str(unknown).is_err());
    }
}
