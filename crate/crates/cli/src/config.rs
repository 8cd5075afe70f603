use std::path::Path;

use andri::model::EtaMode;
use andri::{AndriError, DistanceKind, ModelConfig, Result};
use clap::Args;
use serde::Deserialize;

/// Keys accepted in a `--config` TOML file. Every key is optional and any
/// flag given on the command line replaces it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub ell: Option<usize>,
    pub ell_m_factor: Option<usize>,
    pub w_max_factor: Option<usize>,
    pub r_min_fraction: Option<f64>,
    pub k: Option<usize>,
    pub eta_mode: Option<EtaMode>,
    pub distance_kind: Option<DistanceKind>,
    pub seed: Option<u64>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AndriError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| AndriError::FormatError(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: CliConfig) -> CliConfig {
        CliConfig {
            ell: over.ell.or(self.ell),
            ell_m_factor: over.ell_m_factor.or(self.ell_m_factor),
            w_max_factor: over.w_max_factor.or(self.w_max_factor),
            r_min_fraction: over.r_min_fraction.or(self.r_min_fraction),
            k: over.k.or(self.k),
            eta_mode: over.eta_mode.or(self.eta_mode),
            distance_kind: over.distance_kind.or(self.distance_kind),
            seed: over.seed.or(self.seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let ell = self
            .ell
            .ok_or_else(|| AndriError::BadParam("`ell` is required (flag or config)".into()))?;
        let mut c = ModelConfig::new(ell);
        c.ell_m = self.ell_m_factor.unwrap_or(2) * ell;
        c.w_max = self.w_max_factor.unwrap_or(20) * ell;
        if let Some(r) = self.r_min_fraction {
            c.ahc.r_min = r;
        }
        if let Some(k) = self.k {
            c.ahc.k = k;
        }
        if let Some(e) = self.eta_mode {
            c.eta = e;
        }
        if let Some(d) = self.distance_kind {
            c.distance_kind = d;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DistanceArg {
    ZeroMean,
    ZNormalized,
}

impl From<DistanceArg> for DistanceKind {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::ZeroMean => DistanceKind::ZeroMean,
            DistanceArg::ZNormalized => DistanceKind::ZNormalized,
        }
    }
}

fn parse_eta(s: &str) -> std::result::Result<EtaMode, String> {
    s.parse().map_err(|e: AndriError| e.to_string())
}

/// Model parameters shared by every subcommand that trains.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// TOML file with any of the keys below; flags override it.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// `ell`: subsequence length in points. Required.
    #[arg(long)]
    pub ell: Option<usize>,
    /// `ell_m_factor`: tile length as a multiple of ell. [default: 2]
    #[arg(long)]
    pub ell_m_factor: Option<usize>,
    /// `w_max_factor`: upper bound on the currency window, as a multiple
    /// of ell. [default: 20]
    #[arg(long)]
    pub w_max_factor: Option<usize>,
    /// `r_min_fraction`: smallest pattern cluster as a fraction of the
    /// tile count. [default: 0.01]
    #[arg(long)]
    pub r_min_fraction: Option<f64>,
    /// `k`: how many positions apart two clusters may be and still merge.
    /// [default: 1]
    #[arg(long)]
    pub k: Option<usize>,
    /// `eta_mode`: membership decay, `auto` or a positive rate.
    /// [default: auto]
    #[arg(long, value_parser = parse_eta)]
    pub eta_mode: Option<EtaMode>,
    /// `distance_kind`. [default: zero-mean]
    #[arg(long, value_enum)]
    pub distance_kind: Option<DistanceArg>,
    /// `seed`: random seed for injection. [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModelArgs {
    pub fn resolve(&self) -> Result<CliConfig> {
        let file = match &self.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        Ok(file.overlay(CliConfig {
            ell: self.ell,
            ell_m_factor: self.ell_m_factor,
            w_max_factor: self.w_max_factor,
            r_min_fraction: self.r_min_fraction,
            k: self.k,
            eta_mode: self.eta_mode,
            distance_kind: self.distance_kind.map(Into::into),
            seed: self.seed,
        }))
    }
}
