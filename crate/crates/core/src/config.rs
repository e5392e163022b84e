//! Run configuration: a TOML file plus command-line overrides.
//!
//! Relative paths inside a config file resolve against the file's
//! directory; paths given on the command line resolve against the working
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdtError};
use crate::fit::UvsdParams;
use crate::ingest::ScoringConfig;
use crate::roc::{BinKind, BinScheme, Correction};
use crate::simulate::{self, SimSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfcConfig {
    pub m: u32,
    /// Apply the 1/(2N) correction to 0% and 100% correct.
    pub correct_boundaries: bool,
    /// CSV with `domain,d_a` rows to compare forced-choice d' against.
    pub da_table: Option<PathBuf>,
    /// Largest |d' − d_a| that still counts as convergent.
    pub convergence_bound: f64,
}

impl Default for AfcConfig {
    fn default() -> Self {
        Self {
            m: 4,
            correct_boundaries: true,
            da_table: None,
            convergence_bound: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mu: f64,
    pub sigma_s: f64,
}

fn grid_params(grid: &Option<Vec<GridPoint>>) -> Result<Vec<UvsdParams>> {
    match grid {
        None => Ok(simulate::default_grid()),
        Some(g) => g.iter().map(|p| UvsdParams::new(p.mu, p.sigma_s, Vec::new())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub iterations: usize,
    pub n_per_class: usize,
    pub deltas: Vec<f64>,
    pub n_bins: usize,
    /// (μ, σ_s) combinations; the built-in 4 × 5 grid when absent.
    pub grid: Option<Vec<GridPoint>>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            n_per_class: 2_000,
            deltas: simulate::DEFAULT_CRITERION_DELTAS.to_vec(),
            n_bins: simulate::DEFAULT_SIM_BINS,
            grid: None,
        }
    }
}

impl BoundsConfig {
    pub fn combinations(&self) -> Result<Vec<UvsdParams>> {
        grid_params(&self.grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverConfig {
    pub replications: usize,
    pub n_grid: Vec<usize>,
    pub n_bins: usize,
    pub grid: Option<Vec<GridPoint>>,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        Self {
            replications: 200,
            n_grid: vec![5_000],
            n_bins: simulate::DEFAULT_SIM_BINS,
            grid: None,
        }
    }
}

impl RecoverConfig {
    pub fn truth_grid(&self) -> Result<Vec<UvsdParams>> {
        grid_params(&self.grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub bins: usize,
    pub bin_kind: BinKind,
    pub correction: Correction,
    /// Bootstrap resamples per condition; 0 disables bootstrap CIs.
    pub boot: usize,
    /// Required by every stochastic step.
    pub seed: Option<u64>,
    pub equiv_bound: f64,
    pub ece_bins: usize,
    /// Perturbation restarts for the maximum-likelihood fits.
    pub restarts: usize,
    /// Temperature whose evidence range fixes equal-width edges.
    pub reference_temperature: f64,
    /// Explicit `[T_a, T_b]` pairs for equivalence tests; min vs max
    /// temperature of each model/dataset when empty.
    pub tost_pairs: Vec<[f64; 2]>,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub scoring: ScoringConfig,
    pub afc: AfcConfig,
    pub simulate: Option<SimSpec>,
    pub bounds: BoundsConfig,
    pub recover: RecoverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            bins: 20,
            bin_kind: BinKind::EqualWidth,
            correction: Correction::HautusLoglinear,
            boot: 10_000,
            seed: None,
            equiv_bound: 0.016,
            ece_bins: crate::stats::DEFAULT_ECE_BINS,
            restarts: 10,
            reference_temperature: 1.0,
            tost_pairs: Vec::new(),
            workers: None,
            out: PathBuf::from("out"),
            scoring: ScoringConfig::default(),
            afc: AfcConfig::default(),
            simulate: None,
            bounds: BoundsConfig::default(),
            recover: RecoverConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub inputs: Vec<PathBuf>,
    pub bins: Option<usize>,
    pub bin_kind: Option<BinKind>,
    pub correction: Option<Correction>,
    pub boot: Option<usize>,
    pub seed: Option<u64>,
    pub equiv_bound: Option<f64>,
    pub ece_bins: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SdtError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SdtError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            SdtError::Config(m) => SdtError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut cfg.inputs {
            rebase(base, p);
        }
        if let Some(p) = &mut cfg.afc.da_table {
            rebase(base, p);
        }
        rebase(base, &mut cfg.out);
        Ok(cfg)
    }

    /// File (or defaults) with flags applied on top.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if !o.inputs.is_empty() {
            self.inputs = o.inputs.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = o.$f.clone() { self.$f = v; })*};
        }
        set!(bins, bin_kind, correction, boot, equiv_bound, ece_bins, out);
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(SdtError::Config(format!("bins must be at least 2, got {}", self.bins)));
        }
        if self.ece_bins == 0 {
            return Err(SdtError::Config("ece_bins must be at least 1".into()));
        }
        if !(self.equiv_bound > 0.0) {
            return Err(SdtError::Config(format!(
                "equiv_bound must be positive, got {}",
                self.equiv_bound
            )));
        }
        if !(self.reference_temperature > 0.0) {
            return Err(SdtError::Config("reference_temperature must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(SdtError::Config("workers must be at least 1".into()));
        }
        if self.afc.m < 2 {
            return Err(SdtError::Config(format!(
                "afc.m must be at least 2, got {}",
                self.afc.m
            )));
        }
        self.scoring.validate()
    }

    /// Validation plus the input-file checks required before analysis.
    pub fn validate_inputs(&self) -> Result<()> {
        self.validate()?;
        if self.inputs.is_empty() {
            return Err(SdtError::Config("no input files given".into()));
        }
        for p in self.inputs.iter().chain(&self.afc.da_table) {
            if !p.exists() {
                return Err(SdtError::Config(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// The seed, which every stochastic step requires.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| SdtError::Config("a seed is required (set `seed` or pass --seed)".into()))
    }

    pub fn bin_scheme(&self) -> BinScheme {
        match self.bin_kind {
            BinKind::EqualWidth => BinScheme::equal_width(self.bins),
            BinKind::Quantile => BinScheme::quantile(self.bins),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.bins, c.boot, c.ece_bins, c.restarts), (20, 10_000, 15, 10));
        assert_eq!(c.equiv_bound, 0.016);
        assert_eq!(c.correction, Correction::HautusLoglinear);
        assert_eq!(c.bounds.combinations().unwrap().len(), 20);
        assert!(c.require_seed().is_err());
    }

    #[test]
    fn toml_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
inputs = ["trials.jsonl"]
bins = 10
bin_kind = "quantile"
correction = "none"
seed = 7
boot = 500

[scoring]
similarity_threshold = 0.9

[bounds]
iterations = 50
grid = [{ mu = 1.0, sigma_s = 1.5 }]
"#,
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(cfg.inputs, vec![dir.path().join("trials.jsonl")]);
        assert_eq!(
            (cfg.bins, cfg.bin_kind, cfg.correction),
            (10, BinKind::Quantile, Correction::None)
        );
        assert_eq!(cfg.scoring.similarity_threshold, 0.9);
        assert_eq!(cfg.scoring.preambles.len(), 3);
        assert_eq!(cfg.bounds.combinations().unwrap().len(), 1);
        assert_eq!(cfg.bounds.n_per_class, 2_000);

        let o = Overrides {
            bins: Some(20),
            seed: Some(9),
            inputs: vec![PathBuf::from("other.csv")],
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&path), &o).unwrap();
        assert_eq!((cfg.bins, cfg.seed, cfg.boot), (20, Some(9), 500));
        assert_eq!(cfg.inputs, vec![PathBuf::from("other.csv")]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str("bins = 20\nunknown_key = 1").is_err());
        assert!(RunConfig::from_toml_str("bin_kind = \"log\"").is_err());
        let mut c = RunConfig::default();
        c.bins = 1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.inputs = vec![PathBuf::from("/definitely/not/here.jsonl")];
        assert!(matches!(c.validate_inputs(), Err(SdtError::Config(_))));
        assert!(RunConfig::default().validate_inputs().is_err());
    }
}
