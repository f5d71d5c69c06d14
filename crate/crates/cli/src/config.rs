//! Run configuration read from TOML, with command-line overrides.
//!
//! Every section is optional; defaults follow the empirical setup: `α₁ = α₂ =
//! 0.05`, `n_Λ = 1000`, `n_Z = 1000`, `n_Q = 20000`, two lags, an intercept.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signvar::moment_inequality::WeightScheme;
use signvar::restrictions::{EqualityRestriction, RestrictionSet, Sign, SignRestriction, TargetKind, ThetaTarget};
use signvar::var_core::Deterministics;

use crate::ingest::Transform;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub var: VarConfig,
    pub restrictions: RestrictionConfig,
    pub inference: InferenceConfig,
    pub bayes: BayesSection,
    pub mc: McSection,
    pub output: OutputConfig,
}

/// A variable by header name or 1-based column position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Relative paths resolve against the config file's directory.
    pub path: Option<PathBuf>,
    /// Header of a leading date column; detected from the header when unset.
    pub date_column: Option<String>,
    /// Modelled series in VAR order; all numeric columns when unset.
    pub variables: Option<Vec<VarRef>>,
    /// Pipeline per variable name, applied in the listed order.
    pub transforms: BTreeMap<String, Vec<Transform>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarConfig {
    pub lags: usize,
    pub deterministics: DeterministicsSpec,
    /// Largest lag order in the `estimate` information-criterion table.
    pub max_lags: usize,
}

impl Default for VarConfig {
    fn default() -> Self {
        Self { lags: 2, deterministics: DeterministicsSpec::Intercept, max_lags: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeterministicsSpec {
    None,
    Intercept,
    InterceptTrend,
}

impl From<DeterministicsSpec> for Deterministics {
    fn from(d: DeterministicsSpec) -> Self {
        match d {
            DeterministicsSpec::None => Deterministics::None,
            DeterministicsSpec::Intercept => Deterministics::Intercept,
            DeterministicsSpec::InterceptTrend => Deterministics::InterceptTrend,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestrictionConfig {
    /// Impact responses of the first `zero_count` variables are zero.
    pub zero_count: usize,
    pub signs: Vec<SignSpec>,
    pub equalities: Vec<EqualitySpec>,
    /// IRFs of every variable at horizons 0..=23 when empty.
    pub targets: Vec<TargetSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignSpec {
    pub variable: VarRef,
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Inclusive horizon range; alternative to `horizon`.
    #[serde(default)]
    pub horizons: Option<[usize; 2]>,
    pub sign: Sign,
    #[serde(default)]
    pub cumulative: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualitySpec {
    pub variable: VarRef,
    pub horizon: usize,
    #[serde(default)]
    pub cumulative: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default = "default_kind")]
    pub kind: TargetKind,
    pub variable: VarRef,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub horizons: Option<[usize; 2]>,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
}

fn default_kind() -> TargetKind {
    TargetKind::Irf
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub n_q: usize,
    pub n_lambda: usize,
    pub n_z: usize,
    pub weight: WeightScheme,
    /// Reuse one panel of normal draws at every grid point.
    pub share_draws: bool,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.05,
            alpha2: 0.05,
            n_q: 20_000,
            n_lambda: 1000,
            n_z: 1000,
            weight: WeightScheme::Identity,
            share_draws: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BayesSection {
    pub draws: usize,
    /// Credible level; `1 − α₁ − α₂` when unset.
    pub level: Option<f64>,
}

impl Default for BayesSection {
    fn default() -> Self {
        Self { draws: 50_000, level: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    /// `1`, `2`, `3`, `4` or `exp3`.
    pub design: String,
    pub t: usize,
    pub n_sim: usize,
    /// Restriction horizons of designs 2 to 4: `"1"` for a single horizon,
    /// `"0-4"` for every horizon up to 4.
    pub horizons: Option<String>,
    /// Grid size; the design's own when unset.
    pub n_q: Option<usize>,
    pub population_grid: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self { design: "1".into(), t: 100, n_sim: 500, horizons: None, n_q: None, population_grid: 200_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub n_q: Option<usize>,
    pub n_z: Option<usize>,
    pub n_lambda: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative data paths become relative to its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(data), Some(dir)) = (cfg.data.path.as_mut(), path.parent()) {
            if data.is_relative() {
                *data = dir.join(&*data);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        let inf = &mut self.inference;
        inf.seed = o.seed.unwrap_or(inf.seed);
        inf.alpha1 = o.alpha1.unwrap_or(inf.alpha1);
        inf.alpha2 = o.alpha2.unwrap_or(inf.alpha2);
        inf.n_q = o.n_q.unwrap_or(inf.n_q);
        inf.n_z = o.n_z.unwrap_or(inf.n_z);
        inf.n_lambda = o.n_lambda.unwrap_or(inf.n_lambda);
        if o.n_q.is_some() {
            self.mc.n_q = o.n_q;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> CliResult<()> {
        let inf = &self.inference;
        let bad = |m: String| Err(CliError::Config(m));
        if !(inf.alpha1 > 0.0 && inf.alpha1 < 0.5) {
            return bad(format!("alpha1 = {} must lie in (0, 0.5)", inf.alpha1));
        }
        if !(inf.alpha2 > 0.0 && inf.alpha1 + inf.alpha2 < 1.0) {
            return bad(format!("alpha2 = {} must be positive with alpha1 + alpha2 < 1", inf.alpha2));
        }
        if inf.n_q == 0 || inf.n_z == 0 {
            return bad("n_q and n_z must be positive".into());
        }
        if let Some(level) = self.bayes.level {
            if !(level > 0.0 && level <= 1.0) {
                return bad(format!("bayes.level = {level} must lie in (0, 1]"));
            }
        }
        for (name, steps) in &self.data.transforms {
            crate::ingest::validate_pipeline(name, steps)?;
        }
        Ok(())
    }

    pub fn bayes_level(&self) -> f64 {
        self.bayes.level.unwrap_or(1.0 - self.inference.alpha1 - self.inference.alpha2)
    }

    /// SHA-256 of the effective configuration as JSON, without the output directory.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}

/// Resolves a reference against the modelled variable names.
pub fn resolve(var: &VarRef, names: &[String]) -> CliResult<usize> {
    match var {
        VarRef::Index(i) if *i >= 1 && *i <= names.len() => Ok(i - 1),
        VarRef::Index(i) => Err(CliError::Config(format!("variable index {i} outside 1..={}", names.len()))),
        VarRef::Name(s) => names
            .iter()
            .position(|n| n == s)
            .ok_or_else(|| CliError::Config(format!("unknown variable '{s}' (have {})", names.join(", ")))),
    }
}

fn horizon_range(h: Option<usize>, hs: Option<[usize; 2]>, what: &str) -> CliResult<std::ops::RangeInclusive<usize>> {
    match (h, hs) {
        (Some(h), None) => Ok(h..=h),
        (None, Some([a, b])) if a <= b => Ok(a..=b),
        (None, Some([a, b])) => Err(CliError::Config(format!("{what}: horizons [{a}, {b}] are reversed"))),
        _ => Err(CliError::Config(format!("{what}: give exactly one of horizon or horizons"))),
    }
}

impl RestrictionConfig {
    /// Restriction set over the modelled variables.
    pub fn resolve(&self, names: &[String]) -> CliResult<RestrictionSet> {
        let mut signs = Vec::new();
        for s in &self.signs {
            let variable = resolve(&s.variable, names)?;
            for horizon in horizon_range(s.horizon, s.horizons, "sign restriction")? {
                signs.push(SignRestriction { variable, horizon, sign: s.sign, cumulative: s.cumulative });
            }
        }
        let equalities = self
            .equalities
            .iter()
            .map(|e| {
                Ok(EqualityRestriction { variable: resolve(&e.variable, names)?, horizon: e.horizon, cumulative: e.cumulative })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let mut targets = Vec::new();
        for t in &self.targets {
            let variable = resolve(&t.variable, names)?;
            for horizon in horizon_range(t.horizon, t.horizons, "target")? {
                targets.push(ThetaTarget { kind: t.kind, variable, horizon, bounds: t.bounds.map(|[a, b]| (a, b)) });
            }
        }
        if targets.is_empty() {
            targets = (0..names.len()).flat_map(|v| (0..=23).map(move |h| ThetaTarget::irf(v, h))).collect();
        }
        let mut set = RestrictionSet::new(signs).with_zero_count(self.zero_count).with_targets(targets);
        set.equalities = equalities;
        Ok(set)
    }
}
