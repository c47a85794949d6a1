//! TOML study configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::mesh::mesh_unit_cell_full;
use crate::geometry::{HoleShape, PerforationSpec};
use crate::solve::ProblemData;

/// Independent parts of a run, selectable with `--only`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Cell,
    Rates,
    Plateau,
    Smoothing,
    Lipschitz,
    Quenched,
    Extension,
    Korn,
    Muckenhoupt,
}

impl Study {
    pub const ALL: [Study; 9] = [
        Study::Cell,
        Study::Rates,
        Study::Plateau,
        Study::Smoothing,
        Study::Lipschitz,
        Study::Quenched,
        Study::Extension,
        Study::Korn,
        Study::Muckenhoupt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Study::Cell => "cell",
            Study::Rates => "rates",
            Study::Plateau => "plateau",
            Study::Smoothing => "smoothing",
            Study::Lipschitz => "lipschitz",
            Study::Quenched => "quenched",
            Study::Extension => "extension",
            Study::Korn => "korn",
            Study::Muckenhoupt => "muckenhoupt",
        }
    }

    pub fn parse(s: &str) -> Option<Study> {
        Study::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// The error functionals a rate can be fitted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    H1W,
    L2Err,
    LpErrTau,
    L4Err,
    Sqfn,
}

impl Functional {
    pub const ALL: [Functional; 5] = [Functional::H1W, Functional::L4Err, Functional::L2Err, Functional::LpErrTau, Functional::Sqfn];

    pub fn name(&self) -> &'static str {
        match self {
            Functional::H1W => "h1_w",
            Functional::L2Err => "l2_err",
            Functional::LpErrTau => "lp_err_tau",
            Functional::L4Err => "l4_err",
            Functional::Sqfn => "sqfn",
        }
    }

    /// Acceptance slope and `r²` thresholds.
    pub fn default_gate(&self) -> (f64, f64) {
        match self {
            Functional::H1W => (0.40, 0.9),
            Functional::L4Err => (0.40, 0.0),
            Functional::L2Err => (0.70, 0.0),
            Functional::LpErrTau => (0.60, 0.0),
            Functional::Sqfn => (0.70, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataPreset {
    /// `F = 0`, `g = (sin πx₁ sin πx₂, x₁x₂)`.
    BoundaryOnly,
    /// The same `g` with `F = (cos 2πx₁, sin 2πx₂)`.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Cells per side; `ε = 1/n`, strictly increasing.
    pub n: Vec<usize>,
    #[serde(default = "default_shape")]
    pub hole_shape: HoleShape,
    #[serde(default = "default_radius")]
    pub hole_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_preset")]
    pub preset: DataPreset,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { preset: default_preset(), scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// `h = ε / h_per_eps`.
    #[serde(default = "default_h_per_eps")]
    pub h_per_eps: usize,
    /// Cell mesh size of the standalone cell validation.
    #[serde(default = "default_cell_h")]
    pub cell_h: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig { h_per_eps: default_h_per_eps(), cell_h: default_cell_h() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    /// `τ` of the `L^p` functional, `p = 4/(1-τ)`.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "all_functionals")]
    pub functionals: Vec<Functional>,
    /// Overrides of the minimum slopes, by functional name.
    #[serde(default)]
    pub min_slope: std::collections::BTreeMap<String, f64>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        RatesConfig { tau: default_tau(), functionals: all_functionals(), min_slope: Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorsConfig {
    #[serde(default = "default_lipschitz_n")]
    pub lipschitz_n: Vec<usize>,
    #[serde(default = "default_korn_n")]
    pub korn_n: Vec<usize>,
    #[serde(default = "default_plateau_n")]
    pub plateau_n: usize,
    #[serde(default = "default_quenched_n")]
    pub quenched_n: Vec<usize>,
    #[serde(default = "default_p_list")]
    pub quenched_p: Vec<f64>,
    /// Exponents `β` of the weights `δ^β`; `0` is the unweighted case.
    #[serde(default = "default_quenched_beta")]
    pub quenched_beta: Vec<f64>,
    /// Number of smooth presets in the divergence-data family.
    #[serde(default = "default_smooth_presets")]
    pub quenched_smooth_presets: usize,
    #[serde(default = "default_extension_beta")]
    pub extension_beta: Vec<f64>,
    #[serde(default = "default_muckenhoupt_beta")]
    pub muckenhoupt_beta: Vec<f64>,
    #[serde(default = "default_max_level")]
    pub muckenhoupt_max_level: usize,
    /// Cap on trend slopes of monitors that should be `ε`-stable.
    #[serde(default = "default_trend_cap")]
    pub trend_cap: f64,
}

impl Default for MonitorsConfig {
    fn default() -> Self {
        toml::from_str("").expect("all monitor fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default = "one_usize")]
    pub workers: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "all_studies")]
    pub studies: Vec<Study>,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all run fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub geometry: GeometryConfig,
    #[serde(default = "default_coefficient")]
    pub coefficient: CoefficientField,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub monitors: MonitorsConfig,
    #[serde(default)]
    pub run: RunConfig,
}

fn default_shape() -> HoleShape {
    HoleShape::Disk
}
fn default_radius() -> f64 {
    0.25
}
fn default_preset() -> DataPreset {
    DataPreset::BoundaryOnly
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_h_per_eps() -> usize {
    8
}
fn default_cell_h() -> f64 {
    1.0 / 128.0
}
fn default_tau() -> f64 {
    0.5
}
fn all_functionals() -> Vec<Functional> {
    Functional::ALL.to_vec()
}
fn default_lipschitz_n() -> Vec<usize> {
    vec![8, 16, 32]
}
fn default_korn_n() -> Vec<usize> {
    vec![4, 8, 16]
}
fn default_quenched_n() -> Vec<usize> {
    vec![4, 8, 16, 32]
}
fn default_plateau_n() -> usize {
    8
}
fn default_p_list() -> Vec<f64> {
    vec![1.5, 2.0, 3.0, 4.0]
}
fn default_quenched_beta() -> Vec<f64> {
    vec![0.0, 0.8, -0.5]
}
fn default_smooth_presets() -> usize {
    3
}
fn default_extension_beta() -> Vec<f64> {
    vec![0.0, 0.8]
}
fn default_muckenhoupt_beta() -> Vec<f64> {
    vec![0.8, 0.99, -1.5]
}
fn default_max_level() -> usize {
    6
}
fn default_trend_cap() -> f64 {
    0.1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_cache() -> PathBuf {
    PathBuf::from(".perfhom-cache")
}
fn default_seed() -> u64 {
    7
}
fn all_studies() -> Vec<Study> {
    Study::ALL.to_vec()
}
fn default_coefficient() -> CoefficientField {
    CoefficientField::isotropic(1.0, 1.0)
}

fn bad(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

fn check_n_list(field: &str, n: &[usize], strictly_increasing: bool) -> Result<()> {
    if n.is_empty() {
        return Err(bad(field, "must list at least one cell count"));
    }
    if let Some(k) = n.iter().find(|&&k| k < 2) {
        return Err(bad(field, format!("cell counts must be at least 2, got {k}")));
    }
    if strictly_increasing && n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad(field, "cell counts must be strictly increasing so that ε strictly decreases"));
    }
    Ok(())
}

/// Dotted key of the `key = value` line containing byte `offset`.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let mut table = String::new();
    let mut pos = 0;
    for line in text.lines() {
        let end = pos + line.len();
        let t = line.trim();
        if t.starts_with('[') {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        if offset >= pos && offset <= end {
            let key = t.split('=').next()?.trim();
            if t.contains('=') && !key.is_empty() {
                return Some(if table.is_empty() { key.into() } else { format!("{table}.{key}") });
            }
            return (!table.is_empty()).then_some(table);
        }
        pos = end + 1;
    }
    None
}

fn backticked(msg: &str) -> Option<String> {
    msg.split('`').nth(1).filter(|s| !s.is_empty() && !s.contains(' ')).map(str::to_string)
}

/// One-based line of the dotted key `table.key`, if it is spelled out.
fn line_of(text: &str, field: &str) -> Option<usize> {
    let (table, key) = field.rsplit_once('.').unwrap_or(("", field));
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == field {
                return Some(i + 1);
            }
        } else if current == table && t.split('=').next().map(str::trim) == Some(key) && t.contains('=') {
            return Some(i + 1);
        }
    }
    None
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|s| key_at(text, s.start))
                .or_else(|| backticked(e.message()))
                .unwrap_or_else(|| "<document>".into());
            bad(&field, e.to_string().trim().to_string())
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Config { field, message } => match line_of(text, &field) {
                Some(line) => Error::Config { message: format!("{message} (line {line})"), field },
                None => Error::Config { field, message },
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn perforation(&self) -> PerforationSpec {
        match self.geometry.hole_shape {
            HoleShape::Disk => PerforationSpec::disk(self.geometry.hole_radius),
            HoleShape::None => PerforationSpec::none(),
        }
    }

    pub fn problem_data(&self) -> ProblemData {
        let base = match self.data.preset {
            DataPreset::BoundaryOnly => ProblemData::boundary_only(),
            DataPreset::Full => ProblemData::default_presets(),
        };
        ProblemData { scale: self.data.scale, ..base }
    }

    /// Cell mesh size of the macroscopic tiling.
    pub fn pipeline_cell_h(&self) -> f64 {
        1.0 / self.discretization.h_per_eps as f64
    }

    pub fn min_slope(&self, f: Functional) -> f64 {
        self.rates.min_slope.get(f.name()).copied().unwrap_or(f.default_gate().0)
    }

    pub fn validate(&self) -> Result<()> {
        check_n_list("geometry.n", &self.geometry.n, true)?;
        let spec = self.perforation();
        spec.validate().map_err(|e| bad("geometry.hole_radius", e.to_string()))?;
        self.coefficient.validate().map_err(|e| bad("coefficient", e.to_string()))?;
        if !(self.data.scale.is_finite() && self.data.scale != 0.0) {
            return Err(bad("data.scale", "must be finite and nonzero"));
        }
        let t = self.rates.tau;
        if !(t > 0.0 && t < 1.0) {
            return Err(bad("rates.tau", format!("must lie in (0, 1), got {t}")));
        }
        for k in self.rates.min_slope.keys() {
            if !Functional::ALL.iter().any(|f| f.name() == k) {
                return Err(bad("rates.min_slope", format!("unknown functional `{k}`")));
            }
        }
        let d = &self.discretization;
        if d.h_per_eps < 8 {
            return Err(bad("discretization.h_per_eps", format!("h = ε/{} violates the gate h ≤ ε/8", d.h_per_eps)));
        }
        mesh_unit_cell_full(&spec, self.pipeline_cell_h()).map_err(|e| bad("discretization.h_per_eps", e.to_string()))?;
        mesh_unit_cell_full(&spec, 0.5 * self.pipeline_cell_h())
            .map_err(|e| bad("discretization.h_per_eps", format!("plateau refinement: {e}")))?;
        if !(d.cell_h > 0.0 && d.cell_h <= 0.125) {
            return Err(bad("discretization.cell_h", format!("must lie in (0, 1/8], got {}", d.cell_h)));
        }
        let m = &self.monitors;
        check_n_list("monitors.lipschitz_n", &m.lipschitz_n, true)?;
        check_n_list("monitors.korn_n", &m.korn_n, true)?;
        check_n_list("monitors.quenched_n", &m.quenched_n, true)?;
        check_n_list("monitors.plateau_n", &[m.plateau_n], false)?;
        if let Some(p) = m.quenched_p.iter().find(|p| !(**p > 1.0)) {
            return Err(bad("monitors.quenched_p", format!("exponents must exceed 1, got {p}")));
        }
        for (field, list) in [
            ("monitors.quenched_beta", &m.quenched_beta),
            ("monitors.extension_beta", &m.extension_beta),
            ("monitors.muckenhoupt_beta", &m.muckenhoupt_beta),
        ] {
            if list.iter().any(|b| !b.is_finite()) {
                return Err(bad(field, "exponents must be finite"));
            }
        }
        if !(m.trend_cap.is_finite()) {
            return Err(bad("monitors.trend_cap", "must be finite"));
        }
        if self.run.workers == 0 {
            return Err(bad("run.workers", "must be at least 1"));
        }
        if self.run.studies.is_empty() {
            return Err(bad("run.studies", "must name at least one study"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[geometry]\nn = [4]\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = StudyConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.geometry.hole_radius, 0.25);
        assert_eq!(c.discretization.h_per_eps, 8);
        assert_eq!(c.rates.tau, 0.5);
        assert_eq!(c.run.workers, 1);
        assert_eq!(c.run.studies.len(), Study::ALL.len());
        assert_eq!(c.monitors.lipschitz_n, vec![8, 16, 32]);
    }

    fn field_of(text: &str) -> String {
        match StudyConfig::from_toml(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of("[geometry]\nn = [4]\n[rates]\ntau = 1.5\n"), "rates.tau");
        assert_eq!(field_of("[geometry]\nn = [8, 4]\n"), "geometry.n");
        assert_eq!(field_of("[geometry]\nn = [4]\nhole_radius = 0.6\n"), "geometry.hole_radius");
        assert_eq!(field_of("[geometry]\nn = [4]\n[discretization]\nh_per_eps = 4\n"), "discretization.h_per_eps");
        assert_eq!(field_of("[geometry]\nn = [4]\n[run]\nworkers = 0\n"), "run.workers");
        assert_eq!(field_of("[geometry]\nn = [4]\n[coefficient]\nkind = \"isotropic_lame\"\nlambda = 1.0\nmu = -1.0\n"), "coefficient");
    }

    #[test]
    fn parse_errors_name_the_key_and_line() {
        let e = StudyConfig::from_toml("[geometry]\nn = [4]\n[rates]\ntau = \"half\"\n").unwrap_err();
        match e {
            Error::Config { field, message } => {
                assert_eq!(field, "rates.tau");
                assert!(message.contains("line 4"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let e = StudyConfig::from_toml("[geometry]\nn = [4]\n[rates]\ntau = 1.5\n").unwrap_err();
        assert!(e.to_string().contains("line 4"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = StudyConfig::from_toml("[geometry]\nn = [4]\nradius = 0.2\n").unwrap_err();
        assert!(e.to_string().contains("radius"), "{e}");
    }

    #[test]
    fn study_names_round_trip() {
        for s in Study::ALL {
            assert_eq!(Study::parse(s.name()), Some(s));
        }
        assert_eq!(Study::parse("nope"), None);
    }
}
