//! TOML run configurations and their field-by-field validation.

use std::fs;
use std::path::{Path, PathBuf};

use holoretrieve::constraints::BoxBounds;
use holoretrieve::phantom::{DriftSpec, NoiseSpec, PhaseScale, SpherePhantomSpec};
use holoretrieve::{AdmmOptions, Method, NltikhOptions, PadMode, Padding, RegularizationParams};
use holoretrieve::nltikh::{InitialStep, StepRule};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::failure::Failure;

/// Collects `path: reason` diagnostics.
#[derive(Debug, Default)]
pub struct Diagnostics(Vec<String>);

impl Diagnostics {
    pub fn push(&mut self, path: impl AsRef<str>, reason: impl AsRef<str>) {
        self.0.push(format!("{}: {}", path.as_ref(), reason.as_ref()));
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.push(path, format!("must be positive, got {v}"));
        }
    }

    fn non_negative(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && v >= 0.0) {
            self.push(path, format!("must be non-negative, got {v}"));
        }
    }

    fn at_least_one(&mut self, path: &str, v: usize) {
        if v == 0 {
            self.push(path, "must be at least 1");
        }
    }

    pub fn finish(self) -> Result<(), Failure> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Failure::Validation(self.0))
        }
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        Failure::Validation(vec![format!("{}: {}", path.display(), e.to_string().trim_end())])
    })
}

pub fn config_dir(config: &Path) -> PathBuf {
    match config.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_dir(base).join(p)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

impl OutputConfig {
    fn is_unset(&self) -> bool {
        self.dir.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub photon_count: Option<f64>,
    pub gaussian_sigma: Option<f64>,
    pub drift: Option<DriftSpec>,
}

/// Files written by `simulate`, stems relative to the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFiles {
    pub truth: String,
    pub holograms: Vec<String>,
    /// SHA-256 of every written file, keyed by file name.
    pub sha256: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub shape: [usize; 2],
    pub fresnel_numbers: Vec<f64>,
    #[serde(default)]
    pub c_beta_delta: f64,
    #[serde(default)]
    pub seed: u64,
    pub phantom: SpherePhantomSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default, skip_serializing_if = "OutputConfig::is_unset")]
    pub output: OutputConfig,
    /// Free-form annotations carried into the manifest.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub notes: toml::Table,
    /// Present in manifests; ignored as input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<FixtureFiles>,
}

impl SimulateConfig {
    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            photon_count: self.noise.photon_count,
            gaussian_sigma: self.noise.gaussian_sigma,
            drift: self.noise.drift,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let mut d = Diagnostics::default();
        if self.shape[0] < 2 || self.shape[1] < 2 {
            d.push("shape", "both dimensions must be at least 2");
        }
        fresnel_list(&mut d, &self.fresnel_numbers);
        d.non_negative("c_beta_delta", self.c_beta_delta);
        let [ny, nx] = self.shape.map(|n| n as f64);
        for (i, s) in self.phantom.spheres.iter().enumerate() {
            d.positive(&format!("phantom.spheres[{i}].radius"), s.radius);
            let [cy, cx] = s.center;
            if !(cy.is_finite() && cx.is_finite()) {
                d.push(format!("phantom.spheres[{i}].center"), "must be finite");
            } else if cy + s.radius <= -0.5
                || cx + s.radius <= -0.5
                || cy - s.radius >= ny - 0.5
                || cx - s.radius >= nx - 0.5
            {
                d.push(format!("phantom.spheres[{i}]"), "lies entirely outside the grid");
            }
        }
        match self.phantom.scale {
            PhaseScale::Material { wavenumber, delta } => {
                d.positive("phantom.scale.material.wavenumber", wavenumber);
                d.non_negative("phantom.scale.material.delta", delta);
            }
            PhaseScale::PeakPhase(p) => {
                if !(p.is_finite() && p <= 0.0) {
                    d.push("phantom.scale.peak-phase", format!("must be non-positive, got {p}"));
                }
            }
        }
        if let Some(n) = self.noise.photon_count {
            d.positive("noise.photon_count", n);
        }
        if let Some(s) = self.noise.gaussian_sigma {
            d.non_negative("noise.gaussian_sigma", s);
        }
        if let Some(drift) = self.noise.drift {
            if !(0.0..0.5).contains(&drift.amplitude) {
                d.push("noise.drift.amplitude", "must lie in [0, 0.5)");
            }
            if !(drift.correlation_length.is_finite() && drift.correlation_length >= 1.0) {
                d.push("noise.drift.correlation_length", "must be at least 1");
            }
        }
        d.finish()
    }
}

fn fresnel_list(d: &mut Diagnostics, list: &[f64]) {
    if list.is_empty() {
        d.push("fresnel_numbers", "at least one is required");
    }
    for (i, &f) in list.iter().enumerate() {
        d.positive(&format!("fresnel_numbers[{i}]"), f);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub negativity: bool,
    /// Stem of a u8-mask grid file.
    pub support: Option<PathBuf>,
    pub bounds: Option<BoxBounds>,
}

/// Solver settings shared by `reconstruct` and benchmark scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub c_beta_delta: Option<f64>,
    pub regularization: RegularizationParams,
    pub constraints: ConstraintConfig,
    pub padding: Padding,
    pub admm: AdmmOptions,
    pub nltikh: NltikhOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            c_beta_delta: None,
            regularization: RegularizationParams::default(),
            constraints: ConstraintConfig::default(),
            padding: Padding::default(),
            admm: AdmmOptions::default(),
            nltikh: NltikhOptions::default(),
        }
    }
}

impl SolverConfig {
    pub fn check(&self, d: &mut Diagnostics, prefix: &str) {
        let p = |f: &str| format!("{prefix}{f}");
        if let Some(c) = self.c_beta_delta {
            d.non_negative(&p("c_beta_delta"), c);
        }
        let r = &self.regularization;
        d.non_negative(&p("regularization.alpha_low"), r.alpha_low);
        d.non_negative(&p("regularization.alpha_high"), r.alpha_high);
        if let Some(b) = r.alpha_beyond_na {
            d.non_negative(&p("regularization.alpha_beyond_na"), b);
        }
        d.positive(&p("regularization.transition_width"), r.transition_width);

        if let Some(BoxBounds { lo, hi }) = self.constraints.bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                d.push(p("constraints.bounds"), format!("need lo <= hi, got [{lo}, {hi}]"));
            } else {
                if self.constraints.negativity && lo > 0.0 {
                    d.push(p("constraints.bounds.lo"), "positive lower bound contradicts negativity");
                }
                if self.constraints.support.is_some() && !(lo <= 0.0 && hi >= 0.0) {
                    d.push(p("constraints.bounds"), "a support constraint needs 0 inside the bounds");
                }
            }
        }

        if !(self.padding.factor.is_finite() && self.padding.factor >= 1.0) {
            d.push(p("padding.factor"), format!("must be >= 1, got {}", self.padding.factor));
        }
        if let PadMode::Constant(v) = self.padding.mode {
            if !v.is_finite() {
                d.push(p("padding.mode.constant"), "must be finite");
            }
        }

        let a = &self.admm;
        d.positive(&p("admm.rho"), a.rho);
        d.positive(&p("admm.tolerance"), a.tolerance);
        d.at_least_one(&p("admm.max_iterations"), a.max_iterations);
        d.positive(&p("admm.restart_factor"), a.restart_factor);

        let n = &self.nltikh;
        d.at_least_one(&p("nltikh.max_iterations"), n.max_iterations);
        d.non_negative(&p("nltikh.gradient_tolerance"), n.gradient_tolerance);
        d.at_least_one(&p("nltikh.linesearch_window"), n.linesearch_window);
        if !(n.backtrack_factor > 0.0 && n.backtrack_factor < 1.0) {
            d.push(p("nltikh.backtrack_factor"), "must lie in (0, 1)");
        }
        d.positive(&p("nltikh.sufficient_decrease"), n.sufficient_decrease);
        if let InitialStep::Fixed(t) = n.initial_step {
            d.positive(&p("nltikh.initial_step.fixed"), t);
        }
        if let StepRule::Constant(t) = n.step_rule {
            d.positive(&p("nltikh.step_rule.constant"), t);
        }
    }

    /// Warm-start ADMM options follow the `[admm]` section.
    pub fn nltikh_options(&self) -> NltikhOptions {
        NltikhOptions { admm: self.admm, ..self.nltikh }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    /// A `simulate` manifest providing holograms and Fresnel numbers.
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub holograms: Vec<PathBuf>,
    #[serde(default)]
    pub fresnel_numbers: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ReconstructConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut d = Diagnostics::default();
        match &self.fixture {
            Some(_) => {
                if !self.holograms.is_empty() || !self.fresnel_numbers.is_empty() {
                    d.push("fixture", "give either a fixture or holograms with fresnel_numbers, not both");
                }
            }
            None => {
                if self.holograms.is_empty() {
                    d.push("holograms", "at least one hologram (or a fixture) is required");
                }
                fresnel_list(&mut d, &self.fresnel_numbers);
                if self.holograms.len() != self.fresnel_numbers.len() {
                    d.push(
                        "fresnel_numbers",
                        format!("{} values for {} holograms", self.fresnel_numbers.len(), self.holograms.len()),
                    );
                }
            }
        }
        self.solver.check(&mut d, "");
        d.finish()
    }
}

/// Paired comparisons added to a benchmark scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// Constant stepsize `1/L̂` instead of Barzilai–Borwein.
    ConstantStep,
    /// Start from zero instead of the CTF reconstruction.
    ColdStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub fixture: PathBuf,
    #[serde(default)]
    pub compare: Vec<Comparison>,
    #[serde(flatten)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default)]
    pub scenario: Vec<Scenario>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut d = Diagnostics::default();
        let mut names = std::collections::BTreeSet::new();
        for (i, s) in self.scenario.iter().enumerate() {
            if s.name.is_empty() || s.name.contains([',', '\n', '"']) {
                d.push(format!("scenario[{i}].name"), "must be non-empty without commas, quotes or newlines");
            }
            if !names.insert(s.name.as_str()) {
                d.push(format!("scenario[{i}].name"), format!("duplicate name `{}`", s.name));
            }
            if !s.compare.is_empty() && s.solver.method != Method::Nltikh {
                d.push(format!("scenario[{i}].compare"), "paired comparisons need method = \"nltikh\"");
            }
            s.solver.check(&mut d, &format!("scenario[{i}]."));
        }
        d.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_invalid_field_is_reported() {
        let cfg: ReconstructConfig = toml::from_str(
            r#"
            holograms = ["a"]
            fresnel_numbers = [-1.0, 2e-3]
            [admm]
            rho = 0.0
            [nltikh]
            backtrack_factor = 1.5
            [regularization]
            alpha_low = -1.0
            "#,
        )
        .unwrap();
        let Err(Failure::Validation(msgs)) = cfg.validate() else {
            panic!("expected validation failure");
        };
        let joined = msgs.join("\n");
        for field in ["fresnel_numbers[0]", "fresnel_numbers:", "admm.rho", "nltikh.backtrack_factor", "regularization.alpha_low"] {
            assert!(joined.contains(field), "{field} missing from\n{joined}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ReconstructConfig>("holograms = []\nbogus = 1").is_err());
        assert!(toml::from_str::<ReconstructConfig>("[admm]\nrhoo = 1.0").is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: ReconstructConfig = toml::from_str("fixture = \"m.toml\"").unwrap();
        assert_eq!(cfg.solver.method, Method::Nltikh);
        assert_eq!(cfg.solver.regularization.alpha_low, 1e-3);
        assert_eq!(cfg.solver.nltikh.gradient_tolerance, 1e-3);
        assert!(cfg.validate().is_ok());
    }
}
