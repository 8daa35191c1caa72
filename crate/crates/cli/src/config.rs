//! Run configuration files.
//!
//! ```toml
//! [grid]
//! n = 256
//! half_width = 40.0
//!
//! [data]
//! profile = "gaussian-bump"
//! epsilon = 0.01
//!
//! [couplings]
//! preset = "generic"
//!
//! [time]
//! t_end = 20.0
//!
//! [diagnostics]
//! gamma_stride = 2
//! ```
//!
//! Every section except `[grid]` and `[time]` may be omitted. Unknown keys
//! are errors. Problems are reported with the line of the offending key.

use serde::Deserialize;

use nullwave::evolve::{DataProfile, DiagnosticToggles, GridSpec, SimConfig};
use nullwave::grid::Scheme;
use nullwave::nullforms::{Couplings, Matrix3};
use nullwave::picard::PicardConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub couplings: CouplingsSection,
    pub time: TimeSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub picard: PicardSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub half_width: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub profile: DataProfile,
    pub epsilon: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { profile: DataProfile::GaussianBump, epsilon: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Generic,
    Zero,
}

/// Either a preset or both matrices; explicit matrices win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingsSection {
    #[serde(default)]
    pub preset: Preset,
    pub p1: Option<Matrix3>,
    pub p2: Option<Matrix3>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_output_every")]
    pub output_every: f64,
    /// time step of the Picard mesh
    #[serde(default = "default_picard_dt")]
    pub dt: f64,
}

fn default_cfl() -> f64 {
    0.5
}
fn default_output_every() -> f64 {
    1.0
}
fn default_picard_dt() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub energies: bool,
    pub ghost: bool,
    pub gamma_energies: bool,
    pub gamma_stride: usize,
    /// exponent of the time damping in the ghost weights and the X-norm
    pub delta: f64,
    /// write every k-th snapshot to disk; 0 keeps only the first and last
    pub snapshot_every: usize,
    /// `[t_lo, t_hi]` for the decay fits; defaults to `[t_end/4, t_end]`
    pub fit_window: Option<[f64; 2]>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticToggles::default();
        Self {
            energies: d.energies,
            ghost: d.ghost,
            gamma_energies: d.gamma_energies,
            gamma_stride: d.gamma_stride,
            delta: 0.1,
            snapshot_every: 0,
            fit_window: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardSection {
    pub max_iter: usize,
    pub tol: f64,
    pub xnorm_stride: usize,
    /// damping exponent of the X-norm; contraction needs ε ≤ delta/100
    pub delta: f64,
}

impl Default for PicardSection {
    fn default() -> Self {
        Self { max_iter: 12, tol: 1e-9, xnorm_stride: 2, delta: 0.5 }
    }
}

/// A parse or validation failure, carrying the 1-based line it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, or of the section header when
/// the key is absent.
pub fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(k + 1);
            }
            continue;
        }
        if current == section {
            if let Some(key) = key {
                if line.split('=').next().map(str::trim) == Some(key) {
                    return Some(k + 1);
                }
            }
        }
    }
    header
}

/// Maps a validation message from the solver to the key it is about.
fn blame(text: &str, message: &str) -> Option<usize> {
    const KEYS: [(&str, &str); 12] = [
        ("need dt", "time/dt"),
        ("grid.n", "grid/n"),
        ("half_width", "grid/half_width"),
        ("cfl", "time/cfl"),
        ("t_end", "time/t_end"),
        ("output_every", "time/output_every"),
        ("gamma_stride", "diagnostics/gamma_stride"),
        ("epsilon", "data/epsilon"),
        ("delta", "diagnostics/delta"),
        ("coupling", "couplings/p1"),
        ("max_iter", "picard/max_iter"),
        ("tol", "picard/tol"),
    ];
    KEYS.iter().find(|(needle, _)| message.contains(needle)).and_then(|(_, path)| {
        let (sec, key) = path.split_once('/').expect("section/key");
        locate(text, sec, Some(key))
    })
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str::<ConfigFile>(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn couplings(&self) -> Result<Couplings, String> {
        let c = &self.couplings;
        match (c.p1, c.p2) {
            (Some(p1), Some(p2)) => Couplings::new(p1, p2).map_err(|e| e.to_string()),
            (None, None) => Ok(match c.preset {
                Preset::Generic => Couplings::generic(),
                Preset::Zero => Couplings::zero(),
            }),
            _ => Err("coupling matrices p1 and p2 must be given together".into()),
        }
    }

    fn grid(&self) -> GridSpec {
        GridSpec { n: self.grid.n, half_width: self.grid.half_width }
    }

    fn reject(text: &str, message: String) -> ConfigError {
        ConfigError { line: blame(text, &message), message }
    }

    /// The evolution config, validated. `text` is the source, for line
    /// numbers.
    pub fn sim_config(&self, text: &str) -> Result<SimConfig, ConfigError> {
        let couplings = self.couplings().map_err(|m| Self::reject(text, m))?;
        let d = &self.diagnostics;
        let mut c = SimConfig::new(self.grid(), self.data.epsilon, self.time.t_end);
        c.couplings = couplings;
        c.profile = self.data.profile;
        c.cfl = self.time.cfl;
        c.output_every = self.time.output_every;
        c.scheme = self.grid.scheme;
        c.delta = d.delta;
        c.diagnostics = DiagnosticToggles {
            energies: d.energies,
            ghost: d.ghost,
            gamma_energies: d.gamma_energies,
            gamma_stride: d.gamma_stride,
        };
        if let Some([lo, hi]) = d.fit_window {
            if !(0.0 < lo && lo < hi) {
                return Err(ConfigError {
                    line: locate(text, "diagnostics", Some("fit_window")),
                    message: format!("fit_window [{lo}, {hi}] must satisfy 0 < t_lo < t_hi"),
                });
            }
        }
        c.validate().map_err(|e| Self::reject(text, e.to_string()))?;
        Ok(c)
    }

    pub fn picard_config(&self, text: &str) -> Result<PicardConfig, ConfigError> {
        let couplings = self.couplings().map_err(|m| Self::reject(text, m))?;
        let p = &self.picard;
        let c = PicardConfig {
            grid: self.grid(),
            couplings,
            epsilon: self.data.epsilon,
            profile: self.data.profile,
            t_end: self.time.t_end,
            dt: self.time.dt,
            delta: p.delta,
            max_iter: p.max_iter,
            tol: p.tol,
            xnorm_stride: p.xnorm_stride,
        };
        c.validate().map_err(|e| {
            let message = e.to_string();
            // the picard damping lives in its own section
            let line = if message.contains("delta") {
                locate(text, "picard", Some("delta"))
            } else {
                blame(text, &message)
            };
            ConfigError { line, message }
        })?;
        Ok(c)
    }

    pub fn fit_window(&self) -> (f64, f64) {
        self.diagnostics
            .fit_window
            .map_or_else(|| nullwave::decay::default_window(self.time.t_end), |[a, b]| (a, b))
    }
}
