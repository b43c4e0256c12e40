//! Experiment configuration (TOML). Unknown keys are rejected everywhere.
//!
//! ```toml
//! seed = 7
//! scales = [25, 100, 400]        # s, or the window side L for `boolean`
//!
//! [model]
//! kind = "compound-sum"          # count | pair-count | wiener-ito | compound-sum | isolated-count | boolean
//! m = 1
//! marks = "rademacher"           # or "uniform" with half-width `a`
//!
//! [target]
//! sigma = "auto"                 # auto | analytic | estimated
//! n_cov = 20000
//!
//! [plan]
//! n_outer = 200
//! n_inner = 50
//! n_samples = 100000
//!
//! [distances]
//! metrics = ["dK", "dH1"]        # dK (m = 1 only), dH<l>, dconvex
//!
//! [bounds]
//! metrics = ["d3", "d2", "dH1"]  # d3, d2, dH<l>, dconvex
//! marked = { c = 1.0, p = 3.0 }  # optional marked-functional bounds
//!
//! [stein]
//! t = 0.3
//! ```

use mvpoincare::bounds::Metric;
use mvpoincare::distance::SearchBudget;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub scales: Vec<f64>,
    pub model: ModelConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub distances: DistanceConfig,
    #[serde(default)]
    pub bounds: BoundConfig,
    #[serde(default)]
    pub stein: SteinCheckConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// (N - s) / sqrt(s) on [0, 1]^d.
    Count {
        #[serde(default = "one")]
        d: usize,
    },
    /// Pairs within distance r on [0, 1]^d, d <= 2.
    PairCount { d: usize, r: f64 },
    /// s^{-1/2} I_1(f) on [0, 1]^d; kernels are "const" or "cos<k>".
    WienerIto {
        #[serde(default = "one")]
        d: usize,
        kernels: Vec<String>,
    },
    CompoundSum {
        m: usize,
        marks: MarkKind,
        #[serde(default = "unit")]
        a: f64,
    },
    IsolatedCount { theta: f64 },
    /// Intrinsic volumes of the disk Boolean model in [0, L]^2.
    Boolean { r_min: f64, r_max: f64, intensity: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum MarkKind {
    Rademacher,
    Uniform,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaSource {
    /// Analytic when the model has one, estimated otherwise.
    #[default]
    Auto,
    Analytic,
    Estimated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default)]
    pub sigma: SigmaSource,
    #[serde(default = "default_n_cov")]
    pub n_cov: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig { sigma: SigmaSource::Auto, n_cov: default_n_cov() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default = "default_n_outer")]
    pub n_outer: usize,
    #[serde(default = "default_n_inner")]
    pub n_inner: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { n_outer: default_n_outer(), n_inner: default_n_inner(), n_samples: default_n_samples() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    #[serde(default = "default_distance_metrics")]
    pub metrics: Vec<String>,
    pub n_starts: Option<usize>,
    pub n_refine: Option<usize>,
    pub n_perturb: Option<usize>,
    pub n_gauss: Option<usize>,
    pub n_screen: Option<usize>,
    pub grid: Option<usize>,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            metrics: default_distance_metrics(),
            n_starts: None,
            n_refine: None,
            n_perturb: None,
            n_gauss: None,
            n_screen: None,
            grid: None,
        }
    }
}

impl DistanceConfig {
    pub fn budget(&self, seed: u64) -> SearchBudget {
        let d = SearchBudget::default();
        SearchBudget {
            n_starts: self.n_starts.unwrap_or(d.n_starts),
            n_refine: self.n_refine.unwrap_or(d.n_refine),
            n_perturb: self.n_perturb.unwrap_or(d.n_perturb),
            n_gauss: self.n_gauss.unwrap_or(d.n_gauss),
            n_screen: self.n_screen.unwrap_or(d.n_screen),
            grid: self.grid.unwrap_or(d.grid),
            seed,
            calibrate_null: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "default_bound_metrics")]
    pub metrics: Vec<String>,
    pub marked: Option<MarkedConfig>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig { metrics: default_bound_metrics(), marked: None }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkedConfig {
    pub c: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinCheckConfig {
    #[serde(default = "default_t")]
    pub t: f64,
    /// Half-space order of the smoothing and second-moment checks.
    #[serde(default = "one")]
    pub l: usize,
    #[serde(default = "default_stein_inner")]
    pub n_inner: usize,
    /// Sample rows used for the left side of the second-moment check.
    #[serde(default = "default_lhs_points")]
    pub lhs_points: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_n_inverse")]
    pub n_inverse: usize,
}

impl Default for SteinCheckConfig {
    fn default() -> Self {
        SteinCheckConfig {
            t: default_t(),
            l: 1,
            n_inner: default_stein_inner(),
            lhs_points: default_lhs_points(),
            alpha: default_alpha(),
            n_inverse: default_n_inverse(),
        }
    }
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_n_cov() -> usize {
    20_000
}
fn default_n_outer() -> usize {
    200
}
fn default_n_inner() -> usize {
    50
}
fn default_n_samples() -> usize {
    100_000
}
fn default_distance_metrics() -> Vec<String> {
    vec!["dH1".into()]
}
fn default_bound_metrics() -> Vec<String> {
    vec!["d3".into(), "d2".into(), "dH1".into()]
}
fn default_t() -> f64 {
    0.3
}
fn default_stein_inner() -> usize {
    20_000
}
fn default_lhs_points() -> usize {
    500
}
fn default_alpha() -> f64 {
    0.5
}
fn default_n_inverse() -> usize {
    200_000
}

/// Distance metric named in a config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceMetric {
    Kolmogorov,
    Halfspaces(usize),
    Convex,
}

/// "dH<l>" -> l
fn parse_hl(s: &str) -> Option<usize> {
    s.strip_prefix("dH").and_then(|l| l.parse().ok()).filter(|l| *l >= 1)
}

pub fn parse_distance_metric(s: &str) -> Result<DistanceMetric, String> {
    match s {
        "dK" => Ok(DistanceMetric::Kolmogorov),
        "dconvex" => Ok(DistanceMetric::Convex),
        _ => parse_hl(s).map(DistanceMetric::Halfspaces).ok_or_else(|| format!("unknown distance metric `{s}`")),
    }
}

pub fn parse_bound_metric(s: &str) -> Result<Metric, String> {
    match s {
        "d3" => Ok(Metric::D3),
        "d2" => Ok(Metric::D2),
        "dconvex" => Ok(Metric::Convex),
        _ => parse_hl(s).map(Metric::Hl).ok_or_else(|| format!("unknown bound metric `{s}`")),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.scales.is_empty() {
            return Err("`scales` must list at least one scale".into());
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err("scales must be finite and positive".into());
        }
        if self.plan.n_outer < 2 || self.plan.n_inner < 2 || self.plan.n_samples < 3 || self.target.n_cov < 3 {
            return Err("need n_outer, n_inner >= 2 and n_samples, n_cov >= 3".into());
        }
        for m in &self.distances.metrics {
            let d = parse_distance_metric(m)?;
            if d == DistanceMetric::Kolmogorov && self.output_dim() != 1 {
                return Err("dK needs a one-dimensional model".into());
            }
        }
        for m in &self.bounds.metrics {
            parse_bound_metric(m)?;
        }
        match &self.model {
            ModelConfig::Count { d } | ModelConfig::WienerIto { d, .. } if *d == 0 => {
                return Err("model dimension d must be >= 1".into());
            }
            ModelConfig::PairCount { d, r } if !(1..=2).contains(d) || !(*r > 0.0 && *r <= 1.0) => {
                return Err("pair-count needs d in {1, 2} and r in (0, 1]".into());
            }
            ModelConfig::WienerIto { kernels, .. } => {
                if kernels.is_empty() {
                    return Err("wiener-ito needs at least one kernel".into());
                }
                for k in kernels {
                    parse_kernel(k)?;
                }
            }
            ModelConfig::CompoundSum { m, a, .. } if *m == 0 || !(*a > 0.0) => {
                return Err("compound-sum needs m >= 1 and a > 0".into());
            }
            ModelConfig::IsolatedCount { theta } if !(*theta > 0.0) => {
                return Err("isolated-count needs theta > 0".into());
            }
            ModelConfig::Boolean { r_min, r_max, intensity } if !(*r_min > 0.0 && r_max >= r_min && *intensity > 0.0) => {
                return Err("boolean needs 0 < r_min <= r_max and intensity > 0".into());
            }
            _ => {}
        }
        if self.target.sigma == SigmaSource::Analytic && !self.has_analytic_sigma() {
            return Err("sigma = \"analytic\" is not available for this model; use \"estimated\"".into());
        }
        let st = &self.stein;
        if !(st.t > 0.0 && st.t < 1.0) || !(st.alpha > 0.0 && st.alpha < 1.0) || st.l == 0 {
            return Err("stein needs t, alpha in (0, 1) and l >= 1".into());
        }
        if let Some(mk) = self.bounds.marked {
            if !(mk.c > 0.0 && mk.p > 0.0) {
                return Err("marked bounds need c > 0 and p > 0".into());
            }
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        match &self.model {
            ModelConfig::Count { .. } | ModelConfig::PairCount { .. } => 1,
            ModelConfig::WienerIto { kernels, .. } => kernels.len(),
            ModelConfig::CompoundSum { m, .. } => *m,
            ModelConfig::IsolatedCount { .. } => 2,
            ModelConfig::Boolean { .. } => 3,
        }
    }

    pub fn has_analytic_sigma(&self) -> bool {
        matches!(self.model, ModelConfig::Count { .. } | ModelConfig::WienerIto { .. } | ModelConfig::CompoundSum { .. })
    }
}

/// "const" -> None, "cos<k>" -> Some(k)
pub fn parse_kernel(s: &str) -> Result<Option<f64>, String> {
    if s == "const" {
        return Ok(None);
    }
    s.strip_prefix("cos")
        .and_then(|k| k.parse::<f64>().ok())
        .map(Some)
        .ok_or_else(|| format!("unknown kernel `{s}` (expected \"const\" or \"cos<k>\")"))
}
