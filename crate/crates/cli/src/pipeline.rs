//! Per-scale experiment stages with in-memory caching. Every artifact is
//! written once, when first computed, so each subcommand writes exactly the
//! files its stage depends on.

use crate::config::{
    parse_bound_metric, parse_distance_metric, parse_kernel, DistanceMetric, ExperimentConfig, MarkKind, ModelConfig,
    SigmaSource,
};
use mvpoincare::bounds::{
    bound_d2, bound_d3, bound_dconvex, bound_dhl, bound_marked, bounds_to_csv, compound_sum_bounds, rate_slope,
    BoundReport, ConvexInputs, MarkMoments, Metric,
};
use mvpoincare::boolean::BooleanModel2D;
use mvpoincare::distance::{estimate_dconvex, estimate_dhl, estimate_dk, ConvexCatalog, DistanceEstimate, Samples};
use mvpoincare::gamma::{estimate_big_gammas, estimate_covariance, estimate_gammas, GammaReport, NestedMcPlan};
use mvpoincare::model::CarrierSpace;
use mvpoincare::report::{checks_to_csv, CheckRow};
use mvpoincare::sampler::{simulate_functional, splitmix64};
use mvpoincare::stein::{
    check_inverse_distance, check_second_moment, check_smoothing_lemmas, check_stripe, standard_convex_catalog,
    SteinConfig, TestClass,
};
use mvpoincare::zoo::{CompoundSumModel, CountModel, IsolatedCountModel, Kernel, PairCountModel, WienerItoModel};
use mvpoincare::{FunctionalModel, GaussianTarget, Mat, PoissonSpace};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Errors carry the exit code they map to.
#[derive(Debug)]
pub enum RunError {
    /// Bad configuration or input files: exit 2.
    Input(String),
    /// Estimation or I/O failure: exit 1.
    Runtime(String),
}

impl From<mvpoincare::Error> for RunError {
    fn from(e: mvpoincare::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

pub type RunResult<T> = Result<T, RunError>;

// Stage tags mixed into the root seed.
const SIM: u64 = 1;
const TARGET: u64 = 2;
const GAMMA: u64 = 3;
const DIST: u64 = 4;
const STEIN: u64 = 5;
const RATE: u64 = 6;
const MARKED: u64 = 7;

// Slack for the 2^-36 grid rounding of linear functionals.
const GRID_SLACK: f64 = 1.0 / (1u64 << 36) as f64;

pub struct Built {
    pub f: Box<dyn FunctionalModel>,
    pub space: PoissonSpace,
    pub sigma: Option<Mat>,
    /// Almost-sure bound on max_i |D_x F_i|.
    pub rho: Option<f64>,
    pub marks: Option<MarkMoments>,
    /// Whether `mean_vector` is the exact mean.
    pub exact_mean: bool,
}

pub fn build_model(model: &ModelConfig, scale: f64) -> RunResult<Built> {
    let s = scale;
    let b = match model {
        ModelConfig::Count { d } => {
            let f = CountModel::standardized(PoissonSpace::unmarked(CarrierSpace::unit_cube(*d, s)));
            Built {
                space: f.space.clone(),
                f: Box::new(f),
                sigma: Some(Mat::identity(1)),
                rho: Some(1.0 / s.sqrt()),
                marks: None,
                exact_mean: true,
            }
        }
        ModelConfig::PairCount { d, r } => {
            let f = PairCountModel::new(s, *d, *r)?;
            Built { space: f.space.clone(), f: Box::new(f), sigma: None, rho: None, marks: None, exact_mean: true }
        }
        ModelConfig::WienerIto { d, kernels } => {
            let ks = kernels
                .iter()
                .map(|k| match parse_kernel(k).map_err(RunError::Input)? {
                    None => Ok(Kernel::constant(1.0)),
                    Some(freq) => Ok(Kernel::cosine(freq)),
                })
                .collect::<RunResult<Vec<_>>>()?;
            let f = WienerItoModel::new(ks, CarrierSpace::unit_cube(*d, s), 1.0 / s.sqrt())?;
            Built {
                space: f.space(),
                sigma: Some(f.covariance().clone()),
                f: Box::new(f),
                rho: Some(1.0 / s.sqrt() + GRID_SLACK),
                marks: None,
                exact_mean: true,
            }
        }
        ModelConfig::CompoundSum { m, marks, a } => {
            let (f, mm, bound) = match marks {
                MarkKind::Rademacher => (CompoundSumModel::rademacher(*m, s), MarkMoments::rademacher(*m), 1.0),
                MarkKind::Uniform => (CompoundSumModel::uniform(*m, s, *a), MarkMoments::uniform(*m, *a), *a),
            };
            Built {
                space: f.space(),
                sigma: f.second_moment.clone(),
                f: Box::new(f),
                rho: Some(bound / s.sqrt() + GRID_SLACK),
                marks: Some(mm),
                exact_mean: true,
            }
        }
        ModelConfig::IsolatedCount { theta } => {
            let f = IsolatedCountModel::new(s, *theta)?;
            Built { space: f.space(), f: Box::new(f), sigma: None, rho: None, marks: None, exact_mean: true }
        }
        ModelConfig::Boolean { r_min, r_max, intensity } => {
            let f = BooleanModel2D::new(s, *r_min, *r_max, *intensity)?;
            Built { space: f.space(), f: Box::new(f), sigma: None, rho: None, marks: None, exact_mean: false }
        }
    };
    Ok(b)
}

/// Witness record written next to the samples it was found on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessFile {
    pub metric: String,
    pub value: f64,
    pub witness: String,
    pub n_gauss: usize,
    /// Decimal string: TOML integers are signed 64-bit.
    pub gauss_seed: String,
    pub sigma: Vec<Vec<f64>>,
    /// Samples CSV, relative to the witness file.
    pub samples: String,
}

#[derive(Default)]
struct ScaleCache {
    built: Option<Built>,
    samples: Option<Samples>,
    target: Option<(GaussianTarget, &'static str)>,
    gammas: Option<GammaReport>,
    bounds: Option<Vec<BoundReport>>,
    distances: Option<Vec<(String, DistanceEstimate)>>,
    stein: Option<Vec<CheckRow>>,
}

/// One row of summary.csv.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub stage: &'static str,
    pub scale: String,
    pub item: String,
    pub value: f64,
    pub pass: bool,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    cache: Vec<ScaleCache>,
    pub summary: Vec<SummaryRow>,
}

fn scale_tag(model: &ModelConfig, scale: f64) -> String {
    match model {
        ModelConfig::Boolean { .. } => format!("L{scale}"),
        _ => format!("s{scale}"),
    }
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, out: PathBuf) -> RunResult<Self> {
        std::fs::create_dir_all(&out)?;
        let cache = cfg.scales.iter().map(|_| ScaleCache::default()).collect();
        Ok(Pipeline { cfg, out, cache, summary: Vec::new() })
    }

    pub fn n_scales(&self) -> usize {
        self.cfg.scales.len()
    }

    fn seed(&self, stage: u64, k: usize) -> u64 {
        splitmix64(self.cfg.seed ^ splitmix64((stage << 32) | k as u64))
    }

    fn tag(&self, k: usize) -> String {
        scale_tag(&self.cfg.model, self.cfg.scales[k])
    }

    /// Scale used in rate fits: s, or V2(W) = L^2 for the Boolean model.
    fn rate_scale(&self, k: usize) -> f64 {
        let s = self.cfg.scales[k];
        match self.cfg.model {
            ModelConfig::Boolean { .. } => s * s,
            _ => s,
        }
    }

    fn write(&self, name: &str, text: &str) -> RunResult<()> {
        std::fs::write(self.out.join(name), text)?;
        Ok(())
    }

    fn built(&mut self, k: usize) -> RunResult<&Built> {
        if self.cache[k].built.is_none() {
            self.cache[k].built = Some(build_model(&self.cfg.model, self.cfg.scales[k])?);
        }
        Ok(self.cache[k].built.as_ref().expect("built"))
    }

    fn plan(&self, k: usize) -> RunResult<NestedMcPlan> {
        Ok(NestedMcPlan::new(self.cfg.plan.n_outer, self.cfg.plan.n_inner, self.seed(GAMMA, k))?)
    }

    /// Centred samples of F; written to samples_<tag>.csv.
    pub fn samples(&mut self, k: usize) -> RunResult<&Samples> {
        if self.cache[k].samples.is_none() {
            let n = self.cfg.plan.n_samples;
            let seed = self.seed(SIM, k);
            let b = self.built(k)?;
            let mut rows = simulate_functional(b.f.as_ref(), &b.space, n, seed)?;
            let m = b.f.output_dim();
            let mean: Vec<f64> = if b.exact_mean {
                b.f.mean_vector()
            } else {
                (0..m).map(|i| mvpoincare::stats::mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect()
            };
            for r in rows.iter_mut() {
                for (v, mu) in r.iter_mut().zip(&mean) {
                    *v -= mu;
                }
            }
            let samples = Samples::from_rows(&rows)?;
            write_samples(&self.out.join(format!("samples_{}.csv", self.tag(k))), &samples)?;
            self.cache[k].samples = Some(samples);
        }
        Ok(self.cache[k].samples.as_ref().expect("samples"))
    }

    /// The Gaussian target; written to target_<tag>.csv.
    pub fn target(&mut self, k: usize) -> RunResult<GaussianTarget> {
        if self.cache[k].target.is_none() {
            let source = self.cfg.target.sigma;
            let n_cov = self.cfg.target.n_cov;
            let seed = self.seed(TARGET, k);
            let b = self.built(k)?;
            let (sigma, label) = match (source, &b.sigma) {
                (SigmaSource::Auto | SigmaSource::Analytic, Some(s)) => (s.clone(), "analytic"),
                (SigmaSource::Analytic, None) => {
                    return Err(RunError::Input("no analytic covariance for this model".into()));
                }
                _ => (estimate_covariance(b.f.as_ref(), &b.space, n_cov, seed)?.matrix, "estimated"),
            };
            let target = GaussianTarget::new(sigma)?;
            let mut csv = String::from("i,j,sigma,source\n");
            for (i, row) in target.sigma.rows().iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let _ = writeln!(csv, "{i},{j},{v:?},{label}");
                }
            }
            self.write(&format!("target_{}.csv", self.tag(k)), &csv)?;
            self.cache[k].target = Some((target, label));
        }
        Ok(self.cache[k].target.as_ref().expect("target").0.clone())
    }

    /// Gamma ingredients; written to gammas_<tag>.csv.
    pub fn gammas(&mut self, k: usize) -> RunResult<&GammaReport> {
        if self.cache[k].gammas.is_none() {
            let target = self.target(k)?;
            let plan = self.plan(k)?;
            let n_cov = self.cfg.target.n_cov;
            let b = self.built(k)?;
            let r = estimate_gammas(b.f.as_ref(), &b.space, &target.sigma, &plan, n_cov)?;
            self.write(&format!("gammas_{}.csv", self.tag(k)), &r.to_csv())?;
            let scale = self.tag(k);
            for t in r.terms() {
                self.summary.push(SummaryRow {
                    stage: "gammas",
                    scale: scale.clone(),
                    item: format!("{}_stable", t.name),
                    value: t.value,
                    pass: !t.unstable,
                });
            }
            self.cache[k].gammas = Some(r);
        }
        Ok(self.cache[k].gammas.as_ref().expect("gammas"))
    }

    /// Bounds for every configured metric; written to bounds_<tag>.csv.
    pub fn bounds(&mut self, k: usize) -> RunResult<&[BoundReport]> {
        if self.cache[k].bounds.is_none() {
            let target = self.target(k)?;
            let g = self.gammas(k)?.clone();
            let metrics: Vec<Metric> =
                self.cfg.bounds.metrics.iter().map(|m| parse_bound_metric(m).map_err(RunError::Input)).collect::<RunResult<_>>()?;
            let marked = self.cfg.bounds.marked;
            let marked_plan = NestedMcPlan::new(self.cfg.plan.n_outer, self.cfg.plan.n_inner, self.seed(MARKED, k))?;
            let scale = self.cfg.scales[k];
            let tag = self.tag(k);
            let b = self.built(k)?;
            let convex = b.rho.map(|rho| ConvexInputs { rho: Some(rho), lambda_a: b.space.total_mass(), tail: 0.0 });
            let pd = target.is_positive_definite();
            let mut reports = Vec::new();
            let mut notes = Vec::new();
            for metric in &metrics {
                let r = match metric {
                    Metric::D3 => Some(bound_d3(&g, &target)?),
                    Metric::D2 if pd => Some(bound_d2(&g, &target)?),
                    Metric::Hl(l) if pd => Some(bound_dhl(&g, &target, *l)?),
                    Metric::Convex if pd => match &convex {
                        Some(c) => Some(bound_dconvex(&g, &target, c)?),
                        None => {
                            notes.push(format!("{metric}: skipped, no almost-sure bound on the differences"));
                            None
                        }
                    },
                    _ => {
                        notes.push(format!("{metric}: skipped, covariance is singular"));
                        None
                    }
                };
                reports.extend(r);
            }
            if let (Some(mm), true) = (b.marks, pd) {
                let l = metrics.iter().find_map(|m| if let Metric::Hl(l) = m { Some(*l) } else { None }).unwrap_or(1);
                reports.extend(compound_sum_bounds(&mm, &target, scale, l)?);
            }
            if let (Some(mk), true) = (marked, pd) {
                let big = estimate_big_gammas(b.f.as_ref(), &b.space, mk.c, mk.p, &marked_plan)?;
                let disc = (g.cov_discrepancy.value, g.cov_discrepancy.std_error);
                for metric in &metrics {
                    if matches!(metric, Metric::Hl(_) | Metric::Convex) && mk.p <= 2.0 {
                        notes.push(format!("marked {metric}: skipped, needs p > 2"));
                        continue;
                    }
                    if *metric == Metric::Convex && convex.is_none() {
                        continue;
                    }
                    reports.push(bound_marked(&big, &target, disc, *metric, convex.as_ref())?);
                }
            }
            let mut csv = bounds_to_csv(&reports);
            for n in &notes {
                let _ = writeln!(csv, "# {n}");
            }
            self.write(&format!("bounds_{tag}.csv"), &csv)?;
            self.cache[k].bounds = Some(reports);
        }
        Ok(self.cache[k].bounds.as_deref().expect("bounds"))
    }

    /// Distance estimates; written to distances_<tag>.csv plus one witness
    /// file per metric.
    pub fn distances(&mut self, k: usize) -> RunResult<&[(String, DistanceEstimate)]> {
        if self.cache[k].distances.is_none() {
            let target = self.target(k)?;
            let budget = self.cfg.distances.budget(self.seed(DIST, k));
            let names = self.cfg.distances.metrics.clone();
            let tag = self.tag(k);
            let samples = self.samples(k)?.clone();
            let m = samples.m;
            let mut out = Vec::new();
            for name in &names {
                let est = match parse_distance_metric(name).map_err(RunError::Input)? {
                    DistanceMetric::Kolmogorov => estimate_dk(&samples.data, &target)?,
                    DistanceMetric::Halfspaces(l) => estimate_dhl(&samples, &target, l, &budget)?,
                    DistanceMetric::Convex => estimate_dconvex(&samples, &target, &ConvexCatalog::standard(m), &budget)?,
                };
                let wf = WitnessFile {
                    metric: name.clone(),
                    value: est.value,
                    witness: est.witness.to_witness(),
                    n_gauss: est.n_gauss,
                    gauss_seed: est.gauss_seed.to_string(),
                    sigma: target.sigma.rows(),
                    samples: format!("samples_{tag}.csv"),
                };
                let text = toml::to_string(&wf).map_err(|e| RunError::Runtime(e.to_string()))?;
                self.write(&format!("witness_{tag}_{name}.toml"), &text)?;
                out.push((name.clone(), est));
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "metric",
                "value",
                "empirical",
                "gaussian",
                "gaussian_se",
                "n_samples",
                "n_gauss",
                "gauss_seed",
                "witness",
            ])?;
            for (name, e) in &out {
                w.write_record([
                    name.clone(),
                    format!("{:?}", e.value),
                    format!("{:?}", e.empirical),
                    format!("{:?}", e.gaussian),
                    format!("{:?}", e.gaussian_prob_se),
                    e.n_samples.to_string(),
                    e.n_gauss.to_string(),
                    e.gauss_seed.to_string(),
                    e.witness.to_witness(),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| RunError::Runtime(e.to_string()))?;
            std::fs::write(self.out.join(format!("distances_{tag}.csv")), bytes)?;
            self.cache[k].distances = Some(out);
        }
        Ok(self.cache[k].distances.as_deref().expect("distances"))
    }

    /// Smoothing, second-moment, inverse-distance and stripe checks on the
    /// samples; written to stein_<tag>.csv.
    pub fn stein(&mut self, k: usize) -> RunResult<&[CheckRow]> {
        if self.cache[k].stein.is_none() {
            let target = self.target(k)?;
            let seed = self.seed(STEIN, k);
            let st = self.cfg.stein.clone();
            let budget = self.cfg.distances.budget(self.seed(DIST, k));
            let tag = self.tag(k);
            let samples = self.samples(k)?.clone();
            let m = samples.m;
            let catalog = standard_convex_catalog(m);
            let mut rows = Vec::new();
            if target.is_positive_definite() {
                // A fixed well-conditioned map for the affine-invariance check.
                let mut theta = Mat::identity(m);
                for i in 0..m {
                    theta[(i, i)] = 1.0 + 0.5 * i as f64;
                    if i + 1 < m {
                        theta[(i, i + 1)] = 0.3;
                    }
                }
                rows.extend(check_smoothing_lemmas(&samples, &target, st.t, st.l, &catalog, &theta, &budget, seed)?.rows);
                let cfg = SteinConfig { n_inner: st.n_inner, n_nodes: 32, seed };
                let rep = check_second_moment(
                    &samples,
                    &target,
                    st.t,
                    TestClass::Halfspaces(st.l),
                    &catalog,
                    st.lhs_points,
                    cfg,
                    &budget,
                )?;
                rows.push(rep.row);
            }
            rows.push(check_inverse_distance(st.alpha, m, &catalog, st.n_inverse, seed ^ 0x1D)?.row);
            rows.push(check_stripe(st.t.sqrt()));
            self.write(&format!("stein_{tag}.csv"), &checks_to_csv(&rows))?;
            for r in &rows {
                self.summary.push(SummaryRow {
                    stage: "stein-checks",
                    scale: tag.clone(),
                    item: r.check.clone(),
                    value: r.margin(),
                    pass: r.pass,
                });
            }
            self.cache[k].stein = Some(rows);
        }
        Ok(self.cache[k].stein.as_deref().expect("stein"))
    }

    /// Rate fits over the scales for every distance and bound; written to
    /// rates.csv. Needs at least three scales.
    pub fn rates(&mut self, with_bounds: bool) -> RunResult<String> {
        let n = self.n_scales();
        let mut series: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
        for k in 0..n {
            let x = self.rate_scale(k);
            let d: Vec<(String, f64, f64)> = self
                .distances(k)?
                .iter()
                .map(|(name, e)| {
                    let se = (e.empirical * (1.0 - e.empirical) / e.n_samples as f64 + e.gaussian_prob_se.powi(2)).sqrt();
                    (format!("distance_{name}"), e.value, se)
                })
                .collect();
            let mut b: Vec<(String, f64, f64)> = Vec::new();
            if with_bounds {
                for r in self.bounds(k)? {
                    b.push((format!("bound_{}_{}", r.id, r.metric), r.total, 0.0));
                }
            }
            for (name, v, se) in d.into_iter().chain(b) {
                match series.iter_mut().find(|s| s.0 == name) {
                    Some(s) => s.1.push((x, v, se)),
                    None => series.push((name, vec![(x, v, se)])),
                }
            }
        }
        let mut csv = String::from("quantity,slope,intercept,ci_low,ci_high,n_points\n");
        let seed = self.seed(RATE, 0);
        for (i, (name, pts)) in series.iter().enumerate() {
            if pts.len() < 3 || pts.iter().any(|p| p.1 <= 0.0) {
                let _ = writeln!(csv, "# {name}: needs >= 3 scales with positive values");
                continue;
            }
            let fit = rate_slope(pts, 2000, seed.wrapping_add(i as u64))?;
            let _ = writeln!(
                csv,
                "{name},{:?},{:?},{:?},{:?},{}",
                fit.slope, fit.intercept, fit.ci_low, fit.ci_high, fit.n_points
            );
            self.summary.push(SummaryRow { stage: "rates", scale: "all".into(), item: name.clone(), value: fit.slope, pass: true });
        }
        self.write("rates.csv", &csv)?;
        Ok(csv)
    }

    pub fn gamma_instabilities(&self) -> Vec<String> {
        self.summary.iter().filter(|r| r.stage == "gammas" && !r.pass).map(|r| format!("{} {}", r.scale, r.item)).collect()
    }

    pub fn failed_checks(&self) -> Vec<String> {
        self.summary
            .iter()
            .filter(|r| r.stage == "stein-checks" && !r.pass)
            .map(|r| format!("{} {}", r.scale, r.item))
            .collect()
    }

    pub fn write_summary(&self) -> RunResult<()> {
        let mut csv = String::from("stage,scale,item,value,pass\n");
        for r in &self.summary {
            let _ = writeln!(csv, "{},{},{},{:?},{}", r.stage, r.scale, r.item, r.value, r.pass);
        }
        self.write("summary.csv", &csv)
    }
}

pub fn write_samples(path: &Path, s: &Samples) -> RunResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..s.m).map(|i| format!("f{i}")))?;
    for r in 0..s.n {
        w.write_record(s.row(r).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> RunResult<Samples> {
    let bad = |e: String| RunError::Input(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let m = r.headers().map_err(|e| bad(e.to_string()))?.len();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for f in rec.iter() {
            data.push(f.trim().parse::<f64>().map_err(|_| bad(format!("not a number: `{f}`")))?);
        }
    }
    if m == 0 || data.is_empty() {
        return Err(bad("no samples".into()));
    }
    Samples::from_flat(m, data).map_err(|e| bad(e.to_string()))
}
