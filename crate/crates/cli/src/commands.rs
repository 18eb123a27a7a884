//! Subcommand configurations and pipelines.

use std::fs;
use std::path::{Path, PathBuf};

use affine_core::basis::{build_basis, expand, CoefVec, DomainSpec, DEFAULT_QUAD_ORDER};
use affine_core::energy::{affine_energy, EnergyParams, DEFAULT_EPS_ZERO};
use affine_core::galerkin::constants::{estimate_constants, estimate_mu, ConstantsEstimate, MuOptions, RatioRange};
use affine_core::galerkin::{coercive_radius, convergence_study, descend, SolveStatus};
use affine_core::geometry::{search_nonconvexity, search_triangle_violation};
use affine_core::solver::fields::{CoerciveField, IdentityField, LinearField};
use affine_core::solver::{find_zero, Gauge, GaugeBallSpec, NormKind, ZeroOptions};
use affine_core::sphere::{build_circle_rule, DEFAULT_SPHERE_POINTS};
use affine_core::{solve_critical_point, GalerkinProblem, GaugeContext, ProblemSpec, SourceTerm, VectorField};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{resolve, usage};
use crate::output::{num, svg_polyline, RunDir, Table, MANIFEST};

fn d_quad() -> usize {
    DEFAULT_QUAD_ORDER
}
fn d_sphere() -> usize {
    DEFAULT_SPHERE_POINTS
}
fn d_eps() -> f64 {
    DEFAULT_EPS_ZERO
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_formats() -> Vec<String> {
    vec!["json".into(), "csv".into(), "svg".into()]
}

/// Options shared by every subcommand that are not config keys.
#[derive(Args, Debug, Clone, Default)]
pub struct Source {
    /// Config file, JSON or `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A finished run: resolved config and whether all certificates held.
pub struct Finished {
    pub config: Value,
    pub out: PathBuf,
    pub ok: bool,
    pub run: RunDir,
}

fn wants(formats: &[String], kind: &str) -> bool {
    formats.iter().any(|f| f == kind)
}

fn check_formats(formats: &[String]) -> anyhow::Result<()> {
    for f in formats {
        if !matches!(f.as_str(), "json" | "csv" | "svg") {
            return Err(usage(format!("unknown format {f:?}; expected json, csv or svg")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- energy

#[derive(Args, Debug, Serialize)]
#[command(rename_all = "snake_case")]
pub struct EnergyFlags {
    #[command(flatten)]
    #[serde(skip)]
    pub source: Source,
    /// Integrability exponent p > 1.
    #[arg(long)]
    pub p: Option<f64>,
    /// Galerkin dimension.
    #[arg(long)]
    pub m: Option<usize>,
    /// Coefficients of u; defaults to the first basis function.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coef: Option<Vec<f64>>,
    /// Gauss–Legendre points per axis.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Trapezoid nodes on the unit circle.
    #[arg(long)]
    pub sphere_points: Option<usize>,
    #[arg(long)]
    pub eps_zero: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subset of json, csv, svg.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub p: f64,
    pub m: usize,
    #[serde(default)]
    pub coef: Option<Vec<f64>>,
    #[serde(default = "d_quad")]
    pub quad_order: usize,
    #[serde(default = "d_sphere")]
    pub sphere_points: usize,
    #[serde(default = "d_eps")]
    pub eps_zero: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    #[serde(default = "d_formats")]
    pub formats: Vec<String>,
}

#[derive(Serialize)]
struct EnergyReport {
    m: usize,
    p: f64,
    coef: Vec<f64>,
    energy: f64,
    energy_p: f64,
    grad_norm: f64,
    ratio_to_grad_norm: f64,
    dir_norm_min: f64,
    dir_norm_max: f64,
}

pub fn energy(flags: &EnergyFlags) -> anyhow::Result<Finished> {
    let cfg: EnergyConfig = resolve(flags.source.config.as_deref(), flags)?;
    check_formats(&cfg.formats)?;
    let basis = build_basis(cfg.m, DomainSpec::unit_square(cfg.quad_order)?)?;
    let rule = build_circle_rule(cfg.sphere_points)?;
    let params = EnergyParams::with_eps(cfg.p, cfg.eps_zero)?;
    let coef = match &cfg.coef {
        Some(c) if c.len() != cfg.m => {
            return Err(usage(format!("coef has {} entries but m = {}", c.len(), cfg.m)));
        }
        Some(c) => CoefVec(c.clone()),
        None => CoefVec::unit(cfg.m, 0),
    };
    let field = expand(&coef, &basis)?;
    let b = affine_energy(&field, &rule, &params)?;
    let report = EnergyReport {
        m: cfg.m,
        p: cfg.p,
        coef: coef.0.clone(),
        energy: b.energy,
        energy_p: b.energy.powf(cfg.p),
        grad_norm: b.grad_norm,
        ratio_to_grad_norm: if b.grad_norm > 0.0 { b.energy / b.grad_norm } else { 0.0 },
        dir_norm_min: b.dir_norms.iter().copied().fold(f64::INFINITY, f64::min),
        dir_norm_max: b.dir_norms.iter().copied().fold(0.0, f64::max),
    };
    let mut run = RunDir::create(&cfg.out)?;
    if wants(&cfg.formats, "json") {
        run.write_json("energy.json", &report)?;
    }
    if wants(&cfg.formats, "csv") {
        let mut t = Table::new(&[("theta", "rad"), ("dir_norm", "L^p norm of directional derivative")]);
        for (th, d) in rule.thetas.iter().zip(&b.dir_norms) {
            t.push(vec![num(*th), num(*d)]);
        }
        run.write("directions.csv", t.render().as_bytes())?;
    }
    Ok(Finished {
        config: serde_json::to_value(&cfg)?,
        out: cfg.out,
        ok: true,
        run,
    })
}

// ---------------------------------------------------------------- geometry

#[derive(Args, Debug, Serialize)]
#[command(rename_all = "snake_case")]
pub struct GeometryFlags {
    #[command(flatten)]
    #[serde(skip)]
    pub source: Source,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Objective evaluations per search.
    #[arg(long)]
    pub budget: Option<usize>,
    /// `triangle`, `nonconvexity` or `both`.
    #[arg(long)]
    pub kind: Option<String>,
    /// Gauss–Legendre points per axis.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Trapezoid nodes on the unit circle.
    #[arg(long)]
    pub sphere_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subset of json, csv, svg.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
}

fn d_budget() -> usize {
    10_000
}
fn d_kind() -> String {
    "both".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub p: f64,
    pub m: usize,
    #[serde(default = "d_budget")]
    pub budget: usize,
    #[serde(default = "d_kind")]
    pub kind: String,
    #[serde(default = "d_quad")]
    pub quad_order: usize,
    #[serde(default = "d_sphere")]
    pub sphere_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    #[serde(default = "d_formats")]
    pub formats: Vec<String>,
}

pub fn geometry(flags: &GeometryFlags) -> anyhow::Result<Finished> {
    let cfg: GeometryConfig = resolve(flags.source.config.as_deref(), flags)?;
    check_formats(&cfg.formats)?;
    let (tri, nc) = match cfg.kind.as_str() {
        "both" => (true, true),
        "triangle" => (true, false),
        "nonconvexity" => (false, true),
        k => return Err(usage(format!("unknown kind {k:?}; expected triangle, nonconvexity or both"))),
    };
    let ctx = GaugeContext::build(cfg.m, cfg.p, DomainSpec::unit_square(cfg.quad_order)?, cfg.sphere_points)?;
    let mut found = Vec::new();
    let mut ok = true;
    let mut table = Table::new(&[("kind", "-"), ("found", "bool"), ("margin", "1"), ("seed", "-")]);
    for (enabled, label) in [(tri, "triangle_violation"), (nc, "nonconvexity")] {
        if !enabled {
            continue;
        }
        let w = if label == "triangle_violation" {
            search_triangle_violation(&ctx, cfg.seed, cfg.budget)?
        } else {
            search_nonconvexity(&ctx, cfg.seed, cfg.budget)?
        };
        match w {
            Some(w) => {
                table.push(vec![label.into(), "true".into(), num(w.margin), w.seed.to_string()]);
                found.push(w);
            }
            None => {
                ok = false;
                table.push(vec![label.into(), "false".into(), "nan".into(), cfg.seed.to_string()]);
            }
        }
    }
    let mut run = RunDir::create(&cfg.out)?;
    if wants(&cfg.formats, "json") {
        run.write_json("witnesses.json", &found)?;
    }
    if wants(&cfg.formats, "csv") {
        run.write("witnesses.csv", table.render().as_bytes())?;
    }
    Ok(Finished {
        config: serde_json::to_value(&cfg)?,
        out: cfg.out,
        ok,
        run,
    })
}

// ---------------------------------------------------------------- fixedpoint

#[derive(Args, Debug, Serialize)]
#[command(rename_all = "snake_case")]
pub struct FixedPointFlags {
    #[command(flatten)]
    #[serde(skip)]
    pub source: Source,
    /// `identity`, `linear`, `galerkin` or `random_coercive`.
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    /// `affine`, `euclidean`, `max` or `l1`.
    #[arg(long)]
    pub gauge: Option<String>,
    /// Ball radius; derived from the field when absent.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub multistarts: Option<usize>,
    #[arg(long)]
    pub boundary_samples: Option<usize>,
    /// Exponent of the affine gauge and of the `galerkin` field.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Source term of the `galerkin` field, e.g. `const:1`.
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<String>,
    /// Euclidean length of the known zero of the `linear` field.
    #[arg(long)]
    pub target_norm: Option<f64>,
    /// Gauss–Legendre points per axis.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Trapezoid nodes on the unit circle.
    #[arg(long)]
    pub sphere_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subset of json, csv, svg.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
}

fn d_gauge() -> String {
    "euclidean".into()
}
fn d_tol() -> f64 {
    1e-8
}
fn d_multistarts() -> usize {
    16
}
fn d_boundary() -> usize {
    200
}
fn d_p() -> f64 {
    2.0
}
fn d_alpha() -> f64 {
    1.5
}
fn d_source() -> String {
    "const:1".into()
}
fn d_target() -> f64 {
    0.5
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    pub field: String,
    pub m: usize,
    #[serde(default = "d_gauge")]
    pub gauge: String,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_multistarts")]
    pub multistarts: usize,
    #[serde(default = "d_boundary")]
    pub boundary_samples: usize,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_source")]
    pub f: String,
    #[serde(default = "d_target")]
    pub target_norm: f64,
    #[serde(default = "d_quad")]
    pub quad_order: usize,
    #[serde(default = "d_sphere")]
    pub sphere_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    #[serde(default = "d_formats")]
    pub formats: Vec<String>,
}

#[derive(Serialize)]
struct FixedPointReport {
    field: String,
    gauge: String,
    m: usize,
    rho: f64,
    converged: bool,
    error: Option<String>,
    /// `|z − z_expected|_∞` when the field has a known zero.
    expected_zero_error: Option<f64>,
    result: Option<affine_core::solver::ZeroResult>,
}

pub fn fixedpoint(flags: &FixedPointFlags) -> anyhow::Result<Finished> {
    let cfg: FixedPointConfig = resolve(flags.source.config.as_deref(), flags)?;
    check_formats(&cfg.formats)?;
    if cfg.m == 0 {
        return Err(usage("m must be at least 1"));
    }
    let domain = DomainSpec::unit_square(cfg.quad_order)?;
    let gauge = match cfg.gauge.as_str() {
        "affine" => Gauge::AffineFloor(GaugeContext::build(cfg.m, cfg.p, domain, cfg.sphere_points)?),
        "euclidean" => Gauge::Norm(NormKind::Euclidean),
        "max" => Gauge::Norm(NormKind::Max),
        "l1" => Gauge::Norm(NormKind::L1),
        g => return Err(usage(format!("unknown gauge {g:?}; expected affine, euclidean, max or l1"))),
    };
    let bound = gauge.euclidean_bound(cfg.m)?;
    let mut opts = ZeroOptions {
        tol: cfg.tol,
        multistarts: cfg.multistarts,
        seed: cfg.seed,
        boundary_samples: Some(cfg.boundary_samples),
        ..ZeroOptions::default()
    };
    let center = CoefVec::zeros(cfg.m);
    let (field, rho): (Box<dyn VectorField>, f64) = match cfg.field.as_str() {
        "identity" => (Box::new(IdentityField { m: cfg.m }), cfg.rho.unwrap_or(1.0)),
        "linear" => {
            let f = LinearField::random_spd(cfg.m, cfg.seed, cfg.target_norm);
            // A ⪰ I, so ⟨Az − b, z⟩ ≥ 0 once |z|₂ ≥ |b|₂
            let rho = cfg.rho.unwrap_or(1.5 * bound * f.b.norm());
            (Box::new(f), rho)
        }
        "random_coercive" => {
            let f = CoerciveField::random(cfg.m, cfg.seed, vec![0.0; cfg.m]);
            let rho = cfg.rho.unwrap_or(1.5 * bound * f.outward_radius() + 1e-3);
            (Box::new(f), rho)
        }
        "galerkin" => {
            if !matches!(gauge, Gauge::AffineFloor(_)) {
                return Err(usage("field galerkin needs gauge = affine"));
            }
            let mut spec = ProblemSpec::new(cfg.p, cfg.alpha, SourceTerm::parse(&cfg.f)?, cfg.m);
            spec.quad_order = cfg.quad_order;
            spec.sphere_points = cfg.sphere_points;
            spec.boundary_samples = cfg.boundary_samples;
            let problem = GalerkinProblem::new(spec)?;
            let rho = match cfg.rho {
                Some(r) => r,
                None => {
                    let mu_pp = estimate_mu(&problem.ctx, cfg.p, &MuOptions::default(), cfg.seed)?.value;
                    let mu_pa = estimate_mu(&problem.ctx, cfg.alpha, &MuOptions::default(), cfg.seed)?.value;
                    coercive_radius(&problem, mu_pp, mu_pa, cfg.seed)?.0
                }
            };
            opts.initial = Some(descend(&problem, CoefVec::zeros(cfg.m), 5000, 1e-7)?.0);
            (Box::new(problem), rho)
        }
        f => {
            return Err(usage(format!(
                "unknown field {f:?}; expected identity, linear, galerkin or random_coercive"
            )))
        }
    };
    let ball = GaugeBallSpec::new(gauge, center, rho);
    let (result, error) = match find_zero(field.as_ref(), &ball, &opts) {
        Ok(r) => (Some(r), None),
        Err(e @ (affine_core::Error::NotConverged { .. } | affine_core::Error::BoundaryCondition { .. })) => {
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let expected_zero_error = match (&result, field.expected_zero()) {
        (Some(r), Some(want)) => Some(
            r.z.as_slice()
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let report = FixedPointReport {
        field: cfg.field.clone(),
        gauge: ball.gauge.label().into(),
        m: cfg.m,
        rho,
        converged: result.is_some(),
        error,
        expected_zero_error,
        result,
    };
    let mut run = RunDir::create(&cfg.out)?;
    if wants(&cfg.formats, "json") {
        run.write_json("zero.json", &report)?;
    }
    if wants(&cfg.formats, "csv") {
        if let Some(r) = &report.result {
            let mut t = Table::new(&[("index", "-"), ("z", "coefficient"), ("residual", "field value")]);
            let fz = field.eval(r.z.as_slice())?;
            for (i, (z, f)) in r.z.as_slice().iter().zip(&fz).enumerate() {
                t.push(vec![i.to_string(), num(*z), num(*f)]);
            }
            run.write("zero.csv", t.render().as_bytes())?;
        }
    }
    Ok(Finished {
        config: serde_json::to_value(&cfg)?,
        out: cfg.out,
        ok: report.converged,
        run,
    })
}

// ---------------------------------------------------------------- constants

#[derive(Args, Debug, Serialize)]
#[command(rename_all = "snake_case")]
pub struct ConstantsFlags {
    #[command(flatten)]
    #[serde(skip)]
    pub source: Source,
    #[arg(long)]
    pub p: Option<f64>,
    /// Exponents q of the Poincaré-type constants; defaults to p.
    #[arg(long, value_delimiter = ',')]
    pub q_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
    /// Random coefficient vectors for the ratio extrema.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub multistarts: Option<usize>,
    /// Iterations per descent start.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Gauss–Legendre points per axis.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Trapezoid nodes on the unit circle.
    #[arg(long)]
    pub sphere_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subset of json, csv, svg.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
}

fn d_samples() -> usize {
    500
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub p: f64,
    pub m_list: Vec<usize>,
    #[serde(default)]
    pub q_list: Option<Vec<f64>>,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default)]
    pub multistarts: Option<usize>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "d_quad")]
    pub quad_order: usize,
    #[serde(default = "d_sphere")]
    pub sphere_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    #[serde(default = "d_formats")]
    pub formats: Vec<String>,
}

fn push_range(t: &mut Table, m: usize, name: &str, r: RatioRange) {
    t.push(vec![m.to_string(), name.into(), String::new(), num(r.min), num(r.max)]);
}

pub fn constants(flags: &ConstantsFlags) -> anyhow::Result<Finished> {
    let cfg: ConstantsConfig = resolve(flags.source.config.as_deref(), flags)?;
    check_formats(&cfg.formats)?;
    if cfg.m_list.is_empty() {
        return Err(usage("m_list must not be empty"));
    }
    let qs = cfg.q_list.clone().unwrap_or_else(|| vec![cfg.p]);
    let defaults = MuOptions::default();
    let mu_opts = MuOptions {
        multistarts: cfg.multistarts.unwrap_or(defaults.multistarts),
        budget: cfg.budget.unwrap_or(defaults.budget),
        ..defaults
    };
    let domain = DomainSpec::unit_square(cfg.quad_order)?;
    let mut estimates: Vec<ConstantsEstimate> = Vec::new();
    for &m in &cfg.m_list {
        let ctx = GaugeContext::build(m, cfg.p, domain, cfg.sphere_points)?;
        estimates.push(estimate_constants(&ctx, &qs, cfg.samples, &mu_opts, cfg.seed)?);
    }
    let mut t = Table::new(&[("m", "1"), ("quantity", "-"), ("q", "1"), ("min", "ratio"), ("max", "ratio")]);
    for e in &estimates {
        for mu in &e.mu {
            t.push(vec![e.m.to_string(), "mu".into(), num(mu.q), num(mu.value), num(mu.value)]);
        }
        push_range(&mut t, e.m, "c_m", e.norm_over_euclid);
        push_range(&mut t, e.m, "floor_over_euclid", e.floor_over_euclid);
        push_range(&mut t, e.m, "C", e.energy_over_grad);
        push_range(&mut t, e.m, "D1", e.dir_over_lp);
        push_range(&mut t, e.m, "D2", e.dir_over_grad);
        push_range(&mut t, e.m, "D3", e.energy_over_dir);
    }
    let mut run = RunDir::create(&cfg.out)?;
    if wants(&cfg.formats, "json") {
        run.write_json("constants.json", &estimates)?;
    }
    if wants(&cfg.formats, "csv") {
        run.write("constants.csv", t.render().as_bytes())?;
    }
    let ok = estimates.iter().all(|e| e.all_positive());
    Ok(Finished {
        config: serde_json::to_value(&cfg)?,
        out: cfg.out,
        ok,
        run,
    })
}

// ---------------------------------------------------------------- solve

#[derive(Args, Debug, Serialize)]
#[command(rename_all = "snake_case")]
pub struct SolveFlags {
    #[command(flatten)]
    #[serde(skip)]
    pub source: Source,
    #[arg(long)]
    pub p: Option<f64>,
    /// Exponent of the absorption term, 1 < alpha < p.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Source term: `const:c`, `poly:i,j,c;...` or `sine:j,k,c;...`.
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
    /// Exponent of the L^s differences between consecutive solutions.
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub identity_tol: Option<f64>,
    #[arg(long)]
    pub boundary_samples: Option<usize>,
    #[arg(long)]
    pub mu_pp: Option<f64>,
    #[arg(long)]
    pub mu_palpha: Option<f64>,
    /// Gauss–Legendre points per axis.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Trapezoid nodes on the unit circle.
    #[arg(long)]
    pub sphere_points: Option<usize>,
    #[arg(long)]
    pub eps_zero: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subset of json, csv, svg.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
}

/// A source given as text or, in JSON configs, as a structured term.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceArg {
    Text(String),
    Term(SourceTerm),
}

impl SourceArg {
    fn term(&self) -> anyhow::Result<SourceTerm> {
        match self {
            SourceArg::Text(s) => SourceTerm::parse(s).map_err(|e| usage(e.to_string())),
            SourceArg::Term(t) => Ok(t.clone()),
        }
    }
}

fn d_s() -> f64 {
    2.0
}
fn d_identity_tol() -> f64 {
    1e-6
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub p: f64,
    pub alpha: f64,
    pub f: SourceArg,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub m_list: Option<Vec<usize>>,
    #[serde(default = "d_s")]
    pub s: f64,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_identity_tol")]
    pub identity_tol: f64,
    #[serde(default = "d_boundary")]
    pub boundary_samples: usize,
    #[serde(default)]
    pub mu_pp: Option<f64>,
    #[serde(default)]
    pub mu_palpha: Option<f64>,
    #[serde(default = "d_quad")]
    pub quad_order: usize,
    #[serde(default = "d_sphere")]
    pub sphere_points: usize,
    #[serde(default = "d_eps")]
    pub eps_zero: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    #[serde(default = "d_formats")]
    pub formats: Vec<String>,
}

fn status_label(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Certified => "certified",
        SolveStatus::TrivialAdmissible => "trivial_admissible",
        SolveStatus::CertificateFailure => "certificate_failure",
    }
}

pub fn solve(flags: &SolveFlags) -> anyhow::Result<Finished> {
    let cfg: SolveConfig = resolve(flags.source.config.as_deref(), flags)?;
    check_formats(&cfg.formats)?;
    let m_list = match (&cfg.m, &cfg.m_list) {
        (Some(m), None) => vec![*m],
        (None, Some(list)) => list.clone(),
        _ => return Err(usage("give exactly one of m and m_list")),
    };
    let mut spec = ProblemSpec::new(cfg.p, cfg.alpha, cfg.f.term()?, m_list[0]);
    spec.quad_order = cfg.quad_order;
    spec.sphere_points = cfg.sphere_points;
    spec.eps_zero = cfg.eps_zero;
    spec.tol = cfg.tol;
    spec.identity_tol = cfg.identity_tol;
    spec.boundary_samples = cfg.boundary_samples;
    spec.mu_pp = cfg.mu_pp;
    spec.mu_palpha = cfg.mu_palpha;
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let mut run = RunDir::create(&cfg.out)?;
    let mut sweep = Table::new(&[
        ("m", "1"),
        ("E", "energy"),
        ("E^p", "energy^p"),
        ("phi", "functional value"),
        ("residual", "sup norm"),
        ("identity_gap", "absolute"),
        ("status", "-"),
    ]);
    let (points, ok) = if cfg.m.is_some() {
        let problem = GalerkinProblem::new(spec)?;
        let r = solve_critical_point(&problem, cfg.seed)?;
        sweep.push(vec![
            r.m.to_string(),
            num(r.energy),
            num(r.energy_p),
            num(r.phi_value),
            num(r.residual_sup),
            num(r.identity_gap),
            status_label(r.status).into(),
        ]);
        if wants(&cfg.formats, "json") {
            run.write_json("solve.json", &r)?;
        }
        (vec![(r.m as f64, r.energy_p)], r.status != SolveStatus::CertificateFailure)
    } else {
        let table = convergence_study(&spec, &m_list, cfg.s, cfg.seed).map_err(|e| match e {
            affine_core::Error::InvalidParameter { .. } => usage(e.to_string()),
            e => e.into(),
        })?;
        for r in &table.rows {
            sweep.push(vec![
                r.m.to_string(),
                num(r.energy),
                num(r.energy_p),
                num(r.phi),
                num(r.residual),
                num(r.identity_gap),
                status_label(r.status).into(),
            ]);
        }
        if wants(&cfg.formats, "json") {
            run.write_json("solve.json", &table)?;
        }
        if wants(&cfg.formats, "csv") {
            let mut diffs = Table::new(&[("m_from", "1"), ("m_to", "1"), ("ls_diff", "L^s norm")]);
            for d in &table.differences {
                diffs.push(vec![d.m_from.to_string(), d.m_to.to_string(), num(d.ls_diff)]);
            }
            run.write("cauchy.csv", diffs.render().as_bytes())?;
        }
        let ok = table.rows.iter().all(|r| r.status != SolveStatus::CertificateFailure);
        (table.rows.iter().map(|r| (r.m as f64, r.energy_p)).collect(), ok)
    };
    if wants(&cfg.formats, "csv") {
        run.write("sweep.csv", sweep.render().as_bytes())?;
    }
    if wants(&cfg.formats, "svg") {
        run.write("energy_p.svg", svg_polyline(&points, "m", "E^p").as_bytes())?;
    }
    Ok(Finished {
        config: serde_json::to_value(&cfg)?,
        out: cfg.out,
        ok,
        run,
    })
}

// ---------------------------------------------------------------- report

#[derive(Args, Debug, Serialize)]
#[command(rename_all = "snake_case")]
pub struct ReportFlags {
    #[command(flatten)]
    #[serde(skip)]
    pub source: Source,
    /// Run directories to aggregate.
    #[arg(long, value_delimiter = ',')]
    pub runs: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub runs: Vec<PathBuf>,
    #[serde(default = "d_out")]
    pub out: PathBuf,
}

/// Scalar leaves of `v` with dotted paths; arrays are skipped except for
/// arrays of objects, which are indexed.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&key(k), child, out);
            }
        }
        Value::Array(items) if items.iter().all(Value::is_object) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), child, out);
            }
        }
        Value::Array(_) => {}
        Value::Null => out.push((prefix.to_string(), "null".into())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
    }
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn report(flags: &ReportFlags) -> anyhow::Result<Finished> {
    let cfg: ReportConfig = resolve(flags.source.config.as_deref(), flags)?;
    if cfg.runs.is_empty() {
        return Err(usage("runs must not be empty"));
    }
    let mut t = Table::new(&[("run", "path"), ("command", "-"), ("file", "-"), ("key", "-"), ("value", "as recorded")]);
    for dir in &cfg.runs {
        let manifest = read_json(&dir.join(MANIFEST))?;
        let command = manifest["command"].as_str().unwrap_or("unknown").to_string();
        let run_name = dir.display().to_string();
        let mut rows = Vec::new();
        flatten("", &manifest["config"], &mut rows);
        for (k, v) in rows {
            t.push(vec![run_name.clone(), command.clone(), MANIFEST.into(), format!("config.{k}"), v]);
        }
        let mut files: Vec<String> = manifest["outputs"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .unwrap_or_default();
        files.retain(|f| f.ends_with(".json"));
        files.sort();
        for file in files {
            let mut rows = Vec::new();
            flatten("", &read_json(&dir.join(&file))?, &mut rows);
            for (k, v) in rows {
                t.push(vec![run_name.clone(), command.clone(), file.clone(), k, v]);
            }
        }
    }
    let mut run = RunDir::create(&cfg.out)?;
    run.write("report.csv", t.render().as_bytes())?;
    Ok(Finished {
        config: serde_json::to_value(&cfg)?,
        out: cfg.out,
        ok: true,
        run,
    })
}
