//! Command-line surface: `build-theta`, `product`, `verify`, `sweep` and `seminorm`.
//!
//! Exit codes: 0 success, 1 verification failure or runtime error, 2 usage or configuration error.

pub mod config;
pub mod expr;
pub mod output;

use crate::action::{AdmissibleAction, Compactum};
use crate::error::{Error, Result};
use crate::norms::{deformed_seminorm, estimator_tolerance, ModuleVectorBasis, NormConfig};
use crate::poisson::{as_admissible_action, build_theta, AdmissibleStructure, FiberFields, FiberMetric, Presentation};
use crate::spacetime::{BaseGeometry, FiberedProductFamily, Flat, HyperbolicDisk, PairFn, TmFn, TowerConfig};
use crate::starproduct::checks::{derive_semiclassical_constant, observed_order, semiclassical_residual};
use crate::starproduct::engine::{EngineConfig, ProductEngine};
use crate::starproduct::function::{BoxGrid, FieldFn, GriddedFunction};
use crate::verify::{self, VerifyOptions, VerifyReport};
use clap::{Parser, Subcommand, ValueEnum};
use config::{parse_compactum, GeometryKind, RunConfig, ThetaSpec};
use expr::Expr;
use nalgebra::DMatrix;
use num_complex::Complex64;
use output::{write_json, Axis, GridArtifact};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Tolerance for the coincidence of theta with its vertical lift on the half ball.
const COINCIDENCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "localstar", version, about = "Deformation products for compactly supported R^d-actions")]
pub struct Cli {
    /// Key-value run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized verification (overrides seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// First function spec (overrides f).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub f: Option<String>,
    /// Second function spec (overrides g).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub g: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    /// One fibre R^n.
    Fiber,
    /// The tangent bundle, fibrewise.
    Tm,
    /// M x M on the slice Phi(p, .).
    Mxm,
    /// The local product on M at p.
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Hbar,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Builds the bivector and writes its description and field samples.
    BuildTheta,
    /// Computes f * g at one level of the tower.
    Product {
        #[arg(long, value_enum)]
        level: Level,
    },
    /// Runs the verification suites.
    Verify {
        /// Comma-separated suite names, aliases or criterion numbers.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Residual and seminorm curves against a parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values, optionally in brackets.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Deformed seminorm of f over a compactum.
    Seminorm {
        /// `lo0,lo1:hi0,hi1` or a half-width.
        #[arg(long, allow_hyphen_values = true)]
        compactum: Option<String>,
        /// Fourier modes per axis.
        #[arg(long)]
        basis: Option<usize>,
    },
}

/// Result of a command: whether its checks passed and a JSON summary for stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Value,
}

/// Exit code for an error: 2 for usage and configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Expression(_) | Error::NotSkew { .. } | Error::Dimension(_) | Error::MetricNotPositiveDefinite => 2,
        _ => 1,
    }
}

fn fiber_fields(cfg: &RunConfig) -> Result<FiberFields> {
    FiberFields::new(FiberMetric::new(cfg.metric.clone())?, cfg.directions.clone())
}

pub fn structure(cfg: &RunConfig) -> Result<AdmissibleStructure> {
    let fields = fiber_fields(cfg)?;
    match &cfg.theta {
        ThetaSpec::Matrix(m) => as_admissible_action(&fields, m),
        ThetaSpec::Gamma(g) => build_theta(g, &fields),
    }
}

pub fn action(cfg: &RunConfig) -> Result<AdmissibleAction> {
    AdmissibleAction::new(structure(cfg)?, cfg.hbar)
}

pub fn engine_config(cfg: &RunConfig) -> EngineConfig {
    EngineConfig {
        torus_points: cfg.torus_points,
        inner_radius: cfg.inner_radius,
        shell_tolerance: cfg.shell_tolerance,
        support_tolerance: cfg.support_tolerance,
    }
}

pub fn fiber_grid(cfg: &RunConfig) -> Result<BoxGrid> {
    let metric = FiberMetric::new(cfg.metric.clone())?;
    let n = metric.dim();
    let half = match cfg.fiber_half {
        Some(h) => h,
        None => 1.2 * (0..n).map(|i| metric.half_extent(i)).fold(0.0, f64::max),
    };
    BoxGrid::cube(n, half, cfg.fiber_points)
}

fn tolerances(cfg: &RunConfig) -> Value {
    json!({
        "shell": cfg.shell_tolerance,
        "support": cfg.support_tolerance,
        "override": cfg.tolerance_override,
        "coincidence": COINCIDENCE_TOLERANCE,
    })
}

fn grid_parameters(cfg: &RunConfig) -> Value {
    json!({
        "fiber_points": cfg.fiber_points,
        "fiber_half": cfg.fiber_half,
        "torus_points": cfg.torus_points,
        "base_points": cfg.base_points,
        "inner_radius": cfg.inner_radius,
    })
}

fn annotate(a: &mut GridArtifact, command: &str, cfg: &RunConfig) {
    a.meta("command", command);
    a.meta("config", &cfg.entries);
    a.meta("tolerances", tolerances(cfg));
    a.meta("grid", grid_parameters(cfg));
    a.meta("hbar", cfg.hbar);
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Compiles a function spec in the named variables; `aliases` map extra names onto variable indices.
pub fn compile(spec: &str, names: &[String], aliases: &[(&str, usize)]) -> Result<FieldFn> {
    let base = names.len();
    let aliases: Vec<(&str, usize)> = aliases.iter().copied().filter(|(_, i)| *i < base).collect();
    let all: Vec<&str> = names.iter().map(String::as_str).chain(aliases.iter().map(|(a, _)| *a)).collect();
    let e = Expr::parse(spec, &all)?;
    let idx: Vec<usize> = aliases.iter().map(|(_, i)| *i).collect();
    Ok(Arc::new(move |x: &[f64]| {
        if idx.is_empty() {
            e.eval(x)
        } else {
            let mut y = x.to_vec();
            y.extend(idx.iter().map(|&i| x[i]));
            e.eval(&y)
        }
    }))
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

const XYZ: &[(&str, usize)] = &[("x", 0), ("y", 1), ("z", 2)];

fn point_function(spec: &str, n: usize) -> Result<FieldFn> {
    compile(spec, &numbered("x", n), XYZ)
}

fn spec_or<'a>(given: &'a Option<String>, default: &'a str) -> &'a str {
    given.as_deref().unwrap_or(default)
}

/// Default fibre functions: two overlapping bumps well inside the support of the fields.
fn default_fiber_specs(cfg: &RunConfig) -> Result<(String, String)> {
    let metric = FiberMetric::new(cfg.metric.clone())?;
    let n = metric.dim();
    let r = (0..n).map(|i| metric.half_extent(i)).fold(f64::INFINITY, f64::min);
    let sigma = 0.06 * r;
    let shift = 0.02 * r;
    let bump = |offsets: &[f64]| {
        let args: Vec<String> = (0..n).map(|i| format!("x{i} - ({})", offsets.get(i).copied().unwrap_or(0.0))).collect();
        format!("bump({}, {sigma}, {})", args.join(", "), 8.5 * sigma)
    };
    Ok((bump(&[shift]), bump(&[-shift, shift])))
}

fn fiber_functions(cfg: &RunConfig) -> Result<(String, String, FieldFn, FieldFn)> {
    let (df, dg) = default_fiber_specs(cfg)?;
    let (fs, gs) = (spec_or(&cfg.f, &df).to_string(), spec_or(&cfg.g, &dg).to_string());
    let n = cfg.fiber_dim();
    Ok((fs.clone(), gs.clone(), point_function(&fs, n)?, point_function(&gs, n)?))
}

pub fn cmd_build_theta(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let s = structure(cfg)?;
    let fields = &s.fields;
    let grid = fiber_grid(cfg)?;
    let n = fields.n();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let lift = s.vertical_lift();
    let lift_scale = lift.amax().max(1.0);
    let (mut outside, mut coincidence, mut sup) = (0.0f64, 0.0f64, 0.0f64);
    let mut rows = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let x = grid.point(k);
        let th = s.eval_theta(&x);
        let r = fields.metric.norm(&x);
        sup = sup.max(th.amax());
        if r >= 1.0 {
            outside = outside.max(th.amax());
        }
        if r <= 0.5 {
            coincidence = coincidence.max((&th - &lift).amax());
        }
        let mut row: Vec<f64> = pairs.iter().map(|&(i, j)| th[(i, j)]).collect();
        for i in 0..fields.count() {
            row.extend(fields.field(i, &x));
        }
        rows.push(row);
    }
    let mut columns: Vec<String> = pairs.iter().map(|(i, j)| format!("theta_{i}{j}")).collect();
    for i in 0..fields.count() {
        columns.extend((0..n).map(|a| format!("field{i}_{a}")));
    }
    let axes = (0..n).map(|a| Axis::new(format!("x{a}"), grid.axis(a))).collect();
    let mut artifact = GridArtifact::new(axes, columns, rows)?;
    annotate(&mut artifact, "build-theta", cfg);
    artifact.meta("provenance", "closed-form");
    let csv = artifact.write(out, "theta")?;
    let support_ok = outside == 0.0;
    let coincidence_ok = coincidence <= COINCIDENCE_TOLERANCE * lift_scale;
    let summary = json!({
        "command": "build-theta",
        "presentation": match s.presentation { Presentation::Companion => "companion", Presentation::Direct => "direct" },
        "fiber_dim": n,
        "fields": fields.count(),
        "primary_fields": s.primary,
        "theta0": matrix_rows(&s.theta),
        "gamma": s.gamma.as_ref().map(matrix_rows),
        "hbar": cfg.hbar,
        "vertical_lift": matrix_rows(&lift),
        "theta_identically_zero": sup == 0.0,
        "checks": {
            "support_in_unit_ball": { "passed": support_ok, "max_outside": outside },
            "coincidence_on_half_ball": { "passed": coincidence_ok, "max_deviation": coincidence, "tolerance": COINCIDENCE_TOLERANCE * lift_scale },
        },
        "tolerances": tolerances(cfg),
        "grid": grid_parameters(cfg),
        "config": &cfg.entries,
        "samples": csv.display().to_string(),
        "engine_version": output::ENGINE_VERSION,
    });
    write_json(&out.join("structure.json"), &summary)?;
    Ok(Outcome {
        passed: support_ok && coincidence_ok,
        summary,
    })
}

fn complex_row(v: Complex64) -> [f64; 2] {
    [v.re, v.im]
}

fn product_fiber(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let engine = ProductEngine::new(action(cfg)?, engine_config(cfg))?;
    let grid = fiber_grid(cfg)?;
    let (fs, gs, f, g) = fiber_functions(cfg)?;
    let (fg, gg) = (GriddedFunction::from_fn(grid.clone(), f), GriddedFunction::from_fn(grid.clone(), g));
    let (h, diag) = engine.product_with_diagnostics(&fg, &gg)?;
    let pointwise = fg.pointwise_mul(&gg)?;
    let deviation = h.max_abs_diff(&pointwise);
    let rows = h.values().iter().map(|v| complex_row(*v).to_vec()).collect();
    let axes = (0..grid.dim()).map(|a| Axis::new(format!("x{a}"), grid.axis(a))).collect();
    let mut artifact = GridArtifact::new(axes, vec!["re".into(), "im".into()], rows)?;
    annotate(&mut artifact, "product", cfg);
    artifact.meta("level", "fiber");
    artifact.meta("f", &fs);
    artifact.meta("g", &gs);
    artifact.meta("provenance", h.provenance().label());
    artifact.meta("diagnostics", &diag);
    artifact.meta("max_deviation_from_pointwise", deviation);
    let csv = artifact.write(out, "product-fiber")?;
    Ok(Outcome {
        passed: true,
        summary: json!({
            "command": "product",
            "level": "fiber",
            "output": csv.display().to_string(),
            "sup": h.sup_abs(),
            "max_deviation_from_pointwise": deviation,
            "diagnostics": diag,
        }),
    })
}

fn base_geometry(cfg: &RunConfig) -> Arc<dyn BaseGeometry> {
    match cfg.geometry {
        GeometryKind::Flat => Arc::new(Flat { m: cfg.base_dim() }),
        GeometryKind::Hyperbolic => Arc::new(HyperbolicDisk),
    }
}

pub fn family(cfg: &RunConfig) -> Result<FiberedProductFamily> {
    let m = cfg.base_dim();
    let theta0 = match &cfg.theta {
        ThetaSpec::Matrix(t) if t.nrows() == m => t.clone(),
        _ => return Err(Error::Config(format!("tower levels need theta.matrix of size {m} x {m}"))),
    };
    let mut tc = TowerConfig::standard(cfg.tower_radius, cfg.hbar);
    tc.neighbourhood = cfg.neighbourhood;
    tc.theta0 = theta0;
    tc.fiber_points = cfg.fiber_points;
    tc.engine = engine_config(cfg);
    let mut base = cfg.tower_base.clone();
    if !base.contains(&cfg.tower_point) {
        base.push(cfg.tower_point.clone());
    }
    FiberedProductFamily::new(base_geometry(cfg), base, None, tc)
}

/// Default tower functions in fibre units: a fraction of the fibre ball radius at p.
fn tower_scale(fam: &FiberedProductFamily, p: &[f64]) -> Result<f64> {
    let grid = fam.fiber_grid(p)?;
    Ok((grid.hi[0] - grid.lo[0]) / (2.0 * fam.config().grid_margin))
}

fn bump_spec(vars: &[String], centre: &[f64], sigma: f64) -> String {
    let args: Vec<String> = vars.iter().zip(centre).map(|(v, c)| format!("{v} - ({c})")).collect();
    format!("bump({}, {sigma}, {})", args.join(", "), 8.5 * sigma)
}

fn product_tm(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let fam = family(cfg)?;
    let m = cfg.base_dim();
    let (ps, vs) = (numbered("p", m), numbered("v", m));
    let names: Vec<String> = ps.iter().chain(&vs).cloned().collect();
    let s = tower_scale(&fam, &cfg.tower_point)?;
    let (mut c1, mut c2) = (vec![0.0; m], vec![0.0; m]);
    c1[0] = 0.02 * s;
    c2[0] = -0.02 * s;
    let (df, dg) = (bump_spec(&vs, &c1, 0.06 * s), bump_spec(&vs, &c2, 0.06 * s));
    let (fs, gs) = (spec_or(&cfg.f, &df).to_string(), spec_or(&cfg.g, &dg).to_string());
    let tm = |spec: &str| -> Result<TmFn> {
        let e = compile(spec, &names, &[])?;
        Ok(Arc::new(move |p: &[f64], v: &[f64]| e(&[p, v].concat())))
    };
    let (ft, gt) = (fam.sample_tm(&tm(&fs)?)?, fam.sample_tm(&tm(&gs)?)?);
    let h = fam.star_tm(&ft, &gt)?;
    let grid = h.fibers[0].grid().clone();
    let mut rows = Vec::new();
    for (b, fiber) in h.base_points.iter().zip(&h.fibers) {
        for v in fiber.values() {
            let mut row = b.clone();
            row.extend(complex_row(*v));
            rows.push(row);
        }
    }
    let nb = h.base_points.len();
    let mut axes = vec![Axis::new("base", (0..nb).map(|i| i as f64).collect())];
    axes.extend((0..m).map(|a| Axis::new(format!("v{a}"), grid.axis(a))));
    let mut columns = ps.clone();
    columns.extend(["re".to_string(), "im".to_string()]);
    let mut artifact = GridArtifact::new(axes, columns, rows)?;
    annotate(&mut artifact, "product", cfg);
    artifact.meta("level", "tm");
    artifact.meta("geometry", cfg.geometry.name());
    artifact.meta("f", &fs);
    artifact.meta("g", &gs);
    artifact.meta("provenance", "engine");
    artifact.meta("base_points", &h.base_points);
    if h.fibers.iter().any(|f| f.grid() != &grid) {
        artifact.meta("note", "fibre grids differ between base points; v axes describe the first");
    }
    let csv = artifact.write(out, "product-tm")?;
    Ok(Outcome {
        passed: true,
        summary: json!({ "command": "product", "level": "tm", "output": csv.display().to_string(), "sup": h.sup_abs() }),
    })
}

fn product_mxm(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let fam = family(cfg)?;
    let m = cfg.base_dim();
    let p = cfg.tower_point.clone();
    let (as_, bs) = (numbered("a", m), numbered("b", m));
    let names: Vec<String> = as_.iter().chain(&bs).cloned().collect();
    let s = tower_scale(&fam, &p)?;
    let sigma = 0.06 * s;
    let pair_default = |shift: f64| -> String {
        let (mut ca, mut cb) = (p.clone(), p.clone());
        ca[0] += shift;
        cb[0] += shift;
        format!("{} * {}", bump_spec(&as_, &ca, sigma), bump_spec(&bs, &cb, sigma))
    };
    let (df, dg) = (pair_default(0.02 * s), pair_default(-0.02 * s));
    let (fs, gs) = (spec_or(&cfg.f, &df).to_string(), spec_or(&cfg.g, &dg).to_string());
    let pair = |spec: &str| -> Result<PairFn> {
        let e = compile(spec, &names, &[])?;
        Ok(Arc::new(move |a: &[f64], b: &[f64]| e(&[a, b].concat())))
    };
    let (ft, gt) = (pair(&fs)?, pair(&gs)?);
    let half = (fam.fiber_grid(&p)?.hi[0]).min(cfg.tower_window);
    let axis = Axis::uniform("v", -half, half, cfg.base_points).values;
    let mut vs = Vec::new();
    for k in 0..cfg.base_points.pow(m as u32) {
        let mut rem = k;
        let mut v = vec![0.0; m];
        for a in (0..m).rev() {
            v[a] = axis[rem % cfg.base_points];
            rem /= cfg.base_points;
        }
        vs.push(v);
    }
    let points = vs.iter().map(|v| fam.phi(&p, v)).collect::<Result<Vec<_>>>()?;
    let values = fam.star_mxm(&ft, &gt, &points)?;
    let rows = points
        .iter()
        .zip(&values)
        .map(|((a, b), v)| {
            let mut row = a.clone();
            row.extend(b);
            row.extend(complex_row(*v));
            row
        })
        .collect();
    let axes = (0..m).map(|a| Axis::new(format!("v{a}"), axis.clone())).collect();
    let mut columns: Vec<String> = names.clone();
    columns.extend(["re".to_string(), "im".to_string()]);
    let mut artifact = GridArtifact::new(axes, columns, rows)?;
    annotate(&mut artifact, "product", cfg);
    artifact.meta("level", "mxm");
    artifact.meta("geometry", cfg.geometry.name());
    artifact.meta("slice", "(a, b) = Phi(p, v)");
    artifact.meta("p", &p);
    artifact.meta("f", &fs);
    artifact.meta("g", &gs);
    artifact.meta("provenance", "engine");
    let csv = artifact.write(out, "product-mxm")?;
    Ok(Outcome {
        passed: true,
        summary: json!({ "command": "product", "level": "mxm", "output": csv.display().to_string() }),
    })
}

fn product_m(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let fam = family(cfg)?;
    let geometry = base_geometry(cfg);
    let m = cfg.base_dim();
    let p = cfg.tower_point.clone();
    let s = tower_scale(&fam, &p)?;
    let xs = numbered("x", m);
    // an overlapping pair near p plus bumps across the boundary of V_p that vanish on the unit ball
    let shifted = |t: f64| {
        let mut c = p.clone();
        c[0] += t * s;
        c
    };
    let df = format!("{} + {}", bump_spec(&xs, &shifted(0.02), 0.06 * s), bump_spec(&xs, &shifted(-2.0), 0.08 * s));
    let dg = format!("{} + {}", bump_spec(&xs, &shifted(-0.02), 0.06 * s), bump_spec(&xs, &shifted(2.0), 0.08 * s));
    let (fs, gs) = (spec_or(&cfg.f, &df).to_string(), spec_or(&cfg.g, &dg).to_string());
    let (f, g) = (point_function(&fs, m)?, point_function(&gs, m)?);
    let axes: Vec<Axis> = (0..m).map(|a| Axis::uniform(format!("x{a}"), p[a] - cfg.tower_window, p[a] + cfg.tower_window, cfg.base_points)).collect();
    let total = cfg.base_points.pow(m as u32);
    let all: Vec<Vec<f64>> = (0..total)
        .map(|k| {
            let mut rem = k;
            let mut x = vec![0.0; m];
            for a in (0..m).rev() {
                x[a] = axes[a].values[rem % cfg.base_points];
                rem /= cfg.base_points;
            }
            x
        })
        .collect();
    let inside: Vec<usize> = (0..total).filter(|k| geometry.contains(&all[*k])).collect();
    let pts: Vec<Vec<f64>> = inside.iter().map(|k| all[*k].clone()).collect();
    let fg = fam.star_p_on_m(&p, &f, &g, &pts)?;
    let gf = fam.star_p_on_m(&p, &g, &f, &pts)?;
    let mut rows = vec![vec![f64::NAN; 4]; total];
    let (mut outside_v, mut outside_count, mut inside_v) = (0.0f64, 0usize, 0.0f64);
    for (j, k) in inside.iter().enumerate() {
        let in_v = match geometry.log(&p, &pts[j]) {
            Ok(v) => fam.in_u(&p, &v)?,
            Err(_) => false,
        };
        let comm = (fg[j] - gf[j]).norm();
        if in_v {
            inside_v = inside_v.max(comm);
        } else {
            outside_v = outside_v.max(comm);
            outside_count += 1;
        }
        rows[*k] = vec![fg[j].re, fg[j].im, comm, if in_v { 1.0 } else { 0.0 }];
    }
    let columns = ["re", "im", "commutator", "in_v"].map(String::from).to_vec();
    let mut artifact = GridArtifact::new(axes, columns, rows)?;
    annotate(&mut artifact, "product", cfg);
    artifact.meta("level", "m");
    artifact.meta("geometry", cfg.geometry.name());
    artifact.meta("p", &p);
    artifact.meta("f", &fs);
    artifact.meta("g", &gs);
    artifact.meta("provenance", "engine");
    artifact.meta("commutator_outside_v", outside_v);
    artifact.meta("commutator_inside_v", inside_v);
    artifact.meta("points_outside_v", outside_count);
    let csv = artifact.write(out, "product-m")?;
    Ok(Outcome {
        passed: outside_v == 0.0,
        summary: json!({
            "command": "product",
            "level": "m",
            "output": csv.display().to_string(),
            "commutator_outside_v": outside_v,
            "commutator_inside_v": inside_v,
            "points_outside_v": outside_count,
        }),
    })
}

pub fn cmd_product(cfg: &RunConfig, level: Level, out: &Path) -> Result<Outcome> {
    match level {
        Level::Fiber => product_fiber(cfg, out),
        Level::Tm => product_tm(cfg, out),
        Level::Mxm => product_mxm(cfg, out),
        Level::M => product_m(cfg, out),
    }
}

/// Runs the selected suites with the configured seed and tolerance override.
pub fn cmd_verify(cfg: &RunConfig, filter: Option<&str>) -> Result<VerifyReport> {
    let opts = VerifyOptions {
        seed: cfg.seed.unwrap_or(VerifyOptions::default().seed),
        tolerance_override: cfg.tolerance_override,
    };
    Ok(verify::run(filter.or(cfg.suite.as_deref()), &opts)?.0)
}

/// Comma-separated numbers, optionally wrapped in brackets.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    let values = inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Expr::constant(t).map_err(|e| Error::Config(format!("values: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(Error::Config("values: empty list".into()));
    }
    Ok(values)
}

fn norm_config(cfg: &RunConfig) -> NormConfig {
    NormConfig {
        density: cfg.norms_density,
        symbol_points: cfg.symbol_points,
        ..NormConfig::default()
    }
}

fn compactum(cfg: &RunConfig, given: Option<&str>) -> Result<Compactum> {
    parse_compactum(given.or(cfg.compactum.as_deref()).unwrap_or("1"), cfg.fiber_dim())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SweepRow {
    hbar: f64,
    product_deviation: f64,
    commutator: f64,
    semiclassical_residual: f64,
    seminorm: f64,
    sup_norm: f64,
}

pub fn cmd_sweep(cfg: &RunConfig, param: SweepParam, values: &[f64], out: &Path) -> Result<Outcome> {
    let SweepParam::Hbar = param;
    if values.is_empty() {
        return Err(Error::Config("values: empty list".into()));
    }
    if let Some(h) = values.iter().find(|h| !(**h >= 0.0) || !h.is_finite()) {
        return Err(Error::Config(format!("values: hbar must be finite and >= 0, got {h}")));
    }
    let base = action(cfg)?;
    let grid = fiber_grid(cfg)?;
    let (fs, gs, f, g) = fiber_functions(cfg)?;
    let (fg, gg) = (GriddedFunction::from_fn(grid.clone(), f), GriddedFunction::from_fn(grid.clone(), g));
    let pointwise = fg.pointwise_mul(&gg)?;
    let l = compactum(cfg, None)?;
    let basis = ModuleVectorBasis::fourier(base.d(), cfg.norms_basis);
    let ncfg = norm_config(cfg);
    let c = derive_semiclassical_constant(1e-6)?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &h in values {
        let act = base.with_hbar(h)?;
        let engine = ProductEngine::new(act.clone(), engine_config(cfg))?;
        let ab = engine.deformed_product(&fg, &gg)?;
        let ba = engine.deformed_product(&gg, &fg)?;
        let row = SweepRow {
            hbar: h,
            product_deviation: ab.max_abs_diff(&pointwise),
            commutator: ab.max_abs_diff(&ba),
            semiclassical_residual: semiclassical_residual(&engine, &fg, &gg, c)?,
            seminorm: deformed_seminorm(&act, &fg, &l, &basis, &ncfg)?.value,
            sup_norm: fg.sup_abs(),
        };
        rows.push(vec![row.product_deviation, row.commutator, row.semiclassical_residual, row.seminorm, row.sup_norm]);
        table.push(row);
    }
    let positive: Vec<&SweepRow> = table.iter().filter(|r| r.hbar > 0.0 && r.semiclassical_residual > 0.0).collect();
    let order = if positive.len() >= 2 {
        let hs: Vec<f64> = positive.iter().map(|r| r.hbar).collect();
        let rs: Vec<f64> = positive.iter().map(|r| r.semiclassical_residual).collect();
        Some(observed_order(&hs, &rs))
    } else {
        None
    };
    let columns = ["product_deviation", "commutator", "semiclassical_residual", "seminorm", "sup_norm"].map(String::from).to_vec();
    let mut artifact = GridArtifact::new(vec![Axis::new("hbar", values.to_vec())], columns, rows)?;
    annotate(&mut artifact, "sweep", cfg);
    artifact.meta("param", "hbar");
    artifact.meta("f", &fs);
    artifact.meta("g", &gs);
    artifact.meta("compactum", json!({ "lo": l.lo, "hi": l.hi }));
    artifact.meta("basis", json!({ "kind": "fourier", "per_axis": cfg.norms_basis }));
    artifact.meta("norm_config", &ncfg);
    artifact.meta("semiclassical_constant", [c.re, c.im]);
    artifact.meta("semiclassical_order", order);
    let csv = artifact.write(out, "sweep-hbar")?;
    Ok(Outcome {
        passed: true,
        summary: json!({ "command": "sweep", "output": csv.display().to_string(), "rows": table, "semiclassical_order": order }),
    })
}

pub fn cmd_seminorm(cfg: &RunConfig, given: Option<&str>, basis: Option<usize>, out: &Path) -> Result<Outcome> {
    let act = action(cfg)?;
    let grid = fiber_grid(cfg)?;
    let (fs, _, f, _) = fiber_functions(cfg)?;
    let a = GriddedFunction::from_fn(grid, f);
    let l = compactum(cfg, given)?;
    let per_axis = basis.unwrap_or(cfg.norms_basis);
    if per_axis < 2 {
        return Err(Error::Config("basis: at least 2 modes per axis".into()));
    }
    let b = ModuleVectorBasis::fourier(act.d(), per_axis);
    let ncfg = norm_config(cfg);
    let est = deformed_seminorm(&act, &a, &l, &b, &ncfg)?;
    let summary = json!({
        "command": "seminorm",
        "f": fs,
        "hbar": cfg.hbar,
        "compactum": { "lo": l.lo, "hi": l.hi },
        "estimate": est.value,
        "truncation_curve": est.truncation_curve,
        "diagnostics": {
            "argmax": est.argmax,
            "samples": est.samples,
            "estimator_tolerance": estimator_tolerance(&est),
            "basis": { "kind": "fourier", "per_axis": per_axis, "size": b.len() },
            "norm_config": ncfg,
            "sup_on_grid": a.sup_abs(),
        },
        "tolerances": tolerances(cfg),
        "grid": grid_parameters(cfg),
        "config": &cfg.entries,
        "engine_version": output::ENGINE_VERSION,
    });
    write_json(&out.join("seminorm.json"), &summary)?;
    Ok(Outcome { passed: true, summary })
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("LOCALSTAR_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| Error::Config(format!("LOCALSTAR_THREADS: expected a positive integer, got '{v}'")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_config()?,
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if cli.f.is_some() {
        cfg.f = cli.f.clone();
    }
    if cli.g.is_some() {
        cfg.g = cli.g.clone();
    }
    Ok(cfg)
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

pub fn execute(cli: &Cli) -> Result<i32> {
    configure_threads()?;
    let cfg = load(cli)?;
    let out = cfg.output_dir.clone();
    let outcome = match &cli.command {
        Command::BuildTheta => cmd_build_theta(&cfg, &out)?,
        Command::Product { level } => cmd_product(&cfg, *level, &out)?,
        Command::Verify { suite } => {
            let report = cmd_verify(&cfg, suite.as_deref())?;
            write_json(&out.join("verify.json"), &report)?;
            for s in &report.suites {
                eprintln!("{} {} (criterion {})", if s.passed { "PASS" } else { "FAIL" }, s.suite, s.criterion);
            }
            Outcome {
                passed: report.passed,
                summary: serde_json::to_value(&report).expect("report"),
            }
        }
        Command::Sweep { param, values } => cmd_sweep(&cfg, *param, &parse_values(values)?, &out)?,
        Command::Seminorm { compactum, basis } => cmd_seminorm(&cfg, compactum.as_deref(), *basis, &out)?,
    };
    print_json(&outcome.summary);
    Ok(if outcome.passed { 0 } else { 1 })
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
