//! Run configuration: a UTF-8 file of `key = value` lines with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Matrices are written row by row, rows
//! separated by `;` and entries by `,`; every entry is a constant expression. Point lists use the
//! same syntax with one point per row.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `geometry` | `flat` or `hyperbolic` (base manifold for levels tm, mxm, m) | `flat` |
//! | `fiber.dim` | fibre dimension n for level fiber | 2 |
//! | `fiber.radius` | h = I / radius^2 when `fiber.metric` is absent | 5 |
//! | `fiber.metric` | n x n positive definite h | |
//! | `action.directions` | n x d matrix whose columns are the e_i | identity |
//! | `theta.matrix` | skew d x d Theta0 | standard symplectic |
//! | `theta.gamma` | skew d x d gamma; selects the companion presentation | |
//! | `theta.scale` | hbar | 0.1 |
//! | `grid.fiber` | fibre grid points per axis (power of two) | 128 |
//! | `grid.half` | fibre grid half-width | 1.2 x largest half-extent |
//! | `grid.v` | torus points per axis for the spectral product (power of two) | 128 |
//! | `grid.base` | base grid points per axis for levels mxm and m | 32 |
//! | `engine.inner_radius` | metric radius mapped into the torus without shift margin | 0.55 |
//! | `tolerance.shell` | engine shell tolerance | 1e-12 |
//! | `tolerance.support` | engine support tolerance | 1e-11 |
//! | `tolerance.override` | replaces every upper-bound tolerance in `verify` | |
//! | `tower.radius` | radius of K_p in the base metric | 5 (flat), 1 (hyperbolic) |
//! | `tower.neighbourhood` | radius of U_p in fibre units | 1.5 |
//! | `tower.base` | base sample points | `0,0` |
//! | `tower.point` | base point p for levels mxm and m | first base point |
//! | `tower.window` | half-width of the output window around p | 2 x tower.radius (flat) |
//! | `f`, `g` | function specs | bumps |
//! | `norms.compactum` | box `lo0,lo1:hi0,hi1` or a half-width | 1 |
//! | `norms.basis` | Fourier modes per axis | 64 |
//! | `norms.density` | sample points per axis of the compactum | 3 |
//! | `norms.symbol_points` | symbol samples per axis | 256 |
//! | `seed` | verification seed | 20240917 |
//! | `suite` | verification filter | all |
//! | `output.dir` | artifact directory | `.` |

use super::expr::Expr;
use crate::action::{symplectic, Compactum};
use crate::error::{Error, Result};
use crate::poisson::{require_skew, FiberMetric};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const KEYS: &[&str] = &[
    "geometry",
    "fiber.dim",
    "fiber.radius",
    "fiber.metric",
    "action.directions",
    "theta.matrix",
    "theta.gamma",
    "theta.scale",
    "grid.fiber",
    "grid.half",
    "grid.v",
    "grid.base",
    "engine.inner_radius",
    "tolerance.shell",
    "tolerance.support",
    "tolerance.override",
    "tower.radius",
    "tower.neighbourhood",
    "tower.base",
    "tower.point",
    "tower.window",
    "f",
    "g",
    "norms.compactum",
    "norms.basis",
    "norms.density",
    "norms.symbol_points",
    "seed",
    "suite",
    "output.dir",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Flat,
    Hyperbolic,
}

impl GeometryKind {
    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Flat => "flat",
            GeometryKind::Hyperbolic => "hyperbolic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSpec {
    Matrix(DMatrix<f64>),
    Gamma(DMatrix<f64>),
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// The key-value pairs as given, for embedding in artifacts.
    pub entries: BTreeMap<String, String>,
    pub geometry: GeometryKind,
    pub metric: DMatrix<f64>,
    pub directions: DMatrix<f64>,
    pub theta: ThetaSpec,
    pub hbar: f64,
    pub fiber_points: usize,
    pub fiber_half: Option<f64>,
    pub torus_points: usize,
    pub base_points: usize,
    pub inner_radius: f64,
    pub shell_tolerance: f64,
    pub support_tolerance: f64,
    pub tolerance_override: Option<f64>,
    pub tower_radius: f64,
    pub neighbourhood: f64,
    pub tower_base: Vec<Vec<f64>>,
    pub tower_point: Vec<f64>,
    pub tower_window: f64,
    pub f: Option<String>,
    pub g: Option<String>,
    pub compactum: Option<String>,
    pub norms_basis: usize,
    pub norms_density: usize,
    pub symbol_points: usize,
    pub seed: Option<u64>,
    pub suite: Option<String>,
    pub output_dir: PathBuf,
}

fn parse_number(key: &str, v: &str) -> Result<f64> {
    Expr::constant(v).map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn parse_count(key: &str, v: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{}'", v.trim())))
}

fn power_of_two(key: &str, v: usize) -> Result<usize> {
    if v < 2 || !v.is_power_of_two() {
        return Err(Error::Config(format!("{key}: spectral resolutions must be powers of two >= 2, got {v}")));
    }
    Ok(v)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{key}: must be positive, got {v}")));
    }
    Ok(v)
}

/// Rows separated by `;`, entries by `,`.
pub fn parse_rows(key: &str, v: &str) -> Result<Vec<Vec<f64>>> {
    let rows = v
        .split(';')
        .map(|row| row.split(',').map(|e| parse_number(key, e)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Config(format!("{key}: rows have different lengths")));
    }
    Ok(rows)
}

pub fn parse_matrix(key: &str, v: &str) -> Result<DMatrix<f64>> {
    let rows = parse_rows(key, v)?;
    Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
}

/// `lo0,lo1:hi0,hi1`, or a single half-width for a centred cube.
pub fn parse_compactum(v: &str, dim: usize) -> Result<Compactum> {
    match v.split_once(':') {
        Some((lo, hi)) => {
            let lo = parse_rows("compactum", lo)?.concat();
            let hi = parse_rows("compactum", hi)?.concat();
            if lo.len() != dim || hi.len() != dim {
                return Err(Error::Config(format!("compactum: expected {dim} coordinates per corner")));
            }
            if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
                return Err(Error::Config("compactum: lower corner exceeds upper corner".into()));
            }
            Compactum::new(lo, hi)
        }
        None => Ok(Compactum::cube(dim, positive("compactum", parse_number("compactum", v)?)?)),
    }
}

impl RunConfig {
    pub fn default_config() -> Result<Self> {
        Self::from_entries(BTreeMap::new())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| entries.get(k).map(String::as_str);
        let geometry = match get("geometry").unwrap_or("flat") {
            "flat" => GeometryKind::Flat,
            "hyperbolic" => GeometryKind::Hyperbolic,
            other => return Err(Error::Config(format!("geometry: expected flat or hyperbolic, got '{other}'"))),
        };
        let metric = match get("fiber.metric") {
            Some(v) => parse_matrix("fiber.metric", v)?,
            None => {
                let n = match get("fiber.dim") {
                    Some(v) => parse_count("fiber.dim", v)?,
                    None => 2,
                };
                if n == 0 {
                    return Err(Error::Config("fiber.dim: must be positive".into()));
                }
                let r = positive("fiber.radius", get("fiber.radius").map(|v| parse_number("fiber.radius", v)).transpose()?.unwrap_or(5.0))?;
                DMatrix::identity(n, n) / (r * r)
            }
        };
        if !metric.is_square() {
            return Err(Error::Config("fiber.metric: must be square".into()));
        }
        FiberMetric::new(metric.clone()).map_err(|e| Error::Config(format!("fiber.metric: {e}")))?;
        let n = metric.nrows();
        let directions = match get("action.directions") {
            Some(v) => parse_matrix("action.directions", v)?,
            None => DMatrix::identity(n, n),
        };
        if directions.nrows() != n {
            return Err(Error::Config(format!("action.directions: expected {n} rows")));
        }
        let d = directions.ncols();
        let theta = match (get("theta.matrix"), get("theta.gamma")) {
            (Some(_), Some(_)) => return Err(Error::Config("theta.matrix and theta.gamma are mutually exclusive".into())),
            (_, Some(v)) => ThetaSpec::Gamma(parse_matrix("theta.gamma", v)?),
            (Some(v), None) => ThetaSpec::Matrix(parse_matrix("theta.matrix", v)?),
            (None, None) => {
                if d % 2 != 0 {
                    return Err(Error::Config("theta.matrix: required when the number of directions is odd".into()));
                }
                ThetaSpec::Matrix(symplectic(d / 2))
            }
        };
        let (ThetaSpec::Matrix(m) | ThetaSpec::Gamma(m)) = &theta;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Config(format!("theta: expected a {d} x {d} matrix")));
        }
        require_skew(m)?;
        let hbar = get("theta.scale").map(|v| parse_number("theta.scale", v)).transpose()?.unwrap_or(0.1);
        if !(hbar >= 0.0) || !hbar.is_finite() {
            return Err(Error::Config(format!("theta.scale: must be finite and >= 0, got {hbar}")));
        }
        let count = |k: &str, default: usize| -> Result<usize> { get(k).map(|v| parse_count(k, v)).transpose().map(|v| v.unwrap_or(default)) };
        let number = |k: &str, default: f64| -> Result<f64> { positive(k, get(k).map(|v| parse_number(k, v)).transpose()?.unwrap_or(default)) };
        let fiber_points = power_of_two("grid.fiber", count("grid.fiber", 128)?)?;
        let torus_points = power_of_two("grid.v", count("grid.v", 128)?)?;
        let base_points = count("grid.base", 32)?;
        if base_points < 2 {
            return Err(Error::Config("grid.base: at least 2 points per axis".into()));
        }
        let fiber_half = get("grid.half").map(|v| parse_number("grid.half", v).and_then(|x| positive("grid.half", x))).transpose()?;
        let tower_radius = number("tower.radius", if geometry == GeometryKind::Flat { 5.0 } else { 1.0 })?;
        let tower_base = match get("tower.base") {
            Some(v) => parse_rows("tower.base", v)?,
            None => vec![vec![0.0, 0.0]],
        };
        let tower_point = match get("tower.point") {
            Some(v) => parse_rows("tower.point", v)?.concat(),
            None => tower_base[0].clone(),
        };
        if tower_base[0].len() != tower_point.len() {
            return Err(Error::Config("tower.point: dimension differs from tower.base".into()));
        }
        if geometry == GeometryKind::Hyperbolic && tower_point.len() != 2 {
            return Err(Error::Config("tower.base: the hyperbolic disk is two-dimensional".into()));
        }
        let norms_basis = count("norms.basis", 64)?;
        if norms_basis < 2 {
            return Err(Error::Config("norms.basis: at least 2 modes per axis".into()));
        }
        let seed = get("seed").map(|v| v.trim().parse::<u64>().map_err(|_| Error::Config(format!("seed: expected an unsigned integer, got '{v}'")))).transpose()?;
        let tolerance_override = get("tolerance.override").map(|v| parse_number("tolerance.override", v).and_then(|x| positive("tolerance.override", x))).transpose()?;
        Ok(Self {
            geometry,
            metric,
            directions,
            theta,
            hbar,
            fiber_points,
            fiber_half,
            torus_points,
            base_points,
            inner_radius: number("engine.inner_radius", 0.55)?,
            shell_tolerance: number("tolerance.shell", 1e-12)?,
            support_tolerance: number("tolerance.support", 1e-11)?,
            tolerance_override,
            neighbourhood: number("tower.neighbourhood", 1.5)?,
            tower_window: number("tower.window", if geometry == GeometryKind::Flat { 2.0 * tower_radius } else { 0.9 })?,
            tower_radius,
            tower_base,
            tower_point,
            f: get("f").map(str::to_string),
            g: get("g").map(str::to_string),
            compactum: get("norms.compactum").map(str::to_string),
            norms_basis,
            norms_density: count("norms.density", 3)?.max(1),
            symbol_points: power_of_two("norms.symbol_points", count("norms.symbol_points", 256)?)?,
            seed,
            suite: get("suite").map(str::to_string),
            output_dir: PathBuf::from(get("output.dir").unwrap_or(".")),
            entries,
        })
    }

    pub fn fiber_dim(&self) -> usize {
        self.metric.nrows()
    }

    pub fn group_dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn base_dim(&self) -> usize {
        self.tower_point.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default_config().unwrap();
        assert_eq!(c.fiber_dim(), 2);
        assert_eq!(c.metric[(0, 0)], 1.0 / 25.0);
        assert_eq!(c.theta, ThetaSpec::Matrix(symplectic(1)));
        assert_eq!(c.hbar, 0.1);
    }

    #[test]
    fn parses_dotted_keys_and_expressions() {
        let c = RunConfig::parse("# comment\ntheta.scale = 1/8\ngrid.fiber=64\nfiber.metric = 2,0;0,1/4\nf = exp(-x^2)\n").unwrap();
        assert_eq!(c.hbar, 0.125);
        assert_eq!(c.fiber_points, 64);
        assert_eq!(c.metric[(1, 1)], 0.25);
        assert_eq!(c.f.as_deref(), Some("exp(-x^2)"));
    }

    #[test]
    fn rejects_invalid() {
        for bad in [
            "theta.matrix = 0,1;1,0",
            "grid.fiber = 100",
            "tolerance.override = 0",
            "tolerance.shell = -1",
            "nope = 1",
            "theta.scale = -1",
            "fiber.metric = 1,0;0,-1",
            "geometry = sphere",
            "theta.scale",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
        assert!(matches!(RunConfig::parse("theta.matrix = 0,1;1,0"), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn compactum_syntax() {
        let k = parse_compactum("-1,0:1,2", 2).unwrap();
        assert!(k.contains(&[0.5, 1.5]));
        assert!(!k.contains(&[0.5, 2.5]));
        assert!(parse_compactum("1,0:0,1", 2).is_err());
        assert!(parse_compactum("2", 2).unwrap().contains(&[-1.9, 1.9]));
    }
}
