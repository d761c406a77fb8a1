use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("point lies outside the open unit ball (radius {radius})")]
    OutsideUnitBall { radius: f64 },

    #[error("radial map overflows at radius {radius}")]
    Overflow { radius: f64 },

    #[error("radial profile is not strictly increasing near t = {at} (psi' = {slope})")]
    NotMonotone { at: f64, slope: f64 },

    #[error("metric is not positive definite")]
    MetricNotPositiveDefinite,

    #[error("dual basis reconstruction residual {residual:e} exceeds {tolerance:e}")]
    Reconstruction { residual: f64, tolerance: f64 },

    #[error("matrix is not skew-symmetric (defect {defect:e}); the bivector coefficients must satisfy theta^T = -theta")]
    NotSkew { defect: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("neighbourhood radius {radius} does not contain the unit metric ball")]
    Neighbourhood { radius: f64 },

    #[error("grid does not cover the support compactum: {0}")]
    Coverage(String),

    #[error("grids differ between operands")]
    GridMismatch,

    #[error("mode lattices differ between operands")]
    LatticeMismatch,

    #[error("function is not constant near the boundary of the moving region (deviation {deviation:e} > {tolerance:e})")]
    ShellNotConstant { deviation: f64, tolerance: f64 },

    #[error("torus overflow along axis {axis}: required half-width {required:.6}, available {available:.6}")]
    TorusOverflow { axis: usize, required: f64, available: f64 },

    #[error("extrapolation did not converge (successive differences {trend:?})")]
    Extrapolation { trend: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("support escapes the neighbourhood (max value {value:e} on its boundary)")]
    SupportEscapes { value: f64 },

    #[error("point {0:?} is not on the base grid")]
    OffGrid(Vec<f64>),

    #[error("basis Gram matrix is ill-conditioned (condition {condition:e})")]
    Conditioning { condition: f64 },

    #[error("norm below degeneracy threshold ({0:e})")]
    Degenerate(f64),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
