use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty lattice: no site of scale eps={eps} falls inside the shape")]
    EmptyLattice { eps: f64 },

    #[error("lattice scale eps={eps} outside (0,1)")]
    ScaleOutOfRange { eps: f64 },

    #[error("dimension {d} unsupported here (supported: {supported})")]
    UnsupportedDimension { d: usize, supported: &'static str },

    #[error("periodic domain requires 1/eps integral, got eps={eps}")]
    NonIntegralTorus { eps: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("point {point:?} outside the covered region")]
    OutsideDomain { point: Vec<f64> },

    #[error("site {site:?} outside the lattice domain")]
    SiteOutsideDomain { site: Vec<i64> },

    #[error("boundary collar values missing at site {site:?}")]
    MissingCollar { site: Vec<i64> },

    #[error("patch site {offset:?} missing from supplied patch values")]
    MissingPatchSite { offset: Vec<i64> },

    #[error("operation requires d=m=2, got d={d}, m={m}")]
    RequiresPlanar { d: usize, m: usize },

    #[error("initial configuration violates the constraint set (margin {margin})")]
    InitViolatesConstraint { margin: f64 },

    #[error("zero acceptance over a full adaptation window at the step floor (site {site})")]
    ZeroAcceptance { site: usize },

    #[error("exact Gaussian oracle requires a quadratic potential, got {kind}")]
    NonQuadratic { kind: String },

    #[error("quadrature dimension {dims} exceeds the supported maximum {max}")]
    QuadratureDimension { dims: usize, max: usize },

    #[error("constraint set has (numerically) zero measure inside the truncation box")]
    MeasureZeroConstraint,

    #[error("overlap failure in thermodynamic integration: ESS {ess:.1} < {min_ess} at path point {lambda}")]
    LowOverlap { ess: f64, min_ess: f64, lambda: f64 },

    #[error("window touches the boundary collar")]
    WindowTouchesBoundary,

    #[error("gradient {grad:?} outside the tabulated deformation range")]
    GradientOutOfTable { grad: Vec<f64> },

    #[error("no grid point satisfies both certificates (best margins: {best_grad_sum:.6} vs {delta}, {best_mass:.6} vs {ell})")]
    NoQualifyingPoint {
        best_grad_sum: f64,
        delta: f64,
        best_mass: f64,
        ell: f64,
    },

    #[error("theta profile requires ramp width R > 2*R0 (R={ramp}, R0={range})")]
    RampTooNarrow { ramp: f64, range: f64 },

    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },

    #[error("compute stage '{task}' failed: {msg}")]
    Compute { task: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse(_) => 2,
            _ => 1,
        }
    }
}
