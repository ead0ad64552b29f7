use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("term has {found} exponents, expected {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("non-finite coefficient {0}")]
    NonFiniteCoefficient(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: String, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("potential gradient does not match the stored potential in component {0}")]
    PotentialMismatch(usize),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown parameter `{param}` for model `{model}`")]
    UnknownParameter { model: String, param: String },
    #[error("parameter `{0}` has the wrong shape")]
    ParameterShape(String),
    #[error("this operation needs {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("model has no explicit potential G")]
    MissingPotential,
    #[error("model damping is not of Lienard form f_i(x_i) * y_i")]
    NotLienard,
    #[error("scalar check requires a one-dimensional model, got n = {0}")]
    NotScalar(usize),
    #[error("diffusion must be constant for this check")]
    NonConstantDiffusion,
    #[error("invalid verification options: {0}")]
    BadOptions(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive and at least one step, got T = {t_end}, dt = {dt}")]
    BadHorizon { t_end: f64, dt: f64 },
    #[error("escape radius {r_max} must exceed the initial norm {initial_norm}")]
    BadEscapeRadius { r_max: f64, initial_norm: f64 },
    #[error("record stride must be at least 1")]
    BadStride,
    #[error("initial state has dimension {found}, system expects {expected}")]
    InitialDimension { expected: usize, found: usize },
    #[error("initial state must be finite")]
    NonFiniteInitial,
    #[error("at least {min} levels are required, got {found}")]
    TooFewLevels { min: usize, found: usize },
    #[error("step count {steps} is not divisible by the coarsest ratio {ratio}")]
    IndivisibleLevels { steps: usize, ratio: usize },
    #[error("need at least one path")]
    NoPaths,
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}
