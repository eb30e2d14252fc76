use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("matrix is not hyperbolic: eigenvalue modulus {modulus} is within {tol} of 1")]
    NotHyperbolic { modulus: f64, tol: f64 },

    #[error("matrix determinant is {det}, expected a unit")]
    NotUnimodular { det: String },

    #[error("A^{period} - I is singular, the map cannot be hyperbolic")]
    SingularPower { period: usize },

    #[error("Newton continuation diverged for a period-{period} orbit at epsilon = {epsilon_reached}")]
    NewtonDivergence { period: usize, epsilon_reached: f64 },

    #[error("period-{period} orbit lost hyperbolicity during continuation (Floquet modulus {modulus})")]
    HyperbolicityLoss { period: usize, modulus: f64 },

    #[error("cone family is not invariant near ({x}, {y})")]
    ConeEscape { x: f64, y: f64 },

    #[error("quadrature did not reach {target:e}; best error estimate {reached:e}")]
    QuadratureNonconvergence { target: f64, reached: f64 },

    #[error("evaluation point is within {dist:e} of resonance lattice line k={k}, j={j}")]
    NearPole { k: usize, j: i64, dist: f64 },

    #[error("a lattice pole lies within {dist:e} of the integration contour")]
    PoleOnContour { dist: f64 },

    #[error("value {value} violates a convergence margin of {tol:e}")]
    ConvergenceMargin { value: f64, tol: f64 },

    #[error("requested radius {radius} reaches beyond the lattice window (J covers |lambda| <= {window})")]
    WindowTooSmall { radius: f64, window: f64 },

    #[error("window around T = {center} contains no closed orbits")]
    EmptyWindow { center: f64 },

    #[error("test function support [{lo}, {hi}] exceeds the orbit table horizon {horizon}")]
    SupportExceedsTable { lo: f64, hi: f64, horizon: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
