use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },

    #[error("dimension mismatch: declared n={declared}, {detail}")]
    DimensionMismatch { declared: usize, detail: String },

    #[error("unknown builtin system `{0}`")]
    UnknownBuiltin(String),

    #[error("domain error in component f{}: {what}", component + 1)]
    Domain { component: usize, what: String },

    #[error("state has length {found}, expected {expected}")]
    StateLength { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trajectory left the divergence radius at t={t} (last state {state:?})")]
    Diverged { t: f64, state: Vec<f64> },

    #[error("maximum number of steps ({max_steps}) exceeded at t={t}")]
    MaxSteps { max_steps: usize, t: f64 },

    #[error("step size underflow at t={t}")]
    StepUnderflow { t: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (|f|={residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("singular matrix")]
    Singular,

    #[error("eigenbasis is defective or ill-conditioned (condition number {condition:e})")]
    IllConditionedEigenbasis { condition: f64 },

    #[error("no section crossing found: the orbit is not oscillating")]
    NotOscillating,

    #[error("return map not contracting: closure tolerance never met (last gap {gap:e})")]
    NoClosure { gap: f64 },

    #[error("monodromy matrix has no multiplier near 1 (closest {closest})")]
    NoTrivialMultiplier { closest: Complex64 },

    #[error("radial projection failed: {0}")]
    RadialProjection(String),

    #[error("Laplace average did not converge by T={horizon} (relative change {residual:e})")]
    AverageNotConverged { horizon: f64, residual: f64 },

    #[error(
        "dominant eigenvalue {lambda} is complex: a stable hyperbolic fixed point is differentially \
         positive only when its dominant Jacobian eigenvalue is real, so no invariant pointed cone exists"
    )]
    ComplexDominant { lambda: Complex64 },

    #[error("attractor is not stable hyperbolic: {0}")]
    NotStable(String),

    #[error("phase undefined at {x:?}: |phi| = {modulus:e} (phaseless set)")]
    AngleUndefined { x: Vec<f64>, modulus: f64 },

    #[error("cone rows are not injective at {x:?} (condition number {condition:e})")]
    NotInjective { x: Vec<f64>, condition: f64 },

    #[error("cone at {x:?} is not resolved: condition number {condition:e} against averaging accuracy {accuracy:e}")]
    UnresolvedCone { x: Vec<f64>, condition: f64, accuracy: f64 },

    #[error("dominant row is not real at {x:?} (imaginary part {ratio:e} of row norm)")]
    DominantNotReal { x: Vec<f64>, ratio: f64 },

    #[error("degenerate cone at {x:?}: {msg}")]
    DegenerateCone { x: Vec<f64>, msg: String },

    #[error("null space of subordinate rows has dimension != 1 at {x:?} (singular values {singular_values:?})")]
    NullSpace { x: Vec<f64>, singular_values: Vec<f64> },

    #[error("Perron-Frobenius direction is not inside the cone at {x:?}")]
    PfOutsideCone { x: Vec<f64> },

    #[error("seed tangent is not inside the cone at the backward point {x:?}")]
    SeedOutsideCone { x: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed input at line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("point {x:?} is outside the tabulated cone field")]
    OutsideTable { x: Vec<f64> },
}
