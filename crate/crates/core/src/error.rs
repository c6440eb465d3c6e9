use thiserror::Error;

/// Failures raised by the numerical kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("on-cut: argument {0} lies on the branch cut (positive imaginary axis)")]
    OnCut(String),
    #[error("degenerate-denominator: |{what}| = {modulus:e}")]
    DegenerateDenominator { what: &'static str, modulus: f64 },
    #[error("pole-proximity: shared denominator {modulus:e} below tolerance at z = {z}")]
    PoleProximity { z: String, modulus: f64 },
    #[error("interior-denominator-degenerate: |D| = {0:e}")]
    InteriorDenominator(f64),
    #[error("not-a-resonance: residual {0:e}")]
    NotAResonance(f64),
    #[error("no-convergence in {op} (index {index}): {trace}")]
    NoConvergence { op: &'static str, index: usize, trace: String },
    #[error("multiplicity≠1: argument principle count {0}")]
    Multiplicity(i64),
    #[error("derivative-degenerate: |dG/dE| = {0:e}")]
    DerivativeDegenerate(f64),
    #[error("case-mismatch: operation requires the {0} case")]
    CaseMismatch(&'static str),
    #[error("node-misalignment: {0} is not a grid node")]
    NodeMisalignment(&'static str),
    #[error("singular-solve: pivot {0:e} underflowed")]
    SingularSolve(f64),
    #[error("step-solve-failure at step {0}")]
    StepSolveFailure(usize),
    #[error("norm-growth: relative growth {growth:e} at step {step}")]
    NormGrowth { step: usize, growth: f64 },
    #[error("enclosure-violation: trace estimate {0} is not near an integer")]
    EnclosureViolation(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
