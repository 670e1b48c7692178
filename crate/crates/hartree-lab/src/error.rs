//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spatial dimension {0} out of range (1..=5)")]
    DimensionOutOfRange(usize),

    #[error("points per axis must be even and >= 4, got {0}")]
    GridSize(usize),

    #[error("box length must be positive and finite, got {0}")]
    BoxLength(f64),

    #[error("grid has {points} points, exceeding the budget of {budget}")]
    MemoryBudget { points: usize, budget: usize },

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("multiplier symbol is non-finite at a nonzero lattice frequency (flat index {0})")]
    NonFiniteSymbol(usize),

    #[error("{0} must be a positive dyadic number 2^k, got {1}")]
    NotDyadic(&'static str, f64),

    #[error(
        "cube-shrink exponent a = {a} violates a > max{{4-2s, 5-4s, -s/2, 3}} = {bound} at s = {s}"
    )]
    CubeExponent { a: u32, s: f64, bound: f64 },

    #[error("frequency threshold {0} is not representable on the grid (max |xi| = {1:.6})")]
    ThresholdOffGrid(f64, f64),

    #[error("cube index {index} out of range ({count} cubes)")]
    CubeIndex { index: usize, count: usize },

    #[error("coefficient shortage: have {have}, need {need}")]
    CoefficientShortage { have: usize, need: usize },

    #[error("kernel exponent must satisfy 0 < gamma < d, got gamma = {gamma} at d = {d}")]
    KernelExponent { gamma: f64, d: usize },

    #[error("time step must be positive and finite, got {0}")]
    TimeStep(f64),

    #[error("defocusing sign required: mu must equal +1, got {0}")]
    FocusingSign(f64),

    #[error("field blow-up guard tripped at t = {t:.6}: sup reached {sup:.3e} (initial {initial:.3e})")]
    BlowUp { t: f64, sup: f64, initial: f64 },

    #[error("Lebesgue exponent must satisfy p >= 1, got {0}")]
    LebesgueExponent(f64),

    #[error("trajectory needs at least {need} snapshots, found {have}")]
    TooFewSnapshots { need: usize, have: usize },

    #[error("interaction kernel |x|^-3 requires d >= 4, got d = {0}")]
    InteractionDimension(usize),

    #[error("weight derivatives degenerate below d = 4, got d = {0}")]
    MorawetzDimension(usize),

    #[error("Hardy weight requires 0 < s < d/2, got s = {s} at d = {d}")]
    HardyExponent { s: f64, d: usize },

    #[error("convolution exponent pairing requires 1 < p < q < infinity with 1/q = 1/p - (d-gamma)/d; got p = {0}")]
    HlsExponent(f64),

    #[error("tail fit needs at least {need} samples, got {have}")]
    TooFewSamples { need: usize, have: usize },

    #[error("missing per-sample statistics: {0}")]
    MissingStatistics(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
