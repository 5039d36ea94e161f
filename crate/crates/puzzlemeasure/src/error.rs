//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit. Variant names follow the failure labels
/// used in reports, so a stage failure in a batch run can be matched by name.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An iterate exceeded the overflow guard.
    #[error("diverged: |z| exceeded overflow guard at step {step}")]
    Diverged { step: usize },

    /// Fixed-point role assignment (alpha/beta) could not be decided.
    #[error("role-undetermined: landing of the angle-0 ray did not converge")]
    RoleUndetermined,

    /// Periodic-point solve beyond the degree budget.
    #[error("degree-too-large: l^p = {degree} exceeds the root-finder budget")]
    DegreeTooLarge { degree: usize },

    /// Argument tracking lost the branch while reading an external angle.
    #[error("branch-lost: angle tracking became ambiguous at step {step}")]
    BranchLost { step: usize },

    /// Newton continuation along a ray failed to converge.
    #[error("newton-stall: ray continuation stalled at potential {potential:.3e}")]
    NewtonStall { potential: f64 },

    /// Ray tail does not decay geometrically.
    #[error("not-landed: ray tail does not contract (ratio {ratio:.4})")]
    NotLanded { ratio: f64 },

    /// The alpha fixed point does not exist in the required sense.
    #[error("no-dividing-fixed-point: {reason}")]
    NoDividingFixedPoint { reason: String },

    /// No co-landing angle cycle was found within the period budget.
    #[error("no-cycle-found: no co-landing angle cycle with period <= {q_max}")]
    NoCycleFound { q_max: usize },

    /// Puzzle boundary curves failed to close up.
    #[error("assembly-failure at {address}")]
    AssemblyFailure { address: String },

    /// Point too close to a puzzle boundary to classify.
    #[error("on-boundary: point within tolerance band of a puzzle boundary")]
    OnBoundary,

    /// Point outside the equipotential disc for the requested depth.
    #[error("outside-potential: G(x) = {g:.3e} exceeds the depth-{depth} level")]
    OutsidePotential { g: f64, depth: usize },

    /// Orbit never re-entered the piece within the horizon.
    #[error("no-return-within-horizon: no return within {horizon} iterations")]
    NoReturnWithinHorizon { horizon: usize },

    /// Pull-back would need deeper refinement than available.
    #[error("address-underflow: depth {needed} needed, graph refined to {available}")]
    AddressUnderflow { needed: usize, available: usize },

    /// Critical point not recurrent at the probed scales.
    #[error("non-recurrent: {reason}")]
    NonRecurrent { reason: String },

    /// Annulus too thin for the grid.
    #[error("degenerate-annulus: gap below two lattice cells at grid {grid_n}")]
    DegenerateAnnulus { grid_n: usize },

    /// A preimage branch collapsed onto the critical point.
    #[error("critical-sample: preimage within 1e-12 of the critical point")]
    CriticalSample,

    /// Power iteration failed to settle.
    #[error("power-iteration-stall: no convergence within {iterations} iterations")]
    PowerIterationStall { iterations: usize },

    /// Pressure does not change sign on the bisection bracket.
    #[error("no-bracket: pressure has no sign change on [0, {delta_hi}]")]
    NoBracket { delta_hi: f64 },

    /// Density denominator has zero mass.
    #[error("zero-denominator: dens(X|Y) undefined for mu(Y) = 0")]
    ZeroDenominator,

    /// Weak-density search on a zero-mass set.
    #[error("zero-mass: mu(X) = 0")]
    ZeroMass,

    /// Distortion check on an uncertified branch.
    #[error("not-univalent: branch lacks a univalent certificate")]
    NotUnivalent,

    /// No atom of the partition met the Julia set.
    #[error("empty-partition")]
    EmptyPartition,

    /// Linear solve failed to converge.
    #[error("solver-stall: residual {residual:.3e} after {iterations} iterations")]
    SolverStall { residual: f64, iterations: usize },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; wraps the underlying error with its stage name.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Filesystem error while writing reports.
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
