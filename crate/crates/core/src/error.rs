use alloc::string::String;

use crate::rational::Rational;
use crate::set::MSet;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong while building or checking a finite model.
///
/// Input errors describe malformed data. The `*Failure`/`Counterexample`
/// variants are raised by verifiers and always carry a witness.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("ground set of size {size} exceeds the cap of {cap} points")]
    CapExceeded { size: usize, cap: usize },

    #[error("ground set must have at least one point")]
    EmptyGround,

    #[error("set {set} is not contained in a ground set of {ground} points")]
    OutsideGround { set: MSet, ground: usize },

    #[error("blocks do not form a partition: {reason}")]
    NotPartition { reason: &'static str },

    #[error("algebra is not a sub-σ-algebra: atom {atom} is not measurable in the finer algebra")]
    NotSubAlgebra { atom: MSet },

    #[error("invalid weights: {reason}")]
    InvalidWeights { reason: String },

    #[error("set {set} is not measurable")]
    NotMeasurable { set: MSet },

    #[error("function is not measurable: points {first} and {second} share an atom but take different values")]
    FunctionNotMeasurable { first: usize, second: usize },

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("precondition violated: {reason}")]
    Precondition { reason: String },

    #[error("null set {null_atom} of the ambient algebra is not in the base algebra")]
    NullSetsMissing { null_atom: MSet },

    #[error("{set} is not a valid envelope of {target}")]
    NotEnvelope { set: MSet, target: MSet },

    #[error("chain is not increasing at position {index}")]
    NotIncreasing { index: usize },

    #[error("marginal mismatch on {side} atom {atom}: expected {expected}, found {found}")]
    MarginalMismatch {
        side: char,
        atom: MSet,
        expected: Rational,
        found: Rational,
    },

    #[error("disintegration fails the measurability condition at points {first} and {second} of one atom (set {set})")]
    Dis1Failure {
        set: MSet,
        first: usize,
        second: usize,
    },

    #[error("integral identity fails for {set}: {lhs} != {rhs}")]
    IdentityFailure {
        check: &'static str,
        set: MSet,
        lhs: Rational,
        rhs: Rational,
    },

    #[error("not inner regular: no inner approximation of {set} within the sub-algebra")]
    NotInnerRegular { set: MSet },

    #[error("density axiom '{axiom}' fails at {first} / {second}")]
    AxiomFailure {
        axiom: &'static str,
        first: MSet,
        second: MSet,
    },

    #[error("conditional-expectation counterexample at y={y}, set {set}: discrepancy {discrepancy}")]
    Counterexample {
        y: usize,
        set: MSet,
        discrepancy: Rational,
    },

    #[error("construction invariant broken ({what}) at set {set}, y={y}")]
    ConstructionFailure {
        what: &'static str,
        set: MSet,
        y: usize,
    },

    #[error("section identity fails ({check}) for set {set} at y={y} on points {points}")]
    SectionFailure {
        check: &'static str,
        set: MSet,
        y: usize,
        points: MSet,
    },
}
