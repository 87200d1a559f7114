//! Discrete dyadic harmonic analysis on the periodic torus: adapted bumps and their
//! dilated-support decomposition, multi-parameter paraproducts, square/maximal hybrids, the
//! stopping-time machinery behind restricted weak-type estimates, and bilinear Fourier
//! multipliers, with a seeded experiment harness.

pub mod bump;
pub mod dyadic;
pub mod error;
pub mod grid;
pub mod harness;
pub mod multiplier;
pub mod paraproduct;
pub mod sqmax;
pub mod stopping;
pub mod tensor;

pub use bump::{AdaptedBump, BumpDecomposition, BumpProfile, ProfileKind};
pub use dyadic::{DyadicInterval, DyadicRectangle, RealInterval, RectangleCollection, ShiftLattice, ShiftParams};
pub use error::{Error, Result};
pub use grid::{FrequencyGrid, GridFunction, GridSet, GridShape};
pub use harness::{ExperimentConfig, ExperimentKind, ExperimentOutput};
pub use multiplier::Symbol;
pub use paraproduct::{AxisShifts, Paraproduct, ParaproductSpec};
pub use sqmax::{Hybrid, HybridSpec, Pattern};
pub use stopping::{ExceptionalSets, StoppingConfig, StoppingPipeline};
