//! Shared fixtures for the criterion benches.

use polydisc::bump::{decompose_mean_zero, decompose_plain};
use polydisc::harness::{random_function, InputModel};
use polydisc::paraproduct::standard_collection;
use polydisc::{
    AdaptedBump, BumpDecomposition, BumpProfile, GridFunction, Hybrid, HybridSpec, Paraproduct,
    ParaproductSpec, Pattern, ProfileKind, RealInterval, Result, Symbol,
};

pub fn field(seed: u64, dim: usize, l: u32) -> Result<GridFunction> {
    random_function(seed, dim, l, &InputModel::GaussianField { amplitude: 1.0, decay: None })
}

/// Hybrid operator over the standard collection.
pub fn hybrid(pattern: &str, l: u32) -> Result<Hybrid> {
    let pattern: Pattern = pattern.parse()?;
    let collection = standard_collection(pattern.dim(), l)?;
    Hybrid::new(HybridSpec::new(pattern, collection)?, l)
}

pub fn paraproduct(type_vector: &[u8], l: u32) -> Result<Paraproduct> {
    let spec = ParaproductSpec::new(type_vector.to_vec(), standard_collection(type_vector.len(), l)?)?;
    Paraproduct::new(spec, l)
}

pub fn symbol(name: &str, dim: usize) -> Result<Symbol> {
    Symbol::named(name, dim)
}

pub fn decomposition(mean_zero: bool, l: u32) -> Result<BumpDecomposition> {
    let interval = RealInterval::new(0.375, 0.625)?;
    let phi = AdaptedBump::build(interval, BumpProfile::of_kind(ProfileKind::GaussianLike), mean_zero, false, l)?;
    if mean_zero {
        decompose_mean_zero(&phi, 10, 4)
    } else {
        decompose_plain(&phi, 10, 4)
    }
}
