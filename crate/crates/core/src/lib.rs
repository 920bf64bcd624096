//! Matrix-system representations of free groups: normalization, twins,
//! spectral classification of the boundary representation, the intertwiner
//! with the twin, and matrix-coefficient asymptotics.
//!
//! Everything is generic over the real scalar (`f32` or `f64`); the aliases
//! at the crate root fix `f64`.

pub mod coefficients;
pub mod error;
pub mod free_group;
pub mod generate;
pub mod intertwiner;
pub mod linalg;
pub mod scalar;
pub mod spectral;
pub mod system;
pub mod tolerances;
pub mod twin;

pub use error::{Error, Result};
pub use free_group::{inv, Alphabet, Letter, Word};
pub use spectral::{ClassLabel, Verdict};
pub use tolerances::Tolerances;

pub type MatrixSystem = system::MatrixSystem<f64>;
pub type SystemSpec = system::SystemSpec<f64>;
pub type NormalizedSystem = system::NormalizedSystem<f64>;
pub type TwinPackage = twin::TwinPackage<f64>;
pub type SpectralReport = spectral::SpectralReport<f64>;
pub type MultiplicativeFunction = coefficients::MultiplicativeFunction<f64>;
pub type CoefficientSeries = coefficients::CoefficientSeries<f64>;
pub type Intertwiner = intertwiner::Intertwiner<f64>;
pub type CMat = scalar::CMat<f64>;
pub type CVec = scalar::CVec<f64>;
pub type Complex = scalar::C<f64>;
