//! Spectral abscissa, frequency response and L-infinity / H-infinity norms.

pub(crate) mod eig;
mod norm;
mod spectral;
mod transfer;

pub use norm::{hinf_norm, hinf_norm_with, linf_norm, linf_oracle_grid, NormOptions, NormResult, DEFAULT_CERTIFY_MAX_ORDER, DEFAULT_NORM_TOL};
pub use spectral::{spectral_abscissa, SpectralOptions, SpectralResult};
pub use transfer::transfer_eval;

pub(crate) use transfer::shifted_lu;
