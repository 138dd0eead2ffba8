//! Deterministic numerical kernel shared by the statistics.

pub mod linalg;
pub mod quadrature;
pub mod quantile;
pub mod rng;
pub mod special;

pub use linalg::{annihilator, kron, projection, sym_inv_sqrt, unvec, vec_of, SymPd};
pub use quadrature::{gauss_legendre, QuadratureRule, DEFAULT_NODES};
pub use quantile::empirical_quantile;
pub use rng::RngStream;
