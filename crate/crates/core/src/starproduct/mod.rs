pub mod checks;
pub mod engine;
pub mod function;
pub mod quadrature;
pub mod spectral;
