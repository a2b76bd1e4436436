pub mod cli;
pub mod conformal;
pub mod expr;
pub mod functionals;
pub mod kwcert;
pub mod quadrature;
pub mod sphere;
