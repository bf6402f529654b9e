//! Exact symbolic Finsler geometry.

pub mod coeff;
pub mod dsl;
pub mod error;
pub mod expr;
pub mod finsler;
pub mod gcd;
pub mod golden;
pub mod identities;
pub mod parse;
pub mod nullity;
pub mod oracle;
pub mod poly;
pub mod tensor;
pub mod tower;

pub use coeff::Coefficient;
pub use error::{MathError, MathResult};
pub use expr::Expression;
pub use tower::Tower;
