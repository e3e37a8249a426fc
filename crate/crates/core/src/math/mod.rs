//! Small numerical building blocks shared by the pricing modules.

pub mod isotonic;
pub mod jet;
pub mod normal;
pub mod roots;
pub mod spline;

pub use jet::Jet;
