pub mod error;
pub mod model;
pub mod poly;
pub mod ptrees;
pub mod scalar;
pub mod tableau;
pub mod quad;
pub mod clock;
pub mod harness;
pub mod stepper;
