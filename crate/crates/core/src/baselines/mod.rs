//! Comparison methods sharing the problem, projection and trace machinery of PIPG.

pub mod admm;
pub mod cp;
pub mod dfg;

pub use admm::Admm;
pub use cp::{default_const_steps, ChambollePockAccel, ChambollePockConst};
pub use dfg::DualFastGradient;
