//! Three-axis evaluation: downstream utility, statistical fidelity, and
//! structure preservation (differential expression, co-expression).

pub mod bio;
pub mod statistical;
pub mod utility;
