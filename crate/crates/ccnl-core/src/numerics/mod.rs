//! Dense-tensor algebra, reverse-mode tape, Adam, and the
//! finite-difference gradient oracle.

pub mod adam;
pub mod gradcheck;
pub mod param;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use param::{ParamId, ParamStore, Parameter, TapeBinding};
pub use tape::{Tape, Var};
pub use tensor::{matmul, softmax, Tensor};
