//! Minimal shaped-array arithmetic with reverse-mode differentiation.
//!
//! Everything is generic over the scalar type through [`Scalar`]
//! (`f32`/`f64`); the concrete aliases below pin the common choices.
//! Deliberately small: rank-1/2 tensors, the primitive ops the models here
//! need, a define-by-run tape, central-difference gradient checking, and a
//! JSON checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod optim;
pub mod scalar;
pub mod store;
pub mod tape;
pub mod tensor;

pub use checkpoint::{Checkpoint, CkptTensor, CHECKPOINT_VERSION};
pub use gradcheck::{
    gradient_check, gradient_check_store, relu_margin_of, relu_margin_of_store, store_loss,
    DEFAULT_EPS,
};
pub use optim::AdamW;
pub use scalar::Scalar;
pub use store::{Bind, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::{BoolMat, NumError, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type AdamW64 = AdamW<f64>;
