//! Dense containers, Householder primitives and counted multiply kernels.

mod counter;
mod dense;
mod householder;
mod kernels;
mod types;

pub use counter::FlopCounter;
pub use dense::{MatMut, MatRef, Matrix};
pub use householder::{
    apply_block_reflector, apply_block_reflector_inplace, apply_reflector_left, apply_reflector_right, build_wy,
    house_vector, make_reflector, ReflectorPanel, Side,
};
pub use kernels::{gemm, matmul_counted, matmul_op, rank2k_update_block, sym_rank2k_update, Op};
pub use types::{BandMatrix, ColumnBlock, SymmetricMatrix, TridiagonalMatrix, DEFAULT_SYM_TOL};

pub(crate) use kernels::dot;

/// Unit roundoff convention used by every bound in this crate: 2^-52.
pub const EPS: f64 = f64::EPSILON;
