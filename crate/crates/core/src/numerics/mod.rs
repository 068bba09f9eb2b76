//! Dense row-major matrices, activations, parameter initialization and the
//! seeded random source shared by every other module.

mod activation;
mod matrix;
mod params;
mod rng;

pub use activation::{relu, sigmoid, sigmoid_scalar, tanh};
pub(crate) use matrix::{gemm_nn, gemm_nt, gemm_tn};
pub use matrix::{matmul, Matrix};
pub use params::ParamSet;
pub use rng::SeededRng;

/// Initialization scheme for a parameter matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Draws from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    UniformScaled,
    Zeros,
}

/// Initializes a `rows x cols` matrix, taking `cols` as the fan-in.
pub fn init_params(rows: usize, cols: usize, scheme: Init, rng: &mut SeededRng) -> Matrix {
    init_params_with_fan_in(rows, cols, cols, scheme, rng)
}

/// Same as [`init_params`] with an explicit fan-in; used for bias rows, which
/// take the fan-in of the weight they accompany.
pub fn init_params_with_fan_in(rows: usize, cols: usize, fan_in: usize, scheme: Init, rng: &mut SeededRng) -> Matrix {
    assert!(
        rows >= 1 && cols >= 1,
        "parameter matrices need at least one row and column"
    );
    match scheme {
        Init::Zeros => Matrix::zeros(rows, cols),
        Init::UniformScaled => {
            let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
            let data = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
            Matrix::from_vec(rows, cols, data).expect("length matches by construction")
        }
    }
}
