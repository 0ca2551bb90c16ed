//! Minimal dense linear algebra with reverse-mode autodiff and Adam.
//!
//! Everything is 64-bit: the finite-difference checks this crate leans on
//! are not reliable in `f32`.

mod adam;
mod matrix;
mod params;
mod tape;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use params::{ParamVector, Segment};
pub use tape::{sigmoid, simplex_projection, softplus, NodeId, Tape, LEAKY_SLOPE};

/// Seeded Glorot-uniform initialization: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..a))
}
