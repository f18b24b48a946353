pub mod activation;
pub mod attention;
pub mod conv;
pub mod elementwise;
pub mod loss;
pub mod matmul;
pub mod resize;
pub mod shape;
pub mod softmax;

pub use activation::activate;
pub use attention::attention_weights;
pub use conv::convolve;
pub use elementwise::add_bias;
pub use loss::mean_relative_abs_error;
pub use matmul::matmul;
pub use resize::{linear_taps, resize_linear};
pub use shape::{broadcast_axis, concat, gather_rows};
pub use softmax::softmax;
