pub mod activations;
pub mod env;
pub mod harness;
pub mod model;
pub mod ppo;
pub mod tensor;
