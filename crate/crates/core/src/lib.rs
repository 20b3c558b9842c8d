pub mod aggregate;
pub mod experiments;
pub mod imaging;
pub mod model;
pub mod patching;
pub mod rng;
pub mod synth;
pub mod tensor;
