pub mod analytics;
pub mod channel;
pub mod matrix;
pub mod policy;
pub mod power;
pub mod quad;
pub mod rng;
pub mod sensing;
pub mod sim;
pub mod special;
pub mod traffic;
