pub mod bench;
pub mod bo;
pub mod fit;
pub mod metrics;
pub mod ntk;
pub mod uq;
