pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod shrinkage;
pub mod structural;
pub mod tree;
pub mod vol;
