pub mod error;
pub mod linalg;
pub mod model;
pub mod response;
pub mod sfwm;
pub mod analysis;
pub mod fit;
