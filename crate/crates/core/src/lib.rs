pub mod confidence;
pub mod evaluation;
pub mod gateway;
pub mod geometry;
pub mod jsonfmt;
pub mod par;
pub mod preprocess;
pub mod raster;
pub mod simulator;
pub mod supervision;
pub mod synthesis;
pub(crate) mod linalg;
