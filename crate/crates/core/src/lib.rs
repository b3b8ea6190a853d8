pub mod classify;
pub mod client;
pub mod dataset;
pub mod eval;
pub mod project;
pub mod raster;
pub mod rle;
pub mod segment;
