pub mod angle;
pub mod complex;
pub mod dynamics;
pub mod error;
pub mod potential;
pub mod puzzle;
pub mod ray;
