//! Day-ahead electricity price forecasting with autoregressive models whose
//! calibration samples are selected by Narrowest-Over-Threshold change-point
//! detection.

pub mod arx;
pub mod changepoint;
pub mod data;
pub mod eval;
pub mod seed;
pub mod stats;
pub mod strategy;
pub mod synthetic;
pub mod transform;
pub mod window;
