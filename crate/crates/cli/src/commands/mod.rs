pub mod calibrate;
pub mod impact;
pub mod map;
pub mod simulate;
pub mod stationary;
