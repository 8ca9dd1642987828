pub mod density;
pub mod dims;
pub mod estimators;
pub mod interp;
pub mod model;
pub mod num;
pub mod quad;
pub mod sim;
pub mod tails;
