pub mod evaluate;
pub mod folds;
pub mod infer;
pub mod prepare;
pub mod pseudo;
pub mod serve;
