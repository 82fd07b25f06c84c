mod budget;
mod ops;
mod report;
mod timing;

pub use budget::*;
pub use ops::*;
pub use report::*;
pub use timing::*;
