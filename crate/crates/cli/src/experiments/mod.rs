pub mod metrics;
pub mod posterior;
pub mod prior;
pub mod sumkernel;
pub mod toy;
