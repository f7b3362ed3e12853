//! Instance files, verification checks, campaigns and text reports for
//! the `skewlift` workbench, plus the code behind the `skewlift` binary.

pub mod app;
pub mod campaign;
pub mod checks;
pub mod format;
pub mod report;
