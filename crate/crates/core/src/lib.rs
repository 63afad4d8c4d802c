pub mod cli;
pub mod error;
pub mod hyperterms;
pub mod indicators;
pub mod special;
pub mod preselection;
pub mod series;
pub mod tiling;
