//! Cavity method for spanning subgraphs under local vertex constraints.

pub mod ext;
pub mod measure;
pub mod analytic;
pub mod cavity;
pub mod cli;
pub mod ensembles;
pub mod exact;
pub mod network;
pub mod rde;

pub use ext::ExtReal;
pub use measure::{LocalMeasure, MeasureError, MeasureSpec};
pub use network::{Configuration, Network, NetworkError};
