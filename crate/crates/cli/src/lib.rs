//! Command-line front end for the augmentation pipeline.
//!
//! `visaug process` builds a project directory, `visaug serve` exposes built
//! projects over HTTP, and `visaug saliency` renders the saliency map of a
//! single frame for inspection.

pub mod commands;
pub mod server;
