//! Emitter geolocation from frequency and time differences of arrival.
//!
//! Measurements are turned into polynomial systems ([`builder`]), solved by
//! homotopy continuation ([`homotopy`]), filtered down to physically
//! meaningful positions ([`filter`]) and, for noisy data, combined by a
//! RANSAC search ([`ransac`]). [`sim`] holds the Monte Carlo harness.

pub mod builder;
pub mod filter;
pub mod geometry;
pub mod homotopy;
pub mod poly;
pub mod ransac;
pub mod scenario_file;
pub mod sim;
