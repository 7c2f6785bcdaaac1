//! Grid-strength analysis and adaptive STATCOM control design for
//! multi-inverter power systems.
//!
//! The crate models a transmission network hosting grid-following
//! inverter-based resources (IBRs) and STATCOMs, reduces the network to the
//! device nodes, evaluates small-signal stability through the generalized
//! short-circuit ratio (gSCR) and its critical value (CgSCR), and synthesizes
//! an operating-condition-scheduled set of STATCOM PI gains that keeps the
//! system stable as dispatch changes.
//!
//! Module map:
//! - [`netmodel`]: network reduction, grid-strength eigenstructure,
//!   participation factors, dynamic network realization.
//! - [`devices`]: dq-frame small-signal models of IBRs and STATCOMs,
//!   aggregation, and rational fitting of scanned responses.
//! - [`stability`]: full-system assembly, critical/bounding subsystems,
//!   dominant eigenvalues, CgSCR search, stability verdicts.
//! - [`synthesis`]: structured static-output-feedback gain search per
//!   reactive-current interval; H-infinity norm evaluation.
//! - [`scheduler`]: online interval selection from telemetry.
//! - [`sim`]: linear time-domain disturbance simulation.
//! - [`config`]: JSON case description shared by the CLI and demos.
//! - [`cases`]: bundled and randomly generated study cases.

pub mod cases;
pub mod config;
pub mod devices;
pub mod error;
pub mod lsys;
pub mod netmodel;
pub mod scheduler;
pub mod sim;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result};
pub use lsys::LinearSystem;
