//! Detection-efficiency attacks on protocols whose outputs come from
//! untrusted, lossy measurement devices.
//!
//! The crate covers the full chain from ideal behaviors to certificates:
//!
//! * [`scenario`] and [`quantum`]: settings/outcome counts, ideal behaviors
//!   `Q(ab|xy)` and a small Born-rule evaluator.
//! * [`lossy`]: detector-efficiency models with an explicit no-click outcome.
//! * [`attack`]: the single-party efficiency-tuning attack on a target set
//!   of Bob's settings.
//! * [`improved`]: the two-sided attack that also exploits Alice's losses.
//! * [`bound`]: the tripartite no-signalling box in which Eve learns any
//!   setting pair a posteriori.
//! * [`polytope`]: local-polytope membership with re-checkable certificates.
//! * [`channel`]: fibre-loss planning for the number of key bases.
//!
//! Settings and ideal outcomes are 0-based inside the API. Lossy outcome
//! codes use `0` for the no-click event and `1..=d` for clicks, which is also
//! the convention of every serialized format.

pub mod attack;
pub mod bound;
pub mod channel;
pub mod error;
pub mod improved;
pub mod lossy;
pub mod polytope;
pub mod quantum;
pub mod scenario;
pub mod simulation;

mod simplex;
mod table;

pub use error::{Error, Result};

/// Tolerance for exact algebraic identities.
pub const EXACT_TOL: f64 = 1e-12;

/// Tolerance for eigenvalue-based positivity checks.
pub const PSD_TOL: f64 = 1e-10;

/// Lossy outcome code of the no-click event.
pub const NO_CLICK: usize = 0;
