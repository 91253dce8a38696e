//! FM85 coupon-collection cardinality estimation.
//!
//! A streaming distinct-count sketch built on the Flajolet-Martin 1985
//! coupon matrix: k rows by (conceptually) infinitely many columns, where
//! the column-j coupon of a row is collected with probability 1/(k*2^j) per
//! item. The crate provides:
//!
//! - the sketch itself with its sliding-window + surprising-set
//!   representation ([`sketch`]),
//! - the ICON, MDL, and HIP estimators plus closed-form error models
//!   ([`estimators`]),
//! - exact and asymptotic entropy of the sketch state ([`entropy`]),
//! - an HLL baseline for comparisons ([`hll`]),
//! - a near-entropy compressed file format ([`compress`]),
//! - an exponentially accelerated simulator ([`simulate`]) and the
//!   flat-region / extrapolation harness that measures the error and bias
//!   constants ([`harness`]).

pub mod compress;
pub mod entropy;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod hash;
pub mod hll;
pub mod simulate;
pub mod sketch;

pub use error::{Error, Result};
pub use sketch::{CouponId, Fm85Sketch, SketchConfig};
