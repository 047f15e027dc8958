//! Computational Hardy-space and BMO machinery on finite metric measure
//! spaces whose measure is locally doubling but possibly nondoubling.
//!
//! The crate models a metric measure space by a finite point set with an
//! exact distance matrix and positive point weights, and provides:
//!
//! * generators for canonical test spaces (regular trees, paths, grids,
//!   jittered samples of the hyperbolic disk) and the three geometric
//!   diagnostics attached to such spaces: local doubling constants,
//!   isoperimetric profiles and the approximate midpoint property
//!   ([`space`]);
//! * Christ-style dyadic cube forests together with verification of their
//!   structural properties, cube/ball measure interaction bounds and a
//!   boundary-proximal covering selection ([`dyadic`]);
//! * the noncentred dyadic local maximal function, the local sharp
//!   function, relative distributional (good-lambda) checks and the sharp
//!   L^p lower bound ([`maximal`]);
//! * atoms, atomic decompositions, exact H^1 norms by linear programming
//!   with dual certificates, the atom-splitting rescaling algorithm, BMO
//!   norms, John-Nirenberg experiments and the duality pairing bound
//!   ([`hardy_bmo`]);
//! * kernel operators, Hormander-type integral constants, spectral
//!   multipliers of graph Laplacians and empirical endpoint norm
//!   estimates ([`operators`]);
//! * a configuration-driven experiment runner with deterministic,
//!   provenance-tagged reports ([`runner`]).

pub mod dyadic;
pub mod error;
pub mod hardy_bmo;
pub mod maximal;
pub mod numeric;
pub mod operators;
pub mod report;
pub mod runner;
pub mod space;

pub use error::{HblError, Result};
pub use space::{Ball, BallFamily, FiniteSpace};
