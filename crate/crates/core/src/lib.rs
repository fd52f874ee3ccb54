//! Polynomial protection of face embeddings, worst-case inversion attacks
//! against the protected templates, and a key-selection procedure that
//! rejects keys under which the cosine attack succeeds.
//!
//! Pipeline overview:
//!
//! 1. [`embeddings`]: load or synthesize embeddings, L2-normalize them.
//! 2. [`transform`]: draw per-subject keys and protect each embedding.
//! 3. [`metrics`]: score all template pairs, derive FMR-anchored thresholds,
//!    FNMR, DET curves and inversion success rates.
//! 4. [`attack`]: invert protected templates with full knowledge of the keys,
//!    using a least-squares ([`solvers::solve_lm`]) or cosine
//!    ([`solvers::minimize_qn`]) formulation.
//! 5. [`keyselect`]: redraw keys until the cosine attack fails at a loose
//!    threshold.

pub mod attack;
pub mod embeddings;
mod error;
pub mod keyselect;
pub mod linalg;
pub mod metrics;
pub mod seed;
pub mod solvers;
pub mod transform;
mod vecops;

pub use error::{Error, Result};
pub use vecops::{dot, norm};
