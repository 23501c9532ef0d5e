//! Symmetry-aware instance segmentation and 6-D pose voting for bin-picking
//! point clouds.
//!
//! The crate covers everything downstream of a per-point pose regressor:
//! symmetry groups and the symmetry-aware pose distance ([`so3`]), the
//! training losses ([`loss`]), normalized workpiece space ([`workspace`]),
//! two-stage mean-shift clustering with pose voting ([`cluster`]),
//! instance-level F1 and point-wise recall ([`metrics`]), a synthetic scene
//! generator with an oracle predictor ([`synth`]) and file formats plus the
//! end-to-end pipeline ([`io`], [`pipeline`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod cluster;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod so3;
pub mod sum;
pub mod synth;
pub mod workspace;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use so3::{Pose, Quaternion, RotationMatrix, Symmetry, SymmetryDescriptor, SymmetryGroup};
