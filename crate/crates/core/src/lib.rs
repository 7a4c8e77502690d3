//! Distributed functional observers for discrete-time LTI systems.
//!
//! A network of sensor nodes, each measuring `y_i[k] = C_i x[k]` of a plant
//! `x[k+1] = A x[k]`, cooperates over a directed graph so that every node
//! asymptotically reconstructs `psi[k] = L x[k]`.
//!
//! The pipeline is:
//! 1. [`leaderselect`] finds a functional leader set `S*` and the stacked basis `Σ`.
//! 2. [`decomp`] reduces the plant to `phi[k] = Σ x[k]` and splits it per leader.
//! 3. [`observernet`] designs leader gains and spanning-tree consensus weights.
//! 4. [`simcli`] runs the whole thing from scenario files and simulates it.

pub mod decomp;
pub mod error;
pub mod graphkit;
pub mod leaderselect;
pub mod models;
pub mod numkit;
pub mod observernet;
pub mod random;
pub mod simcli;
pub mod sysmodel;

pub use error::{Error, Result};
pub use numkit::{RealMatrix, RealVector, ToleranceConfig};
pub use sysmodel::{RowSelection, SystemModel};
