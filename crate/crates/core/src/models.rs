//! Reference instances used throughout the tests and the documentation.

use nalgebra::dmatrix;

use crate::graphkit::DiGraph;
use crate::numkit::RealMatrix;
use crate::sysmodel::SystemModel;

/// Two-state plant with an unstable measured mode, observed only by node 1 of a
/// directed 3-cycle `1 -> 2 -> 3 -> 1`; nodes 2 and 3 have no measurements.
pub fn motivating() -> SystemModel {
    SystemModel::new(
        dmatrix![0.5, 2.0; 0.0, 3.0],
        vec![
            dmatrix![0.0, 1.0],
            RealMatrix::zeros(0, 2),
            RealMatrix::zeros(0, 2),
        ],
        dmatrix![1.0, 0.0],
        DiGraph::cycle(3),
    )
}

/// Three-state plant with a single two-row sensor; only the first row is needed
/// to estimate the first state.
pub fn illustration() -> SystemModel {
    SystemModel::new(
        dmatrix![0.0, 2.0, 0.0; 3.0, 0.0, 0.0; 0.0, 0.0, 5.0],
        vec![dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0]],
        dmatrix![1.0, 0.0, 0.0],
        DiGraph::new(1, &[]).expect("single node"),
    )
}

/// The three-state plant with its two measurement rows split over two nodes
/// connected both ways.
pub fn two_sensor() -> SystemModel {
    SystemModel::new(
        dmatrix![0.0, 2.0, 0.0; 3.0, 0.0, 0.0; 0.0, 0.0, 5.0],
        vec![dmatrix![0.0, 1.0, 0.0], dmatrix![0.0, 0.0, 1.0]],
        dmatrix![1.0, 0.0, 0.0],
        DiGraph::cycle(2),
    )
}
