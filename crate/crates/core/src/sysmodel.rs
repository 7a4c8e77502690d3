//! Problem instances: plant `x[k+1] = A x[k]`, sensors `y_i[k] = C_i x[k]`,
//! functions of interest `psi[k] = L x[k]`, and the communication graph.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphkit::DiGraph;
use crate::numkit::{numerical_rank, vstack, RealMatrix, ToleranceConfig};

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub a: RealMatrix,
    /// One measurement matrix per node; a node without measurements has a 0-row matrix.
    pub sensors: Vec<RealMatrix>,
    pub l: RealMatrix,
    pub graph: DiGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Per-node selected row indices into `C_i`, strictly increasing within a node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RowSelection {
    pub rows: Vec<Vec<usize>>,
}

impl RowSelection {
    pub fn empty(node_count: usize) -> Self {
        Self {
            rows: vec![Vec::new(); node_count],
        }
    }

    /// Every row of every node in `set`.
    pub fn all_rows(model: &SystemModel, set: &[usize]) -> Self {
        let mut sel = Self::empty(model.node_count());
        for &i in set {
            sel.rows[i] = (0..model.sensors[i].nrows()).collect();
        }
        sel
    }

    pub fn from_pairs(node_count: usize, pairs: &[(usize, usize)]) -> Self {
        let mut sel = Self::empty(node_count);
        for &(node, row) in pairs {
            sel.rows[node].push(row);
        }
        sel.rows.iter_mut().for_each(|r| {
            r.sort_unstable();
            r.dedup();
        });
        sel
    }

    /// `(node, row)` pairs in ascending node order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(node, rows)| rows.iter().map(move |&r| (node, r)))
            .collect()
    }

    pub fn row_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Nodes contributing at least one row.
    pub fn nodes(&self) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| !self.rows[i].is_empty())
            .collect()
    }
}

impl SystemModel {
    pub fn new(a: RealMatrix, sensors: Vec<RealMatrix>, l: RealMatrix, graph: DiGraph) -> Self {
        Self {
            a,
            sensors,
            l,
            graph,
        }
    }

    /// Same as [`SystemModel::new`] followed by [`SystemModel::validate`], failing on any issue.
    pub fn validated(
        a: RealMatrix,
        sensors: Vec<RealMatrix>,
        l: RealMatrix,
        graph: DiGraph,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        let m = Self::new(a, sensors, l, graph);
        let report = m.validate(tol);
        if report.is_valid() {
            Ok(m)
        } else {
            Err(Error::Validation(report.issues.join("; ")))
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of functions of interest.
    pub fn r(&self) -> usize {
        self.l.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn validate(&self, tol: &ToleranceConfig) -> ValidationReport {
        let mut issues = Vec::new();
        let n = self.a.nrows();
        if !self.a.is_square() {
            issues.push(format!(
                "A is {}x{}, expected square",
                self.a.nrows(),
                self.a.ncols()
            ));
        }
        if n == 0 {
            issues.push("state dimension must be at least 1".into());
        }
        let mut finite = self.a.iter().chain(self.l.iter()).all(|v| v.is_finite());
        for (i, c) in self.sensors.iter().enumerate() {
            if c.ncols() != n {
                issues.push(format!(
                    "C_{} has {} columns, expected {n}",
                    i + 1,
                    c.ncols()
                ));
            }
            finite &= c.iter().all(|v| v.is_finite());
        }
        if !finite {
            issues.push("model contains non-finite entries".into());
        }
        if self.l.ncols() != n {
            issues.push(format!("L has {} columns, expected {n}", self.l.ncols()));
        } else if self.l.nrows() == 0 {
            issues.push("L must have at least one row".into());
        } else if finite && numerical_rank(&self.l, tol) < self.l.nrows() {
            issues.push("L is rank deficient (full row rank required)".into());
        }
        if self.graph.node_count() != self.sensors.len() {
            issues.push(format!(
                "graph has {} nodes but there are {} sensors",
                self.graph.node_count(),
                self.sensors.len()
            ));
        }
        if self.sensors.is_empty() {
            issues.push("at least one sensor node is required".into());
        }
        ValidationReport { issues }
    }

    fn check_selection(&self, set: &[usize], sel: &RowSelection) -> Result<()> {
        if sel.rows.len() != self.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "selection covers {} nodes, model has {}",
                sel.rows.len(),
                self.node_count()
            )));
        }
        for (node, rows) in sel.rows.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            if !set.contains(&node) {
                return Err(Error::Validation(format!(
                    "row selection uses node {} outside the node set",
                    node + 1
                )));
            }
            if rows.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(
                    "selected rows must be strictly increasing".into(),
                ));
            }
            if let Some(&bad) = rows.iter().find(|&&r| r >= self.sensors[node].nrows()) {
                return Err(Error::Validation(format!(
                    "row {} out of range for C_{}",
                    bad + 1,
                    node + 1
                )));
            }
        }
        Ok(())
    }

    /// Stack of the selected rows of `C_i`, `i ∈ set`, in ascending node order.
    /// `None` selects every row of every node in the set.
    pub fn stacked_c(&self, set: &[usize], sel: Option<&RowSelection>) -> Result<RealMatrix> {
        Ok(self.stacked_c_with_owners(set, sel)?.0)
    }

    /// Like [`SystemModel::stacked_c`] but also returns the owning node of each row.
    pub fn stacked_c_with_owners(
        &self,
        set: &[usize],
        sel: Option<&RowSelection>,
    ) -> Result<(RealMatrix, Vec<usize>)> {
        if set.is_empty() {
            return Err(Error::EmptySelection);
        }
        for &node in set {
            if node >= self.node_count() {
                return Err(Error::InvalidNode {
                    node,
                    count: self.node_count(),
                });
            }
        }
        let owned;
        let sel = match sel {
            Some(s) => {
                self.check_selection(set, s)?;
                if s.row_count() == 0 {
                    return Err(Error::EmptySelection);
                }
                s
            }
            None => {
                owned = RowSelection::all_rows(self, set);
                &owned
            }
        };
        let mut nodes: Vec<usize> = set.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let n = self.n();
        let mut parts = Vec::new();
        let mut owners = Vec::new();
        for node in nodes {
            for &row in &sel.rows[node] {
                parts.push(self.sensors[node].rows(row, 1).into_owned());
                owners.push(node);
            }
        }
        Ok((vstack(parts.iter(), n), owners))
    }

    /// Collective measurement matrix `C = [C_1; ...; C_N]`.
    pub fn full_c(&self) -> RealMatrix {
        vstack(self.sensors.iter(), self.n())
    }
}
