//! Directed communication graphs.
//!
//! Nodes are indexed `0..N`. An edge `(j, i)` means node `j` transmits to node `i`.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    node_count: usize,
    /// `in_neighbors[i]` holds every `j` with an edge `j -> i`.
    in_neighbors: Vec<BTreeSet<usize>>,
    out_neighbors: Vec<BTreeSet<usize>>,
}

impl DiGraph {
    /// Builds a graph from `(from, to)` pairs. Self-loops are dropped because every
    /// node is implicitly part of its own neighborhood.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut in_neighbors = vec![BTreeSet::new(); node_count];
        let mut out_neighbors = vec![BTreeSet::new(); node_count];
        for &(from, to) in edges {
            for node in [from, to] {
                if node >= node_count {
                    return Err(Error::InvalidNode {
                        node,
                        count: node_count,
                    });
                }
            }
            if from != to {
                in_neighbors[to].insert(from);
                out_neighbors[from].insert(to);
            }
        }
        Ok(Self {
            node_count,
            in_neighbors,
            out_neighbors,
        })
    }

    /// Directed cycle `0 -> 1 -> ... -> N-1 -> 0`.
    pub fn cycle(node_count: usize) -> Self {
        let edges: Vec<_> = (0..node_count).map(|i| (i, (i + 1) % node_count)).collect();
        Self::new(node_count, &edges).expect("cycle edges are valid")
    }

    pub fn complete(node_count: usize) -> Self {
        let edges: Vec<_> = (0..node_count)
            .flat_map(|i| (0..node_count).map(move |j| (i, j)))
            .collect();
        Self::new(node_count, &edges).expect("complete edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.out_neighbors
            .iter()
            .enumerate()
            .flat_map(|(from, outs)| outs.iter().map(move |&to| (from, to)))
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out_neighbors
            .get(from)
            .is_some_and(|s| s.contains(&to))
    }

    fn check(&self, node: usize) -> Result<()> {
        if node < self.node_count {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node,
                count: self.node_count,
            })
        }
    }

    /// `{i} ∪ {j | (j, i) ∈ E}`.
    pub fn neighborhood(&self, i: usize) -> Result<BTreeSet<usize>> {
        self.check(i)?;
        let mut set = self.in_neighbors[i].clone();
        set.insert(i);
        Ok(set)
    }

    fn reach(&self, start: usize, forward: bool) -> Vec<bool> {
        let adj = if forward {
            &self.out_neighbors
        } else {
            &self.in_neighbors
        };
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.node_count == 0 {
            return false;
        }
        self.reach(0, true).iter().all(|&b| b) && self.reach(0, false).iter().all(|&b| b)
    }

    /// Breadth-first spanning tree along edge direction, exploring neighbors in
    /// ascending index order.
    pub fn spanning_tree_rooted_at(&self, root: usize) -> Result<SpanningTree> {
        self.check(root)?;
        let mut parent = vec![None; self.node_count];
        let mut seen = vec![false; self.node_count];
        let mut order = Vec::with_capacity(self.node_count);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.out_neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    queue.push_back(w);
                }
            }
        }
        if order.len() != self.node_count {
            return Err(Error::NotStronglyConnected { root });
        }
        Ok(SpanningTree {
            root,
            parent,
            order,
        })
    }
}

/// Rooted spanning tree with a topological order (every parent precedes its children).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    /// `parent[i]` is `None` only for the root.
    pub parent: Vec<Option<usize>>,
    pub order: Vec<usize>,
}

impl SpanningTree {
    pub fn parent_edges(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(child, p)| p.map(|p| (p, child)))
            .collect()
    }

    /// Position of every node in `order`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (k, &v) in self.order.iter().enumerate() {
            pos[v] = k;
        }
        pos
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.parent.len()];
        for &v in &self.order {
            if let Some(p) = self.parent[v] {
                depth[v] = depth[p] + 1;
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }
}
