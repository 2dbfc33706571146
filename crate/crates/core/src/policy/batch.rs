use crate::autodiff::{Neighborhoods, Tensor};
use crate::dynamics::KnnGraph;
use crate::math::Vec2;
use std::sync::Arc;

/// Graph-structured input layout for one or more stacked teams.
///
/// Stacking keeps every team of a training batch in a single tape graph:
/// row indices are absolute across the stack and the neighborhood lists
/// never cross team boundaries, so one forward pass covers the whole batch
/// with large matrix multiplies.
#[derive(Debug, Clone)]
pub struct TeamBatch {
    neigh: Arc<Neighborhoods>,
    /// Per-row aggregate of relative neighbor positions,
    /// `sum_j (r_j - r_i)`, rows x 2.
    relpos: Tensor,
}

impl TeamBatch {
    pub fn single(graph: &KnnGraph, positions: &[Vec2]) -> TeamBatch {
        TeamBatch::stacked([(graph, positions)])
    }

    pub fn stacked<'a>(teams: impl IntoIterator<Item = (&'a KnnGraph, &'a [Vec2])>) -> TeamBatch {
        let mut neigh = Neighborhoods::new();
        let mut rel = Vec::new();
        let mut base = 0usize;
        for (graph, positions) in teams {
            let n = graph.n();
            assert_eq!(positions.len(), n, "positions do not match the graph");
            let mut row = Vec::with_capacity(graph.k());
            for i in 0..n {
                row.clear();
                row.extend(graph.neighbors_of(i).iter().map(|&j| base + j));
                neigh.push_row(&row);
                let mut acc = Vec2::ZERO;
                for &j in graph.neighbors_of(i) {
                    acc += positions[j] - positions[i];
                }
                rel.push(acc.x);
                rel.push(acc.y);
            }
            base += n;
        }
        let rows = base;
        TeamBatch {
            neigh: Arc::new(neigh),
            relpos: Tensor::from_vec(rows, 2, rel),
        }
    }

    /// Assemble directly from a neighborhood structure and a precomputed
    /// relative-position aggregate (tests and benches).
    pub fn from_parts(neigh: Neighborhoods, relpos: Tensor) -> TeamBatch {
        assert_eq!(neigh.rows(), relpos.rows());
        assert_eq!(relpos.cols(), 2);
        TeamBatch {
            neigh: Arc::new(neigh),
            relpos,
        }
    }

    pub fn rows(&self) -> usize {
        self.relpos.rows()
    }

    pub fn neigh(&self) -> &Arc<Neighborhoods> {
        &self.neigh
    }

    pub fn relpos(&self) -> &Tensor {
        &self.relpos
    }
}
