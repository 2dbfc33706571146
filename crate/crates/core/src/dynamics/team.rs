use super::control::drag_force;
use super::types::{DragParams, DynError, RobotState};
use crate::math::Vec2;
use crate::windfield::WindFieldSeries;
use rand::Rng;

/// Directed k-nearest-neighbor graph. Row `i` lists the `k` robots closest
/// to robot `i`, nearest first, ties broken by lower index. Self-edges are
/// excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    /// `n * k` neighbor indices, row-major.
    neighbors: Vec<usize>,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Dense 0/1 adjacency, row `i` marking the neighbors of `i`.
    pub fn dense(&self) -> Vec<Vec<u8>> {
        let mut adj = vec![vec![0u8; self.n]; self.n];
        for i in 0..self.n {
            for &j in self.neighbors_of(i) {
                adj[i][j] = 1;
            }
        }
        adj
    }
}

/// Brute-force k-NN by Euclidean distance.
pub fn knn_graph(positions: &[Vec2], k: usize) -> Result<KnnGraph, DynError> {
    let n = positions.len();
    if k == 0 || k >= n {
        return Err(DynError::BadNeighborCount { k, n });
    }
    let mut neighbors = Vec::with_capacity(n * k);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        // stable ordering: distance first, then index (sort is on (d2, j))
        order.sort_by(|&a, &b| {
            let da = (positions[a] - positions[i]).norm_sq();
            let db = (positions[b] - positions[i]).norm_sq();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        neighbors.extend_from_slice(&order[..k]);
    }
    Ok(KnnGraph { n, k, neighbors })
}

/// Row-major square lattice with `ceil(sqrt(n))` columns, anchored at
/// `origin` and spaced `spacing` meters apart.
pub fn lattice_formation(n: usize, spacing: f64, origin: Vec2) -> Vec<Vec2> {
    assert!(n >= 1);
    let cols = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            origin + Vec2::new(col as f64 * spacing, row as f64 * spacing)
        })
        .collect()
}

/// Uniformly random lattice origin such that the whole formation fits
/// inside the `[0, domain]^2` square.
pub fn random_origin(n: usize, spacing: f64, domain: f64, rng: &mut impl Rng) -> Vec2 {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let extent_x = (cols - 1) as f64 * spacing;
    let extent_y = (rows - 1) as f64 * spacing;
    assert!(
        extent_x < domain && extent_y < domain,
        "formation does not fit in the domain"
    );
    Vec2::new(
        rng.gen_range(0.0..domain - extent_x),
        rng.gen_range(0.0..domain - extent_y),
    )
}

/// The robot team plus the communication graph at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamState {
    pub robots: Vec<RobotState>,
    pub t: f64,
    pub graph: KnnGraph,
}

impl TeamState {
    /// Team at rest on the given positions, graph built immediately.
    pub fn at_rest(positions: &[Vec2], k: usize) -> Result<TeamState, DynError> {
        Ok(TeamState {
            robots: positions.iter().map(|&r| RobotState::at_rest(r)).collect(),
            t: 0.0,
            graph: knn_graph(positions, k)?,
        })
    }

    pub fn n(&self) -> usize {
        self.robots.len()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.robots.iter().map(|r| r.r).collect()
    }
}

/// Advance the team one explicit-Euler step under the given per-robot
/// control forces and the wind drag sampled at each robot's position.
/// Positions integrate the pre-step velocity; the neighbor graph is
/// rebuilt from the new positions.
pub fn step_team(
    team: &TeamState,
    controls: &[Vec2],
    series: &WindFieldSeries,
    dt: f64,
    params: &DragParams,
) -> Result<TeamState, DynError> {
    assert!(dt > 0.0);
    assert_eq!(controls.len(), team.n());
    let mut robots = Vec::with_capacity(team.n());
    for (robot, &u) in team.robots.iter().zip(controls.iter()) {
        let flow = series.sample(team.t, robot.r)?;
        let w_eff = if params.relative_drag {
            flow.w - robot.v
        } else {
            flow.w
        };
        let f = u + drag_force(w_eff, params);
        robots.push(RobotState {
            r: robot.r + robot.v * dt,
            v: robot.v + f * (dt / params.mass),
        });
    }
    let positions: Vec<Vec2> = robots.iter().map(|r| r.r).collect();
    Ok(TeamState {
        robots,
        t: team.t + dt,
        graph: knn_graph(&positions, team.graph.k())?,
    })
}
