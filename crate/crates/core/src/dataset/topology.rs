use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected joint graph of a skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphTopology {
    pub num_joints: usize,
    pub edges: Vec<(usize, usize)>,
    pub center_joint: usize,
}

/// 1-based NTU RGB+D joint pairs.
const NTU_EDGES: [(usize, usize); 24] = [
    (1, 2),
    (2, 21),
    (3, 21),
    (4, 3),
    (5, 21),
    (6, 5),
    (7, 6),
    (8, 7),
    (9, 21),
    (10, 9),
    (11, 10),
    (12, 11),
    (13, 1),
    (14, 13),
    (15, 14),
    (16, 15),
    (17, 1),
    (18, 17),
    (19, 18),
    (20, 19),
    (22, 23),
    (23, 8),
    (24, 25),
    (25, 12),
];

impl GraphTopology {
    pub fn new(num_joints: usize, edges: Vec<(usize, usize)>, center_joint: usize) -> Result<Self> {
        let topo = Self {
            num_joints,
            edges,
            center_joint,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// The 25-joint Kinect v2 wiring, centred on the spine-shoulder joint.
    pub fn ntu25() -> Self {
        Self {
            num_joints: 25,
            edges: NTU_EDGES.iter().map(|&(a, b)| (a - 1, b - 1)).collect(),
            center_joint: 20,
        }
    }

    /// A chain `0 - 1 - ... - (n-1)`.
    pub fn chain(n: usize) -> Self {
        Self {
            num_joints: n,
            edges: (1..n).map(|i| (i - 1, i)).collect(),
            center_joint: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_joints == 0 {
            return Err(Error::config("topology.num_joints", "must be positive"));
        }
        if self.center_joint >= self.num_joints {
            return Err(Error::config(
                "topology.center_joint",
                format!("{} is not a joint index below {}", self.center_joint, self.num_joints),
            ));
        }
        for &(a, b) in &self.edges {
            if a >= self.num_joints || b >= self.num_joints {
                return Err(Error::config(
                    "topology.edges",
                    format!("edge ({a},{b}) has an endpoint outside [0,{})", self.num_joints),
                ));
            }
        }
        if !self.is_connected() {
            return Err(Error::config("topology.edges", "joint graph is not connected"));
        }
        Ok(())
    }

    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_joints];
        for &(a, b) in &self.edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        adj
    }

    fn is_connected(&self) -> bool {
        let adj = self.neighbours();
        let mut seen = vec![false; self.num_joints];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(j) = queue.pop_front() {
            for &k in &adj[j] {
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
