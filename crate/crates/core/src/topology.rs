//! Joint graphs: edge lists, adjacency construction, symmetric degree
//! normalization.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Undirected joint graph. Edges are stored as `(parent, child)` pairs but
/// the graph itself has no direction; names default to `joint_NN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n_joints: usize,
    edges: Vec<(usize, usize)>,
    names: Vec<String>,
}

impl Topology {
    /// Validates joint indices, duplicate edges (in either orientation),
    /// self-edges, and connectivity.
    pub fn new(n_joints: usize, edges: Vec<(usize, usize)>) -> Result<Topology> {
        if n_joints == 0 {
            return Err(Error::Topology("graph needs at least one joint".into()));
        }
        for &(a, b) in &edges {
            if a >= n_joints || b >= n_joints {
                return Err(Error::Topology(format!(
                    "edge ({a}, {b}) references a joint outside 0..{n_joints}"
                )));
            }
            if a == b {
                return Err(Error::Topology(format!("self-edge at joint {a}")));
            }
        }
        let mut seen = vec![false; n_joints * n_joints];
        for &(a, b) in &edges {
            let key = a.min(b) * n_joints + a.max(b);
            if seen[key] {
                return Err(Error::Topology(format!("duplicate edge ({a}, {b})")));
            }
            seen[key] = true;
        }
        // Connectivity via flood fill from joint 0.
        let mut reached = vec![false; n_joints];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(j) = stack.pop() {
            for &(a, b) in &edges {
                let other = if a == j {
                    b
                } else if b == j {
                    a
                } else {
                    continue;
                };
                if !reached[other] {
                    reached[other] = true;
                    stack.push(other);
                }
            }
        }
        if let Some(missing) = reached.iter().position(|&r| !r) {
            return Err(Error::Topology(format!(
                "joint {missing} is not connected to joint 0"
            )));
        }
        let names = (0..n_joints).map(|j| format!("joint_{j:02}")).collect();
        Ok(Topology { n_joints, edges, names })
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn set_name(&mut self, joint: usize, name: &str) -> Result<()> {
        if joint >= self.n_joints {
            return Err(Error::Topology(format!(
                "name for joint {joint} outside 0..{}",
                self.n_joints
            )));
        }
        self.names[joint] = name.to_string();
        Ok(())
    }

    /// The 22-joint body graph used by the bundled topology file: a spine
    /// chain with two arm and two leg chains hanging off it.
    pub fn kinect22() -> Topology {
        let edges = vec![
            (0, 1),
            (1, 2),
            (2, 3),
            (3, 4),
            (4, 5),
            (2, 6),
            (6, 7),
            (7, 8),
            (8, 9),
            (2, 10),
            (10, 11),
            (11, 12),
            (12, 13),
            (0, 14),
            (14, 15),
            (15, 16),
            (16, 17),
            (0, 18),
            (18, 19),
            (19, 20),
            (20, 21),
        ];
        let mut topo = Topology::new(22, edges).expect("static graph is valid");
        let names = [
            "waist",
            "spine",
            "chest",
            "neck",
            "head",
            "head_tip",
            "collar_l",
            "upper_arm_l",
            "forearm_l",
            "hand_l",
            "collar_r",
            "upper_arm_r",
            "forearm_r",
            "hand_r",
            "upper_leg_l",
            "lower_leg_l",
            "foot_l",
            "toes_l",
            "upper_leg_r",
            "lower_leg_r",
            "foot_r",
            "toes_r",
        ];
        for (j, name) in names.iter().enumerate() {
            topo.set_name(j, name).expect("index in range");
        }
        topo
    }
}

/// Parses the topology text format: one `parent child` pair per line
/// (0-based), `#` comments, blank lines ignored, and optional
/// `name <index> <label>` lines attaching joint names.
pub fn parse_topology(text: &str, n_joints: usize) -> Result<Topology> {
    let mut edges = Vec::new();
    let mut names: Vec<(usize, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().expect("non-empty line has a token");
        if first == "name" {
            let idx: usize = tokens
                .next()
                .ok_or_else(|| Error::Parse { row, detail: "name line needs an index".into() })?
                .parse()
                .map_err(|_| Error::Parse { row, detail: "name index is not an integer".into() })?;
            let label = tokens
                .next()
                .ok_or_else(|| Error::Parse { row, detail: "name line needs a label".into() })?;
            if tokens.next().is_some() {
                return Err(Error::Parse { row, detail: "trailing tokens on name line".into() });
            }
            names.push((idx, label.to_string()));
            continue;
        }
        let parent: usize = first
            .parse()
            .map_err(|_| Error::Parse { row, detail: format!("bad joint index {first:?}") })?;
        let child_tok = tokens
            .next()
            .ok_or_else(|| Error::Parse { row, detail: "edge line needs two indices".into() })?;
        let child: usize = child_tok
            .parse()
            .map_err(|_| Error::Parse { row, detail: format!("bad joint index {child_tok:?}") })?;
        if tokens.next().is_some() {
            return Err(Error::Parse { row, detail: "trailing tokens on edge line".into() });
        }
        edges.push((parent, child));
    }
    let mut topo = Topology::new(n_joints, edges)?;
    for (idx, label) in names {
        topo.set_name(idx, &label)?;
    }
    Ok(topo)
}

/// Dense nonnegative symmetric adjacency over the joints.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    values: Tensor,
    normalized: bool,
}

impl AdjacencyMatrix {
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn n(&self) -> usize {
        self.values.shape()[0]
    }
}

/// Binary adjacency from the edge list, optionally with ones on the
/// diagonal. Self-loops are what keep every joint's own features in play
/// during aggregation, so they default to on at the call sites.
pub fn build_adjacency(topo: &Topology, self_loops: bool) -> AdjacencyMatrix {
    let n = topo.n_joints();
    let mut a = Tensor::zeros(vec![n, n]);
    for &(p, c) in topo.edges() {
        a.set(&[p, c], 1.0);
        a.set(&[c, p], 1.0);
    }
    if self_loops {
        for j in 0..n {
            a.set(&[j, j], 1.0);
        }
    }
    AdjacencyMatrix { values: a, normalized: false }
}

/// Symmetric degree normalization D^{-1/2} A D^{-1/2}. Requires a square,
/// symmetric, nonnegative matrix; a zero-degree row is a degenerate graph.
pub fn normalize_adjacency(adj: &AdjacencyMatrix) -> Result<AdjacencyMatrix> {
    let a = &adj.values;
    let shape = a.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::dim(format!("adjacency must be square, got {shape:?}")));
    }
    let n = shape[0];
    let data = a.data();
    for i in 0..n {
        for j in 0..i {
            if libm::fabs(data[i * n + j] - data[j * n + i]) > 1e-12 {
                return Err(Error::Topology(format!(
                    "adjacency is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if data.iter().any(|&v| v < 0.0) {
        return Err(Error::Topology("adjacency has a negative entry".into()));
    }
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = data[i * n..(i + 1) * n].iter().sum();
        if deg <= 0.0 {
            return Err(Error::DegenerateGraph(format!("joint {i} has zero degree")));
        }
        inv_sqrt_deg[i] = 1.0 / libm::sqrt(deg);
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = data[i * n + j] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    Ok(AdjacencyMatrix { values: Tensor::raw(vec![n, n], out), normalized: true })
}
