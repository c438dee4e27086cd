//! Cluster topology: node coordinates, undirected adjacency, and the
//! designated cluster head.
//!
//! The on-disk format is line oriented: `node <id> <x> <y>` rows, then
//! `edge <id> <id>` rows, then a single `cluster_head <id>` line. Blank
//! lines and `#` comments are ignored.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Topology {
    node_ids: Vec<u32>,
    coords: Vec<(f64, f64)>,
    /// Row-major N x N symmetric adjacency, self entries false.
    adjacency: Vec<bool>,
    cluster_head: u32,
}

impl Topology {
    /// Builds and validates a topology. Edges are (id, id) pairs; symmetry is
    /// applied automatically. Fails on unknown ids, duplicate ids, an unknown
    /// cluster head, or a disconnected graph.
    pub fn new(
        nodes: Vec<(u32, f64, f64)>,
        edges: &[(u32, u32)],
        cluster_head: u32,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("topology has no nodes".into()));
        }
        let mut node_ids: Vec<u32> = nodes.iter().map(|n| n.0).collect();
        let mut sorted = node_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != node_ids.len() {
            return Err(Error::Config("duplicate node id in topology".into()));
        }
        node_ids = sorted;
        let mut coords = vec![(0.0, 0.0); node_ids.len()];
        for (id, x, y) in &nodes {
            let idx = node_ids.binary_search(id).unwrap();
            coords[idx] = (*x, *y);
        }
        let n = node_ids.len();
        let mut adjacency = vec![false; n * n];
        for (a, b) in edges {
            let ia = node_ids
                .binary_search(a)
                .map_err(|_| Error::Config(format!("edge references unknown node {a}")))?;
            let ib = node_ids
                .binary_search(b)
                .map_err(|_| Error::Config(format!("edge references unknown node {b}")))?;
            if ia == ib {
                continue;
            }
            adjacency[ia * n + ib] = true;
            adjacency[ib * n + ia] = true;
        }
        if node_ids.binary_search(&cluster_head).is_err() {
            return Err(Error::Config(format!(
                "cluster head {cluster_head} is not a topology node"
            )));
        }
        let topo = Topology {
            node_ids,
            coords,
            adjacency,
            cluster_head,
        };
        if n > 1 && !topo.is_connected() {
            return Err(Error::Config(
                "topology is disconnected; every node must reach the cluster head".into(),
            ));
        }
        Ok(topo)
    }

    /// Deterministic chain layout: node ids 1..=n spaced `spacing_m` apart on
    /// the x axis, consecutive nodes linked, cluster head at node 1.
    pub fn line(n: usize, spacing_m: f64) -> Result<Self> {
        let nodes: Vec<(u32, f64, f64)> = (0..n)
            .map(|i| (i as u32 + 1, i as f64 * spacing_m, 0.0))
            .collect();
        let edges: Vec<(u32, u32)> = (1..n).map(|i| (i as u32, i as u32 + 1)).collect();
        Topology::new(nodes, &edges, 1)
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn node_ids(&self) -> &[u32] {
        &self.node_ids
    }

    pub fn cluster_head(&self) -> u32 {
        self.cluster_head
    }

    pub fn index_of(&self, id: u32) -> Result<usize> {
        self.node_ids
            .binary_search(&id)
            .map_err(|_| Error::Routing(format!("node {id} is not in the topology")))
    }

    pub fn coord(&self, idx: usize) -> (f64, f64) {
        self.coords[idx]
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.node_ids.len() + b]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (ax, ay) = self.coords[a];
        let (bx, by) = self.coords[b];
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        (0..self.node_ids.len())
            .filter(|&j| self.connected(idx, j))
            .collect()
    }

    fn is_connected(&self) -> bool {
        let n = self.node_ids.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if self.connected(i, j) && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// 0/1 adjacency as a float matrix, optionally with self-loops, for use
    /// as an attention mask.
    pub fn adjacency_matrix(&self, self_loops: bool) -> crate::nn::Tensor2 {
        let n = self.node_ids.len();
        let mut m = crate::nn::Tensor2::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if self.connected(i, j) || (self_loops && i == j) {
                    m.set(i, j, 1.0);
                }
            }
        }
        m
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut head: Option<u32> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| {
                Error::Config(format!("topology line {}: {what}: {line}", lineno + 1))
            };
            match fields[0] {
                "node" if fields.len() == 4 => {
                    let id = fields[1].parse().map_err(|_| bad("bad node id"))?;
                    let x = fields[2].parse().map_err(|_| bad("bad x coordinate"))?;
                    let y = fields[3].parse().map_err(|_| bad("bad y coordinate"))?;
                    nodes.push((id, x, y));
                }
                "edge" if fields.len() == 3 => {
                    let a = fields[1].parse().map_err(|_| bad("bad edge endpoint"))?;
                    let b = fields[2].parse().map_err(|_| bad("bad edge endpoint"))?;
                    edges.push((a, b));
                }
                "cluster_head" if fields.len() == 2 => {
                    head = Some(fields[1].parse().map_err(|_| bad("bad cluster head id"))?);
                }
                _ => return Err(bad("unrecognized record")),
            }
        }
        let head = head.ok_or_else(|| Error::Config("topology file has no cluster_head line".into()))?;
        Topology::new(nodes, &edges, head)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# hifinet topology\n");
        for (i, id) in self.node_ids.iter().enumerate() {
            let (x, y) = self.coords[i];
            out.push_str(&format!("node {id} {x} {y}\n"));
        }
        let n = self.node_ids.len();
        for i in 0..n {
            for j in i + 1..n {
                if self.connected(i, j) {
                    out.push_str(&format!("edge {} {}\n", self.node_ids[i], self.node_ids[j]));
                }
            }
        }
        out.push_str(&format!("cluster_head {}\n", self.cluster_head));
        out
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_topology_is_connected_chain() {
        let t = Topology::line(4, 50.0).unwrap();
        assert_eq!(t.node_ids(), &[1, 2, 3, 4]);
        assert!(t.connected(0, 1) && t.connected(1, 2) && t.connected(2, 3));
        assert!(!t.connected(0, 2));
        assert_eq!(t.distance(0, 3), 150.0);
        assert_eq!(t.cluster_head(), 1);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let nodes = vec![(1, 0.0, 0.0), (2, 10.0, 0.0), (3, 99.0, 0.0)];
        let err = Topology::new(nodes, &[(1, 2)], 1).unwrap_err();
        assert!(err.to_string().contains("disconnected"));
    }

    #[test]
    fn file_roundtrip() {
        let t = Topology::line(3, 25.0).unwrap();
        let parsed = Topology::parse_str(&t.to_file_string()).unwrap();
        assert_eq!(parsed.node_ids(), t.node_ids());
        assert_eq!(parsed.cluster_head(), t.cluster_head());
        assert_eq!(parsed.distance(0, 2), t.distance(0, 2));
    }

    #[test]
    fn parse_rejects_missing_head() {
        assert!(Topology::parse_str("node 1 0 0\nnode 2 1 0\nedge 1 2\n").is_err());
    }
}
