//! Per-frame detection graphs and the classic graph algorithms the
//! post-processing relies on.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CameraId(pub u32);

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Pixel box, `(x, y)` is the upper-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// The point projected onto the ground plane: `(x + w/2, y)`.
    pub fn base_midpoint(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub camera: CameraId,
    pub det_id: u32,
    pub bbox: BBox,
    /// Row in the descriptor store.
    pub descriptor_index: usize,
    pub identity: Option<u32>,
}

/// Undirected edge stored as `(smaller, larger)` node index.
pub type Edge = (usize, usize);

/// Nodes are the detections of one frame in input order; edges join every
/// pair of detections seen by different cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGraph {
    pub nodes: Vec<Detection>,
    pub edges: Vec<Edge>,
}

impl FrameGraph {
    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn frame(&self) -> Option<u32> {
        self.nodes.first().map(|d| d.frame)
    }

    /// Ground-truth label per edge: `true` iff both endpoints share an identity.
    pub fn edge_labels(&self) -> Result<Vec<bool>> {
        self.edges
            .iter()
            .map(|&(i, j)| match (self.nodes[i].identity, self.nodes[j].identity) {
                (Some(a), Some(b)) => Ok(a == b),
                _ => Err(Error::Data(format!(
                    "edge ({i}, {j}) in frame {} has an unlabeled endpoint",
                    self.nodes[i].frame
                ))),
            })
            .collect()
    }

    /// Ground-truth clustering, identities relabelled in first-appearance order.
    pub fn truth_clustering(&self) -> Result<Clustering> {
        let ids = self
            .nodes
            .iter()
            .map(|d| {
                d.identity.map(u64::from).ok_or_else(|| {
                    Error::Data(format!(
                        "detection (frame {}, camera {}, det {}) has no identity",
                        d.frame, d.camera, d.det_id
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Clustering::from_labels(&ids))
    }
}

/// Builds the cross-camera graph of one frame.
pub fn build_frame_graph(detections: &[Detection]) -> Result<FrameGraph> {
    if let Some(first) = detections.first() {
        if let Some(d) = detections.iter().find(|d| d.frame != first.frame) {
            return Err(Error::Argument(format!(
                "detections from frames {} and {} in one graph",
                first.frame, d.frame
            )));
        }
    }
    let mut edges = Vec::new();
    for i in 0..detections.len() {
        for j in i + 1..detections.len() {
            if detections[i].camera != detections[j].camera {
                edges.push((i, j));
            }
        }
    }
    Ok(FrameGraph {
        nodes: detections.to_vec(),
        edges,
    })
}

/// Degree of `node` in `edges`.
pub fn node_flow(edges: &[Edge], node: usize) -> usize {
    edges.iter().filter(|&&(a, b)| a == node || b == node).count()
}

/// Indices of bridge edges (edges in no cycle) via iterative DFS low-link.
pub fn find_bridges(num_nodes: usize, edges: &[Edge]) -> Vec<usize> {
    let adjacency = adjacency(num_nodes, edges);
    let mut disc = vec![usize::MAX; num_nodes];
    let mut low = vec![0usize; num_nodes];
    let mut bridges = Vec::new();
    let mut timer = 0;

    // (node, edge used to enter it, next adjacency position)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..num_nodes {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, usize::MAX, 0));
        while let Some(top) = stack.last_mut() {
            let (v, parent_edge, pos) = *top;
            if pos < adjacency[v].len() {
                top.2 += 1;
                let (w, e) = adjacency[v][pos];
                if e == parent_edge {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, e, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] > disc[u] {
                        bridges.push(parent_edge);
                    }
                }
            }
        }
    }
    bridges.sort_unstable();
    bridges
}

/// Component label per node, numbered by each component's smallest node.
pub fn component_labels(num_nodes: usize, edges: &[Edge]) -> Vec<usize> {
    let adjacency = adjacency(num_nodes, edges);
    let mut label = vec![usize::MAX; num_nodes];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..num_nodes {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &(w, _) in &adjacency[v] {
                if label[w] == usize::MAX {
                    label[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    label
}

pub fn connected_components(num_nodes: usize, edges: &[Edge]) -> Clustering {
    Clustering {
        assignment: component_labels(num_nodes, edges),
    }
}

fn adjacency(num_nodes: usize, edges: &[Edge]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); num_nodes];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    adj
}

/// Node-to-cluster assignment with ids `0..K` and no gaps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    pub assignment: Vec<usize>,
}

impl Clustering {
    /// Relabels arbitrary labels to `0..K` in order of first appearance.
    pub fn from_labels<T: Eq + std::hash::Hash + Copy>(labels: &[T]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { assignment }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

impl FrameGraph {
    pub fn node_flow(&self, node: usize) -> usize {
        node_flow(&self.edges, node)
    }

    pub fn find_bridges(&self) -> Vec<Edge> {
        find_bridges(self.num_nodes(), &self.edges)
            .into_iter()
            .map(|e| self.edges[e])
            .collect()
    }

    pub fn connected_components(&self) -> Clustering {
        connected_components(self.num_nodes(), &self.edges)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn det(frame: u32, camera: u32, det_id: u32) -> Detection {
        Detection {
            frame,
            camera: CameraId(camera),
            det_id,
            bbox: BBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 },
            descriptor_index: det_id as usize,
            identity: None,
        }
    }

    /// Two 4-cliques {1,2,3,4} and {5,6,7,8} joined by (4,5), 0-based.
    pub(crate) fn pruning_figure_edges() -> Vec<Edge> {
        let mut edges = Vec::new();
        for block in [[0, 1, 2, 3], [4, 5, 6, 7]] {
            for a in 0..4 {
                for b in a + 1..4 {
                    edges.push((block[a], block[b]));
                }
            }
        }
        edges.push((3, 4));
        edges.sort_unstable();
        edges
    }

    /// Triangles {1,2,3} and {6,7,8} chained through 4 and 5 by bridges
    /// (2,4), (4,5), (5,7), 0-based.
    pub(crate) fn splitting_figure_edges() -> Vec<Edge> {
        vec![(0, 1), (0, 2), (1, 2), (1, 3), (3, 4), (4, 6), (5, 6), (5, 7), (6, 7)]
    }

    #[test]
    fn bipartite_two_cameras() {
        let dets = [det(0, 1, 0), det(0, 1, 1), det(0, 2, 2), det(0, 2, 3)];
        let g = build_frame_graph(&dets).unwrap();
        assert_eq!(g.num_edges(), 4);
        assert!(g.edges.iter().all(|&(a, b)| dets[a].camera != dets[b].camera && a < b));
    }

    #[test]
    fn single_camera_has_no_edges() {
        let g = build_frame_graph(&[det(0, 1, 0), det(0, 1, 1), det(0, 1, 2)]).unwrap();
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn four_cameras_one_each_is_k4() {
        let g = build_frame_graph(&[det(0, 1, 0), det(0, 2, 1), det(0, 3, 2), det(0, 4, 3)]).unwrap();
        assert_eq!(g.num_edges(), 6);
    }

    #[test]
    fn mixed_frames_rejected() {
        assert!(matches!(build_frame_graph(&[det(0, 1, 0), det(1, 2, 0)]), Err(Error::Argument(_))));
        assert_eq!(build_frame_graph(&[]).unwrap(), FrameGraph::empty());
    }

    #[test]
    fn flows() {
        assert_eq!(node_flow(&[(1, 2)], 0), 0);
        assert_eq!(node_flow(&[(0, 1), (0, 2), (0, 3)], 0), 3);
        let edges = pruning_figure_edges();
        assert_eq!(node_flow(&edges, 3), 4);
        assert_eq!(node_flow(&edges, 4), 4);
    }

    #[test]
    fn bridges_small_cases() {
        assert!(find_bridges(3, &[(0, 1), (0, 2), (1, 2)]).is_empty());
        assert_eq!(find_bridges(4, &[(0, 1), (1, 2), (2, 3)]), vec![0, 1, 2]);
        let edges = pruning_figure_edges();
        let bridges = find_bridges(8, &edges);
        assert_eq!(bridges.len(), 1);
        assert_eq!(edges[bridges[0]], (3, 4));
    }

    #[test]
    fn components() {
        assert_eq!(connected_components(3, &[]).assignment, vec![0, 1, 2]);
        assert_eq!(connected_components(3, &[(0, 1), (0, 2), (1, 2)]).num_clusters(), 1);
        let labels = component_labels(5, &[(3, 4), (1, 3)]);
        assert_eq!(labels, vec![0, 1, 2, 1, 1]);
    }

    #[test]
    fn clustering_relabels_in_first_seen_order() {
        let c = Clustering::from_labels(&[7, 3, 7, 9]);
        assert_eq!(c.assignment, vec![0, 1, 0, 2]);
        assert_eq!(c.cluster_sizes(), vec![2, 1, 1]);
    }
}
