//! From edge probabilities to identity clusters: binarization, the flow
//! (pruning) and cardinality (splitting) constraints, connected components.

use crate::error::{Error, Result};
use crate::featurize::{Calibrations, DescriptorStore};
use crate::graph::{component_labels, find_bridges, Clustering, Edge, FrameGraph};
use crate::mpn::{mpn_forward, ModelParams};

/// Probability at or above which an edge is active.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Edges with their final-step probabilities and a working active set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGraph {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
    pub probs: Vec<f64>,
    pub active: Vec<bool>,
    /// Number of cameras `M`.
    pub num_cameras: usize,
}

impl ProbGraph {
    /// All edges start active.
    pub fn new(num_nodes: usize, edges: Vec<Edge>, probs: Vec<f64>, num_cameras: usize) -> Result<Self> {
        if edges.len() != probs.len() {
            return Err(Error::Shape(format!("{} edges but {} probabilities", edges.len(), probs.len())));
        }
        if num_cameras < 2 {
            return Err(Error::Argument(format!("camera count must be >= 2, got {num_cameras}")));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Argument(format!("edge probability {p} outside [0, 1]")));
        }
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= b || b >= num_nodes) {
            return Err(Error::Argument(format!("edge ({a}, {b}) is not canonical for {num_nodes} nodes")));
        }
        let active = vec![true; edges.len()];
        Ok(Self { num_nodes, edges, probs, active, num_cameras })
    }

    /// Indices of active edges, in canonical order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.active[e]).collect()
    }

    pub fn active_edges(&self) -> Vec<Edge> {
        self.active_indices().into_iter().map(|e| self.edges[e]).collect()
    }

    pub fn flows(&self) -> Vec<usize> {
        let mut flow = vec![0; self.num_nodes];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if self.active[e] {
                flow[a] += 1;
                flow[b] += 1;
            }
        }
        flow
    }

    pub fn components(&self) -> Clustering {
        Clustering {
            assignment: component_labels(self.num_nodes, &self.active_edges()),
        }
    }

    /// Bridge flags over all edges (inactive edges are never bridges).
    fn bridge_flags(&self) -> Vec<bool> {
        let idx = self.active_indices();
        let sub: Vec<Edge> = idx.iter().map(|&e| self.edges[e]).collect();
        let mut flags = vec![false; self.edges.len()];
        for b in find_bridges(self.num_nodes, &sub) {
            flags[idx[b]] = true;
        }
        flags
    }

    /// Applies the removal rule to `candidates`: the only bridge, else the
    /// lowest-probability bridge, else the lowest-probability edge. Ties go
    /// to the earlier canonical edge.
    fn remove_one(&mut self, candidates: &[usize]) -> Option<usize> {
        let bridges = self.bridge_flags();
        let bridge_candidates: Vec<usize> = candidates.iter().copied().filter(|&e| bridges[e]).collect();
        let pool = if bridge_candidates.is_empty() { candidates } else { &bridge_candidates };
        let victim = pool
            .iter()
            .copied()
            .reduce(|best, e| if self.probs[e] < self.probs[best] { e } else { best })?;
        self.active[victim] = false;
        Some(victim)
    }
}

/// Active flag per probability: inactive iff `p < threshold`.
pub fn binarize(probs: &[f64], threshold: f64) -> Vec<bool> {
    probs.iter().map(|&p| p >= threshold).collect()
}

/// Deactivates edges whose probability is below `threshold`.
pub fn apply_binarization(graph: &mut ProbGraph, threshold: f64) {
    for (a, f) in graph.active.iter_mut().zip(binarize(&graph.probs, threshold)) {
        *a = *a && f;
    }
}

/// Removes edges until every node has at most `M - 1` active edges.
///
/// The lowest-indexed violating node is handled first; candidates are its
/// incident active edges. Bridges are recomputed after every removal.
pub fn prune(mut graph: ProbGraph) -> ProbGraph {
    let limit = graph.num_cameras - 1;
    loop {
        let flows = graph.flows();
        let Some(node) = (0..graph.num_nodes).find(|&v| flows[v] > limit) else {
            return graph;
        };
        let candidates: Vec<usize> = (0..graph.edges.len())
            .filter(|&e| graph.active[e] && (graph.edges[e].0 == node || graph.edges[e].1 == node))
            .collect();
        graph.remove_one(&candidates);
    }
}

/// Removes edges until every connected component has at most `M` nodes.
///
/// The violating component with the smallest node index is handled first;
/// candidates are its active edges.
pub fn split(mut graph: ProbGraph) -> ProbGraph {
    let limit = graph.num_cameras;
    loop {
        let comps = graph.components();
        let sizes = comps.cluster_sizes();
        // Component ids follow smallest member index, so the first violator wins.
        let Some(target) = (0..sizes.len()).find(|&c| sizes[c] > limit) else {
            return graph;
        };
        let candidates: Vec<usize> = (0..graph.edges.len())
            .filter(|&e| graph.active[e] && comps.assignment[graph.edges[e].0] == target)
            .collect();
        graph.remove_one(&candidates);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostProcessing {
    pub threshold: f64,
    pub prune: bool,
    pub split: bool,
}

impl Default for PostProcessing {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            prune: true,
            split: true,
        }
    }
}

/// Binarize, optionally prune and split, then take connected components.
pub fn cluster_from_probs(graph: ProbGraph, post: &PostProcessing) -> Clustering {
    let mut g = graph;
    apply_binarization(&mut g, post.threshold);
    if post.prune {
        g = prune(g);
    }
    if post.split {
        g = split(g);
    }
    g.components()
}

/// Full inference for one frame.
pub fn associate(
    graph: &FrameGraph,
    params: &ModelParams,
    store: &DescriptorStore,
    calibs: &Calibrations,
    post: &PostProcessing,
) -> Result<Clustering> {
    if graph.num_nodes() == 0 {
        return Ok(Clustering::default());
    }
    let (preds, _) = mpn_forward(graph, params, store, calibs)?;
    let prob_graph = ProbGraph::new(
        graph.num_nodes(),
        graph.edges.clone(),
        preds.final_step().to_vec(),
        calibs.len().max(2),
    )?;
    Ok(cluster_from_probs(prob_graph, post))
}
