use super::{Aggregation, MessageSource, ModelParams, EDGE_DIM, NODE_DIM};
use crate::error::{Error, Result};
use crate::featurize::{descriptor, edge_features, Calibrations, DescriptorStore};
use crate::graph::FrameGraph;
use crate::numeric::loss::{bce_logit_grad, bce_loss_weighted};
use crate::numeric::matrix::Matrix;
use crate::numeric::mlp::{mlp_backward_acc, mlp_backward_from_preact_acc, mlp_eval, mlp_forward, Layer, MlpParams, Tape};

/// Updated edge state from both endpoint states and the previous edge state.
pub fn edge_update(h_vi: &[f64], h_vj: &[f64], h_e: &[f64], update: &MlpParams) -> Result<Vec<f64>> {
    if h_vi.len() != NODE_DIM || h_vj.len() != NODE_DIM || h_e.len() != EDGE_DIM {
        return Err(Error::Shape(format!(
            "edge update expects {NODE_DIM}/{NODE_DIM}/{EDGE_DIM} inputs, got {}/{}/{}",
            h_vi.len(),
            h_vj.len(),
            h_e.len()
        )));
    }
    let input: Vec<f64> = h_vi.iter().chain(h_vj).chain(h_e).copied().collect();
    mlp_eval(update, &input)
}

/// New state of `node`: the sum (or mean) of messages over its incident
/// edges, in ascending neighbour order. Each message is the node update
/// network applied to `[source node state, updated edge state]`.
pub fn node_update(
    graph: &FrameGraph,
    node: usize,
    prev_node_states: &[Vec<f64>],
    new_edge_states: &[Vec<f64>],
    update: &MlpParams,
    source: MessageSource,
    aggregation: Aggregation,
) -> Result<Vec<f64>> {
    let mut incident: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .enumerate()
        .filter_map(|(e, &(a, b))| match (a == node, b == node) {
            (true, _) => Some((b, e)),
            (_, true) => Some((a, e)),
            _ => None,
        })
        .collect();
    incident.sort_unstable();
    let weight = aggregation.weight(incident.len());
    let mut state = vec![0.0; update.output_dim()];
    for (nbr, e) in incident {
        let src = match source {
            MessageSource::SelfState => node,
            MessageSource::Neighbor => nbr,
        };
        let input: Vec<f64> = prev_node_states[src].iter().chain(&new_edge_states[e]).copied().collect();
        let msg = mlp_eval(update, &input)?;
        state.iter_mut().zip(&msg).for_each(|(s, m)| *s += weight * m);
    }
    Ok(state)
}

/// Edge probabilities for every step `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePredictions {
    /// `probs[l - 1][e]`.
    pub probs: Vec<Vec<f64>>,
}

impl EdgePredictions {
    pub fn steps(&self) -> usize {
        self.probs.len()
    }

    pub fn num_edges(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    /// Probabilities after the last step.
    pub fn final_step(&self) -> &[f64] {
        self.probs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total(&self) -> usize {
        self.probs.iter().map(Vec::len).sum()
    }
}

/// Everything recorded during [`mpn_forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct MpnTrace {
    incidence: Vec<Vec<(usize, usize, usize)>>,
    node_tapes: Vec<Tape>,
    edge_tapes: Vec<Tape>,
    /// `node_states[l][i]`, `l = 0..=L`.
    pub node_states: Vec<Vec<Vec<f64>>>,
    /// `edge_states[l][e]`, `l = 0..=L`.
    pub edge_states: Vec<Vec<Vec<f64>>>,
    /// Edge update pre-activations for steps `1..=L`.
    edge_preacts: Vec<Vec<[f64; EDGE_DIM]>>,
    /// Message pre-activations for steps `1..=L`, indexed `[e][endpoint]`.
    msg_preacts: Vec<Vec<[Vec<f64>; 2]>>,
    classifier_tapes: Vec<Vec<Tape>>,
}

/// Per node: `(neighbour, edge, endpoint slot of the node in the edge)`,
/// sorted by neighbour.
fn incidence(graph: &FrameGraph) -> Vec<Vec<(usize, usize, usize)>> {
    let mut inc = vec![Vec::new(); graph.num_nodes()];
    for (e, &(a, b)) in graph.edges.iter().enumerate() {
        inc[a].push((b, e, 0));
        inc[b].push((a, e, 1));
    }
    for list in &mut inc {
        list.sort_unstable();
    }
    inc
}

fn single_layer<'a>(name: &str, net: &'a MlpParams) -> Result<&'a Layer> {
    match net.layers.as_slice() {
        [layer] => Ok(layer),
        _ => Err(Error::Shape(format!("{name} must be a single layer, got {}", net.layers.len()))),
    }
}

fn block_matvec(w: &Matrix, offset: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; w.rows()];
    w.matvec_block_acc(offset, x, &mut y);
    y
}

/// Runs encoders, `L` message passing steps and the classifier on every
/// edge at every step.
pub fn mpn_forward(
    graph: &FrameGraph,
    params: &ModelParams,
    store: &DescriptorStore,
    calibs: &Calibrations,
) -> Result<(EdgePredictions, MpnTrace)> {
    let steps = params.steps;
    if steps == 0 {
        return Err(Error::Config("message passing steps must be >= 1".into()));
    }
    if params.descriptor_dim() != store.dim() {
        return Err(Error::Config(format!(
            "model expects {}-dim descriptors, store has {}",
            params.descriptor_dim(),
            store.dim()
        )));
    }
    let edge_upd = single_layer("edge_update", &params.edge_update)?;
    let node_upd = single_layer("node_update", &params.node_update)?;
    let n = graph.num_nodes();
    let m = graph.num_edges();

    let mut node_tapes = Vec::with_capacity(n);
    let mut h_nodes = Vec::with_capacity(n);
    for i in 0..n {
        let (h, tape) = mlp_forward(&params.node_encoder, descriptor(graph, store, i)?)?;
        h_nodes.push(h);
        node_tapes.push(tape);
    }
    let mut edge_tapes = Vec::with_capacity(m);
    let mut h_edges = Vec::with_capacity(m);
    for f in edge_features(graph, store, calibs)? {
        let (h, tape) = mlp_forward(&params.edge_encoder, &f)?;
        h_edges.push(h);
        edge_tapes.push(tape);
    }

    let incidence = incidence(graph);
    let mut node_states = vec![h_nodes];
    let mut edge_states = vec![h_edges];
    let mut edge_preacts = Vec::with_capacity(steps);
    let mut msg_preacts = Vec::with_capacity(steps);
    let mut classifier_tapes = Vec::with_capacity(steps);
    let mut probs = Vec::with_capacity(steps);

    for _ in 0..steps {
        let prev_nodes = node_states.last().expect("step 0 present");
        let prev_edges = edge_states.last().expect("step 0 present");

        // Edge update, first-layer blocks precomputed per node.
        let first: Vec<Vec<f64>> = prev_nodes.iter().map(|h| block_matvec(&edge_upd.weight, 0, h)).collect();
        let second: Vec<Vec<f64>> = prev_nodes.iter().map(|h| block_matvec(&edge_upd.weight, NODE_DIM, h)).collect();
        let mut pre_step = Vec::with_capacity(m);
        let mut new_edges = Vec::with_capacity(m);
        for (e, &(i, j)) in graph.edges.iter().enumerate() {
            let mut z = [0.0; EDGE_DIM];
            z.copy_from_slice(&edge_upd.bias);
            edge_upd.weight.matvec_block_acc(2 * NODE_DIM, &prev_edges[e], &mut z);
            for k in 0..EDGE_DIM {
                z[k] += first[i][k] + second[j][k];
            }
            new_edges.push(z.iter().map(|v| v.max(0.0)).collect::<Vec<f64>>());
            pre_step.push(z);
        }

        // Node update, source-state block precomputed per node.
        let src_proj: Vec<Vec<f64>> = prev_nodes.iter().map(|h| block_matvec(&node_upd.weight, 0, h)).collect();
        let mut msg_step: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; m];
        let mut new_nodes = vec![vec![0.0; NODE_DIM]; n];
        for (i, list) in incidence.iter().enumerate() {
            let weight = params.aggregation.weight(list.len());
            for &(nbr, e, slot) in list {
                let src = match params.message_source {
                    MessageSource::SelfState => i,
                    MessageSource::Neighbor => nbr,
                };
                let mut z = node_upd.bias.clone();
                node_upd.weight.matvec_block_acc(NODE_DIM, &new_edges[e], &mut z);
                for (zk, pk) in z.iter_mut().zip(&src_proj[src]) {
                    *zk += pk;
                }
                for (s, zk) in new_nodes[i].iter_mut().zip(&z) {
                    *s += weight * zk.max(0.0);
                }
                msg_step[e][slot] = z;
            }
        }

        let mut tapes = Vec::with_capacity(m);
        let mut p_step = Vec::with_capacity(m);
        for h in &new_edges {
            let (y, tape) = mlp_forward(&params.classifier, h)?;
            p_step.push(y[0]);
            tapes.push(tape);
        }

        edge_preacts.push(pre_step);
        msg_preacts.push(msg_step);
        classifier_tapes.push(tapes);
        probs.push(p_step);
        node_states.push(new_nodes);
        edge_states.push(new_edges);
    }

    Ok((
        EdgePredictions { probs },
        MpnTrace {
            incidence,
            node_tapes,
            edge_tapes,
            node_states,
            edge_states,
            edge_preacts,
            msg_preacts,
            classifier_tapes,
        },
    ))
}

/// Sum of BCE over every edge and every step.
pub fn graph_loss(preds: &EdgePredictions, labels: &[bool]) -> Result<f64> {
    Ok(graph_loss_grad(preds, labels, 1.0)?.0)
}

/// Loss and its gradient w.r.t. each classifier logit, `[l - 1][e]`.
pub fn graph_loss_grad(preds: &EdgePredictions, labels: &[bool], positive_weight: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(preds.steps());
    for step in &preds.probs {
        if step.len() != labels.len() {
            return Err(Error::Data(format!("{} predictions but {} edge labels", step.len(), labels.len())));
        }
        let mut g = Vec::with_capacity(step.len());
        for (&p, &y) in step.iter().zip(labels) {
            loss += bce_loss_weighted(p, y, positive_weight).0;
            g.push(bce_logit_grad(p, y, positive_weight));
        }
        grads.push(g);
    }
    Ok((loss, grads))
}

fn relu_mask(dz: &mut [f64], pre: &[f64]) {
    for (d, &z) in dz.iter_mut().zip(pre) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Backpropagates logit gradients `logit_grads[l - 1][e]` through all steps and encoders,
/// accumulating parameter gradients into `grads`.
pub fn mpn_backward(
    graph: &FrameGraph,
    params: &ModelParams,
    trace: &MpnTrace,
    logit_grads: &[Vec<f64>],
    grads: &mut ModelParams,
) -> Result<()> {
    let steps = params.steps;
    if logit_grads.len() != steps || trace.classifier_tapes.len() != steps {
        return Err(Error::Shape(format!(
            "expected gradients for {steps} steps, got {}",
            logit_grads.len()
        )));
    }
    let edge_upd = single_layer("edge_update", &params.edge_update)?;
    let node_upd = single_layer("node_update", &params.node_update)?;
    let n = graph.num_nodes();
    let m = graph.num_edges();

    // Gradients w.r.t. the states of the step currently being unrolled.
    let mut g_nodes = vec![vec![0.0; NODE_DIM]; n];
    let mut g_edges = vec![vec![0.0; EDGE_DIM]; m];

    for l in (1..=steps).rev() {
        let prev_nodes = &trace.node_states[l - 1];
        let prev_edges = &trace.edge_states[l - 1];
        let cur_edges = &trace.edge_states[l];

        for (e, tape) in trace.classifier_tapes[l - 1].iter().enumerate() {
            let dx = mlp_backward_from_preact_acc(&params.classifier, tape, &[logit_grads[l - 1][e]], &mut grads.classifier)?;
            g_edges[e].iter_mut().zip(&dx).for_each(|(g, d)| *g += d);
        }

        let mut g_prev_nodes = vec![vec![0.0; NODE_DIM]; n];

        // Node update of step l; its output only matters below the last step.
        if l < steps {
            let gw = &mut grads.node_update.layers[0];
            let mut src_acc = vec![vec![0.0; NODE_DIM]; n];
            for (i, list) in trace.incidence.iter().enumerate() {
                if g_nodes[i].iter().all(|&g| g == 0.0) {
                    continue;
                }
                let weight = params.aggregation.weight(list.len());
                for &(nbr, e, slot) in list {
                    let mut dz: Vec<f64> = g_nodes[i].iter().map(|g| g * weight).collect();
                    relu_mask(&mut dz, &trace.msg_preacts[l - 1][e][slot]);
                    gw.bias.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
                    gw.weight.add_outer_block(NODE_DIM, &dz, &cur_edges[e]);
                    node_upd.weight.matvec_t_block_acc(NODE_DIM, &dz, &mut g_edges[e]);
                    let src = match params.message_source {
                        MessageSource::SelfState => i,
                        MessageSource::Neighbor => nbr,
                    };
                    src_acc[src].iter_mut().zip(&dz).for_each(|(a, d)| *a += d);
                }
            }
            for (k, acc) in src_acc.iter().enumerate() {
                gw.weight.add_outer_block(0, acc, &prev_nodes[k]);
                node_upd.weight.matvec_t_block_acc(0, acc, &mut g_prev_nodes[k]);
            }
        }

        // Edge update of step l.
        let gw = &mut grads.edge_update.layers[0];
        let mut g_prev_edges = vec![vec![0.0; EDGE_DIM]; m];
        let mut first_acc = vec![vec![0.0; EDGE_DIM]; n];
        let mut second_acc = vec![vec![0.0; EDGE_DIM]; n];
        for (e, &(i, j)) in graph.edges.iter().enumerate() {
            let mut dz = g_edges[e].clone();
            relu_mask(&mut dz, &trace.edge_preacts[l - 1][e]);
            gw.bias.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
            gw.weight.add_outer_block(2 * NODE_DIM, &dz, &prev_edges[e]);
            edge_upd.weight.matvec_t_block_acc(2 * NODE_DIM, &dz, &mut g_prev_edges[e]);
            first_acc[i].iter_mut().zip(&dz).for_each(|(a, d)| *a += d);
            second_acc[j].iter_mut().zip(&dz).for_each(|(a, d)| *a += d);
        }
        for k in 0..n {
            gw.weight.add_outer_block(0, &first_acc[k], &prev_nodes[k]);
            gw.weight.add_outer_block(NODE_DIM, &second_acc[k], &prev_nodes[k]);
            edge_upd.weight.matvec_t_block_acc(0, &first_acc[k], &mut g_prev_nodes[k]);
            edge_upd.weight.matvec_t_block_acc(NODE_DIM, &second_acc[k], &mut g_prev_nodes[k]);
        }

        g_nodes = g_prev_nodes;
        g_edges = g_prev_edges;
    }

    for (tape, g) in trace.node_tapes.iter().zip(&g_nodes) {
        mlp_backward_acc(&params.node_encoder, tape, g, &mut grads.node_encoder)?;
    }
    for (tape, g) in trace.edge_tapes.iter().zip(&g_edges) {
        mlp_backward_acc(&params.edge_encoder, tape, g, &mut grads.edge_encoder)?;
    }
    Ok(())
}
