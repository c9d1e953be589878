//! Message passing network over a frame graph: encoders, `L` rounds of
//! edge and node updates, a per-step edge classifier, and training.

mod forward;
mod train;

pub use forward::{graph_loss, graph_loss_grad, mpn_backward, mpn_forward, edge_update, node_update, EdgePredictions, MpnTrace};
pub use train::{train, train_from, EpochLog, TrainConfig, TrainOutcome, DEFAULT_GRAD_CLIP};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::mlp::{Activation, MlpParams, MlpSpec};

/// Width of node states.
pub const NODE_DIM: usize = 32;
/// Width of edge states.
pub const EDGE_DIM: usize = 6;
/// Width of the edge encoder input `[Δf, Δs]`.
pub const EDGE_FEATURE_DIM: usize = 4;
/// Hidden width of the node encoder.
pub const NODE_ENCODER_HIDDEN: usize = 128;
/// Hidden width of the classifier.
pub const CLASSIFIER_HIDDEN: usize = 4;

/// Which node state accompanies the updated edge state in a node message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MessageSource {
    /// The receiving node's own previous state.
    #[default]
    SelfState,
    /// The sending neighbour's previous state.
    Neighbor,
}

impl MessageSource {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageSource::SelfState => "self",
            MessageSource::Neighbor => "neighbor",
        }
    }
}

impl std::str::FromStr for MessageSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self" => Ok(MessageSource::SelfState),
            "neighbor" | "neighbour" => Ok(MessageSource::Neighbor),
            other => Err(Error::Config(format!("unknown message source `{other}` (expected self|neighbor)"))),
        }
    }
}

/// How node messages over incident edges are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Plain sum over incident edges.
    Sum,
    /// Sum divided by the node degree.
    #[default]
    Mean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        }
    }

    /// Weight of each message at a node with `degree` incident edges.
    pub fn weight(self, degree: usize) -> f64 {
        match self {
            Aggregation::Sum => 1.0,
            Aggregation::Mean => 1.0 / degree.max(1) as f64,
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::Config(format!("unknown aggregation `{other}` (expected sum|mean)"))),
        }
    }
}

/// Architecture of every network, derived from the descriptor width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpecs {
    pub node_encoder: MlpSpec,
    pub edge_encoder: MlpSpec,
    pub node_update: MlpSpec,
    pub edge_update: MlpSpec,
    pub classifier: MlpSpec,
}

impl ModelSpecs {
    pub fn new(descriptor_dim: usize) -> Result<Self> {
        use Activation::{Relu, Sigmoid};
        Ok(Self {
            node_encoder: MlpSpec::chain(&[descriptor_dim, NODE_ENCODER_HIDDEN, NODE_DIM], Relu, Relu)?,
            edge_encoder: MlpSpec::chain(&[EDGE_FEATURE_DIM, EDGE_DIM], Relu, Relu)?,
            node_update: MlpSpec::chain(&[NODE_DIM + EDGE_DIM, NODE_DIM], Relu, Relu)?,
            edge_update: MlpSpec::chain(&[2 * NODE_DIM + EDGE_DIM, EDGE_DIM], Relu, Relu)?,
            classifier: MlpSpec::chain(&[EDGE_DIM, CLASSIFIER_HIDDEN, 1], Relu, Sigmoid)?,
        })
    }
}

/// All learnable weights plus the structural settings they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub node_encoder: MlpParams,
    pub edge_encoder: MlpParams,
    pub node_update: MlpParams,
    pub edge_update: MlpParams,
    pub classifier: MlpParams,
    /// Number of message passing steps.
    pub steps: usize,
    pub message_source: MessageSource,
    pub aggregation: Aggregation,
}

/// Network names in draw / serialization order.
pub const NETWORK_NAMES: [&str; 5] = ["node_encoder", "edge_encoder", "node_update", "edge_update", "classifier"];

impl ModelParams {
    /// Fresh weights. Networks are drawn from `rng` in [`NETWORK_NAMES`] order.
    pub fn init<R: Rng + ?Sized>(descriptor_dim: usize, steps: usize, message_source: MessageSource, rng: &mut R) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("message passing steps must be >= 1".into()));
        }
        let specs = ModelSpecs::new(descriptor_dim)?;
        Ok(Self {
            node_encoder: MlpParams::init(&specs.node_encoder, rng),
            edge_encoder: MlpParams::init(&specs.edge_encoder, rng),
            node_update: MlpParams::init(&specs.node_update, rng),
            edge_update: MlpParams::init(&specs.edge_update, rng),
            classifier: MlpParams::init(&specs.classifier, rng),
            steps,
            message_source,
            aggregation: Aggregation::default(),
        })
    }

    pub fn zeros(descriptor_dim: usize, steps: usize, message_source: MessageSource) -> Result<Self> {
        let specs = ModelSpecs::new(descriptor_dim)?;
        Ok(Self {
            node_encoder: MlpParams::zeros(&specs.node_encoder),
            edge_encoder: MlpParams::zeros(&specs.edge_encoder),
            node_update: MlpParams::zeros(&specs.node_update),
            edge_update: MlpParams::zeros(&specs.edge_update),
            classifier: MlpParams::zeros(&specs.classifier),
            steps,
            message_source,
            aggregation: Aggregation::default(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            node_encoder: self.node_encoder.zeros_like(),
            edge_encoder: self.edge_encoder.zeros_like(),
            node_update: self.node_update.zeros_like(),
            edge_update: self.edge_update.zeros_like(),
            classifier: self.classifier.zeros_like(),
            steps: self.steps,
            message_source: self.message_source,
            aggregation: self.aggregation,
        }
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn descriptor_dim(&self) -> usize {
        self.node_encoder.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("message passing steps must be >= 1".into()));
        }
        let specs = ModelSpecs::new(self.descriptor_dim())?;
        for ((name, net), spec) in self.networks().zip([
            &specs.node_encoder,
            &specs.edge_encoder,
            &specs.node_update,
            &specs.edge_update,
            &specs.classifier,
        ]) {
            net.check_spec(spec).map_err(|e| Error::Shape(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn networks(&self) -> impl Iterator<Item = (&'static str, &MlpParams)> {
        NETWORK_NAMES.into_iter().zip([
            &self.node_encoder,
            &self.edge_encoder,
            &self.node_update,
            &self.edge_update,
            &self.classifier,
        ])
    }

    pub fn networks_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut MlpParams)> {
        NETWORK_NAMES.into_iter().zip([
            &mut self.node_encoder,
            &mut self.edge_encoder,
            &mut self.node_update,
            &mut self.edge_update,
            &mut self.classifier,
        ])
    }

    pub fn num_params(&self) -> usize {
        self.networks().map(|(_, n)| n.num_params()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.networks_mut().zip(other.networks()) {
            a.add_assign(b);
        }
    }

    /// Euclidean norm over every parameter of every network.
    pub fn l2_norm(&self) -> f64 {
        self.networks()
            .flat_map(|(_, n)| n.tensors().map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>()).collect::<Vec<_>>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, n) in self.networks_mut() {
            n.scale(factor);
        }
    }
}
