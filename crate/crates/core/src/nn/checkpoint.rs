//! Versioned, lossless JSON form of a network and its optimizer state.

use super::{AdamConfig, AdamState, Dense, Gradients, Head, LayerGrad, Mlp, NnError};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub head: Head,
    /// Per layer, one row of input weights per output unit.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamCheckpoint {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: MomentCheckpoint,
    pub second_moment: MomentCheckpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheckpoint {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MomentCheckpoint {
    fn from_grads(g: &Gradients) -> Self {
        Self {
            weights: g.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: g.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    fn into_grads(self, net: &Mlp) -> Result<Gradients, NnError> {
        let grads = Gradients {
            layers: self
                .weights
                .into_iter()
                .zip(self.biases)
                .map(|(weights, biases)| LayerGrad { weights, biases })
                .collect(),
        };
        let ok = grads.layers.len() == net.layers.len()
            && grads
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len());
        if ok {
            Ok(grads)
        } else {
            Err(NnError::Checkpoint("optimizer moments do not match the network".into()))
        }
    }
}

impl NetCheckpoint {
    pub fn capture(net: &Mlp, adam: Option<&AdamState>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            layer_sizes: net.layer_sizes.clone(),
            head: net.head,
            weights: net
                .layers
                .iter()
                .map(|l| l.weights.chunks_exact(l.inputs).map(<[f64]>::to_vec).collect())
                .collect(),
            biases: net.layers.iter().map(|l| l.biases.clone()).collect(),
            adam: adam.map(|a| AdamCheckpoint {
                config: a.config,
                step: a.step,
                first_moment: MomentCheckpoint::from_grads(&a.first_moment),
                second_moment: MomentCheckpoint::from_grads(&a.second_moment),
            }),
        }
    }

    pub fn restore(self) -> Result<(Mlp, Option<AdamState>), NnError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut net = Mlp::zeros(&self.layer_sizes, self.head)?;
        if self.weights.len() != net.layers.len() || self.biases.len() != net.layers.len() {
            return Err(NnError::Checkpoint("layer count does not match layer_sizes".into()));
        }
        let layers: Result<Vec<Dense>, NnError> = net
            .layers
            .iter()
            .zip(self.weights)
            .zip(self.biases)
            .map(|((shape, rows), biases)| {
                if rows.len() != shape.outputs
                    || rows.iter().any(|r| r.len() != shape.inputs)
                    || biases.len() != shape.outputs
                {
                    return Err(NnError::Checkpoint("weight matrix shape mismatch".into()));
                }
                Ok(Dense {
                    inputs: shape.inputs,
                    outputs: shape.outputs,
                    weights: rows.into_iter().flatten().collect(),
                    biases,
                })
            })
            .collect();
        net.layers = layers?;
        let adam = match self.adam {
            None => None,
            Some(a) => Some(AdamState {
                config: a.config,
                step: a.step,
                first_moment: a.first_moment.into_grads(&net)?,
                second_moment: a.second_moment.into_grads(&net)?,
            }),
        };
        Ok((net, adam))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::adam_step;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Mlp::init(&[6, 64, 64, 5], Head::Softmax, 0.01, &mut rng).unwrap();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let (_, cache) = net.forward(&[0.3; 6]).unwrap();
        let g = net.backward(&cache, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        adam_step(&mut net, &mut adam, &g).unwrap();

        let text = NetCheckpoint::capture(&net, Some(&adam)).to_json();
        let (net2, adam2) = NetCheckpoint::from_json(&text).unwrap().restore().unwrap();
        assert_eq!(net2, net);
        assert_eq!(adam2.unwrap(), adam);
        assert_eq!(NetCheckpoint::capture(&net2, None).weights, NetCheckpoint::capture(&net, None).weights);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let net = Mlp::zeros(&[2, 1], Head::Scalar).unwrap();
        let mut ck = NetCheckpoint::capture(&net, None);
        ck.version = 99;
        assert!(matches!(ck.restore(), Err(NnError::Checkpoint(_))));
    }
}
