use std::borrow::Cow;

use crate::linalg::{flatten_conv, Tensor};
use crate::reparam::{self, decompose_layer, AdaptMode, DecomposedLayer, LayerKind, LayerShape};

use super::GanError;

/// Parameter storage; which variant a layer uses follows from its mode.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    /// Raw weight (`m x n` or `k x k x c_in x c_out`) and bias.
    Plain { weight: Tensor, bias: Vec<f32> },
    /// Frozen conv weight and bias with a per-channel `gamma`/`beta` applied
    /// after the convolution: `conv(x, w) * gamma + bias + beta`.
    ScaleShift {
        weight: Tensor,
        bias: Vec<f32>,
        gamma: Vec<f32>,
        beta: Vec<f32>,
    },
    Decomposed(DecomposedLayer),
}

/// One learnable tensor of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Weight,
    Bias,
    Gamma,
    Beta,
    Lambda,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub mode: AdaptMode,
    /// Lower discriminator layer held fixed under `FreezeD`.
    pub frozen: bool,
    pub params: LayerParams,
}

impl Layer {
    pub fn new(name: impl Into<String>, kind: LayerKind, weight: Tensor, bias: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            kind,
            mode: AdaptMode::Tgan,
            frozen: false,
            params: LayerParams::Plain { weight, bias },
        }
    }

    pub fn shape(&self) -> LayerShape {
        match &self.params {
            LayerParams::Plain { weight, .. } | LayerParams::ScaleShift { weight, .. } => {
                LayerShape::of_weight(weight).expect("layer weights are rank 2 or 4")
            }
            LayerParams::Decomposed(d) => d.shape(),
        }
    }

    pub fn outputs(&self) -> usize {
        self.shape().outputs()
    }

    pub fn bias(&self) -> &[f32] {
        match &self.params {
            LayerParams::Plain { bias, .. } | LayerParams::ScaleShift { bias, .. } => bias,
            LayerParams::Decomposed(d) => &d.bias,
        }
    }

    /// Effective weight as a `(k^2 c_in) x c_out` or `m x n` matrix.
    pub fn weight_matrix(&self) -> Cow<'_, Tensor> {
        match &self.params {
            LayerParams::Plain { weight, .. } | LayerParams::ScaleShift { weight, .. } => {
                if weight.rank() == 4 {
                    Cow::Owned(flatten_conv(weight).expect("rank checked"))
                } else {
                    Cow::Borrowed(weight)
                }
            }
            LayerParams::Decomposed(d) => Cow::Owned(d.effective_matrix()),
        }
    }

    /// Effective weight in its stored shape.
    pub fn effective_weight(&self) -> Cow<'_, Tensor> {
        match &self.params {
            LayerParams::Plain { weight, .. } | LayerParams::ScaleShift { weight, .. } => {
                Cow::Borrowed(weight)
            }
            LayerParams::Decomposed(d) => Cow::Owned(d.effective_weight()),
        }
    }

    /// Reparameterizes the layer for `mode`, starting from its effective
    /// weight. Fresh adaptation parameters start at the identity
    /// (`lambda = 1`, `gamma = 1`, `beta = 0`).
    pub fn set_mode(&mut self, mode: AdaptMode, frozen: bool) -> Result<(), GanError> {
        if frozen && mode != AdaptMode::FreezeD {
            return Err(GanError::Config(format!(
                "layer {} cannot be frozen under {mode}",
                self.name
            )));
        }
        let weight = self.effective_weight().into_owned();
        let bias = self.bias().to_vec();
        let is_conv = matches!(self.kind, LayerKind::Conv { .. });
        self.params = match mode {
            AdaptMode::Fsgan => LayerParams::Decomposed(decompose_layer(&weight, bias, self.kind)?),
            AdaptMode::Ssgan if is_conv => {
                let c = self.outputs();
                LayerParams::ScaleShift {
                    weight,
                    bias,
                    gamma: vec![1.0; c],
                    beta: vec![0.0; c],
                }
            }
            _ => LayerParams::Plain { weight, bias },
        };
        self.mode = mode;
        self.frozen = frozen;
        Ok(())
    }

    /// Slots an optimizer may update. Biases only train when `learn_biases`
    /// is set, which is reserved for training from scratch.
    pub fn trainable_slots(&self, learn_biases: bool) -> Vec<Slot> {
        if self.frozen {
            return Vec::new();
        }
        let mut slots = match (&self.params, self.mode) {
            (_, AdaptMode::Pretrain) => Vec::new(),
            (LayerParams::Plain { .. }, AdaptMode::Tgan | AdaptMode::FreezeD) => vec![Slot::Weight],
            (LayerParams::ScaleShift { .. }, AdaptMode::Ssgan) => vec![Slot::Gamma, Slot::Beta],
            (LayerParams::Decomposed(_), AdaptMode::Fsgan) => vec![Slot::Lambda],
            _ => Vec::new(),
        };
        if learn_biases && !slots.is_empty() {
            slots.push(Slot::Bias);
        }
        slots
    }

    /// Learnable values the layer exposes under its mode (biases excluded).
    pub fn trainable_count(&self) -> usize {
        if self.frozen {
            return 0;
        }
        reparam::param_count(self.mode, self.shape())
    }

    pub fn slot(&self, slot: Slot) -> &[f32] {
        match (slot, &self.params) {
            (Slot::Weight, LayerParams::Plain { weight, .. }) => weight.data(),
            (Slot::Bias, _) => self.bias(),
            (Slot::Gamma, LayerParams::ScaleShift { gamma, .. }) => gamma,
            (Slot::Beta, LayerParams::ScaleShift { beta, .. }) => beta,
            (Slot::Lambda, LayerParams::Decomposed(d)) => &d.lambda,
            (s, _) => panic!("layer {} has no {s:?} slot", self.name),
        }
    }

    pub fn slot_mut(&mut self, slot: Slot) -> &mut [f32] {
        let name = &self.name;
        match (slot, &mut self.params) {
            (Slot::Weight, LayerParams::Plain { weight, .. }) => weight.data_mut(),
            (Slot::Bias, LayerParams::Plain { bias, .. })
            | (Slot::Bias, LayerParams::ScaleShift { bias, .. }) => bias,
            (Slot::Bias, LayerParams::Decomposed(d)) => &mut d.bias,
            (Slot::Gamma, LayerParams::ScaleShift { gamma, .. }) => gamma,
            (Slot::Beta, LayerParams::ScaleShift { beta, .. }) => beta,
            (Slot::Lambda, LayerParams::Decomposed(d)) => &mut d.lambda,
            (s, _) => panic!("layer {name} has no {s:?} slot"),
        }
    }
}
