use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Features per movement: normalized incoming count, normalized outgoing count, green bit.
pub const MOVEMENT_FEATURES: usize = 3;
/// Conflict classes with a learned relation embedding.
pub const RELATION_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Linear network; only useful for exactness checks.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn apply_to<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu if !(x > S::from(0.0)) => S::from(0.0),
            _ => x,
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    pub fn slope(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrapConfig {
    pub embed_dim: usize,
    pub heads: usize,
    /// Width of each attention head's query/key/value projection.
    pub head_dim: usize,
    pub max_neighbors: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl Default for FrapConfig {
    fn default() -> Self {
        FrapConfig {
            embed_dim: 16,
            heads: 5,
            head_dim: 4,
            max_neighbors: 4,
            hidden_dim: 32,
            activation: Activation::Relu,
        }
    }
}

impl FrapConfig {
    pub fn check(&self) -> Result<()> {
        if self.heads == 0 || self.head_dim == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "all widths must be positive (embed {}, heads {}, head_dim {}, hidden {})",
                self.embed_dim, self.heads, self.head_dim, self.hidden_dim
            )));
        }
        Ok(())
    }

    pub fn attention_width(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Every trainable tensor of the phase-competition network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    /// `[E, 3]` shared movement demand layer.
    pub demand_weight: Tensor,
    pub demand_bias: Tensor,
    /// `[K*d, E]`, head `h` owns rows `h*d..(h+1)*d`.
    pub attn_query: Tensor,
    pub attn_key: Tensor,
    pub attn_value: Tensor,
    /// `[E, K*d]`
    pub attn_out_weight: Tensor,
    pub attn_out_bias: Tensor,
    /// `[H, 2E]` applied to the phase whose score is being built.
    pub pair_self: Tensor,
    /// `[H, 2E]` applied to the competing phase.
    pub pair_other: Tensor,
    /// `[3, H]` one embedding per conflict class.
    pub relation: Tensor,
    pub pair_bias: Tensor,
    /// `[H]`
    pub score_weight: Tensor,
    pub score_bias: Tensor,
}

pub const PARAM_NAMES: [&str; 13] = [
    "demand.weight",
    "demand.bias",
    "attn.query",
    "attn.key",
    "attn.value",
    "attn.out.weight",
    "attn.out.bias",
    "pair.self",
    "pair.other",
    "pair.relation",
    "pair.bias",
    "score.weight",
    "score.bias",
];

impl ParamStore {
    pub fn zeros(cfg: &FrapConfig) -> Self {
        let (e, a, h) = (cfg.embed_dim, cfg.attention_width(), cfg.hidden_dim);
        ParamStore {
            demand_weight: Tensor::zeros(&[e, MOVEMENT_FEATURES]),
            demand_bias: Tensor::zeros(&[e]),
            attn_query: Tensor::zeros(&[a, e]),
            attn_key: Tensor::zeros(&[a, e]),
            attn_value: Tensor::zeros(&[a, e]),
            attn_out_weight: Tensor::zeros(&[e, a]),
            attn_out_bias: Tensor::zeros(&[e]),
            pair_self: Tensor::zeros(&[h, 2 * e]),
            pair_other: Tensor::zeros(&[h, 2 * e]),
            relation: Tensor::zeros(&[RELATION_CLASSES, h]),
            pair_bias: Tensor::zeros(&[h]),
            score_weight: Tensor::zeros(&[h]),
            score_bias: Tensor::zeros(&[1]),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases included.
    pub fn init<R: Rng>(cfg: &FrapConfig, rng: &mut R) -> Self {
        let mut p = ParamStore::zeros(cfg);
        let (e, a, h) = (cfg.embed_dim, cfg.attention_width(), cfg.hidden_dim);
        let fan_in = [
            MOVEMENT_FEATURES,
            MOVEMENT_FEATURES,
            e,
            e,
            e,
            a,
            a,
            4 * e + RELATION_CLASSES,
            4 * e + RELATION_CLASSES,
            4 * e + RELATION_CLASSES,
            4 * e + RELATION_CLASSES,
            h,
            h,
        ];
        for (t, fan) in p.tensors_mut().into_iter().zip(fan_in) {
            let bound = 1.0 / (fan as f64).sqrt();
            for x in &mut t.data {
                *x = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub fn tensors(&self) -> [&Tensor; 13] {
        [
            &self.demand_weight,
            &self.demand_bias,
            &self.attn_query,
            &self.attn_key,
            &self.attn_value,
            &self.attn_out_weight,
            &self.attn_out_bias,
            &self.pair_self,
            &self.pair_other,
            &self.relation,
            &self.pair_bias,
            &self.score_weight,
            &self.score_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 13] {
        [
            &mut self.demand_weight,
            &mut self.demand_bias,
            &mut self.attn_query,
            &mut self.attn_key,
            &mut self.attn_value,
            &mut self.attn_out_weight,
            &mut self.attn_out_bias,
            &mut self.pair_self,
            &mut self.pair_other,
            &mut self.relation,
            &mut self.pair_bias,
            &mut self.score_weight,
            &mut self.score_bias,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        PARAM_NAMES.into_iter().zip(self.tensors())
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_sq()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, k: f64, other: &ParamStore) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::tensor::axpy(k, &b.data, &mut a.data);
        }
    }

    pub fn same_shapes(&self, other: &ParamStore) -> bool {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .all(|(a, b)| a.shape == b.shape)
    }

    /// Shapes must match what `cfg` implies.
    pub fn check(&self, cfg: &FrapConfig) -> Result<()> {
        let expect = ParamStore::zeros(cfg);
        for ((name, a), b) in self.named().zip(expect.tensors()) {
            if a.shape != b.shape || a.data.len() != b.data.len() {
                return Err(Error::Shape(format!(
                    "{name} has shape {:?}, config expects {:?}",
                    a.shape, b.shape
                )));
            }
        }
        Ok(())
    }
}
