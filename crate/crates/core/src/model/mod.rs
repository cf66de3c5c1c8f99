//! The two-channel densely connected graph classifier and its two
//! comparison variants.
//!
//! `ddc` runs a feature channel (GIN layers) and a structural channel
//! (GCN layers) in parallel; every feature layer consumes the
//! concatenation of all earlier maps from both channels, and the readout
//! pools the hidden maps of both channels. `decoupled` concatenates the
//! structural embedding once at the input and keeps the channels
//! independent. `single` is the plain one-channel GIN baseline.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Scalar, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Ddc,
    Decoupled,
    Single,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Ddc => "ddc",
            ModelVariant::Decoupled => "decoupled",
            ModelVariant::Single => "single",
        }
    }

    /// Whether the variant carries a structural channel.
    pub fn has_struct(self) -> bool {
        !matches!(self, ModelVariant::Single)
    }
}

/// Architecture hyperparameters. `feature_dim`, `struct_dim` and
/// `num_classes` may be left 0 in config files; the experiment harness
/// fills them from the dataset before instantiation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub feature_dim: usize,
    #[serde(default)]
    pub struct_dim: usize,
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub gin_epsilon: f64,
    /// Cuts the gradient path from the feature channel back into the
    /// structural maps it consumes (forward values unchanged).
    #[serde(default)]
    pub detach_struct: bool,
}

fn default_layers() -> usize {
    3
}
fn default_hidden() -> usize {
    16
}
fn default_dropout() -> f64 {
    0.5
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Ddc,
            num_layers: default_layers(),
            hidden: default_hidden(),
            feature_dim: 0,
            struct_dim: 0,
            num_classes: 0,
            dropout: default_dropout(),
            gin_epsilon: 0.0,
            detach_struct: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden == 0 {
            return Err(Error::Config(format!(
                "model needs num_layers >= 1 and hidden >= 1, got {} and {}",
                self.num_layers, self.hidden
            )));
        }
        if self.feature_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config(
                "feature_dim and num_classes must be resolved before instantiation".into(),
            ));
        }
        if self.variant.has_struct() && self.struct_dim == 0 {
            return Err(Error::Config(format!(
                "variant {} needs struct_dim >= 1",
                self.variant.name()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} must lie in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Input width of feature layer `l` (1-based).
    pub(crate) fn feature_in_width(&self, l: usize) -> usize {
        let r = self.hidden;
        match self.variant {
            ModelVariant::Ddc => 2 * l * r,
            ModelVariant::Decoupled => {
                if l == 1 {
                    2 * r
                } else {
                    r
                }
            }
            ModelVariant::Single => r,
        }
    }

    /// Width of the pooled graph embedding.
    pub(crate) fn readout_width(&self) -> usize {
        let r = self.hidden;
        match self.variant {
            ModelVariant::Ddc => 2 * self.num_layers * r,
            ModelVariant::Decoupled => 2 * r,
            ModelVariant::Single => r,
        }
    }
}

/// Entry-index layout of the flat parameter list; single source of truth
/// for initialization, the forward pass, checkpointing and the analytic
/// resource accounting.
pub(crate) struct Layout {
    pub num_layers: usize,
    pub has_struct: bool,
}

impl Layout {
    pub fn of(cfg: &ModelConfig) -> Self {
        Self {
            num_layers: cfg.num_layers,
            has_struct: cfg.variant.has_struct(),
        }
    }

    pub fn feature_init(&self) -> (usize, usize) {
        (0, 1)
    }

    pub fn struct_init(&self) -> (usize, usize) {
        debug_assert!(self.has_struct);
        (2, 3)
    }

    fn feature_base(&self) -> usize {
        if self.has_struct {
            4
        } else {
            2
        }
    }

    /// 1-based layer index.
    pub fn feature_layer(&self, l: usize) -> (usize, usize) {
        let i = self.feature_base() + 2 * (l - 1);
        (i, i + 1)
    }

    pub fn struct_layer(&self, l: usize) -> (usize, usize) {
        debug_assert!(self.has_struct);
        let i = self.feature_base() + 2 * self.num_layers + 2 * (l - 1);
        (i, i + 1)
    }

    pub fn classifier(&self) -> (usize, usize) {
        let i = self.feature_base() + if self.has_struct { 4 } else { 2 } * self.num_layers;
        (i, i + 1)
    }

    pub fn len(&self) -> usize {
        self.classifier().1 + 1
    }
}

/// One named parameter tensor with its aggregation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<S = f32> {
    pub name: String,
    pub structural: bool,
    pub is_bias: bool,
    pub tensor: Tensor<S>,
}

/// Flat, ordered parameter set of one model instance. Declaration order
/// (also the checkpoint order): feature_init, struct_init, feature
/// layers 1..L, structural layers 1..L, classifier; weight before bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DdcParameters<S = f32> {
    variant: ModelVariant,
    entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> DdcParameters<S> {
    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn entries(&self) -> &[ParamEntry<S>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<S>] {
        &mut self.entries
    }

    pub(crate) fn from_entries(variant: ModelVariant, entries: Vec<ParamEntry<S>>) -> Self {
        Self { variant, entries }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Number of scalar parameters in the structural subset.
    pub fn structural_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.structural)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Entry indices of the structural subset (struct_init plus the
    /// structural layers); the complement is the feature subset.
    pub fn structural_indices(&self) -> Result<Vec<usize>> {
        if !self.variant.has_struct() {
            return Err(Error::UnsupportedVariant(
                "single-channel model has no structural subset".into(),
            ));
        }
        Ok(self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.structural)
            .map(|(i, _)| i)
            .collect())
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry<S>> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Registers every tensor as a tape leaf, in entry order.
    pub fn push_leaves(&self, tape: &mut Tape<S>, needs_grad: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone(), needs_grad))
            .collect()
    }
}

/// Name, shape and metadata of one parameter entry, without values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct EntrySpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub structural: bool,
    pub is_bias: bool,
}

/// The declaration-order entry list a config implies.
pub(crate) fn entry_specs(cfg: &ModelConfig) -> Vec<EntrySpec> {
    let r = cfg.hidden;
    let mut specs = Vec::new();
    let mut linear = |name: &str, fan_in: usize, fan_out: usize, structural: bool| {
        specs.push(EntrySpec {
            name: format!("{name}.weight"),
            shape: vec![fan_in, fan_out],
            structural,
            is_bias: false,
        });
        specs.push(EntrySpec {
            name: format!("{name}.bias"),
            shape: vec![fan_out],
            structural,
            is_bias: true,
        });
    };

    linear("feature_init", cfg.feature_dim, r, false);
    if cfg.variant.has_struct() {
        linear("struct_init", cfg.struct_dim, r, true);
    }
    for l in 1..=cfg.num_layers {
        linear(&format!("feature_layers.{l}"), cfg.feature_in_width(l), r, false);
    }
    if cfg.variant.has_struct() {
        for l in 1..=cfg.num_layers {
            linear(&format!("struct_layers.{l}"), r, r, true);
        }
    }
    linear("classifier", cfg.readout_width(), cfg.num_classes, false);
    debug_assert_eq!(specs.len(), Layout::of(cfg).len());
    specs
}

/// Glorot-uniform weights and zero biases, deterministic for a seed.
pub fn init_params<S: Scalar>(cfg: &ModelConfig, rng_seed: u64) -> Result<DdcParameters<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let entries = entry_specs(cfg)
        .into_iter()
        .map(|spec| {
            let tensor = if spec.is_bias {
                Tensor::zeros(&spec.shape)
            } else {
                let limit = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
                let data: Vec<S> = (0..spec.shape.iter().product::<usize>())
                    .map(|_| S::from_f64((2.0 * rng.random::<f64>() - 1.0) * limit))
                    .collect();
                Tensor::new(spec.shape.clone(), data).expect("consistent shape")
            };
            ParamEntry {
                name: spec.name,
                structural: spec.structural,
                is_bias: spec.is_bias,
                tensor,
            }
        })
        .collect();
    Ok(DdcParameters {
        variant: cfg.variant,
        entries,
    })
}

/// Tape handles produced by one forward pass. Layer maps are indexed
/// 0..=L (index 0 holds the init-layer embedding).
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub x_maps: Vec<Var>,
    pub s_maps: Vec<Var>,
    pub concat_inputs: Vec<Var>,
    pub graph_embedding: Var,
    pub logits: Var,
}

/// Value snapshot of a [`ForwardVars`], for inspection and tests.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S = f32> {
    pub x_maps: Vec<Tensor<S>>,
    pub s_maps: Vec<Tensor<S>>,
    pub concat_inputs: Vec<Tensor<S>>,
    pub graph_embedding: Tensor<S>,
    pub logits: Tensor<S>,
}

impl ForwardVars {
    pub fn trace<S: Scalar>(&self, tape: &Tape<S>) -> ForwardTrace<S> {
        ForwardTrace {
            x_maps: self.x_maps.iter().map(|&v| tape.value(v).clone()).collect(),
            s_maps: self.s_maps.iter().map(|&v| tape.value(v).clone()).collect(),
            concat_inputs: self
                .concat_inputs
                .iter()
                .map(|&v| tape.value(v).clone())
                .collect(),
            graph_embedding: tape.value(self.graph_embedding).clone(),
            logits: tape.value(self.logits).clone(),
        }
    }
}

fn layer_context(channel: &str, l: usize) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::ShapeMismatch(msg) => {
            Error::ShapeMismatch(format!("{channel} layer {l}: {msg}"))
        }
        other => other,
    }
}

/// Runs one graph through the model on `tape`. `param_vars` must come
/// from [`DdcParameters::push_leaves`] on the same tape; `s` carries the
/// structural vectors (ignored by the single variant).
#[allow(clippy::too_many_arguments)]
pub fn forward<S: Scalar>(
    tape: &mut Tape<S>,
    g: &Graph,
    x: &Tensor<S>,
    s: Option<&Tensor<S>>,
    param_vars: &[Var],
    cfg: &ModelConfig,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardVars> {
    let layout = Layout::of(cfg);
    if param_vars.len() != layout.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} parameter vars, got {}",
            layout.len(),
            param_vars.len()
        )));
    }
    if x.rows() != g.num_nodes() || x.cols() != cfg.feature_dim {
        return Err(Error::ShapeMismatch(format!(
            "feature input {:?}, expected [{} x {}]",
            x.shape(),
            g.num_nodes(),
            cfg.feature_dim
        )));
    }
    let xv = tape.leaf(x.clone(), false);

    let sv = if cfg.variant.has_struct() {
        let s = s.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "variant {} needs structural vectors",
                cfg.variant.name()
            ))
        })?;
        if s.rows() != g.num_nodes() || s.cols() != cfg.struct_dim {
            return Err(Error::ShapeMismatch(format!(
                "structural input {:?}, expected [{} x {}]",
                s.shape(),
                g.num_nodes(),
                cfg.struct_dim
            )));
        }
        Some(tape.leaf(s.clone(), false))
    } else {
        None
    };

    let p = cfg.dropout;
    let (fi_w, fi_b) = layout.feature_init();
    let mut x_maps = vec![tape
        .linear(xv, param_vars[fi_w], param_vars[fi_b])
        .map_err(layer_context("feature init", 0))?];
    let mut s_maps = Vec::new();
    if let Some(sv) = sv {
        let (si_w, si_b) = layout.struct_init();
        s_maps.push(
            tape.linear(sv, param_vars[si_w], param_vars[si_b])
                .map_err(layer_context("struct init", 0))?,
        );
    }
    let mut concat_inputs = Vec::new();

    for l in 1..=cfg.num_layers {
        if cfg.variant.has_struct() {
            let (sw, sb) = layout.struct_layer(l);
            let s_in = tape.relu_dropout(s_maps[l - 1], p, training, rng)?;
            let act = tape
                .gcn_conv(g, s_in, param_vars[sw], param_vars[sb])
                .map_err(layer_context("struct", l))?;
            s_maps.push(act.post_update);
        }

        let (fw, fb) = layout.feature_layer(l);
        let gin_in = match cfg.variant {
            ModelVariant::Ddc => {
                let alpha_src = tape.concat_cols(&x_maps[..l])?;
                let alpha = tape.relu_dropout(alpha_src, p, training, rng)?;
                let beta_src = tape.concat_cols(&s_maps[..l])?;
                let mut beta = tape.relu_dropout(beta_src, p, training, rng)?;
                if cfg.detach_struct {
                    beta = tape.detach(beta);
                }
                let cin = tape.concat_cols(&[alpha, beta])?;
                concat_inputs.push(cin);
                cin
            }
            ModelVariant::Decoupled => {
                let src = if l == 1 {
                    tape.concat_cols(&[x_maps[0], s_maps[0]])?
                } else {
                    x_maps[l - 1]
                };
                tape.relu_dropout(src, p, training, rng)?
            }
            ModelVariant::Single => tape.relu_dropout(x_maps[l - 1], p, training, rng)?,
        };
        let act = tape
            .gin_conv(g, gin_in, param_vars[fw], param_vars[fb], cfg.gin_epsilon)
            .map_err(layer_context("feature", l))?;
        x_maps.push(act.post_update);
    }

    let pooled_src = match cfg.variant {
        ModelVariant::Ddc => {
            let mut parts: Vec<Var> = x_maps[1..].to_vec();
            parts.extend_from_slice(&s_maps[1..]);
            tape.concat_cols(&parts)?
        }
        ModelVariant::Decoupled => {
            tape.concat_cols(&[x_maps[cfg.num_layers], s_maps[cfg.num_layers]])?
        }
        ModelVariant::Single => x_maps[cfg.num_layers],
    };
    let graph_embedding = tape.mean_pool(pooled_src)?;
    let (cw, cb) = layout.classifier();
    let logits = tape
        .linear(graph_embedding, param_vars[cw], param_vars[cb])
        .map_err(layer_context("classifier", 0))?;

    Ok(ForwardVars {
        x_maps,
        s_maps,
        concat_inputs,
        graph_embedding,
        logits,
    })
}
