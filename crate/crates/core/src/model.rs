//! Encoder + BiLSTM binary classifier with maskable attention heads.
//!
//! The model embeds a token sequence, runs it through a transformer encoder
//! whose heads each own their projections and carry a binary gate, feeds the
//! unpadded prefix of the encoder output to a stacked bidirectional LSTM, and
//! maps the combined final states to a single logit. All floating-point work
//! happens inside [`Graph`], so one backward pass yields exact gradients for
//! every parameter and every retained head context.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{self, EncoderOptions, HeadOverride, LayerIds};
use crate::graph::{Graph, GraphError, TensorId};
use crate::lstm::{self, LstmDirIds, LstmLayerIds};
use crate::params::{uniform_init, ParamError, ParamSet};

/// Probability clamp bound inside the binary cross entropy.
pub const BCE_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// `d_model` must split evenly across heads.
    HeadsDivide { d_model: usize, n_heads: usize },
    /// A structural field was zero.
    ZeroField { field: &'static str },
    /// Dropout rate outside `[0, 1)`.
    DropoutRange { value: f64 },
    /// Token id outside the embedding table.
    TokenRange {
        position: usize,
        id: usize,
        vocab_size: usize,
    },
    /// `tokens` and `pad_mask` lengths differ.
    LengthMismatch { tokens: usize, mask: usize },
    /// Sequence length outside `1..=max_len`.
    SeqLen { len: usize, max_len: usize },
    /// No unpadded positions to feed the recurrent stage.
    EmptySequence,
    /// Head override payload has the wrong element count.
    OverrideShape { expected: usize, got: usize },
    /// Layer or head index outside the configured grid.
    HeadIndex {
        layer: usize,
        head: usize,
        n_layers: usize,
        n_heads: usize,
    },
    /// A named parameter was absent from the set.
    MissingParam { name: String },
    /// Restored parameters do not match the configuration's layout.
    ParamCount { expected: usize, got: usize },
    ParamName {
        position: usize,
        expected: String,
        got: String,
    },
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// Head mask grid differs from the configured layer/head counts.
    MaskShape {
        mask_layers: usize,
        mask_heads: usize,
        n_layers: usize,
        n_heads: usize,
    },
    Graph(GraphError),
    Param(ParamError),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::HeadsDivide { d_model, n_heads } => write!(
                f,
                "d_model {d_model} is not divisible by n_heads {n_heads}"
            ),
            ModelError::ZeroField { field } => {
                write!(f, "model field `{field}` must be at least 1")
            }
            ModelError::DropoutRange { value } => {
                write!(f, "dropout rate {value} must lie in [0, 1)")
            }
            ModelError::TokenRange {
                position,
                id,
                vocab_size,
            } => write!(
                f,
                "token id {id} at position {position} is outside the vocabulary of size {vocab_size}"
            ),
            ModelError::LengthMismatch { tokens, mask } => write!(
                f,
                "token sequence has {tokens} entries but pad mask has {mask}"
            ),
            ModelError::SeqLen { len, max_len } => write!(
                f,
                "sequence length {len} is outside the supported range 1..={max_len}"
            ),
            ModelError::EmptySequence => {
                write!(f, "sequence has no unpadded positions")
            }
            ModelError::OverrideShape { expected, got } => write!(
                f,
                "head override carries {got} values but the context needs {expected}"
            ),
            ModelError::HeadIndex {
                layer,
                head,
                n_layers,
                n_heads,
            } => write!(
                f,
                "head ({layer}, {head}) is outside the {n_layers}x{n_heads} grid"
            ),
            ModelError::MissingParam { name } => {
                write!(f, "parameter `{name}` is missing from the set")
            }
            ModelError::ParamCount { expected, got } => {
                write!(f, "expected {expected} parameters, found {got}")
            }
            ModelError::ParamName {
                position,
                expected,
                got,
            } => write!(
                f,
                "parameter {position} should be `{expected}`, found `{got}`"
            ),
            ModelError::ParamShape {
                name,
                expected,
                got,
            } => write!(
                f,
                "parameter `{name}` should have shape {expected:?}, found {got:?}"
            ),
            ModelError::MaskShape {
                mask_layers,
                mask_heads,
                n_layers,
                n_heads,
            } => write!(
                f,
                "head mask is {mask_layers}x{mask_heads} but the model has {n_layers} layers of {n_heads} heads"
            ),
            ModelError::Graph(e) => write!(f, "graph error: {e}"),
            ModelError::Param(e) => write!(f, "parameter error: {e}"),
        }
    }
}

impl core::error::Error for ModelError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            ModelError::Graph(e) => Some(e),
            ModelError::Param(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GraphError> for ModelError {
    fn from(e: GraphError) -> Self {
        ModelError::Graph(e)
    }
}

impl From<ParamError> for ModelError {
    fn from(e: ParamError) -> Self {
        ModelError::Param(e)
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Structural hyperparameters. Validated by [`ModelConfig::validate`] before
/// any parameter is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Small profile sized for second-scale training on a laptop.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            d_ff: 128,
            max_len: 24,
            lstm_hidden: 32,
            lstm_layers: 2,
            dropout: 0.0,
        }
    }

    /// Full-size profile matching a BERT-base encoder in front of a
    /// 128-unit BiLSTM.
    pub fn full(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 768,
            n_layers: 12,
            n_heads: 12,
            d_ff: 3072,
            max_len: 128,
            lstm_hidden: 128,
            lstm_layers: 2,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields: [(&'static str, usize); 8] = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
        ];
        for (field, value) in fields {
            if value == 0 {
                return Err(ModelError::ZeroField { field });
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::HeadsDivide {
                d_model: self.d_model,
                n_heads: self.n_heads,
            });
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(ModelError::DropoutRange {
                value: self.dropout,
            });
        }
        Ok(())
    }

    /// Width of one attention head.
    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

// ---------------------------------------------------------------------------
// Head mask
// ---------------------------------------------------------------------------

/// Binary gate per attention head, indexed `[layer][head]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMask {
    n_layers: usize,
    n_heads: usize,
    gates: Vec<bool>,
}

impl HeadMask {
    pub fn all_on(n_layers: usize, n_heads: usize) -> Self {
        HeadMask {
            n_layers,
            n_heads,
            gates: alloc::vec![true; n_layers * n_heads],
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    fn slot(&self, layer: usize, head: usize) -> Result<usize, ModelError> {
        if layer >= self.n_layers || head >= self.n_heads {
            return Err(ModelError::HeadIndex {
                layer,
                head,
                n_layers: self.n_layers,
                n_heads: self.n_heads,
            });
        }
        Ok(layer * self.n_heads + head)
    }

    pub fn is_on(&self, layer: usize, head: usize) -> Result<bool, ModelError> {
        Ok(self.gates[self.slot(layer, head)?])
    }

    pub fn set(&mut self, layer: usize, head: usize, on: bool) -> Result<(), ModelError> {
        let slot = self.slot(layer, head)?;
        self.gates[slot] = on;
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.gates.iter().filter(|&&g| g).count()
    }

    pub fn pruned(&self) -> usize {
        self.gates.len() - self.retained()
    }

    /// Gate multipliers in `[layer][head]` order: 1.0 on, 0.0 off.
    pub fn gate_values(&self) -> Vec<Vec<f64>> {
        (0..self.n_layers)
            .map(|l| {
                (0..self.n_heads)
                    .map(|h| {
                        if self.gates[l * self.n_heads + h] {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// `(layer, head)` pairs whose gate is off, in row-major order.
    pub fn pruned_heads(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for l in 0..self.n_layers {
            for h in 0..self.n_heads {
                if !self.gates[l * self.n_heads + h] {
                    out.push((l, h));
                }
            }
        }
        out
    }

    /// Validate dimensions against a configuration.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        self.n_layers == config.n_layers
            && self.n_heads == config.n_heads
            && self.gates.len() == self.n_layers * self.n_heads
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted-scaling dropout applied while building a graph. `Off` emits no
/// nodes, so evaluation passes stay bitwise independent of the rate.
pub enum Dropout<'r> {
    Off,
    On { rate: f64, rng: &'r mut ChaCha8Rng },
}

impl Dropout<'_> {
    pub fn apply(&mut self, g: &mut Graph, x: TensorId) -> Result<TensorId, ModelError> {
        match self {
            Dropout::Off => Ok(x),
            Dropout::On { rate, rng } => {
                let shape = g.shape(x).to_vec();
                let n: usize = shape.iter().product();
                let keep = 1.0 - *rate;
                let mask: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random_range(0.0..1.0) < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let m = g.constant(mask, shape)?;
                Ok(g.mul(x, m)?)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

enum Init {
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

fn for_each_param<F>(config: &ModelConfig, mut f: F)
where
    F: FnMut(String, Vec<usize>, Init),
{
    let d = config.d_model;
    let dk = config.d_head();
    let h2 = 2 * config.lstm_hidden;
    f(
        String::from("embed.tok"),
        alloc::vec![config.vocab_size, d],
        Init::Uniform { fan_in: d },
    );
    f(
        String::from("embed.pos"),
        alloc::vec![config.max_len, d],
        Init::Uniform { fan_in: d },
    );
    f(String::from("embed.norm.gamma"), alloc::vec![d], Init::Ones);
    f(String::from("embed.norm.beta"), alloc::vec![d], Init::Zeros);
    for l in 0..config.n_layers {
        for h in 0..config.n_heads {
            for proj in ["q", "k", "v"] {
                f(
                    format!("enc{l}.h{h}.w{proj}"),
                    alloc::vec![d, dk],
                    Init::Uniform { fan_in: d },
                );
                f(format!("enc{l}.h{h}.b{proj}"), alloc::vec![dk], Init::Zeros);
            }
        }
        f(
            format!("enc{l}.attn.wo"),
            alloc::vec![d, d],
            Init::Uniform { fan_in: d },
        );
        f(format!("enc{l}.attn.bo"), alloc::vec![d], Init::Zeros);
        f(format!("enc{l}.norm1.gamma"), alloc::vec![d], Init::Ones);
        f(format!("enc{l}.norm1.beta"), alloc::vec![d], Init::Zeros);
        f(
            format!("enc{l}.ffn.w1"),
            alloc::vec![d, config.d_ff],
            Init::Uniform { fan_in: d },
        );
        f(format!("enc{l}.ffn.b1"), alloc::vec![config.d_ff], Init::Zeros);
        f(
            format!("enc{l}.ffn.w2"),
            alloc::vec![config.d_ff, d],
            Init::Uniform { fan_in: config.d_ff },
        );
        f(format!("enc{l}.ffn.b2"), alloc::vec![d], Init::Zeros);
        f(format!("enc{l}.norm2.gamma"), alloc::vec![d], Init::Ones);
        f(format!("enc{l}.norm2.beta"), alloc::vec![d], Init::Zeros);
    }
    for k in 0..config.lstm_layers {
        let input = if k == 0 { d } else { h2 };
        for dir in ["fwd", "bwd"] {
            let names = lstm::dir_param_names(k, dir);
            // Order inside `names`: wx{i,f,g,o}, wh{i,f,g,o}, b{i,f,g,o}.
            for name in names.iter().take(4) {
                f(
                    name.clone(),
                    alloc::vec![input, config.lstm_hidden],
                    Init::Uniform { fan_in: input },
                );
            }
            for name in names.iter().skip(4).take(4) {
                f(
                    name.clone(),
                    alloc::vec![config.lstm_hidden, config.lstm_hidden],
                    Init::Uniform {
                        fan_in: config.lstm_hidden,
                    },
                );
            }
            for name in names.iter().skip(8) {
                f(name.clone(), alloc::vec![config.lstm_hidden], Init::Zeros);
            }
        }
    }
    f(
        String::from("cls.w"),
        alloc::vec![h2, 1],
        Init::Uniform { fan_in: h2 },
    );
    f(String::from("cls.b"), alloc::vec![1], Init::Zeros);
}

/// Declaration-order `(name, shape)` pairs for a configuration, the
/// authoritative layout for initialization and restoration alike.
pub fn param_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for_each_param(config, |name, shape, _| out.push((name, shape)));
    out
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub head_mask: HeadMask,
}

/// Graph ids for every parameter of one bound model, plus the typed views the
/// forward pass walks.
pub struct ModelBinding {
    /// One id per parameter, in declaration order.
    pub all: Vec<TensorId>,
    pub embed_tok: TensorId,
    pub embed_pos: TensorId,
    pub embed_norm_gamma: TensorId,
    pub embed_norm_beta: TensorId,
    pub layers: Vec<LayerIds>,
    pub lstm: Vec<LstmLayerIds>,
    pub cls_w: TensorId,
    pub cls_b: TensorId,
}

/// Forward-pass switches. The default runs inference: no retained head
/// gradients, no override.
#[derive(Default)]
pub struct ForwardOptions {
    pub retain_heads: bool,
    pub head_override: Option<HeadOverride>,
}

/// Tensors of interest from one forward pass.
pub struct ForwardDetail {
    /// Scalar-shaped `[1, 1]` raw score.
    pub logit: TensorId,
    /// Sigmoid of the logit.
    pub prob: TensorId,
    /// Encoder output over the padded sequence, `[seq, d_model]`.
    pub encoder_hidden: TensorId,
    /// Pre-gate head contexts, `[layer][head]`, each `[seq, d_head]`.
    pub head_ctx: Vec<Vec<TensorId>>,
    /// Attention weights, `[layer][head]`, each `[seq, seq]`.
    pub attn: Vec<Vec<TensorId>>,
    /// Number of leading unpadded positions.
    pub n_real: usize,
}

/// Inference result for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logit: f64,
    pub probability: f64,
    pub positive: bool,
}

impl Model {
    /// Fresh model with seeded uniform initialization. Gain matrices start at
    /// one, biases at zero, and every head gate is on.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut failed: Option<ParamError> = None;
        for_each_param(&config, |name, shape, init| {
            if failed.is_some() {
                return;
            }
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Uniform { fan_in } => uniform_init(&mut rng, n, fan_in),
                Init::Zeros => alloc::vec![0.0; n],
                Init::Ones => alloc::vec![1.0; n],
            };
            if let Err(e) = params.add(name, shape, data) {
                failed = Some(e);
            }
        });
        if let Some(e) = failed {
            return Err(ModelError::Param(e));
        }
        let head_mask = HeadMask::all_on(config.n_layers, config.n_heads);
        Ok(Model {
            config,
            params,
            head_mask,
        })
    }

    /// Assemble a model from restored parts, checking that the parameter set
    /// matches the configuration's layout name-for-name and shape-for-shape.
    pub fn from_parts(
        config: ModelConfig,
        params: ParamSet,
        head_mask: HeadMask,
    ) -> Result<Model, ModelError> {
        config.validate()?;
        if !head_mask.matches(&config) {
            return Err(ModelError::MaskShape {
                mask_layers: head_mask.n_layers(),
                mask_heads: head_mask.n_heads(),
                n_layers: config.n_layers,
                n_heads: config.n_heads,
            });
        }
        let layout = param_layout(&config);
        if params.len() != layout.len() {
            return Err(ModelError::ParamCount {
                expected: layout.len(),
                got: params.len(),
            });
        }
        for (i, (name, shape)) in layout.iter().enumerate() {
            let p = params.at(i);
            if &p.name != name {
                return Err(ModelError::ParamName {
                    position: i,
                    expected: name.clone(),
                    got: p.name.clone(),
                });
            }
            if &p.shape != shape {
                return Err(ModelError::ParamShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    got: p.shape.clone(),
                });
            }
        }
        Ok(Model {
            config,
            params,
            head_mask,
        })
    }

    /// Bind every parameter into `g` and build the typed id views.
    pub fn bind(&self, g: &mut Graph) -> Result<ModelBinding, ModelError> {
        let all = self.params.bind(g);
        let id = |name: &str| -> Result<TensorId, ModelError> {
            self.params
                .index_of(name)
                .map(|i| all[i])
                .ok_or(ModelError::MissingParam {
                    name: String::from(name),
                })
        };
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for l in 0..self.config.n_layers {
            let mut heads = Vec::with_capacity(self.config.n_heads);
            for h in 0..self.config.n_heads {
                heads.push(crate::encoder::HeadIds {
                    wq: id(&format!("enc{l}.h{h}.wq"))?,
                    bq: id(&format!("enc{l}.h{h}.bq"))?,
                    wk: id(&format!("enc{l}.h{h}.wk"))?,
                    bk: id(&format!("enc{l}.h{h}.bk"))?,
                    wv: id(&format!("enc{l}.h{h}.wv"))?,
                    bv: id(&format!("enc{l}.h{h}.bv"))?,
                });
            }
            layers.push(LayerIds {
                heads,
                wo: id(&format!("enc{l}.attn.wo"))?,
                bo: id(&format!("enc{l}.attn.bo"))?,
                norm1_gamma: id(&format!("enc{l}.norm1.gamma"))?,
                norm1_beta: id(&format!("enc{l}.norm1.beta"))?,
                ffn_w1: id(&format!("enc{l}.ffn.w1"))?,
                ffn_b1: id(&format!("enc{l}.ffn.b1"))?,
                ffn_w2: id(&format!("enc{l}.ffn.w2"))?,
                ffn_b2: id(&format!("enc{l}.ffn.b2"))?,
                norm2_gamma: id(&format!("enc{l}.norm2.gamma"))?,
                norm2_beta: id(&format!("enc{l}.norm2.beta"))?,
            });
        }
        let mut lstm_layers = Vec::with_capacity(self.config.lstm_layers);
        for k in 0..self.config.lstm_layers {
            let dir = |names: [String; 12]| -> Result<LstmDirIds, ModelError> {
                Ok(LstmDirIds {
                    wxi: id(&names[0])?,
                    wxf: id(&names[1])?,
                    wxg: id(&names[2])?,
                    wxo: id(&names[3])?,
                    whi: id(&names[4])?,
                    whf: id(&names[5])?,
                    whg: id(&names[6])?,
                    who: id(&names[7])?,
                    bi: id(&names[8])?,
                    bf: id(&names[9])?,
                    bg: id(&names[10])?,
                    bo: id(&names[11])?,
                })
            };
            lstm_layers.push(LstmLayerIds {
                fwd: dir(lstm::dir_param_names(k, "fwd"))?,
                bwd: dir(lstm::dir_param_names(k, "bwd"))?,
            });
        }
        Ok(ModelBinding {
            embed_tok: id("embed.tok")?,
            embed_pos: id("embed.pos")?,
            embed_norm_gamma: id("embed.norm.gamma")?,
            embed_norm_beta: id("embed.norm.beta")?,
            layers,
            lstm: lstm_layers,
            cls_w: id("cls.w")?,
            cls_b: id("cls.b")?,
            all,
        })
    }

    /// Build the full forward computation for one sequence inside `g`.
    ///
    /// `pad_mask[i]` is true for real positions. Pads may only trail; the
    /// recurrent stage consumes exactly the leading real prefix, and padded
    /// key columns receive an additive penalty that zeroes their attention.
    pub fn forward(
        &self,
        g: &mut Graph,
        binding: &ModelBinding,
        tokens: &[usize],
        pad_mask: &[bool],
        opts: &ForwardOptions,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardDetail, ModelError> {
        let seq = tokens.len();
        if seq != pad_mask.len() {
            return Err(ModelError::LengthMismatch {
                tokens: seq,
                mask: pad_mask.len(),
            });
        }
        if seq == 0 || seq > self.config.max_len {
            return Err(ModelError::SeqLen {
                len: seq,
                max_len: self.config.max_len,
            });
        }
        for (position, &id) in tokens.iter().enumerate() {
            if id >= self.config.vocab_size {
                return Err(ModelError::TokenRange {
                    position,
                    id,
                    vocab_size: self.config.vocab_size,
                });
            }
        }
        let n_real = pad_mask.iter().take_while(|&&m| m).count();
        if n_real == 0 {
            return Err(ModelError::EmptySequence);
        }
        if let Some(ov) = &opts.head_override {
            if ov.layer >= self.config.n_layers || ov.head >= self.config.n_heads {
                return Err(ModelError::HeadIndex {
                    layer: ov.layer,
                    head: ov.head,
                    n_layers: self.config.n_layers,
                    n_heads: self.config.n_heads,
                });
            }
        }
        let mut dropout = match dropout_rng {
            Some(rng) if self.config.dropout > 0.0 => Dropout::On {
                rate: self.config.dropout,
                rng,
            },
            _ => Dropout::Off,
        };

        let tok_emb = g.embed(binding.embed_tok, tokens)?;
        let pos_slice = g.slice_rows(binding.embed_pos, 0, seq)?;
        let summed = g.add(tok_emb, pos_slice)?;
        let normed = encoder::affine_norm(
            g,
            summed,
            binding.embed_norm_gamma,
            binding.embed_norm_beta,
        )?;
        let x0 = dropout.apply(g, normed)?;

        let key_mask: Vec<f64> = pad_mask
            .iter()
            .map(|&m| if m { 0.0 } else { encoder::PAD_PENALTY })
            .collect();
        let gates = self.head_mask.gate_values();
        let enc_opts = EncoderOptions {
            retain_heads: opts.retain_heads,
            gates: &gates,
            head_override: opts.head_override.as_ref(),
        };
        let enc = encoder::encoder_forward(
            g,
            &binding.layers,
            x0,
            &key_mask,
            self.config.d_head(),
            &enc_opts,
            &mut dropout,
        )?;

        let mut rows = Vec::with_capacity(n_real);
        for t in 0..n_real {
            rows.push(g.slice_rows(enc.hidden, t, t + 1)?);
        }
        let feature = lstm::bilstm_forward(g, &binding.lstm, &rows, self.config.lstm_hidden)?;
        let raw = g.matmul(feature, binding.cls_w)?;
        let logit = g.add_bias(raw, binding.cls_b)?;
        let prob = g.sigmoid(logit);
        Ok(ForwardDetail {
            logit,
            prob,
            encoder_hidden: enc.hidden,
            head_ctx: enc.head_ctx,
            attn: enc.attn,
            n_real,
        })
    }

    /// Inference on one sequence with a fresh graph and no dropout.
    pub fn predict(&self, tokens: &[usize], pad_mask: &[bool]) -> Result<Prediction, ModelError> {
        let mut g = Graph::new();
        let binding = self.bind(&mut g)?;
        let detail = self.forward(
            &mut g,
            &binding,
            tokens,
            pad_mask,
            &ForwardOptions::default(),
            None,
        )?;
        let logit = g.data(detail.logit)[0];
        let probability = g.data(detail.prob)[0];
        Ok(Prediction {
            logit,
            probability,
            positive: probability >= 0.5,
        })
    }
}

/// Binary cross entropy of a probability node against a fixed label, with the
/// probability clamped to `[BCE_EPS, 1 - BCE_EPS]` first.
pub fn bce_loss(g: &mut Graph, prob: TensorId, label: bool) -> Result<TensorId, ModelError> {
    let clamped = g.clamp(prob, BCE_EPS, 1.0 - BCE_EPS);
    let log_term = if label {
        g.ln(clamped)
    } else {
        let neg = g.scale(clamped, -1.0);
        let one_minus = g.add_scalar(neg, 1.0);
        g.ln(one_minus)
    };
    Ok(g.scale(log_term, -1.0))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
