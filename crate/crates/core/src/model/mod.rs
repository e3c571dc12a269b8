//! The encoder-decoder network.
//!
//! One embedding matrix `E` (`vocab x d`) embeds node labels, embeds target
//! tokens and, transposed, projects decoder states to vocabulary logits.
//! Every block is pre-norm: `x + Dr(Sublayer(LN(x)))`; both stacks end with
//! an extra layer normalization.
//!
//! Graph self-attention adds a learned scalar `γ[head, bucket(R_ij)]` to the
//! scaled dot-product logits, text self-attention adds `S[head, clamp(j - i)]`
//! plus a causal mask, and encoder-decoder attention has no position term.
//! `γ` and `S` are shared by all layers of their stack.

mod config;

pub use config::ModelConfig;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, Result};
use crate::relpos::{PositionVocabulary, RelPosMatrix};
use crate::tensor::{Element, ParamId, ParamStore, Tape, Var, MASK_LOGIT};
use crate::vocab::{BOS, EOS};

/// Standard deviation of the normal initializer for weight matrices.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
struct AttentionIds {
    query: ParamId,
    key: ParamId,
    value: ParamId,
    output: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct FeedForwardIds {
    w_in: ParamId,
    b_in: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct NormIds {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayerIds {
    attn_norm: NormIds,
    attn: AttentionIds,
    ff_norm: NormIds,
    ff: FeedForwardIds,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayerIds {
    self_norm: NormIds,
    self_attn: AttentionIds,
    cross_norm: NormIds,
    cross_attn: AttentionIds,
    ff_norm: NormIds,
    ff: FeedForwardIds,
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: ParamId,
    graph_bias: ParamId,
    text_bias: ParamId,
    encoder: Vec<EncoderLayerIds>,
    encoder_norm: NormIds,
    decoder: Vec<DecoderLayerIds>,
    decoder_norm: NormIds,
}

/// Names of the parameter tensors, for checkpoints and inspection.
pub mod names {
    pub const EMBEDDING: &str = "embedding";
    pub const GRAPH_BIAS: &str = "graph_position_bias";
    pub const TEXT_BIAS: &str = "text_position_bias";
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

struct Builder<'a, T: Element> {
    store: ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    normal: Normal<f64>,
}

impl<T: Element> Builder<'_, T> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> Result<ParamId> {
        let values = match init {
            Init::Normal => (0..rows * cols)
                .map(|_| T::lit(self.normal.sample(self.rng)))
                .collect(),
            Init::Zeros => vec![T::zero(); rows * cols],
            Init::Ones => vec![T::one(); rows * cols],
        };
        self.store.add(name, rows, cols, values)
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Result<NormIds> {
        Ok(NormIds {
            gain: self.add(format!("{prefix}.gain"), 1, d, Init::Ones)?,
            bias: self.add(format!("{prefix}.bias"), 1, d, Init::Zeros)?,
        })
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Result<AttentionIds> {
        Ok(AttentionIds {
            query: self.add(format!("{prefix}.query"), d, d, Init::Normal)?,
            key: self.add(format!("{prefix}.key"), d, d, Init::Normal)?,
            value: self.add(format!("{prefix}.value"), d, d, Init::Normal)?,
            output: self.add(format!("{prefix}.output"), d, d, Init::Normal)?,
        })
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, d_ff: usize) -> Result<FeedForwardIds> {
        Ok(FeedForwardIds {
            w_in: self.add(format!("{prefix}.w_in"), d, d_ff, Init::Normal)?,
            b_in: self.add(format!("{prefix}.b_in"), 1, d_ff, Init::Zeros)?,
            w_out: self.add(format!("{prefix}.w_out"), d_ff, d, Init::Normal)?,
            b_out: self.add(format!("{prefix}.b_out"), 1, d, Init::Zeros)?,
        })
    }
}

fn build_layout<T: Element>(config: &ModelConfig, builder: &mut Builder<'_, T>) -> Result<Layout> {
    let d = config.d_model;
    let positions = PositionVocabulary::new(config.relpos)?;
    let embedding = builder.add(names::EMBEDDING.into(), config.vocab_size, d, Init::Normal)?;
    let graph_bias = builder.add(names::GRAPH_BIAS.into(), config.heads, positions.size(), Init::Zeros)?;
    let text_bias = builder.add(
        names::TEXT_BIAS.into(),
        config.heads,
        2 * config.text_range + 1,
        Init::Zeros,
    )?;
    let mut encoder = Vec::new();
    for l in 0..config.encoder_layers {
        let p = format!("encoder.{l}");
        encoder.push(EncoderLayerIds {
            attn_norm: builder.norm(&format!("{p}.attn_norm"), d)?,
            attn: builder.attention(&format!("{p}.self_attn"), d)?,
            ff_norm: builder.norm(&format!("{p}.ff_norm"), d)?,
            ff: builder.feed_forward(&format!("{p}.ff"), d, config.d_ff)?,
        });
    }
    let encoder_norm = builder.norm("encoder.final_norm", d)?;
    let mut decoder = Vec::new();
    for l in 0..config.decoder_layers {
        let p = format!("decoder.{l}");
        decoder.push(DecoderLayerIds {
            self_norm: builder.norm(&format!("{p}.self_norm"), d)?,
            self_attn: builder.attention(&format!("{p}.self_attn"), d)?,
            cross_norm: builder.norm(&format!("{p}.cross_norm"), d)?,
            cross_attn: builder.attention(&format!("{p}.cross_attn"), d)?,
            ff_norm: builder.norm(&format!("{p}.ff_norm"), d)?,
            ff: builder.feed_forward(&format!("{p}.ff"), d, config.d_ff)?,
        });
    }
    let decoder_norm = builder.norm("decoder.final_norm", d)?;
    Ok(Layout {
        embedding,
        graph_bias,
        text_bias,
        encoder,
        encoder_norm,
        decoder,
        decoder_norm,
    })
}

/// Which attention block produced a recorded weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Graph,
    Text,
    Cross,
}

/// Attention weights captured during a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct AttentionRecord {
    pub kind: AttentionKind,
    pub layer: usize,
    pub head: usize,
    /// Row-stochastic weights (before attention dropout).
    pub weights: Var,
}

/// Per-pass settings: train flag, dropout randomness and optional capture
/// of attention weights.
pub struct ForwardCtx<'r> {
    pub train: bool,
    rng: &'r mut dyn RngCore,
    record: bool,
    pub attention: Vec<AttentionRecord>,
}

impl<'r> ForwardCtx<'r> {
    pub fn new(train: bool, rng: &'r mut dyn RngCore) -> Self {
        Self {
            train,
            rng,
            record: false,
            attention: Vec::new(),
        }
    }

    /// Keep every attention weight matrix in [`ForwardCtx::attention`].
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }
}

/// The three places the shared embedding matrix is used. All three point to
/// the same tape node normally; tests substitute separate copies to measure
/// each path on its own.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingRoutes {
    pub encoder_input: Var,
    pub decoder_input: Var,
    pub output: Var,
}

/// Graph input ready for the encoder: node label ids and the row-major
/// bucket index of every relative position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphInput {
    pub labels: Vec<usize>,
    pub positions: Vec<usize>,
}

impl GraphInput {
    pub fn new(labels: Vec<usize>, r: &RelPosMatrix, config: &ModelConfig) -> Result<Self> {
        contract!(
            labels.len() == r.size(),
            "{} node labels for a {}x{} relative position matrix",
            labels.len(),
            r.size(),
            r.size()
        );
        contract!(
            r.config() == config.relpos,
            "relative positions built with {:?}, model expects {:?}",
            r.config(),
            config.relpos
        );
        let vocab = PositionVocabulary::new(config.relpos)?;
        Ok(Self {
            labels,
            positions: r.indices(&vocab)?,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Text self-attention bucket for query `i`, key `j`.
pub fn text_position_index(i: usize, j: usize, range: usize) -> usize {
    let r = range as i64;
    ((j as i64 - i as i64).clamp(-r, r) + r) as usize
}

enum Bias<'a> {
    Graph(&'a [usize]),
    Text,
    None,
}

/// Encoder-decoder model with learned structural attention bias.
#[derive(Debug, Clone)]
pub struct Graformer<T: Element> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Element> Graformer<T> {
    /// Fresh model: normal(0, 0.02) matrices, unit norm gains, zero biases and
    /// zero position bias tables.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut builder = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
            normal: Normal::new(0.0, INIT_STD).expect("valid std"),
        };
        let layout = build_layout(&config, &mut builder)?;
        Ok(Self {
            config,
            params: builder.store,
            layout,
        })
    }

    /// Wrap existing parameters; names and shapes must match `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let reference = Self::new(config.clone(), 0)?;
        contract!(
            params.len() == reference.params.len(),
            "expected {} parameter tensors, got {}",
            reference.params.len(),
            params.len()
        );
        for ((_, want), (_, got)) in reference.params.iter().zip(params.iter()) {
            contract!(
                want.name == got.name && want.shape() == got.shape(),
                "parameter mismatch: expected {} {:?}, got {} {:?}",
                want.name,
                want.shape(),
                got.name,
                got.shape()
            );
        }
        Ok(Self {
            config,
            params,
            layout: reference.layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn embedding_id(&self) -> ParamId {
        self.layout.embedding
    }

    pub fn graph_bias_id(&self) -> ParamId {
        self.layout.graph_bias
    }

    pub fn text_bias_id(&self) -> ParamId {
        self.layout.text_bias
    }

    /// Same model in another precision.
    pub fn cast<U: Element>(&self) -> Graformer<U> {
        Graformer {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    pub fn embedding_routes(&self, tape: &mut Tape<'_, T>) -> EmbeddingRoutes {
        let e = tape.param(self.layout.embedding);
        EmbeddingRoutes {
            encoder_input: e,
            decoder_input: e,
            output: e,
        }
    }

    fn layer_norm(&self, tape: &mut Tape<'_, T>, x: Var, ids: NormIds) -> Result<Var> {
        let (g, b) = (tape.param(ids.gain), tape.param(ids.bias));
        tape.layer_norm(x, g, b)
    }

    fn feed_forward(&self, tape: &mut Tape<'_, T>, x: Var, ids: FeedForwardIds) -> Result<Var> {
        let (w_in, b_in) = (tape.param(ids.w_in), tape.param(ids.b_in));
        let (w_out, b_out) = (tape.param(ids.w_out), tape.param(ids.b_out));
        let h = tape.matmul(x, w_in)?;
        let h = tape.add_row(h, b_in)?;
        let h = tape.gelu(h);
        let y = tape.matmul(h, w_out)?;
        tape.add_row(y, b_out)
    }

    /// Multi-head attention of `queries` over `keys_values`; heads partition
    /// the model dimension and logits are scaled by `1/sqrt(d_head)`.
    #[allow(clippy::too_many_arguments)]
    fn attention(
        &self,
        tape: &mut Tape<'_, T>,
        ctx: &mut ForwardCtx<'_>,
        queries: Var,
        keys_values: Var,
        ids: AttentionIds,
        bias: Bias<'_>,
        kind: AttentionKind,
        layer: usize,
    ) -> Result<Var> {
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let [m, _] = tape.shape(queries);
        let [n, _] = tape.shape(keys_values);
        let (wq, wk, wv, wo) = (
            tape.param(ids.query),
            tape.param(ids.key),
            tape.param(ids.value),
            tape.param(ids.output),
        );
        let q = tape.matmul(queries, wq)?;
        let k = tape.matmul(keys_values, wk)?;
        let v = tape.matmul(keys_values, wv)?;
        let scale = T::lit(1.0 / (dh as f64).sqrt());

        let (text_idx, mask) = match bias {
            Bias::Text => {
                let range = self.config.text_range;
                let idx: Vec<usize> = (0..m)
                    .flat_map(|i| (0..n).map(move |j| text_position_index(i, j, range)))
                    .collect();
                let mask_values = (0..m)
                    .flat_map(|i| (0..n).map(move |j| if j > i { T::lit(MASK_LOGIT) } else { T::zero() }))
                    .collect();
                (idx, Some(tape.constant(m, n, mask_values)?))
            }
            _ => (Vec::new(), None),
        };

        let mut outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let scores = tape.matmul_t(qh, kh)?;
            let mut logits = tape.scale(scores, scale);
            match bias {
                Bias::Graph(indices) => {
                    let table = tape.param(self.layout.graph_bias);
                    let b = tape.bias_gather(table, h, indices, m, n)?;
                    logits = tape.add(logits, b)?;
                }
                Bias::Text => {
                    let table = tape.param(self.layout.text_bias);
                    let b = tape.bias_gather(table, h, &text_idx, m, n)?;
                    logits = tape.add(logits, b)?;
                    logits = tape.add(logits, mask.expect("text mask"))?;
                }
                Bias::None => {}
            }
            let weights = tape.softmax(logits);
            if ctx.record {
                ctx.attention.push(AttentionRecord {
                    kind,
                    layer,
                    head: h,
                    weights,
                });
            }
            let dropped = tape.dropout(weights, self.config.attention_dropout, ctx.train, &mut *ctx.rng)?;
            outputs.push(tape.matmul(dropped, vh)?);
        }
        let joined = tape.concat_cols(&outputs)?;
        tape.matmul(joined, wo)
    }

    fn residual(&self, tape: &mut Tape<'_, T>, ctx: &mut ForwardCtx<'_>, base: Var, update: Var) -> Result<Var> {
        let dropped = tape.dropout(update, self.config.dropout, ctx.train, &mut *ctx.rng)?;
        tape.add(dropped, base)
    }

    /// Encoder output `H` (`|N| x d`).
    pub fn encode(&self, tape: &mut Tape<'_, T>, graph: &GraphInput, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let routes = self.embedding_routes(tape);
        self.encode_with(tape, routes.encoder_input, graph, ctx)
    }

    pub fn encode_with(
        &self,
        tape: &mut Tape<'_, T>,
        embedding: Var,
        graph: &GraphInput,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let n = graph.len();
        contract!(n > 0, "graph has no nodes");
        contract!(
            graph.positions.len() == n * n,
            "{} relative positions for {n} nodes",
            graph.positions.len()
        );
        let x = tape.embed(embedding, &graph.labels)?;
        let mut h = tape.dropout(x, self.config.input_dropout, ctx.train, &mut *ctx.rng)?;
        for (l, ids) in self.layout.encoder.clone().into_iter().enumerate() {
            let normed = self.layer_norm(tape, h, ids.attn_norm)?;
            let att = self.attention(
                tape,
                ctx,
                normed,
                normed,
                ids.attn,
                Bias::Graph(&graph.positions),
                AttentionKind::Graph,
                l,
            )?;
            let inter = self.residual(tape, ctx, h, att)?;
            let normed = self.layer_norm(tape, inter, ids.ff_norm)?;
            let ff = self.feed_forward(tape, normed, ids.ff)?;
            h = self.residual(tape, ctx, inter, ff)?;
        }
        self.layer_norm(tape, h, self.layout.encoder_norm)
    }

    /// Final decoder states `Z` (`M x d`) for BOS-prefixed `inputs`.
    pub fn decode_states(
        &self,
        tape: &mut Tape<'_, T>,
        embedding: Var,
        inputs: &[usize],
        memory: Var,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        contract!(!inputs.is_empty(), "decoder input has length 0");
        let x = tape.embed(embedding, inputs)?;
        let mut z = tape.dropout(x, self.config.input_dropout, ctx.train, &mut *ctx.rng)?;
        for (l, ids) in self.layout.decoder.clone().into_iter().enumerate() {
            let normed = self.layer_norm(tape, z, ids.self_norm)?;
            let att = self.attention(tape, ctx, normed, normed, ids.self_attn, Bias::Text, AttentionKind::Text, l)?;
            let c = self.residual(tape, ctx, z, att)?;
            let normed = self.layer_norm(tape, c, ids.cross_norm)?;
            let cross = self.attention(
                tape,
                ctx,
                normed,
                memory,
                ids.cross_attn,
                Bias::None,
                AttentionKind::Cross,
                l,
            )?;
            let u = self.residual(tape, ctx, c, cross)?;
            let normed = self.layer_norm(tape, u, ids.ff_norm)?;
            let ff = self.feed_forward(tape, normed, ids.ff)?;
            z = self.residual(tape, ctx, u, ff)?;
        }
        self.layer_norm(tape, z, self.layout.decoder_norm)
    }

    /// Vocabulary logits `Z Eᵀ` (`M x |Σ|`).
    pub fn decode(&self, tape: &mut Tape<'_, T>, inputs: &[usize], memory: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let routes = self.embedding_routes(tape);
        let z = self.decode_states(tape, routes.decoder_input, inputs, memory, ctx)?;
        tape.matmul_t(z, routes.output)
    }

    /// Teacher-forced loss of `target` (no BOS/EOS) given `graph`. The
    /// decoder reads `BOS + target`, the loss is taken against `target + EOS`,
    /// and the summed token loss is divided by `normalizer`.
    pub fn loss(
        &self,
        tape: &mut Tape<'_, T>,
        graph: &GraphInput,
        target: &[usize],
        smoothing: f64,
        normalizer: f64,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let routes = self.embedding_routes(tape);
        self.loss_with(tape, routes, graph, target, smoothing, normalizer, ctx)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn loss_with(
        &self,
        tape: &mut Tape<'_, T>,
        routes: EmbeddingRoutes,
        graph: &GraphInput,
        target: &[usize],
        smoothing: f64,
        normalizer: f64,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let (inputs, gold) = teacher_forcing(target);
        let memory = self.encode_with(tape, routes.encoder_input, graph, ctx)?;
        let z = self.decode_states(tape, routes.decoder_input, &inputs, memory, ctx)?;
        let logits = tape.matmul_t(z, routes.output)?;
        let gold: Vec<Option<usize>> = gold.into_iter().map(Some).collect();
        tape.smoothed_cross_entropy(logits, &gold, smoothing, normalizer)
    }

    /// Encoder output values for repeated decoding.
    pub fn encode_values(&self, graph: &GraphInput) -> Result<(usize, Vec<T>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = ForwardCtx::new(false, &mut rng);
        let mut tape = Tape::new(&self.params);
        let h = self.encode(&mut tape, graph, &mut ctx)?;
        Ok((tape.shape(h)[0], tape.value(h).to_vec()))
    }

    /// Log-probabilities of the next token after BOS + `prefix`, given
    /// encoder output values.
    pub fn next_log_probs(&self, memory: &(usize, Vec<T>), prefix: &[usize]) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = ForwardCtx::new(false, &mut rng);
        let mut tape = Tape::new(&self.params);
        let h = tape.constant(memory.0, self.config.d_model, memory.1.clone())?;
        let mut inputs = Vec::with_capacity(prefix.len() + 1);
        inputs.push(BOS);
        inputs.extend_from_slice(prefix);
        let logits = self.decode(&mut tape, &inputs, h, &mut ctx)?;
        let v = self.config.vocab_size;
        let last = &tape.value(logits)[(inputs.len() - 1) * v..];
        Ok(log_softmax(last))
    }
}

/// Decoder input (`BOS + target`) and gold output (`target + EOS`).
pub fn teacher_forcing(target: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut inputs = Vec::with_capacity(target.len() + 1);
    inputs.push(BOS);
    inputs.extend_from_slice(target);
    let mut gold = target.to_vec();
    gold.push(EOS);
    (inputs, gold)
}

pub(crate) fn log_softmax<T: Element>(row: &[T]) -> Vec<f64> {
    let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    row.iter().map(|&z| z - lse).collect()
}
