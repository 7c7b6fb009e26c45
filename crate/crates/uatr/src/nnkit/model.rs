//! The compact residual classifier with attention pooling.
//!
//! Time frames are processed independently: the trunk applies residual
//! 1-d convolutions along the frequency axis of each frame (stride-2
//! downsampling per stage), so the per-frame feature sequence carries no
//! positional information and the attention pooling is, by construction,
//! invariant to permutations of the time axis.

use rand::Rng;

use crate::error::NnError;
use crate::nnkit::graph::{Graph, NodeId};
use crate::nnkit::tensor::Tensor;
use crate::rng;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub n_classes: usize,
    /// Frequency bins the model expects per frame.
    pub input_bins: usize,
    /// Channels per residual stage; each stage halves the frequency axis.
    pub stage_channels: Vec<usize>,
    /// Pooled embedding width fed to the classifier and pruning layers.
    pub embed_dim: usize,
    pub n_heads: usize,
    /// Output width of the linear pruning layer.
    pub prune_dim: usize,
}

impl ModelConfig {
    /// The default compact trunk: 3 stages at 16/32/64 channels.
    pub fn compact(n_classes: usize, input_bins: usize) -> Self {
        Self {
            n_classes,
            input_bins,
            stage_channels: vec![16, 32, 64],
            embed_dim: 64,
            n_heads: 4,
            prune_dim: 16,
        }
    }

    /// A tiny configuration for gradient checks and fast tests.
    pub fn tiny(n_classes: usize, input_bins: usize) -> Self {
        Self {
            n_classes,
            input_bins,
            stage_channels: vec![2, 4],
            embed_dim: 6,
            n_heads: 2,
            prune_dim: 4,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.stage_channels.is_empty() {
            return Err(NnError::Parameter {
                field: "stage_channels".into(),
                reason: "at least one stage required".into(),
            });
        }
        let d = *self.stage_channels.last().unwrap();
        if self.n_heads == 0 || d % self.n_heads != 0 {
            return Err(NnError::Parameter {
                field: "n_heads".into(),
                reason: format!("trunk width {d} must be divisible by head count"),
            });
        }
        if self.n_classes == 0 || self.input_bins == 0 || self.embed_dim == 0 || self.prune_dim == 0
        {
            return Err(NnError::Parameter {
                field: "config".into(),
                reason: "all dimensions must be positive".into(),
            });
        }
        Ok(())
    }

    /// Canonical string digested into checkpoints.
    pub fn canonical(&self) -> String {
        format!(
            "v1;classes={};bins={};stages={:?};embed={};heads={};prune={}",
            self.n_classes,
            self.input_bins,
            self.stage_channels,
            self.embed_dim,
            self.n_heads,
            self.prune_dim
        )
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// All trainable parameters plus optimizer moments and the step counter.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Vec<Param>,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
    pub step: u64,
}

/// Raw and (optionally) noisy logits of one batch, with the pooled
/// embeddings and pruning-layer outputs of the raw inputs.
///
/// Noisy logits exist only for the regularizer; nothing routes them into
/// the ground-truth loss.
#[derive(Debug, Clone)]
pub struct LogitBundle {
    pub logits: Tensor,
    pub noisy_logits: Option<Tensor>,
    pub embeddings: Tensor,
    pub prune_raw: Tensor,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardPass {
    pub logits: NodeId,
    pub embedding: NodeId,
    pub prune_raw: NodeId,
}

/// Parameter leaves bound onto a tape; both the raw and the noisy forward
/// pass of a batch share these, so gradients accumulate in one place.
pub struct BoundModel {
    param_ids: Vec<NodeId>,
}

fn he_uniform(rng: &mut impl Rng, dims: &[usize], fan_in: usize) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n: usize = dims.iter().product();
    Tensor {
        dims: dims.to_vec(),
        data: (0..n).map(|_| rng.gen_range(-limit..limit)).collect(),
    }
}

impl ModelState {
    /// He-uniform weights, zero biases, fresh moments; deterministic per seed.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut init_rng = rng::stream("init", seed);
        let mut params = Vec::new();
        let mut push = |name: String, value: Tensor| params.push(Param { name, value });

        let mut in_ch = 1usize;
        for (s, &c) in config.stage_channels.iter().enumerate() {
            push(
                format!("stage{s}.down.w"),
                he_uniform(&mut init_rng, &[c, in_ch, 3], in_ch * 3),
            );
            push(format!("stage{s}.down.b"), Tensor::zeros(&[c]));
            push(
                format!("stage{s}.res1.w"),
                he_uniform(&mut init_rng, &[c, c, 3], c * 3),
            );
            push(format!("stage{s}.res1.b"), Tensor::zeros(&[c]));
            push(
                format!("stage{s}.res2.w"),
                he_uniform(&mut init_rng, &[c, c, 3], c * 3),
            );
            push(format!("stage{s}.res2.b"), Tensor::zeros(&[c]));
            in_ch = c;
        }

        let d = *config.stage_channels.last().unwrap();
        let e = config.embed_dim;
        push("attn.wq".into(), he_uniform(&mut init_rng, &[d, d], d));
        push("attn.wk".into(), he_uniform(&mut init_rng, &[d, d], d));
        push("attn.wv".into(), he_uniform(&mut init_rng, &[d, d], d));
        push("attn.query".into(), he_uniform(&mut init_rng, &[d], d));
        push("attn.mix.w".into(), he_uniform(&mut init_rng, &[d, e], d));
        push("attn.mix.b".into(), Tensor::zeros(&[e]));
        push(
            "head.w".into(),
            he_uniform(&mut init_rng, &[e, config.n_classes], e),
        );
        push("head.b".into(), Tensor::zeros(&[config.n_classes]));
        push(
            "prune.w".into(),
            he_uniform(&mut init_rng, &[e, config.prune_dim], e),
        );
        push("prune.b".into(), Tensor::zeros(&[config.prune_dim]));

        let adam_m = params.iter().map(|p| Tensor::zeros(&p.value.dims)).collect();
        let adam_v = params.iter().map(|p| Tensor::zeros(&p.value.dims)).collect();
        Ok(Self {
            config,
            params,
            adam_m,
            adam_v,
            step: 0,
        })
    }

    /// Registers every parameter as a leaf on the tape.
    pub fn bind(&self, graph: &mut Graph) -> Result<BoundModel, NnError> {
        let mut param_ids = Vec::with_capacity(self.params.len());
        for p in &self.params {
            param_ids.push(graph.leaf(p.value.clone())?);
        }
        Ok(BoundModel { param_ids })
    }

    /// Evaluation-only forward pass on a throwaway tape.
    pub fn forward_eval(&self, batch: &Tensor) -> Result<LogitBundle, NnError> {
        let mut graph = Graph::new();
        let bound = self.bind(&mut graph)?;
        let pass = bound.forward(&mut graph, self, batch)?;
        Ok(LogitBundle {
            logits: graph.value(pass.logits).clone(),
            noisy_logits: None,
            embeddings: graph.value(pass.embedding).clone(),
            prune_raw: graph.value(pass.prune_raw).clone(),
        })
    }
}

impl BoundModel {
    /// Gradients aligned with `ModelState::params`, zeros where a
    /// parameter did not influence the loss.
    pub fn param_grads(&self, model: &ModelState, grads: &[Option<Tensor>]) -> Vec<Tensor> {
        self.param_ids
            .iter()
            .zip(&model.params)
            .map(|(id, p)| {
                grads[id.0]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(&p.value.dims))
            })
            .collect()
    }

    /// Runs the classifier on a batch shaped `n x frames x bins`.
    pub fn forward(
        &self,
        graph: &mut Graph,
        model: &ModelState,
        batch: &Tensor,
    ) -> Result<ForwardPass, NnError> {
        let &[n, frames, bins] = &batch.dims[..] else {
            return Err(NnError::Shape {
                op: "forward".into(),
                detail: format!("expected n x frames x bins batch, got {:?}", batch.dims),
            });
        };
        if bins != model.config.input_bins {
            return Err(NnError::Shape {
                op: "forward".into(),
                detail: format!(
                    "batch has {bins} bins, model expects {}",
                    model.config.input_bins
                ),
            });
        }

        let pid = |idx: usize| self.param_ids[idx];
        let n_stages = model.config.stage_channels.len();

        let input = graph.leaf(batch.clone())?;
        // Frames become batch entries: the trunk never mixes time steps.
        let mut x = graph.reshape(input, vec![n * frames, 1, bins])?;
        for s in 0..n_stages {
            let base = s * 6;
            x = graph.conv1d(x, pid(base), pid(base + 1), 2, 1)?;
            let mut h = graph.silu(x)?;
            h = graph.conv1d(h, pid(base + 2), pid(base + 3), 1, 1)?;
            h = graph.silu(h)?;
            h = graph.conv1d(h, pid(base + 4), pid(base + 5), 1, 1)?;
            x = graph.add(x, h)?;
        }

        let d = *model.config.stage_channels.last().unwrap();
        let pooled_freq = graph.mean_last(x)?; // (n*frames, d)
        let seq = graph.reshape(pooled_freq, vec![n, frames, d])?;

        let tail = n_stages * 6;
        let pooled = graph.attn_pool(
            seq,
            pid(tail),     // wq
            pid(tail + 1), // wk
            pid(tail + 2), // wv
            pid(tail + 3), // query token
            model.config.n_heads,
        )?;
        let embedding = graph.linear(pooled, pid(tail + 4), pid(tail + 5))?;
        let logits = graph.linear(embedding, pid(tail + 6), pid(tail + 7))?;
        let prune_raw = graph.linear(embedding, pid(tail + 8), pid(tail + 9))?;

        Ok(ForwardPass {
            logits,
            embedding,
            prune_raw,
        })
    }
}
