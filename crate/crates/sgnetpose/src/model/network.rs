//! The trajectory-prediction network: bbox encoder with goal feedback,
//! pose encoder, CVAE, stepwise goal estimation with attention
//! aggregation, and an autoregressive box decoder.

use std::fmt::Debug;
use std::marker::PhantomData;

use num_traits::Float;

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::gru::{gru_cell, GruCellIds};
use crate::autodiff::{RngState, TensorOf};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::params::expected_shapes;
use crate::model::{ModelConfig, ParamSet};

/// State threaded through the bbox encoder: GRU hidden plus the previous
/// step's aggregated goal. Both start at zero.
#[derive(Debug, Clone, Copy)]
pub struct EncoderState {
    pub h: NodeId,
    pub x_tilde: NodeId,
}

/// Goals regressed from one hidden state: `remaining` normalized boxes per
/// sample, batch-major `[B·remaining, 4]`, plus their `[B·remaining, d_e]`
/// embeddings.
#[derive(Debug, Clone, Copy)]
pub struct StepwiseGoals {
    pub positions: NodeId,
    pub hiddens: NodeId,
    pub batch: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LatentGaussian {
    pub mu: NodeId,
    pub log_sigma: NodeId,
}

/// Attention-pooled goal summary `[B, d_e]` plus each sample's softmax
/// weight vector, surfaced for diagnostics.
pub struct Aggregated {
    pub x_tilde: NodeId,
    pub weights: Vec<NodeId>,
}

/// Encoder and decoder keep separate attention parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnScope {
    Encoder,
    Decoder,
}

impl AttnScope {
    fn prefix(self) -> &'static str {
        match self {
            AttnScope::Encoder => "attn_enc",
            AttnScope::Decoder => "attn_dec",
        }
    }
}

#[derive(Debug)]
pub struct ForwardOutput {
    /// `predictions[k][i]` is a `[B, 4]` normalized box at horizon step i.
    pub predictions: Vec<Vec<NodeId>>,
    /// Recognition distribution; present in train mode only.
    pub q: Option<LatentGaussian>,
    pub p: LatentGaussian,
    /// The full goal set regressed after every encoder step.
    pub encoder_goals: Vec<StepwiseGoals>,
    /// `decoder_attn[k][i]` holds one weight vector per sample.
    pub decoder_attn: Vec<Vec<Vec<NodeId>>>,
}

const LOG_SIGMA_BOUND: f64 = 8.0;

/// Model parameters bound into a graph as differentiable leaves, plus the
/// wiring to run them. Generic over the scalar so gradient checks can run
/// the identical network in f64.
pub struct Network<F> {
    cfg: ModelConfig,
    ids: Vec<(String, NodeId)>,
    _f: PhantomData<F>,
}

impl<F: Float + Debug> Network<F> {
    pub fn bind(g: &mut Graph<F>, cfg: &ModelConfig, params: &ParamSet) -> Result<Self> {
        cfg.validate()?;
        let expected = expected_shapes(cfg);
        if params.len() != expected.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, config implies {}",
                params.len(),
                expected.len()
            )));
        }
        let mut ids = Vec::with_capacity(expected.len());
        for ((name, tensor), (want_name, want_shape)) in params.iter().zip(&expected) {
            if name != want_name || tensor.shape() != &want_shape[..] {
                return Err(Error::Config(format!(
                    "parameter '{}' {:?} does not match expected '{}' {:?}",
                    name,
                    tensor.shape(),
                    want_name,
                    want_shape
                )));
            }
            ids.push((name.to_string(), g.param(tensor.cast::<F>())));
        }
        Ok(Network { cfg: cfg.clone(), ids, _f: PhantomData })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Parameter leaves in canonical order, aligned with [`ParamSet`].
    pub fn param_nodes(&self) -> Vec<NodeId> {
        self.ids.iter().map(|(_, id)| *id).collect()
    }

    fn node(&self, name: &str) -> NodeId {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("parameter '{}' not bound", name))
            .1
    }

    fn fc(&self, g: &mut Graph<F>, x: NodeId, name: &str) -> Result<NodeId> {
        g.linear(x, self.node(&format!("{}.w", name)), self.node(&format!("{}.b", name)))
    }

    fn gru_ids(&self, prefix: &str) -> GruCellIds {
        GruCellIds {
            w_r: self.node(&format!("{}.gru.wr", prefix)),
            b_r: self.node(&format!("{}.gru.br", prefix)),
            w_u: self.node(&format!("{}.gru.wu", prefix)),
            b_u: self.node(&format!("{}.gru.bu", prefix)),
            w_c: self.node(&format!("{}.gru.wc", prefix)),
            b_c: self.node(&format!("{}.gru.bc", prefix)),
        }
    }

    fn zeros(&self, g: &mut Graph<F>, rows: usize, cols: usize) -> NodeId {
        g.constant(TensorOf::zeros(vec![rows, cols]))
    }

    pub fn initial_encoder_state(&self, g: &mut Graph<F>, batch: usize) -> EncoderState {
        EncoderState {
            h: self.zeros(g, batch, self.cfg.hidden_dim),
            x_tilde: self.zeros(g, batch, self.cfg.embed_dim),
        }
    }

    /// FC + ReLU box embedding, shared by the encoder, the target encoder,
    /// and the decoder's feedback path.
    pub fn embed_bbox(&self, g: &mut Graph<F>, x: NodeId) -> Result<NodeId> {
        let lin = self.fc(g, x, "embed_bbox")?;
        Ok(g.relu(lin))
    }

    /// One bbox-encoder step: the GRU consumes the box embedding
    /// concatenated with the previous step's aggregated goal.
    pub fn encoder_step(&self, g: &mut Graph<F>, state: &EncoderState, x_e: NodeId) -> Result<NodeId> {
        let gin = g.concat(&[x_e, state.x_tilde], 1)?;
        gru_cell(g, gin, state.h, self.gru_ids("enc_bbox"))
    }

    /// Regresses goals for the last `remaining` horizon steps and embeds
    /// them (FC + ReLU).
    pub fn sge_predict(&self, g: &mut Graph<F>, h: NodeId, remaining: usize) -> Result<StepwiseGoals> {
        let ld = self.cfg.pred_len;
        if remaining == 0 || remaining > ld {
            return Err(Error::Usage(format!(
                "remaining goal count {} outside 1..={}",
                remaining, ld
            )));
        }
        let (batch, _) = g.value(h).dims2();
        let all = self.fc(g, h, "goal_regressor")?;
        let flat = g.reshape(all, vec![batch * ld, 4])?;
        let positions = if remaining == ld {
            flat
        } else {
            let start = ld - remaining;
            let mut parts = Vec::with_capacity(batch);
            for b in 0..batch {
                parts.push(g.rows(flat, b * ld + start, remaining)?);
            }
            g.concat(&parts, 0)?
        };
        let lin = self.fc(g, positions, "goal_embed")?;
        let hiddens = g.relu(lin);
        Ok(StepwiseGoals { positions, hiddens, batch, remaining })
    }

    /// Attention over goal embeddings: scores tanh(H)·W + b, softmax
    /// weights, weighted sum per sample.
    pub fn goal_aggregate(&self, g: &mut Graph<F>, goals: &StepwiseGoals, scope: AttnScope) -> Result<Aggregated> {
        self.goal_aggregate_from(g, goals, 0, scope)
    }

    /// Aggregates only goals `start..remaining`, the decoder's shrinking
    /// suffix view.
    fn goal_aggregate_from(
        &self,
        g: &mut Graph<F>,
        goals: &StepwiseGoals,
        start: usize,
        scope: AttnScope,
    ) -> Result<Aggregated> {
        if start >= goals.remaining {
            return Err(Error::Usage(format!(
                "goal suffix start {} leaves no goals of {}",
                start, goals.remaining
            )));
        }
        let count = goals.remaining - start;
        let mut parts = Vec::with_capacity(goals.batch);
        let mut weights = Vec::with_capacity(goals.batch);
        for b in 0..goals.batch {
            let h_b = g.rows(goals.hiddens, b * goals.remaining + start, count)?;
            let t = g.tanh(h_b);
            let scores = self.fc(g, t, scope.prefix())?;
            let w = g.softmax(scores);
            let w_t = g.transpose(w);
            parts.push(g.matmul(w_t, h_b)?);
            weights.push(w);
        }
        Ok(Aggregated { x_tilde: g.concat(&parts, 0)?, weights })
    }

    /// Per-frame FC + ReLU + dropout embedding, then a GRU over the pose
    /// sequence; returns the final hidden state.
    pub fn pose_encoder(
        &self,
        g: &mut Graph<F>,
        pose_steps: &[NodeId],
        training: bool,
        rng: &mut RngState,
    ) -> Result<NodeId> {
        if !self.cfg.feature_mode.uses_pose() {
            return Err(Error::Usage(
                "pose encoder invoked in bbox-only mode".into(),
            ));
        }
        if pose_steps.len() != self.cfg.obs_len {
            return Err(Error::Config(format!(
                "pose sequence has {} steps, model observes {}",
                pose_steps.len(),
                self.cfg.obs_len
            )));
        }
        let (batch, _) = g.value(pose_steps[0]).dims2();
        let mut h = self.zeros(g, batch, self.cfg.hidden_dim);
        for &p in pose_steps {
            let lin = self.fc(g, p, "embed_pose")?;
            let act = g.relu(lin);
            let emb = g.dropout(act, self.cfg.dropout, training, rng)?;
            h = gru_cell(g, emb, h, self.gru_ids("enc_pose"))?;
        }
        Ok(h)
    }

    /// Embeds and encodes the ground-truth future; training only (there is
    /// no future to encode at inference).
    pub fn target_encoder(&self, g: &mut Graph<F>, target_steps: &[NodeId]) -> Result<NodeId> {
        if target_steps.is_empty() {
            return Err(Error::Usage(
                "target encoder needs ground-truth future boxes".into(),
            ));
        }
        let (batch, _) = g.value(target_steps[0]).dims2();
        let mut h = self.zeros(g, batch, self.cfg.hidden_dim);
        for &y in target_steps {
            let emb = self.embed_bbox(g, y)?;
            h = gru_cell(g, emb, h, self.gru_ids("enc_target"))?;
        }
        Ok(h)
    }

    fn split_gaussian(&self, g: &mut Graph<F>, out: NodeId) -> Result<LatentGaussian> {
        let dz = self.cfg.latent_dim;
        let selector = |g: &mut Graph<F>, offset: usize| {
            let mut data = vec![F::zero(); 2 * dz * dz];
            for j in 0..dz {
                data[(offset + j) * dz + j] = F::one();
            }
            g.constant(TensorOf::from_vec(vec![2 * dz, dz], data).expect("selector is finite"))
        };
        let s_mu = selector(g, 0);
        let s_sig = selector(g, dz);
        let mu = g.matmul(out, s_mu)?;
        let raw = g.matmul(out, s_sig)?;
        let bound = F::from(LOG_SIGMA_BOUND).expect("bound fits");
        let log_sigma = g.clamp(raw, -bound, bound);
        Ok(LatentGaussian { mu, log_sigma })
    }

    pub fn cvae_recognition(&self, g: &mut Graph<F>, h_e: NodeId, h_y: NodeId) -> Result<LatentGaussian> {
        let cat = g.concat(&[h_e, h_y], 1)?;
        let out = self.fc(g, cat, "cvae_recognition")?;
        self.split_gaussian(g, out)
    }

    pub fn cvae_prior(&self, g: &mut Graph<F>, h_e: NodeId) -> Result<LatentGaussian> {
        let out = self.fc(g, h_e, "cvae_prior")?;
        self.split_gaussian(g, out)
    }

    /// Reparameterized draw z = μ + σ⊙ε; `deterministic` forces ε = 0, so
    /// z is exactly μ.
    pub fn sample_latent(
        &self,
        g: &mut Graph<F>,
        gauss: &LatentGaussian,
        rng: &mut RngState,
        deterministic: bool,
    ) -> Result<NodeId> {
        if deterministic {
            return Ok(gauss.mu);
        }
        let (batch, dz) = g.value(gauss.mu).dims2();
        let draws: Vec<F> = (0..batch * dz)
            .map(|_| F::from(rng.normal()).expect("normal draw is finite"))
            .collect();
        let eps = g.constant(TensorOf::from_vec(vec![batch, dz], draws)?);
        let sigma = g.exp(gauss.log_sigma);
        let noise = g.mul(sigma, eps)?;
        g.add(gauss.mu, noise)
    }

    fn check_batch(&self, batch: &Batch, train: bool) -> Result<()> {
        if batch.obs_len() != self.cfg.obs_len {
            return Err(Error::Config(format!(
                "batch observes {} frames but model expects {}",
                batch.obs_len(),
                self.cfg.obs_len
            )));
        }
        match (&batch.pose_obs, self.cfg.feature_mode.uses_pose()) {
            (None, true) => {
                return Err(Error::Config(format!(
                    "feature mode {} needs pose features but batch has none",
                    self.cfg.feature_mode
                )))
            }
            (Some(_), false) => {
                return Err(Error::Config(
                    "batch carries pose features but model is bbox-only".into(),
                ))
            }
            (Some(_), true) if batch.pose_width() != self.cfg.pose_width => {
                return Err(Error::Config(format!(
                    "batch pose width {} but model expects {}",
                    batch.pose_width(),
                    self.cfg.pose_width
                )))
            }
            _ => {}
        }
        if train && batch.pred_len() == 0 {
            return Err(Error::Usage(
                "train mode needs ground-truth future boxes in the batch".into(),
            ));
        }
        if batch.pred_len() != 0 && batch.pred_len() != self.cfg.pred_len {
            return Err(Error::Config(format!(
                "batch predicts {} steps but model expects {}",
                batch.pred_len(),
                self.cfg.pred_len
            )));
        }
        Ok(())
    }

    /// Runs the full network on a batch, drawing `k` latent samples.
    /// Train mode samples z from the recognition posterior and activates
    /// dropout; infer mode samples from the prior.
    pub fn forward(
        &self,
        g: &mut Graph<F>,
        batch: &Batch,
        train: bool,
        k: usize,
        deterministic_latent: bool,
        rng: &mut RngState,
    ) -> Result<ForwardOutput> {
        if k == 0 {
            return Err(Error::Usage("need at least one latent sample".into()));
        }
        self.check_batch(batch, train)?;
        let b = batch.batch_size();
        let (obs, pred) = (self.cfg.obs_len, self.cfg.pred_len);

        // Bbox encoder; after every step the stepwise goals are regressed
        // and (except after the final step) aggregated into the next
        // step's goal input.
        let mut state = self.initial_encoder_state(g, b);
        let mut encoder_goals: Vec<StepwiseGoals> = Vec::with_capacity(obs);
        for t in 0..obs {
            let x = g.constant(batch.bbox_at(t).cast::<F>());
            let x_e = self.embed_bbox(g, x)?;
            let h = self.encoder_step(g, &state, x_e)?;
            let goals = self.sge_predict(g, h, pred)?;
            let x_tilde = if t + 1 < obs {
                self.goal_aggregate(g, &goals, AttnScope::Encoder)?.x_tilde
            } else {
                state.x_tilde
            };
            state = EncoderState { h, x_tilde };
            encoder_goals.push(goals);
        }
        let h_e = state.h;
        let final_goals = *encoder_goals.last().expect("at least one encoder step");

        let pose_hidden = if self.cfg.feature_mode.uses_pose() {
            let steps: Vec<NodeId> = (0..obs)
                .map(|t| g.constant(batch.pose_at(t).expect("validated above").cast::<F>()))
                .collect();
            Some(self.pose_encoder(g, &steps, train, rng)?)
        } else {
            None
        };

        let p = self.cvae_prior(g, h_e)?;
        let q = if train {
            let targets: Vec<NodeId> = (0..pred)
                .map(|i| g.constant(batch.target_at(i).cast::<F>()))
                .collect();
            let h_y = self.target_encoder(g, &targets)?;
            Some(self.cvae_recognition(g, h_e, h_y)?)
        } else {
            None
        };
        let latent_source = q.unwrap_or(p);

        // Decoder: autoregressive over its own predicted boxes, seeded
        // with the last observed box, attending to a shrinking suffix of
        // the final encoder step's goals.
        let last_obs = g.constant(batch.bbox_at(obs - 1).cast::<F>());
        let first_prev = self.embed_bbox(g, last_obs)?;
        let mut predictions = Vec::with_capacity(k);
        let mut decoder_attn = Vec::with_capacity(k);
        for _ in 0..k {
            let z = self.sample_latent(g, &latent_source, rng, deterministic_latent)?;
            let zh = g.concat(&[z, h_e], 1)?;
            let h_d = self.fc(g, zh, "cvae_generation")?;
            let mut dec_h = match pose_hidden {
                Some(ph) => {
                    let cat = g.concat(&[h_d, ph], 1)?;
                    self.fc(g, cat, "dec_init")?
                }
                None => h_d,
            };
            let mut prev = first_prev;
            let mut boxes = Vec::with_capacity(pred);
            let mut attn = Vec::with_capacity(pred);
            for i in 0..pred {
                let agg = self.goal_aggregate_from(g, &final_goals, i, AttnScope::Decoder)?;
                let din = g.concat(&[prev, agg.x_tilde], 1)?;
                dec_h = gru_cell(g, din, dec_h, self.gru_ids("dec"))?;
                let bx = self.fc(g, dec_h, "traj_regressor")?;
                prev = self.embed_bbox(g, bx)?;
                boxes.push(bx);
                attn.push(agg.weights);
            }
            predictions.push(boxes);
            decoder_attn.push(attn);
        }

        Ok(ForwardOutput { predictions, q, p, encoder_goals, decoder_attn })
    }
}
