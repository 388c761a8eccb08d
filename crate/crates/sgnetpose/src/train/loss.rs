//! Training objective: best-of-K trajectory RMSE, stepwise-goal MSE per
//! encoder step, and closed-form Gaussian KL, combined with configurable
//! weights.

use std::fmt::Debug;

use num_traits::Float;

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::TensorOf;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::ForwardOutput;

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub goal: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { goal: 1.0, kl: 1.0 }
    }
}

/// Scalar loss nodes; `total = trajectory + λ_goal·goal + λ_KL·kl`.
/// `chosen[b]` is the latent sample whose trajectory scored best for
/// sample b (the only one the trajectory term backpropagates through).
pub struct LossBreakdown {
    pub total: NodeId,
    pub trajectory: NodeId,
    pub goal: NodeId,
    pub kl: NodeId,
    pub chosen: Vec<usize>,
}

fn lift<F: Float + Debug>(v: f64) -> F {
    F::from(v).expect("weight fits in scalar type")
}

/// Ground truth for the goals regressed at encoder step `t`: window frames
/// t+1 .. t+ℓ_d, drawn from the observed boxes while they last and the
/// future boxes after, flattened to match the goal row order.
fn goal_targets<F: Float + Debug>(g: &mut Graph<F>, batch: &Batch, t: usize) -> NodeId {
    let (b, obs, ld) = (batch.batch_size(), batch.obs_len(), batch.pred_len());
    let obs_data = batch.bbox_obs.data();
    let fut_data = batch.targets.data();
    let mut out = Vec::with_capacity(b * ld * 4);
    for s in 0..b {
        for j in 0..ld {
            let f = t + 1 + j;
            for c in 0..4 {
                let v = if f < obs {
                    obs_data[(s * obs + f) * 4 + c]
                } else {
                    fut_data[(s * ld + (f - obs)) * 4 + c]
                };
                out.push(lift::<F>(v as f64));
            }
        }
    }
    g.constant(TensorOf::from_vec(vec![b * ld, 4], out).expect("targets are finite"))
}

pub fn compute_loss<F: Float + Debug>(
    g: &mut Graph<F>,
    out: &ForwardOutput,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let k = out.predictions.len();
    if k == 0 {
        return Err(Error::Usage("loss needs at least one latent sample".into()));
    }
    if weights.goal < 0.0 || weights.kl < 0.0 {
        return Err(Error::Config("loss weights must be non-negative".into()));
    }
    let q = out
        .q
        .ok_or_else(|| Error::Usage("loss needs a train-mode forward with a recognition posterior".into()))?;
    let (b, ld) = (batch.batch_size(), batch.pred_len());
    if ld == 0 {
        return Err(Error::Usage("loss needs ground-truth future boxes".into()));
    }
    if out.predictions[0].len() != ld {
        return Err(Error::Config(format!(
            "predictions cover {} steps but targets cover {}",
            out.predictions[0].len(),
            ld
        )));
    }

    let targets: Vec<NodeId> = (0..ld).map(|i| g.constant(batch.target_at(i).cast::<F>())).collect();
    let ones4 = g.constant(TensorOf::from_vec(vec![4, 1], vec![F::one(); 4])?);

    // Per-sample RMSE for each latent sample.
    let mut rmse_nodes = Vec::with_capacity(k);
    for boxes in &out.predictions {
        let mut acc: Option<NodeId> = None;
        for (i, &bx) in boxes.iter().enumerate() {
            let d = g.sub(bx, targets[i])?;
            let sq = g.mul(d, d)?;
            acc = Some(match acc {
                Some(a) => g.add(a, sq)?,
                None => sq,
            });
        }
        let sums = g.matmul(acc.expect("ld >= 1"), ones4)?;
        let mse = g.scale(sums, lift::<F>(1.0 / (ld as f64 * 4.0)));
        rmse_nodes.push(g.sqrt(mse));
    }

    // Best latent sample per batch row, selected on the host; gradients
    // flow only through the winner.
    let chosen: Vec<usize> = (0..b)
        .map(|s| {
            let mut best = 0usize;
            for ki in 1..k {
                if g.value(rmse_nodes[ki]).data()[s] < g.value(rmse_nodes[best]).data()[s] {
                    best = ki;
                }
            }
            best
        })
        .collect();
    let picked: Vec<NodeId> = chosen
        .iter()
        .enumerate()
        .map(|(s, &ki)| g.rows(rmse_nodes[ki], s, 1))
        .collect::<Result<_>>()?;
    let stacked = g.concat(&picked, 0)?;
    let trajectory = g.mean(stacked);

    // Goal supervision, averaged over encoder steps.
    let goal = if out.encoder_goals.is_empty() {
        g.constant(TensorOf::scalar(F::zero()))
    } else {
        let mut acc: Option<NodeId> = None;
        for (t, goals) in out.encoder_goals.iter().enumerate() {
            if goals.batch != b || goals.remaining != ld {
                return Err(Error::Config(format!(
                    "encoder step {} goals cover {}x{}, batch is {}x{}",
                    t, goals.batch, goals.remaining, b, ld
                )));
            }
            let gt = goal_targets(g, batch, t);
            let d = g.sub(goals.positions, gt)?;
            let sq = g.mul(d, d)?;
            let m = g.mean(sq);
            acc = Some(match acc {
                Some(a) => g.add(a, m)?,
                None => m,
            });
        }
        g.scale(acc.expect("nonempty"), lift::<F>(1.0 / out.encoder_goals.len() as f64))
    };

    // KL(q‖p) for diagonal Gaussians in log-σ form, mean over the batch:
    // Σ_j (lp−lq) + ½·exp(2(lq−lp)) + ½(μq−μp)²·exp(−2lp) − ½.
    let p = out.p;
    let l_diff = g.sub(p.log_sigma, q.log_sigma)?;
    let neg_ldiff = g.sub(q.log_sigma, p.log_sigma)?;
    let ratio = {
        let doubled = g.scale(neg_ldiff, lift::<F>(2.0));
        let e = g.exp(doubled);
        g.scale(e, lift::<F>(0.5))
    };
    let mean_term = {
        let dmu = g.sub(q.mu, p.mu)?;
        let dmu2 = g.mul(dmu, dmu)?;
        let inv_var = {
            let m2 = g.scale(p.log_sigma, lift::<F>(-2.0));
            g.exp(m2)
        };
        let prod = g.mul(dmu2, inv_var)?;
        g.scale(prod, lift::<F>(0.5))
    };
    let partial = g.add(l_diff, ratio)?;
    let with_mean = g.add(partial, mean_term)?;
    let elts = g.add_const(with_mean, lift::<F>(-0.5));
    let summed = g.sum(elts);
    let kl = g.scale(summed, lift::<F>(1.0 / b as f64));

    let goal_w = g.scale(goal, lift::<F>(weights.goal));
    let kl_w = g.scale(kl, lift::<F>(weights.kl));
    let partial_total = g.add(trajectory, goal_w)?;
    let total = g.add(partial_total, kl_w)?;

    Ok(LossBreakdown { total, trajectory, goal, kl, chosen })
}
