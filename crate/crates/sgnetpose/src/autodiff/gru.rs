//! GRU recurrence built from graph primitives.

use num_traits::Float;

use crate::autodiff::graph::{Graph, NodeId};
use crate::error::Result;

/// Node handles for one cell's weights. Each W is [d_in+d_h, d_h] and acts
/// on the concatenation [x;h]; the candidate gate sees [x; r⊙h] instead.
#[derive(Debug, Clone, Copy)]
pub struct GruCellIds {
    pub w_r: NodeId,
    pub b_r: NodeId,
    pub w_u: NodeId,
    pub b_u: NodeId,
    pub w_c: NodeId,
    pub b_c: NodeId,
}

/// r = σ(W_r[x;h]+b_r), u = σ(W_u[x;h]+b_u),
/// h̃ = tanh(W_c[x;r⊙h]+b_c), h' = (1−u)⊙h + u⊙h̃.
pub fn gru_cell<F: Float + std::fmt::Debug>(
    g: &mut Graph<F>,
    x: NodeId,
    h: NodeId,
    p: GruCellIds,
) -> Result<NodeId> {
    let xh = g.concat(&[x, h], 1)?;
    let r_lin = g.linear(xh, p.w_r, p.b_r)?;
    let r = g.sigmoid(r_lin);
    let u_lin = g.linear(xh, p.w_u, p.b_u)?;
    let u = g.sigmoid(u_lin);
    let rh = g.mul(r, h)?;
    let xrh = g.concat(&[x, rh], 1)?;
    let c_lin = g.linear(xrh, p.w_c, p.b_c)?;
    let cand = g.tanh(c_lin);
    let neg_u = g.scale(u, -F::one());
    let one_minus_u = g.add_const(neg_u, F::one());
    let keep = g.mul(one_minus_u, h)?;
    let take = g.mul(u, cand)?;
    g.add(keep, take)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_scalar_fn;
    use crate::autodiff::rng::RngState;
    use crate::autodiff::tensor::{Tensor, TensorOf};

    fn zero_params<F: Float + std::fmt::Debug>(
        g: &mut Graph<F>,
        d_in: usize,
        d_h: usize,
    ) -> GruCellIds {
        let w = || TensorOf::<F>::zeros(vec![d_in + d_h, d_h]);
        let b = || TensorOf::<F>::zeros(vec![1, d_h]);
        GruCellIds {
            w_r: g.param(w()),
            b_r: g.param(b()),
            w_u: g.param(w()),
            b_u: g.param(b()),
            w_c: g.param(w()),
            b_c: g.param(b()),
        }
    }

    #[test]
    fn zero_weights_halve_the_state() {
        // all gates at σ(0)=0.5 and candidate tanh(0)=0 ⇒ h' = 0.5·h
        let mut g: Graph<f32> = Graph::new();
        let p = zero_params(&mut g, 3, 4);
        let x = g.constant(Tensor::row(vec![0.3, -0.1, 2.0]));
        let h = g.constant(Tensor::row(vec![1.0, -2.0, 4.0, 0.5]));
        let out = gru_cell(&mut g, x, h, p).unwrap();
        assert_eq!(g.value(out).data(), &[0.5, -1.0, 2.0, 0.25]);
    }

    #[test]
    fn zero_input_zero_state_is_fixed_point() {
        let mut g: Graph<f32> = Graph::new();
        let p = zero_params(&mut g, 3, 4);
        let x = g.constant(Tensor::zeros(vec![1, 3]));
        let h = g.constant(Tensor::zeros(vec![1, 4]));
        let out = gru_cell(&mut g, x, h, p).unwrap();
        assert_eq!(g.value(out).data(), &[0.0; 4]);
    }

    #[test]
    fn gradients_match_finite_differences_for_all_inputs() {
        let d_in = 3;
        let d_h = 4;
        let wn = (d_in + d_h) * d_h;
        let total = d_in + d_h + 3 * (wn + d_h);
        for seed in 0..20 {
            let mut rng = RngState::new(777 + seed);
            let x0: Vec<f64> = (0..total).map(|_| rng.uniform(-0.8, 0.8)).collect();
            let mut build = move |v: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let mut pos = 0;
                let mut take = |g: &mut Graph<f64>, shape: Vec<usize>| {
                    let n: usize = shape.iter().product();
                    let id = g.param(TensorOf::from_raw(shape, v[pos..pos + n].to_vec()));
                    pos += n;
                    id
                };
                let x = take(&mut g, vec![1, d_in]);
                let h = take(&mut g, vec![1, d_h]);
                let p = GruCellIds {
                    w_r: take(&mut g, vec![d_in + d_h, d_h]),
                    b_r: take(&mut g, vec![1, d_h]),
                    w_u: take(&mut g, vec![d_in + d_h, d_h]),
                    b_u: take(&mut g, vec![1, d_h]),
                    w_c: take(&mut g, vec![d_in + d_h, d_h]),
                    b_c: take(&mut g, vec![1, d_h]),
                };
                let out = gru_cell(&mut g, x, h, p).unwrap();
                let mut wr = RngState::new(4242);
                let w = g.constant(TensorOf::from_raw(
                    vec![1, d_h],
                    (0..d_h).map(|_| wr.uniform(0.25, 1.75)).collect(),
                ));
                let prod = g.mul(out, w).unwrap();
                let loss = g.sum(prod);
                g.backward(loss).unwrap();
                let ids = [x, h, p.w_r, p.b_r, p.w_u, p.b_u, p.w_c, p.b_c];
                let grads: Vec<f64> = ids
                    .iter()
                    .flat_map(|&id| g.grad(id).unwrap().data().to_vec())
                    .collect();
                (g.value(loss).item(), grads)
            };
            let err = check_scalar_fn(&mut build, &x0, 1e-3);
            assert!(err < 1e-4, "seed {}: rel err {}", seed, err);
        }
    }
}
