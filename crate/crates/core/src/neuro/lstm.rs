use serde::{Deserialize, Serialize};

use super::{Gate, NetState, PolicyParams};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += m · v` for a row-major `rows × v.len()` matrix.
fn gemv_acc(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += mᵀ · v` for a row-major `v.len() × out.len()` matrix.
fn gemv_t_acc(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = out.len();
    for (row, &s) in m.chunks_exact(cols).zip(v) {
        if s != 0.0 {
            out.iter_mut().zip(row).for_each(|(o, a)| *o += a * s);
        }
    }
}

/// `m += a ⊗ b`.
fn outer_acc(m: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (row, &s) in m.chunks_exact_mut(cols).zip(a) {
        if s != 0.0 {
            row.iter_mut().zip(b).for_each(|(r, v)| *r += s * v);
        }
    }
}

/// Intermediates of one LSTM step, kept for the backward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    /// Candidate `g = tanh(W_c x + U_c h + b_c)`.
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM step.
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
/// o = σ(W_o x + U_o h + b_o)    g = tanh(W_c x + U_c h + b_c)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
pub fn lstm_forward(x: &[f64], state: &NetState, params: &PolicyParams) -> Result<(NetState, LstmCache)> {
    let dims = params.dims();
    if x.len() != dims.input {
        return Err(Error::dim("network input", dims.input, x.len()));
    }
    if state.h.len() != dims.hidden || state.c.len() != dims.hidden {
        return Err(Error::dim("recurrent state", dims.hidden, state.h.len()));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite network input {bad}")));
    }

    let pre = |gate: Gate| {
        let mut a = params.b(gate).to_vec();
        gemv_acc(&mut a, params.w(gate), x);
        gemv_acc(&mut a, params.u(gate), &state.h);
        a
    };
    let i: Vec<f64> = pre(Gate::Input).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = pre(Gate::Forget).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = pre(Gate::Output).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = pre(Gate::Cell).into_iter().map(f64::tanh).collect();

    let c: Vec<f64> = (0..dims.hidden)
        .map(|k| f[k] * state.c[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    let next = NetState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = LstmCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    };
    Ok((next, cache))
}

/// Sigmoid output layer: `σ(W_out h + b_out)`.
pub fn head_forward(h: &[f64], params: &PolicyParams) -> Vec<f64> {
    let mut z = params.b_out().to_vec();
    gemv_acc(&mut z, params.w_out(), h);
    z.into_iter().map(sigmoid).collect()
}

/// Everything one policy step needs for the backward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCache {
    pub lstm: LstmCache,
    pub probs: Vec<f64>,
}

/// LSTM step followed by the output layer.
pub fn policy_step(
    x: &[f64],
    state: &NetState,
    params: &PolicyParams,
) -> Result<(NetState, StepCache)> {
    let (next, lstm) = lstm_forward(x, state, params)?;
    let probs = head_forward(&lstm.h, params);
    Ok((next, StepCache { lstm, probs }))
}

/// Backpropagation through time over one episode.
///
/// `dprobs[t]` is the derivative of the scalar episode loss with respect to
/// the output probabilities at step `t`. Returns the gradient with respect to
/// every parameter; the initial recurrent state is treated as a constant.
pub fn episode_backward(
    steps: &[StepCache],
    dprobs: &[Vec<f64>],
    params: &PolicyParams,
) -> Result<PolicyParams> {
    if steps.len() != dprobs.len() {
        return Err(Error::dim("loss gradients", steps.len(), dprobs.len()));
    }
    let dims = params.dims();
    let hdim = dims.hidden;
    let mut grad = PolicyParams::zeros(dims);
    let mut dh_next = vec![0.0; hdim];
    let mut dc_next = vec![0.0; hdim];

    for (step, dp) in steps.iter().zip(dprobs).rev() {
        if dp.len() != dims.output || step.probs.len() != dims.output {
            return Err(Error::dim("output gradient", dims.output, dp.len()));
        }
        let cache = &step.lstm;
        if cache.h.len() != hdim || cache.x.len() != dims.input {
            return Err(Error::dim("step cache", hdim, cache.h.len()));
        }

        // Output layer.
        let dz: Vec<f64> = dp
            .iter()
            .zip(&step.probs)
            .map(|(d, p)| d * p * (1.0 - p))
            .collect();
        outer_acc(grad.w_out_mut(), &dz, &cache.h);
        grad.b_out_mut()
            .iter_mut()
            .zip(&dz)
            .for_each(|(b, d)| *b += d);
        let mut dh = dh_next.clone();
        gemv_t_acc(&mut dh, params.w_out(), &dz);

        // Cell.
        let mut da_i = vec![0.0; hdim];
        let mut da_f = vec![0.0; hdim];
        let mut da_o = vec![0.0; hdim];
        let mut da_g = vec![0.0; hdim];
        for k in 0..hdim {
            let (i, f, o, g) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k]);
            let t = cache.tanh_c[k];
            let dc = dh[k] * o * (1.0 - t * t) + dc_next[k];
            da_o[k] = dh[k] * t * o * (1.0 - o);
            da_i[k] = dc * g * i * (1.0 - i);
            da_f[k] = dc * cache.c_prev[k] * f * (1.0 - f);
            da_g[k] = dc * i * (1.0 - g * g);
            dc_next[k] = dc * f;
        }

        dh_next.fill(0.0);
        for (gate, da) in [
            (Gate::Input, &da_i),
            (Gate::Forget, &da_f),
            (Gate::Output, &da_o),
            (Gate::Cell, &da_g),
        ] {
            outer_acc(grad.w_mut(gate), da, &cache.x);
            outer_acc(grad.u_mut(gate), da, &cache.h_prev);
            grad.b_mut(gate)
                .iter_mut()
                .zip(da)
                .for_each(|(b, d)| *b += d);
            gemv_t_acc(&mut dh_next, params.u(gate), da);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::NetDims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(dims: NetDims, seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyParams::zeros(dims);
        p.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-0.8..0.8));
        p
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    // Scalar-loop LSTM written straight from the gate equations with
    // explicit index arithmetic into the flat buffer.
    fn reference_step(x: &[f64], h: &[f64], c: &[f64], p: &PolicyParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = p.dims();
        let raw = p.as_slice();
        let block = d.hidden * d.input + d.hidden * d.hidden + d.hidden;
        let mut pre = vec![vec![0.0; d.hidden]; 4];
        for gate in 0..4 {
            let base = gate * block;
            for r in 0..d.hidden {
                let mut s = raw[base + d.hidden * d.input + d.hidden * d.hidden + r];
                for j in 0..d.input {
                    s += raw[base + r * d.input + j] * x[j];
                }
                for j in 0..d.hidden {
                    s += raw[base + d.hidden * d.input + r * d.hidden + j] * h[j];
                }
                pre[gate][r] = s;
            }
        }
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut c2 = vec![0.0; d.hidden];
        let mut h2 = vec![0.0; d.hidden];
        for r in 0..d.hidden {
            let i = sig(pre[0][r]);
            let f = sig(pre[1][r]);
            let o = sig(pre[2][r]);
            let g = pre[3][r].tanh();
            c2[r] = f * c[r] + i * g;
            h2[r] = o * c2[r].tanh();
        }
        let head = 4 * block;
        let mut probs = vec![0.0; d.output];
        for r in 0..d.output {
            let mut s = raw[head + d.output * d.hidden + r];
            for j in 0..d.hidden {
                s += raw[head + r * d.hidden + j] * h2[j];
            }
            probs[r] = sig(s);
        }
        (h2, c2, probs)
    }

    #[test]
    fn zero_params_give_half_gates() {
        let dims = NetDims::for_sizes(6);
        let p = PolicyParams::zeros(dims);
        let (next, cache) = lstm_forward(&[0.3; 6], &NetState::zeros(64), &p).unwrap();
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|&v| v == 0.5));
        assert!(cache.g.iter().all(|&v| v == 0.0));
        assert!(next.c.iter().chain(&next.h).all(|&v| v == 0.0));
        assert_eq!(head_forward(&next.h, &p), vec![0.5; 6]);
    }

    #[test]
    fn saturated_output_gate_with_empty_cell() {
        let dims = NetDims::new(2, 3, 2);
        let mut p = PolicyParams::zeros(dims);
        p.b_mut(Gate::Output).fill(50.0);
        let (next, _) = lstm_forward(&[0.0; 2], &NetState::zeros(3), &p).unwrap();
        assert_eq!(next.h, vec![0.0; 3]);
    }

    #[test]
    fn head_saturation() {
        let dims = NetDims::new(2, 3, 2);
        let mut p = PolicyParams::zeros(dims);
        p.b_out_mut().copy_from_slice(&[10.0, -10.0]);
        let probs = head_forward(&[0.0; 3], &p);
        assert!((probs[0] - 1.0).abs() < 5e-5);
        assert!(probs[1].abs() < 5e-5);
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let dims = NetDims::for_sizes(6);
        let p = random_params(dims, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut state = NetState {
            h: random_vec(64, &mut rng).iter().map(|v| v * 0.9).collect(),
            c: random_vec(64, &mut rng),
        };
        for _ in 0..3 {
            let x = random_vec(6, &mut rng);
            let (h_ref, c_ref, p_ref) = reference_step(&x, &state.h, &state.c, &p);
            let (next, cache) = policy_step(&x, &state, &p).unwrap();
            for (a, b) in next.h.iter().zip(&h_ref).chain(next.c.iter().zip(&c_ref)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            for (a, b) in cache.probs.iter().zip(&p_ref) {
                assert!((a - b).abs() < 1e-12);
            }
            state = next;
        }
    }

    #[test]
    fn hidden_state_is_bounded() {
        let dims = NetDims::new(3, 5, 2);
        let mut p = random_params(dims, 4);
        p.as_mut_slice().iter_mut().for_each(|v| *v *= 20.0);
        let mut state = NetState::zeros(5);
        for _ in 0..20 {
            let (next, cache) = lstm_forward(&[1.0, -1.0, 0.5], &state, &p).unwrap();
            assert!(next.h.iter().all(|h| h.abs() <= 1.0));
            assert!(cache.i.iter().all(|v| (0.0..=1.0).contains(v)));
            state = next;
        }
    }

    #[test]
    fn rejects_non_finite_and_misshaped_input() {
        let dims = NetDims::new(2, 3, 2);
        let p = PolicyParams::zeros(dims);
        assert!(matches!(
            lstm_forward(&[f64::NAN, 0.0], &NetState::zeros(3), &p),
            Err(Error::Numeric(_))
        ));
        assert!(lstm_forward(&[0.0; 3], &NetState::zeros(3), &p).is_err());
        assert!(lstm_forward(&[0.0; 2], &NetState::zeros(4), &p).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradient() {
        let dims = NetDims::new(3, 4, 3);
        let p = random_params(dims, 5);
        let mut state = NetState::zeros(4);
        let mut steps = Vec::new();
        for t in 0..3 {
            let (next, cache) = policy_step(&[0.1 * t as f64, 0.5, -0.2], &state, &p).unwrap();
            steps.push(cache);
            state = next;
        }
        let grads = episode_backward(&steps, &vec![vec![0.0; 3]; 3], &p).unwrap();
        assert!(grads.as_slice().iter().all(|&g| g == 0.0));
        assert!(episode_backward(&steps, &vec![vec![0.0; 3]; 2], &p).is_err());
    }

    #[test]
    fn scalar_network_matches_hand_derivation() {
        // input = hidden = output = 1; loss = p.
        let dims = NetDims::new(1, 1, 1);
        let mut p = PolicyParams::zeros(dims);
        let (wi, ui, bi) = (0.3, -0.4, 0.1);
        let (wf, uf, bf) = (-0.2, 0.5, 0.7);
        let (wo, uo, bo) = (0.6, 0.2, -0.3);
        let (wc, uc, bc) = (0.9, -0.7, 0.05);
        let (v, bout) = (1.3, -0.2);
        for (gate, (w, u, b)) in Gate::ALL
            .into_iter()
            .zip([(wi, ui, bi), (wf, uf, bf), (wo, uo, bo), (wc, uc, bc)])
        {
            p.w_mut(gate)[0] = w;
            p.u_mut(gate)[0] = u;
            p.b_mut(gate)[0] = b;
        }
        p.w_out_mut()[0] = v;
        p.b_out_mut()[0] = bout;

        let (x, h0, c0) = (0.8, 0.25, -0.6);
        let state = NetState {
            h: vec![h0],
            c: vec![c0],
        };
        let (_, step) = policy_step(&[x], &state, &p).unwrap();
        let grads = episode_backward(&[step], &[vec![1.0]], &p).unwrap();

        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = s(wi * x + ui * h0 + bi);
        let f = s(wf * x + uf * h0 + bf);
        let o = s(wo * x + uo * h0 + bo);
        let g = (wc * x + uc * h0 + bc).tanh();
        let c = f * c0 + i * g;
        let h = o * c.tanh();
        let prob = s(v * h + bout);

        let dz = prob * (1.0 - prob);
        let dh = dz * v;
        let dc = dh * o * (1.0 - c.tanh().powi(2));
        let da_i = dc * g * i * (1.0 - i);
        let da_f = dc * c0 * f * (1.0 - f);
        let da_o = dh * c.tanh() * o * (1.0 - o);
        let da_g = dc * i * (1.0 - g * g);

        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        close(grads.w_out()[0], dz * h);
        close(grads.b_out()[0], dz);
        for (gate, da) in Gate::ALL.into_iter().zip([da_i, da_f, da_o, da_g]) {
            close(grads.w(gate)[0], da * x);
            close(grads.u(gate)[0], da * h0);
            close(grads.b(gate)[0], da);
        }
    }
}
