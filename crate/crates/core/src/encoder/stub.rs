//! Desk-scale backend. Token vectors are fixed pseudo-random draws keyed by a
//! hash of the token string; the one trainable layer mixes each token with the
//! mean of the sequence and with a fixed lexical-match indicator:
//!
//! ```text
//! c   = mean_t x_t
//! m_t[k] = 1 if the token string of t also occurs at another position with tag k
//! h_t = tanh(W x_t + U c + V m_t + b)
//! out = mean_t h_t
//! ```
//!
//! `m` depends only on the token strings and tags, so it is computed once per
//! sequence and carries no gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use std::collections::HashMap;

use super::{EncoderConfig, NUM_TAGS};

const TOKEN_DOMAIN: &[u8] = b"cellink-stub-token\0";

pub(super) fn num_params(cfg: &EncoderConfig) -> usize {
    cfg.hidden_dim * (2 * cfg.input_dim + NUM_TAGS + 1)
}

pub(super) fn embedding_scale(dim: usize) -> f64 {
    (3.0 / dim as f64).sqrt()
}

pub(super) fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> impl Iterator<Item = f64> + '_ {
    (0..n).map(move |_| rng.random_range(-scale..scale))
}

pub(super) fn init_params(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (d, h) = (cfg.input_dim, cfg.hidden_dim);
    let xavier = (6.0 / (d + h) as f64).sqrt();
    let mut p: Vec<f64> = uniform(rng, 2 * h * d, xavier).collect();
    let xavier_m = (6.0 / (NUM_TAGS + h) as f64).sqrt();
    p.extend(uniform(rng, h * NUM_TAGS, xavier_m));
    p.extend(std::iter::repeat_n(0.0, h));
    p
}

/// Same token, same vector, across processes and platforms.
pub(super) fn token_embedding(token: &str, out: &mut [f64]) {
    let mut hasher = Sha256::new();
    hasher.update(TOKEN_DOMAIN);
    hasher.update(token.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(digest.as_slice());
    let mut rng = ChaCha8Rng::from_seed(seed);
    let scale = embedding_scale(out.len());
    for x in out.iter_mut() {
        *x = rng.random_range(-scale..scale);
    }
}

/// `m` for a sequence, `len × NUM_TAGS`.
pub(super) fn match_features(tokens: &[String], tags: &[usize]) -> Vec<f64> {
    let mut by_token: HashMap<&str, [u32; NUM_TAGS]> = HashMap::new();
    for (t, &tag) in tokens.iter().zip(tags) {
        by_token.entry(t.as_str()).or_default()[tag] += 1;
    }
    let mut out = vec![0.0; tokens.len() * NUM_TAGS];
    for ((t, &tag), m) in tokens.iter().zip(tags).zip(out.chunks_exact_mut(NUM_TAGS)) {
        let counts = &by_token[t.as_str()];
        for (k, o) in m.iter_mut().enumerate() {
            let others = counts[k] - u32::from(k == tag);
            *o = if others > 0 { 1.0 } else { 0.0 };
        }
    }
    out
}

pub(crate) struct StubForward {
    context: Vec<f64>,
    /// `len × hidden_dim`
    states: Vec<f64>,
}

struct View<'a> {
    w: &'a [f64],
    u: &'a [f64],
    v: &'a [f64],
    b: &'a [f64],
}

fn view<'a>(cfg: &EncoderConfig, params: &'a [f64]) -> View<'a> {
    let hd = cfg.hidden_dim * cfg.input_dim;
    let ht = cfg.hidden_dim * NUM_TAGS;
    View {
        w: &params[..hd],
        u: &params[hd..2 * hd],
        v: &params[2 * hd..2 * hd + ht],
        b: &params[2 * hd + ht..2 * hd + ht + cfg.hidden_dim],
    }
}

fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(d)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

pub(super) fn forward(cfg: &EncoderConfig, params: &[f64], inputs: &[f64], matches: &[f64]) -> (StubForward, Vec<f64>) {
    let (d, h) = (cfg.input_dim, cfg.hidden_dim);
    let n = inputs.len() / d;
    let mut pooled = vec![0.0; h];
    if n == 0 {
        return (
            StubForward {
                context: vec![0.0; d],
                states: Vec::new(),
            },
            pooled,
        );
    }
    let v = view(cfg, params);
    let inv_n = 1.0 / n as f64;

    let mut context = vec![0.0; d];
    for row in inputs.chunks_exact(d) {
        for (c, x) in context.iter_mut().zip(row) {
            *c += x;
        }
    }
    context.iter_mut().for_each(|c| *c *= inv_n);

    let mut shared = v.b.to_vec();
    matvec(v.u, &context, &mut shared);

    let mut states = vec![0.0; n * h];
    for ((row, m), state) in inputs
        .chunks_exact(d)
        .zip(matches.chunks_exact(NUM_TAGS))
        .zip(states.chunks_exact_mut(h))
    {
        state.copy_from_slice(&shared);
        matvec(v.w, row, state);
        matvec(v.v, m, state);
        for (s, p) in state.iter_mut().zip(pooled.iter_mut()) {
            *s = s.tanh();
            *p += *s * inv_n;
        }
    }
    (StubForward { context, states }, pooled)
}

/// Returns the gradient w.r.t. `inputs`; parameter gradients are added into
/// `grad` (layout of `params`).
pub(super) fn backward(
    cfg: &EncoderConfig,
    params: &[f64],
    inputs: &[f64],
    matches: &[f64],
    fwd: &StubForward,
    grad_pooled: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let (d, h) = (cfg.input_dim, cfg.hidden_dim);
    let n = inputs.len() / d;
    if n == 0 {
        return Vec::new();
    }
    let v = view(cfg, params);
    let inv_n = 1.0 / n as f64;
    let hd = h * d;
    let (gw, rest) = grad.split_at_mut(hd);
    let (gu, rest) = rest.split_at_mut(hd);
    let (gv, gb) = rest.split_at_mut(h * NUM_TAGS);

    let mut grad_inputs = vec![0.0; n * d];
    let mut dz_sum = vec![0.0; h];
    let mut dz = vec![0.0; h];
    for (((row, m), state), gin) in inputs
        .chunks_exact(d)
        .zip(matches.chunks_exact(NUM_TAGS))
        .zip(fwd.states.chunks_exact(h))
        .zip(grad_inputs.chunks_exact_mut(d))
    {
        for j in 0..h {
            dz[j] = grad_pooled[j] * inv_n * (1.0 - state[j] * state[j]);
            dz_sum[j] += dz[j];
        }
        for j in 0..h {
            let g = dz[j];
            if g == 0.0 {
                continue;
            }
            let wrow = &v.w[j * d..(j + 1) * d];
            let gwrow = &mut gw[j * d..(j + 1) * d];
            for k in 0..d {
                gwrow[k] += g * row[k];
                gin[k] += g * wrow[k];
            }
            for (gv, x) in gv[j * NUM_TAGS..(j + 1) * NUM_TAGS].iter_mut().zip(m) {
                *gv += g * x;
            }
        }
    }
    // U c + b is shared by every token; c is the mean of the inputs.
    let mut ut_s = vec![0.0; d];
    for j in 0..h {
        gb[j] += dz_sum[j];
        let urow = &v.u[j * d..(j + 1) * d];
        let gurow = &mut gu[j * d..(j + 1) * d];
        for k in 0..d {
            gurow[k] += dz_sum[j] * fwd.context[k];
            ut_s[k] += dz_sum[j] * urow[k];
        }
    }
    for gin in grad_inputs.chunks_exact_mut(d) {
        for (g, x) in gin.iter_mut().zip(&ut_s) {
            *g += x * inv_n;
        }
    }
    grad_inputs
}
