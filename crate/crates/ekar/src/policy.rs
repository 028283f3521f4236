//! Walk policy π_θ: an LSTM encodes the traversed (relation, entity)
//! history, a 2-layer MLP maps the state to a query vector, and each
//! candidate action a = [r'; e'] is scored by aᵀy and softmaxed.
//!
//! Forward and backward passes are written out by hand so the analytic
//! gradients can be verified against finite differences end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{EntityId, RelationId, REL_SELF_LOOP};
use crate::kge::EmbeddingTable;
use crate::math::{dot, masked_softmax, matvec_add, matvec_backward, sigmoid};

#[derive(Debug, Clone)]
pub struct PolicyParams {
    /// Embedding size d; LSTM input is [r; e] of width 2d.
    pub d: usize,
    /// LSTM hidden width.
    pub h: usize,
    // Gate weights over [x; h_prev], each h x (2d + h), row-major.
    pub w_i: Vec<f64>,
    pub w_f: Vec<f64>,
    pub w_o: Vec<f64>,
    pub w_g: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_g: Vec<f64>,
    // MLP: y = W2 ReLU(W1 s + b1) + b2, with y of width 2d.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect()
}

impl PolicyParams {
    /// Xavier-uniform matrices, zero biases, forget-gate bias +1.
    pub fn init(d: usize, h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = 2 * d + h;
        PolicyParams {
            d,
            h,
            w_i: xavier(h, in_dim, &mut rng),
            w_f: xavier(h, in_dim, &mut rng),
            w_o: xavier(h, in_dim, &mut rng),
            w_g: xavier(h, in_dim, &mut rng),
            b_i: vec![0.0; h],
            b_f: vec![1.0; h],
            b_o: vec![0.0; h],
            b_g: vec![0.0; h],
            w1: xavier(h, h, &mut rng),
            b1: vec![0.0; h],
            w2: xavier(2 * d, h, &mut rng),
            b2: vec![0.0; 2 * d],
        }
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams {
            d: self.d,
            h: self.h,
            w_i: vec![0.0; self.w_i.len()],
            w_f: vec![0.0; self.w_f.len()],
            w_o: vec![0.0; self.w_o.len()],
            w_g: vec![0.0; self.w_g.len()],
            b_i: vec![0.0; self.b_i.len()],
            b_f: vec![0.0; self.b_f.len()],
            b_o: vec![0.0; self.b_o.len()],
            b_g: vec![0.0; self.b_g.len()],
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// Tensors in checkpoint order: w_i w_f w_o w_g b_i b_f b_o b_g w1 b1 w2 b2.
    pub fn buffers(&self) -> [&[f64]; 12] {
        [
            &self.w_i, &self.w_f, &self.w_o, &self.w_g, &self.b_i, &self.b_f, &self.b_o,
            &self.b_g, &self.w1, &self.b1, &self.w2, &self.b2,
        ]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 12] {
        [
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_g,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_g,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.buffers().concat()
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for buf in self.buffers_mut() {
            buf.copy_from_slice(&flat[off..off + buf.len()]);
            off += buf.len();
        }
        assert_eq!(off, flat.len());
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|b| crate::math::all_finite(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoding {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl StateEncoding {
    pub fn zero(h: usize) -> Self {
        StateEncoding { hidden: vec![0.0; h], cell: vec![0.0; h] }
    }
}

/// Concatenated [relation; entity] embedding of an action.
pub fn action_embedding(table: &EmbeddingTable, r: RelationId, e: EntityId) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * table.dim);
    v.extend_from_slice(table.relation_row(r));
    v.extend_from_slice(table.entity_row(e));
    v
}

struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn lstm_forward(params: &PolicyParams, prev: &StateEncoding, x: &[f64]) -> (StateEncoding, LstmCache) {
    let h = params.h;
    let mut xi: Vec<f64> = Vec::with_capacity(x.len() + h);
    xi.extend_from_slice(x);
    xi.extend_from_slice(&prev.hidden);

    let mut zi = params.b_i.clone();
    let mut zf = params.b_f.clone();
    let mut zo = params.b_o.clone();
    let mut zg = params.b_g.clone();
    matvec_add(&params.w_i, &xi, &mut zi);
    matvec_add(&params.w_f, &xi, &mut zf);
    matvec_add(&params.w_o, &xi, &mut zo);
    matvec_add(&params.w_g, &xi, &mut zg);

    let gi: Vec<f64> = zi.iter().map(|&v| sigmoid(v)).collect();
    let gf: Vec<f64> = zf.iter().map(|&v| sigmoid(v)).collect();
    let go: Vec<f64> = zo.iter().map(|&v| sigmoid(v)).collect();
    let gg: Vec<f64> = zg.iter().map(|&v| v.tanh()).collect();

    let mut c = vec![0.0; h];
    for k in 0..h {
        c[k] = gf[k] * prev.cell[k] + gi[k] * gg[k];
    }
    let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
    let mut hidden = vec![0.0; h];
    for k in 0..h {
        hidden[k] = go[k] * tanh_c[k];
    }
    let state = StateEncoding { hidden, cell: c.clone() };
    let cache = LstmCache {
        x: x.to_vec(),
        h_prev: prev.hidden.clone(),
        c_prev: prev.cell.clone(),
        i: gi,
        f: gf,
        o: go,
        g: gg,

        tanh_c,
    };
    (state, cache)
}

/// Backward through one LSTM step. `dh`/`dc` are gradients w.r.t. this
/// step's outputs; returns (dx, dh_prev, dc_prev) and accumulates weight
/// gradients into `grads`.
fn lstm_backward(
    params: &PolicyParams,
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut PolicyParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = params.h;
    let xlen = cache.x.len();
    let mut dc_total = dc.to_vec();
    let mut dzi = vec![0.0; h];
    let mut dzf = vec![0.0; h];
    let mut dzo = vec![0.0; h];
    let mut dzg = vec![0.0; h];
    let mut dc_prev = vec![0.0; h];
    for k in 0..h {
        // h = o * tanh(c)
        let do_ = dh[k] * cache.tanh_c[k];
        dc_total[k] += dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
        // c = f * c_prev + i * g
        let di = dc_total[k] * cache.g[k];
        let df = dc_total[k] * cache.c_prev[k];
        let dg = dc_total[k] * cache.i[k];
        dc_prev[k] = dc_total[k] * cache.f[k];
        dzi[k] = di * cache.i[k] * (1.0 - cache.i[k]);
        dzf[k] = df * cache.f[k] * (1.0 - cache.f[k]);
        dzo[k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
        dzg[k] = dg * (1.0 - cache.g[k] * cache.g[k]);
    }

    let mut xi: Vec<f64> = Vec::with_capacity(xlen + h);
    xi.extend_from_slice(&cache.x);
    xi.extend_from_slice(&cache.h_prev);
    let mut dxi = vec![0.0; xlen + h];
    matvec_backward(&params.w_i, &xi, &dzi, &mut grads.w_i, &mut dxi);
    matvec_backward(&params.w_f, &xi, &dzf, &mut grads.w_f, &mut dxi);
    matvec_backward(&params.w_o, &xi, &dzo, &mut grads.w_o, &mut dxi);
    matvec_backward(&params.w_g, &xi, &dzg, &mut grads.w_g, &mut dxi);
    for k in 0..h {
        grads.b_i[k] += dzi[k];
        grads.b_f[k] += dzf[k];
        grads.b_o[k] += dzo[k];
        grads.b_g[k] += dzg[k];
    }
    let dx = dxi[..xlen].to_vec();
    let dh_prev = dxi[xlen..].to_vec();
    (dx, dh_prev, dc_prev)
}

/// s_0 = LSTM(0, [r_0; e_0])
pub fn encode_initial(
    params: &PolicyParams,
    table: &EmbeddingTable,
    r0: RelationId,
    e0: EntityId,
) -> StateEncoding {
    let x = action_embedding(table, r0, e0);
    lstm_forward(params, &StateEncoding::zero(params.h), &x).0
}

/// s_t = LSTM(s_{t-1}, [r_t; e_t])
pub fn encode_step(
    params: &PolicyParams,
    table: &EmbeddingTable,
    prev: &StateEncoding,
    r: RelationId,
    e: EntityId,
) -> StateEncoding {
    let x = action_embedding(table, r, e);
    lstm_forward(params, prev, &x).0
}

/// Query vector y = W2 ReLU(W1 s + b1) + b2.
fn mlp_forward(params: &PolicyParams, s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut z1 = params.b1.clone();
    matvec_add(&params.w1, s, &mut z1);
    let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
    let mut y = params.b2.clone();
    matvec_add(&params.w2, &a1, &mut y);
    (z1, a1, y)
}

/// π_θ over the candidate set under an optional action-dropout mask
/// (`keep[j]` = candidate j survives). Masked entries get probability 0.
pub fn action_distribution(
    params: &PolicyParams,
    table: &EmbeddingTable,
    state: &StateEncoding,
    candidates: &[(RelationId, EntityId)],
    keep: Option<&[bool]>,
) -> Vec<f64> {
    assert!(!candidates.is_empty());
    let (_, _, y) = mlp_forward(params, &state.hidden);
    let logits: Vec<f64> = candidates
        .iter()
        .map(|&(r, e)| dot(&action_embedding(table, r, e), &y))
        .collect();
    masked_softmax(&logits, keep)
}

/// Action-dropout mask: every non-self-loop candidate is dropped
/// independently with probability `rate`; the self-loop is never masked,
/// so at least one candidate always survives.
pub fn dropout_mask<R: Rng>(
    candidates: &[(RelationId, EntityId)],
    rate: f64,
    rng: &mut R,
) -> Vec<bool> {
    let mut keep: Vec<bool> = candidates
        .iter()
        .map(|&(r, _)| r == REL_SELF_LOOP || rng.gen::<f64>() >= rate)
        .collect();
    if !keep.iter().any(|&k| k) {
        keep.iter_mut().for_each(|k| *k = true);
    }
    keep
}

pub fn sample_action<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // guard against rounding at the tail
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// One decision the agent made: the (possibly fanout-capped) candidate
/// set it saw, the dropout mask in force, and the index it picked.
#[derive(Debug, Clone)]
pub struct DecisionPoint {
    pub candidates: Vec<(RelationId, EntityId)>,
    pub keep: Vec<bool>,
    pub chosen: usize,
}

/// Gradients of a trajectory's weighted negative log-likelihood.
#[derive(Debug)]
pub struct PolicyGrads {
    pub params: PolicyParams,
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
}

impl PolicyGrads {
    pub fn zeros(params: &PolicyParams, table: &EmbeddingTable) -> Self {
        PolicyGrads {
            params: params.zeros_like(),
            entity: vec![0.0; table.entity.len()],
            relation: vec![0.0; table.relation.len()],
        }
    }
}

/// Computes L = −weight · Σ_t log π_θ(a_t|s_{t-1}) for one trajectory and
/// accumulates dL/dθ (policy weights and embedding rows) into `grads`.
///
/// `start` is (r₀, e₀); `decisions[t]` is taken from state s_t, and the
/// chosen action becomes the LSTM input producing s_{t+1}. Returns the
/// sum of chosen log-probabilities.
pub fn trajectory_logprob_and_grads(
    params: &PolicyParams,
    table: &EmbeddingTable,
    start: (RelationId, EntityId),
    decisions: &[DecisionPoint],
    weight: f64,
    grads: &mut PolicyGrads,
) -> f64 {
    let d = table.dim;
    let hdim = params.h;
    let n = decisions.len();

    // ---- forward ----
    let mut lstm_caches: Vec<LstmCache> = Vec::with_capacity(n);
    let mut input_ids: Vec<(RelationId, EntityId)> = Vec::with_capacity(n);
    let mut states: Vec<StateEncoding> = Vec::with_capacity(n);
    let mut state = StateEncoding::zero(hdim);
    let mut next_input = start;
    for dec in decisions {
        input_ids.push(next_input);
        let x = action_embedding(table, next_input.0, next_input.1);
        let (s, cache) = lstm_forward(params, &state, &x);
        lstm_caches.push(cache);
        states.push(s.clone());
        state = s;
        next_input = dec.candidates[dec.chosen];
    }

    struct DecCache {
        z1: Vec<f64>,
        a1: Vec<f64>,
        y: Vec<f64>,
        probs: Vec<f64>,
    }
    let mut dec_caches: Vec<DecCache> = Vec::with_capacity(n);
    let mut logprob_sum = 0.0;
    for (t, dec) in decisions.iter().enumerate() {
        let (z1, a1, y) = mlp_forward(params, &states[t].hidden);
        let logits: Vec<f64> = dec
            .candidates
            .iter()
            .map(|&(r, e)| dot(&action_embedding(table, r, e), &y))
            .collect();
        let probs = masked_softmax(&logits, Some(&dec.keep));
        logprob_sum += probs[dec.chosen].max(f64::MIN_POSITIVE).ln();
        dec_caches.push(DecCache { z1, a1, y, probs });
    }

    if weight == 0.0 {
        return logprob_sum;
    }

    // ---- backward ----
    let mut dh_next = vec![0.0; hdim];
    let mut dc_next = vec![0.0; hdim];
    for t in (0..n).rev() {
        let dec = &decisions[t];
        let cache = &dec_caches[t];

        // dL/dlogit_j = weight * (p_j − 1[j = chosen]) over kept entries
        let mut dy = vec![0.0; 2 * d];
        for (j, &(r, e)) in dec.candidates.iter().enumerate() {
            if !dec.keep[j] {
                continue;
            }
            let mut dl = weight * cache.probs[j];
            if j == dec.chosen {
                dl -= weight;
            }
            if dl == 0.0 {
                continue;
            }
            // logit = candᵀ y: gradient flows to y and to the candidate rows
            let gr = &mut grads.relation[r.idx() * d..(r.idx() + 1) * d];
            for k in 0..d {
                dy[k] += dl * table.relation_row(r)[k];
                gr[k] += dl * cache.y[k];
            }
            let ge = &mut grads.entity[e.idx() * d..(e.idx() + 1) * d];
            for k in 0..d {
                dy[d + k] += dl * table.entity_row(e)[k];
                ge[k] += dl * cache.y[d + k];
            }
        }

        // MLP backward: y = W2 a1 + b2, a1 = ReLU(z1), z1 = W1 s + b1
        let mut da1 = vec![0.0; hdim];
        matvec_backward(&params.w2, &cache.a1, &dy, &mut grads.params.w2, &mut da1);
        for k in 0..2 * d {
            grads.params.b2[k] += dy[k];
        }
        let dz1: Vec<f64> = da1
            .iter()
            .zip(&cache.z1)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let mut ds = vec![0.0; hdim];
        matvec_backward(&params.w1, &states[t].hidden, &dz1, &mut grads.params.w1, &mut ds);
        for k in 0..hdim {
            grads.params.b1[k] += dz1[k];
        }

        // state gradient: from this decision plus everything downstream
        for k in 0..hdim {
            ds[k] += dh_next[k];
        }
        let (dx, dh_prev, dc_prev) =
            lstm_backward(params, &lstm_caches[t], &ds, &dc_next, &mut grads.params);

        // input embedding [r_t; e_t]
        let (rin, ein) = input_ids[t];
        let gr = &mut grads.relation[rin.idx() * d..(rin.idx() + 1) * d];
        for k in 0..d {
            gr[k] += dx[k];
        }
        let ge = &mut grads.entity[ein.idx() * d..(ein.idx() + 1) * d];
        for k in 0..d {
            ge[k] += dx[d + k];
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    logprob_sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_table(nv: usize, nr: usize, d: usize, seed: u64) -> EmbeddingTable {
        EmbeddingTable::init(nv, nr, d, seed)
    }

    fn zero_params(d: usize, h: usize) -> PolicyParams {
        let mut p = PolicyParams::init(d, h, 0);
        for buf in p.buffers_mut() {
            buf.fill(0.0);
        }
        p
    }

    #[test]
    fn zero_params_give_zero_hidden() {
        // gates sigmoid(0)=0.5, candidate tanh(0)=0 -> c=0, h=0
        let d = 3;
        let h = 4;
        let table = toy_table(5, 3, d, 1);
        let p = zero_params(d, h);
        let s = encode_initial(&p, &table, RelationId(0), EntityId(0));
        assert!(s.hidden.iter().all(|&v| v == 0.0));
        assert!(s.cell.iter().all(|&v| v == 0.0));
        // stays zero over a sequence
        let s2 = encode_step(&p, &table, &s, RelationId(1), EntityId(2));
        assert!(s2.hidden.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoding_is_deterministic() {
        let table = toy_table(5, 3, 4, 2);
        let p = PolicyParams::init(4, 6, 3);
        let a = encode_initial(&p, &table, RelationId(0), EntityId(1));
        let b = encode_initial(&p, &table, RelationId(0), EntityId(1));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_input_hidden_from_biases_only() {
        // with a zero input vector and zero h_prev, gates depend on biases only:
        // h = o ⊙ tanh(i ⊙ g) since c_prev = 0
        let d = 2;
        let h = 3;
        let mut table = toy_table(2, 2, d, 4);
        table.entity.fill(0.0);
        table.relation.fill(0.0);
        let p = PolicyParams::init(d, h, 5);
        let s = encode_initial(&p, &table, RelationId(0), EntityId(0));
        for k in 0..h {
            let i = sigmoid(p.b_i[k]);
            let o = sigmoid(p.b_o[k]);
            let g = p.b_g[k].tanh();
            let expect = o * (i * g).tanh();
            assert!((s.hidden[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn order_matters_for_generic_params() {
        let table = toy_table(6, 4, 4, 6);
        let p = PolicyParams::init(4, 5, 7);
        let s0 = encode_initial(&p, &table, RelationId(0), EntityId(0));
        let a = encode_step(
            &p,
            &table,
            &encode_step(&p, &table, &s0, RelationId(1), EntityId(1)),
            RelationId(2),
            EntityId(2),
        );
        let b = encode_step(
            &p,
            &table,
            &encode_step(&p, &table, &s0, RelationId(2), EntityId(2)),
            RelationId(1),
            EntityId(1),
        );
        assert_ne!(a.hidden, b.hidden);
    }

    #[test]
    fn distribution_symmetry_and_single_candidate() {
        let d = 3;
        let table = toy_table(4, 3, d, 8);
        let p = PolicyParams::init(d, 4, 9);
        let s = encode_initial(&p, &table, RelationId(0), EntityId(0));
        // identical candidates -> equal probabilities
        let cands = vec![(RelationId(1), EntityId(1)), (RelationId(1), EntityId(1))];
        let dist = action_distribution(&p, &table, &s, &cands, None);
        assert!((dist[0] - 0.5).abs() < 1e-12);
        let one = action_distribution(&p, &table, &s, &cands[..1], None);
        assert!((one[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distribution_sums_to_one() {
        let d = 4;
        let table = toy_table(8, 4, d, 10);
        let p = PolicyParams::init(d, 6, 11);
        let s = encode_initial(&p, &table, RelationId(3), EntityId(0));
        let cands: Vec<(RelationId, EntityId)> =
            (0..5).map(|k| (RelationId(k % 4), EntityId(k + 1))).collect();
        let dist = action_distribution(&p, &table, &s, &cands, None);
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(dist.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn dropout_preserves_relative_probabilities() {
        let d = 3;
        let table = toy_table(8, 4, d, 12);
        let p = PolicyParams::init(d, 4, 13);
        let s = encode_initial(&p, &table, RelationId(3), EntityId(0));
        let cands: Vec<(RelationId, EntityId)> =
            (0..4).map(|k| (RelationId(k % 3), EntityId(k + 1))).collect();
        let full = action_distribution(&p, &table, &s, &cands, None);
        let keep = vec![true, false, true, true];
        let masked = action_distribution(&p, &table, &s, &cands, Some(&keep));
        let z: f64 = full[0] + full[2] + full[3];
        for j in [0usize, 2, 3] {
            assert!((masked[j] - full[j] / z).abs() < 1e-9);
        }
        assert_eq!(masked[1], 0.0);
    }

    #[test]
    fn dropout_never_masks_self_loop() {
        let cands = vec![
            (REL_SELF_LOOP, EntityId(0)),
            (RelationId(5), EntityId(1)),
            (RelationId(6), EntityId(2)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let keep = dropout_mask(&cands, 0.95, &mut rng);
            assert!(keep[0]);
            assert!(keep.iter().any(|&k| k));
        }
    }

    #[test]
    fn sampling_degenerate_and_statistical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_action(&[1.0], &mut rng), 0);
        for _ in 0..100 {
            assert_eq!(sample_action(&[0.0, 1.0], &mut rng), 1);
        }
        // empirical frequency within 3 sigma of Binomial(1e4, 0.5)
        let n = 10_000;
        let mut count0 = 0;
        for _ in 0..n {
            if sample_action(&[0.5, 0.5], &mut rng) == 0 {
                count0 += 1;
            }
        }
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((count0 as f64 - n as f64 * 0.5).abs() < 3.0 * sigma);
    }

    /// Full-network gradient check: embedding lookup -> LSTM steps ->
    /// MLP -> softmax, against central finite differences.
    #[test]
    fn trajectory_gradients_match_finite_differences() {
        let d = 4;
        let h = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..10 {
            let table = toy_table(7, 5, d, 100 + trial);
            let params = PolicyParams::init(d, h, 200 + trial);
            let decisions = vec![
                DecisionPoint {
                    candidates: vec![
                        (RelationId(1), EntityId(1)),
                        (RelationId(2), EntityId(2)),
                        (RelationId(0), EntityId(3)),
                    ],
                    keep: vec![true, true, false],
                    chosen: rng.gen_range(0..2),
                },
                DecisionPoint {
                    candidates: vec![(RelationId(3), EntityId(4)), (RelationId(4), EntityId(5))],
                    keep: vec![true, true],
                    chosen: rng.gen_range(0..2),
                },
                DecisionPoint {
                    candidates: vec![(RelationId(2), EntityId(6)), (RelationId(1), EntityId(0))],
                    keep: vec![true, true],
                    chosen: rng.gen_range(0..2),
                },
            ];
            let start = (RelationId(0), EntityId(0));
            let weight = 0.7;

            let mut grads = PolicyGrads::zeros(&params, &table);
            trajectory_logprob_and_grads(&params, &table, start, &decisions, weight, &mut grads);

            // loss as a pure function of (params, embeddings)
            let loss = |pflat: &[f64], ent: &[f64], rel: &[f64]| -> f64 {
                let mut p = params.clone();
                p.set_from_flat(pflat);
                let mut t = table.clone();
                t.entity.copy_from_slice(ent);
                t.relation.copy_from_slice(rel);
                let mut g = PolicyGrads::zeros(&p, &t);
                let lp = trajectory_logprob_and_grads(&p, &t, start, &decisions, 0.0, &mut g);
                -weight * lp
            };

            let eps = 1e-5;
            let pflat = params.to_flat();
            let gflat = grads.params.to_flat();
            // spot-check a deterministic subset of parameter coordinates
            for k in (0..pflat.len()).step_by(17) {
                let mut plus = pflat.clone();
                plus[k] += eps;
                let mut minus = pflat.clone();
                minus[k] -= eps;
                let fd = (loss(&plus, &table.entity, &table.relation)
                    - loss(&minus, &table.entity, &table.relation))
                    / (2.0 * eps);
                let denom = fd.abs().max(gflat[k].abs()).max(1e-5);
                assert!(
                    (fd - gflat[k]).abs() / denom < 1e-4,
                    "param {k}: fd={fd} analytic={}",
                    gflat[k]
                );
            }
            for k in (0..table.entity.len()).step_by(5) {
                let mut plus = table.entity.clone();
                plus[k] += eps;
                let mut minus = table.entity.clone();
                minus[k] -= eps;
                let fd = (loss(&pflat, &plus, &table.relation)
                    - loss(&pflat, &minus, &table.relation))
                    / (2.0 * eps);
                let denom = fd.abs().max(grads.entity[k].abs()).max(1e-5);
                assert!(
                    (fd - grads.entity[k]).abs() / denom < 1e-4,
                    "entity {k}: fd={fd} analytic={}",
                    grads.entity[k]
                );
            }
        }
    }
}
