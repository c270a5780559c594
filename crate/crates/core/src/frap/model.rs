//! Forward and reverse-mode passes of the phase-competition Q-network.
//!
//! Data flow for one intersection with `M` movements, `P` phases and `n` neighbors:
//!
//! 1. every movement's features pass through one shared dense layer (`E` wide);
//! 2. each intersection (self and neighbors) is summarized by the mean of its movement
//!    embeddings; a multi-head attention with the self summary as query and all `n + 1`
//!    summaries as keys/values yields an `E`-wide context;
//! 3. the context is appended to every movement embedding (`2E`), and a phase's demand is
//!    the sum of its movements' vectors;
//! 4. for every ordered pair of distinct phases `(p, q)` a hidden layer combines the two
//!    demands with the embedding of their dominant conflict class and scores the pair;
//!    `Q_p` is the sum of `p`'s pair scores.

use super::params::{FrapConfig, ParamStore, MOVEMENT_FEATURES};
use super::tensor::{axpy, dot, matvec_slice, matvec_t_acc, outer_acc, Scalar};
use crate::error::{Error, Result};
use crate::network::{ConflictMatrix, Intersection};

pub type MovementFeatures = [f64; MOVEMENT_FEATURES];

/// Phase structure of one intersection as the network sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseLayout {
    pub movements: usize,
    /// Movement indices per phase.
    pub phases: Vec<Vec<usize>>,
    /// `P x P` dominant conflict class index between phases; the diagonal is unused.
    pub relation: Vec<usize>,
}

impl PhaseLayout {
    pub fn new(cm: &ConflictMatrix, phases: Vec<Vec<usize>>) -> Result<Self> {
        for p in &phases {
            if let Some(&m) = p.iter().find(|&&m| m >= cm.size()) {
                return Err(Error::Shape(format!(
                    "phase references movement {m} of {}",
                    cm.size()
                )));
            }
        }
        let n = phases.len();
        let mut relation = vec![0; n * n];
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    relation[a * n + b] = cm.dominant_class(&phases[a], &phases[b]).index();
                }
            }
        }
        Ok(PhaseLayout { movements: cm.size(), phases, relation })
    }

    pub fn from_intersection(node: &Intersection) -> Self {
        let phases = node.phases.iter().map(|p| p.movements.clone()).collect();
        PhaseLayout::new(&node.conflicts, phases).expect("intersection phases are consistent")
    }

    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }
}

/// Read-only view of the parameters in any scalar type.
#[derive(Clone, Copy)]
pub(crate) struct Weights<'a, S> {
    demand_weight: &'a [S],
    demand_bias: &'a [S],
    attn_query: &'a [S],
    attn_key: &'a [S],
    attn_value: &'a [S],
    attn_out_weight: &'a [S],
    attn_out_bias: &'a [S],
    pair_self: &'a [S],
    pair_other: &'a [S],
    relation: &'a [S],
    pair_bias: &'a [S],
    score_weight: &'a [S],
    score_bias: &'a [S],
}

impl<'a, S> Weights<'a, S> {
    /// Tensors in `PARAM_NAMES` order.
    pub(crate) fn from_slices(t: [&'a [S]; 13]) -> Self {
        let [demand_weight, demand_bias, attn_query, attn_key, attn_value, attn_out_weight, attn_out_bias, pair_self, pair_other, relation, pair_bias, score_weight, score_bias] =
            t;
        Weights {
            demand_weight,
            demand_bias,
            attn_query,
            attn_key,
            attn_value,
            attn_out_weight,
            attn_out_bias,
            pair_self,
            pair_other,
            relation,
            pair_bias,
            score_weight,
            score_bias,
        }
    }
}

impl<'a> Weights<'a, f64> {
    pub(crate) fn of(p: &'a ParamStore) -> Self {
        Weights::from_slices(p.tensors().map(|t| t.data.as_slice()))
    }
}

/// Output of the shared movement demand layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandPass<S = f64> {
    pub movements: usize,
    /// `M x E` pre-activations.
    pub pre: Vec<S>,
    /// `M x E` embeddings.
    pub emb: Vec<S>,
}

impl<S: Scalar> DemandPass<S> {
    pub fn embedding(&self, m: usize) -> &[S] {
        let e = self.emb.len() / self.movements.max(1);
        &self.emb[m * e..(m + 1) * e]
    }

    fn mean(&self, e: usize) -> Vec<S> {
        let mut s = vec![S::from(0.0); e];
        for m in 0..self.movements {
            axpy(S::from(1.0), &self.emb[m * e..(m + 1) * e], &mut s);
        }
        if self.movements > 0 {
            let inv = S::from(1.0) / S::from(self.movements as f64);
            s.iter_mut().for_each(|x| *x = *x * inv);
        }
        s
    }
}

pub fn demand_pass(params: &ParamStore, cfg: &FrapConfig, features: &[MovementFeatures]) -> DemandPass {
    demand_pass_with(Weights::of(params), cfg, features)
}

fn demand_pass_with<S: Scalar>(w: Weights<S>, cfg: &FrapConfig, features: &[MovementFeatures]) -> DemandPass<S> {
    let e = cfg.embed_dim;
    let zero = S::from(0.0);
    let mut pre = vec![zero; features.len() * e];
    let mut emb = vec![zero; features.len() * e];
    for (m, f) in features.iter().enumerate() {
        let x = f.map(S::from);
        let out = &mut pre[m * e..(m + 1) * e];
        matvec_slice(w.demand_weight, MOVEMENT_FEATURES, &x, out);
        axpy(S::from(1.0), w.demand_bias, out);
        for (o, p) in emb[m * e..(m + 1) * e].iter_mut().zip(out.iter()) {
            *o = cfg.activation.apply_to(*p);
        }
    }
    DemandPass { movements: features.len(), pre, emb }
}

/// Per-movement demand embeddings, `E` wide each.
pub fn demand_embedding(
    features: &[MovementFeatures],
    params: &ParamStore,
    cfg: &FrapConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.check()?;
    params.check(cfg)?;
    let pass = demand_pass(params, cfg, features);
    Ok((0..features.len()).map(|m| pass.embedding(m).to_vec()).collect())
}

/// Multi-head attention over `{self} ∪ neighbors`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionPass<S = f64> {
    pub entities: usize,
    /// `(n+1) x E` inputs, self first.
    pub inputs: Vec<S>,
    /// `K*d` query from the self input.
    pub query: Vec<S>,
    /// `(n+1) x K*d`
    pub keys: Vec<S>,
    pub values: Vec<S>,
    /// `K x (n+1)` softmax weights, one row per head.
    pub weights: Vec<S>,
    /// `K*d` concatenated head outputs.
    pub concat: Vec<S>,
    /// `E` output projection of `concat`.
    pub context: Vec<S>,
}

impl<S> AttentionPass<S> {
    pub fn head_weights(&self, head: usize) -> &[S] {
        &self.weights[head * self.entities..(head + 1) * self.entities]
    }
}

pub fn attention_pass(params: &ParamStore, cfg: &FrapConfig, inputs: Vec<f64>) -> AttentionPass {
    attention_pass_with(Weights::of(params), cfg, inputs)
}

fn attention_pass_with<S: Scalar>(w: Weights<S>, cfg: &FrapConfig, inputs: Vec<S>) -> AttentionPass<S> {
    let (e, a, d) = (cfg.embed_dim, cfg.attention_width(), cfg.head_dim);
    let zero = S::from(0.0);
    let n = inputs.len() / e;
    let mut query = vec![zero; a];
    matvec_slice(w.attn_query, e, &inputs[..e], &mut query);
    let mut keys = vec![zero; n * a];
    let mut values = vec![zero; n * a];
    for j in 0..n {
        let x = &inputs[j * e..(j + 1) * e];
        matvec_slice(w.attn_key, e, x, &mut keys[j * a..(j + 1) * a]);
        matvec_slice(w.attn_value, e, x, &mut values[j * a..(j + 1) * a]);
    }
    let scale = S::from(1.0 / (d as f64).sqrt());
    let mut weights = vec![zero; cfg.heads * n];
    let mut concat = vec![zero; a];
    for h in 0..cfg.heads {
        let hs = h * d..(h + 1) * d;
        let row = &mut weights[h * n..(h + 1) * n];
        for (j, w) in row.iter_mut().enumerate() {
            *w = dot(&query[hs.clone()], &keys[j * a + h * d..j * a + (h + 1) * d]) * scale;
        }
        softmax_in_place(row);
        for j in 0..n {
            axpy(row[j], &values[j * a + h * d..j * a + (h + 1) * d], &mut concat[hs.clone()]);
        }
    }
    let mut context = vec![zero; e];
    matvec_slice(w.attn_out_weight, a, &concat, &mut context);
    axpy(S::from(1.0), w.attn_out_bias, &mut context);
    AttentionPass { entities: n, inputs, query, keys, values, weights, concat, context }
}

fn softmax_in_place<S: Scalar>(x: &mut [S]) {
    let max = x.iter().copied().fold(x[0], |m, v| if v > m { v } else { m });
    let mut sum = S::from(0.0);
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in x.iter_mut() {
        *v = *v / sum;
    }
}

/// Attention context for one intersection given its own summary and up to
/// `max_neighbors` neighbor summaries.
pub fn neighbor_attention(
    self_embed: &[f64],
    neighbor_embeds: &[Vec<f64>],
    params: &ParamStore,
    cfg: &FrapConfig,
) -> Result<AttentionPass> {
    cfg.check()?;
    params.check(cfg)?;
    if neighbor_embeds.len() > cfg.max_neighbors {
        return Err(Error::Shape(format!(
            "{} neighbors exceed max_neighbors {}",
            neighbor_embeds.len(),
            cfg.max_neighbors
        )));
    }
    let mut inputs = self_embed.to_vec();
    for nb in neighbor_embeds {
        inputs.extend_from_slice(nb);
    }
    if self_embed.len() != cfg.embed_dim || inputs.len() != cfg.embed_dim * (neighbor_embeds.len() + 1) {
        return Err(Error::Shape(format!("attention inputs must be {} wide", cfg.embed_dim)));
    }
    Ok(attention_pass(params, cfg, inputs))
}

/// Phase-pair competition.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPass<S = f64> {
    pub phases: usize,
    pub hidden: usize,
    /// `P x 2E` summed movement vectors per phase.
    pub demand: Vec<S>,
    /// `P x P x H` hidden pre-activations for ordered pairs (diagonal unused).
    pub pre: Vec<S>,
    pub act: Vec<S>,
    /// `P` phase scores.
    pub scores: Vec<S>,
}

pub fn pair_pass(params: &ParamStore, cfg: &FrapConfig, layout: &PhaseLayout, vectors: &[f64]) -> PairPass {
    pair_pass_with(Weights::of(params), cfg, layout, vectors)
}

fn pair_pass_with<S: Scalar>(
    wt: Weights<S>,
    cfg: &FrapConfig,
    layout: &PhaseLayout,
    vectors: &[S],
) -> PairPass<S> {
    let w = 2 * cfg.embed_dim;
    let h = cfg.hidden_dim;
    let p = layout.phase_count();
    let zero = S::from(0.0);
    let mut demand = vec![zero; p * w];
    for (pi, ph) in layout.phases.iter().enumerate() {
        for &m in ph {
            axpy(S::from(1.0), &vectors[m * w..(m + 1) * w], &mut demand[pi * w..(pi + 1) * w]);
        }
    }
    let mut own = vec![zero; p * h];
    let mut other = vec![zero; p * h];
    for pi in 0..p {
        let d = &demand[pi * w..(pi + 1) * w];
        matvec_slice(wt.pair_self, w, d, &mut own[pi * h..(pi + 1) * h]);
        matvec_slice(wt.pair_other, w, d, &mut other[pi * h..(pi + 1) * h]);
    }
    let mut pre = vec![zero; p * p * h];
    let mut act = vec![zero; p * p * h];
    let mut scores = vec![zero; p];
    for a in 0..p {
        for b in 0..p {
            if a == b {
                continue;
            }
            let off = (a * p + b) * h;
            let rel = &wt.relation[layout.relation[a * p + b] * h..][..h];
            let mut s = wt.score_bias[0];
            for k in 0..h {
                let z = own[a * h + k] + other[b * h + k] + rel[k] + wt.pair_bias[k];
                let y = cfg.activation.apply_to(z);
                pre[off + k] = z;
                act[off + k] = y;
                s = s + wt.score_weight[k] * y;
            }
            scores[a] = scores[a] + s;
        }
    }
    PairPass { phases: p, hidden: h, demand, pre, act, scores }
}

/// One score per phase from per-movement vectors (`2E` wide each).
pub fn pair_scores(
    vectors: &[Vec<f64>],
    layout: &PhaseLayout,
    params: &ParamStore,
    cfg: &FrapConfig,
) -> Result<Vec<f64>> {
    cfg.check()?;
    params.check(cfg)?;
    if vectors.len() != layout.movements || vectors.iter().any(|v| v.len() != 2 * cfg.embed_dim) {
        return Err(Error::Shape(format!(
            "expected {} movement vectors of width {}",
            layout.movements,
            2 * cfg.embed_dim
        )));
    }
    let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
    Ok(pair_pass(params, cfg, layout, &flat).scores)
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache<S = f64> {
    pub features: Vec<Vec<MovementFeatures>>,
    /// Demand passes: self first, then neighbors.
    pub demand: Vec<DemandPass<S>>,
    pub attention: AttentionPass<S>,
    /// `M x 2E` movement vectors fed to the pair competition.
    pub vectors: Vec<S>,
    pub pairs: PairPass<S>,
}

impl<S> ForwardCache<S> {
    pub fn q(&self) -> &[S] {
        &self.pairs.scores
    }
}

/// Q-values (one per phase) for an intersection with the given neighbors.
pub fn forward(
    params: &ParamStore,
    cfg: &FrapConfig,
    layout: &PhaseLayout,
    features: &[MovementFeatures],
    neighbors: &[&[MovementFeatures]],
) -> Result<Vec<f64>> {
    Ok(forward_cached(params, cfg, layout, features, neighbors)?.pairs.scores)
}

pub fn forward_cached(
    params: &ParamStore,
    cfg: &FrapConfig,
    layout: &PhaseLayout,
    features: &[MovementFeatures],
    neighbors: &[&[MovementFeatures]],
) -> Result<ForwardCache> {
    cfg.check()?;
    params.check(cfg)?;
    if features.len() != layout.movements {
        return Err(Error::Shape(format!(
            "{} movement features for a layout of {} movements",
            features.len(),
            layout.movements
        )));
    }
    if neighbors.len() > cfg.max_neighbors {
        return Err(Error::Shape(format!(
            "{} neighbors exceed max_neighbors {}",
            neighbors.len(),
            cfg.max_neighbors
        )));
    }
    if neighbors.iter().any(|n| n.is_empty()) {
        return Err(Error::Shape("neighbor without movements".into()));
    }
    Ok(forward_with(Weights::of(params), cfg, layout, features, neighbors))
}

pub(crate) fn forward_with<S: Scalar>(
    w: Weights<S>,
    cfg: &FrapConfig,
    layout: &PhaseLayout,
    features: &[MovementFeatures],
    neighbors: &[&[MovementFeatures]],
) -> ForwardCache<S> {
    let e = cfg.embed_dim;
    let mut demand = Vec::with_capacity(neighbors.len() + 1);
    demand.push(demand_pass_with(w, cfg, features));
    for nb in neighbors {
        demand.push(demand_pass_with(w, cfg, nb));
    }
    let mut inputs = Vec::with_capacity(demand.len() * e);
    for d in &demand {
        inputs.extend(d.mean(e));
    }
    let attention = attention_pass_with(w, cfg, inputs);
    let own = &demand[0];
    let mut vectors = vec![S::from(0.0); own.movements * 2 * e];
    for m in 0..own.movements {
        vectors[m * 2 * e..m * 2 * e + e].copy_from_slice(own.embedding(m));
        vectors[m * 2 * e + e..(m + 1) * 2 * e].copy_from_slice(&attention.context);
    }
    let pairs = pair_pass_with(w, cfg, layout, &vectors);
    ForwardCache {
        features: std::iter::once(features.to_vec())
            .chain(neighbors.iter().map(|n| n.to_vec()))
            .collect(),
        demand,
        attention,
        vectors,
        pairs,
    }
}

/// Accumulates `dL/dθ` into `grads` given `dL/dQ`.
pub fn backward(
    params: &ParamStore,
    cfg: &FrapConfig,
    layout: &PhaseLayout,
    cache: &ForwardCache,
    grad_q: &[f64],
    grads: &mut ParamStore,
) -> Result<()> {
    if grad_q.len() != layout.phase_count() || cache.pairs.phases != layout.phase_count() {
        return Err(Error::Shape(format!(
            "gradient of length {} for {} phases",
            grad_q.len(),
            layout.phase_count()
        )));
    }
    let e = cfg.embed_dim;
    let w = 2 * e;
    let h = cfg.hidden_dim;
    let p = layout.phase_count();
    let pairs = &cache.pairs;

    // Pair competition.
    let mut g_own = vec![0.0; p * h];
    let mut g_other = vec![0.0; p * h];
    for a in 0..p {
        let gs = grad_q[a];
        if gs == 0.0 {
            continue;
        }
        for b in 0..p {
            if a == b {
                continue;
            }
            let off = (a * p + b) * h;
            let rel = layout.relation[a * p + b];
            grads.score_bias.data[0] += gs;
            for k in 0..h {
                grads.score_weight.data[k] += gs * pairs.act[off + k];
                let gz = gs * params.score_weight.data[k] * cfg.activation.slope(pairs.pre[off + k]);
                g_own[a * h + k] += gz;
                g_other[b * h + k] += gz;
                grads.relation.data[rel * h + k] += gz;
                grads.pair_bias.data[k] += gz;
            }
        }
    }
    let mut g_vectors = vec![0.0; layout.movements * w];
    for pi in 0..p {
        let d = &pairs.demand[pi * w..(pi + 1) * w];
        let go = &g_own[pi * h..(pi + 1) * h];
        let gt = &g_other[pi * h..(pi + 1) * h];
        outer_acc(&mut grads.pair_self, go, d);
        outer_acc(&mut grads.pair_other, gt, d);
        let mut gd = vec![0.0; w];
        matvec_t_acc(&params.pair_self, go, &mut gd);
        matvec_t_acc(&params.pair_other, gt, &mut gd);
        for &m in &layout.phases[pi] {
            axpy(1.0, &gd, &mut g_vectors[m * w..(m + 1) * w]);
        }
    }

    // Split movement vectors into own embedding and shared context.
    let own = &cache.demand[0];
    let mut g_emb_self = vec![0.0; own.movements * e];
    let mut g_context = vec![0.0; e];
    for m in 0..own.movements {
        g_emb_self[m * e..(m + 1) * e].copy_from_slice(&g_vectors[m * w..m * w + e]);
        axpy(1.0, &g_vectors[m * w + e..(m + 1) * w], &mut g_context);
    }

    // Attention.
    let att = &cache.attention;
    let a = cfg.attention_width();
    let d = cfg.head_dim;
    let n = att.entities;
    outer_acc(&mut grads.attn_out_weight, &g_context, &att.concat);
    axpy(1.0, &g_context, &mut grads.attn_out_bias.data);
    let mut g_concat = vec![0.0; a];
    matvec_t_acc(&params.attn_out_weight, &g_context, &mut g_concat);
    let scale = 1.0 / (d as f64).sqrt();
    let mut g_query = vec![0.0; a];
    let mut g_keys = vec![0.0; n * a];
    let mut g_values = vec![0.0; n * a];
    for hd in 0..cfg.heads {
        let hs = hd * d..(hd + 1) * d;
        let gc = &g_concat[hs.clone()];
        let weights = att.head_weights(hd);
        let mut g_w = vec![0.0; n];
        for j in 0..n {
            let vj = &att.values[j * a + hd * d..j * a + (hd + 1) * d];
            g_w[j] = dot(gc, vj);
            axpy(weights[j], gc, &mut g_values[j * a + hd * d..j * a + (hd + 1) * d]);
        }
        let mean: f64 = weights.iter().zip(&g_w).map(|(x, g)| x * g).sum();
        for j in 0..n {
            let g_score = weights[j] * (g_w[j] - mean) * scale;
            if g_score == 0.0 {
                continue;
            }
            let kj = &att.keys[j * a + hd * d..j * a + (hd + 1) * d];
            axpy(g_score, kj, &mut g_query[hs.clone()]);
            axpy(
                g_score,
                &att.query[hs.clone()],
                &mut g_keys[j * a + hd * d..j * a + (hd + 1) * d],
            );
        }
    }
    let mut g_inputs = vec![0.0; n * e];
    let x0 = &att.inputs[..e];
    outer_acc(&mut grads.attn_query, &g_query, x0);
    matvec_t_acc(&params.attn_query, &g_query, &mut g_inputs[..e]);
    for j in 0..n {
        let xj = &att.inputs[j * e..(j + 1) * e];
        let gk = &g_keys[j * a..(j + 1) * a];
        let gv = &g_values[j * a..(j + 1) * a];
        outer_acc(&mut grads.attn_key, gk, xj);
        outer_acc(&mut grads.attn_value, gv, xj);
        matvec_t_acc(&params.attn_key, gk, &mut g_inputs[j * e..(j + 1) * e]);
        matvec_t_acc(&params.attn_value, gv, &mut g_inputs[j * e..(j + 1) * e]);
    }

    // Mean pooling and the shared demand layer, self and neighbors alike.
    for (j, pass) in cache.demand.iter().enumerate() {
        let inv = 1.0 / pass.movements.max(1) as f64;
        let g_summary = &g_inputs[j * e..(j + 1) * e];
        for m in 0..pass.movements {
            let mut g_pre = vec![0.0; e];
            for k in 0..e {
                let mut g = g_summary[k] * inv;
                if j == 0 {
                    g += g_emb_self[m * e + k];
                }
                g_pre[k] = g * cfg.activation.slope(pass.pre[m * e + k]);
            }
            outer_acc(&mut grads.demand_weight, &g_pre, &cache.features[j][m]);
            axpy(1.0, &g_pre, &mut grads.demand_bias.data);
        }
    }
    Ok(())
}
