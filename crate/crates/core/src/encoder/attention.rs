//! Prompt-guided multi-head attention readout.
//!
//! Per head `h`: `q = W_q^h·p`, `k_x = W_k^h·h_x`, `v_x = W_v^h·h_x`,
//! `α = softmax_x(q·k_x / √d_k)`, head output `Σ_x α_x v_x`. Heads are
//! concatenated and passed through an affine output map. Query, key and
//! value maps carry no bias: a key bias shifts every logit of a head by the
//! same amount and cancels in the softmax.

use std::rc::Rc;

use rand::Rng;

use super::gin::EncoderConfig;
use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};

#[derive(Debug, Clone)]
pub struct PromptAggregator {
    pub prompt: ParamId,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub heads: usize,
    pub literal_values: bool,
}

impl PromptAggregator {
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        cfg: &EncoderConfig,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        cfg.validate();
        let (d, s) = (cfg.dim, cfg.init_scale());
        let pooled = if cfg.literal_values { cfg.heads * d } else { d };
        PromptAggregator {
            prompt: store.add_uniform(&format!("{prefix}.prompt"), 1, d, s, rng),
            w_q: store.add_uniform(&format!("{prefix}.w_q"), d, d, s, rng),
            w_k: store.add_uniform(&format!("{prefix}.w_k"), d, d, s, rng),
            w_v: store.add_uniform(&format!("{prefix}.w_v"), d, d, s, rng),
            out_w: store.add_uniform(&format!("{prefix}.out_w"), pooled, d, s, rng),
            out_b: store.add_uniform(&format!("{prefix}.out_b"), 1, d, s, rng),
            heads: cfg.heads,
            literal_values: cfg.literal_values,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.prompt,
            self.w_q,
            self.w_k,
            self.w_v,
            self.out_w,
            self.out_b,
        ]
    }

    pub fn is_frozen(&self, store: &ParamStore) -> bool {
        self.param_ids().iter().all(|&id| store.is_frozen(id))
    }

    pub fn set_frozen(&self, store: &mut ParamStore, frozen: bool) {
        for id in self.param_ids() {
            store.set_frozen(id, frozen);
        }
    }
}

/// Graph vectors (`graphs x D`) and attention weights (`atoms x heads`)
/// for node rows segmented by `offsets`.
pub fn prompt_aggregate(
    tape: &mut Tape,
    store: &ParamStore,
    agg: &PromptAggregator,
    nodes: NodeId,
    offsets: Rc<Vec<usize>>,
) -> (NodeId, NodeId) {
    let d = tape.value(nodes).cols();
    let dk = d / agg.heads;
    let p = tape.param(store, agg.prompt);
    let wq = tape.param(store, agg.w_q);
    let wk = tape.param(store, agg.w_k);
    let q = tape.matmul(p, wq);
    let k = tape.matmul(nodes, wk);
    let logits = tape.head_dot(k, q, agg.heads, 1.0 / (dk as f64).sqrt());
    let alpha = tape.segment_softmax(logits, offsets.clone());
    let pooled = if agg.literal_values {
        tape.attn_pool(alpha, nodes, offsets, true)
    } else {
        let wv = tape.param(store, agg.w_v);
        let v = tape.matmul(nodes, wv);
        tape.attn_pool(alpha, v, offsets, false)
    };
    let ow = tape.param(store, agg.out_w);
    let ob = tape.param(store, agg.out_b);
    let out = tape.matmul(pooled, ow);
    (tape.add_row(out, ob), alpha)
}
