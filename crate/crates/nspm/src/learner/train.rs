//! Mini-batch training loop with Adam (or plain SGD), global-norm gradient
//! clipping, and per-epoch dev BLEU tracking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{forward_loss, LearnerError, Params, Seq2SeqModel};
use super::vocab::Vocab;
use crate::codec::TokenSeq;
use crate::eval::bleu_corpus;
use crate::util::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Dev BLEU is computed every this many epochs (and on the last).
    pub eval_every: usize,
    pub max_decode_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            grad_clip_norm: 5.0,
            seed: 42,
            eval_every: 1,
            max_decode_len: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochStat>,
    pub final_dev_bleu: Option<f64>,
}

struct AdamState {
    m: Params,
    v: Params,
    t: u64,
}

fn apply_update(
    params: &mut Params,
    grads: &Params,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    let g = grads.flat();
    match (cfg.optimizer, adam) {
        (Optimizer::Sgd, _) => {
            for (p, g) in params.flat_mut().into_iter().zip(g) {
                *p -= cfg.learning_rate * g;
            }
        }
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            let lr = cfg.learning_rate;
            let ms = state.m.flat_mut();
            for ((m_i, g_i), _) in ms.into_iter().zip(&g).zip(0..) {
                *m_i = beta1 * *m_i + (1.0 - beta1) * g_i;
            }
            let vs = state.v.flat_mut();
            for (v_i, g_i) in vs.into_iter().zip(&g) {
                *v_i = beta2 * *v_i + (1.0 - beta2) * g_i * g_i;
            }
            let m_flat = state.m.flat();
            let v_flat = state.v.flat();
            for ((p, m_i), v_i) in params.flat_mut().into_iter().zip(m_flat).zip(v_flat) {
                let m_hat = m_i / bc1;
                let v_hat = v_i / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        (Optimizer::Adam { .. }, None) => unreachable!("adam state allocated before training"),
    }
}

fn encode_pairs(
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
    pairs: &[(TokenSeq, TokenSeq)],
) -> Vec<(Vec<usize>, Vec<usize>)> {
    pairs
        .iter()
        .map(|(nl, query)| (src_vocab.encode(nl), tgt_vocab.encode(query)))
        .collect()
}

pub fn dev_bleu(
    model: &Seq2SeqModel,
    dev_pairs: &[(TokenSeq, TokenSeq)],
    max_decode_len: usize,
    mode: Execution,
) -> Option<f64> {
    if dev_pairs.is_empty() {
        return None;
    }
    let hyps = crate::util::map_ordered(mode, dev_pairs, |_, (nl, _)| {
        model.translate(nl, max_decode_len)
    });
    let refs: Vec<TokenSeq> = dev_pairs.iter().map(|(_, q)| q.clone()).collect();
    Some(bleu_corpus(&hyps, &refs).expect("same length"))
}

/// Trains in place; the curve has one entry per epoch in order.
pub fn train(
    model: &mut Seq2SeqModel,
    train_pairs: &[(TokenSeq, TokenSeq)],
    dev_pairs: &[(TokenSeq, TokenSeq)],
    cfg: &TrainConfig,
    mode: Execution,
    mut progress: Option<&mut dyn FnMut(&EpochStat)>,
) -> Result<TrainReport, LearnerError> {
    let encoded = encode_pairs(&model.source_vocab, &model.target_vocab, train_pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: model.params.zeros_like(),
            v: model.params.zeros_like(),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let eval_every = cfg.eval_every.max(1);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<(Vec<usize>, Vec<usize>)> =
                chunk.iter().map(|&i| encoded[i].clone()).collect();
            let (loss, mut grads) = forward_loss(model, &batch, true, &mut rng, mode)?;
            let norm = grads.sq_norm().sqrt();
            if cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm {
                grads.scale(cfg.grad_clip_norm / norm);
            }
            apply_update(&mut model.params, &grads, cfg, &mut adam);
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        let want_eval = (epoch + 1) % eval_every == 0 || epoch + 1 == cfg.epochs;
        let dev = if want_eval {
            dev_bleu(model, dev_pairs, cfg.max_decode_len, mode)
        } else {
            None
        };
        let stat = EpochStat {
            epoch: epoch + 1,
            train_loss,
            dev_bleu: dev,
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&stat);
        }
        curve.push(stat);
    }
    let final_dev_bleu = curve.iter().rev().find_map(|s| s.dev_bleu);
    Ok(TrainReport {
        curve,
        final_dev_bleu,
    })
}
