//! Sequence-to-sequence learner: vocabularies, LSTM layers, the
//! encoder/decoder model, and the training loop.

pub mod lstm;
pub mod model;
pub mod train;
pub mod vocab;

pub use model::{
    forward_loss, load_model, save_model, HyperParams, LearnerError, Params, Seq2SeqModel,
};
pub use train::{train, EpochStat, Optimizer, TrainConfig, TrainReport};
pub use vocab::Vocab;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::util::Execution;

/// Central finite differences over every parameter; returns the worst
/// relative error against the analytic gradient.
pub fn gradient_check(
    model: &Seq2SeqModel,
    batch: &[(Vec<usize>, Vec<usize>)],
    eps: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, grads) = forward_loss(model, batch, false, &mut rng, Execution::Sequential)
        .expect("finite loss on check batch");
    let analytic = grads.flat();
    let loss_of = |m: &Seq2SeqModel| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        forward_loss(m, batch, false, &mut rng, Execution::Sequential)
            .expect("finite loss on check batch")
            .0
    };
    let mut probe = model.clone();
    let mut max_rel: f64 = 0.0;
    for (idx, analytic) in analytic.iter().enumerate() {
        let original = {
            let mut flat = probe.params.flat_mut();
            let v = *flat[idx];
            *flat[idx] = v + eps;
            v
        };
        let plus = loss_of(&probe);
        *probe.params.flat_mut()[idx] = original - eps;
        let minus = loss_of(&probe);
        *probe.params.flat_mut()[idx] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = numeric.abs().max(analytic.abs()).max(1e-6);
        max_rel = max_rel.max(((numeric - analytic) / denom).abs());
    }
    max_rel
}
