use rand::Rng;
use serde::Serialize;

use crate::analysis::heatmap::UncertaintySource;
use crate::env::{Dataset, ACTION_DIM};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::rng::rng_from_seed;

/// Mann-Whitney AUC: `P(pos > neg) + ½·P(pos = neg)`, via average ranks.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::contract("roc_auc needs non-empty positive and negative sets"));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(Error::numeric("roc_auc: NaN score"));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&v| (v, true)).chain(neg.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Clone, Debug, Serialize)]
pub struct OodAucReport {
    pub auc: f64,
    pub n_in: usize,
    pub n_ood: usize,
    pub mean_in: f64,
    pub mean_ood: f64,
    pub seed: u64,
}

/// Scores dataset pairs `(s, a)` against the same states paired with
/// uniform random actions; the random-action pairs are the positive class.
/// At most `max_states` states are drawn (without replacement) from the
/// dataset.
pub fn ood_auc(unc: &UncertaintySource, dataset: &Dataset, n_random_actions: usize, max_states: usize, seed: u64) -> Result<OodAucReport> {
    if dataset.is_empty() || n_random_actions == 0 || max_states == 0 {
        return Err(Error::contract("ood_auc needs a dataset, random actions and states"));
    }
    let mut rng = rng_from_seed(seed);
    let k = max_states.min(dataset.len());
    let idx = rand::seq::index::sample(&mut rng, dataset.len(), k).into_vec();
    let picked: Vec<_> = idx.iter().map(|&i| dataset.transitions[i]).collect();
    let states = Matrix::from_vec(k, 4, picked.iter().flat_map(|t| t.s.to_array()).collect())?;
    let acts = Matrix::from_vec(k, ACTION_DIM, picked.iter().flat_map(|t| t.a.thrust).collect())?;
    let random: Vec<f64> = (0..k * n_random_actions * ACTION_DIM).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let random = Matrix::from_vec(k * n_random_actions, ACTION_DIM, random)?;
    let in_scores = unc.variances(&states.hconcat(&acts)?)?;
    let ood_scores = unc.variances(&states.repeat_rows(n_random_actions).hconcat(&random)?)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(OodAucReport {
        auc: roc_auc(&ood_scores, &in_scores)?,
        n_in: in_scores.len(),
        n_ood: ood_scores.len(),
        mean_in: mean(&in_scores),
        mean_ood: mean(&ood_scores),
        seed,
    })
}
