use rand::Rng;

use crate::error::{Error, Result};

/// Draws the next token from one logits row.
///
/// `masked` (the BOS id) is never returned. Temperature 0 or `top_k == 1`
/// selects the argmax, lowest index on ties. Otherwise the `top_k` largest
/// logits are kept and sampled in proportion to `softmax(logits / temperature)`.
pub fn sample_next(logits: &[f32], temperature: f64, top_k: usize, masked: Option<usize>, rng: &mut impl Rng) -> Result<usize> {
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::Sampling(format!("temperature {temperature} must be finite and ≥ 0")));
    }
    if top_k == 0 || top_k > logits.len() {
        return Err(Error::Sampling(format!("top_k {top_k} must lie in 1..={}", logits.len())));
    }
    let mut cand: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .filter(|&(i, &l)| Some(i) != masked && l != f32::NEG_INFINITY)
        .map(|(i, &l)| (i, l as f64))
        .collect();
    if let Some(&(i, _)) = cand.iter().find(|(_, l)| l.is_nan()) {
        return Err(Error::Sampling(format!("logit {i} is NaN")));
    }
    if cand.is_empty() {
        return Err(Error::Sampling("every logit is -inf after masking".into()));
    }
    // Descending by logit, ascending by index among equals.
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if temperature == 0.0 || top_k == 1 {
        return Ok(cand[0].0);
    }
    cand.truncate(top_k);
    let max = cand[0].1 / temperature;
    let weights: Vec<f64> = cand.iter().map(|&(_, l)| (l / temperature - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&(i, _), &w) in cand.iter().zip(&weights) {
        if u < w {
            return Ok(i);
        }
        u -= w;
    }
    Ok(cand.last().expect("nonempty").0)
}
