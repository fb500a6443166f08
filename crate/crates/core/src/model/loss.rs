use rayon::prelude::*;

use crate::error::{Error, Result};

use super::circle::DocumentInput;
use super::params::ModelParams;
use super::transmission::{backward_document, forward_document_recorded};

/// Softmax cross entropy of the positive entry, `−log(exp(s⁺) / Σ exp(s))`.
pub fn listwise_loss(scores: &[f64], positive: usize) -> f64 {
    listwise_loss_grad(scores, positive).0
}

/// Loss and its gradient with respect to the scores (`softmax − one_hot`).
pub fn listwise_loss_grad(scores: &[f64], positive: usize) -> (f64, Vec<f64>) {
    assert!(positive < scores.len(), "positive index out of range");
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (scores[positive] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[positive] -= 1.0;
    (loss, grad)
}

/// Scores a group, applies the listwise loss and back-propagates it.
pub fn group_loss_and_grad(
    params: &ModelParams,
    group: &[DocumentInput],
    positive: usize,
) -> Result<(f64, Vec<f64>)> {
    if group.is_empty() || positive >= group.len() {
        return Err(Error::InvalidConfig(
            "group must contain the positive index".into(),
        ));
    }
    let outputs = group
        .par_iter()
        .map(|doc| forward_document_recorded(doc, params))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = outputs.iter().map(|o| o.score).collect();
    let (loss, d_scores) = listwise_loss_grad(&scores, positive);
    let grad = group
        .par_iter()
        .zip(&outputs)
        .zip(&d_scores)
        .map(|((doc, out), &d)| {
            let mut g = params.zeros_like();
            if d != 0.0 {
                backward_document(doc, out, d, params, &mut g);
            }
            g
        })
        .reduce_with(|mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        })
        .unwrap_or_else(|| params.zeros_like());
    Ok((loss, grad))
}

/// Loss only, for finite differences and evaluation.
pub fn group_loss(params: &ModelParams, group: &[DocumentInput], positive: usize) -> Result<f64> {
    let scores = group
        .iter()
        .map(|doc| super::transmission::forward_document(doc, params).map(|o| o.score))
        .collect::<Result<Vec<_>>>()?;
    Ok(listwise_loss(&scores, positive))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores_give_log_group_size() {
        assert!((listwise_loss(&[0.3; 8], 0) - 8f64.ln()).abs() < 1e-12);
        assert!((listwise_loss(&[0.3; 8], 0) - 2.07944).abs() < 1e-5);
    }

    #[test]
    fn two_score_example() {
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((listwise_loss(&[1.0, 0.0], 0) - expected).abs() < 1e-15);
        assert!((listwise_loss(&[1.0, 0.0], 0) - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn dominant_positive_drives_loss_to_zero() {
        assert!(listwise_loss(&[1e3, 0.0, -1.0], 0) < 1e-300);
        assert!(listwise_loss(&[50.0, 0.0, 0.0], 0) < 1e-20);
    }

    #[test]
    fn gradient_is_softmax_minus_one_hot() {
        let scores = [0.5, -1.0, 2.0];
        let (_, g) = listwise_loss_grad(&scores, 1);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        let h = 1e-6;
        for i in 0..3 {
            let mut p = scores;
            p[i] += h;
            let mut m = scores;
            m[i] -= h;
            let fd = (listwise_loss(&p, 1) - listwise_loss(&m, 1)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn loss_is_non_negative(scores in proptest::collection::vec(-30.0f64..30.0, 1..10), pos in 0usize..10) {
            let pos = pos % scores.len();
            proptest::prop_assert!(listwise_loss(&scores, pos) >= 0.0);
        }
    }
}
