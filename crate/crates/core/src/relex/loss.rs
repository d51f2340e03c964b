//! Multi-label loss with a learnable decision threshold `B`: positives are
//! pushed above `B + margin`, negatives below `B - margin`.

/// `Σ_j y_j max(0, B+γ-r_j)² + λ (1-y_j) max(0, r_j-(B-γ))²`.
pub fn sliding_margin_loss(scores: &[f64], gold: &[bool], threshold: f64, margin: f64, down_weight: f64) -> f64 {
    scores
        .iter()
        .zip(gold)
        .map(|(&r, &y)| {
            if y {
                (threshold + margin - r).max(0.0).powi(2)
            } else {
                down_weight * (r - (threshold - margin)).max(0.0).powi(2)
            }
        })
        .sum()
}

/// Gradients of [`sliding_margin_loss`] w.r.t. each score and the threshold.
pub fn sliding_margin_grad(scores: &[f64], gold: &[bool], threshold: f64, margin: f64, down_weight: f64) -> (Vec<f64>, f64) {
    let mut d_threshold = 0.0;
    let d_scores = scores
        .iter()
        .zip(gold)
        .map(|(&r, &y)| {
            if y {
                let m = (threshold + margin - r).max(0.0);
                d_threshold += 2.0 * m;
                -2.0 * m
            } else {
                let m = (r - (threshold - margin)).max(0.0);
                d_threshold -= 2.0 * down_weight * m;
                2.0 * down_weight * m
            }
        })
        .collect();
    (d_scores, d_threshold)
}
