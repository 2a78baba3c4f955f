use ndarray::{Array2, ArrayView2};

/// Row-wise log-softmax.
pub fn log_softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyLoss {
    /// `−mean(min(ρA, clip(ρ)A))`
    pub surrogate: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped surrogate plus entropy bonus, and its gradient with respect to the logits.
///
/// The minimised objective is `surrogate − entropy_coef · entropy`, both
/// averaged over the rows.
pub fn policy_loss(
    logits: ArrayView2<'_, f64>,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    entropy_coef: f64,
) -> (PolicyLoss, Array2<f64>) {
    let m = logits.nrows() as f64;
    let logp = log_softmax(logits);
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut stats = PolicyLoss::default();
    for (i, row) in logp.rows().into_iter().enumerate() {
        let a = actions[i];
        let adv = advantages[i];
        let log_ratio = row[a] - old_log_probs[i];
        let ratio = log_ratio.exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
        stats.surrogate -= unclipped.min(clipped) / m;
        stats.approx_kl += (ratio - 1.0 - log_ratio) / m;
        if (ratio - 1.0).abs() > clip_eps {
            stats.clip_fraction += 1.0 / m;
        }
        let entropy: f64 = -row.iter().map(|&lp| lp.exp() * lp).sum::<f64>();
        stats.entropy += entropy / m;

        // d(−ρA)/dlogπ_a = −ρA where the unclipped branch is the minimum
        let d_logp = if unclipped <= clipped { -unclipped / m } else { 0.0 };
        let mut g = grad.row_mut(i);
        for (k, &lp) in row.iter().enumerate() {
            let p = lp.exp();
            let onehot = if k == a { 1.0 } else { 0.0 };
            // dH/dz_k = −p_k (log p_k + H); the objective subtracts the entropy term
            g[k] = d_logp * (onehot - p) + entropy_coef * p * (lp + entropy) / m;
        }
    }
    (stats, grad)
}

/// `0.5 · mean((v − target)²)` and its gradient with respect to `v`.
pub fn value_loss(values: ArrayView2<'_, f64>, targets: &[f64]) -> (f64, Array2<f64>) {
    let m = values.nrows() as f64;
    let mut grad = Array2::zeros(values.raw_dim());
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let d = values[[i, 0]] - t;
        loss += 0.5 * d * d / m;
        grad[[i, 0]] = d / m;
    }
    (loss, grad)
}
