/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict_proba(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&z| sigmoid(z)).collect()
}

/// Mean binary cross-entropy of predicted probabilities.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(
        probs.len(),
        labels.len(),
        "probability/label length mismatch"
    );
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y == 1 { -p.ln() } else { -(-p).ln_1p() })
        .sum();
    total / probs.len() as f64
}

/// Mean binary cross-entropy computed from logits:
/// `max(z, 0) - y z + ln(1 + e^-|z|)`.
pub fn bce_with_logits(logits: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(logits.len(), labels.len(), "logit/label length mismatch");
    if logits.is_empty() {
        return 0.0;
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) - f64::from(y) * z + (-z.abs()).exp().ln_1p())
        .sum();
    total / logits.len() as f64
}
