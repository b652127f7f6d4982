use super::NetError;

fn masked_sum<P: AsRef<[f64]>, L: AsRef<[f64]>>(
    pred: &[P],
    label: &[L],
    valid: &[bool],
) -> Result<(f64, usize), NetError> {
    if pred.len() != label.len() || pred.len() != valid.len() {
        return Err(NetError::ShapeMismatch(format!(
            "{} prediction lanes, {} label lanes, {} flags",
            pred.len(),
            label.len(),
            valid.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0;
    for ((p, l), &v) in pred.iter().zip(label).zip(valid) {
        let (p, l) = (p.as_ref(), l.as_ref());
        if p.len() != l.len() {
            return Err(NetError::ShapeMismatch(format!(
                "lane with {} predictions and {} labels",
                p.len(),
                l.len()
            )));
        }
        if !v {
            continue;
        }
        sum += p.iter().zip(l).map(|(a, b)| (b - a) * (b - a)).sum::<f64>();
        n += p.len();
    }
    Ok((sum, n))
}

/// `L = (1/2N) Σ (s − ŝ)²` over the entries of valid lanes, `N` their
/// count. Zero when nothing is valid.
pub fn masked_mse<P: AsRef<[f64]>, L: AsRef<[f64]>>(
    pred: &[P],
    label: &[L],
    valid: &[bool],
) -> Result<f64, NetError> {
    let (sum, n) = masked_sum(pred, label, valid)?;
    Ok(if n == 0 { 0.0 } else { sum / (2.0 * n as f64) })
}

/// Conventional root-mean-square error over valid entries (no ½ factor).
pub fn masked_rmse<P: AsRef<[f64]>, L: AsRef<[f64]>>(
    pred: &[P],
    label: &[L],
    valid: &[bool],
) -> Result<f64, NetError> {
    let (sum, n) = masked_sum(pred, label, valid)?;
    Ok(if n == 0 { 0.0 } else { (sum / n as f64).sqrt() })
}
