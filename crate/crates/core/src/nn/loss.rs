use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Guarded MAPE training loss in percent and its gradient with respect to `pred`:
/// (100/n) sum |gt - pred| / (|gt| + eps).
///
/// The subgradient at `pred == gt` is taken as zero.
pub fn mape_loss<S: Scalar>(gt: ArrayView2<'_, S>, pred: ArrayView2<'_, S>, eps: S) -> Result<(S, Array2<S>)> {
    if gt.dim() != pred.dim() {
        return Err(Error::domain(format!(
            "loss shape mismatch: {:?} vs {:?}",
            gt.dim(),
            pred.dim()
        )));
    }
    if gt.is_empty() {
        return Err(Error::domain("loss needs at least one element"));
    }
    let scale = S::lit(100.0) / S::lit(gt.len() as f64);
    let mut loss = S::zero();
    let mut grad = Array2::zeros(gt.dim());
    Zip::from(&mut grad).and(&gt).and(&pred).for_each(|g, y, p| {
        let denom = y.abs() + eps;
        let diff = *y - *p;
        loss += diff.abs() / denom;
        *g = if diff > S::zero() {
            -scale / denom
        } else if diff < S::zero() {
            scale / denom
        } else {
            S::zero()
        };
    });
    Ok((loss * scale, grad))
}
