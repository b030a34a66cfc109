//! Central-difference verification of analytic gradients.

use super::tensor::Tensor;
use crate::error::Result;

/// Compare the analytic gradient of a scalar function against central finite
/// differences.
///
/// `f` returns the scalar value and the analytic gradient with respect to
/// its input. Returns the max over coordinates of
/// `|analytic - central_difference| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let (_, analytic) = f(x)?;
    assert_eq!(analytic.shape(), x.shape(), "gradient shape must match input");
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let (fp, _) = f(&xp)?;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let (fm, _) = f(&xm)?;
        let fd = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - fd).abs() / a.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub const DEFAULT_STEP: f64 = 1e-5;
