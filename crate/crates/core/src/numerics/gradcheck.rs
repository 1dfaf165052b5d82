use std::fmt;

use super::params::{Gradients, ParamStore};
use crate::error::Result;

/// Gradient magnitude, per unit of loss, below which central differences
/// are dominated by rounding.
pub const FLOOR_PER_UNIT_LOSS: f64 = 1e-6;

/// Comparison of analytic and central-difference gradients for one
/// parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub num_values: usize,
    pub max_abs_err: f64,
    /// `max|analytic - numeric| / max(max|analytic|, max|numeric|, floor)`
    /// over the tensor, with `floor` from [`GradCheckReport::floor`].
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
    /// True when the gradient is below the floor, so that the error is
    /// measured against the floor rather than the gradient itself (for
    /// example an attention key bias, whose gradient is identically zero).
    pub at_floor: bool,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    /// Smallest gradient scale errors are measured against:
    /// [`FLOOR_PER_UNIT_LOSS`]` · max(|loss|, 1)`.
    pub floor: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<48} n={:<6} rel={:.3e} abs={:.3e} |g|max={:.3e} {}{}",
                p.name,
                p.num_values,
                p.max_rel_err,
                p.max_abs_err,
                p.max_abs_grad,
                if p.passed { "ok" } else { "FAIL" },
                if p.at_floor { " (floor)" } else { "" }
            )?;
        }
        Ok(())
    }
}

/// Check `objective`'s analytic gradient against central differences for
/// every parameter.
///
/// `objective(params, want_grad)` must be deterministic; it returns the loss
/// and, when `want_grad` is set, the analytic gradient. Mismatches are
/// reported, not raised; only errors from the objective itself propagate.
pub fn grad_check<F>(params: &ParamStore, objective: F, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, bool) -> Result<(f64, Option<Gradients>)>,
{
    let (loss, analytic) = objective(params, true)?;
    let floor = FLOOR_PER_UNIT_LOSS * loss.abs().max(1.0);
    let analytic = analytic.unwrap_or_default();
    let mut work = params.clone();
    let mut checks = Vec::with_capacity(params.len());

    for id in params.ids() {
        let n = params.value(id).len();
        let zero;
        let a = match analytic.get(id) {
            Some(t) => t.data(),
            None => {
                zero = vec![0.0; n];
                &zero
            }
        };
        let mut max_abs_err: f64 = 0.0;
        let mut max_a: f64 = 0.0;
        let mut max_n: f64 = 0.0;
        for j in 0..n {
            let orig = work.value(id).data()[j];
            work.value_mut(id).data_mut()[j] = orig + step;
            let (plus, _) = objective(&work, false)?;
            work.value_mut(id).data_mut()[j] = orig - step;
            let (minus, _) = objective(&work, false)?;
            work.value_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            max_abs_err = max_abs_err.max((a[j] - numeric).abs());
            max_a = max_a.max(a[j].abs());
            max_n = max_n.max(numeric.abs());
        }
        let scale = max_a.max(max_n);
        let max_rel_err = max_abs_err / scale.max(floor);
        checks.push(ParamCheck {
            name: params.get(id).name.clone(),
            num_values: n,
            max_abs_err,
            max_rel_err,
            max_abs_grad: max_a,
            at_floor: scale < floor,
            passed: max_rel_err < tolerance && max_rel_err.is_finite(),
        });
    }
    Ok(GradCheckReport {
        step,
        tolerance,
        floor,
        params: checks,
    })
}
