use crate::error::{FsnError, Result};

/// Central-difference step used by every check in this crate.
pub const FD_STEP: f64 = 1e-4;

/// Relative errors are measured against `max(|a|, |n|, ABS_FLOOR)` so that
/// gradients that are zero up to rounding are not scored as relative noise.
pub const ABS_FLOOR: f64 = 1e-6;

/// A scalar function with an analytic gradient.
pub trait Objective {
    fn value(&self, params: &[f64]) -> Result<f64>;

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>>;

    /// Identifier of the smooth piece containing `params`, e.g. a hash of the
    /// ReLU activation pattern. Coordinates whose `+h`/`-h` probes land in
    /// different pieces straddle a kink and are skipped.
    fn region(&self, _params: &[f64]) -> u64 {
        0
    }

    /// Value and region together; override when both come from one pass.
    fn probe(&self, params: &[f64]) -> Result<(f64, u64)> {
        Ok((self.value(params)?, self.region(params)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index with the largest error.
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates skipped because the probe crossed a non-differentiable point.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Compares the analytic gradient of `objective` at `params` with central
/// differences on every coordinate.
pub fn gradient_check(
    objective: &impl Objective,
    params: &[f64],
    tolerance: f64,
) -> Result<GradCheckReport> {
    let base = objective.value(params)?;
    if !base.is_finite() {
        return Err(FsnError::NonFinite(format!("objective value {base}")));
    }
    let analytic = objective.gradient(params)?;
    if analytic.len() != params.len() {
        return Err(FsnError::shape(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        checked: 0,
        skipped: 0,
        tolerance,
    };
    for i in 0..params.len() {
        probe[i] = params[i] + FD_STEP;
        let (plus, region_plus) = objective.probe(&probe)?;
        probe[i] = params[i] - FD_STEP;
        let (minus, region_minus) = objective.probe(&probe)?;
        probe[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(FsnError::NonFinite(format!("objective at probe {i}")));
        }
        if region_plus != region_minus {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// FNV-1a over the sign pattern of a slice; used as a piece identifier for
/// ReLU networks.
pub fn sign_pattern_hash<'a>(values: impl IntoIterator<Item = &'a f64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        h ^= (*v > 0.0) as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
