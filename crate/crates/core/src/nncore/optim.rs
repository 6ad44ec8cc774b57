use crate::error::{FsnError, Result};

/// Classical momentum SGD with L2 weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

/// One parameter tensor handed to the optimizer. `decay` is false for biases.
pub struct ParamMut<'a> {
    pub values: &'a mut [f64],
    pub decay: bool,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(FsnError::invalid(format!("learning rate {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(FsnError::invalid(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(FsnError::invalid(format!("weight decay {weight_decay}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

/// `v <- momentum * v - lr * (g + decay * p)`, then `p <- p + v`.
///
/// Velocity buffers are created on the first call and must keep matching the
/// parameter shapes afterwards.
pub fn sgd_update(
    params: &mut [ParamMut<'_>],
    grads: &[&[f64]],
    state: &mut OptimizerState,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(FsnError::shape(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.values.len() != g.len() {
            return Err(FsnError::shape(format!(
                "parameter {i}: {} values but {} gradients",
                p.values.len(),
                g.len()
            )));
        }
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
    } else if state.velocity.len() != params.len()
        || state
            .velocity
            .iter()
            .zip(params.iter())
            .any(|(v, p)| v.len() != p.values.len())
    {
        return Err(FsnError::shape("velocity buffers do not mirror parameters"));
    }
    let (lr, mu) = (state.learning_rate, state.momentum);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        let decay = if p.decay { state.weight_decay } else { 0.0 };
        for ((pv, gv), vv) in p.values.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vv = mu * *vv - lr * (gv + decay * *pv);
            *pv += *vv;
        }
    }
    Ok(())
}
