use crate::error::{Error, Result};

/// Per-tensor RMSProp state: a running average of squared gradients.
#[derive(Debug, Clone)]
pub struct RmsPropState {
    decay: f64,
    epsilon: f64,
    accum: Vec<f64>,
}

impl RmsPropState {
    pub fn new(len: usize, decay: f64, epsilon: f64) -> Self {
        assert!(decay > 0.0 && decay < 1.0, "decay must be in (0,1)");
        assert!(epsilon > 0.0, "epsilon must be positive");
        RmsPropState {
            decay,
            epsilon,
            accum: vec![0.0; len],
        }
    }

    pub fn accum(&self) -> &[f64] {
        &self.accum
    }
}

/// One RMSProp update:
///   acc <- decay * acc + (1 - decay) * g^2
///   p   <- p - rate * g / (sqrt(acc) + epsilon)
pub fn rmsprop_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut RmsPropState,
    rate: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.accum.len() {
        return Err(Error::ShapeMismatch(format!(
            "rmsprop_step: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.accum.len()
        )));
    }
    let d = state.decay;
    let eps = state.epsilon;
    for i in 0..params.len() {
        let g = grads[i];
        let a = d * state.accum[i] + (1.0 - d) * g * g;
        state.accum[i] = a;
        params[i] -= rate * g / (a.sqrt() + eps);
    }
    Ok(())
}

/// Linear decay from `initial_rate` at epoch 0 to exactly 0 at
/// `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial_rate: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(initial_rate: f64, total_epochs: usize) -> Self {
        assert!(initial_rate > 0.0, "initial rate must be positive");
        LrSchedule {
            initial_rate,
            total_epochs,
        }
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        if self.total_epochs == 0 || epoch >= self.total_epochs {
            return 0.0;
        }
        self.initial_rate * (1.0 - epoch as f64 / self.total_epochs as f64)
    }
}
