//! Rectified Adam.
//!
//! With `rho_inf = 2/(1-b2) - 1` and `rho_t = rho_inf - 2 t b2^t / (1 - b2^t)`,
//! the adaptive step is taken only once `rho_t > 4`, scaled by
//!
//! ```text
//! r_t = sqrt((rho_t - 4)(rho_t - 2) rho_inf / ((rho_inf - 4)(rho_inf - 2) rho_t))
//! ```
//!
//! Before that the update is plain bias-corrected momentum.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    /// Number of updates applied so far.
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    /// Zeroed moments with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(len: usize) -> Self {
        Self::with_hyper(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1,
            beta2,
            eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        if !open_unit(self.beta1) || !open_unit(self.beta2) {
            return Err(Error::InvalidConfig("optimizer betas must lie in (0, 1)".into()));
        }
        if self.m.len() != self.v.len() {
            return Err(Error::Shape("optimizer moments differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadamStep {
    /// The step index t (1-based) this update used.
    pub t: u64,
    pub rho: f64,
    pub rectified: bool,
}

pub fn rho_t(beta2: f64, t: u64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powi(t as i32);
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

pub fn radam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, lr: f64) -> Result<RadamStep> {
    state.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "params ({}), grads ({}) and moments ({}) differ in length",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate {lr} must be finite and non-negative"
        )));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }

    let t = state.step + 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = 1.0 - b1.powi(t as i32);
    let bias2 = 1.0 - b2.powi(t as i32);
    let rho_inf = 2.0 / (1.0 - b2) - 1.0;
    let rho = rho_t(b2, t);
    let rectified = rho > 4.0;
    let r = if rectified {
        ((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt()
    } else {
        0.0
    };

    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bias1;
        let update = if rectified {
            let adaptive = bias2.sqrt() / (state.v[i].sqrt() + state.eps);
            r * m_hat * adaptive
        } else {
            m_hat
        };
        params[i] -= lr * update;
    }
    state.step = t;
    Ok(RadamStep { t, rho, rectified })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_momentum_only() {
        assert!((rho_t(0.999, 1) - 1.0).abs() < 1e-9);
        let mut p = vec![1.0, -1.0];
        let mut s = OptimizerState::new(2);
        let info = radam_step(&mut p, &[0.5, -2.0], &mut s, 0.1).unwrap();
        assert!(!info.rectified);
        // m_hat equals the gradient on the first step
        assert!((p[0] - 0.95).abs() < 1e-15);
        assert!((p[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_still_advances_state() {
        let mut p = vec![1.0, 2.0];
        let mut s = OptimizerState::new(2);
        radam_step(&mut p, &[1.0, 1.0], &mut s, 0.0).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step, 1);
        assert!(s.m.iter().all(|&m| m != 0.0));
    }

    #[test]
    fn non_finite_gradient_leaves_state_unchanged() {
        let mut p = vec![1.0, 2.0];
        let mut s = OptimizerState::new(2);
        radam_step(&mut p, &[1.0, 1.0], &mut s, 0.1).unwrap();
        let before = (p.clone(), s.clone());
        let err = radam_step(&mut p, &[f64::NAN, 1.0], &mut s, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 0 }));
        assert_eq!((p, s), before);
    }
}
