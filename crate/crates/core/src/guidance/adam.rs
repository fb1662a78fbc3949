//! Adam update rule with bias-corrected moments.

use super::config::AdamParams;

/// First and second moment accumulators for one parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn iterations(&self) -> usize {
        self.t
    }

    /// One update with a per-parameter learning rate.
    pub fn step_grouped(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        rates: &[f64],
        ap: &AdamParams,
    ) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        assert_eq!(rates.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ap.beta1.powi(self.t as i32);
        let bc2 = 1.0 - ap.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ap.beta1 * self.m[i] + (1.0 - ap.beta1) * g;
            self.v[i] = ap.beta2 * self.v[i] + (1.0 - ap.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= rates[i] * m_hat / (v_hat.sqrt() + ap.epsilon);
        }
    }

    /// The signed increment this gradient would apply, for parameters that
    /// live on a manifold and cannot be updated componentwise in place.
    pub fn delta(&mut self, grads: &[f64], rates: &[f64], ap: &AdamParams) -> Vec<f64> {
        let mut increment = vec![0.0; grads.len()];
        self.step_grouped(&mut increment, grads, rates, ap);
        increment
    }

    /// One update with a shared learning rate.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], rate: f64, ap: &AdamParams) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ap.beta1.powi(self.t as i32);
        let bc2 = 1.0 - ap.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ap.beta1 * self.m[i] + (1.0 - ap.beta1) * g;
            self.v[i] = ap.beta2 * self.v[i] + (1.0 - ap.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= rate * m_hat / (v_hat.sqrt() + ap.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![1.0, -2.0, 0.5];
        let mut adam = AdamState::new(3);
        for _ in 0..10 {
            adam.step(&mut params, &[0.0, 0.0, 0.0], 0.1, &AdamParams::default());
        }
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let ap = AdamParams::default();
        let g = 0.3;
        let lr = 0.05;
        let mut params = vec![2.0];
        AdamState::new(1).step(&mut params, &[g], lr, &ap);
        // bias correction makes m_hat = g and v_hat = g^2 on the first step
        let expected = 2.0 - lr * g / (g.abs() + ap.epsilon);
        assert!((params[0] - expected).abs() < 1e-15);
        assert!((params[0] - (2.0 - lr)).abs() < 1e-6);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = [0.7, -1.3, 0.2, 2.0];
        let curvature = [1.0, 4.0, 0.25, 2.0];
        let mut params = vec![0.0; 4];
        let mut adam = AdamState::new(4);
        let ap = AdamParams::default();
        for _ in 0..500 {
            let grads: Vec<f64> = params
                .iter()
                .zip(&target)
                .zip(&curvature)
                .map(|((p, t), c)| 2.0 * c * (p - t))
                .collect();
            adam.step(&mut params, &grads, 0.05, &ap);
        }
        for (p, t) in params.iter().zip(&target) {
            assert!((p - t).abs() < 1e-4, "param {p} vs target {t}");
        }
    }

    #[test]
    fn grouped_rates_scale_each_block() {
        let ap = AdamParams::default();
        let mut params = vec![0.0, 0.0];
        let mut adam = AdamState::new(2);
        adam.step_grouped(&mut params, &[1.0, 1.0], &[0.1, 0.001], &ap);
        assert!((params[0] + 0.1).abs() < 1e-8);
        assert!((params[1] + 0.001).abs() < 1e-8);
    }
}
