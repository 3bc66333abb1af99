//! Central finite-difference gradient checking.
//!
//! This is the independent oracle the test suites compare analytic gradients
//! against; it never touches the tape, only re-evaluates a black-box scalar
//! function at perturbed inputs.

/// Settings for a finite-difference comparison.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor when forming relative errors, so near-zero
    /// gradients are compared absolutely at this scale.
    pub scale_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-6,
            scale_floor: 1e-3,
        }
    }
}

impl GradCheck {
    /// Max relative error between `analytic` and central differences of `f`
    /// over every coordinate of `x`. `f` must be deterministic in `x`.
    pub fn max_rel_err(
        &self,
        mut f: impl FnMut(&[f64]) -> f64,
        x: &[f64],
        analytic: &[f64],
    ) -> f64 {
        assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
        let mut probe = x.to_vec();
        let mut worst = 0.0f64;
        for i in 0..probe.len() {
            let orig = probe[i];
            probe[i] = orig + self.step;
            let hi = f(&probe);
            probe[i] = orig - self.step;
            let lo = f(&probe);
            probe[i] = orig;
            let fd = (hi - lo) / (2.0 * self.step);
            let denom = analytic[i].abs().max(fd.abs()).max(self.scale_floor);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
        worst
    }
}
