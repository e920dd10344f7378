//! Density multiplier schedule.

use crate::arch::{FieldKind, PerField};

/// `zeta * wl_norm / density_norm` per field. Fields whose density gradient
/// vanishes keep `current` and are reported in the second value.
pub fn init_lambda(
    zeta: f64,
    wl_norm: f64,
    density_norm: &PerField<f64>,
    current: &PerField<f64>,
) -> (PerField<f64>, Vec<FieldKind>) {
    let mut lambda = *current;
    let mut skipped = Vec::new();
    for f in FieldKind::ALL {
        if density_norm[f] > 0.0 {
            lambda[f] = zeta * wl_norm / density_norm[f];
        } else {
            skipped.push(f);
        }
    }
    (lambda, skipped)
}

/// Normalized subgradient ascent on the multipliers with a geometrically
/// growing step.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSchedule {
    pub lambda: PerField<f64>,
    /// Multipliers at the last (re)initialisation; steps are relative to it
    /// so fields of very different energy scales grow at the same rate.
    pub base: PerField<f64>,
    /// Energies at the last (re)initialisation.
    pub phi0: PerField<f64>,
    pub mu: f64,
    pub mu_init: f64,
    pub beta: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub tau: f64,
    pub cap: f64,
    /// Per-field unit of the cap, the wirelength-to-density gradient ratio
    /// at the last (re)initialisation; 1 leaves the cap absolute.
    pub cap_unit: PerField<f64>,
}

impl LambdaSchedule {
    pub fn new(lambda: PerField<f64>, phi0: PerField<f64>, mu_init: f64, beta: f64, mu_lo: f64, mu_hi: f64, tau: f64, cap: f64) -> Self {
        LambdaSchedule {
            lambda,
            base: lambda,
            phi0,
            mu: mu_init,
            mu_init,
            beta,
            mu_lo,
            mu_hi,
            tau,
            cap,
            cap_unit: PerField::splat(1.0),
        }
    }

    /// Second-order weight `C_s = beta / phi0_s`.
    pub fn alm_coeff(&self, f: FieldKind) -> f64 {
        if self.phi0[f] > 0.0 {
            self.beta / self.phi0[f]
        } else {
            0.0
        }
    }

    /// Restarts from new multipliers and reference energies.
    pub fn reset(&mut self, lambda: PerField<f64>, phi0: PerField<f64>) {
        self.lambda = lambda;
        self.base = lambda;
        self.phi0 = phi0;
        self.mu = self.mu_init;
    }

    /// One ascent step given current energies. `theta` bounds each
    /// multiplier by `cap * cap_unit_s / theta_s`; inactive fields are left
    /// alone.
    pub fn step(&mut self, phi: &PerField<f64>, theta: &PerField<f64>, active: &PerField<bool>) {
        let mut g = PerField::zeros();
        let mut norm_phi = 0.0;
        for f in FieldKind::ALL {
            if active[f] && self.phi0[f] > 0.0 {
                let p = phi[f].max(0.0) / self.phi0[f];
                g[f] = p + 0.5 * self.beta * p * p;
                norm_phi += p * p;
            }
        }
        let norm_g = g.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm_g > 0.0 {
            for f in FieldKind::ALL {
                if active[f] {
                    let next = self.lambda[f] + self.mu * self.base[f] * g[f] / norm_g;
                    let bound = self.cap * self.cap_unit[f] / theta[f];
                    // the cap never pulls a multiplier down
                    self.lambda[f] = if next > bound { self.lambda[f].max(bound) } else { next };
                }
            }
        }
        let m = (self.tau * norm_phi.sqrt()).ln().max(0.0);
        self.mu *= self.mu_lo + (self.mu_hi - self.mu_lo) * m / (m + 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_scales_with_wirelength() {
        let dn = PerField::splat(4.0);
        let (a, _) = init_lambda(8e-5, 100.0, &dn, &PerField::zeros());
        let (b, _) = init_lambda(8e-5, 200.0, &dn, &PerField::zeros());
        assert!((b[FieldKind::Ff] - 2.0 * a[FieldKind::Ff]).abs() < 1e-18);
        let (z, _) = init_lambda(0.0, 100.0, &dn, &PerField::zeros());
        assert!(z.is_zero());
        let mut dn = dn;
        dn[FieldKind::Dsp] = 0.0;
        let (c, skipped) = init_lambda(1.0, 1.0, &dn, &PerField::splat(0.5));
        assert_eq!(skipped, vec![FieldKind::Dsp]);
        assert_eq!(c[FieldKind::Dsp], 0.5);
    }

    #[test]
    fn step_growth_bounds() {
        let mut s = LambdaSchedule::new(PerField::splat(1.0), PerField::splat(1.0), 0.1, 1.0, 1.05, 1.06, 1e3, 1e9);
        let active = PerField::splat(true);
        // tiny energies: minimum growth
        s.step(&PerField::splat(1e-9), &PerField::splat(1.0), &active);
        assert!((s.mu - 0.105).abs() < 1e-12);
        // large energies approach the upper growth
        let mu = s.mu;
        s.step(&PerField::splat(1e6), &PerField::splat(1.0), &active);
        assert!(s.mu / mu > 1.059 && s.mu / mu <= 1.06);
    }

    #[test]
    fn cap_bounds_multipliers() {
        let mut s = LambdaSchedule::new(PerField::splat(1.0), PerField::splat(1.0), 100.0, 1.0, 1.05, 1.06, 1e3, 10.0);
        s.step(&PerField::splat(1.0), &PerField::splat(2.0), &PerField::splat(true));
        assert_eq!(s.lambda, PerField::splat(5.0));
        s.cap_unit[FieldKind::Dsp] = 3.0;
        s.step(&PerField::splat(1.0), &PerField::splat(2.0), &PerField::splat(true));
        assert_eq!(s.lambda[FieldKind::Dsp], 15.0);
        assert_eq!(s.lambda[FieldKind::Ff], 5.0);
    }

    proptest! {
        #[test]
        fn multipliers_never_decrease(phis in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 6), 1..40)) {
            let mut s = LambdaSchedule::new(PerField::splat(0.01), PerField::splat(2.0), 0.05, 1.0, 1.05, 1.06, 1e3, 1e3);
            let mut prev = s.lambda;
            for p in phis {
                let mut phi = PerField::zeros();
                for (k, v) in p.into_iter().enumerate() {
                    phi.0[k] = v;
                }
                s.step(&phi, &PerField::splat(1.0), &PerField::splat(true));
                for f in FieldKind::ALL {
                    prop_assert!(s.lambda[f] >= prev[f]);
                }
                prev = s.lambda;
            }
        }
    }
}
