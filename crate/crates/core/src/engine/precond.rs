//! Divergence-aware diagonal preconditioning.

use crate::arch::{FieldKind, Netlist, PerField};

/// Wirelength curvature estimate per instance: `sum_e w_e / (|e| - 1)` over
/// incident signal nets.
pub fn wl_preconditioner(netlist: &Netlist, weights: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; netlist.num_instances()];
    for (e, net) in netlist.signal_nets() {
        let share = weights[e] / (net.pins.len() - 1) as f64;
        for pin in &net.pins {
            p[pin.inst] += share;
        }
    }
    p
}

/// Per-field balance factors.
///
/// `theta_s = max(1, density_norm_s / wl_norm_s)` compares the density and
/// wirelength gradient magnitudes on the instances of field `s`, and
/// `alpha_s = theta_s * mean_pw_s`. A field without instances keeps
/// `theta_s = 1`.
pub fn dynamic_alpha(
    density_norm: &PerField<f64>,
    wl_norm: &PerField<f64>,
    mean_pw: &PerField<f64>,
    populated: &PerField<bool>,
) -> (PerField<f64>, PerField<f64>) {
    let mut theta = PerField::splat(1.0);
    let mut alpha = PerField::zeros();
    for f in FieldKind::ALL {
        if populated[f] && wl_norm[f] > 0.0 {
            theta[f] = (density_norm[f] / wl_norm[f]).max(1.0);
        }
        alpha[f] = theta[f] * mean_pw[f];
    }
    (theta, alpha)
}

/// `max(1, 1 / (pw + sum_s alpha_s lambda_s area_s))`; a zero denominator
/// yields 1.
pub fn precondition_factor(pw: f64, alpha: &PerField<f64>, lambda: &PerField<f64>, area: &PerField<f64>) -> f64 {
    let mut den = pw;
    for f in FieldKind::ALL {
        den += alpha[f] * lambda[f] * area[f];
    }
    if den > 0.0 {
        (1.0 / den).max(1.0)
    } else {
        1.0
    }
}

/// `1 / max(1, pw + sum_s alpha_s lambda_s area_s)`, the damping form of
/// the same denominator.
pub fn jacobi_factor(pw: f64, alpha: &PerField<f64>, lambda: &PerField<f64>, area: &PerField<f64>) -> f64 {
    let mut den = pw;
    for f in FieldKind::ALL {
        den += alpha[f] * lambda[f] * area[f];
    }
    1.0 / den.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{InstKind, Pin};

    fn pin(inst: usize) -> Pin {
        Pin { inst, dx: 0.0, dy: 0.0 }
    }

    #[test]
    fn wirelength_preconditioner_values() {
        let mut nl = Netlist::new();
        for i in 0..5 {
            nl.add_instance(format!("i{i}"), InstKind::Lut);
        }
        nl.add_net("a", vec![pin(0), pin(1)], false);
        nl.add_net("b", vec![pin(2), pin(3), pin(4)], false);
        nl.add_net("c", vec![pin(2), pin(0)], false);
        nl.add_net("single", vec![pin(1)], false);
        let p = wl_preconditioner(&nl, &[1.0, 2.0, 1.0, 5.0]);
        assert_eq!(p[1], 1.0);
        assert_eq!(p[2], 2.0 / 2.0 + 1.0);
        assert_eq!(p[3], 1.0);

        let mut lonely = Netlist::new();
        lonely.add_instance("x", InstKind::Ff);
        assert_eq!(wl_preconditioner(&lonely, &[]), vec![0.0]);
    }

    #[test]
    fn alpha_balances_gradient_norms() {
        let populated = PerField::splat(true);
        let mean_pw = PerField::splat(2.0);
        let (theta, alpha) = dynamic_alpha(&PerField::splat(3.0), &PerField::splat(5.0), &mean_pw, &populated);
        assert_eq!(theta, PerField::splat(1.0));
        assert_eq!(alpha, PerField::splat(2.0));

        let (theta, _) = dynamic_alpha(&PerField::splat(50.0), &PerField::splat(5.0), &mean_pw, &populated);
        assert_eq!(theta, PerField::splat(10.0));

        let (_, a1) = dynamic_alpha(&PerField::splat(50.0), &PerField::splat(5.0), &PerField::splat(1.0), &populated);
        let (_, a3) = dynamic_alpha(&PerField::splat(50.0), &PerField::splat(5.0), &PerField::splat(3.0), &populated);
        assert_eq!(a3[FieldKind::Ff], 3.0 * a1[FieldKind::Ff]);

        let (theta, alpha) = dynamic_alpha(&PerField::splat(50.0), &PerField::splat(5.0), &mean_pw, &PerField::splat(false));
        assert_eq!(theta, PerField::splat(1.0));
        assert_eq!(alpha, mean_pw);
    }

    #[test]
    fn factor_clamps_at_one() {
        let zero = PerField::zeros();
        assert_eq!(precondition_factor(3.0, &zero, &zero, &zero), 1.0);
        assert_eq!(precondition_factor(0.25, &zero, &zero, &zero), 4.0);
        assert_eq!(precondition_factor(0.0, &zero, &zero, &zero), 1.0);
        let mut area = PerField::zeros();
        area[FieldKind::Lutl] = 0.125;
        let p = precondition_factor(0.1, &PerField::splat(2.0), &PerField::splat(0.6), &area);
        assert!((p - 1.0 / (0.1 + 0.15)).abs() < 1e-12);
    }

    #[test]
    fn jacobi_factor_damps() {
        let zero = PerField::zeros();
        assert_eq!(jacobi_factor(4.0, &zero, &zero, &zero), 0.25);
        assert_eq!(jacobi_factor(0.25, &zero, &zero, &zero), 1.0);
        assert_eq!(jacobi_factor(0.0, &zero, &zero, &zero), 1.0);
        let mut area = PerField::zeros();
        area[FieldKind::Lutl] = 0.5;
        let p = jacobi_factor(1.0, &PerField::splat(2.0), &PerField::splat(3.0), &area);
        assert!((p - 0.25).abs() < 1e-12);
    }
}
