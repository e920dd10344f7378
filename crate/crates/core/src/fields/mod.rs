//! Multi-field electrostatic density model.
//!
//! Every [`FieldKind`] owns its own charge distribution on a shared bin grid.
//! Columns that do not provide a field's resource are pre-charged as fully
//! occupied, so a SHIFT instance (which charges both LUTL and LUTM-AL) sitting
//! on a SLICEL column overflows the LUTM-AL field while a plain LUT does not.

mod grid;
mod poisson;

use rand::Rng;

pub use grid::{accumulate_density, charge_gradient, overflow, splat_into, BinGrid, Charge};
pub use poisson::{FieldSolution, PoissonSolver};

use crate::arch::{Device, FieldKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FieldState {
    pub kind: FieldKind,
    pub grid: BinGrid,
    pub static_density: Vec<f64>,
    /// Static plus instance charge at unsmoothed footprints; the overflow
    /// measure.
    pub instance_density: Vec<f64>,
    /// Static, instance and filler charge; the source of the potential.
    pub density: Vec<f64>,
    pub potential: Vec<f64>,
    pub energy: f64,
    /// Density multiplier lambda.
    pub multiplier: f64,
    /// Second-order ALM coefficient C.
    pub alm_coeff: f64,
    pub fillers: Vec<Charge>,
    pub movable_charge: f64,
    pub clamped: usize,
}

impl FieldState {
    pub fn new(kind: FieldKind, grid: BinGrid, device: &Device) -> Self {
        let static_density = grid.static_density(device, kind);
        FieldState {
            kind,
            grid,
            instance_density: static_density.clone(),
            density: static_density.clone(),
            potential: vec![0.0; grid.len()],
            static_density,
            energy: 0.0,
            multiplier: 0.0,
            alm_coeff: 0.0,
            fillers: Vec::new(),
            movable_charge: 0.0,
            clamped: 0,
        }
    }

    /// Area available to movable charge: bin capacity minus static charge.
    pub fn free_area(&self) -> f64 {
        let cap = self.grid.bin_area() * self.grid.len() as f64;
        cap - self.static_density.iter().sum::<f64>()
    }

    /// Accumulates instance and filler charge and solves for the potential.
    pub fn update(&mut self, solver: &PoissonSolver, charges: &[Charge]) -> Result<()> {
        self.density.copy_from_slice(&self.static_density);
        self.clamped = splat_into(&self.grid, &mut self.density, charges);
        splat_into(&self.grid, &mut self.density, &self.fillers);
        self.movable_charge = charges.iter().map(|c| c.q).sum();
        self.instance_density.copy_from_slice(&self.static_density);
        let exact: Vec<Charge> = charges
            .iter()
            .map(|c| {
                let (w, h) = self.grid.exact_footprint(c.q);
                Charge { w, h, ..*c }
            })
            .collect();
        splat_into(&self.grid, &mut self.instance_density, &exact);
        let sol = solver.solve(&self.density)?;
        self.potential = sol.potential;
        self.energy = sol.energy;
        Ok(())
    }

    pub fn overflow(&self) -> f64 {
        overflow(&self.grid, &self.instance_density, self.movable_charge)
    }

    /// `Phi + C/2 Phi^2`.
    pub fn alm_term(&self) -> f64 {
        self.energy + 0.5 * self.alm_coeff * self.energy * self.energy
    }

    /// Derivative of `lambda (Phi + C/2 Phi^2)` with respect to `Phi`.
    pub fn alm_scale(&self) -> f64 {
        self.multiplier * (1.0 + self.alm_coeff * self.energy)
    }

    /// Gradient of this field's energy `Phi` with respect to a charge centre.
    pub fn energy_gradient(&self, c: &Charge) -> (f64, f64) {
        charge_gradient(&self.grid, &self.potential, c)
    }
}

/// Gradient of `sum_s lambda_s (Phi_s + C_s/2 Phi_s^2)` with respect to the
/// position of an instance with the given per-field charges.
pub fn density_gradient(charges: &[(FieldKind, Charge)], fields: &[FieldState]) -> (f64, f64) {
    let mut g = (0.0, 0.0);
    for (kind, c) in charges {
        let f = &fields[kind.index()];
        let scale = f.alm_scale();
        if scale == 0.0 {
            continue;
        }
        let (gx, gy) = f.energy_gradient(c);
        g.0 += scale * gx;
        g.1 += scale * gy;
    }
    g
}

/// Creates filler charges that soak up `capacity - demand` area, each about
/// one bin in size, at uniformly random positions.
pub fn insert_fillers<R: Rng>(
    kind: FieldKind,
    grid: &BinGrid,
    capacity: f64,
    demand: f64,
    rng: &mut R,
) -> Result<Vec<Charge>> {
    let free = capacity - demand;
    let tol = 1e-9 * capacity.abs().max(1.0);
    if free < -tol {
        return Err(Error::Infeasible {
            field: kind,
            demand,
            capacity,
        });
    }
    if free <= tol {
        return Ok(Vec::new());
    }
    let count = (free / grid.bin_area() - 1e-9).ceil().max(1.0) as usize;
    let q = free / count as f64;
    let (w, h) = grid.footprint(q);
    Ok((0..count)
        .map(|_| Charge {
            x: rng.gen_range(0.5 * w..=grid.width() - 0.5 * w),
            y: rng.gen_range(0.5 * h..=grid.height() - 0.5 * h),
            w,
            h,
            q,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{InstKind, SiteKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fillers_soak_up_free_capacity() {
        let grid = BinGrid::new(8.0, 8.0, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(insert_fillers(FieldKind::Ff, &grid, 100.0, 100.0, &mut rng).unwrap().is_empty());
        let f = insert_fillers(FieldKind::Ff, &grid, 100.0, 60.0, &mut rng).unwrap();
        let total: f64 = f.iter().map(|c| c.q).sum();
        assert!((total - 40.0).abs() < 1e-9);
        assert_eq!(f.len(), 40);
        assert!(f.iter().all(|c| c.x >= 0.0 && c.x <= 8.0 && c.y >= 0.0 && c.y <= 8.0));
        let err = insert_fillers(FieldKind::Dsp, &grid, 10.0, 12.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Infeasible { field: FieldKind::Dsp, .. }));
    }

    /// Two columns (SLICEL, SLICEM) of four sites, one bin per site.
    fn slice_pair() -> (Device, BinGrid) {
        let dev = Device::new(2, 4, vec![SiteKind::Slicel, SiteKind::Slicem], 1, 1).unwrap();
        (dev, BinGrid::new(2.0, 4.0, 2, 4))
    }

    fn site_charges(dev: &Device, kind: InstKind, field: FieldKind, x: f64) -> Vec<Charge> {
        // an instance that fills its slot on the site: demand scaled by unit area
        // times the slots of the site, so one instance represents a full site
        let per_site = dev.capacity(SiteKind::Slicem)[field];
        let q = kind.demand()[field] * dev.unit_area(field) * per_site;
        if q == 0.0 {
            return Vec::new();
        }
        vec![Charge { x, y: 0.5, w: 1.0, h: 1.0, q }]
    }

    fn lutm_overflow(lut_x: f64, shift_x: f64) -> f64 {
        let (dev, grid) = slice_pair();
        let field = FieldKind::LutmAl;
        let mut charges = site_charges(&dev, InstKind::Lut, field, lut_x);
        charges.extend(site_charges(&dev, InstKind::Shift, field, shift_x));
        let stat = grid.static_density(&dev, field);
        let (d, _) = accumulate_density(&grid, &stat, &charges);
        let movable: f64 = charges.iter().map(|c| c.q).sum();
        overflow(&grid, &d, movable)
    }

    #[test]
    fn shift_on_slicel_overflows_lutm() {
        // columns: x=0.5 SLICEL, x=1.5 SLICEM
        let (l, m) = (0.5, 1.5);
        // LUT on SLICEL / SHIFT on SLICEM, and LUT on SLICEM / SHIFT on SLICEM
        assert_eq!(lutm_overflow(l, m), 0.0);
        assert_eq!(lutm_overflow(m, m), 0.0);
        // SHIFT on SLICEL
        assert!(lutm_overflow(m, l) > 0.0);
        assert!(lutm_overflow(l, l) > 0.0);
    }

    #[test]
    fn density_gradient_edge_cases() {
        let (dev, grid) = slice_pair();
        let solver = PoissonSolver::new(&grid);
        let mut fields: Vec<FieldState> = FieldKind::ALL
            .iter()
            .map(|&k| FieldState::new(k, grid, &dev))
            .collect();
        let c = Charge { x: 0.9, y: 1.3, w: 1.0, h: 1.0, q: 0.5 };
        for f in fields.iter_mut() {
            f.update(&solver, &[c]).unwrap();
            f.multiplier = 2.0;
        }
        assert_eq!(density_gradient(&[], &fields), (0.0, 0.0));

        let ff = &mut fields[FieldKind::Ff.index()];
        ff.alm_coeff = 0.0;
        let raw = ff.energy_gradient(&c);
        let g = density_gradient(&[(FieldKind::Ff, c)], &fields);
        assert!((g.0 - 2.0 * raw.0).abs() < 1e-15 && (g.1 - 2.0 * raw.1).abs() < 1e-15);
        assert!(raw.0 != 0.0 || raw.1 != 0.0);
    }
}
