//! Pin-density area inflation.

use crate::arch::{FieldKind, Netlist, PerField};
use crate::fields::BinGrid;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InflationReport {
    pub inflated: usize,
    /// Fraction of the requested growth that fit; 1 when nothing was cut.
    pub kept: f64,
}

/// Signal pins per unit area in each bin, with pins counted at their
/// instance centre.
pub fn pin_density(grid: &BinGrid, netlist: &Netlist, xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; grid.len()];
    let inv = 1.0 / grid.bin_area();
    for (i, &pins) in netlist.pin_counts().iter().enumerate() {
        if pins > 0 {
            d[bin_of(grid, xs[i], ys[i])] += pins as f64 * inv;
        }
    }
    d
}

fn bin_of(grid: &BinGrid, x: f64, y: f64) -> usize {
    let bx = ((x / grid.bin_w).floor().max(0.0) as usize).min(grid.nx - 1);
    let by = ((y / grid.bin_h).floor().max(0.0) as usize).min(grid.ny - 1);
    by * grid.nx + bx
}

/// Scales movable instance areas by `clamp(proxy / target, 1, 2)`, where the
/// proxy is the pin density of the instance's bin and the target is
/// `target_factor` times the layout average.
///
/// `charge(i)` is the per-field charge of instance `i` at unit area and
/// `free` the area available to each field. When the grown areas would not
/// fit, every instance keeps the same fraction of its growth so that the
/// tightest field is exactly full.
pub fn inflate_areas(
    grid: &BinGrid,
    netlist: &Netlist,
    xs: &[f64],
    ys: &[f64],
    areas: &mut [f64],
    target_factor: f64,
    charge: impl Fn(usize) -> PerField<f64>,
    free: &PerField<f64>,
) -> InflationReport {
    let density = pin_density(grid, netlist, xs, ys);
    let total: f64 = density.iter().sum::<f64>() / density.len().max(1) as f64;
    let target = target_factor * total;
    if target <= 0.0 {
        return InflationReport { inflated: 0, kept: 1.0 };
    }
    let grown: Vec<f64> = (0..areas.len())
        .map(|i| {
            if netlist.instances[i].fixed {
                return areas[i];
            }
            let f = (density[bin_of(grid, xs[i], ys[i])] / target).clamp(1.0, 2.0);
            areas[i] * f
        })
        .collect();

    let mut kept: f64 = 1.0;
    for f in FieldKind::ALL {
        let (mut used, mut extra) = (0.0, 0.0);
        for i in 0..areas.len() {
            let q = charge(i)[f];
            used += q * areas[i];
            extra += q * (grown[i] - areas[i]);
        }
        if extra > 0.0 && used + extra > free[f] {
            kept = kept.min(((free[f] - used) / extra).max(0.0));
        }
    }
    let mut inflated = 0;
    for i in 0..areas.len() {
        let next = areas[i] + kept * (grown[i] - areas[i]);
        if next > areas[i] {
            inflated += 1;
            areas[i] = next;
        }
    }
    InflationReport { inflated, kept }
}
