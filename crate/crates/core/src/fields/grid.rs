use crate::arch::{Device, FieldKind};

/// Uniform bin grid over the layout. Bin `(bx, by)` is stored at
/// `by * nx + bx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinGrid {
    pub nx: usize,
    pub ny: usize,
    pub bin_w: f64,
    pub bin_h: f64,
}

impl BinGrid {
    pub fn new(width: f64, height: f64, nx: usize, ny: usize) -> Self {
        BinGrid {
            nx,
            ny,
            bin_w: width / nx as f64,
            bin_h: height / ny as f64,
        }
    }

    /// Nearest power of two at or above `sqrt(instances)`, at least 32.
    pub fn default_bins(instances: usize) -> usize {
        let root = (instances as f64).sqrt().ceil() as usize;
        root.next_power_of_two().max(32)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.bin_w
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.bin_h
    }

    pub fn bin_area(&self) -> f64 {
        self.bin_w * self.bin_h
    }

    /// Pre-occupied area per bin for `field`: columns lacking the resource
    /// count as occupied.
    pub fn static_density(&self, device: &Device, field: FieldKind) -> Vec<f64> {
        let mut col_frac = vec![0.0; self.nx];
        for bx in 0..self.nx {
            let (b0, b1) = (bx as f64 * self.bin_w, (bx + 1) as f64 * self.bin_w);
            let first = b0.floor() as usize;
            let last = (b1.ceil() as usize).min(device.width);
            for x in first..last {
                let ov = (b1.min(x as f64 + 1.0) - b0.max(x as f64)).max(0.0);
                col_frac[bx] += ov * device.static_fraction(device.site_kind(x), field);
            }
        }
        let mut out = vec![0.0; self.len()];
        for row in out.chunks_exact_mut(self.nx) {
            for (v, f) in row.iter_mut().zip(&col_frac) {
                *v = f * self.bin_h;
            }
        }
        out
    }

    /// Footprint used to measure overflow: a square of the charge's area,
    /// at least one bin per axis.
    pub fn exact_footprint(&self, q: f64) -> (f64, f64) {
        let side = q.max(0.0).sqrt();
        (side.max(self.bin_w).min(self.width()), side.max(self.bin_h).min(self.height()))
    }

    /// Grid with `bins` rows and a whole number of bins per site column,
    /// at least `bins` in total, so column boundaries fall on bin edges.
    pub fn for_device(device: &Device, bins: usize) -> Self {
        let per_col = (bins as f64 / device.width as f64).ceil().max(1.0) as usize;
        BinGrid::new(device.width as f64, device.height as f64, device.width * per_col, bins)
    }

    /// Smoothed footprint for a charge: a square of the charge's area,
    /// stretched to at least `sqrt(2)` bins per axis.
    pub fn footprint(&self, q: f64) -> (f64, f64) {
        let side = q.max(0.0).sqrt();
        let s2 = std::f64::consts::SQRT_2;
        (
            side.max(s2 * self.bin_w).min(self.width()),
            side.max(s2 * self.bin_h).min(self.height()),
        )
    }
}

/// A rectangular charge of total `q`, centred at `(x, y)`, spread uniformly
/// over a `w x h` footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Charge {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub q: f64,
}

struct Span {
    lo: f64,
    hi: f64,
    first: usize,
    last: usize,
    clamped: bool,
}

fn span(center: f64, size: f64, bin: f64, n: usize) -> Span {
    let len = bin * n as f64;
    let half = 0.5 * size.min(len);
    let c = center.clamp(half, len - half);
    let clamped = c != center || !center.is_finite();
    let c = if c.is_finite() { c } else { 0.5 * len };
    let (lo, hi) = (c - half, c + half);
    let first = ((lo / bin).floor().max(0.0) as usize).min(n - 1);
    let last = (((hi / bin).ceil() as usize).max(first + 1) - 1).min(n - 1);
    Span { lo, hi, first, last, clamped }
}

fn overlap(s: &Span, b: usize, bin: f64) -> f64 {
    let (b0, b1) = (b as f64 * bin, (b + 1) as f64 * bin);
    (s.hi.min(b1) - s.lo.max(b0)).max(0.0)
}

/// Splats `charges` onto the grid on top of `static_density`, by overlap
/// area. Returns the density and the number of charges whose footprint had
/// to be clamped back inside the layout.
pub fn accumulate_density(grid: &BinGrid, static_density: &[f64], charges: &[Charge]) -> (Vec<f64>, usize) {
    let mut density = static_density.to_vec();
    let clamped = splat_into(grid, &mut density, charges);
    (density, clamped)
}

/// Adds `charges` to `density` in place; see [`accumulate_density`].
pub fn splat_into(grid: &BinGrid, density: &mut [f64], charges: &[Charge]) -> usize {
    let mut clamped = 0;
    let mut wx = Vec::new();
    for c in charges {
        if c.q == 0.0 {
            continue;
        }
        let sx = span(c.x, c.w, grid.bin_w, grid.nx);
        let sy = span(c.y, c.h, grid.bin_h, grid.ny);
        if sx.clamped || sy.clamped {
            clamped += 1;
        }
        let scale = c.q / ((sx.hi - sx.lo) * (sy.hi - sy.lo));
        wx.clear();
        wx.extend((sx.first..=sx.last).map(|bx| overlap(&sx, bx, grid.bin_w) * scale));
        for by in sy.first..=sy.last {
            let oy = overlap(&sy, by, grid.bin_h);
            let row = &mut density[by * grid.nx + sx.first..=by * grid.nx + sx.last];
            for (d, w) in row.iter_mut().zip(&wx) {
                *d += w * oy;
            }
        }
    }
    clamped
}

/// Exact derivative of `sum_b potential_b * density_b` with respect to the
/// charge centre.
///
/// Moving a uniform footprint right adds charge at its right edge and
/// removes it at the left edge, so the derivative is the potential
/// difference between the edge bins, weighted by the overlap along the other
/// axis. An axis whose centre is clamped at the layout border contributes
/// zero.
pub fn charge_gradient(grid: &BinGrid, potential: &[f64], c: &Charge) -> (f64, f64) {
    if c.q == 0.0 {
        return (0.0, 0.0);
    }
    let sx = span(c.x, c.w, grid.bin_w, grid.nx);
    let sy = span(c.y, c.h, grid.bin_h, grid.ny);
    let scale = c.q / ((sx.hi - sx.lo) * (sy.hi - sy.lo));
    let edge = |v: f64, bin: f64, n: usize| ((v / bin).floor().max(0.0) as usize).min(n - 1);

    let mut gx = 0.0;
    if !sx.clamped {
        let (bl, br) = (edge(sx.lo, grid.bin_w, grid.nx), edge(sx.hi, grid.bin_w, grid.nx));
        if bl != br {
            for by in sy.first..=sy.last {
                let oy = overlap(&sy, by, grid.bin_h);
                let row = by * grid.nx;
                gx += oy * (potential[row + br] - potential[row + bl]);
            }
        }
    }
    let mut gy = 0.0;
    if !sy.clamped {
        let (bb, bt) = (edge(sy.lo, grid.bin_h, grid.ny), edge(sy.hi, grid.bin_h, grid.ny));
        if bb != bt {
            for bx in sx.first..=sx.last {
                let ox = overlap(&sx, bx, grid.bin_w);
                gy += ox * (potential[bt * grid.nx + bx] - potential[bb * grid.nx + bx]);
            }
        }
    }
    (gx * scale, gy * scale)
}

/// Total overflow normalised by movable charge: the sum over bins of the
/// density exceeding the bin area.
pub fn overflow(grid: &BinGrid, density: &[f64], movable_charge: f64) -> f64 {
    if movable_charge <= 0.0 {
        return 0.0;
    }
    let cap = grid.bin_area();
    let excess: f64 = density.iter().map(|&d| (d - cap).max(0.0)).sum();
    excess / movable_charge
}
