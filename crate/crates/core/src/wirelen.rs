//! Wirelength: exact half-perimeter and its weighted-average smoothing.
//!
//! Clock nets are routed on the dedicated clock network and never counted.

use crate::arch::{Net, Netlist};

/// Pin coordinates of `net` for positions `xs`, `ys` (instance centres).
fn pin_coords<'a>(net: &'a Net, xs: &'a [f64], ys: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
    net.pins.iter().map(move |p| (xs[p.inst] + p.dx, ys[p.inst] + p.dy))
}

pub fn net_hpwl(net: &Net, xs: &[f64], ys: &[f64]) -> f64 {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in pin_coords(net, xs, ys) {
        lo = (lo.0.min(x), lo.1.min(y));
        hi = (hi.0.max(x), hi.1.max(y));
    }
    if net.pins.is_empty() {
        0.0
    } else {
        (hi.0 - lo.0) + (hi.1 - lo.1)
    }
}

/// Unweighted HPWL summed over signal nets.
pub fn hpwl(netlist: &Netlist, xs: &[f64], ys: &[f64]) -> f64 {
    netlist.signal_nets().map(|(_, n)| net_hpwl(n, xs, ys)).sum()
}

/// Weighted-average smooth span of `coords` along one axis. Writes
/// `d span / d c_k` into `grad` and returns the span.
pub fn wa_span(coords: &[f64], gamma: f64, grad: &mut [f64]) -> f64 {
    let (mut cmax, mut cmin) = (f64::NEG_INFINITY, f64::INFINITY);
    for &c in coords {
        cmax = cmax.max(c);
        cmin = cmin.min(c);
    }
    let (mut sp, mut sxp, mut sn, mut sxn) = (0.0, 0.0, 0.0, 0.0);
    for &c in coords {
        let ep = ((c - cmax) / gamma).exp();
        let en = ((cmin - c) / gamma).exp();
        sp += ep;
        sxp += c * ep;
        sn += en;
        sxn += c * en;
    }
    let (wmax, wmin) = (sxp / sp, sxn / sn);
    for (g, &c) in grad.iter_mut().zip(coords) {
        let ep = ((c - cmax) / gamma).exp() / sp;
        let en = ((cmin - c) / gamma).exp() / sn;
        *g = ep * (1.0 + (c - wmax) / gamma) - en * (1.0 - (c - wmin) / gamma);
    }
    wmax - wmin
}

/// Weighted smooth wirelength `sum_e w_e (WA_x(e) + WA_y(e))` over signal
/// nets. The gradient with respect to instance centres is added into `gx`,
/// `gy`; `weights` is indexed by net.
pub fn smooth_wl_into(
    netlist: &Netlist,
    xs: &[f64],
    ys: &[f64],
    weights: &[f64],
    gamma: f64,
    gx: &mut [f64],
    gy: &mut [f64],
) -> f64 {
    let mut total = 0.0;
    let (mut cx, mut cy, mut dx, mut dy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (e, net) in netlist.signal_nets() {
        let w = weights[e];
        cx.clear();
        cy.clear();
        for (x, y) in pin_coords(net, xs, ys) {
            cx.push(x);
            cy.push(y);
        }
        dx.resize(cx.len(), 0.0);
        dy.resize(cy.len(), 0.0);
        total += w * (wa_span(&cx, gamma, &mut dx) + wa_span(&cy, gamma, &mut dy));
        for (p, (a, b)) in net.pins.iter().zip(dx.iter().zip(&dy)) {
            gx[p.inst] += w * a;
            gy[p.inst] += w * b;
        }
    }
    total
}

/// Allocating form of [`smooth_wl_into`].
pub fn smooth_wl(netlist: &Netlist, xs: &[f64], ys: &[f64], weights: &[f64], gamma: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; xs.len()];
    let mut gy = vec![0.0; ys.len()];
    let v = smooth_wl_into(netlist, xs, ys, weights, gamma, &mut gx, &mut gy);
    (v, gx, gy)
}

/// Smoothing parameter for the current overflow: `4 * 10^(k*ov - 1)`,
/// clamped to `[0.1, 4]`.
pub fn gamma_for_overflow(overflow: f64, k: f64) -> f64 {
    (4.0 * 10f64.powf(k * overflow - 1.0)).clamp(0.1, 4.0)
}
