//! Clock-region planning.
//!
//! A clock net occupies every clock region its pin bounding box touches, and
//! each region carries at most `limit` clock nets. Planning searches over
//! per-net masks restricting where each clock net may be hosted: every search
//! node solves a capacity-constrained assignment of instances to regions
//! (minimum pin-weighted displacement) and, when some region is still over
//! its limit, branches on pushing one of the nets crossing it entirely to one
//! side of it. The assignment cost of a node bounds every node below it.

use std::collections::HashSet;

use serde::Serialize;

use crate::arch::{Device, FieldKind, Netlist, PerField, Rect};
use crate::error::{Error, Result};

/// Inclusive rectangle of regions in region-grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RegionSpan {
    pub c0: usize,
    pub c1: usize,
    pub r0: usize,
    pub r1: usize,
}

impl RegionSpan {
    pub fn full(device: &Device) -> Self {
        RegionSpan {
            c0: 0,
            c1: device.cr_cols - 1,
            r0: 0,
            r1: device.cr_rows - 1,
        }
    }

    fn point(row: usize, col: usize) -> Self {
        RegionSpan { c0: col, c1: col, r0: row, r1: row }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.c0..=self.c1).contains(&col) && (self.r0..=self.r1).contains(&row)
    }

    fn intersect(&self, o: &RegionSpan) -> Option<RegionSpan> {
        let s = RegionSpan {
            c0: self.c0.max(o.c0),
            c1: self.c1.min(o.c1),
            r0: self.r0.max(o.r0),
            r1: self.r1.min(o.r1),
        };
        (s.c0 <= s.c1 && s.r0 <= s.r1).then_some(s)
    }

    fn grow(&mut self, row: usize, col: usize) {
        self.c0 = self.c0.min(col);
        self.c1 = self.c1.max(col);
        self.r0 = self.r0.min(row);
        self.r1 = self.r1.max(row);
    }

    fn regions(&self, cr_cols: usize) -> impl Iterator<Item = usize> + '_ {
        (self.r0..=self.r1).flat_map(move |r| (self.c0..=self.c1).map(move |c| r * cr_cols + c))
    }
}

/// Number of clock nets whose pin bounding box intersects each region.
pub fn clock_demand(netlist: &Netlist, xs: &[f64], ys: &[f64], device: &Device) -> Vec<usize> {
    let mut demand = vec![0; device.num_regions()];
    for (_, net) in netlist.clock_nets() {
        let mut span: Option<RegionSpan> = None;
        for p in &net.pins {
            let (x, y) = (xs[p.inst] + p.dx, ys[p.inst] + p.dy);
            let (row, col) = (device.region_row_of(y), device.region_col_of(x));
            match span.as_mut() {
                Some(s) => s.grow(row, col),
                None => span = Some(RegionSpan::point(row, col)),
            }
        }
        if let Some(s) = span {
            for r in s.regions(device.cr_cols) {
                demand[r] += 1;
            }
        }
    }
    demand
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    /// Search nodes explored before settling for the incumbent.
    pub node_cap: usize,
    /// Largest number of movable groups solved by exact enumeration.
    pub exact_limit: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            node_cap: 400,
            exact_limit: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockPlan {
    /// Target region per instance.
    pub mapping: Vec<usize>,
    /// Box of admissible instance centres per instance.
    pub bounds: Vec<Rect>,
    /// Allowed host regions per clock net.
    pub masks: Vec<RegionSpan>,
    /// Clock demand per region under the mapping.
    pub demand: Vec<usize>,
    pub cost: f64,
    pub nodes: usize,
    /// Whether the search was cut short by the node cap.
    pub truncated: bool,
}

impl ClockPlan {
    /// Instances whose centre lies outside their target box.
    pub fn outside_count(&self, xs: &[f64], ys: &[f64]) -> usize {
        self.bounds
            .iter()
            .zip(xs.iter().zip(ys))
            .filter(|(b, (&x, &y))| !b.contains(x, y))
            .count()
    }

    /// Moves every instance to the nearest point of its target box.
    pub fn teleport(&self, xs: &mut [f64], ys: &mut [f64]) {
        for (b, (x, y)) in self.bounds.iter().zip(xs.iter_mut().zip(ys.iter_mut())) {
            (*x, *y) = b.clamp(*x, *y);
        }
    }

    pub fn to_json(&self, netlist: &Netlist, device: &Device) -> serde_json::Value {
        let mapping: serde_json::Map<String, serde_json::Value> = netlist
            .instances
            .iter()
            .zip(&self.mapping)
            .map(|(inst, &r)| (inst.name.clone(), r.into()))
            .collect();
        let masks: serde_json::Map<String, serde_json::Value> = netlist
            .clock_nets()
            .zip(&self.masks)
            .map(|((_, net), m)| {
                let allowed: Vec<bool> = (0..device.num_regions())
                    .map(|r| m.contains(r / device.cr_cols, r % device.cr_cols))
                    .collect();
                (net.name.clone(), serde_json::json!(allowed))
            })
            .collect();
        serde_json::json!({
            "regions": { "rows": device.cr_rows, "cols": device.cr_cols, "limit": device.cr_limit },
            "cost": self.cost,
            "nodes": self.nodes,
            "truncated": self.truncated,
            "demand": self.demand,
            "mapping": mapping,
            "mask": masks,
        })
    }
}

/// Box of admissible centres for a region: site centres of its interior.
pub fn region_bounds(device: &Device, region: usize) -> Rect {
    let r = device.region_rect(region);
    Rect {
        x0: r.x0 + 0.5,
        x1: r.x1 - 0.5,
        y0: r.y0 + 0.5,
        y1: r.y1 - 0.5,
    }
}

/// A unit of assignment: a single instance or a whole carry chain.
#[derive(Debug, Clone)]
struct Group {
    members: Vec<usize>,
    demand: PerField<f64>,
    /// Region of a fixed member, which pins the whole group.
    pinned: Option<usize>,
}

struct Problem<'a> {
    device: &'a Device,
    groups: Vec<Group>,
    group_of: Vec<usize>,
    /// Cost of each group per region.
    cost: Vec<Vec<f64>>,
    capacity: Vec<PerField<f64>>,
    /// Clock nets touching each group.
    clocks: Vec<Vec<usize>>,
    /// Member instances of each clock net, deduplicated.
    net_insts: Vec<Vec<usize>>,
    cfg: PlanConfig,
}

type Assignment = (f64, Vec<usize>);

impl<'a> Problem<'a> {
    fn new(netlist: &Netlist, xs: &[f64], ys: &[f64], device: &'a Device, cfg: PlanConfig) -> Self {
        let n = netlist.num_instances();
        let mut pins = vec![0usize; n];
        for net in &netlist.nets {
            for p in &net.pins {
                pins[p.inst] += 1;
            }
        }
        let mut group_of = vec![usize::MAX; n];
        let mut groups = Vec::new();
        for chain in &netlist.chains {
            for &m in &chain.members {
                group_of[m] = groups.len();
            }
            groups.push(Group {
                members: chain.members.clone(),
                demand: PerField::zeros(),
                pinned: None,
            });
        }
        for (i, g) in group_of.iter_mut().enumerate() {
            if *g == usize::MAX {
                *g = groups.len();
                groups.push(Group {
                    members: vec![i],
                    demand: PerField::zeros(),
                    pinned: None,
                });
            }
        }
        let nr = device.num_regions();
        let rects: Vec<Rect> = (0..nr).map(|r| device.region_rect(r)).collect();
        let mut cost = vec![vec![0.0; nr]; groups.len()];
        for (g, group) in groups.iter_mut().enumerate() {
            for &m in &group.members {
                let inst = &netlist.instances[m];
                for f in FieldKind::ALL {
                    group.demand[f] += inst.demand[f];
                }
                if inst.fixed {
                    let (x, y) = inst.fixed_at.unwrap_or((xs[m], ys[m]));
                    group.pinned = Some(device.region_of_point(x, y));
                }
                let w = pins[m].max(1) as f64;
                for (r, rect) in rects.iter().enumerate() {
                    cost[g][r] += w * rect.manhattan_to(xs[m], ys[m]);
                }
            }
        }
        let mut clocks = vec![Vec::new(); groups.len()];
        let mut net_insts = Vec::new();
        for (cid, (_, net)) in netlist.clock_nets().enumerate() {
            let mut insts: Vec<usize> = net.pins.iter().map(|p| p.inst).collect();
            insts.sort_unstable();
            insts.dedup();
            for &i in &insts {
                let g = group_of[i];
                if clocks[g].last() != Some(&cid) {
                    clocks[g].push(cid);
                }
            }
            net_insts.push(insts);
        }
        for c in clocks.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        Problem {
            device,
            capacity: (0..nr).map(|r| device.region_capacity(r)).collect(),
            groups,
            group_of,
            cost,
            clocks,
            net_insts,
            cfg,
        }
    }

    /// Regions each group may use under `masks`, cheapest first.
    fn allowed(&self, masks: &[RegionSpan]) -> Option<Vec<Vec<usize>>> {
        let full = RegionSpan::full(self.device);
        let cols = self.device.cr_cols;
        let mut out = Vec::with_capacity(self.groups.len());
        for (g, group) in self.groups.iter().enumerate() {
            let mut span = full;
            for &c in &self.clocks[g] {
                span = span.intersect(&masks[c])?;
            }
            let regions: Vec<usize> = match group.pinned {
                Some(r) => {
                    if !span.contains(r / cols, r % cols) {
                        return None;
                    }
                    vec![r]
                }
                None => {
                    let mut v: Vec<usize> = span.regions(cols).collect();
                    v.sort_by(|&a, &b| self.cost[g][a].total_cmp(&self.cost[g][b]).then(a.cmp(&b)));
                    v
                }
            };
            out.push(regions);
        }
        Some(out)
    }

    fn fits(&self, used: &PerField<f64>, add: &PerField<f64>, region: usize) -> bool {
        FieldKind::ALL
            .iter()
            .all(|&f| add[f] == 0.0 || used[f] + add[f] <= self.capacity[region][f] + 1e-9)
    }

    /// Minimum-cost capacity-feasible assignment of groups to allowed regions.
    fn assign(&self, masks: &[RegionSpan]) -> Option<Assignment> {
        let allowed = self.allowed(masks)?;
        // unconstrained optimum: everyone at its cheapest allowed region
        let pick: Vec<usize> = allowed.iter().map(|a| a[0]).collect();
        let mut used = vec![PerField::<f64>::zeros(); self.capacity.len()];
        for (g, &r) in pick.iter().enumerate() {
            for f in FieldKind::ALL {
                used[r][f] += self.groups[g].demand[f];
            }
        }
        let over = used
            .iter()
            .zip(&self.capacity)
            .any(|(u, c)| FieldKind::ALL.iter().any(|&f| u[f] > c[f] + 1e-9));
        if !over {
            let cost = pick.iter().enumerate().map(|(g, &r)| self.cost[g][r]).sum();
            return Some((cost, pick));
        }
        let movable = allowed.iter().filter(|a| a.len() > 1).count();
        if movable <= self.cfg.exact_limit {
            self.assign_exact(&allowed)
        } else {
            self.assign_by_class(&allowed)
        }
    }

    /// Depth-first enumeration with a cheapest-remaining bound.
    fn assign_exact(&self, allowed: &[Vec<usize>]) -> Option<Assignment> {
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        // pinned groups first, then largest demand
        order.sort_by(|&a, &b| {
            let key = |g: usize| (allowed[g].len() > 1, -self.groups[g].demand.iter().map(|(_, v)| v).sum::<f64>());
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
        });
        let mut rest = vec![0.0; order.len() + 1];
        for k in (0..order.len()).rev() {
            let g = order[k];
            rest[k] = rest[k + 1] + self.cost[g][allowed[g][0]];
        }
        struct Search<'s> {
            p: &'s Problem<'s>,
            allowed: &'s [Vec<usize>],
            order: Vec<usize>,
            rest: Vec<f64>,
            used: Vec<PerField<f64>>,
            pick: Vec<usize>,
            best: Option<Assignment>,
        }
        fn dfs(s: &mut Search, k: usize, acc: f64) {
            let bound = acc + s.rest[k];
            if let Some((b, _)) = &s.best {
                if bound >= *b - 1e-12 {
                    return;
                }
            }
            if k == s.order.len() {
                s.best = Some((acc, s.pick.clone()));
                return;
            }
            let g = s.order[k];
            for idx in 0..s.allowed[g].len() {
                let r = s.allowed[g][idx];
                let d = s.p.groups[g].demand;
                if !s.p.fits(&s.used[r], &d, r) {
                    continue;
                }
                for f in FieldKind::ALL {
                    s.used[r][f] += d[f];
                }
                s.pick[g] = r;
                dfs(s, k + 1, acc + s.p.cost[g][r]);
                for f in FieldKind::ALL {
                    s.used[r][f] -= d[f];
                }
            }
        }
        let mut s = Search {
            p: self,
            allowed,
            order,
            rest,
            used: vec![PerField::zeros(); self.capacity.len()],
            pick: vec![0; self.groups.len()],
            best: None,
        };
        dfs(&mut s, 0, 0.0);
        s.best
    }

    /// Splits groups into classes of equal demand vectors. Unit classes are
    /// solved exactly by transportation; others greedily by regret. Classes
    /// using LUTM-AL go first so their LUTL share is reserved before plain
    /// LUTs compete for it.
    fn assign_by_class(&self, allowed: &[Vec<usize>]) -> Option<Assignment> {
        let nr = self.capacity.len();
        let mut remaining = self.capacity.clone();
        let mut pick = vec![usize::MAX; self.groups.len()];
        for (g, a) in allowed.iter().enumerate() {
            if a.len() == 1 {
                pick[g] = a[0];
                let d = self.groups[g].demand;
                for f in FieldKind::ALL {
                    remaining[a[0]][f] -= d[f];
                }
            }
        }
        let mut classes: Vec<(PerField<f64>, Vec<usize>)> = Vec::new();
        for (g, group) in self.groups.iter().enumerate() {
            if pick[g] != usize::MAX {
                continue;
            }
            match classes.iter_mut().find(|(d, _)| *d == group.demand) {
                Some((_, v)) => v.push(g),
                None => classes.push((group.demand, vec![g])),
            }
        }
        classes.sort_by_key(|(d, _)| (d[FieldKind::LutmAl] == 0.0, d.iter().filter(|(_, v)| *v > 0.0).count() == 0));
        for (d, members) in classes {
            let unit = d.iter().all(|(_, v)| v == 0.0 || v == 1.0);
            let slots: Vec<usize> = (0..nr)
                .map(|r| {
                    FieldKind::ALL
                        .iter()
                        .filter(|&&f| d[f] > 0.0)
                        .map(|&f| ((remaining[r][f] + 1e-9) / d[f]).floor().max(0.0) as usize)
                        .min()
                        .unwrap_or(usize::MAX)
                })
                .collect();
            let chosen = if unit {
                transport(&members, allowed, &self.cost, &slots)?
            } else {
                greedy_regret(&members, allowed, &self.cost, &slots)?
            };
            for (&g, &r) in members.iter().zip(&chosen) {
                pick[g] = r;
                for f in FieldKind::ALL {
                    remaining[r][f] -= d[f];
                }
            }
        }
        let cost = pick.iter().enumerate().map(|(g, &r)| self.cost[g][r]).sum();
        Some((cost, pick))
    }

    /// Region span hosting each clock net under an assignment.
    fn host_spans(&self, pick: &[usize]) -> Vec<Option<RegionSpan>> {
        let cols = self.device.cr_cols;
        self.net_insts
            .iter()
            .map(|insts| {
                let mut span: Option<RegionSpan> = None;
                for &i in insts {
                    let r = pick[self.group_of[i]];
                    let (row, col) = (r / cols, r % cols);
                    match span.as_mut() {
                        Some(s) => s.grow(row, col),
                        None => span = Some(RegionSpan::point(row, col)),
                    }
                }
                span
            })
            .collect()
    }

    fn demand(&self, spans: &[Option<RegionSpan>]) -> Vec<usize> {
        let mut d = vec![0; self.capacity.len()];
        for s in spans.iter().flatten() {
            for r in s.regions(self.device.cr_cols) {
                d[r] += 1;
            }
        }
        d
    }
}

/// Unit-demand transportation by successive shortest paths over regions.
/// Returns the region of each member, or `None` when capacity is short.
fn transport(members: &[usize], allowed: &[Vec<usize>], cost: &[Vec<f64>], slots: &[usize]) -> Option<Vec<usize>> {
    let nr = slots.len();
    let total: usize = slots.iter().map(|&s| s.min(members.len())).sum();
    if total < members.len() {
        return None;
    }
    let mut ok = vec![vec![false; nr]; members.len()];
    for (k, &g) in members.iter().enumerate() {
        for &r in &allowed[g] {
            ok[k][r] = true;
        }
    }
    let c = |k: usize, r: usize| if ok[k][r] { cost[members[k]][r] } else { f64::INFINITY };
    let mut at: Vec<usize> = vec![usize::MAX; members.len()];
    let mut load = vec![0usize; nr];
    let mut residents: Vec<Vec<usize>> = vec![Vec::new(); nr];
    for k in 0..members.len() {
        // shortest path from member k through resident swaps to a region
        // with a free slot (Bellman-Ford on the region graph)
        let mut dist: Vec<f64> = (0..nr).map(|r| c(k, r)).collect();
        let mut via: Vec<Option<(usize, usize)>> = vec![None; nr];
        for _ in 0..nr {
            let mut changed = false;
            for j in 0..nr {
                if !dist[j].is_finite() {
                    continue;
                }
                for &a in &residents[j] {
                    for r in 0..nr {
                        let nd = dist[j] - c(a, j) + c(a, r);
                        if nd < dist[r] - 1e-12 {
                            dist[r] = nd;
                            via[r] = Some((a, j));
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let end = (0..nr)
            .filter(|&r| load[r] < slots[r] && dist[r].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))?;
        // unwind: each hop moves a resident into the region after it
        let mut r = end;
        load[end] += 1;
        let mut guard = 0;
        while let Some((a, j)) = via[r] {
            residents[j].retain(|&x| x != a);
            residents[r].push(a);
            at[a] = r;
            r = j;
            guard += 1;
            if guard > members.len() + nr {
                return None;
            }
        }
        residents[r].push(k);
        at[k] = r;
    }
    Some(at)
}

/// Assigns the members with the largest regret (second-best minus best
/// cost) first, each to its cheapest region with room.
fn greedy_regret(members: &[usize], allowed: &[Vec<usize>], cost: &[Vec<f64>], slots: &[usize]) -> Option<Vec<usize>> {
    let mut left = slots.to_vec();
    let regret = |g: usize| {
        let a = &allowed[g];
        if a.len() < 2 {
            f64::INFINITY
        } else {
            cost[g][a[1]] - cost[g][a[0]]
        }
    };
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| regret(members[b]).total_cmp(&regret(members[a])).then(a.cmp(&b)));
    let mut out = vec![0; members.len()];
    for k in order {
        let g = members[k];
        let r = allowed[g].iter().copied().find(|&r| left[r] > 0)?;
        left[r] -= 1;
        out[k] = r;
    }
    Some(out)
}

/// Plans with the default search configuration.
pub fn plan_mapping(netlist: &Netlist, xs: &[f64], ys: &[f64], device: &Device, limit: usize) -> Result<ClockPlan> {
    plan_mapping_with(netlist, xs, ys, device, limit, PlanConfig::default())
}

pub fn plan_mapping_with(
    netlist: &Netlist,
    xs: &[f64],
    ys: &[f64],
    device: &Device,
    limit: usize,
    cfg: PlanConfig,
) -> Result<ClockPlan> {
    let p = Problem::new(netlist, xs, ys, device, cfg);
    let num_clocks = p.net_insts.len();
    let root = vec![RegionSpan::full(device); num_clocks];
    let root_sol = p.assign(&root).ok_or(Error::ClockInfeasible { bound: f64::INFINITY })?;
    let root_bound = root_sol.0;

    let mut best: Option<(f64, Vec<usize>, Vec<RegionSpan>)> = None;
    let mut seen: HashSet<Vec<RegionSpan>> = HashSet::new();
    seen.insert(root.clone());
    let mut stack = vec![(root, root_sol)];
    let mut nodes = 0;
    let mut truncated = false;
    while let Some((masks, (lb, pick))) = stack.pop() {
        if best.as_ref().is_some_and(|b| lb >= b.0 - 1e-12) {
            continue;
        }
        if nodes >= cfg.node_cap {
            truncated = true;
            break;
        }
        nodes += 1;
        let spans = p.host_spans(&pick);
        let demand = p.demand(&spans);
        let worst = (0..demand.len())
            .filter(|&r| demand[r] > limit)
            .max_by_key(|&r| (demand[r], std::cmp::Reverse(r)));
        let Some(star) = worst else {
            best = Some((lb, pick, masks));
            continue;
        };
        let (row, col) = (star / device.cr_cols, star % device.cr_cols);
        let mut children = Vec::new();
        for (n, span) in spans.iter().enumerate() {
            if !span.is_some_and(|s| s.contains(row, col)) {
                continue;
            }
            let m = masks[n];
            let mut sides = Vec::with_capacity(4);
            if col > m.c0 {
                sides.push(RegionSpan { c1: col - 1, ..m });
            }
            if col < m.c1 {
                sides.push(RegionSpan { c0: col + 1, ..m });
            }
            if row > m.r0 {
                sides.push(RegionSpan { r1: row - 1, ..m });
            }
            if row < m.r1 {
                sides.push(RegionSpan { r0: row + 1, ..m });
            }
            for side in sides {
                let mut child = masks.clone();
                child[n] = side;
                if !seen.insert(child.clone()) {
                    continue;
                }
                if let Some(sol) = p.assign(&child) {
                    if best.as_ref().is_none_or(|b| sol.0 < b.0 - 1e-12) {
                        children.push((child, sol));
                    }
                }
            }
        }
        // cheapest child explored first
        children.sort_by(|a, b| b.1 .0.total_cmp(&a.1 .0));
        stack.extend(children);
    }

    let Some((cost, pick, masks)) = best else {
        return Err(Error::ClockInfeasible { bound: root_bound });
    };
    let mapping: Vec<usize> = (0..netlist.num_instances()).map(|i| pick[p.group_of[i]]).collect();
    let demand = p.demand(&p.host_spans(&pick));
    Ok(ClockPlan {
        bounds: mapping.iter().map(|&r| region_bounds(device, r)).collect(),
        mapping,
        masks,
        demand,
        cost,
        nodes,
        truncated,
    })
}

/// Quadratic attraction of every instance to its target box:
/// per axis zero inside `[lo, hi]` and squared distance outside. The
/// gradient is added into `gx`, `gy`.
pub fn clock_penalty(xs: &[f64], ys: &[f64], plan: &ClockPlan, gx: &mut [f64], gy: &mut [f64]) -> f64 {
    let axis = |v: f64, lo: f64, hi: f64| {
        if v < lo {
            (v - lo, 2.0 * (v - lo))
        } else if v > hi {
            (v - hi, 2.0 * (v - hi))
        } else {
            (0.0, 0.0)
        }
    };
    let mut total = 0.0;
    for (i, b) in plan.bounds.iter().enumerate() {
        let (dx, gxi) = axis(xs[i], b.x0, b.x1);
        let (dy, gyi) = axis(ys[i], b.y0, b.y1);
        total += dx * dx + dy * dy;
        gx[i] += gxi;
        gy[i] += gyi;
    }
    total
}

/// Clock multiplier `iota * |grad T|_1 / (|grad Gamma|_1 + eps)`.
pub fn update_eta(wl_grad_norm: f64, clock_grad_norm: f64, iota: f64, eps: f64) -> f64 {
    iota * wl_grad_norm / (clock_grad_norm + eps)
}
