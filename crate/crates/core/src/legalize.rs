//! Site assignment after global placement, and legality checks.
//!
//! Every instance gets a site and a slot. Slots of a site are numbered by
//! resource class in the order LUT fabric, FF, CARRY, DSP, BRAM, so a SLICEL
//! with the default capacities has LUT slots 0..8, FF slots 8..24 and the
//! carry slot 24. Fixed instances keep the site under their fixed location.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::arch::{Device, FieldKind, InstKind, Netlist, SiteKind};
use crate::clockplan::{clock_demand, ClockPlan};
use crate::error::{parse_err, Error, Result};

/// Configuration of a SLICEM's LUT fabric. A slice holds one mode only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SliceMode {
    Lut,
    Dram,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Site {
    pub x: usize,
    pub y: usize,
    pub slot: usize,
}

impl Site {
    pub fn centre(&self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteAssignment {
    pub sites: Vec<Site>,
    /// Total Manhattan distance moved by movable instances.
    pub displacement: f64,
    pub max_displacement: f64,
    /// Instances placed outside their planned clock region.
    pub fallbacks: usize,
    /// Clock nets per region at the legal positions.
    pub region_demand: Vec<usize>,
}

impl SiteAssignment {
    /// Site centres of every instance.
    pub fn positions(&self) -> (Vec<f64>, Vec<f64>) {
        self.sites.iter().map(|s| s.centre()).unzip()
    }

    /// Mode tag of every SLICEM holding LUT-fabric instances, keyed by site.
    pub fn slice_modes(&self, netlist: &Netlist, device: &Device) -> BTreeMap<(usize, usize), SliceMode> {
        let mut modes = BTreeMap::new();
        for (inst, s) in netlist.instances.iter().zip(&self.sites) {
            if Caps::of(device, device.site_kind(s.x)).lutm == 0 {
                continue;
            }
            let mode = match class_of(inst.kind) {
                Some(Class::Lut) => SliceMode::Lut,
                Some(Class::Lutm(m)) => m,
                _ => continue,
            };
            modes.insert((s.x, s.y), mode);
        }
        modes
    }

    /// Regions whose clock demand exceeds `limit`, with their demand.
    pub fn clock_overflow(&self, limit: usize) -> Vec<(usize, usize)> {
        self.region_demand
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d > limit)
            .map(|(r, &d)| (r, d))
            .collect()
    }

    /// One `place <inst> <x> <y> <slot>` line per instance.
    pub fn to_text(&self, netlist: &Netlist) -> String {
        let mut out = String::new();
        for (inst, s) in netlist.instances.iter().zip(&self.sites) {
            let _ = writeln!(out, "place {} {} {} {}", inst.name, s.x, s.y, s.slot);
        }
        out
    }
}

/// Reads `place` lines; `#` starts a comment. Instances without a line are
/// reported as `None`.
pub fn parse_placement(text: &str, netlist: &Netlist, device: &Device) -> Result<Vec<Option<Site>>> {
    let mut sites = vec![None; netlist.num_instances()];
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let tok: Vec<&str> = body.split_whitespace().collect();
        if tok[0] != "place" || tok.len() != 5 {
            return Err(parse_err(line, "expected `place <inst> <x> <y> <slot>`"));
        }
        let inst = netlist
            .lookup(tok[1])
            .ok_or_else(|| parse_err(line, format!("unknown instance `{}`", tok[1])))?;
        let num = |t: &str| t.parse::<usize>().map_err(|_| parse_err(line, format!("bad integer `{t}`")));
        let (x, y, slot) = (num(tok[2])?, num(tok[3])?, num(tok[4])?);
        if x >= device.width || y >= device.height {
            return Err(Error::Bounds {
                line,
                what: "site",
                x: x as i64,
                y: y as i64,
                width: device.width,
                height: device.height,
            });
        }
        if sites[inst].replace(Site { x, y, slot }).is_some() {
            return Err(parse_err(line, format!("instance `{}` placed twice", tok[1])));
        }
    }
    Ok(sites)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Lut,
    Lutm(SliceMode),
    Ff,
    Carry,
    Dsp,
    Bram,
}

fn class_of(kind: InstKind) -> Option<Class> {
    match kind {
        InstKind::Lut => Some(Class::Lut),
        InstKind::Dram => Some(Class::Lutm(SliceMode::Dram)),
        InstKind::Shift => Some(Class::Lutm(SliceMode::Shift)),
        InstKind::Ff => Some(Class::Ff),
        InstKind::Carry => Some(Class::Carry),
        InstKind::Dsp => Some(Class::Dsp),
        InstKind::Bram => Some(Class::Bram),
        InstKind::Io => None,
    }
}

/// Whole resource units a site kind offers per class.
#[derive(Debug, Clone, Copy, Default)]
struct Caps {
    lut: usize,
    lutm: usize,
    ff: usize,
    carry: usize,
    dsp: usize,
    bram: usize,
}

impl Caps {
    fn of(device: &Device, kind: SiteKind) -> Self {
        let c = device.capacity(kind);
        let n = |f: FieldKind| c[f].max(0.0).floor() as usize;
        Caps {
            lut: n(FieldKind::Lutl),
            lutm: n(FieldKind::LutmAl),
            ff: n(FieldKind::Ff),
            carry: n(FieldKind::Carry),
            dsp: n(FieldKind::Dsp),
            bram: n(FieldKind::Bram),
        }
    }

    /// Slot range of a class, empty when the site cannot host it.
    fn range(&self, class: Class) -> std::ops::Range<usize> {
        let ff0 = self.lut;
        let carry0 = ff0 + self.ff;
        let dsp0 = carry0 + self.carry;
        let bram0 = dsp0 + self.dsp;
        match class {
            Class::Lut => 0..self.lut,
            Class::Lutm(_) => 0..self.lut.min(self.lutm),
            Class::Ff => ff0..carry0,
            Class::Carry => carry0..dsp0,
            Class::Dsp => dsp0..bram0,
            Class::Bram => bram0..bram0 + self.bram,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Usage {
    lut: usize,
    ff: usize,
    carry: usize,
    dsp: usize,
    bram: usize,
    other: usize,
    mode: Option<SliceMode>,
}

struct Fabric<'a> {
    device: &'a Device,
    caps: Vec<Caps>,
    used: Vec<Usage>,
}

impl<'a> Fabric<'a> {
    fn new(device: &'a Device) -> Self {
        Fabric {
            device,
            caps: (0..device.width).map(|x| Caps::of(device, device.site_kind(x))).collect(),
            used: vec![Usage::default(); device.width * device.height],
        }
    }

    fn usage(&self, x: usize, y: usize) -> &Usage {
        &self.used[y * self.device.width + x]
    }

    fn free_slot(&self, class: Class, x: usize, y: usize) -> Option<usize> {
        let c = &self.caps[x];
        let u = self.usage(x, y);
        let r = c.range(class);
        let taken = match class {
            Class::Lut => {
                if c.lutm > 0 && !matches!(u.mode, None | Some(SliceMode::Lut)) {
                    return None;
                }
                u.lut
            }
            Class::Lutm(m) => {
                if c.lutm == 0 || !(u.mode.is_none() || u.mode == Some(m)) {
                    return None;
                }
                u.lut
            }
            Class::Ff => u.ff,
            Class::Carry => u.carry,
            Class::Dsp => u.dsp,
            Class::Bram => u.bram,
        };
        (r.start + taken < r.end).then_some(r.start + taken)
    }

    fn occupy(&mut self, class: Class, x: usize, y: usize) {
        let slicem = self.caps[x].lutm > 0;
        let u = &mut self.used[y * self.device.width + x];
        match class {
            Class::Lut => {
                u.lut += 1;
                if slicem {
                    u.mode = Some(SliceMode::Lut);
                }
            }
            Class::Lutm(m) => {
                u.lut += 1;
                u.mode = Some(m);
            }
            Class::Ff => u.ff += 1,
            Class::Carry => u.carry += 1,
            Class::Dsp => u.dsp += 1,
            Class::Bram => u.bram += 1,
        }
    }

    /// Cheapest free site for `class` within the site rectangle.
    fn best(&self, class: Class, x: f64, y: f64, rect: (usize, usize, usize, usize)) -> Option<(f64, usize, usize)> {
        let (x0, x1, y0, y1) = rect;
        let mut best: Option<(f64, usize, usize)> = None;
        for sx in x0..x1 {
            if self.caps[sx].range(class).is_empty() {
                continue;
            }
            let dx = (sx as f64 + 0.5 - x).abs();
            if best.is_some_and(|b| dx >= b.0) {
                continue;
            }
            for sy in y0..y1 {
                let cost = dx + (sy as f64 + 0.5 - y).abs();
                if best.is_some_and(|b| cost >= b.0) {
                    continue;
                }
                if self.free_slot(class, sx, sy).is_some() {
                    best = Some((cost, sx, sy));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    cost: f64,
    inst: usize,
    x: usize,
    y: usize,
    fallback: bool,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // min-heap on cost, then instance index
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then(other.inst.cmp(&self.inst))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Legalizer<'a> {
    netlist: &'a Netlist,
    device: &'a Device,
    xs: &'a [f64],
    ys: &'a [f64],
    plan: Option<&'a ClockPlan>,
    fabric: Fabric<'a>,
    sites: Vec<Option<Site>>,
    fallbacks: usize,
}

impl Legalizer<'_> {
    fn full(&self) -> (usize, usize, usize, usize) {
        (0, self.device.width, 0, self.device.height)
    }

    /// Regions to try for instance `i`, planned region first and the rest by
    /// distance; `None` when unconstrained.
    fn regions_for(&self, i: usize) -> Option<Vec<usize>> {
        let plan = self.plan?;
        let home = plan.mapping[i];
        let (x, y) = (self.xs[i], self.ys[i]);
        let mut rest: Vec<usize> = (0..self.device.num_regions()).filter(|&r| r != home).collect();
        rest.sort_by(|&a, &b| {
            let da = self.device.region_rect(a).manhattan_to(x, y);
            let db = self.device.region_rect(b).manhattan_to(x, y);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        rest.insert(0, home);
        Some(rest)
    }

    fn candidate(&self, i: usize, class: Class) -> Option<Candidate> {
        let (x, y) = (self.xs[i], self.ys[i]);
        let make = |(cost, sx, sy): (f64, usize, usize), fallback| Candidate {
            cost,
            inst: i,
            x: sx,
            y: sy,
            fallback,
        };
        match self.regions_for(i) {
            None => self.fabric.best(class, x, y, self.full()).map(|b| make(b, false)),
            Some(regions) => regions.iter().enumerate().find_map(|(k, &r)| {
                let rect = self.device.region_site_bounds(r);
                self.fabric.best(class, x, y, rect).map(|b| make(b, k > 0))
            }),
        }
    }

    fn assign(&mut self, i: usize, class: Class, x: usize, y: usize) {
        let slot = self.fabric.free_slot(class, x, y).expect("site checked free");
        self.fabric.occupy(class, x, y);
        self.sites[i] = Some(Site { x, y, slot });
    }

    fn place_fixed(&mut self) {
        for (i, inst) in self.netlist.instances.iter().enumerate() {
            if !inst.fixed {
                continue;
            }
            let (fx, fy) = inst.fixed_at.unwrap_or((self.xs[i], self.ys[i]));
            let x = (fx.max(0.0) as usize).min(self.device.width - 1);
            let y = (fy.max(0.0) as usize).min(self.device.height - 1);
            let slot = match class_of(inst.kind).and_then(|c| self.fabric.free_slot(c, x, y).map(|s| (c, s))) {
                Some((c, s)) => {
                    self.fabric.occupy(c, x, y);
                    s
                }
                None => {
                    let u = &mut self.fabric.used[y * self.device.width + x];
                    u.other += 1;
                    u.other - 1
                }
            };
            self.sites[i] = Some(Site { x, y, slot });
        }
    }

    /// Chains, longest first, each into the cheapest free column segment.
    fn place_chains(&mut self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.netlist.chains.len()).collect();
        order.sort_by_key(|&c| (std::cmp::Reverse(self.netlist.chains[c].members.len()), c));
        for c in order {
            let members = &self.netlist.chains[c].members;
            if members.is_empty() || members.iter().any(|&m| self.netlist.instances[m].fixed) {
                continue;
            }
            let class = class_of(self.netlist.instances[members[0]].kind).unwrap_or(Class::Carry);
            let rects: Vec<(usize, usize, usize, usize)> = match self.regions_for(members[0]) {
                None => vec![self.full()],
                Some(regions) => {
                    let mut v: Vec<_> = regions.iter().map(|&r| self.device.region_site_bounds(r)).collect();
                    v.push(self.full());
                    v
                }
            };
            let found = rects.iter().find_map(|&rect| self.best_segment(members, class, rect));
            let Some((sx, sy)) = found else {
                return Err(Error::NoSite {
                    inst: self.netlist.instances[members[0]].name.clone(),
                });
            };
            for (j, &m) in members.iter().enumerate() {
                self.assign(m, class, sx, sy + j);
                if self.plan.is_some_and(|p| p.mapping[m] != self.device.region_of_site(sx, sy + j)) {
                    self.fallbacks += 1;
                }
            }
        }
        Ok(())
    }

    fn best_segment(&self, members: &[usize], class: Class, rect: (usize, usize, usize, usize)) -> Option<(usize, usize)> {
        let (x0, x1, y0, y1) = rect;
        let k = members.len();
        if y1 < y0 + k {
            return None;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for sx in x0..x1 {
            if self.fabric.caps[sx].range(class).is_empty() {
                continue;
            }
            for base in y0..=y1 - k {
                if (0..k).any(|j| self.fabric.free_slot(class, sx, base + j).is_none()) {
                    continue;
                }
                let cost: f64 = members
                    .iter()
                    .enumerate()
                    .map(|(j, &m)| (sx as f64 + 0.5 - self.xs[m]).abs() + ((base + j) as f64 + 0.5 - self.ys[m]).abs())
                    .sum();
                if best.is_none_or(|b| cost < b.0) {
                    best = Some((cost, sx, base));
                }
            }
        }
        best.map(|b| (b.1, b.2))
    }

    /// Lazy priority queue: the globally cheapest move is taken first, and an
    /// instance whose site filled up meanwhile is re-queued.
    fn place_class(&mut self, insts: Vec<usize>, class: Class) -> Result<()> {
        let mut heap = BinaryHeap::new();
        for i in insts {
            heap.push(self.candidate(i, class).ok_or_else(|| self.no_site(i))?);
        }
        while let Some(c) = heap.pop() {
            if self.fabric.free_slot(class, c.x, c.y).is_some() {
                self.assign(c.inst, class, c.x, c.y);
                if c.fallback {
                    self.fallbacks += 1;
                }
            } else {
                heap.push(self.candidate(c.inst, class).ok_or_else(|| self.no_site(c.inst))?);
            }
        }
        Ok(())
    }

    fn no_site(&self, i: usize) -> Error {
        Error::NoSite {
            inst: self.netlist.instances[i].name.clone(),
        }
    }
}

/// Assigns every instance to a compatible site inside its planned clock
/// region, falling back to the nearest other region when the home region is
/// full. Chains occupy consecutive sites of one column in cascade order.
pub fn legalize(
    netlist: &Netlist,
    xs: &[f64],
    ys: &[f64],
    plan: Option<&ClockPlan>,
    device: &Device,
) -> Result<SiteAssignment> {
    let n = netlist.num_instances();
    let mut lg = Legalizer {
        netlist,
        device,
        xs,
        ys,
        plan,
        fabric: Fabric::new(device),
        sites: vec![None; n],
        fallbacks: 0,
    };
    lg.place_fixed();
    lg.place_chains()?;
    let order = [
        Class::Dsp,
        Class::Bram,
        Class::Lutm(SliceMode::Dram),
        Class::Lutm(SliceMode::Shift),
        Class::Carry,
        Class::Lut,
        Class::Ff,
    ];
    for class in order {
        let insts: Vec<usize> = (0..n)
            .filter(|&i| lg.sites[i].is_none() && class_of(netlist.instances[i].kind) == Some(class))
            .collect();
        lg.place_class(insts, class)?;
    }

    let sites: Vec<Site> = lg.sites.into_iter().map(|s| s.expect("every instance placed")).collect();
    let (mut total, mut worst) = (0.0, 0.0_f64);
    for (i, s) in sites.iter().enumerate() {
        if netlist.instances[i].fixed {
            continue;
        }
        let (cx, cy) = s.centre();
        let d = (cx - xs[i]).abs() + (cy - ys[i]).abs();
        total += d;
        worst = worst.max(d);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = sites.iter().map(|s| s.centre()).unzip();
    Ok(SiteAssignment {
        region_demand: clock_demand(netlist, &lx, &ly, device),
        sites,
        displacement: total,
        max_displacement: worst,
        fallbacks: lg.fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: &'static str,
    pub detail: String,
}

fn violation(kind: &'static str, detail: String) -> Violation {
    Violation { kind, detail }
}

/// Checks slot capacities and compatibility, SLICEM mode exclusivity and
/// chain shape. Fixed instances are exempt from slot checks.
pub fn check_legality(netlist: &Netlist, device: &Device, sites: &[Option<Site>]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut slots: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut modes: BTreeMap<(usize, usize), BTreeSet<SliceMode>> = BTreeMap::new();
    for (i, inst) in netlist.instances.iter().enumerate() {
        let Some(s) = sites[i] else {
            out.push(violation("unplaced", inst.name.clone()));
            continue;
        };
        if s.x >= device.width || s.y >= device.height {
            out.push(violation("bounds", format!("{} at ({}, {})", inst.name, s.x, s.y)));
            continue;
        }
        let (Some(class), false) = (class_of(inst.kind), inst.fixed) else {
            continue;
        };
        let kind = device.site_kind(s.x);
        let caps = Caps::of(device, kind);
        let fits = match class {
            Class::Lutm(_) => caps.lutm > 0,
            _ => true,
        } && caps.range(class).contains(&s.slot);
        if !fits {
            out.push(violation(
                "incompatible",
                format!("{} ({}) on {} slot {}", inst.name, inst.kind.name(), kind.name(), s.slot),
            ));
            continue;
        }
        if let Some(prev) = slots.insert((s.x, s.y, s.slot), i) {
            out.push(violation(
                "slot_conflict",
                format!("{} and {} share ({}, {}) slot {}", netlist.instances[prev].name, inst.name, s.x, s.y, s.slot),
            ));
        }
        if caps.lutm > 0 {
            let mode = match class {
                Class::Lut => Some(SliceMode::Lut),
                Class::Lutm(m) => Some(m),
                _ => None,
            };
            if let Some(m) = mode {
                modes.entry((s.x, s.y)).or_default().insert(m);
            }
        }
    }
    for ((x, y), set) in modes {
        if set.len() > 1 {
            out.push(violation("mode_mixing", format!("SLICEM ({x}, {y}) mixes {set:?}")));
        }
    }
    for chain in &netlist.chains {
        let placed: Option<Vec<Site>> = chain.members.iter().map(|&m| sites[m]).collect();
        let Some(placed) = placed else { continue };
        let ok = placed
            .windows(2)
            .all(|w| w[1].x == w[0].x && w[1].y == w[0].y + 1);
        if !ok {
            out.push(violation("chain", format!("chain {} is not one consecutive column", chain.name)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HalfColumnViolation {
    pub half_column: usize,
    /// First of the two site columns.
    pub x: usize,
    /// Half-row index, two per clock-region row.
    pub half_row: usize,
    pub clocks: usize,
}

/// Half columns whose distinct clock nets exceed the device limit. A clock
/// net counts in every half column holding one of its pins' instances.
pub fn check_half_columns(netlist: &Netlist, device: &Device, sites: &[Site]) -> Vec<HalfColumnViolation> {
    let cols = device.num_half_column_cols();
    let mut count = vec![0usize; device.num_half_columns()];
    for (_, net) in netlist.clock_nets() {
        let hcs: BTreeSet<usize> = net
            .pins
            .iter()
            .map(|p| {
                let s = sites[p.inst];
                device.half_column_of_site(s.x, s.y)
            })
            .collect();
        for h in hcs {
            count[h] += 1;
        }
    }
    count
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > device.hc_limit)
        .map(|(h, &c)| HalfColumnViolation {
            half_column: h,
            x: (h % cols) * 2,
            half_row: h / cols,
            clocks: c,
        })
        .collect()
}
