//! Seeded synthetic benchmark generation.
//!
//! Designs are built around hidden 2-D "logic coordinates": nets connect
//! instances that are close in that hidden space, which gives the netlist the
//! locality a real design has and makes a good placement measurably better
//! than a random one. Combinational instances carry a rank that only
//! increases along signal flow, so the combinational graph is acyclic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::device::{Device, SiteKind};
use super::netlist::{InstKind, Netlist, Pin};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub cr_rows: usize,
    pub cr_cols: usize,
    pub cr_limit: usize,
    pub hc_limit: usize,
    /// Fraction of slice columns that are SLICEM.
    pub slicem_fraction: f64,
    pub dsp_columns: usize,
    pub bram_columns: usize,
    pub lut: usize,
    pub ff: usize,
    pub dsp: usize,
    pub bram: usize,
    pub dram: usize,
    pub shift: usize,
    pub io_in: usize,
    pub io_out: usize,
    pub chains: usize,
    pub chain_min: usize,
    pub chain_max: usize,
    pub clock_nets: usize,
    /// Mean number of sinks per signal net.
    pub mean_fanout: f64,
    pub max_fanout: usize,
    /// Length (in LUTs) of an extra corner-to-corner path; 0 disables it.
    pub long_path: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 24,
            height: 24,
            cr_rows: 2,
            cr_cols: 2,
            cr_limit: 24,
            hc_limit: 12,
            slicem_fraction: 0.25,
            dsp_columns: 1,
            bram_columns: 1,
            lut: 200,
            ff: 200,
            dsp: 4,
            bram: 4,
            dram: 8,
            shift: 8,
            io_in: 8,
            io_out: 8,
            chains: 4,
            chain_min: 2,
            chain_max: 6,
            clock_nets: 2,
            mean_fanout: 2.5,
            max_fanout: 12,
            long_path: 0,
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// A roughly 2,000-instance heterogeneous design with 8 clock nets.
    pub fn medium() -> Self {
        SynthSpec {
            width: 44,
            height: 40,
            cr_rows: 2,
            cr_cols: 2,
            slicem_fraction: 0.25,
            dsp_columns: 2,
            bram_columns: 2,
            lut: 760,
            ff: 760,
            dsp: 24,
            bram: 16,
            dram: 40,
            shift: 40,
            io_in: 24,
            io_out: 24,
            chains: 24,
            chain_min: 4,
            chain_max: 12,
            clock_nets: 8,
            ..SynthSpec::default()
        }
    }

    pub fn columns(&self) -> Vec<SiteKind> {
        let w = self.width;
        let mut cols: Vec<Option<SiteKind>> = vec![None; w];
        let has_io = self.io_in + self.io_out > 0 && w >= 3;
        if has_io {
            cols[0] = Some(SiteKind::Iocol);
            cols[w - 1] = Some(SiteKind::Iocol);
        }
        let (lo, hi) = if has_io { (1, w - 1) } else { (0, w) };
        let span = hi - lo;
        let mut place = |count: usize, kind: SiteKind, phase: f64| {
            for k in 0..count {
                let mut x = lo + (((k as f64 + phase) * span as f64) / count as f64) as usize;
                while x < hi && cols[x].is_some() {
                    x += 1;
                }
                if x >= hi {
                    x = lo;
                    while x < hi && cols[x].is_some() {
                        x += 1;
                    }
                }
                if x < hi {
                    cols[x] = Some(kind);
                }
            }
        };
        place(self.dsp_columns, SiteKind::Dspcol, 0.35);
        place(self.bram_columns, SiteKind::Bramcol, 0.7);
        let mut slice_idx = 0usize;
        cols.into_iter()
            .map(|c| {
                c.unwrap_or_else(|| {
                    let f = self.slicem_fraction;
                    let j = slice_idx as f64;
                    slice_idx += 1;
                    // SLICEM whenever the running count of SLICEM columns steps up
                    if ((j + 1.0) * f + 0.5).floor() > (j * f + 0.5).floor() {
                        SiteKind::Slicem
                    } else {
                        SiteKind::Slicel
                    }
                })
            })
            .collect()
    }

    pub fn device(&self) -> Result<Device> {
        Ok(
            Device::new(self.width, self.height, self.columns(), self.cr_rows, self.cr_cols)?
                .with_limits(self.cr_limit, self.hc_limit),
        )
    }
}

struct Builder {
    nl: Netlist,
    hidden: Vec<(f64, f64)>,
    rank: Vec<f64>,
    sinks: Vec<Vec<usize>>,
    has_input: Vec<bool>,
}

impl Builder {
    fn add(&mut self, name: String, kind: InstKind, hidden: (f64, f64), rank: f64) -> usize {
        let id = self.nl.add_instance(name, kind);
        self.hidden.push(hidden);
        self.rank.push(rank);
        self.sinks.push(Vec::new());
        self.has_input.push(false);
        id
    }

    fn kind(&self, i: usize) -> InstKind {
        self.nl.instances[i].kind
    }

    fn can_drive(&self, driver: usize, sink: usize) -> bool {
        if driver == sink || self.kind(sink) == InstKind::Io && self.hidden[sink].0 < 0.5 {
            return false;
        }
        if self.kind(driver) == InstKind::Io && self.hidden[driver].0 > 0.5 {
            return false;
        }
        let comb = |i: usize| !self.kind(i).is_sequential();
        !(comb(driver) && comb(sink)) || self.rank[sink] > self.rank[driver]
    }

    fn connect(&mut self, driver: usize, sink: usize) {
        if !self.sinks[driver].contains(&sink) {
            self.sinks[driver].push(sink);
            self.has_input[sink] = true;
        }
    }
}

struct Buckets {
    side: usize,
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(points: &[(f64, f64)]) -> Self {
        let side = ((points.len() as f64 / 6.0).sqrt().ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); side * side];
        for (i, &(x, y)) in points.iter().enumerate() {
            let (cx, cy) = Self::cell(side, x, y);
            cells[cy * side + cx].push(i);
        }
        Buckets { side, cells }
    }

    fn cell(side: usize, x: f64, y: f64) -> (usize, usize) {
        let f = |v: f64| ((v * side as f64) as usize).min(side - 1);
        (f(x.clamp(0.0, 1.0)), f(y.clamp(0.0, 1.0)))
    }

    fn near(&self, x: f64, y: f64, radius: usize, out: &mut Vec<usize>) {
        out.clear();
        let (cx, cy) = Self::cell(self.side, x, y);
        let r = radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < self.side && (ny as usize) < self.side {
                    out.extend_from_slice(&self.cells[ny as usize * self.side + nx as usize]);
                }
            }
        }
    }
}

/// Builds a deterministic synthetic device and netlist.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<(Device, Netlist)> {
    let device = spec.device()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        nl: Netlist::new(),
        hidden: Vec::new(),
        rank: Vec::new(),
        sinks: Vec::new(),
        has_input: Vec::new(),
    };
    let (w, h) = (device.width as f64, device.height as f64);
    let io_row = |k: usize, n: usize| ((k as f64 + 0.5) * h / n as f64).floor() + 0.5;

    let mut pis = Vec::new();
    for k in 0..spec.io_in {
        let y = io_row(k, spec.io_in);
        let id = b.add(format!("pi{k}"), InstKind::Io, (0.0, y / h), f64::NAN);
        b.nl.fix(id, 0.5, y);
        pis.push(id);
    }
    let mut pos = Vec::new();
    for k in 0..spec.io_out {
        let y = io_row(k, spec.io_out);
        let id = b.add(format!("po{k}"), InstKind::Io, (1.0, y / h), f64::NAN);
        b.nl.fix(id, w - 0.5, y);
        pos.push(id);
    }

    let plain = [
        (InstKind::Lut, spec.lut, "lut"),
        (InstKind::Ff, spec.ff, "ff"),
        (InstKind::Dsp, spec.dsp, "dsp"),
        (InstKind::Bram, spec.bram, "bram"),
        (InstKind::Dram, spec.dram, "dram"),
        (InstKind::Shift, spec.shift, "shift"),
    ];
    for (kind, count, prefix) in plain {
        for k in 0..count {
            let hid = (rng.gen::<f64>(), rng.gen::<f64>());
            let rank = if kind.is_sequential() { f64::NAN } else { hid.0 + 1e-9 * k as f64 };
            b.add(format!("{prefix}{k}"), kind, hid, rank);
        }
    }

    let mut chain_ids = Vec::new();
    for c in 0..spec.chains {
        let len = rng.gen_range(spec.chain_min.max(1)..=spec.chain_max.max(spec.chain_min.max(1)));
        let base = (rng.gen::<f64>(), rng.gen::<f64>());
        let members: Vec<usize> = (0..len)
            .map(|k| {
                let hid = (base.0, (base.1 + 0.01 * k as f64).min(1.0));
                b.add(format!("carry{c}_{k}"), InstKind::Carry, hid, base.0 + 1e-6 * k as f64)
            })
            .collect();
        for pair in members.windows(2) {
            b.connect(pair[0], pair[1]);
        }
        chain_ids.push(members);
    }

    let mut long_path = Vec::new();
    if spec.long_path > 0 {
        let n = spec.long_path;
        for k in 0..n {
            let t = (k + 1) as f64 / (n + 1) as f64;
            long_path.push(b.add(format!("lp{k}"), InstKind::Lut, (t, t), t));
        }
        let first = pis.first().copied();
        let last = pos.last().copied();
        let mut chain: Vec<usize> = first.into_iter().collect();
        chain.extend(&long_path);
        chain.extend(last);
        for pair in chain.windows(2) {
            b.connect(pair[0], pair[1]);
        }
    }

    let buckets = Buckets::new(&b.hidden);
    let p = 1.0 / spec.mean_fanout.max(1.0);
    let n = b.nl.num_instances();
    let mut near = Vec::new();
    for driver in 0..n {
        if b.kind(driver) == InstKind::Io && b.hidden[driver].0 > 0.5 {
            continue;
        }
        let mut extra = 1usize;
        while extra < spec.max_fanout.max(1) && rng.gen::<f64>() > p {
            extra += 1;
        }
        if long_path.contains(&driver) {
            extra = 3;
        }
        let extra = extra.saturating_sub(b.sinks[driver].len().min(1));
        if extra == 0 {
            continue;
        }
        let (hx, hy) = b.hidden[driver];
        let mut radius = 1;
        loop {
            buckets.near(hx, hy, radius, &mut near);
            near.retain(|&c| b.can_drive(driver, c) && !b.sinks[driver].contains(&c));
            if near.len() >= 2 * extra || radius >= buckets.side {
                break;
            }
            radius += 1;
        }
        near.shuffle(&mut rng);
        for &s in near.iter().take(extra) {
            b.connect(driver, s);
        }
    }

    // every non-input instance receives at least one signal
    let seq_drivers: Vec<usize> = (0..n)
        .filter(|&i| (b.kind(i).is_sequential() && b.kind(i) != InstKind::Io) || pis.contains(&i))
        .collect();
    for sink in 0..n {
        if b.has_input[sink] || pis.contains(&sink) {
            continue;
        }
        let (hx, hy) = b.hidden[sink];
        let mut radius = 1;
        let driver = loop {
            buckets.near(hx, hy, radius, &mut near);
            near.retain(|&d| b.can_drive(d, sink));
            near.sort_unstable();
            if let Some(&d) = near.choose(&mut rng) {
                break Some(d);
            }
            if radius >= buckets.side {
                break seq_drivers.iter().copied().find(|&d| b.can_drive(d, sink));
            }
            radius += 1;
        };
        if let Some(d) = driver {
            b.connect(d, sink);
        }
    }

    for driver in 0..n {
        if b.sinks[driver].is_empty() {
            continue;
        }
        let mut pins = vec![Pin { inst: driver, dx: 0.0, dy: 0.0 }];
        pins.extend(b.sinks[driver].iter().map(|&s| Pin { inst: s, dx: 0.0, dy: 0.0 }));
        let name = format!("n_{}", b.nl.instances[driver].name);
        b.nl.add_net(name, pins, false);
    }

    for (c, members) in chain_ids.into_iter().enumerate() {
        b.nl.add_chain(format!("chain{c}"), members);
    }

    if spec.clock_nets > 0 {
        let k = spec.clock_nets;
        let mut domains: Vec<Vec<usize>> = vec![Vec::new(); k];
        for i in 0..n {
            let kind = b.kind(i);
            if kind == InstKind::Io || !kind.is_sequential() {
                continue;
            }
            let band = ((b.hidden[i].0 * k as f64) as usize).min(k - 1);
            let d = if rng.gen::<f64>() < 0.1 { rng.gen_range(0..k) } else { band };
            domains[d].push(i);
        }
        for (d, members) in domains.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let pins = members.iter().map(|&m| Pin { inst: m, dx: 0.0, dy: 0.0 }).collect();
            b.nl.add_net(format!("clk{d}"), pins, true);
        }
    }

    b.nl.check_capacity(&device)?;
    Ok((device, b.nl))
}
