use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::device::{parse_num, Device};
use super::field::{FieldKind, PerField};
use crate::error::{parse_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstKind {
    #[serde(rename = "LUT")]
    Lut,
    #[serde(rename = "FF")]
    Ff,
    #[serde(rename = "DSP")]
    Dsp,
    #[serde(rename = "BRAM")]
    Bram,
    #[serde(rename = "DRAM")]
    Dram,
    #[serde(rename = "SHIFT")]
    Shift,
    #[serde(rename = "CARRY")]
    Carry,
    #[serde(rename = "IO")]
    Io,
}

impl InstKind {
    pub const ALL: [InstKind; 8] = [
        InstKind::Lut,
        InstKind::Ff,
        InstKind::Dsp,
        InstKind::Bram,
        InstKind::Dram,
        InstKind::Shift,
        InstKind::Carry,
        InstKind::Io,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstKind::Lut => "LUT",
            InstKind::Ff => "FF",
            InstKind::Dsp => "DSP",
            InstKind::Bram => "BRAM",
            InstKind::Dram => "DRAM",
            InstKind::Shift => "SHIFT",
            InstKind::Carry => "CARRY",
            InstKind::Io => "IO",
        }
    }

    /// Resource units consumed per field.
    pub fn demand(self) -> PerField<f64> {
        let mut d = PerField::zeros();
        match self {
            InstKind::Lut => d[FieldKind::Lutl] = 1.0,
            InstKind::Ff => d[FieldKind::Ff] = 1.0,
            InstKind::Dsp => d[FieldKind::Dsp] = 1.0,
            InstKind::Bram => d[FieldKind::Bram] = 1.0,
            InstKind::Dram | InstKind::Shift => {
                d[FieldKind::Lutl] = 1.0;
                d[FieldKind::LutmAl] = 1.0;
            }
            InstKind::Carry => d[FieldKind::Carry] = 1.0,
            InstKind::Io => {}
        }
        d
    }

    /// Register-bounded kinds start and end timing paths.
    pub fn is_sequential(self) -> bool {
        !matches!(self, InstKind::Lut | InstKind::Carry)
    }

    /// Field used for display and legalization class.
    pub fn primary_field(self) -> Option<FieldKind> {
        match self {
            InstKind::Lut => Some(FieldKind::Lutl),
            InstKind::Ff => Some(FieldKind::Ff),
            InstKind::Dsp => Some(FieldKind::Dsp),
            InstKind::Bram => Some(FieldKind::Bram),
            InstKind::Dram | InstKind::Shift => Some(FieldKind::LutmAl),
            InstKind::Carry => Some(FieldKind::Carry),
            InstKind::Io => None,
        }
    }
}

impl fmt::Display for InstKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InstKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown instance kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub kind: InstKind,
    pub demand: PerField<f64>,
    pub fixed: bool,
    /// Location for fixed instances, in site units.
    pub fixed_at: Option<(f64, f64)>,
    pub chain: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub inst: usize,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub name: String,
    /// First pin drives the net; the rest are sinks.
    pub pins: Vec<Pin>,
    pub is_clock: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarryChain {
    pub name: String,
    /// Members in cascade order, lowest bit first.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Netlist {
    pub instances: Vec<Instance>,
    pub nets: Vec<Net>,
    pub chains: Vec<CarryChain>,
    index: HashMap<String, usize>,
}

impl Netlist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_instance(&mut self, name: impl Into<String>, kind: InstKind) -> usize {
        let name = name.into();
        let id = self.instances.len();
        self.index.insert(name.clone(), id);
        self.instances.push(Instance {
            name,
            kind,
            demand: kind.demand(),
            fixed: false,
            fixed_at: None,
            chain: None,
        });
        id
    }

    pub fn fix(&mut self, inst: usize, x: f64, y: f64) {
        self.instances[inst].fixed = true;
        self.instances[inst].fixed_at = Some((x, y));
    }

    pub fn add_net(&mut self, name: impl Into<String>, pins: Vec<Pin>, is_clock: bool) -> usize {
        self.nets.push(Net {
            name: name.into(),
            pins,
            is_clock,
            weight: 1.0,
        });
        self.nets.len() - 1
    }

    pub fn add_chain(&mut self, name: impl Into<String>, members: Vec<usize>) -> usize {
        let id = self.chains.len();
        for (k, &m) in members.iter().enumerate() {
            self.instances[m].chain = Some((id, k));
        }
        self.chains.push(CarryChain {
            name: name.into(),
            members,
        });
        id
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn movable(&self) -> impl Iterator<Item = usize> + '_ {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, i)| !i.fixed)
            .map(|(id, _)| id)
    }

    /// Signal nets with at least two pins.
    pub fn signal_nets(&self) -> impl Iterator<Item = (usize, &Net)> + '_ {
        self.nets
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_clock && n.pins.len() >= 2)
    }

    pub fn clock_nets(&self) -> impl Iterator<Item = (usize, &Net)> + '_ {
        self.nets.iter().enumerate().filter(|(_, n)| n.is_clock)
    }

    /// Number of pins per instance over signal nets.
    pub fn pin_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.instances.len()];
        for (_, n) in self.signal_nets() {
            for p in &n.pins {
                c[p.inst] += 1;
            }
        }
        c
    }

    /// Clock nets incident to each instance.
    pub fn clocks_of(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.instances.len()];
        for (cid, (_, net)) in self.clock_nets().enumerate() {
            for p in &net.pins {
                if out[p.inst].last() != Some(&cid) {
                    out[p.inst].push(cid);
                }
            }
        }
        out
    }

    pub fn total_demand(&self) -> PerField<f64> {
        let mut d = PerField::zeros();
        for inst in &self.instances {
            for f in FieldKind::ALL {
                d[f] += inst.demand[f];
            }
        }
        d
    }

    /// Checks total demand against device capacity.
    pub fn check_capacity(&self, device: &Device) -> Result<()> {
        let demand = self.total_demand();
        let cap = device.total_capacity();
        for f in FieldKind::ALL {
            if demand[f] > cap[f] + 1e-9 {
                return Err(Error::Infeasible {
                    field: f,
                    demand: demand[f],
                    capacity: cap[f],
                });
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, device: &Device) -> Result<Self> {
        let mut nl = Netlist::new();
        let mut chain_members: HashMap<String, Vec<(usize, usize, usize)>> = HashMap::new();
        let mut chain_order: Vec<String> = Vec::new();
        let mut pending_fix: Vec<(usize, String, f64, f64)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok[0] {
                "inst" => {
                    if tok.len() != 3 && tok.len() != 6 {
                        return Err(parse_err(
                            line_no,
                            "expected `inst <name> <kind> [chain <id> <idx>]`",
                        ));
                    }
                    let kind = tok[2].parse::<InstKind>().map_err(|e| parse_err(line_no, e))?;
                    if nl.lookup(tok[1]).is_some() {
                        return Err(parse_err(line_no, format!("duplicate instance `{}`", tok[1])));
                    }
                    let id = nl.add_instance(tok[1], kind);
                    if tok.len() == 6 {
                        if tok[3] != "chain" {
                            return Err(parse_err(line_no, "expected `chain <id> <idx>`"));
                        }
                        if kind != InstKind::Carry {
                            return Err(parse_err(line_no, "only CARRY instances form chains"));
                        }
                        let pos = parse_num::<usize>(line_no, tok[5])?;
                        let key = tok[4].to_string();
                        if !chain_members.contains_key(&key) {
                            chain_order.push(key.clone());
                        }
                        chain_members.entry(key).or_default().push((pos, id, line_no));
                    }
                }
                "net" => {
                    let mut rest = &tok[1..];
                    let name = rest
                        .first()
                        .ok_or_else(|| parse_err(line_no, "net without a name"))?;
                    rest = &rest[1..];
                    let is_clock = rest.first() == Some(&"clock");
                    if is_clock {
                        rest = &rest[1..];
                    }
                    let mut pins = Vec::with_capacity(rest.len());
                    for p in rest {
                        let parts: Vec<&str> = p.split(':').collect();
                        if parts.len() != 3 {
                            return Err(parse_err(line_no, format!("malformed pin `{p}`")));
                        }
                        let inst = nl.lookup(parts[0]).ok_or_else(|| {
                            parse_err(line_no, format!("dangling pin reference `{}`", parts[0]))
                        })?;
                        pins.push(Pin {
                            inst,
                            dx: parse_num(line_no, parts[1])?,
                            dy: parse_num(line_no, parts[2])?,
                        });
                    }
                    if pins.is_empty() {
                        return Err(parse_err(line_no, format!("net `{name}` has no pins")));
                    }
                    nl.add_net(*name, pins, is_clock);
                }
                "fix" => {
                    if tok.len() != 4 {
                        return Err(parse_err(line_no, "expected `fix <name> <x> <y>`"));
                    }
                    let x: f64 = parse_num(line_no, tok[2])?;
                    let y: f64 = parse_num(line_no, tok[3])?;
                    pending_fix.push((line_no, tok[1].to_string(), x, y));
                }
                other => return Err(parse_err(line_no, format!("unknown directive `{other}`"))),
            }
        }

        for (line_no, name, x, y) in pending_fix {
            let id = nl
                .lookup(&name)
                .ok_or_else(|| parse_err(line_no, format!("fix of unknown instance `{name}`")))?;
            if !(x >= 0.0 && y >= 0.0 && x <= device.width as f64 && y <= device.height as f64) {
                return Err(Error::Bounds {
                    line: line_no,
                    what: "fixed instance",
                    x: x as i64,
                    y: y as i64,
                    width: device.width,
                    height: device.height,
                });
            }
            nl.fix(id, x, y);
        }
        if let Some(io) = nl
            .instances
            .iter()
            .find(|i| i.kind == InstKind::Io && !i.fixed)
        {
            return Err(parse_err(0, format!("IO instance `{}` has no fix line", io.name)));
        }

        for key in chain_order {
            let mut members = chain_members.remove(&key).unwrap_or_default();
            members.sort_by_key(|m| m.0);
            for (expect, &(pos, _, line_no)) in members.iter().enumerate() {
                if pos != expect {
                    return Err(parse_err(
                        line_no,
                        format!("chain `{key}` has nonconsecutive indices (expected {expect}, got {pos})"),
                    ));
                }
            }
            let ids = members.iter().map(|m| m.1).collect();
            nl.add_chain(key, ids);
        }
        Ok(nl)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for inst in &self.instances {
            let _ = write!(s, "inst {} {}", inst.name, inst.kind);
            if let Some((c, k)) = inst.chain {
                let _ = write!(s, " chain {} {k}", self.chains[c].name);
            }
            s.push('\n');
        }
        for inst in &self.instances {
            if let Some((x, y)) = inst.fixed_at {
                let _ = writeln!(s, "fix {} {x} {y}", inst.name);
            }
        }
        for net in &self.nets {
            let _ = write!(s, "net {}", net.name);
            if net.is_clock {
                s.push_str(" clock");
            }
            for p in &net.pins {
                let _ = write!(s, " {}:{}:{}", self.instances[p.inst].name, p.dx, p.dy);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::SiteKind;

    fn dev() -> Device {
        let mut cols = vec![SiteKind::Slicel; 8];
        cols[0] = SiteKind::Iocol;
        cols[4] = SiteKind::Slicem;
        Device::new(8, 8, cols, 2, 2).unwrap()
    }

    #[test]
    fn lut_demand_only_in_lutl() {
        let nl = Netlist::parse("inst a LUT\n", &dev()).unwrap();
        let d = nl.instances[0].demand;
        assert_eq!(d[FieldKind::Lutl], 1.0);
        assert_eq!(d[FieldKind::LutmAl], 0.0);
        assert_eq!(d.0.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn shift_and_dram_occupy_both_lut_fields() {
        let nl = Netlist::parse("inst s SHIFT\ninst r DRAM\n", &dev()).unwrap();
        for inst in &nl.instances {
            assert_eq!(inst.demand[FieldKind::Lutl], 1.0);
            assert_eq!(inst.demand[FieldKind::LutmAl], 1.0);
        }
    }

    #[test]
    fn empty_netlist() {
        let nl = Netlist::parse("", &dev()).unwrap();
        assert_eq!(nl.num_instances(), 0);
        assert!(nl.nets.is_empty());
    }

    #[test]
    fn io_is_fixed_and_demandless() {
        let nl = Netlist::parse("inst p IO\nfix p 0.5 3.5\ninst a LUT\nnet n p:0:0 a:0:0\n", &dev())
            .unwrap();
        assert!(nl.instances[0].fixed);
        assert!(nl.instances[0].demand.is_zero());
        assert_eq!(nl.instances[0].fixed_at, Some((0.5, 3.5)));
        let err = Netlist::parse("inst p IO\n", &dev()).unwrap_err();
        assert!(err.to_string().contains("no fix line"));
    }

    #[test]
    fn rejects_bad_input() {
        let d = dev();
        assert!(matches!(
            Netlist::parse("inst a GATE\n", &d),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Netlist::parse("inst a LUT\nnet n a:0:0 b:0:0\n", &d),
            Err(Error::Parse { line: 2, .. })
        ));
        let chain = "inst c0 CARRY chain k 0\ninst c2 CARRY chain k 2\n";
        let err = Netlist::parse(chain, &d).unwrap_err();
        assert!(err.to_string().contains("nonconsecutive"), "{err}");
        assert!(matches!(
            Netlist::parse("inst a LUT\nfix a 20 1\n", &d),
            Err(Error::Bounds { line: 2, .. })
        ));
    }

    #[test]
    fn chains_follow_cascade_index() {
        let text = "inst c1 CARRY chain k 1\ninst c0 CARRY chain k 0\ninst c2 CARRY chain k 2\n";
        let nl = Netlist::parse(text, &dev()).unwrap();
        assert_eq!(nl.chains.len(), 1);
        let names: Vec<_> = nl.chains[0]
            .members
            .iter()
            .map(|&m| nl.instances[m].name.as_str())
            .collect();
        assert_eq!(names, ["c0", "c1", "c2"]);
        assert_eq!(nl.instances[0].chain, Some((0, 1)));
    }

    #[test]
    fn text_round_trip() {
        let text = "inst p IO\ninst a LUT\ninst b FF\ninst c0 CARRY chain ch 0\ninst c1 CARRY chain ch 1\n\
                    fix p 0.5 0.5\nnet n1 p:0:0 a:0.25:-0.5 b:0:0\nnet clk clock b:0:0\nnet cc c0:0:0 c1:0:0\n";
        let d = dev();
        let nl = Netlist::parse(text, &d).unwrap();
        let again = Netlist::parse(&nl.to_text(), &d).unwrap();
        assert_eq!(nl, again);
        assert!(again.nets[1].is_clock);
    }
}
