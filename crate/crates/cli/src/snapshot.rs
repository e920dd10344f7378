//! Self-contained placement dumps and their SVG rendering.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use heteroplace::arch::{Device, FieldKind, Netlist};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpInstance {
    pub name: String,
    pub kind: String,
    /// Primary resource field, `IO` for pads.
    pub field: String,
    pub x: f64,
    pub y: f64,
}

/// Everything needed to redraw a placement without the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub iteration: usize,
    pub width: usize,
    pub height: usize,
    /// Clock-region boundaries along x and y.
    pub region_x: Vec<f64>,
    pub region_y: Vec<f64>,
    pub instances: Vec<DumpInstance>,
    /// Instance indices of every carry chain, lowest bit first.
    pub chains: Vec<Vec<usize>>,
}

impl StateDump {
    pub fn capture(netlist: &Netlist, device: &Device, xs: &[f64], ys: &[f64], iteration: usize) -> Self {
        let mut rx = BTreeSet::new();
        let mut ry = BTreeSet::new();
        for r in 0..device.num_regions() {
            let rect = device.region_rect(r);
            rx.extend([rect.x0.to_bits(), rect.x1.to_bits()]);
            ry.extend([rect.y0.to_bits(), rect.y1.to_bits()]);
        }
        let sorted = |s: BTreeSet<u64>| {
            let mut v: Vec<f64> = s.into_iter().map(f64::from_bits).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        StateDump {
            iteration,
            width: device.width,
            height: device.height,
            region_x: sorted(rx),
            region_y: sorted(ry),
            instances: netlist
                .instances
                .iter()
                .enumerate()
                .map(|(i, inst)| DumpInstance {
                    name: inst.name.clone(),
                    kind: inst.kind.name().to_string(),
                    field: inst.kind.primary_field().map_or("IO", FieldKind::name).to_string(),
                    x: xs[i],
                    y: ys[i],
                })
                .collect(),
            chains: netlist.chains.iter().map(|c| c.members.clone()).collect(),
        }
    }
}

fn colour(field: &str) -> &'static str {
    match field {
        "LUTL" => "#4e79a7",
        "LUTM-AL" => "#f28e2b",
        "FF" => "#59a14f",
        "CARRY" => "#e15759",
        "DSP" => "#b07aa1",
        "BRAM" => "#edc948",
        _ => "#79706e",
    }
}

const SCALE: f64 = 20.0;

/// Instances as dots coloured by field, clock regions as a grid, chains as
/// strokes. The y axis points up.
pub fn render_svg(dump: &StateDump) -> String {
    let (w, h) = (dump.width as f64 * SCALE, dump.height as f64 * SCALE);
    let px = |x: f64| x * SCALE;
    let py = |y: f64| h - y * SCALE;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white" stroke="black"/>"#);
    let _ = writeln!(out, r##"<g class="regions" stroke="#999" stroke-dasharray="4 2">"##);
    for &x in &dump.region_x {
        let _ = writeln!(out, r#"<line x1="{0}" y1="0" x2="{0}" y2="{h}"/>"#, px(x));
    }
    for &y in &dump.region_y {
        let _ = writeln!(out, r#"<line x1="0" y1="{0}" x2="{w}" y2="{0}"/>"#, py(y));
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g class="instances">"#);
    for inst in &dump.instances {
        let _ = writeln!(
            out,
            r#"<circle class="{}" cx="{:.3}" cy="{:.3}" r="3" fill="{}"><title>{}</title></circle>"#,
            inst.field,
            px(inst.x),
            py(inst.y),
            colour(&inst.field),
            inst.name
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g class="chains" fill="none" stroke="black" stroke-width="2">"#);
    for chain in &dump.chains {
        let pts: Vec<String> = chain
            .iter()
            .filter_map(|&i| dump.instances.get(i))
            .map(|inst| format!("{:.3},{:.3}", px(inst.x), py(inst.y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}"/>"#, pts.join(" "));
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use heteroplace::arch::{InstKind, SiteKind};

    fn dump(kinds: &[InstKind]) -> StateDump {
        let device = Device::new(4, 4, vec![SiteKind::Slicem; 4], 2, 2).unwrap();
        let mut nl = Netlist::new();
        for (k, &kind) in kinds.iter().enumerate() {
            nl.add_instance(format!("i{k}"), kind);
        }
        let xs: Vec<f64> = (0..kinds.len()).map(|k| k as f64 * 0.5).collect();
        StateDump::capture(&nl, &device, &xs, &xs, 0)
    }

    #[test]
    fn empty_dump_draws_grid_only() {
        let svg = render_svg(&dump(&[]));
        assert!(!svg.contains("<circle"));
        assert_eq!(svg.matches("<line").count(), 6);
    }

    #[test]
    fn fields_get_distinct_colours() {
        let svg = render_svg(&dump(&[InstKind::Lut, InstKind::Ff, InstKind::Shift, InstKind::Carry]));
        let fills: BTreeSet<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .filter_map(|l| l.split("fill=\"").nth(1)?.split('"').next())
            .collect();
        assert_eq!(fills.len(), 4);
    }

    #[test]
    fn dump_round_trips_through_json() {
        let d = dump(&[InstKind::Lut, InstKind::Io]);
        let back: StateDump = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.instances[1].field, "IO");
    }
}
