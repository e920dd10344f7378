//! Static timing analysis with a linear Manhattan delay model and
//! criticality-driven net reweighting.
//!
//! Times are integer femtoseconds so max/min propagation is exact and
//! order-independent.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::arch::{InstKind, Netlist};
use crate::error::{Error, Result};

pub const FS_PER_PS: f64 = 1000.0;

/// Upper bound on accumulated net weights.
pub const WEIGHT_CAP: f64 = 1e6;

pub fn ps_to_fs(ps: f64) -> i64 {
    (ps * FS_PER_PS).round() as i64
}

pub fn fs_to_ps(fs: i64) -> f64 {
    fs as f64 / FS_PER_PS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub period_ps: f64,
    pub setup_ps: f64,
    /// Wire delay per site unit of Manhattan distance.
    pub delay_per_unit_ps: f64,
    pub lut_delay_ps: f64,
    /// Clock-to-output delay of registers.
    pub ff_delay_ps: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            period_ps: 8.0,
            setup_ps: 1.0,
            delay_per_unit_ps: 0.1,
            lut_delay_ps: 0.1,
            ff_delay_ps: 0.1,
        }
    }
}

impl TimingConfig {
    pub fn cell_delay_fs(&self, kind: InstKind) -> i64 {
        match kind {
            InstKind::Lut => ps_to_fs(self.lut_delay_ps),
            InstKind::Ff => ps_to_fs(self.ff_delay_ps),
            _ => 0,
        }
    }
}

/// Delay from a source pin to a sink pin: wire delay proportional to the
/// Manhattan distance plus the source cell delay.
pub fn linear_delay(src: (f64, f64), sink: (f64, f64), per_unit_fs: f64, cell_fs: i64) -> i64 {
    let dist = (src.0 - sink.0).abs() + (src.1 - sink.1).abs();
    (per_unit_fs * dist).round() as i64 + cell_fs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingEdge {
    pub src: usize,
    pub dst: usize,
    pub delay: i64,
    pub net: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TimingGraph {
    pub names: Vec<String>,
    pub edges: Vec<TimingEdge>,
    pub period: i64,
    pub setup: i64,
    pub aat: Vec<i64>,
    pub rat: Vec<i64>,
    /// Per-edge slack `RAT(dst) - AAT(src) - delay`.
    pub slack: Vec<i64>,
    fanin: Vec<Vec<usize>>,
    fanout: Vec<Vec<usize>>,
}

impl TimingGraph {
    pub fn new(names: Vec<String>, edges: Vec<TimingEdge>, period: i64, setup: i64) -> Self {
        let n = names.len();
        let mut fanin = vec![Vec::new(); n];
        let mut fanout = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            fanout[e.src].push(k);
            fanin[e.dst].push(k);
        }
        TimingGraph {
            names,
            slack: vec![0; edges.len()],
            edges,
            period,
            setup,
            aat: vec![0; n],
            rat: vec![0; n],
            fanin,
            fanout,
        }
    }

    /// Graph for the signal nets of `netlist` at the given positions.
    ///
    /// Register-bounded instances split into a capture node (`name/D`) and a
    /// launch node (`name/Q`); combinational instances are a single node.
    pub fn from_netlist(netlist: &Netlist, xs: &[f64], ys: &[f64], cfg: &TimingConfig) -> Self {
        let mut names = Vec::new();
        let mut in_node = Vec::with_capacity(netlist.num_instances());
        let mut out_node = Vec::with_capacity(netlist.num_instances());
        for inst in &netlist.instances {
            if inst.kind.is_sequential() {
                in_node.push(names.len());
                names.push(format!("{}/D", inst.name));
                out_node.push(names.len());
                names.push(format!("{}/Q", inst.name));
            } else {
                in_node.push(names.len());
                out_node.push(names.len());
                names.push(inst.name.clone());
            }
        }
        let per_unit = cfg.delay_per_unit_ps * FS_PER_PS;
        let mut edges = Vec::new();
        for (e, net) in netlist.signal_nets() {
            let drv = net.pins[0];
            let src = (xs[drv.inst] + drv.dx, ys[drv.inst] + drv.dy);
            let cell = cfg.cell_delay_fs(netlist.instances[drv.inst].kind);
            for p in &net.pins[1..] {
                let sink = (xs[p.inst] + p.dx, ys[p.inst] + p.dy);
                edges.push(TimingEdge {
                    src: out_node[drv.inst],
                    dst: in_node[p.inst],
                    delay: linear_delay(src, sink, per_unit, cell),
                    net: Some(e),
                });
            }
        }
        TimingGraph::new(names, edges, ps_to_fs(cfg.period_ps), ps_to_fs(cfg.setup_ps))
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.num_nodes();
        let mut indeg: Vec<usize> = self.fanin.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &k in &self.fanout[v] {
                let d = self.edges[k].dst;
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    queue.push_back(d);
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        // every unordered node has an unordered predecessor; walking back
        // from one must revisit a node, which closes a cycle
        let mut seen = vec![usize::MAX; n];
        let mut v = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
        let mut step = 0;
        loop {
            seen[v] = step;
            step += 1;
            let k = self.fanin[v]
                .iter()
                .copied()
                .find(|&k| indeg[self.edges[k].src] > 0)
                .expect("unordered node without unordered fanin");
            let u = self.edges[k].src;
            if seen[u] != usize::MAX {
                return Err(Error::Cycle {
                    from: self.names[u].clone(),
                    to: self.names[v].clone(),
                });
            }
            v = u;
        }
    }

    /// Computes arrival, required and edge slack values.
    pub fn propagate(&mut self) -> Result<()> {
        let order = self.topo_order()?;
        for &v in &order {
            self.aat[v] = self.fanin[v]
                .iter()
                .map(|&k| self.aat[self.edges[k].src] + self.edges[k].delay)
                .max()
                .unwrap_or(0);
        }
        let required = self.period - self.setup;
        for &v in order.iter().rev() {
            self.rat[v] = self.fanout[v]
                .iter()
                .map(|&k| self.rat[self.edges[k].dst] - self.edges[k].delay)
                .min()
                .unwrap_or(required);
        }
        for (s, e) in self.slack.iter_mut().zip(&self.edges) {
            *s = self.rat[e.dst] - self.aat[e.src] - e.delay;
        }
        Ok(())
    }

    /// Timing endpoints: nodes with fan-in but no fan-out.
    pub fn endpoints(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes()).filter(|&v| self.fanout[v].is_empty() && !self.fanin[v].is_empty())
    }

    pub fn endpoint_slack(&self, v: usize) -> i64 {
        self.rat[v] - self.aat[v]
    }

    /// `(wns, tns)` over endpoints, both non-positive.
    pub fn wns_tns(&self) -> (i64, i64) {
        let mut wns = 0;
        let mut tns = 0;
        for v in self.endpoints() {
            let s = self.endpoint_slack(v).min(0);
            wns = wns.min(s);
            tns += s;
        }
        (wns, tns)
    }

    /// Minimum edge slack per net; `None` for nets without timing edges.
    pub fn net_slacks(&self, num_nets: usize) -> Vec<Option<i64>> {
        let mut out: Vec<Option<i64>> = vec![None; num_nets];
        for (e, &s) in self.edges.iter().zip(&self.slack) {
            if let Some(n) = e.net {
                out[n] = Some(out[n].map_or(s, |o: i64| o.min(s)));
            }
        }
        out
    }

    /// Walks the latest-arriving fan-in back from `endpoint`.
    pub fn critical_path(&self, endpoint: usize) -> Vec<usize> {
        let mut path = vec![endpoint];
        let mut v = endpoint;
        while let Some(&k) = self.fanin[v]
            .iter()
            .max_by_key(|&&k| (self.aat[self.edges[k].src] + self.edges[k].delay, std::cmp::Reverse(k)))
        {
            v = self.edges[k].src;
            path.push(v);
        }
        path.reverse();
        path
    }

    pub fn report(&self, top_k: usize) -> TimingReport {
        let (wns, tns) = self.wns_tns();
        let mut ends: Vec<usize> = self.endpoints().filter(|&v| self.endpoint_slack(v) < 0).collect();
        ends.sort_by_key(|&v| (self.endpoint_slack(v), v));
        let paths = ends
            .into_iter()
            .take(top_k)
            .map(|v| PathReport {
                endpoint: self.names[v].clone(),
                slack_ps: fs_to_ps(self.endpoint_slack(v)),
                arrival_ps: fs_to_ps(self.aat[v]),
                nodes: self.critical_path(v).into_iter().map(|u| self.names[u].clone()).collect(),
            })
            .collect();
        TimingReport {
            wns_ps: fs_to_ps(wns),
            tns_ps: fs_to_ps(tns),
            period_ps: fs_to_ps(self.period),
            paths,
        }
    }
}

/// Builds and propagates the timing graph of `netlist`.
pub fn analyze(netlist: &Netlist, xs: &[f64], ys: &[f64], cfg: &TimingConfig) -> Result<TimingGraph> {
    let mut g = TimingGraph::from_netlist(netlist, xs, ys, cfg);
    g.propagate()?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub endpoint: String,
    pub slack_ps: f64,
    pub arrival_ps: f64,
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub wns_ps: f64,
    pub tns_ps: f64,
    pub period_ps: f64,
    pub paths: Vec<PathReport>,
}

/// `min(0, s) / (min(0, wns) - T)`, in `[0, 1)`.
pub fn criticality(slack: i64, wns: i64, period: i64) -> f64 {
    slack.min(0) as f64 / (wns.min(0) - period) as f64
}

/// Criticality of every net; nets without timing edges are non-critical.
pub fn net_criticality(net_slacks: &[Option<i64>], wns: i64, period: i64) -> Vec<f64> {
    net_slacks
        .iter()
        .map(|s| s.map_or(0.0, |s| criticality(s, wns, period)))
        .collect()
}

/// `alpha * max(1, exp(c))`.
pub fn beta(c: f64, alpha: f64) -> f64 {
    alpha * c.exp().max(1.0)
}

/// Multiplies every weight by its `beta`, capped at [`WEIGHT_CAP`]. Returns
/// how many weights hit the cap.
pub fn reweight(weights: &mut [f64], criticality: &[f64], alpha: f64) -> usize {
    let mut capped = 0;
    for (w, &c) in weights.iter_mut().zip(criticality) {
        let next = *w * beta(c, alpha);
        if next > WEIGHT_CAP {
            capped += 1;
        }
        *w = next.min(WEIGHT_CAP);
    }
    capped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Pin;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize, i64)], period: i64, setup: i64) -> TimingGraph {
        let edges = edges
            .iter()
            .enumerate()
            .map(|(k, &(src, dst, delay))| TimingEdge { src, dst, delay, net: Some(k) })
            .collect();
        TimingGraph::new((0..n).map(|i| format!("v{i}")).collect(), edges, period, setup)
    }

    #[test]
    fn linear_delay_cases() {
        assert_eq!(linear_delay((1.0, 1.0), (1.0, 1.0), 2.0, 0), 0);
        assert_eq!(linear_delay((0.0, 0.0), (3.0, 4.0), 2.0, 0), 14);
        let (a, b) = ((0.3, 7.1), (5.2, 2.4));
        assert_eq!(linear_delay(a, b, 130.0, 5), linear_delay(b, a, 130.0, 5));
    }

    #[test]
    fn single_edge_slack() {
        let (t, setup, d) = (10_000, 1_000, 2_500);
        let mut g = graph(2, &[(0, 1, d)], t, setup);
        g.propagate().unwrap();
        assert_eq!(g.slack[0], t - setup - d);
        assert_eq!(g.endpoint_slack(1), t - setup - d);
    }

    #[test]
    fn parallel_paths_use_latest_arrival() {
        // 0 -> 1 (3), 0 -> 2 (5), 1 -> 3 (0), 2 -> 3 (0)
        let mut g = graph(4, &[(0, 1, 3), (0, 2, 5), (1, 3, 0), (2, 3, 0)], 100, 0);
        g.propagate().unwrap();
        assert_eq!(g.aat[3], 5);
        assert_eq!(g.critical_path(3), vec![0, 2, 3]);
    }

    #[test]
    fn wns_tns_over_endpoints() {
        let mut g = graph(3, &[(0, 1, 1), (0, 2, 1)], 100, 0);
        g.propagate().unwrap();
        assert_eq!(g.wns_tns(), (0, 0));

        // sinks with slack -2 and -5
        let mut g = graph(3, &[(0, 1, 12), (0, 2, 15)], 10, 0);
        g.propagate().unwrap();
        assert_eq!(g.wns_tns(), (-5, -7));

        // one sink with slack -3 fed by three paths
        let mut g = graph(5, &[(0, 4, 13), (1, 4, 11), (2, 3, 4), (3, 4, 4)], 10, 0);
        g.propagate().unwrap();
        assert_eq!(g.wns_tns(), (-3, -3));
    }

    #[test]
    fn cycle_is_reported() {
        let mut g = graph(4, &[(0, 1, 1), (1, 2, 1), (2, 1, 1), (2, 3, 1)], 10, 0);
        match g.propagate() {
            Err(Error::Cycle { from, to }) => {
                let pair = (from.as_str(), to.as_str());
                assert!(pair == ("v1", "v2") || pair == ("v2", "v1"), "{pair:?}");
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn netlist_graph_splits_registers() {
        let mut nl = Netlist::new();
        let a = nl.add_instance("a", InstKind::Ff);
        let l = nl.add_instance("l", InstKind::Lut);
        let b = nl.add_instance("b", InstKind::Ff);
        let pin = |inst| Pin { inst, dx: 0.0, dy: 0.0 };
        nl.add_net("n0", vec![pin(a), pin(l)], false);
        nl.add_net("n1", vec![pin(l), pin(b)], false);
        // feedback through the register is not a combinational cycle
        nl.add_net("n2", vec![pin(b), pin(a)], false);
        let cfg = TimingConfig {
            period_ps: 2.0,
            setup_ps: 0.5,
            delay_per_unit_ps: 0.1,
            lut_delay_ps: 0.2,
            ff_delay_ps: 0.1,
        };
        let g = analyze(&nl, &[0.0, 3.0, 3.0], &[0.0, 0.0, 4.0], &cfg).unwrap();
        assert_eq!(g.num_nodes(), 5);
        // a/Q -> l: 300 + 100; l -> b/D: 400 + 200
        let l_node = g.names.iter().position(|n| n == "l").unwrap();
        let b_d = g.names.iter().position(|n| n == "b/D").unwrap();
        assert_eq!(g.aat[l_node], 400);
        assert_eq!(g.aat[b_d], 1000);
        assert_eq!(g.endpoint_slack(b_d), 2000 - 500 - 1000);
        let slacks = g.net_slacks(3);
        assert_eq!(slacks[0], Some(500));
        assert_eq!(slacks[1], Some(500));
        let report = g.report(5);
        assert_eq!(report.wns_ps, 0.0);
        assert!(report.paths.is_empty());
    }

    #[test]
    fn criticality_and_beta_values() {
        let t = 1000;
        assert_eq!(criticality(5, -200, t), 0.0);
        assert_eq!(beta(0.0, 1.0), 1.0);
        assert_eq!(criticality(-t, -t, t), 0.5);
        assert!((beta(0.5, 1.0) - 1.6487212707).abs() < 1e-9);
        assert_eq!(beta(0.0, 2.0), 2.0);
        let wns = -300;
        let c = criticality(wns, wns, t);
        assert!((c - 300.0 / 1300.0).abs() < 1e-15);
        for s in [-299, -100, -1, 0, 50] {
            assert!(criticality(s, wns, t) <= c);
        }
    }

    #[test]
    fn reweight_accumulates_and_caps() {
        let mut w = vec![1.0, 1.0, WEIGHT_CAP / 1.2];
        assert_eq!(reweight(&mut w, &[0.0, 0.5, 0.5], 1.0), 1);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.5f64.exp()).abs() < 1e-12);
        assert_eq!(w[2], WEIGHT_CAP);
        reweight(&mut w, &[0.0, 0.5, 0.0], 1.0);
        assert!((w[1] - 1.0f64.exp()).abs() < 1e-12);
    }

    /// Edge slacks by enumerating every maximal path.
    fn enumerate_slacks(g: &TimingGraph) -> (Vec<i64>, Vec<Option<i64>>) {
        let n = g.num_nodes();
        let required = g.period - g.setup;
        let mut edge = vec![i64::MAX; g.edges.len()];
        let mut node = vec![None; n];
        fn walk(g: &TimingGraph, v: usize, delay: i64, path: &mut Vec<usize>, req: i64, edge: &mut [i64], node: &mut [Option<i64>]) {
            if g.fanout[v].is_empty() {
                let s = req - delay;
                for &k in path.iter() {
                    edge[k] = edge[k].min(s);
                }
                if !path.is_empty() {
                    node[v] = Some(node[v].map_or(s, |o: i64| o.min(s)));
                }
                return;
            }
            for &k in &g.fanout[v] {
                path.push(k);
                walk(g, g.edges[k].dst, delay + g.edges[k].delay, path, req, edge, node);
                path.pop();
            }
        }
        for v in (0..n).filter(|&v| g.fanin[v].is_empty()) {
            walk(g, v, 0, &mut Vec::new(), required, &mut edge, &mut node);
        }
        (edge, node)
    }

    fn random_dag() -> impl Strategy<Value = (usize, Vec<(usize, usize, i64)>)> {
        (2usize..=12).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            let m = pairs.len();
            (
                Just(n),
                Just(pairs),
                proptest::collection::vec(proptest::bool::weighted(0.3), m),
                proptest::collection::vec(0i64..5_000, m),
            )
                .prop_map(|(n, pairs, keep, delay)| {
                    let edges = pairs
                        .into_iter()
                        .zip(keep.into_iter().zip(delay))
                        .filter(|(_, (k, _))| *k)
                        .map(|((a, b), (_, d))| (a, b, d))
                        .collect();
                    (n, edges)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn slacks_match_path_enumeration((n, edges) in random_dag(), period in 1_000i64..20_000) {
            let mut g = graph(n, &edges, period, 1_000);
            g.propagate().unwrap();
            let (edge, node) = enumerate_slacks(&g);
            prop_assert_eq!(&g.slack, &edge);
            for v in g.endpoints() {
                prop_assert_eq!(Some(g.endpoint_slack(v)), node[v]);
                let min_in = g.fanin[v].iter().map(|&k| g.slack[k]).min();
                prop_assert_eq!(min_in, Some(g.endpoint_slack(v)));
            }
        }

        #[test]
        fn criticality_is_bounded_and_monotone(wns in -50_000i64..0, a in -50_000i64..50_000, b in -50_000i64..50_000, t in 1i64..20_000) {
            let (a, b) = (a.max(wns), b.max(wns));
            let (ca, cb) = (criticality(a, wns, t), criticality(b, wns, t));
            prop_assert!((0.0..1.0).contains(&ca));
            if a < b {
                prop_assert!(ca >= cb);
                prop_assert!(beta(ca, 1.0) >= beta(cb, 1.0));
            }
        }
    }
}
