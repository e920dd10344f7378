#![allow(dead_code)]

use heteroplace::arch::{generate_synthetic, Device, FieldKind, Netlist, PerField, SynthSpec};
use heteroplace::clockplan::{region_bounds, ClockPlan, RegionSpan};
use heteroplace::engine::{EngineConfig, Placer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A heterogeneous design of at most 50 instances with every field in use.
pub fn small_spec(rng: &mut impl Rng) -> SynthSpec {
    SynthSpec {
        width: 12,
        height: 12,
        dsp_columns: 1,
        bram_columns: 1,
        lut: rng.gen_range(6..=12),
        ff: rng.gen_range(6..=12),
        dsp: rng.gen_range(1..=2),
        bram: rng.gen_range(1..=2),
        dram: rng.gen_range(1..=3),
        shift: rng.gen_range(1..=3),
        io_in: 2,
        io_out: 2,
        chains: 1,
        chain_min: 2,
        chain_max: 3,
        clock_nets: 2,
        ..SynthSpec::default()
    }
}

/// Clock period at which the toy's long path fails timing.
pub const TOY_PERIOD_PS: f64 = 4.0;

/// A toy with one long combinational path from corner to corner.
pub fn toy_spec() -> SynthSpec {
    SynthSpec {
        width: 20,
        height: 20,
        lut: 120,
        ff: 120,
        dsp: 2,
        bram: 2,
        dram: 4,
        shift: 4,
        chains: 2,
        chain_max: 4,
        long_path: 12,
        ..SynthSpec::default()
    }
}

/// Random clock plan mapping every instance to some region.
pub fn random_plan(device: &Device, netlist: &Netlist, rng: &mut impl Rng) -> ClockPlan {
    let regions = device.num_regions();
    let mapping: Vec<usize> = (0..netlist.num_instances()).map(|_| rng.gen_range(0..regions)).collect();
    ClockPlan {
        bounds: mapping.iter().map(|&r| region_bounds(device, r)).collect(),
        mapping,
        masks: vec![RegionSpan::full(device); netlist.clock_nets().count()],
        demand: vec![0; regions],
        cost: 0.0,
        nodes: 0,
        truncated: false,
    }
}

/// Relative error `|g - fd| / |fd|` of the analytic gradient against
/// central differences over all movable coordinates and a sample of
/// fillers, with random multipliers, net weights and clock plan.
pub fn gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = small_spec(&mut rng);
    let (device, netlist) = generate_synthetic(&spec, seed).unwrap();
    assert!(netlist.num_instances() <= 50, "{} instances", netlist.num_instances());
    let cfg = EngineConfig { seed, ..EngineConfig::default() };
    let mut p = Placer::new(&netlist, &device, cfg).unwrap();

    let mut lambda = PerField::zeros();
    let mut alm = PerField::zeros();
    for f in FieldKind::ALL {
        lambda[f] = rng.gen_range(0.5..2.0);
        alm[f] = rng.gen_range(0.0..1.0);
    }
    p.set_multipliers(&lambda, &alm);
    let weights: Vec<f64> = netlist.nets.iter().map(|_| rng.gen_range(1.0..3.0)).collect();
    p.set_weights(&weights);
    p.set_gamma(rng.gen_range(0.5..2.0));
    let plan = random_plan(&device, &netlist, &mut rng);
    p.set_clock(Some(plan), rng.gen_range(0.1..1.0));

    let (w, h) = (device.width as f64, device.height as f64);
    let mut z = p.variables().to_vec();
    let nv = z.len() / 2;
    let n = p.num_instances();
    for v in 0..nv {
        if v < n && netlist.instances[v].fixed {
            continue;
        }
        z[v] = rng.gen_range(1.5..w - 1.5);
        z[nv + v] = rng.gen_range(1.5..h - 1.5);
    }
    let (_, grad) = p.objective_at(&z).unwrap();

    let mut coords: Vec<usize> = (0..n).filter(|&i| !netlist.instances[i].fixed).collect();
    coords.extend((n..nv).step_by(((nv - n) / 20).max(1)));
    let step = 1e-7;
    let (mut num, mut den) = (0.0, 0.0);
    for &v in &coords {
        for k in [v, nv + v] {
            let mut zp = z.clone();
            zp[k] += step;
            let fp = p.objective_at(&zp).unwrap().0;
            zp[k] -= 2.0 * step;
            let fm = p.objective_at(&zp).unwrap().0;
            let fd = (fp - fm) / (2.0 * step);
            num += (grad[k] - fd).powi(2);
            den += fd * fd;
        }
    }
    (num / den).sqrt()
}

/// Placement of a toy with timing reweighting on or off; returns final TNS in ps.
pub fn toy_tns(seed: u64, weighting: bool) -> f64 {
    let (device, netlist) = generate_synthetic(&toy_spec(), seed).unwrap();
    let mut cfg = EngineConfig {
        seed,
        timing_weighting: weighting,
        ..EngineConfig::default()
    };
    cfg.timing.period_ps = TOY_PERIOD_PS;
    let r = Placer::new(&netlist, &device, cfg).unwrap().run().unwrap();
    r.timing.unwrap().tns_ps
}
