mod common;

use heteroplace::arch::{generate_synthetic, Device, FieldKind, InstKind, Netlist, SiteKind};
use heteroplace::legalize::{check_legality, legalize};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum-cost assignment of rows to columns (rows <= columns) by the
/// shortest augmenting path form of the Hungarian method.
fn optimal_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost[0].len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).filter(|&j| p[j] != 0).map(|j| cost[p[j] - 1][j - 1]).sum()
}

#[test]
fn hungarian_oracle_on_a_known_case() {
    let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    assert_eq!(optimal_assignment(&cost), 5.0);
}

#[test]
fn greedy_displacement_is_near_optimal_on_toys() {
    // one LUT per site, so every site is a distinct assignment target
    let mut dev = Device::new(6, 6, vec![SiteKind::Slicel; 6], 1, 1).unwrap();
    let mut cap = SiteKind::Slicel.default_capacity();
    cap[FieldKind::Lutl] = 1.0;
    dev.set_capacity(SiteKind::Slicel, cap);
    let sites: Vec<(f64, f64)> = (0..6).flat_map(|y| (0..6).map(move |x| (x as f64 + 0.5, y as f64 + 0.5))).collect();

    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nl = Netlist::new();
        for k in 0..20 {
            nl.add_instance(format!("l{k}"), InstKind::Lut);
        }
        let xs: Vec<f64> = (0..20).map(|_| rng.gen_range(1.0..4.5)).collect();
        let ys: Vec<f64> = (0..20).map(|_| rng.gen_range(1.0..4.5)).collect();
        let r = legalize(&nl, &xs, &ys, None, &dev).unwrap();
        let cost: Vec<Vec<f64>> = (0..20)
            .map(|i| sites.iter().map(|&(sx, sy)| (sx - xs[i]).abs() + (sy - ys[i]).abs()).collect())
            .collect();
        let best = optimal_assignment(&cost);
        assert!(
            r.displacement <= 1.5 * best + 1e-9,
            "seed {seed}: greedy {} vs optimal {best}",
            r.displacement
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_designs_legalize_cleanly(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::small_spec(&mut rng);
        let (device, netlist) = generate_synthetic(&spec, seed).unwrap();
        let n = netlist.num_instances();
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..device.width as f64)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..device.height as f64)).collect();
        let plan = common::random_plan(&device, &netlist, &mut rng);
        let r = legalize(&netlist, &xs, &ys, Some(&plan), &device).unwrap();

        let sites: Vec<_> = r.sites.iter().copied().map(Some).collect();
        let violations = check_legality(&netlist, &device, &sites);
        prop_assert!(violations.is_empty(), "{violations:?}");

        for (inst, s) in netlist.instances.iter().zip(&r.sites) {
            if matches!(inst.kind, InstKind::Shift | InstKind::Dram) {
                prop_assert_eq!(device.site_kind(s.x), SiteKind::Slicem);
            }
        }
        let away = (0..n)
            .filter(|&i| !netlist.instances[i].fixed && device.region_of_site(r.sites[i].x, r.sites[i].y) != plan.mapping[i])
            .count();
        prop_assert_eq!(away, r.fallbacks);
    }
}
