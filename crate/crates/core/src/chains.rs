//! Carry-chain alignment: chains move as rigid columns.

use crate::arch::Netlist;
use crate::error::{Error, Result};

/// Snaps every movable chain into a column at its mean x, with members on
/// consecutive unit slots centred at its mean y, in cascade order.
///
/// A chain whose slots would leave `[0, height]` is shifted back inside,
/// which is the only case where its centroid moves.
pub fn align_chains(netlist: &Netlist, xs: &mut [f64], ys: &mut [f64], height: f64) -> Result<()> {
    for chain in &netlist.chains {
        let k = chain.members.len();
        if k == 0 || chain.members.iter().any(|&m| netlist.instances[m].fixed) {
            continue;
        }
        if k as f64 > height {
            return Err(Error::ChainTooTall {
                chain: chain.name.clone(),
                len: k,
                height: height as usize,
            });
        }
        let inv = 1.0 / k as f64;
        let cx: f64 = chain.members.iter().map(|&m| xs[m]).sum::<f64>() * inv;
        let cy: f64 = chain.members.iter().map(|&m| ys[m]).sum::<f64>() * inv;
        let half = 0.5 * k as f64;
        let base = (cy - half).clamp(0.0, height - k as f64);
        for (j, &m) in chain.members.iter().enumerate() {
            xs[m] = cx;
            ys[m] = base + j as f64 + 0.5;
        }
    }
    Ok(())
}

/// Replaces each chain member's gradient by the chain average so that the
/// chain translates as one body.
pub fn average_chain_gradient(netlist: &Netlist, gx: &mut [f64], gy: &mut [f64]) {
    for chain in &netlist.chains {
        let k = chain.members.len();
        if k < 2 {
            continue;
        }
        let inv = 1.0 / k as f64;
        let ax: f64 = chain.members.iter().map(|&m| gx[m]).sum::<f64>() * inv;
        let ay: f64 = chain.members.iter().map(|&m| gy[m]).sum::<f64>() * inv;
        for &m in &chain.members {
            gx[m] = ax;
            gy[m] = ay;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::InstKind;
    use proptest::prelude::*;

    fn chain_netlist(len: usize) -> Netlist {
        let mut nl = Netlist::new();
        let members: Vec<usize> = (0..len).map(|i| nl.add_instance(format!("c{i}"), InstKind::Carry)).collect();
        nl.add_chain("ch", members);
        nl
    }

    #[test]
    fn three_member_chain_collapses_to_mean_x() {
        let nl = chain_netlist(3);
        let (mut xs, mut ys) = (vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]);
        align_chains(&nl, &mut xs, &mut ys, 20.0).unwrap();
        assert_eq!(xs, vec![2.0; 3]);
        assert_eq!(ys, vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn two_member_chain_is_centred() {
        let nl = chain_netlist(2);
        let (mut xs, mut ys) = (vec![3.0, 3.0], vec![5.0, 9.0]);
        align_chains(&nl, &mut xs, &mut ys, 20.0).unwrap();
        assert_eq!(ys, vec![6.5, 7.5]);
    }

    #[test]
    fn aligned_chain_is_a_fixed_point() {
        let nl = chain_netlist(4);
        let (mut xs, mut ys) = (vec![7.5; 4], vec![2.5, 3.5, 4.5, 5.5]);
        align_chains(&nl, &mut xs, &mut ys, 10.0).unwrap();
        assert_eq!(xs, vec![7.5; 4]);
        assert_eq!(ys, vec![2.5, 3.5, 4.5, 5.5]);
    }

    #[test]
    fn tall_chain_is_rejected() {
        let nl = chain_netlist(5);
        let (mut xs, mut ys) = (vec![1.0; 5], vec![1.0; 5]);
        let err = align_chains(&nl, &mut xs, &mut ys, 4.0).unwrap_err();
        assert!(matches!(err, Error::ChainTooTall { len: 5, height: 4, .. }));
    }

    #[test]
    fn chains_near_the_border_stay_inside() {
        let nl = chain_netlist(3);
        let (mut xs, mut ys) = (vec![1.0; 3], vec![0.1, 0.2, 0.3]);
        align_chains(&nl, &mut xs, &mut ys, 10.0).unwrap();
        assert_eq!(ys, vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn gradient_average_is_shared() {
        let nl = chain_netlist(2);
        let (mut gx, mut gy) = (vec![1.0, 3.0], vec![-2.0, 0.0]);
        average_chain_gradient(&nl, &mut gx, &mut gy);
        assert_eq!(gx, vec![2.0, 2.0]);
        assert_eq!(gy, vec![-1.0, -1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn alignment_properties(
            pts in proptest::collection::vec((0.0f64..40.0, 12.0f64..28.0), 1..12),
        ) {
            let nl = chain_netlist(pts.len());
            let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let k = pts.len() as f64;
            let (cx, cy) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
            align_chains(&nl, &mut xs, &mut ys, 40.0).unwrap();
            let (ax, ay) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
            prop_assert!((ax - cx).abs() < 1e-9 && (ay - cy).abs() < 1e-9);
            prop_assert!(xs.iter().all(|&x| x == xs[0]));
            for w in ys.windows(2) {
                prop_assert!((w[1] - w[0] - 1.0).abs() < 1e-12);
            }
            let (mut xs2, mut ys2) = (xs.clone(), ys.clone());
            align_chains(&nl, &mut xs2, &mut ys2, 40.0).unwrap();
            for i in 0..xs.len() {
                prop_assert!((xs2[i] - xs[i]).abs() < 1e-12 && (ys2[i] - ys[i]).abs() < 1e-12);
            }
        }
    }
}
