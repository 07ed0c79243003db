use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::Measurement;

/// Linkage thresholds: position distance (m) and radial velocity gap (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterGate {
    pub d_pos: f64,
    pub d_vel: f64,
}

impl Default for ClusterGate {
    fn default() -> Self {
        Self {
            d_pos: 1.0,
            d_vel: 0.5,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clustering; each cluster becomes one measurement at the
/// mean position and velocity with the mean covariance. Output order
/// follows the first member of each cluster.
pub fn cluster_measurements(meas: &[Measurement], gate: ClusterGate) -> Vec<Measurement> {
    let k = meas.len();
    let mut parent: Vec<usize> = (0..k).collect();
    for i in 0..k {
        for j in i + 1..k {
            let close = (meas[i].z - meas[j].z).norm() <= gate.d_pos
                && (meas[i].v_r - meas[j].v_r).abs() <= gate.d_vel;
            if close {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..k {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => groups.push((root, vec![i])),
        }
    }
    groups
        .into_iter()
        .map(|(_, members)| {
            if members.len() == 1 {
                return meas[members[0]].clone();
            }
            let c = members.len() as f64;
            let z = members
                .iter()
                .fold(Vector2::zeros(), |acc, &i| acc + meas[i].z)
                / c;
            let r_cov = members
                .iter()
                .fold(Matrix2::zeros(), |acc, &i| acc + meas[i].r_cov)
                / c;
            let v_r = members.iter().map(|&i| meas[i].v_r).sum::<f64>() / c;
            let var_v = members.iter().map(|&i| meas[i].var_v).sum::<f64>() / c;
            let snr_db = members
                .iter()
                .map(|&i| meas[i].snr_db)
                .fold(f64::NEG_INFINITY, f64::max);
            Measurement {
                frame: meas[members[0]].frame,
                z,
                r_cov,
                v_r,
                var_v,
                r: z.norm(),
                theta: z[0].atan2(z[1]),
                snr_db,
                clamped: members.iter().any(|&i| meas[i].clamped),
            }
        })
        .collect()
}
