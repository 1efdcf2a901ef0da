//! User-centric AP selection: each UE is served only by the APs holding the
//! bulk of its large-scale fading.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::PowerCoefficients;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServingClusters {
    /// Serving APs of each UE, strongest first.
    pub members: Vec<Vec<usize>>,
    pub num_aps: usize,
}

impl ServingClusters {
    pub fn all(num_aps: usize, num_ues: usize) -> Self {
        Self { members: vec![(0..num_aps).collect(); num_ues], num_aps }
    }

    /// `mask[m, k]` is true when AP `m` serves UE `k`.
    pub fn mask(&self) -> DMatrix<bool> {
        let mut mask = DMatrix::from_element(self.num_aps, self.members.len(), false);
        for (k, aps) in self.members.iter().enumerate() {
            for &m in aps {
                mask[(m, k)] = true;
            }
        }
        mask
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn mean_size(&self) -> f64 {
        self.members.iter().map(Vec::len).sum::<usize>() as f64 / self.members.len().max(1) as f64
    }
}

/// Selects, per UE, the fewest strongest APs whose share of the UE's total
/// large-scale fading reaches `alpha`. Ties go to the lower AP index.
pub fn select_largest_lsf(beta: &DMatrix<f64>, alpha: f64) -> Result<ServingClusters> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("cluster fraction {alpha} must lie in (0, 1]")));
    }
    let m = beta.nrows();
    let members = beta
        .column_iter()
        .map(|col| {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
            // summing in sorted order makes the full prefix equal the total exactly
            let total: f64 = order.iter().map(|&i| col[i]).sum();
            if !(total > 0.0) {
                return order;
            }
            let mut acc = 0.0;
            let mut len = 0;
            for &i in &order {
                acc += col[i];
                len += 1;
                if acc / total >= alpha {
                    break;
                }
            }
            order.truncate(len);
            order
        })
        .collect();
    Ok(ServingClusters { members, num_aps: m })
}

/// Zeroes power outside the clusters and rescales each AP's remaining
/// coefficients so the AP spends the same fraction of its budget as before.
pub fn mask_power(
    eta: &PowerCoefficients,
    clusters: &ServingClusters,
    gamma: &DMatrix<f64>,
) -> Result<PowerCoefficients> {
    let (m, k) = eta.eta.shape();
    if gamma.shape() != (m, k) || clusters.num_aps != m || clusters.members.len() != k {
        return Err(Error::Shape(format!(
            "eta {:?}, gamma {:?}, clusters {}x{}",
            eta.eta.shape(),
            gamma.shape(),
            clusters.num_aps,
            clusters.members.len()
        )));
    }
    let mask = clusters.mask();
    let mut out = eta.eta.clone();
    for ap in 0..m {
        let before: f64 = (0..k).map(|ue| eta.eta[(ap, ue)] * gamma[(ap, ue)]).sum();
        let after: f64 = (0..k).filter(|&ue| mask[(ap, ue)]).map(|ue| eta.eta[(ap, ue)] * gamma[(ap, ue)]).sum();
        let scale = if after > 0.0 { before / after } else { 0.0 };
        for ue in 0..k {
            out[(ap, ue)] = if mask[(ap, ue)] { eta.eta[(ap, ue)] * scale } else { 0.0 };
        }
    }
    Ok(PowerCoefficients::from_eta(out))
}
