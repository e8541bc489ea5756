//! Generalized micro-canonical states and the split of a dephased state into
//! in-window blocks plus a tail.

use serde::{Deserialize, Serialize};

use crate::basis::{Basis, DensityOperator};
use crate::equilibrium::{dephase, xlogx_neg, EquilibriumState};
use crate::error::{Error, Result};
use crate::linalg;
use crate::spectrum::EnergyLevels;
use crate::windows::WindowPartition;

/// Trace tolerance for entropy evaluation.
pub const ENTROPY_TRACE_TOL: f64 = 1e-8;

/// `-sum lambda ln lambda` in nats after symmetrizing and clipping negative
/// eigenvalues to zero.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > ENTROPY_TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
    }
    let vals = linalg::eigvalsh(linalg::hermitian_part(rho.matrix().as_ref()).as_ref())?;
    Ok(vals.into_iter().map(xlogx_neg).sum())
}

/// Shannon entropy (nats) of a probability vector.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter().copied().map(xlogx_neg).sum()
}

/// Populations of `sum_k q_k omega_k` with `omega_k` uniform on window `k`.
pub fn gme_weights(partition: &WindowPartition, windows: &[usize], q: &[f64]) -> Result<Vec<f64>> {
    if windows.is_empty() || windows.len() != q.len() {
        return Err(Error::InvalidArgument("need one weight per selected window".into()));
    }
    if q.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidArgument("window weights must be nonnegative".into()));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("window weights sum to {total}, not 1")));
    }
    let mut w = vec![0.0; partition.dim()];
    for (&k, &qk) in windows.iter().zip(q) {
        let win = partition
            .windows()
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("window {k} out of range")))?;
        let each = qk / win.dim() as f64;
        for i in win.range.clone() {
            w[i] += each;
        }
    }
    Ok(w)
}

pub fn build_gme(partition: &WindowPartition, windows: &[usize], q: &[f64]) -> Result<DensityOperator> {
    Ok(DensityOperator::from_diagonal(Basis::Eigen, &gme_weights(partition, windows, q)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmeDecomposition {
    /// Centre after snapping to the window grid.
    pub center: f64,
    pub half_width: f64,
    /// Indices of windows inside `[E - Delta, E + Delta)`.
    pub windows: Vec<usize>,
    /// Normalized in-window weights (sum to 1 when `p_delta > 0`).
    pub q: Vec<f64>,
    pub p_delta: f64,
    pub tail_weight: f64,
    /// `ln d_k - S(omega~_k)` per in-window window.
    pub deficits: Vec<f64>,
    /// `sum_k q_k (ln d_k - S(omega~_k))` in nats.
    pub eta: f64,
}

/// Splits a dephased state at `[E - Delta, E + Delta)`. `Delta` must be a
/// whole number of window widths and `E` is snapped to the nearest grid edge.
pub fn decompose_agme(
    rho: &EquilibriumState,
    partition: &WindowPartition,
    center: f64,
    half_width: f64,
) -> Result<GmeDecomposition> {
    if rho.dim() != partition.dim() {
        return Err(Error::DimensionMismatch { expected: partition.dim(), got: rho.dim() });
    }
    let delta = partition.delta();
    let ratio = half_width / delta;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Misaligned(format!("Delta = {half_width} is not a positive multiple of delta = {delta}")));
    }
    let anchor = partition.anchor();
    let kc = ((center - anchor) / delta).round();
    let snapped = anchor + kc * delta;
    let (lo_k, hi_k) = (kc - m, kc + m);

    let weights = rho.weights();
    let mut windows = Vec::new();
    let mut masses = Vec::new();
    let mut in_mass = 0.0;
    for (k, w) in partition.windows().iter().enumerate() {
        let kb = ((w.lo - anchor) / delta).round();
        if kb >= lo_k && kb < hi_k {
            let mass: f64 = weights[w.range.clone()].iter().sum();
            windows.push(k);
            masses.push(mass);
            in_mass += mass;
        }
    }
    let total = rho.trace();
    let p_delta = (in_mass / total).clamp(0.0, 1.0);
    let mut q = Vec::with_capacity(windows.len());
    let mut deficits = Vec::with_capacity(windows.len());
    let mut eta = 0.0;
    for (&k, &mass) in windows.iter().zip(&masses) {
        let win = &partition.windows()[k];
        let qk = if in_mass > 0.0 { mass / in_mass } else { 0.0 };
        let deficit = if mass > 0.0 {
            // S(rho_k / mass) = S(rho_k)/mass + ln(mass)
            let s_raw = rho.partial_entropy(win.range.clone())?;
            (win.dim() as f64).ln() - (s_raw / mass + mass.ln())
        } else {
            0.0
        };
        q.push(qk);
        deficits.push(deficit);
        eta += qk * deficit;
    }
    Ok(GmeDecomposition {
        center: snapped,
        half_width,
        windows,
        q,
        p_delta,
        tail_weight: 1.0 - p_delta,
        deficits,
        eta: eta.max(0.0),
    })
}

/// Dense-input variant: `rho` must already be block diagonal over the
/// degeneracy classes (off-block mass at most `1e-10`).
pub fn decompose_agme_dense(
    rho: &DensityOperator,
    levels: &EnergyLevels,
    partition: &WindowPartition,
    center: f64,
    half_width: f64,
) -> Result<GmeDecomposition> {
    rho.require(Basis::Eigen)?;
    partition.check_levels(levels)?;
    let m = rho.matrix();
    let classes = levels.classes();
    let mut class_of = vec![0usize; levels.dim()];
    for (k, c) in classes.iter().enumerate() {
        for i in c.clone() {
            class_of[i] = k;
        }
    }
    let mut off = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if class_of[i] != class_of[j] {
                off = off.max(m[(i, j)].norm());
            }
        }
    }
    if off > 1e-10 {
        return Err(Error::InvalidState(format!("state has off-diagonal eigenbasis mass {off:e}")));
    }
    decompose_agme(&dephase(rho, levels)?, partition, center, half_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::EquilibriumState;
    use crate::windows::partition_spectrum;

    fn lv(e: &[f64]) -> EnergyLevels {
        EnergyLevels::new(e.to_vec(), 1e-9).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((von_neumann_entropy(&DensityOperator::maximally_mixed(Basis::Eigen, 4)).unwrap() - 4f64.ln()).abs() < 1e-14);
        let q = DensityOperator::from_diagonal(Basis::Eigen, &[0.25, 0.75]);
        let want = -0.25 * 0.25f64.ln() - 0.75 * 0.75f64.ln();
        assert!((von_neumann_entropy(&q).unwrap() - want).abs() < 1e-15);
        assert!(von_neumann_entropy(&DensityOperator::from_diagonal(Basis::Eigen, &[1.0, 0.0])).unwrap().abs() < 1e-15);
        assert!(von_neumann_entropy(&DensityOperator::from_diagonal(Basis::Eigen, &[0.5, 0.4])).is_err());
    }

    #[test]
    fn gme_examples() {
        let l = lv(&[0.0, 0.1, 0.2, 5.0]);
        let p = partition_spectrum(&l, 1.0, None).unwrap();
        assert_eq!(gme_weights(&p, &[0], &[1.0]).unwrap(), vec![1.0 / 3.0; 3].into_iter().chain([0.0]).collect::<Vec<_>>());
        let l2 = lv(&[0.0, 1.0]);
        let p2 = partition_spectrum(&l2, 0.5, None).unwrap();
        assert_eq!(gme_weights(&p2, &[0, 1], &[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        assert!(gme_weights(&p2, &[0, 1], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn exact_gme_has_no_deficit() {
        let l = lv(&[0.0, 0.2, 0.4, 1.1, 1.3, 2.2]);
        let p = partition_spectrum(&l, 1.0, Some(0.0)).unwrap();
        let w = gme_weights(&p, &[0, 1], &[0.25, 0.75]).unwrap();
        let eq = EquilibriumState::from_diagonal(&l, &w);
        let d = decompose_agme(&eq, &p, 1.0, 1.0).unwrap();
        assert_eq!(d.windows, vec![0, 1]);
        assert!((d.p_delta - 1.0).abs() < 1e-15);
        assert!(d.eta.abs() < 1e-14);
        assert!((d.q[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_eigenstate_deficit_is_log_dim() {
        let l = lv(&[0.0, 0.2, 0.4, 1.1]);
        let p = partition_spectrum(&l, 1.0, Some(0.0)).unwrap();
        let eq = EquilibriumState::from_diagonal(&l, &[0.0, 1.0, 0.0, 0.0]);
        let d = decompose_agme(&eq, &p, 0.0, 1.0).unwrap();
        assert_eq!(d.windows, vec![0]);
        assert!((d.eta - 3f64.ln()).abs() < 1e-14);
        assert!(decompose_agme(&eq, &p, 0.0, 1.5).is_err());
    }
}
