//! Energy windows `I_k` of width `delta` and spectral-density diagnostics.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectrum::EnergyLevels;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub range: Range<usize>,
}

impl Window {
    pub fn dim(&self) -> usize {
        self.range.len()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A bin edge that was pushed up so a degeneracy class stays in one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovedEdge {
    pub nominal: f64,
    pub moved_to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPartition {
    windows: Vec<Window>,
    delta: f64,
    anchor: f64,
    moved_edges: Vec<MovedEdge>,
    levels_fingerprint: u64,
    dim: usize,
}

/// Bins `[anchor + k delta, anchor + (k+1) delta)`, empty bins dropped. The
/// last window is closed at `E_max`, so it may be narrower than `delta`.
pub fn partition_spectrum(levels: &EnergyLevels, delta: f64, anchor: Option<f64>) -> Result<WindowPartition> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("window width must be positive, got {delta}")));
    }
    let anchor = anchor.unwrap_or(levels.min());
    let e = levels.energies();
    let mut bin: Vec<i64> = e.iter().map(|&x| ((x - anchor) / delta).floor() as i64).collect();
    let mut moved_edges = Vec::new();
    for class in levels.classes() {
        let k0 = bin[class.start];
        if bin[class.clone()].iter().any(|&k| k != k0) {
            let top = bin[class.end - 1];
            for k in &mut bin[class.clone()] {
                *k = k0;
            }
            for k in (k0 + 1)..=top {
                moved_edges.push(MovedEdge { nominal: anchor + k as f64 * delta, moved_to: e[class.end - 1] });
            }
        }
    }
    let mut windows: Vec<Window> = Vec::new();
    let mut start = 0;
    for i in 1..=e.len() {
        if i == e.len() || bin[i] != bin[start] {
            let k = bin[start] as f64;
            let mut lo = anchor + k * delta;
            if let Some(prev) = windows.last() {
                lo = lo.max(prev.hi);
            }
            let hi = if i == e.len() { levels.max().max(lo) } else { (anchor + (k + 1.0) * delta).max(e[i - 1]) };
            windows.push(Window { lo, hi, range: start..i });
            start = i;
        }
    }
    Ok(WindowPartition {
        windows,
        delta,
        anchor,
        moved_edges,
        levels_fingerprint: levels.fingerprint(),
        dim: levels.dim(),
    })
}

impl WindowPartition {
    /// Windows with explicit sizes, in spectral order. Edges are taken at the
    /// first energy of each window (the last window closes at `E_max`).
    pub fn from_sizes(levels: &EnergyLevels, sizes: &[usize]) -> Result<Self> {
        if sizes.iter().sum::<usize>() != levels.dim() || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("window sizes must be positive and cover the spectrum".into()));
        }
        let e = levels.energies();
        let mut windows = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            let end = start + s;
            let hi = if end == e.len() { levels.max() } else { e[end] };
            windows.push(Window { lo: e[start], hi, range: start..end });
            start = end;
        }
        for class in levels.classes() {
            let w = windows.iter().position(|w| w.range.contains(&class.start)).unwrap();
            if class.end > windows[w].range.end {
                return Err(Error::InvalidArgument("window sizes split a degeneracy class".into()));
            }
        }
        let delta = windows.iter().map(Window::width).fold(0.0, f64::max);
        Ok(Self {
            windows,
            delta,
            anchor: levels.min(),
            moved_edges: Vec::new(),
            levels_fingerprint: levels.fingerprint(),
            dim: levels.dim(),
        })
    }

    /// One window spanning the whole spectrum (maximal smoothing).
    pub fn single_window(levels: &EnergyLevels) -> Self {
        Self::from_sizes(levels, &[levels.dim()]).expect("single window is always valid")
    }

    /// One window per degeneracy class (the ensemble acts trivially on
    /// nondegenerate spectra).
    pub fn per_class(levels: &EnergyLevels) -> Self {
        let sizes: Vec<usize> = levels.classes().iter().map(|c| c.len()).collect();
        Self::from_sizes(levels, &sizes).expect("class partition is always valid")
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    /// Number of windows `K`.
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn moved_edges(&self) -> &[MovedEdge] {
        &self.moved_edges
    }

    pub fn dims(&self) -> Vec<usize> {
        self.windows.iter().map(Window::dim).collect()
    }

    pub fn min_dim(&self) -> usize {
        self.windows.iter().map(Window::dim).min().unwrap_or(0)
    }

    pub fn max_width(&self) -> f64 {
        self.windows.iter().map(Window::width).fold(0.0, f64::max)
    }

    pub fn window_of(&self, index: usize) -> Option<usize> {
        let k = self.windows.partition_point(|w| w.range.end <= index);
        (k < self.windows.len() && self.windows[k].range.contains(&index)).then_some(k)
    }

    pub fn levels_fingerprint(&self) -> u64 {
        self.levels_fingerprint
    }

    pub fn check_levels(&self, levels: &EnergyLevels) -> Result<()> {
        if levels.dim() != self.dim || levels.fingerprint() != self.levels_fingerprint {
            return Err(Error::PartitionMismatch);
        }
        Ok(())
    }

    /// `q_k = sum_{nu in m_k} p_nu`.
    pub fn window_weights(&self, probabilities: &[f64]) -> Vec<f64> {
        self.windows.iter().map(|w| probabilities[w.range.clone()].iter().sum()).collect()
    }

    /// Stable digest of the edges and index ranges, for run reports.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.windows {
            h.update(w.lo.to_bits().to_le_bytes());
            h.update(w.hi.to_bits().to_le_bytes());
            h.update((w.range.start as u64).to_le_bytes());
            h.update((w.range.end as u64).to_le_bytes());
        }
        h.update(self.levels_fingerprint.to_le_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `M_{c,w} = #{nu : |E_nu - c| <= w}` in absolute energy units.
pub fn count_states_in_window(levels: &EnergyLevels, c: f64, w: f64) -> usize {
    let e = levels.energies();
    let lo = e.partition_point(|&x| x < c - w);
    let hi = e.partition_point(|&x| x <= c + w);
    hi.saturating_sub(lo)
}

/// `M_{>=E}`: number of levels strictly above `energy`.
pub fn count_above(levels: &EnergyLevels, energy: f64) -> usize {
    let e = levels.energies();
    e.len() - e.partition_point(|&x| x <= energy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRatioRow {
    pub energy: f64,
    pub k: usize,
    pub count_at: usize,
    pub count_shifted: usize,
    /// `k^3 M_{>=E + k sqrt N} / M_{>=E}`; the assumption asks for `<= 1`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailDecayReport {
    pub rows: Vec<TailRatioRow>,
    pub worst_ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinCount {
    pub lo: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMonotonicityReport {
    pub bins: Vec<BinCount>,
    /// Index `i` of each pair `(i, i+1)` below the median whose count drops.
    pub violations: Vec<usize>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub tail_decay: TailDecayReport,
    pub density_monotonicity: DensityMonotonicityReport,
}

/// Number of energies sampled between the mean and `E_max`.
const TAIL_GRID_POINTS: usize = 32;

/// Diagnostics for the two spectral assumptions. Both are reported, never
/// enforced.
///
/// Tail decay: on a grid of `E` from the mean up to `E_max`, and for
/// `k = 1..floor((E_max - E)/sqrt N)`, the ratio `k^3 M_{>=E+k sqrt N}/M_{>=E}`.
/// Density monotonicity: counts in width-`delta` bins from `E_min`, checked
/// to be nondecreasing for adjacent bins lying below the median energy.
pub fn spectral_assumption_report(levels: &EnergyLevels, delta: f64, n_sites: usize) -> Result<AssumptionReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("window width must be positive".into()));
    }
    let root_n = (n_sites as f64).sqrt();
    let mean = levels.mean();
    let e_max = levels.max();
    let mut rows = Vec::new();
    if e_max > mean {
        for g in 0..TAIL_GRID_POINTS {
            let energy = mean + (e_max - mean) * g as f64 / TAIL_GRID_POINTS as f64;
            let count_at = count_above(levels, energy);
            if count_at == 0 {
                continue;
            }
            let kmax = ((e_max - energy) / root_n).floor() as usize;
            for k in 1..=kmax {
                let count_shifted = count_above(levels, energy + k as f64 * root_n);
                let ratio = (k as f64).powi(3) * count_shifted as f64 / count_at as f64;
                rows.push(TailRatioRow { energy, k, count_at, count_shifted, ratio });
            }
        }
    }
    let worst_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let tail_decay = TailDecayReport { pass: worst_ratio <= 1.0, worst_ratio, rows };

    let e = levels.energies();
    let median = crate::stats::median(e);
    let nbins = (((levels.max() - levels.min()) / delta).floor() as usize) + 1;
    let mut bins: Vec<BinCount> =
        (0..nbins).map(|k| BinCount { lo: levels.min() + k as f64 * delta, count: 0 }).collect();
    for &x in e {
        let k = (((x - levels.min()) / delta).floor() as usize).min(nbins - 1);
        bins[k].count += 1;
    }
    let violations: Vec<usize> = (0..nbins.saturating_sub(1))
        .filter(|&i| bins[i + 1].lo + delta <= median && bins[i + 1].count < bins[i].count)
        .collect();
    let density_monotonicity = DensityMonotonicityReport { pass: violations.is_empty(), bins, violations };
    Ok(AssumptionReport { tail_decay, density_monotonicity })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(e: &[f64]) -> EnergyLevels {
        EnergyLevels::new(e.to_vec(), 1e-9).unwrap()
    }

    fn ranges(p: &WindowPartition) -> Vec<Range<usize>> {
        p.windows().iter().map(|w| w.range.clone()).collect()
    }

    #[test]
    fn partition_examples() {
        assert_eq!(ranges(&partition_spectrum(&lv(&[-1.0, 1.0]), 3.0, None).unwrap()), vec![0..2]);
        assert_eq!(ranges(&partition_spectrum(&lv(&[-1.0, 1.0]), 1.0, Some(-1.0)).unwrap()), vec![0..1, 1..2]);
        let p = partition_spectrum(&lv(&[0.0, 0.5, 1.2, 1.3]), 1.0, Some(0.0)).unwrap();
        assert_eq!(ranges(&p), vec![0..2, 2..4]);
        assert_eq!(p.windows()[0].lo, 0.0);
        assert_eq!(p.windows()[0].hi, 1.0);
        assert!(partition_spectrum(&lv(&[0.0]), 0.0, None).is_err());
    }

    #[test]
    fn straddling_class_is_absorbed() {
        let l = lv(&[0.0, 1.0 - 1e-12, 1.0 + 1e-12, 2.5]);
        let p = partition_spectrum(&l, 1.0, Some(0.0)).unwrap();
        assert_eq!(ranges(&p), vec![0..3, 3..4]);
        assert_eq!(p.moved_edges().len(), 1);
        assert_eq!(p.moved_edges()[0].nominal, 1.0);
    }

    #[test]
    fn empty_bins_dropped() {
        let p = partition_spectrum(&lv(&[0.0, 0.1, 5.0]), 1.0, None).unwrap();
        assert_eq!(ranges(&p), vec![0..2, 2..3]);
        assert_eq!(p.windows()[1].lo, 5.0);
    }

    #[test]
    fn counting_examples() {
        let l = lv(&[-1.0, 1.0]);
        assert_eq!(count_states_in_window(&l, 0.0, 2.0), 2);
        assert_eq!(count_states_in_window(&l, 0.0, 0.5), 0);
        assert_eq!(count_states_in_window(&l, 1.0, 0.0), 1);
    }

    #[test]
    fn two_level_assumption_report_is_vacuous() {
        let r = spectral_assumption_report(&lv(&[-1.0, 1.0]), 0.5, 4).unwrap();
        assert!(r.tail_decay.rows.is_empty() && r.tail_decay.pass);
    }

    #[test]
    fn window_lookup_and_mismatch() {
        let l = lv(&[0.0, 0.5, 1.2, 1.3]);
        let p = partition_spectrum(&l, 1.0, None).unwrap();
        assert_eq!(p.window_of(1), Some(0));
        assert_eq!(p.window_of(3), Some(1));
        assert_eq!(p.window_of(4), None);
        assert!(p.check_levels(&lv(&[0.0, 0.5, 1.2, 1.4])).is_err());
        assert!(p.check_levels(&l).is_ok());
    }
}
