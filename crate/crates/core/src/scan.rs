//! Window sums over 3D integer fields via a summed-volume table.
//!
//! Origins are zero-based here: origin `[a, b, c]` covers cells
//! `a..a + m1`, `b..b + m2`, `c..c + m3`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::model::Field;

/// Scanned region and window extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub region: [usize; 3],
    pub window: [usize; 3],
}

impl ScanGeometry {
    /// Any window that fits inside the region (`1 <= m_j <= T_j`).
    pub fn new(region: [usize; 3], window: [usize; 3]) -> Result<Self> {
        for j in 0..3 {
            if window[j] == 0 || region[j] == 0 {
                return Err(ScanError::Geometry(format!(
                    "extents must be positive: region {region:?}, window {window:?}"
                )));
            }
            if window[j] > region[j] {
                return Err(ScanError::Geometry(format!(
                    "window {window:?} larger than region {region:?} along axis {}",
                    j + 1
                )));
            }
        }
        Ok(ScanGeometry { region, window })
    }

    /// The standing assumption for the full region: `2 <= m_j <= T_j - 1`.
    pub fn standard(region: [usize; 3], window: [usize; 3]) -> Result<Self> {
        let geometry = Self::new(region, window)?;
        for j in 0..3 {
            if window[j] < 2 || window[j] + 1 > region[j] {
                return Err(ScanError::Geometry(format!(
                    "axis {}: need 2 <= m <= T - 1, got m = {}, T = {}",
                    j + 1,
                    window[j],
                    region[j]
                )));
            }
        }
        Ok(geometry)
    }

    /// Admissible origins per axis, `T_j - m_j + 1`.
    pub fn origins(&self) -> [usize; 3] {
        [0, 1, 2].map(|j| self.region[j] - self.window[j] + 1)
    }

    pub fn origin_count(&self) -> u64 {
        self.origins().iter().map(|&o| o as u64).product()
    }

    pub fn window_cells(&self) -> usize {
        self.window.iter().product()
    }

    /// `L_j = T_j / (m_j - 1)` when every axis divides evenly.
    pub fn ratios(&self) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for (j, slot) in out.iter_mut().enumerate() {
            let step = self.window[j].checked_sub(1).filter(|&s| s > 0)?;
            if !self.region[j].is_multiple_of(step) {
                return None;
            }
            *slot = self.region[j] / step;
        }
        Some(out)
    }

    /// Like [`ratios`](Self::ratios) but reports the first offending axis.
    pub fn exact_ratios(&self) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for (j, slot) in out.iter_mut().enumerate() {
            let step = self.step(j)?;
            if !self.region[j].is_multiple_of(step) {
                return Err(ScanError::NotDivisible {
                    axis: j + 1,
                    region: self.region[j],
                    step,
                });
            }
            *slot = self.region[j] / step;
        }
        Ok(out)
    }

    /// `floor(T_j / (m_j - 1))`.
    pub fn floor_ratios(&self) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.region[j] / self.step(j)?;
        }
        Ok(out)
    }

    /// Fractional parts of `T_j / (m_j - 1)`.
    pub fn ratio_fractions(&self) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (j, slot) in out.iter_mut().enumerate() {
            let step = self.step(j)?;
            *slot = (self.region[j] % step) as f64 / step as f64;
        }
        Ok(out)
    }

    fn step(&self, j: usize) -> Result<usize> {
        match self.window[j] {
            0 | 1 => Err(ScanError::Geometry(format!(
                "axis {}: window extent must be at least 2 for the cascade",
                j + 1
            ))),
            m => Ok(m - 1),
        }
    }
}

/// Summed-volume table with a zero boundary plane on each axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixVolume {
    dims: [usize; 3],
    strides: [usize; 2],
    cumulative: Vec<i64>,
}

impl PrefixVolume {
    pub fn empty() -> Self {
        PrefixVolume {
            dims: [0; 3],
            strides: [0; 2],
            cumulative: Vec::new(),
        }
    }

    /// Rebuild in place for `field`, reusing the allocation.
    pub fn load(&mut self, field: &Field) {
        let dims = field.dims();
        let (n1, n2, n3) = (dims[0] + 1, dims[1] + 1, dims[2] + 1);
        self.dims = dims;
        self.strides = [n2 * n3, n3];
        self.cumulative.clear();
        self.cumulative.resize(n1 * n2 * n3, 0);
        let cum = &mut self.cumulative;
        let cells = field.cells();
        let (s1, s2) = (n2 * n3, n3);
        for a in 1..n1 {
            for b in 1..n2 {
                let src = &cells[((a - 1) * dims[1] + (b - 1)) * dims[2]..][..dims[2]];
                let row = a * s1 + b * s2;
                let mut run = 0i64;
                for (c, &x) in src.iter().enumerate() {
                    run += i64::from(x);
                    cum[row + c + 1] = run;
                }
            }
        }
        for a in 1..n1 {
            for b in 2..n2 {
                let (lo, hi) = cum.split_at_mut(a * s1 + b * s2);
                let prev = &lo[a * s1 + (b - 1) * s2..];
                for c in 1..n3 {
                    hi[c] += prev[c];
                }
            }
        }
        for a in 2..n1 {
            let (lo, hi) = cum.split_at_mut(a * s1);
            let prev = &lo[(a - 1) * s1..];
            for (h, p) in hi[..s1].iter_mut().zip(prev) {
                *h += *p;
            }
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Entry `(a, b, c)`: the sum of cells with indices `< a, < b, < c`.
    #[inline]
    pub fn at(&self, a: usize, b: usize, c: usize) -> i64 {
        self.cumulative[a * self.strides[0] + b * self.strides[1] + c]
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.cumulative
    }

    #[inline]
    fn box_sum(&self, origin: [usize; 3], window: [usize; 3]) -> i64 {
        let [a0, b0, c0] = origin;
        let (a1, b1, c1) = (a0 + window[0], b0 + window[1], c0 + window[2]);
        self.at(a1, b1, c1) - self.at(a0, b1, c1) - self.at(a1, b0, c1) - self.at(a1, b1, c0)
            + self.at(a0, b0, c1)
            + self.at(a0, b1, c0)
            + self.at(a1, b0, c0)
            - self.at(a0, b0, c0)
    }

    /// `Y` at a zero-based origin.
    pub fn window_sum(&self, origin: [usize; 3], window: [usize; 3]) -> Result<u64> {
        let limit = [0, 1, 2].map(|j| (self.dims[j] + 1).saturating_sub(window[j]));
        if (0..3).any(|j| window[j] == 0 || origin[j] >= limit[j]) {
            return Err(ScanError::OutOfBounds { origin, limit });
        }
        Ok(self.box_sum(origin, window) as u64)
    }

    /// Visit every window sum, third axis innermost.
    #[inline]
    fn for_each_sum<F: FnMut(i64)>(&self, window: [usize; 3], mut f: F) {
        let origins = [0, 1, 2].map(|j| self.dims[j] + 1 - window[j]);
        let [s1, s2] = self.strides;
        let cum = &self.cumulative;
        let (w1, w2, w3) = (window[0] * s1, window[1] * s2, window[2]);
        let n3 = origins[2];
        for a in 0..origins[0] {
            for b in 0..origins[1] {
                let base = a * s1 + b * s2;
                let p000 = &cum[base..base + n3 + w3];
                let p100 = &cum[base + w1..base + w1 + n3 + w3];
                let p010 = &cum[base + w2..base + w2 + n3 + w3];
                let p110 = &cum[base + w1 + w2..base + w1 + w2 + n3 + w3];
                for c in 0..n3 {
                    let hi = p110[c + w3] - p010[c + w3] - p100[c + w3] + p000[c + w3];
                    let lo = p110[c] - p010[c] - p100[c] + p000[c];
                    f(hi - lo);
                }
            }
        }
    }

    pub fn max_window_sum(&self, window: [usize; 3]) -> u64 {
        let mut best = 0i64;
        self.for_each_sum(window, |y| best = best.max(y));
        best as u64
    }

    /// Number of origins with window sum `>= tau`.
    pub fn count_at_least(&self, window: [usize; 3], tau: u64) -> u64 {
        let tau = tau.min(i64::MAX as u64) as i64;
        let mut count = 0u64;
        self.for_each_sum(window, |y| count += u64::from(y >= tau));
        count
    }
}

pub fn build_prefix(field: &Field) -> PrefixVolume {
    let mut prefix = PrefixVolume::empty();
    prefix.load(field);
    prefix
}

pub fn window_sum(prefix: &PrefixVolume, origin: [usize; 3], window: [usize; 3]) -> Result<u64> {
    prefix.window_sum(origin, window)
}

/// `S_{m1,m2,m3}(T1,T2,T3)`: the largest window sum over the field.
pub fn scan_statistic(field: &Field, window: [usize; 3]) -> Result<u64> {
    ScanGeometry::new(field.dims(), window)?;
    Ok(build_prefix(field).max_window_sum(window))
}

/// `C(Y)`: the number of origins whose window sum reaches `tau`.
pub fn exceedance_count(field: &Field, window: [usize; 3], tau: u64) -> Result<u64> {
    ScanGeometry::new(field.dims(), window)?;
    Ok(build_prefix(field).count_at_least(window, tau))
}
