use rand::{Rng, RngCore};

use super::ImportanceDensity;
use crate::error::{LfiError, Result};
use crate::quadrature::gauss_legendre;

/// Default number of cells per continuous dimension.
pub const GRID_CELLS: usize = 4096;

/// A density on `[lo, hi]` that is constant on each of `cells` equal-width
/// cells, with cell masses equal to the integral of a target function over
/// the cell. Sampling is exact inverse-CDF sampling of this density, so the
/// value returned by [`pdf`](ImportanceDensity::pdf) is the density actually
/// sampled from.
#[derive(Debug, Clone)]
pub struct GridDensity {
    label: String,
    lo: f64,
    hi: f64,
    width: f64,
    /// Normalized density on each cell.
    heights: Vec<f64>,
    /// Cumulative probability at the right edge of each cell.
    cumulative: Vec<f64>,
}

impl GridDensity {
    /// Builds the density proportional to `g` on `[lo, hi]`. `breakpoints`
    /// mark discontinuities of `g`; cells containing one are integrated
    /// piecewise.
    pub fn from_fn(
        label: impl Into<String>,
        lo: f64,
        hi: f64,
        cells: usize,
        g: impl Fn(f64) -> f64,
        breakpoints: &[f64],
    ) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) || cells == 0 {
            return Err(LfiError::InvalidInput(format!("bad grid [{lo}, {hi}] with {cells} cells")));
        }
        let (nodes, weights) = gauss_legendre(8);
        let width = (hi - lo) / cells as f64;
        let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > lo && b < hi).collect();
        cuts.sort_by(f64::total_cmp);

        let integrate = |a: f64, b: f64| -> f64 {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            nodes.iter().zip(&weights).map(|(x, w)| w * g(c + h * x)).sum::<f64>() * h
        };
        let mut masses = Vec::with_capacity(cells);
        for i in 0..cells {
            let a = lo + width * i as f64;
            let b = if i + 1 == cells { hi } else { lo + width * (i + 1) as f64 };
            let start = cuts.partition_point(|&x| x <= a);
            let end = cuts.partition_point(|&x| x < b);
            let mut left = a;
            let mut mass = 0.0;
            for &cut in &cuts[start..end] {
                mass += integrate(left, cut);
                left = cut;
            }
            mass += integrate(left, b);
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(LfiError::InvalidInput(format!("density is negative or non-finite near {a}")));
            }
            masses.push(mass);
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(LfiError::DegenerateTarget);
        }
        let mut acc = 0.0;
        let cumulative = masses
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        Ok(GridDensity {
            label: label.into(),
            lo,
            hi,
            width,
            heights: masses.iter().map(|m| m / total / width).collect(),
            cumulative,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn cells(&self) -> usize {
        self.heights.len()
    }

    /// Cell boundaries, `cells + 1` points.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.cells()).map(|i| self.lo + self.width * i as f64).collect()
    }

    /// Inverse CDF. `u` is clamped to [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let n = self.cells();
        let i = self.cumulative.partition_point(|&c| c <= u).min(n - 1);
        let before = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        let mass = self.cumulative[i] - before;
        let t = if mass > 0.0 { ((u - before) / mass).clamp(0.0, 1.0) } else { 0.5 };
        let mut x = (self.lo + self.width * (i as f64 + t)).clamp(self.lo, self.hi);
        // Rounding can push x onto the next cell, which may carry no mass.
        while self.cell_of(x) > i {
            x = x.next_down();
        }
        while self.cell_of(x) < i {
            x = x.next_up();
        }
        x
    }

    fn cell_of(&self, x: f64) -> usize {
        (((x - self.lo) / self.width) as usize).min(self.cells() - 1)
    }

    /// Probability mass of `[lo, x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let pos = (x - self.lo) / self.width;
        let i = (pos.floor() as usize).min(self.cells() - 1);
        let before = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        before + self.heights[i] * self.width * (pos - i as f64)
    }
}

impl ImportanceDensity<f64> for GridDensity {
    fn pdf(&self, x: &f64) -> f64 {
        let x = *x;
        if !(x >= self.lo && x <= self.hi) {
            return 0.0;
        }
        self.heights[self.cell_of(x)]
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    fn label(&self) -> &str {
        &self.label
    }
}
