//! Undersampling masks.
//!
//! Cartesian masks follow the fastMRI random mask convention: a contiguous
//! block of `round(center_fraction·W)` low-frequency columns is always
//! acquired and every other column is kept independently with probability
//! `p = (W/R − center)/(W − center)`. The 1D Gaussian variant replaces the
//! uniform `p` with Gaussian-weighted inclusion probabilities centered on
//! the DC column.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::KSpace;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "columns", rename_all = "snake_case")]
pub enum MaskStructure {
    Cartesian1D(Vec<usize>),
    Gaussian1D(Vec<usize>),
    Dense,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    entries: Vec<u8>,
    structure: MaskStructure,
}

/// fastMRI challenge center fractions for the standard accelerations.
pub fn default_center_fraction(acceleration: f64) -> Option<f64> {
    [(4.0, 0.08), (6.0, 0.06), (8.0, 0.04), (10.0, 0.02)]
        .iter()
        .find(|(r, _)| (acceleration - r).abs() < 1e-9)
        .map(|(_, cf)| *cf)
}

/// Column budget shared by both column-structured mask kinds.
struct ColumnPlan {
    center: Vec<usize>,
    /// Expected number of columns outside the center block.
    extra: f64,
}

fn plan_columns(
    height: usize,
    width: usize,
    acceleration: f64,
    center_fraction: f64,
) -> Result<ColumnPlan> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("mask dimensions must be positive"));
    }
    if !(acceleration.is_finite() && acceleration >= 1.0) {
        return Err(Error::invalid(format!(
            "acceleration must be >= 1, got {acceleration}"
        )));
    }
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "center_fraction must lie in (0, 1), got {center_fraction}"
        )));
    }
    let num_center = (center_fraction * width as f64).round() as usize;
    if num_center == 0 {
        return Err(Error::invalid(format!(
            "center_fraction {center_fraction} selects no column of a width-{width} grid"
        )));
    }
    let target = width as f64 / acceleration;
    let extra = target - num_center as f64;
    let remaining = (width - num_center) as f64;
    if extra < -1e-9 {
        return Err(Error::invalid(format!(
            "acceleration {acceleration} is infeasible: {num_center} center columns exceed the \
             {target:.2}-column budget (p < 0)"
        )));
    }
    if extra > remaining + 1e-9 {
        return Err(Error::invalid(format!(
            "acceleration {acceleration} is infeasible: p > 1"
        )));
    }
    let pad = (width - num_center).div_ceil(2);
    Ok(ColumnPlan {
        center: (pad..pad + num_center).collect(),
        extra: extra.clamp(0.0, remaining),
    })
}

/// Inclusion probabilities proportional to `weights`, capped at 1 and
/// scaled so that they sum to `target`.
fn capped_probabilities(weights: &[f64], target: f64) -> Vec<f64> {
    let mut capped = vec![false; weights.len()];
    loop {
        let free_weight: f64 = weights
            .iter()
            .zip(&capped)
            .filter(|(_, c)| !**c)
            .map(|(w, _)| w)
            .sum();
        let budget = target - capped.iter().filter(|c| **c).count() as f64;
        let scale = if free_weight > 0.0 {
            budget / free_weight
        } else {
            0.0
        };
        let mut changed = false;
        for (i, w) in weights.iter().enumerate() {
            if !capped[i] && w * scale >= 1.0 {
                capped[i] = true;
                changed = true;
            }
        }
        if !changed {
            return weights
                .iter()
                .zip(&capped)
                .map(|(w, c)| if *c { 1.0 } else { (w * scale).clamp(0.0, 1.0) })
                .collect();
        }
    }
}

impl Mask {
    pub fn cartesian(
        height: usize,
        width: usize,
        acceleration: f64,
        center_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let plan = plan_columns(height, width, acceleration, center_fraction)?;
        let remaining = width - plan.center.len();
        let p = if remaining == 0 {
            0.0
        } else {
            plan.extra / remaining as f64
        };
        let mut rng = rng::stream(seed, 0, 0, Purpose::Mask);
        let columns = (0..width)
            .filter(|c| {
                // one draw per column keeps the stream layout independent of p
                let keep = rng.random::<f64>() < p;
                plan.center.contains(c) || keep
            })
            .collect();
        Ok(Self::from_columns_with(
            height,
            width,
            columns,
            MaskStructure::Cartesian1D,
        ))
    }

    /// Gaussian-weighted column mask with density centered at `W/2` and
    /// standard deviation `W/6`.
    pub fn gaussian_1d(
        height: usize,
        width: usize,
        acceleration: f64,
        center_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let probs = Self::gaussian_1d_probabilities(width, acceleration, center_fraction)?;
        let mut rng = rng::stream(seed, 0, 1, Purpose::Mask);
        let columns = probs
            .iter()
            .enumerate()
            .filter(|(_, p)| rng.random::<f64>() < **p)
            .map(|(c, _)| c)
            .collect();
        Ok(Self::from_columns_with(
            height,
            width,
            columns,
            MaskStructure::Gaussian1D,
        ))
    }

    /// Per-column inclusion probability of [`Mask::gaussian_1d`]; center
    /// columns have probability 1.
    pub fn gaussian_1d_probabilities(
        width: usize,
        acceleration: f64,
        center_fraction: f64,
    ) -> Result<Vec<f64>> {
        let plan = plan_columns(1, width, acceleration, center_fraction)?;
        let mid = width as f64 / 2.0;
        let sd = width as f64 / 6.0;
        let others: Vec<usize> = (0..width).filter(|c| !plan.center.contains(c)).collect();
        let weights: Vec<f64> = others
            .iter()
            .map(|&c| (-(c as f64 - mid).powi(2) / (2.0 * sd * sd)).exp())
            .collect();
        let probs = capped_probabilities(&weights, plan.extra);
        let mut out = vec![1.0; width];
        for (c, p) in others.into_iter().zip(probs) {
            out[c] = p;
        }
        Ok(out)
    }

    /// Column mask from an explicit set of sampled column indices.
    pub fn from_columns(height: usize, width: usize, columns: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("mask dimensions must be positive"));
        }
        let mut columns = columns;
        columns.sort_unstable();
        columns.dedup();
        if columns.last().is_some_and(|&c| c >= width) {
            return Err(Error::invalid("column index outside mask width"));
        }
        Ok(Self::from_columns_with(
            height,
            width,
            columns,
            MaskStructure::Cartesian1D,
        ))
    }

    fn from_columns_with(
        height: usize,
        width: usize,
        columns: Vec<usize>,
        kind: fn(Vec<usize>) -> MaskStructure,
    ) -> Self {
        let mut row = vec![0u8; width];
        for &c in &columns {
            row[c] = 1;
        }
        let entries = row.repeat(height);
        Self {
            height,
            width,
            entries,
            structure: kind(columns),
        }
    }

    pub fn from_entries(height: usize, width: usize, entries: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || entries.len() != height * width {
            return Err(Error::invalid(format!(
                "{height}x{width} mask cannot hold {} entries",
                entries.len()
            )));
        }
        if entries.iter().any(|&e| e > 1) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        Ok(Self {
            height,
            width,
            entries,
            structure: MaskStructure::Dense,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::from_columns_with(height, width, (0..width).collect(), MaskStructure::Cartesian1D)
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self::from_columns_with(height, width, Vec::new(), MaskStructure::Cartesian1D)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn structure(&self) -> &MaskStructure {
        &self.structure
    }

    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        self.entries[row * self.width + col] == 1
    }

    /// Sampled columns for column-structured masks.
    pub fn columns(&self) -> Option<&[usize]> {
        match &self.structure {
            MaskStructure::Cartesian1D(c) | MaskStructure::Gaussian1D(c) => Some(c),
            MaskStructure::Dense => None,
        }
    }

    pub fn sampled_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e == 1).count()
    }

    /// Total over acquired samples.
    pub fn realized_acceleration(&self) -> f64 {
        self.entries.len() as f64 / self.sampled_count() as f64
    }
}

/// `M ∘ k`: zero every coefficient the mask does not acquire.
pub fn apply_mask(k: &KSpace, mask: &Mask) -> Result<KSpace> {
    k.grid().ensure_shape(mask.shape())?;
    let mut out = k.clone();
    for (z, &m) in out.grid_mut().data_mut().iter_mut().zip(&mask.entries) {
        if m == 0 {
            *z = num_complex::Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::ComplexImage;
    use num_complex::Complex64;

    fn column_structure_holds(m: &Mask) {
        let (h, w) = m.shape();
        let cols = m.columns().unwrap();
        for c in 0..w {
            let first = m.is_sampled(0, c);
            assert!((0..h).all(|r| m.is_sampled(r, c) == first));
            assert_eq!(first, cols.binary_search(&c).is_ok());
        }
        assert!(cols.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn cartesian_center_block() {
        let m = Mask::cartesian(8, 320, 4.0, 0.08, 3).unwrap();
        column_structure_holds(&m);
        let cols = m.columns().unwrap();
        // round(25.6) = 26 columns starting at (320 - 26 + 1) / 2 = 147
        assert!((147..173).all(|c| cols.contains(&c)));
    }

    #[test]
    fn cartesian_expected_count_over_seeds() {
        // 26 center columns; each of the other 294 kept with p = 54/294.
        let p: f64 = 54.0 / 294.0;
        let sd = (294.0 * p * (1.0 - p)).sqrt();
        let seeds = 1000;
        let total: usize = (0..seeds)
            .map(|s| Mask::cartesian(1, 320, 4.0, 0.08, s).unwrap().columns().unwrap().len())
            .sum();
        let mean = total as f64 / seeds as f64;
        assert!((mean - 80.0).abs() < 3.0 * sd / (seeds as f64).sqrt());
        // realized acceleration averages near 4
        let accel: f64 = (0..seeds)
            .map(|s| Mask::cartesian(1, 320, 4.0, 0.08, s).unwrap().realized_acceleration())
            .sum::<f64>()
            / seeds as f64;
        assert!((accel - 4.0).abs() < 0.1, "{accel}");
    }

    #[test]
    fn cartesian_unit_acceleration_samples_everything() {
        let m = Mask::cartesian(4, 64, 1.0, 0.08, 9).unwrap();
        assert_eq!(m.sampled_count(), 4 * 64);
    }

    #[test]
    fn cartesian_is_deterministic() {
        let a = Mask::cartesian(16, 96, 6.0, 0.06, 42).unwrap();
        let b = Mask::cartesian(16, 96, 6.0, 0.06, 42).unwrap();
        assert_eq!(a, b);
        let c = Mask::cartesian(16, 96, 6.0, 0.06, 43).unwrap();
        assert_ne!(a.columns(), c.columns());
    }

    #[test]
    fn infeasible_parameters() {
        // 0.5·64 = 32 center columns, budget 64/4 = 16
        assert!(Mask::cartesian(4, 64, 4.0, 0.5, 0).is_err());
        assert!(Mask::cartesian(4, 64, 4.0, 0.001, 0).is_err());
        assert!(Mask::cartesian(4, 64, 0.5, 0.08, 0).is_err());
        assert!(Mask::cartesian(4, 64, 4.0, 1.0, 0).is_err());
        assert!(Mask::gaussian_1d(4, 64, 4.0, 0.5, 0).is_err());
    }

    #[test]
    fn gaussian_probabilities_hit_target() {
        let probs = Mask::gaussian_1d_probabilities(320, 8.0, 0.04).unwrap();
        let total: f64 = probs.iter().sum();
        assert!((total - 40.0).abs() < 1e-9);
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        // heavy capping when the budget is large
        let probs = Mask::gaussian_1d_probabilities(64, 1.5, 0.08).unwrap();
        assert!((probs.iter().sum::<f64>() - 64.0 / 1.5).abs() < 1e-9);
    }

    #[test]
    fn gaussian_full_budget_samples_everything() {
        let m = Mask::gaussian_1d(4, 50, 1.0, 0.1, 5).unwrap();
        assert_eq!(m.columns().unwrap().len(), 50);
    }

    #[test]
    fn gaussian_histogram_is_centered_and_unimodal() {
        let w = 64;
        let seeds = 10_000u64;
        let mut hist = vec![0usize; w];
        for s in 0..seeds {
            let m = Mask::gaussian_1d(1, w, 4.0, 0.08, s).unwrap();
            column_structure_holds(&m);
            for &c in m.columns().unwrap() {
                hist[c] += 1;
            }
        }
        let total: usize = hist.iter().sum();
        let centroid =
            hist.iter().enumerate().map(|(c, n)| c * n).sum::<usize>() as f64 / total as f64;
        assert!((centroid - w as f64 / 2.0).abs() <= 2.0, "{centroid}");
        // empirical frequencies track the inclusion probabilities
        let probs = Mask::gaussian_1d_probabilities(w, 4.0, 0.08).unwrap();
        for (n, p) in hist.iter().zip(&probs) {
            let f = *n as f64 / seeds as f64;
            let sd = (p * (1.0 - p) / seeds as f64).sqrt();
            assert!((f - p).abs() <= 5.0 * sd + 1e-12);
        }
        // and those probabilities rise to a single plateau then fall
        let peak = probs.iter().position(|&p| p == 1.0).unwrap();
        assert!(probs[..=peak].windows(2).all(|p| p[0] <= p[1]));
        let last_peak = probs.iter().rposition(|&p| p == 1.0).unwrap();
        assert!(probs[peak..=last_peak].iter().all(|&p| p == 1.0));
        assert!(probs[last_peak..].windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn apply_mask_cases() {
        let k = KSpace::from_grid(
            ComplexImage::from_fn(4, 6, |r, c| Complex64::new(r as f64 + 1.0, c as f64)).unwrap(),
        );
        assert_eq!(apply_mask(&k, &Mask::full(4, 6)).unwrap(), k);
        assert_eq!(apply_mask(&k, &Mask::empty(4, 6)).unwrap(), KSpace::zeros(4, 6));
        let m = Mask::cartesian(4, 6, 2.0, 0.34, 1).unwrap();
        let once = apply_mask(&k, &m).unwrap();
        assert_eq!(apply_mask(&once, &m).unwrap(), once);
        assert!(once.norm() <= k.norm());
        assert!(matches!(
            apply_mask(&k, &Mask::full(6, 4)),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
