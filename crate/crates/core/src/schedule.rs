//! Diffusion noise schedules and their re-spaced (shortened) views.
//!
//! Timesteps are 1-based throughout: position `t` runs over `1..=num_steps`
//! and `alpha_bar(0)` is defined as 1. Every schedule also remembers the
//! original timestep label of each position, so a denoiser trained on the
//! full schedule can be queried while sampling on a re-spaced one.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset `s` of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;
/// Upper clip applied to cosine-schedule betas.
pub const COSINE_MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear { beta_start: f64, beta_end: f64 },
    Cosine { offset: f64, max_beta: f64 },
    Respaced { parent: Box<ScheduleKind>, parent_steps: usize },
}

/// Coefficients of a single reverse step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    /// Timestep label in the original (un-respaced) schedule.
    pub label: usize,
    pub beta: f64,
    pub alpha: f64,
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    labels: Vec<usize>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma2: Vec<f64>,
}

impl Schedule {
    /// Cosine schedule: `alpha_bar(t) = f(t)/f(0)` with
    /// `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`, betas clipped to 0.999.
    pub fn new_cosine(num_steps: usize) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::invalid("cosine schedule needs at least one step"));
        }
        let s = COSINE_OFFSET;
        let f = |t: usize| {
            let x = ((t as f64 / num_steps as f64 + s) / (1.0 + s)) * FRAC_PI_2;
            x.cos().powi(2)
        };
        let beta = (1..=num_steps)
            .map(|t| (1.0 - f(t) / f(t - 1)).min(COSINE_MAX_BETA))
            .collect();
        Self::from_betas(
            ScheduleKind::Cosine {
                offset: s,
                max_beta: COSINE_MAX_BETA,
            },
            beta,
        )
    }

    /// Linear betas from `beta_start` to `beta_end`, endpoints inclusive.
    pub fn new_linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::invalid("linear schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "linear schedule requires 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )));
        }
        let beta = (0..num_steps)
            .map(|i| {
                if num_steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (num_steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(
            ScheduleKind::Linear {
                beta_start,
                beta_end,
            },
            beta,
        )
    }

    fn from_betas(kind: ScheduleKind, beta: Vec<f64>) -> Result<Self> {
        if let Some((i, b)) = beta
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && **b < 1.0))
        {
            return Err(Error::invalid(format!(
                "beta at t={} is {b}, must lie in (0, 1)",
                i + 1
            )));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar: Vec<f64> = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let labels = (1..=beta.len()).collect();
        Self::assemble(kind, labels, beta, alpha, alpha_bar)
    }

    fn assemble(
        kind: ScheduleKind,
        labels: Vec<usize>,
        beta: Vec<f64>,
        alpha: Vec<f64>,
        alpha_bar: Vec<f64>,
    ) -> Result<Self> {
        let mut prev = 1.0;
        for (i, &ab) in alpha_bar.iter().enumerate() {
            if !(ab < prev) {
                return Err(Error::invalid(format!(
                    "alpha_bar is not strictly decreasing at t={}",
                    i + 1
                )));
            }
            prev = ab;
        }
        let sigma2 = (0..beta.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]
            })
            .collect();
        Ok(Self {
            kind,
            labels,
            beta,
            alpha,
            alpha_bar,
            sigma2,
        })
    }

    /// Shortened schedule over `num_substeps` evenly spaced positions.
    ///
    /// Position `j` maps to parent position `T - floor((n - j)·T / n)`, so the
    /// last position is always the parent's final (noisiest) step. The
    /// re-spaced `alpha_bar` values are copied from the parent and betas are
    /// recomputed from consecutive ratios.
    pub fn respace(&self, num_substeps: usize) -> Result<Self> {
        let total = self.num_steps();
        if num_substeps == 0 || num_substeps > total {
            return Err(Error::invalid(format!(
                "cannot respace a {total}-step schedule to {num_substeps} steps"
            )));
        }
        let positions: Vec<usize> = (1..=num_substeps)
            .map(|j| total - (num_substeps - j) * total / num_substeps)
            .collect();
        let labels = positions.iter().map(|&p| self.labels[p - 1]).collect();
        let alpha_bar: Vec<f64> = positions.iter().map(|&p| self.alpha_bar[p - 1]).collect();
        let alpha: Vec<f64> = alpha_bar
            .iter()
            .enumerate()
            .map(|(j, ab)| if j == 0 { *ab } else { ab / alpha_bar[j - 1] })
            .collect();
        let beta: Vec<f64> = alpha.iter().map(|a| 1.0 - a).collect();
        if beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::invalid("respacing produced a beta outside (0, 1)"));
        }
        Self::assemble(
            ScheduleKind::Respaced {
                parent: Box::new(self.kind.clone()),
                parent_steps: total,
            },
            labels,
            beta,
            alpha,
            alpha_bar,
        )
    }

    pub fn num_steps(&self) -> usize {
        self.beta.len()
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn sigma2s(&self) -> &[f64] {
        &self.sigma2
    }

    /// Original timestep label of every position, ascending.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `alpha_bar` at position `t`, with `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        match t {
            0 => Ok(1.0),
            t if t <= self.num_steps() => Ok(self.alpha_bar[t - 1]),
            t => Err(self.out_of_range(t)),
        }
    }

    pub fn step(&self, t: usize) -> Result<StepCoefficients> {
        if t == 0 || t > self.num_steps() {
            return Err(self.out_of_range(t));
        }
        let i = t - 1;
        Ok(StepCoefficients {
            label: self.labels[i],
            beta: self.beta[i],
            alpha: self.alpha[i],
            alpha_bar: self.alpha_bar[i],
            alpha_bar_prev: if i == 0 { 1.0 } else { self.alpha_bar[i - 1] },
            sigma2: self.sigma2[i],
        })
    }

    /// `alpha_bar` for an original timestep label; only labels that survive
    /// respacing are known to a re-spaced schedule.
    pub fn alpha_bar_for_label(&self, label: usize) -> Result<f64> {
        self.labels
            .binary_search(&label)
            .map(|i| self.alpha_bar[i])
            .map_err(|_| {
                Error::invalid(format!("timestep label {label} is not part of {self}"))
            })
    }

    /// Largest original label, i.e. the length of the root schedule
    /// (respacing always keeps the final step).
    pub fn label_range(&self) -> usize {
        self.labels[self.labels.len() - 1]
    }

    fn out_of_range(&self, t: usize) -> Error {
        Error::invalid(format!(
            "timestep {t} outside 1..={} of {self}",
            self.num_steps()
        ))
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn describe(kind: &ScheduleKind, steps: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match kind {
                ScheduleKind::Linear {
                    beta_start,
                    beta_end,
                } => write!(f, "linear(T={steps}, beta={beta_start}..{beta_end})"),
                ScheduleKind::Cosine { .. } => write!(f, "cosine(T={steps})"),
                ScheduleKind::Respaced {
                    parent,
                    parent_steps,
                } => {
                    write!(f, "respaced(")?;
                    describe(parent, *parent_steps, f)?;
                    write!(f, ", {steps})")
                }
            }
        }
        describe(&self.kind, self.num_steps(), f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn linear_two_steps() {
        let s = Schedule::new_linear(2, 0.1, 0.1).unwrap();
        assert!((s.alpha_bars()[0] - 0.9).abs() < 1e-15);
        assert!((s.alpha_bars()[1] - 0.81).abs() < 1e-15);
        assert_eq!(s.sigma2s()[0], 0.0);
        // (1 - 0.9) / (1 - 0.81) * 0.1
        assert!((s.sigma2s()[1] - 0.052_631_578_947_368_4).abs() < 1e-14);
    }

    #[test]
    fn linear_single_step() {
        let s = Schedule::new_linear(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bars(), &[0.5]);
        assert_eq!(s.sigma2s(), &[0.0]);
    }

    #[test]
    fn linear_rejects_bad_bounds() {
        assert!(Schedule::new_linear(10, 0.0, 0.1).is_err());
        assert!(Schedule::new_linear(10, 0.2, 0.1).is_err());
        assert!(Schedule::new_linear(10, 0.1, 1.0).is_err());
        assert!(Schedule::new_linear(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn cosine_first_value() {
        // cos²((1/4000 + 0.008)/1.008 · π/2) / cos²(0.008/1.008 · π/2), evaluated offline.
        let s = Schedule::new_cosine(4000).unwrap();
        assert!(rel(s.alpha_bars()[0], 0.999_990_134_181_186_3) < 1e-12);
        assert!(s.alpha_bars()[0] < 1.0);
        assert!(s.alpha_bars()[3999] < s.alpha_bars()[0]);
    }

    #[test]
    fn cosine_single_step() {
        let s = Schedule::new_cosine(1).unwrap();
        assert_eq!(s.num_steps(), 1);
        assert_eq!(s.alpha_bars()[0], 1.0 - s.betas()[0]);
        assert_eq!(s.sigma2s()[0], 0.0);
        // the unclipped beta would be 1; the clip keeps it inside (0, 1)
        assert_eq!(s.betas()[0], COSINE_MAX_BETA);
    }

    #[test]
    fn cosine_rejects_zero_steps() {
        assert!(matches!(
            Schedule::new_cosine(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn respace_identity() {
        let s = Schedule::new_cosine(50).unwrap();
        let r = s.respace(50).unwrap();
        assert_eq!(r.alpha_bars(), s.alpha_bars());
        assert_eq!(r.labels(), s.labels());
    }

    #[test]
    fn respace_to_one_step() {
        let s = Schedule::new_cosine(100).unwrap();
        let r = s.respace(1).unwrap();
        assert_eq!(r.labels(), &[100]);
        assert_eq!(r.alpha_bars()[0], s.alpha_bars()[99]);
        assert!((r.betas()[0] - (1.0 - s.alpha_bars()[99])).abs() < 1e-15);
        assert_eq!(r.sigma2s()[0], 0.0);
    }

    #[test]
    fn respace_4000_to_100() {
        let s = Schedule::new_cosine(4000).unwrap();
        let r = s.respace(100).unwrap();
        assert_eq!(r.num_steps(), 100);
        let expected: Vec<usize> = (1..=100).map(|j| 40 * j).collect();
        assert_eq!(r.labels(), expected.as_slice());
        for (j, &label) in r.labels().iter().enumerate() {
            assert_eq!(r.alpha_bars()[j], s.alpha_bars()[label - 1]);
        }
        assert_eq!(r.alpha_bars()[99], s.alpha_bars()[3999]);
        assert_eq!(r.label_range(), 4000);
        assert_eq!(r.to_string(), "respaced(cosine(T=4000), 100)");
    }

    #[test]
    fn respace_uneven_includes_endpoint() {
        let s = Schedule::new_cosine(10).unwrap();
        let r = s.respace(3).unwrap();
        // 10 - floor(2·10/3), 10 - floor(10/3), 10
        assert_eq!(r.labels(), &[4, 7, 10]);
    }

    #[test]
    fn respace_rejects_too_many() {
        let s = Schedule::new_cosine(10).unwrap();
        assert!(s.respace(11).is_err());
        assert!(s.respace(0).is_err());
    }

    #[test]
    fn label_lookup() {
        let s = Schedule::new_cosine(100).unwrap().respace(10).unwrap();
        assert!(s.alpha_bar_for_label(50).is_ok());
        assert!(s.alpha_bar_for_label(51).is_err());
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        assert!(s.step(0).is_err());
        assert!(s.step(11).is_err());
    }

    fn check_invariants(s: &Schedule) {
        let mut cum = 1.0;
        for t in 1..=s.num_steps() {
            let c = s.step(t).unwrap();
            assert!(c.beta > 0.0 && c.beta < 1.0);
            assert!(c.alpha_bar < c.alpha_bar_prev);
            assert!(c.sigma2 >= 0.0 && c.sigma2 <= c.beta);
            assert!((c.beta - (1.0 - c.alpha)).abs() < 1e-15);
            cum *= c.alpha;
            assert!(rel(cum, c.alpha_bar) <= 1e-12, "t={t}: {cum} vs {}", c.alpha_bar);
        }
        assert_eq!(s.sigma2s()[0], 0.0);
    }

    proptest! {
        #[test]
        fn cosine_invariants(t in 1usize..3000) {
            check_invariants(&Schedule::new_cosine(t).unwrap());
        }

        #[test]
        fn linear_invariants(t in 1usize..2000, a in 1e-5f64..0.05, d in 0.0f64..0.05) {
            check_invariants(&Schedule::new_linear(t, a, a + d).unwrap());
        }

        #[test]
        fn respace_preserves_marginal(t in 2usize..2000, frac in 0.0f64..1.0) {
            let s = Schedule::new_cosine(t).unwrap();
            let n = 1 + ((t - 1) as f64 * frac) as usize;
            let r = s.respace(n).unwrap();
            check_invariants(&r);
            let mut cum = 1.0;
            for (j, &label) in r.labels().iter().enumerate() {
                cum *= r.alphas()[j];
                prop_assert!(rel(cum, s.alpha_bars()[label - 1]) <= 1e-12);
            }
            prop_assert_eq!(*r.labels().last().unwrap(), t);
        }
    }
}
