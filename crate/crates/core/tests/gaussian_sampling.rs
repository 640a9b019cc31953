//! Sampling statistics under a Gaussian prior, where the reverse chain is an
//! affine map per coefficient and its moments can be propagated exactly.

use ksgdiffuse::kspace::{apply_mask, fft2c, Mask};
use ksgdiffuse::oracle::gaussian_posterior;
use ksgdiffuse::rng::{self, gaussian_field, Purpose};
use ksgdiffuse::sampler::{sample_ksg_chain, sample_unconditional};
use ksgdiffuse::{
    c2f_reconstruct, ComplexImage, GaussianPriorDenoiser, SamplerConfig, Schedule,
};
use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and per-component variance of one coefficient after running the
/// reverse chain from `N(0, 1)` with the exact Gaussian-prior noise estimate.
fn propagate(schedule: &Schedule, mu: f64, s2: f64) -> (f64, f64) {
    let (mut mean, mut var) = (0.0, 1.0);
    for t in (1..=schedule.num_steps()).rev() {
        let c = schedule.step(t).unwrap();
        let ab = c.alpha_bar;
        let d = ab * s2 + 1.0 - ab;
        // eps = g·y + h
        let g = (1.0 - ab * s2 / d) / (1.0 - ab).sqrt();
        let h = -(ab.sqrt() * (1.0 - ab) * mu / d) / (1.0 - ab).sqrt();
        let k = (1.0 - c.alpha) / (1.0 - ab).sqrt();
        let a = (1.0 - k * g) / c.alpha.sqrt();
        let b = -k * h / c.alpha.sqrt();
        mean = a * mean + b;
        var = a * a * var + c.sigma2;
    }
    (mean, var)
}

fn component_stats(values: impl Iterator<Item = Complex64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().map(|v| v.re + v.im).sum::<f64>() / (2.0 * n);
    let var = values
        .map(|v| (v.re - mean).powi(2) + (v.im - mean).powi(2))
        .sum::<f64>()
        / (2.0 * n - 1.0);
    (mean, var)
}

#[test]
fn unconditional_moments_match_propagation() {
    let (mu, s2) = (0.5, 0.7);
    let schedule = Schedule::new_cosine(200).unwrap();
    let prior = GaussianPriorDenoiser::new(
        ComplexImage::from_fn(64, 64, |_, _| Complex64::new(mu, mu)).unwrap(),
        s2,
    )
    .unwrap();
    let y = sample_unconditional((64, 64), &schedule, &prior, 3).unwrap();
    let (m, v) = component_stats(y.data().iter().copied());
    let (pm, pv) = propagate(&schedule, mu, s2);

    let n = 2.0 * 4096.0;
    assert!((m - pm).abs() < 4.0 * (pv / n).sqrt(), "mean {m} vs {pm}");
    assert!((m - mu).abs() < 3.0 * (s2 / 4096.0).sqrt(), "mean {m} vs prior {mu}");
    assert!((v / pv - 1.0).abs() < 0.06, "variance {v} vs {pv}");
    assert!((0.9..=1.1).contains(&(v / s2)), "variance ratio {}", v / s2);
}

/// Unobserved k-space coefficients never see the observation, so across
/// chains on the coarse schedule they follow the scalar propagation exactly,
/// and their variance is the same constant at every coordinate.
#[test]
fn coarse_variance_is_a_constant_offset() {
    let (h, w) = (8, 8);
    let s2 = 1.0;
    let full = Schedule::new_cosine(200).unwrap();
    let coarse = full.respace(50).unwrap();
    let prior = GaussianPriorDenoiser::new(ComplexImage::zeros(h, w), s2).unwrap();
    let mask = Mask::from_columns(h, w, vec![3, 4]).unwrap();
    let mut rng = rng::stream(11, 0, 0, Purpose::InitialNoise);
    let x_obs = apply_mask(&fft2c(&gaussian_field(&mut rng, h, w, s2)), &mask).unwrap();

    let chains = 8192;
    let ks: Vec<_> = (0..chains)
        .map(|c| fft2c(&sample_ksg_chain(&x_obs, &mask, &coarse, &prior, true, 5, c).unwrap()))
        .collect();

    let (_, expected) = propagate(&coarse, 0.0, s2);
    assert!((0.5..=1.5).contains(&expected), "{expected}");
    for i in 0..h * w {
        let values = ks.iter().map(|k| k.data()[i]);
        if mask.entries()[i] == 1 {
            assert!(values.map(|v| (v - x_obs.data()[i]).norm()).fold(0.0, f64::max) < 1e-9);
        } else {
            let (m, v) = component_stats(values);
            assert!(m.abs() < 5.0 * (expected / (2.0 * chains as f64)).sqrt(), "coef {i}: mean {m}");
            assert!((v / expected - 1.0).abs() < 0.06, "coef {i}: {v} vs {expected}");
        }
    }
}

fn phantom_problem(h: usize, w: usize, seed: u64) -> (ComplexImage, Mask, ksgdiffuse::KSpace) {
    let mu = ComplexImage::from_fn(h, w, |r, c| {
        let d = (r as f64 - h as f64 / 2.0).powi(2) + (c as f64 - w as f64 / 2.0).powi(2);
        Complex64::new(4.0 * (-d / 18.0).exp(), 0.0)
    })
    .unwrap();
    let mask = Mask::cartesian(h, w, 4.0, 0.08, seed).unwrap();
    let mut rng = rng::stream(seed, 0, 0, Purpose::InitialNoise);
    let noise = gaussian_field(&mut rng, h, w, 1.0);
    let truth = ComplexImage::new(
        h,
        w,
        mu.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect(),
    )
    .unwrap();
    let x_obs = apply_mask(&fft2c(&truth), &mask).unwrap();
    (mu, mask, x_obs)
}

fn config(chains: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        total_steps: 100,
        respacing: 4,
        chains,
        refine_steps: 5,
        seed,
        ..SamplerConfig::default()
    }
}

#[test]
fn result_is_independent_of_thread_count() {
    let (mu, mask, x_obs) = phantom_problem(16, 16, 1);
    let prior = GaussianPriorDenoiser::new(mu, 1.0).unwrap();
    let schedule = Schedule::new_cosine(100).unwrap();
    let cfg = SamplerConfig { keep_samples: true, ..config(8, 42) };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| c2f_reconstruct(&x_obs, &mask, &schedule, &prior, &cfg).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.variance, b.variance);
    assert_eq!(a.samples, b.samples);
}

fn spearman_p_value(x: &[f64], y: &[f64]) -> (f64, f64) {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    let rho = cov / (vx * vy).sqrt();
    let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
    let p = 1.0 - StudentsT::new(0.0, 1.0, n - 2.0).unwrap().cdf(t);
    (rho, p)
}

#[test]
fn averaging_more_chains_approaches_posterior_mean() {
    let (mu, mask, x_obs) = phantom_problem(16, 16, 2);
    let oracle = gaussian_posterior(&mu, 1.0, &mask, &x_obs).unwrap();
    let prior = GaussianPriorDenoiser::new(mu, 1.0).unwrap();
    let schedule = Schedule::new_cosine(100).unwrap();
    let (mut n_axis, mut neg_err) = (Vec::new(), Vec::new());
    for seed in 0..6 {
        for n in [1, 2, 5, 10] {
            let cfg = SamplerConfig { refine: false, ..config(n, seed) };
            let r = c2f_reconstruct(&x_obs, &mask, &schedule, &prior, &cfg).unwrap();
            n_axis.push(n as f64);
            neg_err.push(-r.mean.sub(&oracle.mean).unwrap().norm());
        }
    }
    let (rho, p) = spearman_p_value(&n_axis, &neg_err);
    assert!(rho > 0.0 && p < 0.05, "rho={rho} p={p}");
}

#[test]
fn reconstruction_mean_tracks_oracle() {
    let (mu, mask, x_obs) = phantom_problem(16, 16, 3);
    let oracle = gaussian_posterior(&mu, 1.0, &mask, &x_obs).unwrap();
    let prior = GaussianPriorDenoiser::new(mu, 1.0).unwrap();
    let schedule = Schedule::new_cosine(100).unwrap();
    let r = c2f_reconstruct(&x_obs, &mask, &schedule, &prior, &config(64, 9)).unwrap();
    let rel = r.mean.sub(&oracle.mean).unwrap().norm() / oracle.mean.norm();
    assert!(rel < 0.2, "relative error {rel}");
}
