//! Gaussian peak fit on a normalized correlation function.
//!
//! Model: g2(d) = offset + amplitude * exp(-sum_i d_i^2 / w_i^2), fitted by
//! Levenberg-Marquardt with inverse-variance weights. Initialization is
//! deterministic (no RNG): offset from the median of the outer 20% of bins,
//! amplitude from the central bin, widths from weighted RMS profiles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::CorrelationResult;

/// Bins with fewer mixed-event counts than this carry too little
/// normalization statistics and are excluded from the fit.
const MIN_MIXED_COUNTS: u64 = 10;
const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    /// Peak height above the offset; positive for bunching, negative for
    /// antibunching.
    pub amplitude: f64,
    /// 1/e half-widths per fitted axis.
    pub widths: Vec<f64>,
    pub offset: f64,
    /// Reduced chi-square of the converged fit.
    pub goodness: f64,
    /// One-sigma uncertainty on the amplitude from the fit covariance.
    pub amplitude_sigma: f64,
    pub iterations: usize,
    pub n_bins_used: usize,
}

struct FitData {
    /// Bin-center coordinates, flattened (n_points x n_axes).
    coords: Vec<Vec<f64>>,
    y: Vec<f64>,
    weight: Vec<f64>,
    /// Normalized squared distance of each point from the origin, for
    /// picking the central bin and the baseline region.
    rho2: Vec<f64>,
}

fn collect_fit_data(result: &CorrelationResult) -> Result<FitData> {
    let spec = &result.spec;
    let n_axes = spec.axes.len();
    let mut data = FitData { coords: Vec::new(), y: Vec::new(), weight: Vec::new(), rho2: Vec::new() };
    let mut axis_bins_used = vec![std::collections::HashSet::new(); n_axes];
    for flat in 0..result.g2.len() {
        if !result.valid[flat] || result.mixed[flat] < MIN_MIXED_COUNTS {
            continue;
        }
        let centers = spec.centers_of(flat);
        let mut rho2 = 0.0;
        for (i, axis) in spec.axes.iter().enumerate() {
            let u = centers[i] / axis.half_range;
            rho2 += u * u;
            let bin = ((centers[i] + axis.half_range) / axis.bin_width()) as usize;
            axis_bins_used[i].insert(bin.min(axis.n_bins - 1));
        }
        let sigma = result.err[flat].max(1e-300);
        data.coords.push(centers);
        data.y.push(result.g2[flat]);
        data.weight.push(1.0 / (sigma * sigma));
        data.rho2.push(rho2);
    }
    for (i, used) in axis_bins_used.iter().enumerate() {
        if used.len() < 5 {
            return Err(Error::FitFailure(format!(
                "axis {i}: only {} distinct bins carry enough statistics (need >= 5)",
                used.len()
            )));
        }
    }
    Ok(data)
}

fn initial_guess(data: &FitData, spec: &super::HistogramSpec) -> Vec<f64> {
    let n_axes = spec.axes.len();
    // Offset: median g2 of the outer 20% (by normalized radius) of bins.
    let mut order: Vec<usize> = (0..data.y.len()).collect();
    order.sort_by(|&a, &b| data.rho2[a].total_cmp(&data.rho2[b]));
    let n_outer = (data.y.len() / 5).max(1);
    let mut outer: Vec<f64> =
        order[data.y.len() - n_outer..].iter().map(|&k| data.y[k]).collect();
    outer.sort_by(f64::total_cmp);
    let offset = if outer.len() % 2 == 1 {
        outer[outer.len() / 2]
    } else {
        0.5 * (outer[outer.len() / 2 - 1] + outer[outer.len() / 2])
    };
    // Amplitude: central bin minus offset.
    let center = order[0];
    let amplitude = data.y[center] - offset;
    // Widths: RMS of the |g2 - offset| profile along each axis.
    let mut params = vec![offset, amplitude];
    for i in 0..n_axes {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..data.y.len() {
            let w = (data.y[k] - offset).abs();
            num += w * data.coords[k][i] * data.coords[k][i];
            den += w;
        }
        let axis = &spec.axes[i];
        let raw = if den > 0.0 { (2.0 * num / den).sqrt() } else { 0.0 };
        params.push(raw.clamp(0.5 * axis.bin_width(), 2.0 * axis.half_range));
    }
    params
}

/// params = [offset, amplitude, w_0, ..]; returns model values at a point.
fn model(params: &[f64], coords: &[f64]) -> f64 {
    let mut arg = 0.0;
    for (i, &x) in coords.iter().enumerate() {
        let w = params[2 + i];
        arg += x * x / (w * w);
    }
    params[0] + params[1] * (-arg).exp()
}

fn chi2(params: &[f64], data: &FitData) -> f64 {
    let mut sum = 0.0;
    for k in 0..data.y.len() {
        let r = model(params, &data.coords[k]) - data.y[k];
        sum += data.weight[k] * r * r;
    }
    sum
}

/// Weighted normal equations: J^T W J and J^T W r at the current point.
fn normal_equations(params: &[f64], data: &FitData) -> (DMatrix<f64>, DVector<f64>) {
    let n_p = params.len();
    let mut jtj = DMatrix::zeros(n_p, n_p);
    let mut jtr = DVector::zeros(n_p);
    let mut grad = vec![0.0; n_p];
    for k in 0..data.y.len() {
        let coords = &data.coords[k];
        let mut arg = 0.0;
        for (i, &x) in coords.iter().enumerate() {
            let w = params[2 + i];
            arg += x * x / (w * w);
        }
        let e = (-arg).exp();
        grad[0] = 1.0;
        grad[1] = e;
        for (i, &x) in coords.iter().enumerate() {
            let w = params[2 + i];
            grad[2 + i] = params[1] * e * 2.0 * x * x / (w * w * w);
        }
        let r = params[0] + params[1] * e - data.y[k];
        let wgt = data.weight[k];
        for a in 0..n_p {
            jtr[a] += wgt * grad[a] * r;
            for b in a..n_p {
                jtj[(a, b)] += wgt * grad[a] * grad[b];
            }
        }
    }
    for a in 0..n_p {
        for b in 0..a {
            jtj[(a, b)] = jtj[(b, a)];
        }
    }
    (jtj, jtr)
}

/// Fit the Gaussian peak model to all qualifying bins of a correlation
/// result. Fails (never silently degrades) when statistics are too thin or
/// the iteration does not converge.
pub fn fit_gaussian_peak(result: &CorrelationResult) -> Result<GaussianFit> {
    let data = collect_fit_data(result)?;
    let n_axes = result.spec.axes.len();
    let n_params = 2 + n_axes;
    if data.y.len() <= n_params {
        return Err(Error::FitFailure(format!(
            "{} usable bins cannot constrain {} parameters",
            data.y.len(),
            n_params
        )));
    }
    let mut params = initial_guess(&data, &result.spec);
    let mut current_chi2 = chi2(&params, &data);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&params, &data);
        let mut damped = jtj.clone();
        for a in 0..n_params {
            damped[(a, a)] += lambda * jtj[(a, a)].max(1e-300);
        }
        let Some(delta) = damped.lu().solve(&(-&jtr)) else {
            lambda = (lambda * 10.0).min(1e12);
            continue;
        };
        let trial: Vec<f64> = params.iter().zip(delta.iter()).map(|(p, d)| p + d).collect();
        let trial_chi2 = chi2(&trial, &data);
        if trial_chi2.is_finite() && trial_chi2 <= current_chi2 {
            let step: f64 = params
                .iter()
                .zip(delta.iter())
                .map(|(p, d)| (d / (p.abs() + 1e-30)).abs())
                .fold(0.0, f64::max);
            params = trial;
            current_chi2 = trial_chi2;
            lambda = (lambda * 0.1).max(1e-12);
            if step < STEP_TOLERANCE {
                converged = true;
                break;
            }
        } else {
            lambda = (lambda * 10.0).min(1e12);
        }
    }
    if !converged {
        return Err(Error::FitFailure(format!(
            "no convergence after {MAX_ITERATIONS} iterations (chi2 = {current_chi2:.6e})"
        )));
    }
    // Covariance from the undamped normal matrix at the solution.
    let (jtj, _) = normal_equations(&params, &data);
    let amplitude_sigma = jtj
        .try_inverse()
        .map(|cov| cov[(1, 1)].max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);
    let dof = (data.y.len() - n_params).max(1);
    Ok(GaussianFit {
        amplitude: params[1],
        widths: params[2..].iter().map(|w| w.abs()).collect(),
        offset: params[0],
        goodness: current_chi2 / dof as f64,
        amplitude_sigma,
        iterations,
        n_bins_used: data.y.len(),
    })
}

/// Peak significance: fitted amplitude over the RMS residual of the
/// baseline (outer 20% of bins by normalized radius). Zero amplitude gives
/// zero regardless of the noise floor.
pub fn signal_to_noise(result: &CorrelationResult, fit: &GaussianFit) -> f64 {
    if fit.amplitude == 0.0 {
        return 0.0;
    }
    let Ok(data) = collect_fit_data(result) else {
        return 0.0;
    };
    let mut order: Vec<usize> = (0..data.y.len()).collect();
    order.sort_by(|&a, &b| data.rho2[a].total_cmp(&data.rho2[b]));
    let n_outer = (data.y.len() / 5).max(1);
    let params: Vec<f64> = [fit.offset, fit.amplitude]
        .iter()
        .copied()
        .chain(fit.widths.iter().copied())
        .collect();
    let mut sum = 0.0;
    for &k in &order[data.y.len() - n_outer..] {
        let r = data.y[k] - model(&params, &data.coords[k]);
        sum += r * r;
    }
    let rms = (sum / n_outer as f64).sqrt();
    if rms == 0.0 {
        return 0.0;
    }
    fit.amplitude / rms
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{AxisSpec, CoordKind, CorrelationResult, HistogramSpec, PairHistogram};
    use crate::rng::shot_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    fn spec_1d(n_bins: usize, hr: f64) -> HistogramSpec {
        HistogramSpec {
            kind: CoordKind::TimeDifference,
            axes: vec![AxisSpec { n_bins, half_range: hr }],
            mixing_factor: 4,
            center: [0.0; 3],
        }
    }

    fn spec_3d(n_bins: usize, hr: f64) -> HistogramSpec {
        HistogramSpec {
            kind: CoordKind::Difference,
            axes: vec![AxisSpec { n_bins, half_range: hr }; 3],
            mixing_factor: 4,
            center: [0.0; 3],
        }
    }

    /// Noise-free correlation result following the model exactly.
    fn exact_result(
        spec: &HistogramSpec,
        offset: f64,
        amplitude: f64,
        widths: &[f64],
    ) -> CorrelationResult {
        let n = spec.total_bins();
        let mut g2 = vec![0.0; n];
        for flat in 0..n {
            let c = spec.centers_of(flat);
            let arg: f64 = c.iter().zip(widths).map(|(x, w)| x * x / (w * w)).sum();
            g2[flat] = offset + amplitude * (-arg).exp();
        }
        CorrelationResult {
            spec: spec.clone(),
            g2,
            err: vec![0.01; n],
            valid: vec![true; n],
            same_shot: vec![1000; n],
            mixed: vec![1000; n],
            fit: None,
        }
    }

    /// Synthetic histogram with Poisson counting noise around a known g2.
    fn poisson_result(
        spec: &HistogramSpec,
        amplitude: f64,
        widths: &[f64],
        same_scale: f64,
        mixed_scale: f64,
        seed: u64,
    ) -> CorrelationResult {
        let mut rng = shot_rng(seed, 0);
        let mut hist = PairHistogram::empty(spec);
        for flat in 0..spec.total_bins() {
            let c = spec.centers_of(flat);
            let arg: f64 = c.iter().zip(widths).map(|(x, w)| x * x / (w * w)).sum();
            let g2 = 1.0 + amplitude * (-arg).exp();
            hist.same_shot[flat] =
                Poisson::new(same_scale * g2).unwrap().sample(&mut rng) as u64;
            hist.mixed[flat] = Poisson::new(mixed_scale).unwrap().sample(&mut rng) as u64;
        }
        crate::correlator::normalize(&hist).unwrap()
    }

    #[test]
    fn recovers_exact_parameters_1d() {
        let spec = spec_1d(41, 1.0);
        let result = exact_result(&spec, 1.0, 0.8, &[0.3]);
        let fit = fit_gaussian_peak(&result).unwrap();
        assert!((fit.offset - 1.0).abs() < 1e-6, "offset {}", fit.offset);
        assert!((fit.amplitude - 0.8).abs() < 1e-6, "amplitude {}", fit.amplitude);
        assert!((fit.widths[0] - 0.3).abs() < 1e-6, "width {}", fit.widths[0]);
    }

    #[test]
    fn recovers_exact_parameters_3d_anisotropic() {
        let spec = spec_3d(11, 1.0);
        let widths = [0.25, 0.4, 0.6];
        let result = exact_result(&spec, 1.0, -0.5, &widths);
        let fit = fit_gaussian_peak(&result).unwrap();
        assert!((fit.amplitude + 0.5).abs() < 1e-5);
        for i in 0..3 {
            assert!(
                (fit.widths[i] - widths[i]).abs() < 1e-4,
                "axis {i}: {} vs {}",
                fit.widths[i],
                widths[i]
            );
        }
    }

    #[test]
    fn tolerates_poisson_noise() {
        let spec = spec_1d(41, 1.0);
        let result = poisson_result(&spec, 0.9, &[0.3], 4000.0, 16000.0, 11);
        let fit = fit_gaussian_peak(&result).unwrap();
        // Mixed-event normalization rescales g2 so the bin-average is one;
        // the peak-to-baseline ratio and the width are scale-free.
        let contrast = fit.amplitude / fit.offset;
        assert!((contrast - 0.9).abs() < 0.05, "contrast {contrast}");
        assert!((fit.widths[0] - 0.3).abs() < 0.05, "width {}", fit.widths[0]);
        assert!(fit.goodness < 2.0, "reduced chi2 {}", fit.goodness);
    }

    #[test]
    fn too_few_bins_is_a_fit_error() {
        let spec = spec_1d(4, 1.0);
        let result = exact_result(&spec, 1.0, 0.5, &[0.3]);
        let err = fit_gaussian_peak(&result).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn bins_with_thin_mixed_statistics_are_ignored() {
        let spec = spec_1d(41, 1.0);
        let mut result = exact_result(&spec, 1.0, 0.8, &[0.3]);
        // Corrupt some bins but mark them as under-sampled.
        for flat in [3usize, 17, 30] {
            result.g2[flat] = 50.0;
            result.mixed[flat] = MIN_MIXED_COUNTS - 1;
        }
        let fit = fit_gaussian_peak(&result).unwrap();
        assert!((fit.amplitude - 0.8).abs() < 1e-6);
    }

    #[test]
    fn flat_input_fits_zero_amplitude_and_zero_snr() {
        let spec = spec_1d(41, 1.0);
        let result = exact_result(&spec, 1.0, 0.0, &[0.3]);
        let fit = fit_gaussian_peak(&result).unwrap();
        assert!(fit.amplitude.abs() < 1e-9, "amplitude {}", fit.amplitude);
        let snr = signal_to_noise(&result, &fit);
        assert!(snr.abs() < 1e-3, "snr {snr}");
    }

    #[test]
    fn snr_scales_like_sqrt_of_statistics() {
        // Doubling the pair statistics should raise the significance by
        // sqrt(2) (Poisson errors shrink as 1/sqrt(N)).
        let spec = spec_1d(81, 1.0);
        let mut rng = shot_rng(13, 0);
        let mut sum_base = 0.0;
        let mut sum_double = 0.0;
        let reps = 16;
        for _ in 0..reps {
            let seed = rng.gen::<u64>() >> 1;
            let base = poisson_result(&spec, 0.8, &[0.25], 800.0, 3200.0, seed);
            let double = poisson_result(&spec, 0.8, &[0.25], 1600.0, 6400.0, seed + 1);
            let fit_b = fit_gaussian_peak(&base).unwrap();
            let fit_d = fit_gaussian_peak(&double).unwrap();
            sum_base += signal_to_noise(&base, &fit_b);
            sum_double += signal_to_noise(&double, &fit_d);
        }
        // Ratio of averaged SNRs: the per-realization ratio is biased by the
        // noisy denominator, the ratio of means is not.
        let ratio = sum_double / sum_base;
        assert!(
            (ratio - std::f64::consts::SQRT_2).abs() < 0.2 * std::f64::consts::SQRT_2,
            "SNR ratio {ratio}"
        );
    }
}
