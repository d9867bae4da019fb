//! Chaotic (thermal) boson sampling via Gaussian speckle synthesis.
//!
//! A complex Gaussian random field is drawn on a 3D grid by spectral
//! filtering of white complex Gaussian noise, so that its autocorrelation is
//! Gaussian with the model's coherence lengths. Atoms are then emitted as an
//! inhomogeneous Poisson process with rate proportional to |field|^2 times
//! the Gaussian intensity envelope (a Cox process, i.e. the permanental
//! point process of a chaotic source).

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Poisson, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::detector::IdealAtom;
use crate::error::Result;
use crate::sources::{FarFieldModel, Grid, SamplerConfig};

pub struct BosonSampler {
    grid: Grid,
    /// Spectral amplitude filter per axis, |H|^2 = exp(-q^2 l^2 / 2).
    filters: [Vec<f64>; 3],
    /// Intensity envelope per axis, exp(-x^2 / (2 W^2)).
    envelopes: [Vec<f64>; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    /// Scale applied after filtering so E|field|^2 = 1 in every cell.
    field_norm: f64,
    /// Poisson rate per unit envelope intensity.
    rate_scale: f64,
    mean_atoms: f64,
}

impl BosonSampler {
    pub fn new(model: &FarFieldModel, config: &SamplerConfig) -> Result<BosonSampler> {
        let grid = Grid::for_model(model, config)?;
        let mut planner = FftPlanner::new();
        let forward: [Arc<dyn Fft<f64>>; 3] =
            core::array::from_fn(|i| planner.plan_fft(grid.n[i], FftDirection::Forward));
        let inverse: [Arc<dyn Fft<f64>>; 3] =
            core::array::from_fn(|i| planner.plan_fft(grid.n[i], FftDirection::Inverse));

        let mut filters: [Vec<f64>; 3] = Default::default();
        let mut envelopes: [Vec<f64>; 3] = Default::default();
        let mut filter_power = 1.0;
        let mut envelope_sum = 1.0;
        for i in 0..3 {
            let n = grid.n[i];
            let l = model.coherence_lengths[i];
            let w = model.envelope_widths[i];
            let dq = core::f64::consts::TAU / (n as f64 * grid.h[i]);
            let filter: Vec<f64> = (0..n)
                .map(|k| {
                    let k_signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                    let q = k_signed * dq;
                    (-q * q * l * l / 4.0).exp()
                })
                .collect();
            filter_power *= filter.iter().map(|f| f * f).sum::<f64>();
            let envelope: Vec<f64> = grid
                .axis_centers(i)
                .iter()
                .map(|&x| (-x * x / (2.0 * w * w)).exp())
                .collect();
            envelope_sum *= envelope.iter().sum::<f64>();
            filters[i] = filter;
            envelopes[i] = envelope;
        }
        // White noise has E|x|^2 = 2 (unit-normal re and im); the filtered
        // field picks up filter_power / N from the transform pair.
        let n_total = grid.total_cells() as f64;
        let field_norm = (n_total / (2.0 * filter_power)).sqrt();
        let rate_scale = model.mean_detected_atoms / envelope_sum;

        Ok(BosonSampler {
            grid,
            filters,
            envelopes,
            forward,
            inverse,
            field_norm,
            rate_scale,
            mean_atoms: model.mean_detected_atoms,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mean_atoms(&self) -> f64 {
        self.mean_atoms
    }

    /// Draw one shot of atom positions (far-field coordinates, m).
    pub fn sample_shot<R: Rng>(&self, shot_id: u64, rng: &mut R) -> Vec<IdealAtom> {
        let rates = self.sample_intensity(rng);
        let total: f64 = rates.iter().sum();
        // Decompose the Poisson process: total count first, then cells by
        // their share of the rate.
        let mut cum = rates;
        let mut acc = 0.0;
        for r in cum.iter_mut() {
            acc += *r;
            *r = acc;
        }
        let count = if total > 0.0 {
            rng.sample(Poisson::new(total).expect("positive rate")) as usize
        } else {
            0
        };
        let mut atoms = Vec::with_capacity(count);
        for _ in 0..count {
            let u = rng.gen_range(0.0..acc);
            let flat = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            let idx = self.grid.unflatten(flat);
            let center = self.grid.center(idx);
            let r: [f64; 3] = core::array::from_fn(|i| {
                center[i] + rng.gen_range(-0.5..0.5) * self.grid.h[i]
            });
            atoms.push(IdealAtom::at_position(shot_id, r));
        }
        atoms
    }

    /// Speckle intensity times envelope, per cell (expected atom count).
    pub fn sample_intensity<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let [nx, ny, nz] = self.grid.n;
        let n_total = nx * ny * nz;
        let mut field: Vec<Complex<f64>> = (0..n_total)
            .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        self.fft3(&mut field, true);
        for ix in 0..nx {
            let fx = self.filters[0][ix];
            for iy in 0..ny {
                let fxy = fx * self.filters[1][iy];
                let row = (ix * ny + iy) * nz;
                for iz in 0..nz {
                    field[row + iz] *= fxy * self.filters[2][iz];
                }
            }
        }
        self.fft3(&mut field, false);
        let scale = self.field_norm / n_total as f64; // unnormalized inverse FFT
        let mut rates = Vec::with_capacity(n_total);
        for ix in 0..nx {
            let ex = self.envelopes[0][ix];
            for iy in 0..ny {
                let exy = ex * self.envelopes[1][iy];
                let row = (ix * ny + iy) * nz;
                for iz in 0..nz {
                    let f = field[row + iz] * scale;
                    rates.push(self.rate_scale * exy * self.envelopes[2][iz] * f.norm_sqr());
                }
            }
        }
        rates
    }

    fn fft3(&self, data: &mut [Complex<f64>], forward: bool) {
        let [nx, ny, nz] = self.grid.n;
        let plans = if forward { &self.forward } else { &self.inverse };
        // z: contiguous rows
        let mut scratch = vec![Complex::default(); plans[2].get_inplace_scratch_len()];
        for row in data.chunks_exact_mut(nz) {
            plans[2].process_with_scratch(row, &mut scratch);
        }
        // y: stride nz within each x-plane
        let mut col = vec![Complex::default(); ny];
        let mut scratch = vec![Complex::default(); plans[1].get_inplace_scratch_len()];
        for ix in 0..nx {
            for iz in 0..nz {
                let base = ix * ny * nz + iz;
                for iy in 0..ny {
                    col[iy] = data[base + iy * nz];
                }
                plans[1].process_with_scratch(&mut col, &mut scratch);
                for iy in 0..ny {
                    data[base + iy * nz] = col[iy];
                }
            }
        }
        // x: stride ny*nz
        let mut col = vec![Complex::default(); nx];
        let mut scratch = vec![Complex::default(); plans[0].get_inplace_scratch_len()];
        for iy in 0..ny {
            for iz in 0..nz {
                let base = iy * nz + iz;
                for ix in 0..nx {
                    col[ix] = data[base + ix * ny * nz];
                }
                plans[0].process_with_scratch(&mut col, &mut scratch);
                for ix in 0..nx {
                    data[base + ix * ny * nz] = col[ix];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::shot_rng;
    use crate::sources::reference_g2;
    use crate::model::SpeciesTag;

    fn test_model(mean_atoms: f64) -> FarFieldModel {
        FarFieldModel {
            envelope_widths: [2e-4; 3],
            coherence_lengths: [1e-4; 3],
            mean_detected_atoms: mean_atoms,
        }
    }

    /// Histogram of atom counts per grid cell for one shot.
    fn cell_counts(sampler: &BosonSampler, atoms: &[IdealAtom]) -> Vec<u32> {
        let grid = sampler.grid();
        let mut counts = vec![0u32; grid.total_cells()];
        for atom in atoms {
            let r = atom.position().unwrap();
            let idx: [usize; 3] = core::array::from_fn(|i| {
                (((r[i] - grid.min[i]) / grid.h[i]).floor() as isize)
                    .clamp(0, grid.n[i] as isize - 1) as usize
            });
            counts[(idx[0] * grid.n[1] + idx[1]) * grid.n[2] + idx[2]] += 1;
        }
        counts
    }

    #[test]
    fn field_intensity_is_normalized_and_envelope_shaped() {
        let model = test_model(100.0);
        let sampler = BosonSampler::new(&model, &SamplerConfig::default()).unwrap();
        let mut rng = shot_rng(11, 0);
        let shots = 40;
        let mut mean = vec![0.0; sampler.grid().total_cells()];
        for _ in 0..shots {
            for (m, r) in mean.iter_mut().zip(sampler.sample_intensity(&mut rng)) {
                *m += r / shots as f64;
            }
        }
        let total: f64 = mean.iter().sum();
        assert!(
            (total - 100.0).abs() < 5.0,
            "mean total rate {total} should match the configured atom number"
        );
    }

    #[test]
    fn mean_event_count_matches_poisson_mean() {
        let model = test_model(80.0);
        let sampler = BosonSampler::new(&model, &SamplerConfig::default()).unwrap();
        let shots = 400;
        let mut total = 0usize;
        for s in 0..shots {
            let mut rng = shot_rng(5, s);
            total += sampler.sample_shot(s, &mut rng).len();
        }
        let mean = total as f64 / shots as f64;
        // Chaotic totals fluctuate more than Poisson; 3 sigma with the
        // excess-noise factor still bounds the mean tightly enough here.
        let tol = 3.0 * (80.0f64 * 3.0 / shots as f64).sqrt();
        assert!((mean - 80.0).abs() < tol, "mean count {mean} != 80 +- {tol}");
    }

    #[test]
    fn per_cell_counts_are_super_poissonian() {
        let model = test_model(30_000.0);
        let sampler = BosonSampler::new(&model, &SamplerConfig::default()).unwrap();
        let shots = 60;
        let n_cells = sampler.grid().total_cells();
        let mut sum = vec![0.0f64; n_cells];
        let mut sum_sq = vec![0.0f64; n_cells];
        for s in 0..shots {
            let mut rng = shot_rng(17, s);
            let atoms = sampler.sample_shot(s, &mut rng);
            for (c, n) in cell_counts(&sampler, &atoms).iter().enumerate() {
                sum[c] += *n as f64;
                sum_sq[c] += (*n as f64) * (*n as f64);
            }
        }
        let mut qualifying = 0;
        let mut super_poisson = 0;
        let mut ratio_sum = 0.0;
        for c in 0..n_cells {
            let mean = sum[c] / shots as f64;
            if mean >= 1.0 {
                let var = sum_sq[c] / shots as f64 - mean * mean;
                qualifying += 1;
                if var > mean {
                    super_poisson += 1;
                }
                ratio_sum += var / mean;
            }
        }
        assert!(qualifying > 100, "need enough bright cells, got {qualifying}");
        // Chaotic light: var = mean + mean^2, so the ratio should sit well
        // above 1. Allow a small fraction of statistical dips.
        assert!(
            super_poisson as f64 >= 0.9 * qualifying as f64,
            "only {super_poisson}/{qualifying} bright cells super-Poissonian"
        );
        assert!(ratio_sum / qualifying as f64 > 1.5);
    }

    #[test]
    fn empirical_g2_tracks_analytic_reference() {
        // Normalized two-cell count correlation along x at the cloud center,
        // compared pointwise against the closed-form prediction.
        let model = test_model(20_000.0);
        let sampler = BosonSampler::new(&model, &SamplerConfig::default()).unwrap();
        let grid = sampler.grid().clone();
        let shots = 160u64;
        let [nx, ny, nz] = grid.n;
        let n_lags = 13usize.min(nx / 4);
        // Base cells: a central block, averaged to beat the shot noise of a
        // single cell pair. Speckle grains span ~4 cells, so the block holds
        // a few dozen independent patches.
        let half = 6usize;
        let xs: Vec<usize> = (nx / 2 - half - n_lags / 2..nx / 2 + half - n_lags / 2).collect();
        let ys: Vec<usize> = (ny / 2 - half..ny / 2 + half).collect();
        let zs: Vec<usize> = (nz / 2 - half..nz / 2 + half).collect();
        let flat = |ix: usize, iy: usize, iz: usize| (ix * ny + iy) * nz + iz;
        let mut sum_counts = vec![0.0f64; grid.total_cells()];
        let mut num = vec![0.0f64; n_lags]; // sum over shots/bases of n_b (n_{b+d} - [d==0])
        for s in 0..shots {
            let mut rng = shot_rng(23, s);
            let atoms = sampler.sample_shot(s, &mut rng);
            let counts = cell_counts(&sampler, &atoms);
            for (i, &c) in counts.iter().enumerate() {
                sum_counts[i] += c as f64;
            }
            for &ix in &xs {
                for &iy in &ys {
                    for &iz in &zs {
                        let n0 = counts[flat(ix, iy, iz)] as f64;
                        for (d, n) in num.iter_mut().enumerate() {
                            let nd = counts[flat(ix + d, iy, iz)] as f64;
                            *n += if d == 0 { n0 * (n0 - 1.0) } else { n0 * nd };
                        }
                    }
                }
            }
        }
        for d in 0..n_lags {
            // Normalize by the product of per-cell mean counts, which keeps
            // the envelope variation across the block out of the estimate.
            let mut denom = 0.0;
            for &ix in &xs {
                for &iy in &ys {
                    for &iz in &zs {
                        denom += sum_counts[flat(ix, iy, iz)] * sum_counts[flat(ix + d, iy, iz)]
                            / shots as f64;
                    }
                }
            }
            let g2 = num[d] / denom;
            let delta = [d as f64 * grid.h[0], 0.0, 0.0];
            let reference = reference_g2(&model, SpeciesTag::HE4_BOSON, delta);
            assert!(
                (g2 - reference).abs() < 0.15,
                "lag {d}: empirical g2 {g2:.3} vs reference {reference:.3}"
            );
        }
    }
}
