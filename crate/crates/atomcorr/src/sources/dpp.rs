//! Ideal fermion sampling as a determinantal point process.
//!
//! The Gaussian Schell-model kernel is discretized on the grid; it is
//! separable, so its eigenmodes are tensor products of 1D eigenmodes.
//! Sampling follows the standard eigendecomposition algorithm: Bernoulli
//! selection of modes with probability equal to their occupation, then
//! sequential sampling of the resulting projection DPP. Sampled
//! configurations never exhibit positive correlation at short range.

use nalgebra::DMatrix;
use rand::Rng;

use crate::detector::IdealAtom;
use crate::error::{Error, Result};
use crate::sources::{FarFieldModel, Grid, SamplerConfig};

/// Mode occupations of the discretized kernel. For fermions every
/// occupation is a Bernoulli probability in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationSpectrum {
    /// Retained 1D modes per axis.
    pub mode_dims: [usize; 3],
    /// Occupation per retained 3D mode, aligned with the sampler's modes.
    pub occupations: Vec<f64>,
    /// Mean total atom number the occupations were normalized to.
    pub target_atoms: f64,
}

impl OccupationSpectrum {
    pub fn validate(&self) -> Result<()> {
        if self.occupations.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Domain("fermion occupations must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn total_occupation(&self) -> f64 {
        self.occupations.iter().sum()
    }
}

struct AxisModes {
    /// values[m][j]: orthonormal eigenvector m at cell j.
    values: Vec<Vec<f64>>,
    /// Cumulative |values|^2 per mode, for inverse-CDF cell sampling.
    cum: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl AxisModes {
    fn from_vectors(values: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> AxisModes {
        let cum = values
            .iter()
            .map(|v| {
                let mut acc = 0.0;
                v.iter()
                    .map(|x| {
                        acc += x * x;
                        acc
                    })
                    .collect()
            })
            .collect();
        AxisModes { values, cum, eigenvalues }
    }
}

#[derive(Debug, Clone, Copy)]
struct Mode3 {
    axis_idx: [usize; 3],
}

pub struct FermionSampler {
    grid: Grid,
    axes: [AxisModes; 3],
    modes: Vec<Mode3>,
    spectrum: OccupationSpectrum,
}

impl FermionSampler {
    /// Build the occupation spectrum for a far-field model: discretize the
    /// 1D Schell-model kernels, eigendecompose, combine per-axis modes into
    /// 3D products, and normalize occupations with a saturating map
    /// n = c lambda / (1 + c lambda) so the total matches the mean atom
    /// number while every occupation stays a valid Bernoulli probability.
    pub fn new(
        model: &FarFieldModel,
        config: &SamplerConfig,
        mode_count_per_axis: usize,
    ) -> Result<FermionSampler> {
        let grid = Grid::for_model(model, config)?;
        let mut axes_vec = Vec::with_capacity(3);
        for i in 0..3 {
            axes_vec.push(axis_eigenmodes(
                &grid.axis_centers(i),
                model.envelope_widths[i],
                model.coherence_lengths[i],
                mode_count_per_axis,
            ));
        }
        let axes: [AxisModes; 3] = axes_vec.try_into().map_err(|_| unreachable!()).unwrap();

        // All 3D products, largest kernel weights first, capped.
        let mut products: Vec<([usize; 3], f64)> = Vec::new();
        for a in 0..axes[0].eigenvalues.len() {
            for b in 0..axes[1].eigenvalues.len() {
                for c in 0..axes[2].eigenvalues.len() {
                    let lambda =
                        axes[0].eigenvalues[a] * axes[1].eigenvalues[b] * axes[2].eigenvalues[c];
                    products.push(([a, b, c], lambda));
                }
            }
        }
        products.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        products.truncate(config.max_modes);
        let raw: Vec<f64> = products.iter().map(|p| p.1).collect();

        let target = model.mean_detected_atoms;
        if target >= 0.99 * raw.len() as f64 {
            return Err(Error::Config(format!(
                "cannot occupy {target} atoms with only {} modes (Pauli limit); \
                 raise max_modes or mode_count_per_axis, or lower the atom number",
                raw.len()
            )));
        }
        let occupations = normalize_occupations(&raw, target);

        let spectrum = OccupationSpectrum {
            mode_dims: core::array::from_fn(|i| axes[i].eigenvalues.len()),
            occupations,
            target_atoms: target,
        };
        spectrum.validate()?;
        let modes = products.iter().map(|p| Mode3 { axis_idx: p.0 }).collect();
        Ok(FermionSampler { grid, axes, modes, spectrum })
    }

    /// Exact desk-scale construction from explicit per-axis mode vectors.
    /// Each `modes` entry is (per-axis 1D mode indices, occupation). The
    /// vectors must be orthonormal over the grid cells of their axis.
    pub fn from_modes(
        grid: Grid,
        axis_vectors: [Vec<Vec<f64>>; 3],
        modes: Vec<([usize; 3], f64)>,
    ) -> Result<FermionSampler> {
        let occupations: Vec<f64> = modes.iter().map(|m| m.1).collect();
        let spectrum = OccupationSpectrum {
            mode_dims: core::array::from_fn(|i| axis_vectors[i].len()),
            occupations,
            target_atoms: modes.iter().map(|m| m.1).sum(),
        };
        spectrum.validate()?;
        let axes: [AxisModes; 3] = axis_vectors.map(|vs| {
            let n = vs.len();
            AxisModes::from_vectors(vs, vec![1.0; n])
        });
        let modes = modes.iter().map(|m| Mode3 { axis_idx: m.0 }).collect();
        Ok(FermionSampler { grid, axes, modes, spectrum })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spectrum(&self) -> &OccupationSpectrum {
        &self.spectrum
    }

    /// One shot: Bernoulli mode selection followed by projection sampling,
    /// positions jittered uniformly within their grid cell.
    pub fn sample_shot<R: Rng>(&self, shot_id: u64, rng: &mut R) -> Result<Vec<IdealAtom>> {
        let selected: Vec<usize> = (0..self.modes.len())
            .filter(|&m| rng.gen_bool(self.spectrum.occupations[m]))
            .collect();
        let cells = self.sample_projection(&selected, rng)?;
        Ok(cells
            .into_iter()
            .map(|idx| {
                let center = self.grid.center(idx);
                let r: [f64; 3] = core::array::from_fn(|i| {
                    center[i] + rng.gen_range(-0.5..0.5) * self.grid.h[i]
                });
                IdealAtom::at_position(shot_id, r)
            })
            .collect())
    }

    /// Sequential sampling of the projection DPP spanned by `selected`
    /// modes. Returns exactly `selected.len()` distinct grid cells.
    ///
    /// Proposals come from the exact mixture (1/k) sum_m |phi_m|^2, which is
    /// separable per mode, and are accepted with the ratio of the remaining
    /// projection density to the mixture; both sides are exact, so the
    /// output distribution is the exact DPP.
    pub fn sample_projection<R: Rng>(
        &self,
        selected: &[usize],
        rng: &mut R,
    ) -> Result<Vec<[usize; 3]>> {
        let k = selected.len();
        let mut chosen: Vec<[usize; 3]> = Vec::with_capacity(k);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut phi = vec![0.0; k];
        let mut guard = 0usize;
        while chosen.len() < k {
            guard += 1;
            if guard > 20_000_000 {
                return Err(Error::Domain(
                    "projection DPP sampler failed to accept a proposal (degenerate kernel?)"
                        .into(),
                ));
            }
            // Propose a cell from a uniformly chosen selected mode.
            let m = self.modes[selected[rng.gen_range(0..k)]];
            let idx: [usize; 3] = core::array::from_fn(|i| {
                sample_cum(&self.axes[i].cum[m.axis_idx[i]], rng)
            });
            // Feature vector of the proposal in the selected-mode basis.
            let mut norm2 = 0.0;
            for (slot, &mode) in phi.iter_mut().zip(selected) {
                let mi = self.modes[mode].axis_idx;
                let v = self.axes[0].values[mi[0]][idx[0]]
                    * self.axes[1].values[mi[1]][idx[1]]
                    * self.axes[2].values[mi[2]][idx[2]];
                *slot = v;
                norm2 += v * v;
            }
            if norm2 <= 0.0 {
                continue;
            }
            let mut residual2 = norm2;
            for b in &basis {
                let c: f64 = b.iter().zip(&phi).map(|(x, y)| x * y).sum();
                residual2 -= c * c;
            }
            if rng.gen_range(0.0..1.0) * norm2 >= residual2 {
                continue;
            }
            // Accepted: extend the orthonormal basis of struck directions.
            let mut res = phi.clone();
            for b in &basis {
                let c: f64 = b.iter().zip(&phi).map(|(x, y)| x * y).sum();
                for (r, x) in res.iter_mut().zip(b) {
                    *r -= c * x;
                }
            }
            let norm: f64 = res.iter().map(|x| x * x).sum::<f64>().sqrt();
            for r in res.iter_mut() {
                *r /= norm;
            }
            basis.push(res);
            chosen.push(idx);
        }
        Ok(chosen)
    }

    /// Kernel entry sum_{m in selected} phi_m(i) phi_m(j) between two cells,
    /// for brute-force determinant checks on desk-scale instances.
    pub fn kernel_entry(&self, selected: &[usize], i: [usize; 3], j: [usize; 3]) -> f64 {
        selected
            .iter()
            .map(|&m| {
                let mi = self.modes[m].axis_idx;
                let vi = self.axes[0].values[mi[0]][i[0]]
                    * self.axes[1].values[mi[1]][i[1]]
                    * self.axes[2].values[mi[2]][i[2]];
                let vj = self.axes[0].values[mi[0]][j[0]]
                    * self.axes[1].values[mi[1]][j[1]]
                    * self.axes[2].values[mi[2]][j[2]];
                vi * vj
            })
            .sum()
    }
}

fn sample_cum<R: Rng>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().expect("non-empty mode vector");
    let u = rng.gen_range(0.0..total);
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Eigenmodes of the 1D Gaussian Schell-model kernel
/// K(x, x') = exp(-(x^2 + x'^2) / (4 W^2)) exp(-(x - x')^2 / (2 l^2))
/// discretized on the cell centers. Eigenvalues are clamped at zero and
/// returned in descending order.
fn axis_eigenmodes(centers: &[f64], w: f64, l: f64, max_modes: usize) -> AxisModes {
    let n = centers.len();
    let mut kernel = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..=j {
            let (x, y) = (centers[j], centers[k]);
            let v = (-(x * x + y * y) / (4.0 * w * w) - (x - y) * (x - y) / (2.0 * l * l)).exp();
            kernel[(j, k)] = v;
            kernel[(k, j)] = v;
        }
    }
    let eig = kernel.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let mut values = Vec::new();
    let mut eigenvalues = Vec::new();
    for &m in order.iter().take(max_modes) {
        let lambda = eig.eigenvalues[m];
        if lambda <= 1e-12 * lambda_max {
            break;
        }
        values.push(eig.eigenvectors.column(m).iter().copied().collect());
        eigenvalues.push(lambda);
    }
    AxisModes::from_vectors(values, eigenvalues)
}

/// Solve for c such that sum_m c r_m / (1 + c r_m) hits the target count.
fn normalize_occupations(raw: &[f64], target: f64) -> Vec<f64> {
    let occupied = |c: f64| -> f64 { raw.iter().map(|&r| c * r / (1.0 + c * r)).sum() };
    let mut hi = 1.0;
    while occupied(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if occupied(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    raw.iter().map(|&r| (c * r / (1.0 + c * r)).min(1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::shot_rng;

    fn test_model() -> FarFieldModel {
        FarFieldModel {
            envelope_widths: [2.5e-4; 3],
            coherence_lengths: [1e-4; 3],
            mean_detected_atoms: 30.0,
        }
    }

    fn sampler() -> FermionSampler {
        FermionSampler::new(&test_model(), &SamplerConfig::default(), 16).unwrap()
    }

    #[test]
    fn occupations_are_bernoulli_and_sum_to_target() {
        let s = sampler();
        let spectrum = s.spectrum();
        spectrum.validate().unwrap();
        let total = spectrum.total_occupation();
        assert!(
            (total - 30.0).abs() / 30.0 < 1e-9,
            "total occupation {total} should match the target to 1e-9 relative"
        );
    }

    #[test]
    fn occupation_out_of_range_is_rejected() {
        let spec = OccupationSpectrum {
            mode_dims: [1, 1, 1],
            occupations: vec![1.2],
            target_atoms: 1.2,
        };
        assert!(spec.validate().is_err());

        let grid = Grid { n: [2, 1, 1], h: [1.0; 3], min: [-1.0, -0.5, -0.5] };
        let f = FermionSampler::from_modes(
            grid,
            [vec![vec![1.0, 0.0]], vec![vec![1.0]], vec![vec![1.0]]],
            vec![([0, 0, 0], -0.1)],
        );
        assert!(f.is_err());
    }

    #[test]
    fn projection_yields_exactly_k_distinct_cells() {
        let s = sampler();
        let n_modes = s.spectrum().occupations.len();
        let selected: Vec<usize> = (0..n_modes.min(40)).collect();
        for seed in 0..5 {
            let mut rng = shot_rng(31, seed);
            let cells = s.sample_projection(&selected, &mut rng).unwrap();
            assert_eq!(cells.len(), selected.len());
            let mut sorted = cells.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), cells.len(), "projection DPP repeated a cell");
        }
    }

    #[test]
    fn shot_count_is_bounded_by_selected_modes() {
        let s = sampler();
        let n_modes = s.spectrum().occupations.len() as f64;
        for seed in 0..10 {
            let mut rng = shot_rng(37, seed);
            let atoms = s.sample_shot(seed, &mut rng).unwrap();
            assert!((atoms.len() as f64) <= n_modes);
        }
    }

    /// Desk-scale projection DPP against the determinant: build two
    /// orthonormal modes on a 5-cell 1D grid and compare empirical joint
    /// occupation probabilities with det of the kernel submatrix.
    #[test]
    fn two_mode_joint_probabilities_match_determinants() {
        let n = 5;
        let grid = Grid { n: [n, 1, 1], h: [1.0, 1.0, 1.0], min: [-2.5, -0.5, -0.5] };
        // Two orthonormal vectors with unequal weight across cells.
        let raw0: Vec<f64> = vec![0.9, 0.7, 0.4, 0.2, 0.1];
        let raw1: Vec<f64> = vec![-0.2, 0.3, 0.8, -0.5, 0.4];
        let norm = |v: &[f64]| {
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let v0 = norm(&raw0);
        let dot: f64 = v0.iter().zip(&raw1).map(|(a, b)| a * b).sum();
        let v1: Vec<f64> = norm(&raw1.iter().zip(&v0).map(|(b, a)| b - dot * a).collect::<Vec<f64>>());
        let s = FermionSampler::from_modes(
            grid,
            [vec![v0, v1], vec![vec![1.0]], vec![vec![1.0]]],
            vec![([0, 0, 0], 1.0), ([1, 0, 0], 1.0)],
        )
        .unwrap();

        let samples = 40_000;
        let mut joint = vec![vec![0u32; n]; n];
        let mut rng = shot_rng(41, 0);
        for _ in 0..samples {
            let cells = s.sample_projection(&[0, 1], &mut rng).unwrap();
            assert_eq!(cells.len(), 2);
            let (a, b) = (cells[0][0], cells[1][0]);
            joint[a.min(b)][a.max(b)] += 1;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let kii = s.kernel_entry(&[0, 1], [i, 0, 0], [i, 0, 0]);
                let kjj = s.kernel_entry(&[0, 1], [j, 0, 0], [j, 0, 0]);
                let kij = s.kernel_entry(&[0, 1], [i, 0, 0], [j, 0, 0]);
                let expected = kii * kjj - kij * kij;
                let empirical = joint[i][j] as f64 / samples as f64;
                assert!(
                    (empirical - expected).abs() < 1.5e-2,
                    "P(({i},{j})) empirical {empirical:.4} vs det {expected:.4}"
                );
            }
        }
    }
}
