//! MUSIC direction finding restricted to the transmit beam.

use std::io::Write;

use crate::array::rx_steering;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::numerology::ArrayGeometry;
use crate::scalar::Real;

/// Floor on the MUSIC denominator.
pub const MUSIC_FLOOR: f64 = 1e-12;

/// Minimum peak prominence (linear power ratio) for a MUSIC peak to count.
pub const MIN_PROMINENCE: f64 = 2.0;

/// `R̂ = (1/N)·Y·Yᴴ` for an `Nr × N` snapshot matrix.
pub fn sample_covariance<T: Real>(y: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = y.cols();
    if n == 0 {
        return Err(Error::InvalidParameter("no snapshots".into()));
    }
    Ok((y * &y.adjoint()).scale(T::one() / T::from_count(n)))
}

#[derive(Debug, Clone)]
pub struct SubspaceSplit<T> {
    pub signal_basis: CMatrix<T>,
    pub noise_basis: CMatrix<T>,
    /// Descending.
    pub eigenvalues: Vec<T>,
}

impl<T: Real> SubspaceSplit<T> {
    /// `A_N·A_Nᴴ`.
    pub fn noise_projector(&self) -> CMatrix<T> {
        &self.noise_basis * &self.noise_basis.adjoint()
    }
}

pub fn split_subspaces<T: Real>(r: &CMatrix<T>, u: usize) -> Result<SubspaceSplit<T>> {
    let nr = r.rows();
    if u < 1 || u >= nr {
        return Err(Error::InvalidParameter(format!("source count {u} outside [1, {nr})")));
    }
    let eig = hermitian_eigen(r)?;
    let take = |range: std::ops::Range<usize>| {
        let cols: Vec<_> = range.map(|j| eig.vectors.column(j)).collect();
        CMatrix::from_columns(&cols)
    };
    Ok(SubspaceSplit {
        signal_basis: take(0..u)?,
        noise_basis: take(u..nr)?,
        eigenvalues: eig.values,
    })
}

/// Source count from the largest ratio between consecutive eigenvalues.
pub fn estimate_source_count<T: Real>(eigenvalues: &[T]) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for i in 0..eigenvalues.len().saturating_sub(1) {
        let hi = eigenvalues[i].to_f64_lossy();
        let lo = eigenvalues[i + 1].to_f64_lossy().max(f64::MIN_POSITIVE);
        let ratio = hi / lo;
        if ratio > best.1 {
            best = (i + 1, ratio);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicSpectrum {
    /// Degrees.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl MusicSpectrum {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "angle_deg,p_music")?;
        for (a, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{a:.4},{v:.6e}")?;
        }
        Ok(())
    }

    /// Largest value, in dB, for normalized plots.
    pub fn peak_db(&self) -> f64 {
        10.0 * self.values.iter().cloned().fold(f64::MIN_POSITIVE, f64::max).log10()
    }
}

/// `P(θ) = 1/(bᴴ(θ)·A_N·A_Nᴴ·b(θ))` over the grid.
pub fn music_spectrum<T: Real>(split: &SubspaceSplit<T>, grid: &[f64], geometry: &ArrayGeometry) -> MusicSpectrum {
    let an = &split.noise_basis;
    let values = grid
        .iter()
        .map(|&theta| {
            let b = rx_steering::<T>(theta, geometry).elements;
            let mut den = 0.0;
            for j in 0..an.cols() {
                let mut acc = num_complex::Complex::<T>::default();
                for (i, bi) in b.iter().enumerate() {
                    acc += an[(i, j)].conj() * bi;
                }
                den += acc.norm_sqr().to_f64_lossy();
            }
            1.0 / den.max(MUSIC_FLOOR)
        })
        .collect();
    MusicSpectrum {
        grid: grid.to_vec(),
        values,
    }
}

/// `center ± halfwidth` in steps of `step`, endpoints included.
pub fn angle_grid(center: f64, halfwidth: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && halfwidth >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid needs step > 0 and halfwidth >= 0, got {step}, {halfwidth}"
        )));
    }
    let (lo, hi) = (center - halfwidth, center + halfwidth);
    if lo <= -90.0 || hi >= 90.0 {
        return Err(Error::InvalidParameter(format!(
            "search window [{lo}°, {hi}°] leaves (-90°, 90°)"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// Interior local maxima with at least [`MIN_PROMINENCE`] prominence, as
/// `(index, value)` sorted by descending value.
pub fn find_peaks(values: &[f64]) -> Vec<(usize, f64)> {
    let n = values.len();
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let v = values[i];
        if !(v > values[i - 1] && v >= values[i + 1]) {
            continue;
        }
        let mut left_min = v;
        for &x in values[..i].iter().rev() {
            if x > v {
                break;
            }
            left_min = left_min.min(x);
        }
        let mut right_min = v;
        for &x in &values[i + 1..] {
            if x > v {
                break;
            }
            right_min = right_min.min(x);
        }
        let col = left_min.max(right_min).max(f64::MIN_POSITIVE);
        if v / col >= MIN_PROMINENCE {
            peaks.push((i, v));
        }
    }
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    peaks
}

/// Parabolic interpolation of a peak on the dB spectrum.
fn refine(spec: &MusicSpectrum, i: usize) -> f64 {
    let step = spec.grid[i + 1] - spec.grid[i];
    let [l, c, r] = [spec.values[i - 1], spec.values[i], spec.values[i + 1]].map(f64::ln);
    let den = l - 2.0 * c + r;
    let delta = if den < 0.0 { 0.5 * (l - r) / den } else { 0.0 };
    spec.grid[i] + delta.clamp(-0.5, 0.5) * step
}

#[derive(Debug, Clone)]
pub struct DoaEstimate {
    /// Ascending, degrees.
    pub angles: Vec<f64>,
    pub spectrum: MusicSpectrum,
    pub eigenvalues: Vec<f64>,
}

/// Top-`u` MUSIC peaks inside `beam_center ± beam_halfwidth`.
pub fn estimate_doas<T: Real>(
    y: &CMatrix<T>,
    u: usize,
    beam_center: f64,
    beam_halfwidth: f64,
    grid_step: f64,
    geometry: &ArrayGeometry,
) -> Result<DoaEstimate> {
    let r = sample_covariance(y)?;
    let split = split_subspaces(&r, u)?;
    let grid = angle_grid(beam_center, beam_halfwidth, grid_step)?;
    let spectrum = music_spectrum(&split, &grid, geometry);
    let peaks = find_peaks(&spectrum.values);
    if peaks.len() < u {
        return Err(Error::UnderDetected {
            found: peaks.len(),
            wanted: u,
            angles: peaks.iter().map(|&(i, _)| refine(&spectrum, i)).collect(),
        });
    }
    let mut angles: Vec<f64> = peaks[..u].iter().map(|&(i, _)| refine(&spectrum, i)).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    Ok(DoaEstimate {
        angles,
        eigenvalues: split.eigenvalues.iter().map(|v| v.to_f64_lossy()).collect(),
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(16, 16, 3e8 / 28e9)
    }

    #[test]
    fn rank_one_covariance() {
        let y = CMatrix::from_columns(&[rx_steering::<f64>(5.0, &geom()).elements]).unwrap();
        let r = sample_covariance(&y).unwrap();
        let split = split_subspaces(&r, 1).unwrap();
        assert!((split.eigenvalues[0] - 16.0).abs() < 1e-10);
        assert!(split.eigenvalues[1].abs() < 1e-10);
        let b = rx_steering::<f64>(5.0, &geom()).elements;
        let leak = split.noise_basis.adjoint().matvec(&b).unwrap();
        assert!(leak.iter().all(|z| z.norm() < 1e-8));
    }

    #[test]
    fn identity_split_is_orthonormal() {
        let split = split_subspaces(&CMatrix::<f64>::identity(4), 2).unwrap();
        let p = split.noise_projector();
        let pp = &p * &p;
        assert!(pp.sub(&p).unwrap().max_abs() < 1e-12);
        let cross = &split.signal_basis.adjoint() * &split.noise_basis;
        assert!(cross.max_abs() < 1e-12);
        assert!(split_subspaces(&CMatrix::<f64>::identity(4), 4).is_err());
        assert!(split_subspaces(&CMatrix::<f64>::identity(4), 0).is_err());
    }

    #[test]
    fn grid_bounds() {
        let g = angle_grid(0.0, 1.0, 0.01).unwrap();
        assert_eq!(g.len(), 201);
        assert!((g[200] - 1.0).abs() < 1e-9);
        assert!(angle_grid(85.0, 6.0, 0.01).is_err());
    }

    #[test]
    fn peak_prominence() {
        let v = [1.0, 3.0, 1.0, 1.2, 1.1, 10.0, 1.0];
        let p = find_peaks(&v);
        assert_eq!(p.iter().map(|x| x.0).collect::<Vec<_>>(), vec![5, 1]);
    }

    #[test]
    fn source_count_gap() {
        assert_eq!(estimate_source_count(&[100.0, 90.0, 1.0, 0.9, 0.8]), 2);
        assert_eq!(estimate_source_count(&[100.0, 1.0, 0.9]), 1);
    }

    #[test]
    fn spectrum_csv() {
        let s = MusicSpectrum {
            grid: vec![0.0, 0.5],
            values: vec![1.0, 2.0],
        };
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("angle_deg,p_music\n0.0000,"));
        assert_eq!(text.lines().count(), 3);
    }
}
