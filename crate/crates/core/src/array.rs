//! ULA steering vectors, LS beamformers and the LS spatial-separation
//! operator built from the receive manifold.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::numerology::ArrayGeometry;
use crate::scalar::{cis, Real};

/// Gram-matrix condition number above which a manifold counts as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Transmit,
    Receive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector<T> {
    pub elements: Vec<Complex<T>>,
    /// Degrees.
    pub angle: f64,
    pub side: Side,
}

/// `e^{−j(2π/λ)·n·d·sinθ}` for `n = 0..len`.
pub fn steering<T: Real>(theta_deg: f64, len: usize, spacing: f64, wavelength: f64) -> Vec<Complex<T>> {
    let k = -2.0 * std::f64::consts::PI * spacing / wavelength * theta_deg.to_radians().sin();
    (0..len).map(|n| cis(T::lit(k * n as f64))).collect()
}

fn side_params(geometry: &ArrayGeometry, side: Side) -> (usize, f64) {
    match side {
        Side::Transmit => (geometry.nt, geometry.dt),
        Side::Receive => (geometry.nr, geometry.dr),
    }
}

pub fn steering_for<T: Real>(theta_deg: f64, geometry: &ArrayGeometry, side: Side) -> SteeringVector<T> {
    let (n, d) = side_params(geometry, side);
    SteeringVector {
        elements: steering(theta_deg, n, d, geometry.wavelength),
        angle: theta_deg,
        side,
    }
}

pub fn tx_steering<T: Real>(theta_deg: f64, geometry: &ArrayGeometry) -> SteeringVector<T> {
    steering_for(theta_deg, geometry, Side::Transmit)
}

pub fn rx_steering<T: Real>(theta_deg: f64, geometry: &ArrayGeometry) -> SteeringVector<T> {
    steering_for(theta_deg, geometry, Side::Receive)
}

/// Pseudoinverse of the row `aᵀ(θ)`, which for unit-modulus entries is
/// `conj(a)/N`.
pub fn ls_beamformer<T: Real>(theta_deg: f64, geometry: &ArrayGeometry, side: Side) -> Vec<Complex<T>> {
    let a = steering_for::<T>(theta_deg, geometry, side).elements;
    let norm2: T = a.iter().map(|z| z.norm_sqr()).sum();
    a.iter().map(|z| z.conj() / norm2).collect()
}

/// Unconjugated inner product `aᵀw`.
pub fn dot<T: Real>(a: &[Complex<T>], w: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(w).map(|(x, y)| x * y).sum()
}

/// Full half-power beamwidth in degrees of a broadside-steered LS beam.
pub fn half_power_beamwidth(n: usize, spacing: f64, wavelength: f64) -> f64 {
    let w: Vec<Complex<f64>> = steering::<f64>(0.0, n, spacing, wavelength)
        .iter()
        .map(|z| z.conj() / n as f64)
        .collect();
    let gain = |theta: f64| dot(&steering::<f64>(theta, n, spacing, wavelength), &w).norm();
    let target = std::f64::consts::FRAC_1_SQRT_2;
    // First null in sinθ is λ/(N·d); the half-power point lies inside it.
    let null = (wavelength / (n as f64 * spacing)).min(1.0).asin().to_degrees();
    let (mut lo, mut hi) = (0.0, null);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gain(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}

/// Receive manifold `B(θ)`: column `u` is `b(θ_u)`.
#[derive(Debug, Clone)]
pub struct Manifold<T> {
    pub columns: CMatrix<T>,
    pub angles: Vec<f64>,
}

impl<T: Real> Manifold<T> {
    pub fn new(angles: &[f64], geometry: &ArrayGeometry) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidParameter("manifold needs at least one angle".into()));
        }
        let cols: Vec<_> = angles
            .iter()
            .map(|&a| rx_steering::<T>(a, geometry).elements)
            .collect();
        Ok(Self {
            columns: CMatrix::from_columns(&cols)?,
            angles: angles.to_vec(),
        })
    }
}

/// LS separation operator `B† = (BᴴB)⁻¹Bᴴ` and the per-stream noise
/// amplification `λ_u = [B†(B†)ᴴ]_uu`.
#[derive(Debug, Clone)]
pub struct SeparationOperator<T> {
    pub pinv: CMatrix<T>,
    pub lambda: Vec<T>,
    pub angles: Vec<f64>,
}

impl<T: Real> SeparationOperator<T> {
    pub fn num_streams(&self) -> usize {
        self.pinv.rows()
    }

    pub fn num_antennas(&self) -> usize {
        self.pinv.cols()
    }
}

pub fn build_separator<T: Real>(angles: &[f64], geometry: &ArrayGeometry) -> Result<SeparationOperator<T>> {
    if angles.len() > geometry.nr {
        return Err(Error::InvalidParameter(format!(
            "{} angles exceed Nr={}",
            angles.len(),
            geometry.nr
        )));
    }
    for (i, a) in angles.iter().enumerate() {
        if a.is_nan() || a.abs() >= 90.0 {
            return Err(Error::InvalidParameter(format!("angle {a}° outside (-90°, 90°)")));
        }
        if angles[i + 1..].contains(a) {
            return Err(Error::InvalidParameter(format!("duplicate angle {a}°")));
        }
    }
    let b = Manifold::<T>::new(angles, geometry)?.columns;
    let bh = b.adjoint();
    let gram = bh.matmul(&b)?;
    let eig = hermitian_eigen(&gram)?;
    let (hi, lo) = (eig.values[0], *eig.values.last().expect("non-empty"));
    let condition = if lo > T::zero() {
        (hi / lo).to_f64_lossy()
    } else {
        f64::INFINITY
    };
    if condition.is_nan() || condition > MAX_GRAM_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let pinv = gram.inverse()?.matmul(&bh)?;
    let lambda = (0..pinv.rows())
        .map(|u| pinv.row(u).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    Ok(SeparationOperator {
        pinv,
        lambda,
        angles: angles.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(16, 16, 3e8 / 28e9)
    }

    #[test]
    fn broadside_and_thirty_degrees() {
        let g = geom();
        let a = tx_steering::<f64>(0.0, &g);
        assert!(a.elements.iter().all(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-15));
        let a = rx_steering::<f64>(30.0, &g);
        assert!((a.elements[1] - Complex::new(0.0, -1.0)).norm() < 1e-12);
        let neg = rx_steering::<f64>(-30.0, &g);
        for (x, y) in a.elements.iter().zip(&neg.elements) {
            assert!((x.conj() - y).norm() < 1e-12);
        }
    }

    #[test]
    fn beamformer_normalization() {
        let g = geom();
        let w = ls_beamformer::<f64>(0.0, &g, Side::Transmit);
        assert!(w.iter().all(|z| (z - Complex::new(1.0 / 16.0, 0.0)).norm() < 1e-15));
        for theta in [-40.0, 3.44, 17.0] {
            let w = ls_beamformer::<f64>(theta, &g, Side::Transmit);
            let a = tx_steering::<f64>(theta, &g).elements;
            assert!((dot(&a, &w) - Complex::new(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn beamwidth_of_sixteen_elements() {
        let g = geom();
        let hpbw = half_power_beamwidth(16, g.dt, g.wavelength);
        assert!((hpbw - 6.36).abs() < 0.02, "{hpbw}");
        let w = ls_beamformer::<f64>(0.0, &g, Side::Transmit);
        let edge = dot(&tx_steering::<f64>(hpbw / 2.0, &g).elements, &w).norm();
        assert!((edge - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
    }

    #[test]
    fn single_column_lambda() {
        let op = build_separator::<f64>(&[10.0], &geom()).unwrap();
        assert!((op.lambda[0] - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_pair_lambda() {
        // sinθ = 2/Nr places the second column on the first null.
        let theta = (2.0f64 / 16.0).asin().to_degrees();
        let op = build_separator::<f64>(&[0.0, theta], &geom()).unwrap();
        for l in &op.lambda {
            assert!((l - 1.0 / 16.0).abs() < 1e-12, "{l}");
        }
    }

    #[test]
    fn pinv_is_left_inverse() {
        let g = geom();
        let op = build_separator::<f64>(&[0.0, 2.0], &g).unwrap();
        let b = Manifold::<f64>::new(&[0.0, 2.0], &g).unwrap().columns;
        let prod = op.pinv.matmul(&b).unwrap();
        assert!(prod.sub(&CMatrix::identity(2)).unwrap().max_abs() < 1e-9);
        assert!(op.lambda.iter().all(|&l| l >= 1.0 / 16.0));
    }

    #[test]
    fn close_angles_are_ill_conditioned() {
        let err = build_separator::<f64>(&[1.0, 1.0 + 1e-7], &geom()).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
        assert!(build_separator::<f64>(&[1.0, 1.0], &geom()).is_err());
    }
}
