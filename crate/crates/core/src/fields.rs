//! Fourier parameterisation of the strictly positive velocity field
//!
//! ```text
//! C(x) = exp(A0 + sum_k A_k/k^2 sin(kx) + sum_k B_k/k^2 cos(kx))
//! ```
//!
//! Coefficients are stored in the canonical order `(A0, A1, B1, A2, B2, ...)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Uniform periodic grid with `x_i = i * dx` for `i = 1..=n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_points: usize,
    length: f64,
}

impl Grid {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        Ok(Self { n_points, length })
    }

    /// The `[0, 2pi)` periodic domain used throughout the experiments.
    pub fn periodic_2pi(n_points: usize) -> Result<Self> {
        Self::new(n_points, std::f64::consts::TAU)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_points as f64
    }

    /// Position of the zero-based grid index `i`, i.e. `(i + 1) * dx`.
    pub fn point(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Shortest periodic distance between two grid indices, in grid points.
    pub fn periodic_distance(&self, i: usize, j: usize) -> usize {
        let n = self.n_points;
        let d = (i % n).abs_diff(j % n);
        d.min(n - d)
    }
}

/// The hyper-parameter vector `(A0, A1, B1, ..., A_m, B_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    n_modes: usize,
    coeffs: Vec<f64>,
}

impl FourierCoefficients {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 3 || coeffs.len().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "coefficient vector must have odd length >= 3, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("Fourier coefficients".into()));
        }
        Ok(Self {
            n_modes: (coeffs.len() - 1) / 2,
            coeffs,
        })
    }

    pub fn zeros(n_modes: usize) -> Self {
        assert!(n_modes >= 1, "at least one Fourier mode is required");
        Self {
            n_modes,
            coeffs: vec![0.0; 2 * n_modes + 1],
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn a0(&self) -> f64 {
        self.coeffs[0]
    }

    /// Sine coefficient `A_k`, `1 <= k <= n_modes`.
    pub fn sin_coeff(&self, k: usize) -> f64 {
        self.coeffs[2 * k - 1]
    }

    /// Cosine coefficient `B_k`, `1 <= k <= n_modes`.
    pub fn cos_coeff(&self, k: usize) -> f64 {
        self.coeffs[2 * k]
    }

    /// Mode number of each coordinate: 1 for `A0`, `k` for `A_k` and `B_k`.
    pub fn mode_numbers(n_modes: usize) -> Vec<f64> {
        (0..2 * n_modes + 1)
            .map(|i| if i == 0 { 1.0 } else { i.div_ceil(2) as f64 })
            .collect()
    }

    /// Log-field `g(x)` at a single point.
    pub fn log_field_at(&self, x: f64) -> f64 {
        let mut g = self.a0();
        for k in 1..=self.n_modes {
            let kf = k as f64;
            let (s, c) = (kf * x).sin_cos();
            g += (self.sin_coeff(k) * s + self.cos_coeff(k) * c) / (kf * kf);
        }
        g
    }
}

impl Serialize for FourierCoefficients {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.coeffs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FourierCoefficients {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let coeffs = Vec::<f64>::deserialize(deserializer)?;
        FourierCoefficients::new(coeffs).map_err(serde::de::Error::custom)
    }
}

/// Draws `2 * n_modes + 1` i.i.d. standard-normal coefficients.
pub fn sample_true_coefficients<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> FourierCoefficients {
    assert!(n_modes >= 1, "at least one Fourier mode is required");
    let coeffs = (0..2 * n_modes + 1)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    FourierCoefficients {
        n_modes,
        coeffs,
    }
}

/// `C(x_i) = exp(g(x_i))` at every grid point.
pub fn evaluate_field(coeffs: &FourierCoefficients, grid: &Grid) -> Vec<f64> {
    (0..grid.n_points())
        .map(|i| coeffs.log_field_at(grid.point(i)).exp())
        .collect()
}

/// A closed-form log-field `lambda(x) = amplitude * sin(wavenumber * x)`.
///
/// `sin(2 pi x)` on `[0, 2 pi]` has a non-integer wavenumber and cannot be
/// written with the integer modes of [`FourierCoefficients`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogField {
    pub amplitude: f64,
    pub wavenumber: f64,
}

impl LogField {
    pub fn sine(amplitude: f64, wavenumber: f64) -> Self {
        Self {
            amplitude,
            wavenumber,
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        self.amplitude * (self.wavenumber * x).sin()
    }
}

/// Source of the velocity field: a coefficient vector or a closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityField {
    Fourier(FourierCoefficients),
    Closed(LogField),
}

impl VelocityField {
    pub fn evaluate(&self, grid: &Grid) -> Vec<f64> {
        match self {
            VelocityField::Fourier(c) => evaluate_field(c, grid),
            VelocityField::Closed(f) => (0..grid.n_points())
                .map(|i| f.at(grid.point(i)).exp())
                .collect(),
        }
    }

    /// Coefficients used as the reference for error metrics. A closed form is
    /// projected onto the first `n_modes` modes by the discrete Fourier
    /// transform on the grid; this is exact for integer wavenumbers below the
    /// Nyquist limit.
    pub fn reference_coefficients(&self, n_modes: usize, grid: &Grid) -> FourierCoefficients {
        match self {
            VelocityField::Fourier(c) if c.n_modes() == n_modes => c.clone(),
            VelocityField::Fourier(c) => {
                let mut out = vec![0.0; 2 * n_modes + 1];
                for (o, v) in out.iter_mut().zip(c.as_slice()) {
                    *o = *v;
                }
                FourierCoefficients::new(out).expect("odd length by construction")
            }
            VelocityField::Closed(f) => {
                let values: Vec<f64> = (0..grid.n_points()).map(|i| f.at(grid.point(i))).collect();
                project_log_field(&values, n_modes, grid)
            }
        }
    }
}

/// Discrete projection of sampled log-field values onto `(A0, A_k, B_k)`.
pub fn project_log_field(values: &[f64], n_modes: usize, grid: &Grid) -> FourierCoefficients {
    let n = grid.n_points() as f64;
    let x = grid.points();
    let mut coeffs = Vec::with_capacity(2 * n_modes + 1);
    coeffs.push(values.iter().sum::<f64>() / n);
    for k in 1..=n_modes {
        let kf = k as f64;
        let (mut s, mut c) = (0.0, 0.0);
        for (v, xi) in values.iter().zip(&x) {
            let (sk, ck) = (kf * xi).sin_cos();
            s += v * sk;
            c += v * ck;
        }
        coeffs.push(kf * kf * 2.0 * s / n);
        coeffs.push(kf * kf * 2.0 * c / n);
    }
    FourierCoefficients::new(coeffs).expect("odd length by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, PI, TAU};

    #[test]
    fn zero_coefficients_give_unit_field() {
        let grid = Grid::periodic_2pi(17).unwrap();
        let c = evaluate_field(&FourierCoefficients::zeros(3), &grid);
        assert!(c.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_sine_mode_matches_closed_form() {
        let coeffs = FourierCoefficients::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert!((coeffs.log_field_at(PI / 2.0).exp() - E).abs() < 1e-12);
        // N = 4 on [0, 2pi] puts a grid point at pi/2.
        let grid = Grid::new(4, TAU).unwrap();
        let c = evaluate_field(&coeffs, &grid);
        assert!((c[0] - E).abs() < 1e-9);
    }

    #[test]
    fn second_mode_against_term_by_term_sum() {
        let coeffs = FourierCoefficients::new(vec![0.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        let grid = Grid::periodic_2pi(50).unwrap();
        let c = evaluate_field(&coeffs, &grid);
        for i in [0, 7, 13, 31, 49] {
            let x = grid.point(i);
            let mut g = 0.0;
            let terms = [(1.0, 0.0, 0.0), (2.0, 2.0, 0.0)];
            for (k, a, b) in terms {
                g += a / (k * k) * (k * x).sin() + b / (k * k) * (k * x).cos();
            }
            assert!((c[i] - g.exp()).abs() < 1e-12);
            assert!((c[i] - (0.5 * (2.0 * x).sin()).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_sized() {
        let a = sample_true_coefficients(10, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_true_coefficients(10, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a.len(), 21);
        assert_eq!(a, b);
        let one = sample_true_coefficients(1, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(one, sample_true_coefficients(1, &mut ChaCha8Rng::seed_from_u64(9)));
    }

    #[test]
    fn sampling_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = [0.0; 5];
        let mut sq = [0.0; 5];
        for _ in 0..n {
            let c = sample_true_coefficients(2, &mut rng);
            for (i, v) in c.as_slice().iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        for i in 0..5 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn mode_numbers_follow_canonical_order() {
        assert_eq!(
            FourierCoefficients::mode_numbers(3),
            vec![1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]
        );
    }

    #[test]
    fn rejects_even_length_and_nan() {
        assert!(FourierCoefficients::new(vec![0.0, 1.0]).is_err());
        assert!(FourierCoefficients::new(vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn json_is_flat_array() {
        let c = FourierCoefficients::new(vec![0.5, 1.0, -2.0]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, "[0.5,1.0,-2.0]");
        let back: FourierCoefficients = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<FourierCoefficients>("[1.0,2.0]").is_err());
    }

    #[test]
    fn projection_recovers_integer_sine() {
        let grid = Grid::periodic_2pi(64).unwrap();
        let field = VelocityField::Closed(LogField::sine(1.0, 1.0));
        let c = field.reference_coefficients(3, &grid);
        let expect = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in c.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn periodic_distance_wraps() {
        let grid = Grid::new(10, 1.0).unwrap();
        assert_eq!(grid.periodic_distance(0, 9), 1);
        assert_eq!(grid.periodic_distance(2, 7), 5);
        assert_eq!(grid.periodic_distance(3, 3), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coeff_vec() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-3.0f64..3.0, 7)
        }

        proptest! {
            #[test]
            fn field_is_positive_and_bounded(c in coeff_vec()) {
                let coeffs = FourierCoefficients::new(c.clone()).unwrap();
                let grid = Grid::periodic_2pi(40).unwrap();
                let bound = c[0].abs()
                    + (1..=3).map(|k| (c[2 * k - 1].abs() + c[2 * k].abs()) / (k * k) as f64).sum::<f64>();
                for v in evaluate_field(&coeffs, &grid) {
                    prop_assert!(v > 0.0);
                    prop_assert!(v.ln().abs() <= bound + 1e-12);
                }
            }

            #[test]
            fn log_field_is_linear(a in coeff_vec(), b in coeff_vec()) {
                let grid = Grid::periodic_2pi(40).unwrap();
                let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let fa = evaluate_field(&FourierCoefficients::new(a).unwrap(), &grid);
                let fb = evaluate_field(&FourierCoefficients::new(b).unwrap(), &grid);
                let fs = evaluate_field(&FourierCoefficients::new(sum).unwrap(), &grid);
                for i in 0..40 {
                    prop_assert!((fs[i].ln() - fa[i].ln() - fb[i].ln()).abs() < 1e-12);
                }
            }
        }
    }
}
