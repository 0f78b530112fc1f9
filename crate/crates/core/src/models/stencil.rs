//! Periodic finite-difference stencils.
//!
//! * `D1`:    `(3u_i - 4u_{i-1} + u_{i-2}) / (2dx)`, backward-biased first derivative
//! * `D1T`:   `(u_{i+2} - 4u_{i+1} + 3u_i) / (2dx)`, its transpose
//! * `D1D1T`: `(3u_{i+2} - 16u_{i+1} + 26u_i - 16u_{i-1} + 3u_{i-2}) / (4dx^2)`
//! * `D2`:    `(u_i - u_{i-1}) / dx`
//! * `D2T`:   `(u_i - u_{i+1}) / dx`
//! * `D2D2T`: `(-u_{i+1} + 2u_i - u_{i-1}) / dx^2`

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    D1,
    D1T,
    D2,
    D2T,
    D1D1T,
    D2D2T,
}

impl Stencil {
    /// `(offset, weight)` pairs and the power of `dx` in the denominator.
    pub fn taps(self) -> (&'static [(isize, f64)], i32, f64) {
        match self {
            Stencil::D1 => (&[(0, 3.0), (-1, -4.0), (-2, 1.0)], 1, 2.0),
            Stencil::D1T => (&[(2, 1.0), (1, -4.0), (0, 3.0)], 1, 2.0),
            Stencil::D1D1T => (
                &[(2, 3.0), (1, -16.0), (0, 26.0), (-1, -16.0), (-2, 3.0)],
                2,
                4.0,
            ),
            Stencil::D2 => (&[(0, 1.0), (-1, -1.0)], 1, 1.0),
            Stencil::D2T => (&[(0, 1.0), (1, -1.0)], 1, 1.0),
            Stencil::D2D2T => (&[(1, -1.0), (0, 2.0), (-1, -1.0)], 2, 1.0),
        }
    }

    fn min_len(self) -> usize {
        match self {
            Stencil::D1 | Stencil::D1T | Stencil::D1D1T => 3,
            Stencil::D2 | Stencil::D2T | Stencil::D2D2T => 2,
        }
    }
}

#[inline]
pub(crate) fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Applies `kind` to `u` with periodic wrap, writing into `out`.
pub fn stencil_into(u: &[f64], dx: f64, kind: Stencil, out: &mut [f64]) {
    let n = u.len();
    let (taps, power, denom) = kind.taps();
    let scale = 1.0 / (denom * dx.powi(power));
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for &(off, w) in taps {
            acc += w * u[wrap(i as isize + off, n)];
        }
        *o = acc * scale;
    }
}

pub fn apply_stencil(u: &[f64], dx: f64, kind: Stencil) -> Result<Vec<f64>> {
    if u.len() < kind.min_len() {
        return Err(Error::Dimension(format!(
            "{kind:?} needs at least {} points, got {}",
            kind.min_len(),
            u.len()
        )));
    }
    if !(dx.is_finite() && dx > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing must be positive, got {dx}")));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stencil input".into()));
    }
    let mut out = vec![0.0; u.len()];
    stencil_into(u, dx, kind, &mut out);
    Ok(out)
}

/// Dense `n x n` matrix of a stencil, assembled column by column.
pub fn assemble(kind: Stencil, n: usize, dx: f64) -> nalgebra::DMatrix<f64> {
    let mut m = nalgebra::DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        stencil_into(&e, dx, kind, &mut col);
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALL: [Stencil; 6] = [
        Stencil::D1,
        Stencil::D1T,
        Stencil::D2,
        Stencil::D2T,
        Stencil::D1D1T,
        Stencil::D2D2T,
    ];

    #[test]
    fn constants_are_annihilated() {
        for kind in ALL {
            let out = apply_stencil(&[2.5; 9], 0.3, kind).unwrap();
            assert!(out.iter().all(|v| v.abs() < 1e-12), "{kind:?}");
        }
    }

    #[test]
    fn d1_small_periodic_example() {
        let out = apply_stencil(&[1.0, 2.0, 3.0, 4.0], 1.0, Stencil::D1).unwrap();
        assert_eq!(out, vec![-5.0, 3.0, 1.0, 1.0]);
        assert_eq!(out.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn composite_stencils_equal_matrix_products() {
        let n = 100;
        let dx = 0.07;
        let d1 = assemble(Stencil::D1, n, dx);
        let d2 = assemble(Stencil::D2, n, dx);
        let want_11 = &d1 * d1.transpose();
        let want_22 = &d2 * d2.transpose();
        assert!((assemble(Stencil::D1D1T, n, dx) - &want_11).amax() < 1e-9);
        assert!((assemble(Stencil::D2D2T, n, dx) - &want_22).amax() < 1e-9);
        assert!((assemble(Stencil::D1T, n, dx) - d1.transpose()).amax() == 0.0);
        assert!((assemble(Stencil::D2T, n, dx) - d2.transpose()).amax() == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = apply_stencil(&u, dx, Stencil::D1D1T).unwrap();
        let want = &want_11 * nalgebra::DVector::from_column_slice(&u);
        for i in 0..n {
            assert!((got[i] - want[i]).abs() < 1e-12 * want_11.amax().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(apply_stencil(&[1.0, f64::NAN, 2.0, 3.0], 1.0, Stencil::D1).is_err());
        assert!(apply_stencil(&[1.0, 2.0], 1.0, Stencil::D1).is_err());
        assert!(apply_stencil(&[1.0, 2.0, 3.0], 0.0, Stencil::D2).is_err());
    }

    #[test]
    fn d1_adjointness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100;
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let du = apply_stencil(&u, 0.1, Stencil::D1).unwrap();
        let dtv = apply_stencil(&v, 0.1, Stencil::D1T).unwrap();
        let lhs: f64 = du.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&dtv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn d1d1t_symmetric_psd_zero_row_sums() {
        let m = assemble(Stencil::D1D1T, 100, 0.05);
        assert!((&m - m.transpose()).amax() < 1e-12);
        for r in 0..100 {
            assert!(m.row(r).sum().abs() < 1e-9);
        }
        let eig = m.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10, "{}", eig.min());
    }
}
