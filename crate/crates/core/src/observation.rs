//! Continuous-time measurement increments
//! `dy = H x dt + R^{1/2} d eta`, `E[d eta d eta^T] = I dt`.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::fields::Grid;
use crate::models::ModelKind;
use crate::noise::fill_standard_normal;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ObservationModel {
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    r_sqrt: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    dt: f64,
}

impl ObservationModel {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>, dt: f64) -> Result<Self> {
        if r.nrows() != r.ncols() || r.nrows() != h.nrows() {
            return Err(Error::Dimension(format!(
                "H is {}x{} but R is {}x{}",
                h.nrows(),
                h.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        if h.nrows() > h.ncols() {
            return Err(Error::Dimension("more observations than state entries".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if (&r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0) {
            return Err(Error::SingularCovariance);
        }
        let chol = Cholesky::new(r.clone()).ok_or(Error::SingularCovariance)?;
        let r_inv = chol.inverse();
        let r_sqrt = chol.l();
        Ok(Self {
            h,
            r,
            chol,
            r_sqrt,
            r_inv,
            dt,
        })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    /// Lower Cholesky factor of `R`.
    pub fn r_sqrt(&self) -> &DMatrix<f64> {
        &self.r_sqrt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    /// `R^{-1} v` through the stored factorisation.
    pub fn solve_r(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// Draws `R^{1/2} xi` with `xi ~ N(0, I dt)`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut xi = vec![0.0; self.obs_dim()];
        fill_standard_normal(rng, &mut xi);
        let xi = DVector::from_vec(xi) * self.dt.sqrt();
        &self.r_sqrt * xi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationIncrement {
    pub dy: Vec<f64>,
    pub time_index: usize,
}

pub fn observe<R: Rng + ?Sized>(
    state: &[f64],
    model: &ObservationModel,
    time_index: usize,
    rng: &mut R,
) -> Result<ObservationIncrement> {
    if state.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "H has {} columns, state has {} entries",
            model.state_dim(),
            state.len()
        )));
    }
    let x = DVector::from_column_slice(state);
    let dy = model.h() * x * model.dt() + model.sample_noise(rng);
    Ok(ObservationIncrement {
        dy: dy.as_slice().to_vec(),
        time_index,
    })
}

/// Full observation for advection; the `u` block of `(p, u)` for the wave.
pub fn default_observation_model(kind: ModelKind, grid: &Grid, dt: f64, obs_noise: f64) -> Result<ObservationModel> {
    if !(obs_noise.is_finite() && obs_noise > 0.0) {
        return Err(Error::InvalidArgument(format!("obs_noise must be > 0, got {obs_noise}")));
    }
    let n = grid.n_points();
    let h = match kind {
        ModelKind::Advection => DMatrix::identity(n, n),
        ModelKind::Wave => {
            let mut h = DMatrix::zeros(n, 2 * n);
            for i in 0..n {
                h[(i, n + i)] = 1.0;
            }
            h
        }
    };
    ObservationModel::new(h, DMatrix::identity(n, n) * obs_noise.powi(2), dt)
}

pub fn write_observations(path: &Path, incs: &[ObservationIncrement]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let r = incs.first().map_or(0, |i| i.dy.len());
    let mut header = vec!["step".to_string()];
    header.extend((0..r).map(|i| format!("dy{i}")));
    w.write_record(&header)?;
    for inc in incs {
        let mut row = vec![inc.time_index.to_string()];
        row.extend(inc.dy.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<ObservationIncrement>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad number '{s}': {e}")))
        };
        let time_index = rec
            .get(0)
            .ok_or_else(|| Error::InvalidArgument("empty observation row".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("bad step: {e}")))?;
        let dy = rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        out.push(ObservationIncrement { dy, time_index });
    }
    Ok(out)
}
