//! CSV and JSON result files.

use std::path::Path;

use crate::mcmc::ChainHistory;
use crate::{Error, FourierCoefficients, Result};

fn header(first: &str, prefix: &str, n: usize) -> Vec<String> {
    let mut h = vec![first.to_string()];
    h.extend((0..n).map(|i| format!("{prefix}{i}")));
    h
}

fn row(index: usize, values: &[f64]) -> Vec<String> {
    let mut r = vec![index.to_string()];
    r.extend(values.iter().map(|v| v.to_string()));
    r
}

/// One row per time index, one column per grid point.
pub fn write_trajectory(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header("step", "x", rows.first().map_or(0, Vec::len)))?;
    for (t, r) in rows.iter().enumerate() {
        w.write_record(row(t, r))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `cycle, accepted, loglik, lambda0, ...`.
pub fn write_chain(path: &Path, chain: &ChainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut h = vec!["cycle".to_string(), "accepted".into(), "loglik".into()];
    h.extend((0..chain.dim()).map(|i| format!("lambda{i}")));
    w.write_record(&h)?;
    for k in 0..chain.len() {
        let mut r = vec![
            k.to_string(),
            u8::from(chain.accepted[k]).to_string(),
            chain.loglik[k].to_string(),
        ];
        r.extend(chain.sample(k).iter().map(|v| v.to_string()));
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `step, lambda0, ...`.
pub fn write_lambda_trajectory(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header("step", "lambda", rows.first().map_or(0, Vec::len)))?;
    for (t, r) in rows.iter().enumerate() {
        w.write_record(row(t, r))?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter samples read back from a chain or a λ̂ trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub index: Vec<usize>,
    pub accepted: Option<Vec<bool>>,
    pub samples: Vec<Vec<f64>>,
}

/// Reads either a chain file (`cycle, accepted, loglik, ...`) or a λ̂
/// trajectory (`step, ...`), recognised by the header.
pub fn read_samples(path: &Path) -> Result<SampleTable> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let is_chain = headers.get(0) == Some("cycle");
    if !is_chain && headers.get(0) != Some("step") {
        return Err(Error::InvalidArgument(format!(
            "{}: expected a 'cycle' or 'step' column first",
            path.display()
        )));
    }
    let skip = if is_chain { 3 } else { 1 };
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("bad number '{s}': {e}")))
    };
    let mut table = SampleTable {
        index: Vec::new(),
        accepted: is_chain.then(Vec::new),
        samples: Vec::new(),
    };
    for rec in rd.records() {
        let rec = rec?;
        let idx = rec.get(0).unwrap_or("").trim();
        table
            .index
            .push(idx.parse().map_err(|e| Error::InvalidArgument(format!("bad index '{idx}': {e}")))?);
        if let Some(acc) = &mut table.accepted {
            acc.push(rec.get(1).map(str::trim) == Some("1"));
        }
        table
            .samples
            .push(rec.iter().skip(skip).map(num).collect::<Result<Vec<_>>>()?);
    }
    Ok(table)
}

pub fn write_coefficients(path: &Path, coeffs: &FourierCoefficients) -> Result<()> {
    std::fs::write(path, serde_json::to_string(coeffs)?)?;
    Ok(())
}

pub fn read_coefficients(path: &Path) -> Result<FourierCoefficients> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        let rows = vec![vec![0.1, 0.2, 0.3], vec![1.0 / 3.0, -2.0, 1e-300]];
        write_lambda_trajectory(&p, &rows).unwrap();
        let t = read_samples(&p).unwrap();
        assert_eq!(t.samples, rows);
        assert_eq!(t.index, vec![0, 1]);
        assert!(t.accepted.is_none());
    }

    #[test]
    fn coefficients_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let c = FourierCoefficients::new(vec![0.5, -1.0, 0.25]).unwrap();
        write_coefficients(&p, &c).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "[0.5,-1.0,0.25]");
        assert_eq!(read_coefficients(&p).unwrap(), c);
    }
}
