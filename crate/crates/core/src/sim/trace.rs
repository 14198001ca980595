//! Per-step simulation records and their CSV layout.

use std::io::Write;

use serde::Serialize;

use crate::control::{GainTable, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::index_set::IndexSet;
use crate::linalg::{Mat, Vector};
use crate::uio::{BankIndices, ObserverKey, OmittedMember};

/// Everything observed at step `k`. Estimator-derived fields are `None`
/// when the scenario runs without an estimator; `a_u_hat` is `None` at `k = 0`
/// and the isolation sets are `None` before warmup.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vector,
    /// Input the plant received (zero on switched-off actuators).
    pub u: Vector,
    /// Actuator attack that reached the plant (zero on switched-off actuators).
    pub a_u: Vector,
    pub a_y: Vector,
    pub y: Vector,
    pub x_hat: Option<Vector>,
    pub sigma: Option<ObserverKey>,
    pub pis: Vec<(ObserverKey, f64)>,
    pub a_u_hat: Option<Vector>,
    pub a_y_hat: Option<Vector>,
    pub w_u_hat: Option<IndexSet>,
    pub w_y_hat: Option<IndexSet>,
    pub rho: IndexSet,
}

impl StepRecord {
    pub fn pi_min(&self) -> Option<f64> {
        self.sigma
            .as_ref()
            .and_then(|s| self.pis.iter().find(|(k, _)| k == s))
            .map(|(_, p)| *p)
    }

    pub fn error_norm(&self) -> Option<f64> {
        self.x_hat.as_ref().map(|xh| (xh - &self.x).norm())
    }
}

/// Design artifacts the run was built on.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct RunInfo {
    pub bank: Option<BankIndices>,
    pub bank_size: usize,
    /// Bank members without an observer, when the scenario allows omission.
    pub omitted: Vec<OmittedMember>,
    /// Largest spectral radius over the bank's `N` matrices.
    pub rho_max: Option<f64>,
    #[serde(with = "crate::serde_mat::option")]
    pub static_gain: Option<Mat>,
    pub gains: Option<GainTable>,
    pub certificate: Option<LyapunovCertificate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub records: Vec<StepRecord>,
    pub info: RunInfo,
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

fn push_vector(row: &mut Vec<String>, v: Option<&Vector>, len: usize) {
    match v {
        Some(v) => row.extend(v.iter().map(|x| x.to_string())),
        None => row.extend(std::iter::repeat_n(String::new(), len)),
    }
}

impl Trace {
    /// `k, x_*, u_*, au_*, ay_*, y_*, xhat_*, sigma, pi_min, auhat_*, ayhat_*, Wu, Wy, rho`.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["k".to_string()];
        h.extend(numbered("x", self.n));
        h.extend(numbered("u", self.n_u));
        h.extend(numbered("au", self.n_u));
        h.extend(numbered("ay", self.n_y));
        h.extend(numbered("y", self.n_y));
        h.extend(numbered("xhat", self.n));
        h.push("sigma".into());
        h.push("pi_min".into());
        h.extend(numbered("auhat", self.n_u));
        h.extend(numbered("ayhat", self.n_y));
        h.extend(["Wu", "Wy", "rho"].map(String::from));
        h
    }

    fn row(&self, r: &StepRecord) -> Vec<String> {
        let mut row = vec![r.k.to_string()];
        push_vector(&mut row, Some(&r.x), self.n);
        push_vector(&mut row, Some(&r.u), self.n_u);
        push_vector(&mut row, Some(&r.a_u), self.n_u);
        push_vector(&mut row, Some(&r.a_y), self.n_y);
        push_vector(&mut row, Some(&r.y), self.n_y);
        push_vector(&mut row, r.x_hat.as_ref(), self.n);
        row.push(r.sigma.as_ref().map(|s| s.to_string()).unwrap_or_default());
        row.push(r.pi_min().map(|p| p.to_string()).unwrap_or_default());
        push_vector(&mut row, r.a_u_hat.as_ref(), self.n_u);
        push_vector(&mut row, r.a_y_hat.as_ref(), self.n_y);
        for set in [&r.w_u_hat, &r.w_y_hat] {
            row.push(set.as_ref().map(|s| s.to_string()).unwrap_or_default());
        }
        row.push(r.rho.to_string());
        row
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("writing trace: {e}"));
        w.write_record(self.header()).map_err(io)?;
        for r in &self.records {
            w.write_record(self.row(r)).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidInput(format!("writing trace: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Named `(k, value)` series for external plotting: states, estimates,
    /// estimation error norm and reconstructed attacks.
    pub fn series(&self) -> Vec<(String, Vec<(usize, f64)>)> {
        let mut out = Vec::new();
        let mut component = |name: String, get: &dyn Fn(&StepRecord) -> Option<f64>| {
            let points: Vec<_> = self.records.iter().filter_map(|r| get(r).map(|v| (r.k, v))).collect();
            if !points.is_empty() {
                out.push((name, points));
            }
        };
        for i in 0..self.n {
            component(format!("x_{}", i + 1), &|r| Some(r.x[i]));
            component(format!("xhat_{}", i + 1), &|r| r.x_hat.as_ref().map(|v| v[i]));
        }
        component("error_norm".into(), &|r| r.error_norm());
        for i in 0..self.n_u {
            component(format!("au_{}", i + 1), &|r| Some(r.a_u[i]));
            component(format!("auhat_{}", i + 1), &|r| r.a_u_hat.as_ref().map(|v| v[i]));
        }
        for i in 0..self.n_y {
            component(format!("ay_{}", i + 1), &|r| Some(r.a_y[i]));
            component(format!("ayhat_{}", i + 1), &|r| r.a_y_hat.as_ref().map(|v| v[i]));
        }
        out
    }
}
