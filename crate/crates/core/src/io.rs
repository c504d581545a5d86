//! Instance file format (`format_version: 1`).
//!
//! Tabular instances store nested arrays `u[h][s][ω][a]`, `v[h][s][ω][a]`,
//! `P[h][s][ω][a][s']` and `mu[h][c][ω]`; linear instances store the feature
//! tables and true parameters. Floats are written with 17 significant digits
//! so that a write/read cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MppError, Result};
use crate::model::{Dims, LinearMpp, TabularMpp};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

/// JSON formatter that prints every float as `{:.16e}`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PreciseFloats;

impl serde_json::ser::Formatter for PreciseFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_precise_json<S: Serialize>(value: &S) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFloats);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TabularDoc<T> {
    pub horizon: usize,
    pub states: usize,
    pub outcomes: usize,
    pub actions: usize,
    pub contexts: usize,
    pub initial_state: usize,
    pub u: Vec<Vec<Vec<Vec<T>>>>,
    pub v: Vec<Vec<Vec<Vec<T>>>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<Vec<Vec<T>>>>>,
    pub mu: Vec<Vec<Vec<T>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Instance<T> {
    Tabular(TabularDoc<T>),
    Linear(LinearMpp<T>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Envelope<T> {
    format_version: u32,
    #[serde(flatten)]
    instance: Instance<T>,
}

fn group<X: Clone>(items: Vec<X>, size: usize) -> Vec<Vec<X>> {
    items.chunks(size).map(|c| c.to_vec()).collect()
}

impl<T: Scalar> TabularDoc<T> {
    pub fn from_model(m: &TabularMpp<T>) -> Self {
        let d = m.dims;
        let util = |flat: &[T]| {
            let rows = group(flat.to_vec(), d.actions);
            let by_state = group(rows, d.outcomes);
            group(by_state, d.states)
        };
        let p_rows = group(m.transition_raw().to_vec(), d.states);
        let p = group(group(group(p_rows, d.actions), d.outcomes), d.states);
        let mu = group(group(m.prior_raw().to_vec(), d.outcomes), d.contexts);
        Self {
            horizon: d.horizon,
            states: d.states,
            outcomes: d.outcomes,
            actions: d.actions,
            contexts: d.contexts,
            initial_state: m.initial_state,
            u: util(m.receiver_utility_raw()),
            v: util(m.sender_utility_raw()),
            p,
            mu,
        }
    }

    pub fn into_model(self) -> Result<TabularMpp<T>> {
        let dims = Dims {
            horizon: self.horizon,
            states: self.states,
            outcomes: self.outcomes,
            actions: self.actions,
            contexts: self.contexts,
        };
        let flat4 = |x: Vec<Vec<Vec<Vec<T>>>>| -> Vec<T> { x.into_iter().flatten().flatten().flatten().collect() };
        let u = flat4(self.u);
        let v = flat4(self.v);
        let p: Vec<T> = self.p.into_iter().flatten().flatten().flatten().flatten().collect();
        let mu: Vec<T> = self.mu.into_iter().flatten().flatten().collect();
        let model = TabularMpp::from_parts(dims, self.initial_state, u, v, p, mu)?;
        let violations = model.validate();
        if !violations.is_empty() {
            return Err(MppError::InvalidModel(violations));
        }
        Ok(model)
    }
}

pub fn instance_to_json<T: Scalar>(instance: &Instance<T>) -> Result<String> {
    to_precise_json(&Envelope {
        format_version: FORMAT_VERSION,
        instance: instance.clone(),
    })
}

pub fn instance_from_json<T: Scalar>(text: &str) -> Result<Instance<T>> {
    let probe: serde_json::Value = serde_json::from_str(text)?;
    let version = probe.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(MppError::FormatVersion(version));
    }
    let env: Envelope<T> = serde_json::from_str(text)?;
    Ok(env.instance)
}

pub fn write_instance<T: Scalar>(path: &Path, instance: &Instance<T>) -> Result<()> {
    let text = instance_to_json(instance)?;
    fs::write(path, text).map_err(|source| MppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_instance<T: Scalar>(path: &Path) -> Result<Instance<T>> {
    let text = fs::read_to_string(path).map_err(|source| MppError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    instance_from_json(&text)
}

impl<T: Scalar> From<&TabularMpp<T>> for Instance<T> {
    fn from(m: &TabularMpp<T>) -> Self {
        Instance::Tabular(TabularDoc::from_model(m))
    }
}

impl<T: Scalar> From<&LinearMpp<T>> for Instance<T> {
    fn from(m: &LinearMpp<T>) -> Self {
        Instance::Linear(m.clone())
    }
}
