//! JSON file formats and fixed-precision float output.
//!
//! Every float written by this crate uses 17 significant digits so that
//! reports are byte-identical across runs and round-trip exactly.

use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::spectra::SystemSpec;

/// `x` with 17 significant digits, or `null` when not finite.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn raw(x: f64) -> Box<RawValue> {
    RawValue::from_string(fmt17(x)).expect("formatted float is valid JSON")
}

pub fn sig17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    raw(*x).serialize(s)
}

pub fn sig17_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => raw(*v).serialize(s),
        None => s.serialize_none(),
    }
}

pub fn sig17_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&raw(x))?;
    }
    seq.end()
}

pub fn sig17_matrix<S: Serializer>(rows: &[Vec<[f64; 2]>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for row in rows {
        let cells: Vec<[Box<RawValue>; 2]> =
            row.iter().map(|[re, im]| [raw(*re), raw(*im)]).collect();
        seq.serialize_element(&cells)?;
    }
    seq.end()
}

/// `{"n_qubits": n}` or `{"energies": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SystemFile {
    Qubits { n_qubits: u32 },
    Energies { energies: Vec<u32> },
}

impl SystemFile {
    pub fn to_spec(&self) -> Result<SystemSpec> {
        match self {
            Self::Qubits { n_qubits } => SystemSpec::uniform_qubits(*n_qubits),
            Self::Energies { energies } => SystemSpec::from_energies(energies.clone()),
        }
    }
}

/// `{"R": r}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatteryFile {
    #[serde(rename = "R")]
    pub r: u32,
}

/// Exported battery: ladder parameters plus the amplitude profile.
#[derive(Debug, Clone, Serialize)]
pub struct BatteryExport {
    #[serde(rename = "R")]
    pub r: u32,
    pub capacity: u32,
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(serialize_with = "sig17_vec")]
    pub amplitudes: Vec<f64>,
}

impl BatteryExport {
    pub fn new<T: crate::scalar::Real>(b: &crate::spectra::BatterySim<T>) -> Self {
        Self {
            r: b.r(),
            capacity: b.capacity(),
            l: b.l(),
            amplitudes: b.amplitudes().iter().map(|a| a.as_f64()).collect(),
        }
    }
}

/// One entry of a circuit file: either a built-in gate name or a matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitGateEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<String>,
    pub targets: Vec<usize>,
}

/// `{"qubits": n, "gates": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitFile {
    pub qubits: u32,
    pub gates: Vec<CircuitGateEntry>,
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_fixed_width() {
        assert_eq!(fmt17(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt17(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt17(f64::INFINITY), "null");
        let back: f64 = fmt17(0.1).parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn system_file_variants() {
        let q: SystemFile = parse_json(r#"{"n_qubits": 2}"#).unwrap();
        assert_eq!(q.to_spec().unwrap().energies(), &[0, 1, 1, 2]);
        let e: SystemFile = parse_json(r#"{"energies": [0, 1, 2]}"#).unwrap();
        assert_eq!(e.to_spec().unwrap().dim(), 3);
        let b: BatteryFile = parse_json(r#"{"R": 7}"#).unwrap();
        assert_eq!(b.r, 7);
        assert!(parse_json::<SystemFile>(r#"{"qubits": 2}"#).is_err());
    }

    #[test]
    fn battery_export_precision() {
        let sys = SystemSpec::uniform_qubits(1).unwrap();
        let b = crate::spectra::BatterySim::<f64>::sine(&sys, 4).unwrap();
        let json = serde_json::to_string(&BatteryExport::new(&b)).unwrap();
        assert!(json.contains("7.0710678118654757e-1"), "{json}");
        assert!(json.starts_with(r#"{"R":4,"capacity":4,"L":4,"#));
    }

    #[test]
    fn circuit_file_parses() {
        let c: CircuitFile = parse_json(
            r#"{"qubits": 2, "gates": [{"name": "H", "targets": [0]}, {"matrix_file": "g.json", "targets": [0, 1]}]}"#,
        )
        .unwrap();
        assert_eq!(c.gates.len(), 2);
        assert_eq!(c.gates[1].matrix_file.as_deref(), Some("g.json"));
    }
}
