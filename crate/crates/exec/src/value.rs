//! Values passed into and out of a run.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Array(Vec<f64>),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Array(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[f64]> {
        match self {
            Value::Array(v) => Some(v),
            _ => None,
        }
    }

    /// The real entries of this value: one for a scalar, all cells for an
    /// array, none for an integer.
    pub fn reals(&self) -> &[f64] {
        match self {
            Value::Real(v) => std::slice::from_ref(v),
            Value::Array(v) => v,
            Value::Int(_) => &[],
        }
    }

    /// A value of the same shape holding zeros.
    pub fn zeros_like(&self) -> Value {
        match self {
            Value::Real(_) => Value::Real(0.0),
            Value::Int(_) => Value::Int(0),
            Value::Array(v) => Value::Array(vec![0.0; v.len()]),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Array(v) => {
                for (k, x) in v.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::Array(v)
    }
}

pub type Values = BTreeMap<String, Value>;
