//! Flat `key = value` configuration with list syntax and typed, tracked lookups.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{GaussianDist, SpdMatrix};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Scalar(String),
    List(Vec<String>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(s) => write!(f, "{s}"),
            Value::List(items) => write!(f, "[{}]", items.join(", ")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Origin {
    File { line: usize },
    Override,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { line } => write!(f, "config line {line}"),
            Origin::Override => write!(f, "command-line override"),
            Origin::Default => write!(f, "default"),
        }
    }
}

fn parse_value(raw: &str) -> std::result::Result<Value, String> {
    let raw = raw.trim();
    if let Some(inner) = raw.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or_else(|| format!("unterminated list '{raw}'"))?;
        let items: Vec<String> = inner.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err("empty list".into());
        }
        Ok(Value::List(items))
    } else if raw.is_empty() {
        Err("missing value".into())
    } else {
        Ok(Value::Scalar(raw.to_string()))
    }
}

/// Raw entries with their origins, later entries overriding earlier ones.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (Value, Origin)>,
}

impl RawConfig {
    pub fn parse_file_text(text: &str) -> Result<Self> {
        let mut out = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected 'key = value', got '{body}'")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty key")));
            }
            let value = parse_value(v).map_err(|e| Error::Config(format!("line {line_no}, key '{key}': {e}")))?;
            out.entries.insert(key.to_string(), (value, Origin::File { line: line_no }));
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_file_text(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key=value")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override '{spec}' has an empty key")));
        }
        let value = parse_value(v).map_err(|e| Error::Config(format!("override '{key}': {e}")))?;
        self.entries.insert(key.to_string(), (value, Origin::Override));
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), (value, Origin::Override));
    }

    pub fn get(&self, key: &str) -> Option<&(Value, Origin)> {
        self.entries.get(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<(Value, Origin)> {
        self.entries.remove(key)
    }
}

/// Typed view over a [`RawConfig`] that records every resolved key.
#[derive(Debug)]
pub struct Resolver {
    raw: RawConfig,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(raw: RawConfig) -> Self {
        Self { raw, resolved: BTreeMap::new() }
    }

    fn field_err(&self, key: &str, msg: impl fmt::Display) -> Error {
        match self.raw.get(key) {
            Some((_, origin)) => Error::Config(format!("{origin}, key '{key}': {msg}")),
            None => Error::Config(format!("key '{key}': {msg}")),
        }
    }

    fn numbers(&self, key: &str, v: &Value) -> Result<Vec<f64>> {
        let items: Vec<&String> = match v {
            Value::Scalar(s) => vec![s],
            Value::List(l) => l.iter().collect(),
        };
        items
            .into_iter()
            .map(|s| {
                let x: f64 = s.parse().map_err(|_| self.field_err(key, format!("'{s}' is not a number")))?;
                if !x.is_finite() {
                    return Err(self.field_err(key, format!("'{s}' is not finite")));
                }
                Ok(x)
            })
            .collect()
    }

    fn record(&mut self, key: &str, shown: String) {
        self.resolved.insert(key.to_string(), shown);
    }

    pub fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        let x = match self.raw.get(key).cloned() {
            Some((v, _)) => {
                let xs = self.numbers(key, &v)?;
                if xs.len() != 1 {
                    return Err(self.field_err(key, "expected a single number"));
                }
                xs[0]
            }
            None => default,
        };
        self.record(key, fmt_num(x));
        Ok(x)
    }

    pub fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        let x = self.f64(key, default)?;
        if x <= 0.0 {
            return Err(self.field_err(key, format!("must be positive, got {x}")));
        }
        Ok(x)
    }

    pub fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        if self.raw.get(key).is_none() {
            self.record(key, "none".into());
            return Ok(None);
        }
        self.f64(key, 0.0).map(Some)
    }

    pub fn usize(&mut self, key: &str, default: usize, min: usize) -> Result<usize> {
        let n = match self.raw.get(key).cloned() {
            Some((Value::Scalar(s), _)) => s.parse::<usize>().map_err(|_| self.field_err(key, format!("'{s}' is not a nonnegative integer")))?,
            Some((Value::List(_), _)) => return Err(self.field_err(key, "expected an integer, got a list")),
            None => default,
        };
        if n < min {
            return Err(self.field_err(key, format!("must be at least {min}, got {n}")));
        }
        self.record(key, n.to_string());
        Ok(n)
    }

    pub fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        let n = match self.raw.get(key).cloned() {
            Some((Value::Scalar(s), _)) => s.parse::<u64>().map_err(|_| self.field_err(key, format!("'{s}' is not a nonnegative integer")))?,
            Some((Value::List(_), _)) => return Err(self.field_err(key, "expected an integer, got a list")),
            None => default,
        };
        self.record(key, n.to_string());
        Ok(n)
    }

    pub fn list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let xs = match self.raw.get(key).cloned() {
            Some((v, _)) => self.numbers(key, &v)?,
            None => default.to_vec(),
        };
        if xs.is_empty() {
            return Err(self.field_err(key, "list is empty"));
        }
        let shown: Vec<String> = xs.iter().map(|&x| fmt_num(x)).collect();
        self.record(key, format!("[{}]", shown.join(", ")));
        Ok(xs)
    }

    /// Covariance of dimension `d`: `d` entries give a diagonal, `d²` a row-major matrix.
    pub fn covariance(&mut self, key: &str, default: &[f64], d: usize) -> Result<SpdMatrix> {
        let xs = self.list(key, default)?;
        let m = if xs.len() == d {
            SpdMatrix::from_diag(&xs)
        } else if xs.len() == d * d {
            SpdMatrix::from_matrix(nalgebra::DMatrix::from_row_slice(d, d, &xs))
        } else {
            let expected = if d == 1 { "1 entry".to_string() } else { format!("{d} or {} entries", d * d) };
            return Err(self.field_err(key, format!("expected {expected}, got {}", xs.len())));
        };
        m.map_err(|e| self.field_err(key, format!("not symmetric positive definite: {e}")))
    }

    /// Gaussian from `<prefix>m…` and `<prefix>c…` keys; the mean fixes the dimension.
    pub fn gaussian(&mut self, mean_key: &str, cov_key: &str, mean: &[f64], cov: &[f64]) -> Result<GaussianDist> {
        let m = self.list(mean_key, mean)?;
        let c = self.covariance(cov_key, cov, m.len())?;
        GaussianDist::new(DVector::from_vec(m), c).map_err(|e| self.field_err(cov_key, e))
    }

    pub fn string(&mut self, key: &str, default: &str) -> Result<String> {
        let s = match self.raw.get(key).cloned() {
            Some((Value::Scalar(s), _)) => s,
            Some((Value::List(_), _)) => return Err(self.field_err(key, "expected a single value, got a list")),
            None => default.to_string(),
        };
        self.record(key, s.clone());
        Ok(s)
    }

    pub fn choice(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String> {
        let s = self.string(key, default)?;
        if !allowed.contains(&s.as_str()) {
            return Err(self.field_err(key, format!("'{s}' is not one of {}", allowed.join(", "))));
        }
        Ok(s)
    }

    /// Fails on keys that were supplied but never read.
    pub fn finish(self) -> Result<Vec<(String, String)>> {
        for (key, (_, origin)) in &self.raw.entries {
            if !self.resolved.contains_key(key) {
                return Err(Error::Config(format!("{origin}: unknown key '{key}'")));
            }
        }
        Ok(self.resolved.into_iter().collect())
    }
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let raw = RawConfig::parse_file_text("# header\nc_pi = [1, 2, 3] # diag\ngamma=0.7\n\n").unwrap();
        let mut r = Resolver::new(raw);
        assert_eq!(r.list("c_pi", &[]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(r.f64("gamma", 1.0).unwrap(), 0.7);
        assert_eq!(r.f64("delta", 0.1).unwrap(), 0.1);
        let resolved = r.finish().unwrap();
        assert_eq!(resolved.len(), 3);
    }

    #[test]
    fn line_diagnostics() {
        let err = RawConfig::parse_file_text("a = 1\nbroken line\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        let raw = RawConfig::parse_file_text("a = 1\ngamma = x\n").unwrap();
        let err = Resolver::new(raw).f64("gamma", 1.0).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut raw = RawConfig::default();
        raw.apply_override("bogus=3").unwrap();
        assert!(Resolver::new(raw).finish().is_err());
    }

    #[test]
    fn covariance_shapes() {
        let mut raw = RawConfig::default();
        raw.apply_override("c=[2, 0.5, 0.5, 1]").unwrap();
        raw.apply_override("bad=[1, 2, 2, 1]").unwrap();
        let mut r = Resolver::new(raw);
        assert_eq!(r.covariance("c", &[], 2).unwrap().matrix()[(0, 1)], 0.5);
        assert!(r.covariance("bad", &[], 2).is_err());
        assert!(r.covariance("missing", &[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }
}
