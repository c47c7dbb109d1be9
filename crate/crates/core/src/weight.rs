//! Weight functions `ω: ℕ → ℝ₊` mapping a vertex's child count to its
//! attachment rate.
//!
//! A weight function is stored as a finite prefix of explicit values plus a
//! tail descriptor that covers every index past the prefix. The tail
//! descriptor is what makes certified series truncation possible: a constant
//! or exactly-linear tail admits closed-form tail sums, and a dominated tail
//! (`ω(k) ≤ a·k + b`) still yields rigorous upper bounds.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("weight ω({index}) = {value} must be strictly positive and finite")]
    NonPositiveRate { index: usize, value: f64 },
    #[error("invalid weight parameter: {0}")]
    InvalidParam(String),
    #[error("declared bound violated: ω({index}) = {value} exceeds {slope}·k + {intercept} = {bound}")]
    BoundViolated {
        index: usize,
        value: f64,
        slope: f64,
        intercept: f64,
        bound: f64,
    },
    #[error("cannot parse weight spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
}

/// Behaviour of `ω(k)` for all `k ≥ prefix.len()`.
#[derive(Clone)]
pub enum Tail {
    /// ω(k) = c for every tail index.
    Constant(f64),
    /// ω(k) = slope·k + intercept exactly, for every tail index.
    Linear { slope: f64, intercept: f64 },
    /// Explicit values produced lazily, with the guarantee
    /// ω(k) ≤ slope·k + intercept (checked at query time).
    DominatedLinear {
        slope: f64,
        intercept: f64,
        values: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tail::Constant(c) => write!(f, "Constant({c})"),
            Tail::Linear { slope, intercept } => write!(f, "Linear({slope}·k + {intercept})"),
            Tail::DominatedLinear { slope, intercept, .. } => {
                write!(f, "DominatedLinear(≤ {slope}·k + {intercept})")
            }
        }
    }
}

/// A weight function: explicit prefix values followed by a described tail.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    prefix: Vec<f64>,
    tail: Tail,
}

impl PartialEq for WeightFunction {
    fn eq(&self, other: &Self) -> bool {
        if self.prefix != other.prefix {
            return false;
        }
        match (&self.tail, &other.tail) {
            (Tail::Constant(a), Tail::Constant(b)) => a == b,
            (
                Tail::Linear { slope: s1, intercept: i1 },
                Tail::Linear { slope: s2, intercept: i2 },
            ) => s1 == s2 && i1 == i2,
            (
                Tail::DominatedLinear { slope: s1, intercept: i1, values: v1 },
                Tail::DominatedLinear { slope: s2, intercept: i2, values: v2 },
            ) => s1 == s2 && i1 == i2 && Arc::ptr_eq(v1, v2),
            _ => false,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), WeightError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(WeightError::InvalidParam(format!("{name} = {v} must be > 0 and finite")));
    }
    Ok(())
}

impl WeightFunction {
    /// ω ≡ c.
    pub fn constant(c: f64) -> Result<Self, WeightError> {
        check_positive("c", c)?;
        Ok(Self { prefix: Vec::new(), tail: Tail::Constant(c) })
    }

    /// ω(k) = slope·k + intercept.
    pub fn linear(slope: f64, intercept: f64) -> Result<Self, WeightError> {
        check_positive("slope", slope)?;
        check_positive("intercept", intercept)?;
        Ok(Self { prefix: Vec::new(), tail: Tail::Linear { slope, intercept } })
    }

    /// Explicit prefix values followed by a constant or linear tail.
    pub fn with_prefix(prefix: Vec<f64>, tail: Tail) -> Result<Self, WeightError> {
        for (index, &value) in prefix.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(WeightError::NonPositiveRate { index, value });
            }
        }
        match tail {
            Tail::Constant(c) => check_positive("tail c", c)?,
            Tail::Linear { slope, intercept } | Tail::DominatedLinear { slope, intercept, .. } => {
                check_positive("tail slope", slope)?;
                check_positive("tail intercept", intercept)?;
            }
        }
        Ok(Self { prefix, tail })
    }

    /// Lazily evaluated tail values dominated by slope·k + intercept.
    pub fn dominated<F>(
        prefix: Vec<f64>,
        slope: f64,
        intercept: f64,
        values: F,
    ) -> Result<Self, WeightError>
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self::with_prefix(
            prefix,
            Tail::DominatedLinear { slope, intercept, values: Arc::new(values) },
        )
    }

    /// Number of explicit prefix values; tail formulas apply from this index on.
    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    /// ω(k). For dominated tails the declared bound is enforced per query.
    pub fn eval(&self, k: usize) -> Result<f64, WeightError> {
        if let Some(&v) = self.prefix.get(k) {
            return Ok(v);
        }
        match &self.tail {
            Tail::Constant(c) => Ok(*c),
            Tail::Linear { slope, intercept } => Ok(slope * k as f64 + intercept),
            Tail::DominatedLinear { slope, intercept, values } => {
                let value = values(k);
                if !(value.is_finite() && value > 0.0) {
                    return Err(WeightError::NonPositiveRate { index: k, value });
                }
                let bound = slope * k as f64 + intercept;
                if value > bound {
                    return Err(WeightError::BoundViolated {
                        index: k,
                        value,
                        slope: *slope,
                        intercept: *intercept,
                        bound,
                    });
                }
                Ok(value)
            }
        }
    }

    /// ω(k) without the dominated-bound check. Diagnostics only.
    pub(crate) fn eval_unchecked(&self, k: usize) -> f64 {
        if let Some(&v) = self.prefix.get(k) {
            return v;
        }
        match &self.tail {
            Tail::Constant(c) => *c,
            Tail::Linear { slope, intercept } => slope * k as f64 + intercept,
            Tail::DominatedLinear { values, .. } => values(k),
        }
    }

    /// Multiply every rate by `c > 0` (a pure time rescaling of the model).
    pub fn scaled(&self, c: f64) -> Result<Self, WeightError> {
        check_positive("scale", c)?;
        let prefix = self.prefix.iter().map(|w| w * c).collect();
        let tail = match &self.tail {
            Tail::Constant(v) => Tail::Constant(v * c),
            Tail::Linear { slope, intercept } => {
                Tail::Linear { slope: slope * c, intercept: intercept * c }
            }
            Tail::DominatedLinear { slope, intercept, values } => {
                let inner = Arc::clone(values);
                Tail::DominatedLinear {
                    slope: slope * c,
                    intercept: intercept * c,
                    values: Arc::new(move |k| inner(k) * c),
                }
            }
        };
        Ok(Self { prefix, tail })
    }
}

/// Parseable description of a weight function.
///
/// Grammar (decimal reals, no whitespace):
/// `linear:<a>,<b>` | `const:<c>` | `table:<w0>,<w1>,...;tail=linear:<a>,<b>`
/// | `table:...;tail=const:<c>`
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    Linear { a: f64, b: f64 },
    Const { c: f64 },
    Table { values: Vec<f64>, tail: TailSpec },
}

#[derive(Clone, Debug, PartialEq)]
pub enum TailSpec {
    Linear { a: f64, b: f64 },
    Const { c: f64 },
}

impl WeightSpec {
    pub fn build(&self) -> Result<WeightFunction, WeightError> {
        match self {
            WeightSpec::Linear { a, b } => WeightFunction::linear(*a, *b),
            WeightSpec::Const { c } => WeightFunction::constant(*c),
            WeightSpec::Table { values, tail } => {
                let tail = match tail {
                    TailSpec::Linear { a, b } => Tail::Linear { slope: *a, intercept: *b },
                    TailSpec::Const { c } => Tail::Constant(*c),
                };
                WeightFunction::with_prefix(values.clone(), tail)
            }
        }
    }
}

fn parse_real(spec: &str, field: &str) -> Result<f64, WeightError> {
    field.parse::<f64>().map_err(|_| WeightError::Parse {
        spec: spec.to_owned(),
        reason: format!("`{field}` is not a decimal real"),
    })
}

fn parse_pair(spec: &str, body: &str) -> Result<(f64, f64), WeightError> {
    let mut it = body.split(',');
    let a = it.next().unwrap_or("");
    let b = it.next().ok_or_else(|| WeightError::Parse {
        spec: spec.to_owned(),
        reason: "expected two comma-separated reals".into(),
    })?;
    if it.next().is_some() {
        return Err(WeightError::Parse {
            spec: spec.to_owned(),
            reason: "expected exactly two comma-separated reals".into(),
        });
    }
    Ok((parse_real(spec, a)?, parse_real(spec, b)?))
}

impl FromStr for WeightSpec {
    type Err = WeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| WeightError::Parse { spec: s.to_owned(), reason: reason.into() };
        if let Some(body) = s.strip_prefix("linear:") {
            let (a, b) = parse_pair(s, body)?;
            return Ok(WeightSpec::Linear { a, b });
        }
        if let Some(body) = s.strip_prefix("const:") {
            return Ok(WeightSpec::Const { c: parse_real(s, body)? });
        }
        if let Some(body) = s.strip_prefix("table:") {
            let (values_part, tail_part) =
                body.split_once(";tail=").ok_or_else(|| bad("table form requires `;tail=`"))?;
            let values = values_part
                .split(',')
                .map(|v| parse_real(s, v))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(bad("table form requires at least one value"));
            }
            let tail = if let Some(tb) = tail_part.strip_prefix("linear:") {
                let (a, b) = parse_pair(s, tb)?;
                TailSpec::Linear { a, b }
            } else if let Some(tb) = tail_part.strip_prefix("const:") {
                TailSpec::Const { c: parse_real(s, tb)? }
            } else {
                return Err(bad("tail must be `linear:<a>,<b>` or `const:<c>`"));
            };
            return Ok(WeightSpec::Table { values, tail });
        }
        Err(bad("expected `linear:`, `const:` or `table:` form"))
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Linear { a, b } => write!(f, "linear:{a},{b}"),
            WeightSpec::Const { c } => write!(f, "const:{c}"),
            WeightSpec::Table { values, tail } => {
                write!(f, "table:")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                match tail {
                    TailSpec::Linear { a, b } => write!(f, ";tail=linear:{a},{b}"),
                    TailSpec::Const { c } => write!(f, ";tail=const:{c}"),
                }
            }
        }
    }
}
