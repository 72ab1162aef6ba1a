//! The problem-file schema.
//!
//! Files are JSON with an explicit `version`. Costs are numbers or the
//! string `"inf"`. [`to_canonical`] writes keys in sorted order, so a file
//! that went through it is byte-stable.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

pub const FORMAT_VERSION: u32 = 1;

/// A cost entry: a nonnegative number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostValue(pub f64);

impl Serialize for CostValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for CostValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = CostValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<CostValue, E> {
                Ok(CostValue(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<CostValue, E> {
                Ok(CostValue(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<CostValue, E> {
                Ok(CostValue(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<CostValue, E> {
                match v {
                    "inf" => Ok(CostValue(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spaces: Option<Spaces>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dhd: Option<DhdSpaces>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_scale: Option<Clock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<KernelEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_process: Option<NoiseSection>,
    pub criterion: CriterionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionSection>,
}

/// `controls[t] = |U_t|`, `uncertainties[t] = |W_t|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spaces {
    pub controls: Vec<usize>,
    pub uncertainties: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhdSpaces {
    pub initial: usize,
    pub head: Vec<usize>,
    pub noise: Vec<usize>,
    pub tail: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clock {
    pub days: usize,
    pub minutes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub stage: usize,
    pub repr: KernelRepr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelRepr {
    FullTable(Vec<Vec<f64>>),
    WhiteNoise(Vec<f64>),
    Markov1(Vec<Vec<f64>>),
    ReducedViaMap { key: MapSpec, rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    Constant,
    LastUncertainty,
    RunningSum { cap: usize },
    NoiseWindow { from: usize },
    DamStock { capacity: usize, turbine: Vec<usize> },
    Table(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSpec {
    Concatenate,
    Constant,
    LastUncertainty,
    RunningSum { cap: usize },
    DamStock { capacity: usize, turbine: Vec<usize> },
    Table(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sizes: Vec<usize>,
    pub law: NoiseLawSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseLawSpec {
    JointTable(Vec<f64>),
    WhiteNoise(Vec<Vec<f64>>),
    DayIndependent {
        minutes: usize,
        initial: Vec<f64>,
        days: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CriterionSection {
    /// One cost per final history, lexicographic.
    FullTable(Vec<CostValue>),
    FinalState { map: MapSpec, costs: Vec<CostValue> },
    /// Stage costs over the states of the `reduction` section, which must
    /// then hold one map per stage.
    Additive {
        stage_costs: Vec<Vec<CostValue>>,
        final_cost: Vec<CostValue>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSection {
    /// `|X_{t_i}|` at each boundary of the schedule.
    pub states: Vec<usize>,
    pub theta: Vec<MapSpec>,
    pub dynamics: Vec<DynamicsSpec>,
    /// `j̃`; derived from the criterion when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_criterion: Option<Vec<CostValue>>,
}

/// Where a file failed to parse.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "schema error at `{}` (line {}, column {}): {}",
            self.path, self.line, self.column, self.message
        )
    }
}

pub fn parse_str(text: &str) -> Result<ProblemFile, SchemaError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let parsed: ProblemFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        SchemaError {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| SchemaError {
        path: ".".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(parsed)
}

/// Pretty JSON with keys sorted at every level.
pub fn to_canonical<T: Serialize>(value: &T) -> String {
    let tree = serde_json::to_value(value).expect("schema types serialize");
    let mut out = serde_json::to_string_pretty(&tree).expect("values serialize");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "spaces": {"controls": [1], "uncertainties": [1, 1]},
        "kernels": [{"stage": 1, "repr": {"white_noise": [1.0]}}],
        "criterion": {"full_table": [0]}
    }"#;

    #[test]
    fn minimal_file_round_trips() {
        let a = parse_str(MINIMAL).unwrap();
        let text = to_canonical(&a);
        assert_eq!(parse_str(&text).unwrap(), a);
        assert_eq!(to_canonical(&parse_str(&text).unwrap()), text);
    }

    #[test]
    fn infinite_costs_are_strings() {
        let text = MINIMAL.replace("[0]", "[\"inf\"]");
        let a = parse_str(&text).unwrap();
        assert_eq!(a.criterion, CriterionSection::FullTable(vec![CostValue(f64::INFINITY)]));
        assert!(to_canonical(&a).contains("\"inf\""));
        assert!(parse_str(&MINIMAL.replace("[0]", "[\"infinity\"]")).is_err());
    }

    #[test]
    fn schema_errors_carry_path_and_line() {
        let text = MINIMAL.replace("\"white_noise\": [1.0]", "\"white_noise\": [\"x\"]");
        let err = parse_str(&text).unwrap_err();
        assert_eq!(err.path, "kernels[0].repr.white_noise[0]");
        assert_eq!(err.line, 4);
        let err = parse_str(&MINIMAL.replace("\"version\"", "\"versoin\"")).unwrap_err();
        assert!(err.message.contains("unknown field"), "{err}");
    }
}
