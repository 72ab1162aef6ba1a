//! `build-dam`: turns dam parameters into a problem file.

use serde::{Deserialize, Serialize};
use timeblocks::dhd::dam::{build_dam_instance, stock_reduction, DamInstance, DamParams, DamVariant};

use crate::build::export;
use crate::file::{ProblemFile, SchemaError, FORMAT_VERSION};
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamFile {
    pub version: u32,
    pub variant: Variant,
    pub capacity: f64,
    pub turbine: Vec<f64>,
    /// Per period, `[volume, probability]` pairs.
    pub inflows: Vec<Vec<(f64, f64)>>,
    #[serde(default)]
    pub revenue: Vec<Vec<f64>>,
    #[serde(default)]
    pub final_value: Vec<f64>,
    #[serde(default)]
    pub spill_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    MinDynamics,
    SpillControl,
}

pub fn parse_dam(text: &str) -> Result<DamFile, SchemaError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        SchemaError {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

pub fn dam_problem(file: &DamFile) -> Result<ProblemFile, Failure> {
    if file.version != FORMAT_VERSION {
        return Err(Failure::Usage(format!("unsupported format version {}", file.version)));
    }
    let params = DamParams {
        capacity: file.capacity,
        turbine: file.turbine.clone(),
        inflows: file.inflows.clone(),
        revenue: file.revenue.clone(),
        final_value: file.final_value.clone(),
        spill_cost: file.spill_cost,
    };
    let variant = match file.variant {
        Variant::MinDynamics => DamVariant::MinDynamics,
        Variant::SpillControl => DamVariant::SpillControl,
    };
    let red = stock_reduction(&params)?;
    match build_dam_instance(&params, variant)? {
        DamInstance::MinDynamics(p) => export(&p, None, Some((&red, None))),
        DamInstance::SpillControl(d) => export(d.spec(), Some(&d), Some((&red, None))),
    }
}
