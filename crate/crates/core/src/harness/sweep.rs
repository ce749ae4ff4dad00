use serde::{Deserialize, Serialize};

use super::{run_scenario, set_path, toml_to_config, RunError};
use crate::postprocessing::ProtocolReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: String,
    pub report: ProtocolReport,
}

/// Run the resolved document once per value of the dotted parameter `param`.
/// `seed` overrides the document's seed after parsing, so it may exceed the
/// TOML integer range.
pub fn sweep(
    document: &toml::Table,
    param: &str,
    values: &[String],
    seed: Option<u64>,
) -> Vec<Result<SweepPoint, RunError>> {
    values
        .iter()
        .map(|raw| {
            let mut doc = document.clone();
            set_path(&mut doc, param, raw)?;
            let mut cfg = toml_to_config(doc)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_scenario(&cfg)?;
            Ok(SweepPoint { param: param.to_string(), value: raw.clone(), report })
        })
        .collect()
}
