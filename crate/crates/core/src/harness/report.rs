//! Verdict report rendering: one line per condition, a property matrix
//! in the shape of the comparison table, and machine-readable JSON.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Condition, NscVerdict, PropertyVerdict};
use crate::sut::SystemUnderTest;

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub sut_label: String,
    pub conditions: Vec<NscVerdict>,
    pub properties: Vec<PropertyVerdict>,
}

impl VerifyReport {
    pub fn evaluate(sut: &SystemUnderTest) -> Self {
        let (conditions, properties) = super::evaluate_properties(sut);
        VerifyReport { sut_label: sut.label.clone(), conditions, properties }
    }

    pub fn all_conditions_hold(&self) -> bool {
        self.conditions.iter().all(|v| v.holds)
    }

    pub fn violated_conditions(&self) -> Vec<Condition> {
        self.conditions.iter().filter(|v| !v.holds).map(|v| v.condition).collect()
    }

    /// Write each violation witness transcript to `dir`, returning the
    /// paths in condition order.
    pub fn write_witnesses(&self, dir: &Path) -> std::io::Result<Vec<(Condition, PathBuf)>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for verdict in &self.conditions {
            if let Some(witness) = &verdict.witness {
                let path = dir.join(format!(
                    "{}_{}_{}.witness.bin",
                    self.sut_label,
                    verdict.condition.label(),
                    witness.scenario
                ));
                std::fs::write(&path, witness.transcript.to_bytes())?;
                paths.push((verdict.condition, path));
            }
        }
        Ok(paths)
    }

    pub fn render_text(&self, witness_paths: &[(Condition, PathBuf)]) -> String {
        let mut out = String::new();
        out.push_str(&format!("security verdict for {}\n\n", self.sut_label));
        out.push_str("conditions:\n");
        for verdict in &self.conditions {
            let status = match (verdict.holds, verdict.by_model) {
                (true, true) => "holds (by model)".to_string(),
                (true, false) => "holds".to_string(),
                (false, _) => {
                    let scenario = verdict.witness.as_ref().map(|w| w.scenario).unwrap_or("-");
                    let path = witness_paths
                        .iter()
                        .find(|(c, _)| *c == verdict.condition)
                        .map(|(_, p)| format!(" [{}]", p.display()))
                        .unwrap_or_default();
                    format!("VIOLATED (witness: {scenario}){path}")
                }
            };
            out.push_str(&format!(
                "  {}  {:<58} {}\n",
                verdict.condition.label(),
                verdict.condition.description(),
                status
            ));
        }
        out.push_str("\nproperties:\n");
        for verdict in &self.properties {
            let cell = if verdict.holds {
                "\u{2713}".to_string()
            } else {
                let failed: Vec<&str> = verdict.failed_conditions.iter().map(|c| c.label()).collect();
                format!("\u{2717} ({})", failed.join(", "))
            };
            out.push_str(&format!(
                "  {:<6} {:<46} {}\n",
                verdict.property.label(),
                verdict.property.title(),
                cell
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct CondDto<'a> {
            condition: &'a str,
            description: &'a str,
            holds: bool,
            by_model: bool,
            witness_scenario: Option<&'a str>,
            witness_seed: Option<u64>,
        }
        #[derive(Serialize)]
        struct PropDto<'a> {
            property: &'a str,
            title: &'a str,
            holds: bool,
            failed_conditions: Vec<&'a str>,
        }
        let conditions: Vec<CondDto> = self
            .conditions
            .iter()
            .map(|v| CondDto {
                condition: v.condition.label(),
                description: v.condition.description(),
                holds: v.holds,
                by_model: v.by_model,
                witness_scenario: v.witness.as_ref().map(|w| w.scenario),
                witness_seed: v.witness.as_ref().map(|w| w.seed),
            })
            .collect();
        let properties: Vec<PropDto> = self
            .properties
            .iter()
            .map(|v| PropDto {
                property: v.property.label(),
                title: v.property.title(),
                holds: v.holds,
                failed_conditions: v.failed_conditions.iter().map(|c| c.label()).collect(),
            })
            .collect();
        serde_json::json!({
            "sut": self.sut_label,
            "conditions": conditions,
            "properties": properties,
        })
    }
}
