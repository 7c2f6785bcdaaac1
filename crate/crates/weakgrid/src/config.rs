//! JSON case description: network, devices, dispatch, synthesis settings.
//!
//! The schema is strict — unknown keys are rejected — and carries an
//! explicit version field. `CaseConfig` resolves into a [`StudySystem`],
//! the validated in-memory form the analysis modules consume.

use serde::{Deserialize, Serialize};

use crate::devices::{IbrParams, StatcomParams};
use crate::error::{Error, Result};
use crate::netmodel::{NetworkModel, NodeKind, OperatingCondition};
use crate::synthesis::{GainBounds, ObjectiveMode};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub network: NetworkSection,
    pub ibrs: Vec<IbrEntry>,
    pub statcoms: Vec<StatcomEntry>,
    pub operating_condition: OperatingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSection>,
    /// Default directory for command outputs; the CLI's --out overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub nodes: Vec<crate::netmodel::Node>,
    pub branches: Vec<crate::netmodel::Branch>,
    pub tau: f64,
    pub omega0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbrEntry {
    pub node: String,
    pub params: IbrParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatcomEntry {
    pub node: String,
    pub params: StatcomParams,
}

/// Dispatch vectors aligned with the `ibrs` / `statcoms` arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingSection {
    pub p_e: Vec<f64>,
    pub i_qs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub m: usize,
    pub seed: u64,
    pub objective_mode: ObjectiveMode,
    #[serde(default)]
    pub bounds: GainBounds,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            m: 4,
            seed: 1,
            objective_mode: ObjectiveMode::SpectralAbscissa,
            bounds: GainBounds::default(),
        }
    }
}

/// Resolved, validated study system.
#[derive(Debug, Clone)]
pub struct StudySystem {
    pub net: NetworkModel,
    /// IBR parameters in canonical node order.
    pub ibrs: Vec<IbrParams>,
    /// STATCOM parameters in canonical node order.
    pub statcoms: Vec<StatcomParams>,
    pub synthesis: SynthesisSection,
}

impl StudySystem {
    /// Swaps the PLL and AVC gains of every STATCOM.
    pub fn with_statcom_gains(
        &self,
        pll: crate::devices::PiGains,
        avc: crate::devices::PiGains,
    ) -> Self {
        let mut out = self.clone();
        for s in &mut out.statcoms {
            s.pll = pll;
            s.avc = avc;
        }
        out
    }

    /// Removes every STATCOM (device and network node become passive).
    pub fn without_statcoms(&self) -> Self {
        let mut out = self.clone();
        out.statcoms.clear();
        for node in &mut out.net.nodes {
            if node.kind == NodeKind::Statcom {
                node.kind = NodeKind::Passive;
            }
        }
        out
    }

    pub fn rated_condition(&self, i_qs: Vec<f64>) -> OperatingCondition {
        OperatingCondition::rated(
            self.ibrs.iter().map(|p| p.s_b).collect(),
            self.statcoms.iter().map(|p| p.s_bs).collect(),
            i_qs,
        )
    }
}

impl CaseConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: CaseConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("{} (at {})", e.inner(), e.path())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Cross-validates and resolves the configuration.
    pub fn resolve(&self) -> Result<(StudySystem, OperatingCondition)> {
        let net = NetworkModel {
            nodes: self.network.nodes.clone(),
            branches: self.network.branches.clone(),
            tau: self.network.tau,
            omega0: self.network.omega0,
        };
        net.validate()?;
        let ibr_nodes = net.ibr_ids();
        let statcom_nodes = net.statcom_ids();
        if self.ibrs.len() != ibr_nodes.len() {
            return Err(Error::Config(format!(
                "{} IBR entries but {} IBR nodes",
                self.ibrs.len(),
                ibr_nodes.len()
            )));
        }
        if self.statcoms.len() != statcom_nodes.len() {
            return Err(Error::Config(format!(
                "{} STATCOM entries but {} STATCOM nodes",
                self.statcoms.len(),
                statcom_nodes.len()
            )));
        }
        for (entry, node) in self.ibrs.iter().zip(&ibr_nodes) {
            if &entry.node != node {
                return Err(Error::Config(format!(
                    "IBR entries must follow network node order: expected `{node}`, found `{}`",
                    entry.node
                )));
            }
            entry.params.validate().map_err(|e| {
                Error::Config(format!("IBR at `{}`: {e}", entry.node))
            })?;
        }
        for (entry, node) in self.statcoms.iter().zip(&statcom_nodes) {
            if &entry.node != node {
                return Err(Error::Config(format!(
                    "STATCOM entries must follow network node order: expected `{node}`, found `{}`",
                    entry.node
                )));
            }
            entry.params.validate().map_err(|e| {
                Error::Config(format!("STATCOM at `{}`: {e}", entry.node))
            })?;
        }
        if self.operating_condition.p_e.len() != self.ibrs.len()
            || self.operating_condition.i_qs.len() != self.statcoms.len()
        {
            return Err(Error::Config(
                "operating_condition lengths do not match device counts".into(),
            ));
        }
        let oc = OperatingCondition {
            p_e: self.operating_condition.p_e.clone(),
            i_qs: self.operating_condition.i_qs.clone(),
            s_b: self.ibrs.iter().map(|e| e.params.s_b).collect(),
            s_bs: self.statcoms.iter().map(|e| e.params.s_bs).collect(),
        };
        oc.validate()?;
        let sys = StudySystem {
            net,
            ibrs: self.ibrs.iter().map(|e| e.params.clone()).collect(),
            statcoms: self.statcoms.iter().map(|e| e.params.clone()).collect(),
            synthesis: self.synthesis.clone().unwrap_or_default(),
        };
        Ok((sys, oc))
    }
}
