use serde::{Deserialize, Serialize};

use crate::mdp::{Mdp, MdpFile, TransitionRow};
use crate::{Error, Result};

/// A finite set of plausible MDPs over shared state and action spaces.
///
/// Only transition and cost tables differ between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleUncertainMdp {
    samples: Vec<Mdp>,
}

impl SampleUncertainMdp {
    pub fn new(samples: Vec<Mdp>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::model("uncertain MDP needs at least one sample"));
        };
        let shared = |m: &Mdp| {
            (
                m.num_states(),
                m.num_actions(),
                m.gamma().to_bits(),
                m.horizon(),
                m.initial_state(),
                m.terminals().collect::<Vec<_>>(),
            )
        };
        let reference = shared(first);
        if let Some(i) = samples.iter().position(|m| shared(m) != reference) {
            return Err(Error::model(format!("sample {i} does not share the header of sample 0")));
        }
        Ok(SampleUncertainMdp { samples })
    }

    pub fn samples(&self) -> &[Mdp] {
        &self.samples
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    /// Sample 0, used for the shared header fields.
    pub fn header(&self) -> &Mdp {
        &self.samples[0]
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: UncertainFile = serde_json::from_str(text)?;
        file.into_uncertain()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&UncertainFile::from_uncertain(self)).expect("plain data serializes")
    }
}

/// Header fields shared by every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedHeader {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub horizon: Option<usize>,
    pub initial_state: usize,
    pub terminals: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    pub transitions: Vec<TransitionRow>,
}

/// `{ "shared": {...}, "samples": [ {"transitions": [...]}, ... ] }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainFile {
    pub shared: SharedHeader,
    pub samples: Vec<SampleBlock>,
}

impl UncertainFile {
    pub fn into_uncertain(self) -> Result<SampleUncertainMdp> {
        let h = self.shared;
        let samples = self
            .samples
            .into_iter()
            .enumerate()
            .map(|(i, block)| {
                MdpFile {
                    num_states: h.num_states,
                    num_actions: h.num_actions,
                    gamma: h.gamma,
                    horizon: h.horizon,
                    initial_state: h.initial_state,
                    terminals: h.terminals.clone(),
                    transitions: block.transitions,
                }
                .into_mdp()
                .map_err(|e| Error::model(format!("samples[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        SampleUncertainMdp::new(samples)
    }

    pub fn from_uncertain(u: &SampleUncertainMdp) -> Self {
        let files: Vec<MdpFile> = u.samples().iter().map(MdpFile::from_mdp).collect();
        let f = &files[0];
        UncertainFile {
            shared: SharedHeader {
                num_states: f.num_states,
                num_actions: f.num_actions,
                gamma: f.gamma,
                horizon: f.horizon,
                initial_state: f.initial_state,
                terminals: f.terminals.clone(),
            },
            samples: files.into_iter().map(|f| SampleBlock { transitions: f.transitions }).collect(),
        }
    }
}
