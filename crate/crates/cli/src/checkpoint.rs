//! Checkpoint files: one JSON document carrying the format version, the
//! model's width configuration, the joint topology, and every parameter
//! tensor. A checkpoint is self-contained — `eval` and `explain` rebuild the
//! model from it without consulting the training config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use kinescore_core::model::{Model, ModelConfig};
use kinescore_core::params::ParamStore;
use kinescore_core::tensor::Tensor;
use kinescore_core::topology::Topology;

use crate::failure::{Failure, Result};
use crate::files;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct DimsDump {
    stream_features: usize,
    hidden: usize,
    k_time: usize,
    k_joint: usize,
    res_blocks: usize,
    fusion_units: usize,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyDump {
    n_joints: usize,
    edges: Vec<[usize; 2]>,
    names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamDump {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    model: DimsDump,
    topology: TopologyDump,
    params: Vec<ParamDump>,
}

/// Serializes a trained model. Parameters are emitted in sorted name order,
/// so the same weights always produce the same bytes.
pub fn to_json(config: &ModelConfig, topo: &Topology, params: &ParamStore) -> String {
    let dump = Checkpoint {
        format_version: FORMAT_VERSION,
        model: DimsDump {
            stream_features: config.stream_features,
            hidden: config.hidden,
            k_time: config.k_time,
            k_joint: config.k_joint,
            res_blocks: config.res_blocks,
            fusion_units: config.fusion_units,
            seed: config.seed,
        },
        topology: TopologyDump {
            n_joints: topo.n_joints(),
            edges: topo.edges().iter().map(|&(a, b)| [a, b]).collect(),
            names: topo.names().to_vec(),
        },
        params: params
            .iter()
            .map(|(name, tensor)| ParamDump {
                name: name.clone(),
                shape: tensor.shape().to_vec(),
                data: tensor.data().to_vec(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&dump).expect("checkpoint serializes");
    text.push('\n');
    text
}

pub fn save(path: &Path, config: &ModelConfig, topo: &Topology, params: &ParamStore) -> Result<()> {
    files::write_text(path, &to_json(config, topo, params))
}

/// Parses and fully validates a checkpoint: version, topology, parameter set
/// and shapes (errors name the offending tensor), and value finiteness.
pub fn from_json(text: &str) -> Result<(Model, Topology, ParamStore)> {
    let dump: Checkpoint =
        serde_json::from_str(text).map_err(|e| Failure::checkpoint(format!("bad JSON: {e}")))?;
    if dump.format_version != FORMAT_VERSION {
        return Err(Failure::checkpoint(format!(
            "format version {} is not supported (want {FORMAT_VERSION})",
            dump.format_version
        )));
    }
    let edges = dump.topology.edges.iter().map(|&[a, b]| (a, b)).collect();
    let mut topo = Topology::new(dump.topology.n_joints, edges)
        .map_err(|e| Failure::checkpoint(format!("topology: {e}")))?;
    if dump.topology.names.len() != dump.topology.n_joints {
        return Err(Failure::checkpoint(format!(
            "{} joint names for {} joints",
            dump.topology.names.len(),
            dump.topology.n_joints
        )));
    }
    for (j, name) in dump.topology.names.iter().enumerate() {
        topo.set_name(j, name).map_err(|e| Failure::checkpoint(format!("topology: {e}")))?;
    }
    let config = ModelConfig {
        n_joints: dump.topology.n_joints,
        stream_features: dump.model.stream_features,
        hidden: dump.model.hidden,
        k_time: dump.model.k_time,
        k_joint: dump.model.k_joint,
        res_blocks: dump.model.res_blocks,
        fusion_units: dump.model.fusion_units,
        seed: dump.model.seed,
    };
    let model = Model::new(config, &topo)
        .map_err(|e| Failure::checkpoint(format!("model configuration: {e}")))?;

    let expected = model.config().param_shapes();
    let mut params = ParamStore::new();
    for p in &dump.params {
        for &v in &p.data {
            if !v.is_finite() {
                return Err(Failure::checkpoint(format!(
                    "parameter {} holds a non-finite value",
                    p.name
                )));
            }
        }
        let tensor = Tensor::new(p.shape.clone(), p.data.clone())
            .map_err(|e| Failure::checkpoint(format!("parameter {}: {e}", p.name)))?;
        params
            .insert(&p.name, tensor)
            .map_err(|e| Failure::checkpoint(format!("parameter {}: {e}", p.name)))?;
    }
    for (name, shape) in &expected {
        let tensor = params.get(name).map_err(|_| {
            Failure::checkpoint(format!("parameter {name} is missing from the checkpoint"))
        })?;
        if tensor.shape() != shape.as_slice() {
            return Err(Failure::checkpoint(format!(
                "parameter {name} has shape {:?} but the model wants {:?}",
                tensor.shape(),
                shape
            )));
        }
    }
    if params.len() != expected.len() {
        let known: Vec<&str> = expected.iter().map(|(n, _)| n.as_str()).collect();
        let extra = params
            .names()
            .find(|n| !known.contains(&n.as_str()))
            .cloned()
            .unwrap_or_default();
        return Err(Failure::checkpoint(format!("parameter {extra} is not part of the model")));
    }
    Ok((model, topo, params))
}

pub fn load(path: &Path) -> Result<(Model, Topology, ParamStore)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::checkpoint(format!("cannot read {}: {e}", path.display())))?;
    from_json(&text).map_err(|f| Failure {
        message: format!("{}: {}", path.display(), f.message),
        ..f
    })
}

// ── tests ──────────────────────────────────────────────────────────────────
