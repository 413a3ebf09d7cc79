//! Checkpoint files: one model, its config, and its training progress.
//!
//! Layout (version 1, all little-endian, built on the core container
//! primitives — this layout is frozen; saving is bit-exact by contract):
//!
//! ```text
//! magic    8 bytes  "DSCCKPT\0"
//! version  u32      1
//! config   string   canonical config text
//! epochs_completed   u64
//! inputs_presented   u64
//! n_layers u32
//! per layer, in config order:
//!   name     string
//!   n_stacks u32
//!   per parent slot: stride_h u32, stride_w u32, kernels tensor
//! ```
//!
//! The embedded config is the canonical form, so a load-save cycle
//! reproduces the file byte for byte regardless of how the original
//! config was formatted. Kernel data is stored as raw f64 bits: a model
//! survives any number of round trips with bitwise-identical inference.

use std::path::Path;

use dsc_core::container::{ContainerReader, ContainerWriter};
use dsc_core::{DscError, DscResult, KernelStack, LayerGraph};

use crate::config::ModelConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSCCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A model frozen to disk: dictionaries plus everything needed to
/// rebuild the graph around them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub graph: LayerGraph,
    pub epochs_completed: u64,
    pub inputs_presented: u64,
}

impl Checkpoint {
    /// A fresh model: seeded initial dictionaries, zero progress.
    pub fn initial(config: ModelConfig) -> DscResult<Checkpoint> {
        let graph = config.build_graph()?;
        Ok(Checkpoint {
            config,
            graph,
            epochs_completed: 0,
            inputs_presented: 0,
        })
    }

    pub fn save(&self, path: &Path) -> DscResult<()> {
        let mut w = ContainerWriter::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        w.put_string(&self.config.canonical_text());
        w.put_u64(self.epochs_completed);
        w.put_u64(self.inputs_presented);
        w.put_u32(self.graph.layers().len() as u32);
        for layer in self.graph.layers() {
            w.put_string(layer.name());
            w.put_u32(layer.stacks().len() as u32);
            for stack in layer.stacks() {
                w.put_u32(stack.stride().0 as u32);
                w.put_u32(stack.stride().1 as u32);
                w.put_tensor(stack.kernels());
            }
        }
        w.write_to(path)
    }

    pub fn load(path: &Path) -> DscResult<Checkpoint> {
        let mut r = ContainerReader::open(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let config = ModelConfig::parse(&r.get_string()?)?;
        let epochs_completed = r.get_u64()?;
        let inputs_presented = r.get_u64()?;
        let n_layers = r.get_u32()? as usize;
        if n_layers != config.layers.len() {
            return Err(DscError::Container(format!(
                "{}: {} layer records for a config declaring {}",
                path.display(),
                n_layers,
                config.layers.len()
            )));
        }
        let mut stacks_per_layer = Vec::with_capacity(n_layers);
        for spec in &config.layers {
            let name = r.get_string()?;
            if name != spec.name {
                return Err(DscError::Container(format!(
                    "{}: layer record '{}' where config declares '{}'",
                    path.display(),
                    name,
                    spec.name
                )));
            }
            let n_stacks = r.get_u32()? as usize;
            let mut stacks = Vec::with_capacity(n_stacks);
            for _ in 0..n_stacks {
                let sh = r.get_u32()? as usize;
                let sw = r.get_u32()? as usize;
                let kernels = r.get_tensor()?;
                stacks.push(KernelStack::new(kernels, (sh, sw))?);
            }
            stacks_per_layer.push(stacks);
        }
        r.finish()?;
        let graph = config.build_graph_with(stacks_per_layer)?;
        Ok(Checkpoint {
            config,
            graph,
            epochs_completed,
            inputs_presented,
        })
    }
}
