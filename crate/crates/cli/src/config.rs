//! The model configuration format and its mapping onto a layer graph.
//!
//! Configs are sectioned `key = value` text. `[solver]` and `[training]`
//! hold the global settings, an optional `[external]` section overrides
//! the raw signal shapes, and each `[layer:NAME]` section declares one
//! dictionary layer. Blank lines and lines starting with `#` or `;` are
//! ignored. Keys take a single value; lists are comma-separated; sizes
//! and shapes are `x`-separated, for example `kernel = 8x8, 2x16` for a
//! two-parent layer.
//!
//! Layer sections are kept in file order, and that order is load-bearing:
//! dictionary initialization draws kernels from a seeded generator layer
//! by layer, parent slot by parent slot, so reordering sections changes
//! the initial dictionaries (never their distribution).
//!
//! [`ModelConfig::canonical_text`] re-serializes a parsed config with
//! every default made explicit, in a fixed key order. Parsing the
//! canonical text yields the same config, and canonicalizing is
//! idempotent; checkpoints embed this form so their bytes never depend
//! on the user's formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dsc_core::hierarchy::{ExternalShapes, Parent, ParentSource};
use dsc_core::{
    Branch, DictionaryLayer, DscError, DscResult, KernelStack, LayerGraph, LcaParams,
    TrainSchedule,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Reserved parent name selecting the layer's own external signal.
pub const PARENT_EXTERNAL: &str = "external";

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub dt_over_tau: f64,
    pub feedback_enabled: bool,
    pub feedback_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub update_every: usize,
    pub seed: u64,
}

/// One `[layer:NAME]` section. Per-parent lists (kernels, strides,
/// scales) are index-aligned with `parents`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub branch: Branch,
    pub parents: Vec<String>,
    pub parent_scales: Vec<f64>,
    pub features: usize,
    pub kernels: Vec<(usize, usize)>,
    pub strides: Vec<(usize, usize)>,
    pub lambda: f64,
    pub nonnegative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub solver: SolverConfig,
    pub training: TrainingConfig,
    pub external: ExternalShapes,
    pub layers: Vec<LayerSpec>,
}

fn cfg(msg: String) -> DscError {
    DscError::Config(msg)
}

fn parse_usize(section: &str, key: &str, raw: &str, line: usize) -> DscResult<usize> {
    raw.parse().map_err(|_| {
        cfg(format!(
            "line {}: [{}] {} must be a non-negative integer, got '{}'",
            line, section, key, raw
        ))
    })
}

fn parse_u64(section: &str, key: &str, raw: &str, line: usize) -> DscResult<u64> {
    raw.parse().map_err(|_| {
        cfg(format!(
            "line {}: [{}] {} must be a non-negative integer, got '{}'",
            line, section, key, raw
        ))
    })
}

fn parse_f64(section: &str, key: &str, raw: &str, line: usize) -> DscResult<f64> {
    raw.parse().map_err(|_| {
        cfg(format!(
            "line {}: [{}] {} must be a number, got '{}'",
            line, section, key, raw
        ))
    })
}

fn parse_bool(section: &str, key: &str, raw: &str, line: usize) -> DscResult<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(cfg(format!(
            "line {}: [{}] {} must be 'true' or 'false', got '{}'",
            line, section, key, raw
        ))),
    }
}

/// `AxB` pairs like `8x8`; `arity` comes from the number of dimensions.
fn parse_dims(section: &str, key: &str, raw: &str, line: usize, arity: usize) -> DscResult<Vec<usize>> {
    let parts: Vec<&str> = raw.split('x').map(str::trim).collect();
    if parts.len() != arity {
        return Err(cfg(format!(
            "line {}: [{}] {} must have {} 'x'-separated dimensions, got '{}'",
            line, section, key, arity, raw
        )));
    }
    let mut dims = Vec::with_capacity(arity);
    for p in parts {
        let d = parse_usize(section, key, p, line)?;
        if d == 0 {
            return Err(cfg(format!(
                "line {}: [{}] {} has a zero dimension in '{}'",
                line, section, key, raw
            )));
        }
        dims.push(d);
    }
    Ok(dims)
}

fn parse_pairs(section: &str, key: &str, raw: &str, line: usize) -> DscResult<Vec<(usize, usize)>> {
    raw.split(',')
        .map(|item| {
            let d = parse_dims(section, key, item.trim(), line, 2)?;
            Ok((d[0], d[1]))
        })
        .collect()
}

fn fmt_dims(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn fmt_pairs(pairs: &[(usize, usize)]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("{}x{}", a, b))
        .collect::<Vec<_>>()
        .join(", ")
}

fn fmt_floats(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// One parsed section: its entries with their line numbers, consumed
/// key by key so leftovers can be reported as unknown.
struct SectionView {
    name: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

impl SectionView {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let idx = self.entries.iter().position(|(k, _, _)| k == key)?;
        let (_, v, line) = self.entries.remove(idx);
        Some((v, line))
    }

    fn require(&mut self, key: &str) -> DscResult<(String, usize)> {
        self.take(key).ok_or_else(|| {
            cfg(format!("[{}] is missing required key '{}'", self.name, key))
        })
    }

    fn finish(self) -> DscResult<()> {
        if let Some((k, _, line)) = self.entries.first() {
            return Err(cfg(format!(
                "line {}: unknown key '{}' in [{}]",
                line, k, self.name
            )));
        }
        Ok(())
    }
}

fn split_sections(text: &str) -> DscResult<Vec<SectionView>> {
    let mut sections: Vec<SectionView> = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner.strip_suffix(']').ok_or_else(|| {
                cfg(format!("line {}: unterminated section header '{}'", line_no, line))
            })?;
            if sections.iter().any(|s| s.name == name) {
                return Err(cfg(format!(
                    "line {}: duplicate section [{}]",
                    line_no, name
                )));
            }
            sections.push(SectionView {
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            cfg(format!("line {}: expected 'key = value', got '{}'", line_no, line))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if value.is_empty() {
            return Err(cfg(format!("line {}: key '{}' has an empty value", line_no, key)));
        }
        let section = sections.last_mut().ok_or_else(|| {
            cfg(format!(
                "line {}: key '{}' appears before any section header",
                line_no, key
            ))
        })?;
        if section.entries.iter().any(|(k, _, _)| *k == key) {
            return Err(cfg(format!(
                "line {}: duplicate key '{}' in [{}]",
                line_no, key, section.name
            )));
        }
        section.entries.push((key, value, line_no));
    }
    Ok(sections)
}

impl ModelConfig {
    pub fn from_file(path: &Path) -> DscResult<ModelConfig> {
        let text = fs::read_to_string(path).map_err(|e| DscError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        ModelConfig::parse(&text)
    }

    pub fn parse(text: &str) -> DscResult<ModelConfig> {
        let mut solver = None;
        let mut training = None;
        let mut external = None;
        let mut layers: Vec<LayerSpec> = Vec::new();

        for mut section in split_sections(text)? {
            match section.name.clone() {
                n if n == "solver" => {
                    let (raw, line) = section.require("iterations")?;
                    let iterations = parse_usize("solver", "iterations", &raw, line)?;
                    let (raw, line) = section.require("dt_over_tau")?;
                    let dt_over_tau = parse_f64("solver", "dt_over_tau", &raw, line)?;
                    let feedback_enabled = match section.take("feedback_enabled") {
                        Some((raw, line)) => parse_bool("solver", "feedback_enabled", &raw, line)?,
                        None => true,
                    };
                    let feedback_scale = match section.take("feedback_scale") {
                        Some((raw, line)) => parse_f64("solver", "feedback_scale", &raw, line)?,
                        None => 1.0,
                    };
                    solver = Some(SolverConfig {
                        iterations,
                        dt_over_tau,
                        feedback_enabled,
                        feedback_scale,
                    });
                }
                n if n == "training" => {
                    let (raw, line) = section.require("epochs")?;
                    let epochs = parse_usize("training", "epochs", &raw, line)?;
                    let (raw, line) = section.require("learning_rate")?;
                    let learning_rate = parse_f64("training", "learning_rate", &raw, line)?;
                    let update_every = match section.take("update_every") {
                        Some((raw, line)) => {
                            let v = parse_usize("training", "update_every", &raw, line)?;
                            if v == 0 {
                                return Err(cfg(format!(
                                    "line {}: [training] update_every must be at least 1",
                                    line
                                )));
                            }
                            v
                        }
                        None => 1,
                    };
                    let (raw, line) = section.require("seed")?;
                    let seed = parse_u64("training", "seed", &raw, line)?;
                    training = Some(TrainingConfig {
                        epochs,
                        learning_rate,
                        update_every,
                        seed,
                    });
                }
                n if n == "external" => {
                    let (raw, line) = section.require("vision")?;
                    let vision = parse_dims("external", "vision", &raw, line, 3)?;
                    let (raw, line) = section.require("text")?;
                    let text_shape = parse_dims("external", "text", &raw, line, 3)?;
                    external = Some(ExternalShapes {
                        vision,
                        text: text_shape,
                    });
                }
                n => {
                    let name = n.strip_prefix("layer:").ok_or_else(|| {
                        cfg(format!(
                            "line {}: unknown section [{}]; expected solver, training, external, or layer:NAME",
                            section.line, n
                        ))
                    })?;
                    if name.is_empty() || name == PARENT_EXTERNAL {
                        return Err(cfg(format!(
                            "line {}: '{}' is not a usable layer name",
                            section.line, name
                        )));
                    }
                    if layers.iter().any(|l| l.name == name) {
                        return Err(cfg(format!(
                            "line {}: duplicate layer section [layer:{}]",
                            section.line, name
                        )));
                    }
                    layers.push(parse_layer(name, &mut section)?);
                }
            }
            section.finish()?;
        }

        let solver = solver.ok_or_else(|| cfg("missing [solver] section".to_string()))?;
        let training = training.ok_or_else(|| cfg("missing [training] section".to_string()))?;
        if layers.is_empty() {
            return Err(cfg("config declares no [layer:NAME] sections".to_string()));
        }
        Ok(ModelConfig {
            solver,
            training,
            external: external.unwrap_or_else(dsc_core::data::external_shapes),
            layers,
        })
    }

    /// Re-serializes with defaults materialized and a fixed key order.
    /// `parse(canonical_text(c))` equals `c`, and the text is a fixed
    /// point of parse-then-canonicalize.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "[solver]").unwrap();
        writeln!(s, "iterations = {}", self.solver.iterations).unwrap();
        writeln!(s, "dt_over_tau = {}", self.solver.dt_over_tau).unwrap();
        writeln!(s, "feedback_enabled = {}", self.solver.feedback_enabled).unwrap();
        writeln!(s, "feedback_scale = {}", self.solver.feedback_scale).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[training]").unwrap();
        writeln!(s, "epochs = {}", self.training.epochs).unwrap();
        writeln!(s, "learning_rate = {}", self.training.learning_rate).unwrap();
        writeln!(s, "update_every = {}", self.training.update_every).unwrap();
        writeln!(s, "seed = {}", self.training.seed).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[external]").unwrap();
        writeln!(s, "vision = {}", fmt_dims(&self.external.vision)).unwrap();
        writeln!(s, "text = {}", fmt_dims(&self.external.text)).unwrap();
        for layer in &self.layers {
            writeln!(s).unwrap();
            writeln!(s, "[layer:{}]", layer.name).unwrap();
            writeln!(s, "branch = {}", layer.branch).unwrap();
            writeln!(s, "parents = {}", layer.parents.join(", ")).unwrap();
            writeln!(s, "parent_scales = {}", fmt_floats(&layer.parent_scales)).unwrap();
            writeln!(s, "features = {}", layer.features).unwrap();
            writeln!(s, "kernel = {}", fmt_pairs(&layer.kernels)).unwrap();
            writeln!(s, "stride = {}", fmt_pairs(&layer.strides)).unwrap();
            writeln!(s, "lambda = {}", layer.lambda).unwrap();
            writeln!(s, "nonnegative = {}", layer.nonnegative).unwrap();
        }
        s
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            epochs: self.training.epochs,
            learning_rate: self.training.learning_rate,
            update_every: self.training.update_every,
            seed: self.training.seed,
        }
    }

    /// Input channel count a kernel stack sees through the given parent.
    fn parent_channels(&self, spec: &LayerSpec, parent: &str) -> DscResult<usize> {
        if parent == PARENT_EXTERNAL {
            let plane = match spec.branch {
                Branch::Vision => &self.external.vision,
                Branch::Text => &self.external.text,
                Branch::Joint => {
                    return Err(cfg(format!(
                        "[layer:{}]: a joint layer cannot read the external signal",
                        spec.name
                    )))
                }
            };
            Ok(plane[0])
        } else {
            self.layers
                .iter()
                .find(|l| l.name == parent)
                .map(|l| l.features)
                .ok_or_else(|| {
                    cfg(format!(
                        "[layer:{}]: parent '{}' is not a declared layer",
                        spec.name, parent
                    ))
                })
        }
    }

    /// Builds the graph with fresh seeded dictionaries. Kernels are drawn
    /// from stream 0 of the training seed (the shuffle stream is 1), in
    /// layer-section order, one stack per parent slot.
    pub fn build_graph(&self) -> DscResult<LayerGraph> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.training.seed);
        rng.set_stream(0);
        let mut stacks_per_layer = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let mut stacks = Vec::with_capacity(spec.parents.len());
            for (slot, parent) in spec.parents.iter().enumerate() {
                let channels = self.parent_channels(spec, parent)?;
                let (kh, kw) = spec.kernels[slot];
                let stack = KernelStack::random_unit(
                    spec.features,
                    channels,
                    kh,
                    kw,
                    spec.strides[slot],
                    &mut rng,
                )
                .map_err(|e| cfg(format!("[layer:{}]: {}", spec.name, e)))?;
                stacks.push(stack);
            }
            stacks_per_layer.push(stacks);
        }
        self.assemble(stacks_per_layer)
    }

    /// Builds the graph around dictionaries loaded from elsewhere,
    /// checking them against the declared geometry first.
    pub fn build_graph_with(&self, stacks_per_layer: Vec<Vec<KernelStack>>) -> DscResult<LayerGraph> {
        if stacks_per_layer.len() != self.layers.len() {
            return Err(cfg(format!(
                "expected dictionaries for {} layers, got {}",
                self.layers.len(),
                stacks_per_layer.len()
            )));
        }
        for (spec, stacks) in self.layers.iter().zip(&stacks_per_layer) {
            if stacks.len() != spec.parents.len() {
                return Err(cfg(format!(
                    "[layer:{}]: expected {} kernel stacks, got {}",
                    spec.name,
                    spec.parents.len(),
                    stacks.len()
                )));
            }
            for (slot, stack) in stacks.iter().enumerate() {
                let channels = self.parent_channels(spec, &spec.parents[slot])?;
                if stack.features() != spec.features
                    || stack.channels() != channels
                    || stack.kernel_size() != spec.kernels[slot]
                    || stack.stride() != spec.strides[slot]
                {
                    return Err(cfg(format!(
                        "[layer:{}]: stack {} has geometry {}x{} kernel {:?} stride {:?}, \
                         config declares {}x{} kernel {:?} stride {:?}",
                        spec.name,
                        slot,
                        stack.features(),
                        stack.channels(),
                        stack.kernel_size(),
                        stack.stride(),
                        spec.features,
                        channels,
                        spec.kernels[slot],
                        spec.strides[slot]
                    )));
                }
            }
        }
        self.assemble(stacks_per_layer)
    }

    fn assemble(&self, stacks_per_layer: Vec<Vec<KernelStack>>) -> DscResult<LayerGraph> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (spec, stacks) in self.layers.iter().zip(stacks_per_layer) {
            let params = LcaParams::new(
                spec.lambda,
                self.solver.dt_over_tau,
                self.solver.iterations,
                spec.nonnegative,
            )
            .map_err(|e| cfg(format!("[layer:{}]: {}", spec.name, e)))?;
            let parents = spec
                .parents
                .iter()
                .zip(&spec.parent_scales)
                .map(|(p, &scale)| Parent {
                    source: if p == PARENT_EXTERNAL {
                        ParentSource::External
                    } else {
                        ParentSource::Layer(p.clone())
                    },
                    scale,
                })
                .collect();
            layers.push(DictionaryLayer::new(
                &spec.name,
                spec.branch,
                parents,
                stacks,
                params,
            )?);
        }
        LayerGraph::new(
            layers,
            self.solver.feedback_enabled,
            self.solver.feedback_scale,
            self.solver.iterations,
            self.external.clone(),
        )
    }
}

fn parse_layer(name: &str, section: &mut SectionView) -> DscResult<LayerSpec> {
    let sec = format!("layer:{}", name);
    let (raw, line) = section.require("branch")?;
    let branch: Branch = raw.parse().map_err(|e| match e {
        DscError::Config(m) => cfg(format!("line {}: [{}] {}", line, sec, m)),
        other => other,
    })?;
    let (raw, _) = section.require("parents")?;
    let parents: Vec<String> = raw.split(',').map(|p| p.trim().to_string()).collect();
    let (raw, line) = section.require("features")?;
    let features = parse_usize(&sec, "features", &raw, line)?;
    if features == 0 {
        return Err(cfg(format!("line {}: [{}] features must be at least 1", line, sec)));
    }
    let (raw, line) = section.require("kernel")?;
    let kernels = parse_pairs(&sec, "kernel", &raw, line)?;
    let (raw, line) = section.require("stride")?;
    let strides = parse_pairs(&sec, "stride", &raw, line)?;
    let (raw, line) = section.require("lambda")?;
    let lambda = parse_f64(&sec, "lambda", &raw, line)?;
    let nonnegative = match section.take("nonnegative") {
        Some((raw, line)) => parse_bool(&sec, "nonnegative", &raw, line)?,
        None => false,
    };
    let parent_scales = match section.take("parent_scales") {
        Some((raw, line)) => {
            let scales: DscResult<Vec<f64>> = raw
                .split(',')
                .map(|v| parse_f64(&sec, "parent_scales", v.trim(), line))
                .collect();
            let scales = scales?;
            for &s in &scales {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(cfg(format!(
                        "line {}: [{}] parent_scales must be finite and >= 0, got {}",
                        line, sec, s
                    )));
                }
            }
            scales
        }
        None => vec![1.0; parents.len()],
    };

    for (key, len) in [
        ("kernel", kernels.len()),
        ("stride", strides.len()),
        ("parent_scales", parent_scales.len()),
    ] {
        if len != parents.len() {
            return Err(cfg(format!(
                "[{}]: {} lists {} entries but parents lists {}",
                sec,
                key,
                len,
                parents.len()
            )));
        }
    }

    Ok(LayerSpec {
        name: name.to_string(),
        branch,
        parents,
        parent_scales,
        features,
        kernels,
        strides,
        lambda,
        nonnegative,
    })
}
