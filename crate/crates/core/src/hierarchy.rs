//! Layer graphs: branch chains, the joint layer, and network inference.
//!
//! A [`LayerGraph`] is a small DAG of dictionary layers. Each modality
//! (vision, text) enters at an external leaf layer and flows up a chain;
//! the chains meet at a single joint layer that reconstructs every parent
//! branch through one shared activation map. What flows upward is the
//! parent's dense membrane potential, not its sparse code: thresholding is
//! only ever applied when a code is extracted for analysis.
//!
//! With feedback enabled, every child sends its parent the residual of its
//! reconstruction of that parent's membrane, and the parent subtracts that
//! residual as inhibitory drive. Feedback edges are exactly the reverse of
//! feed-forward edges.
//!
//! All layers step synchronously on one global clock, double-buffered:
//! within an iteration every layer reads the previous iteration's states,
//! so update order cannot influence results.
//!
//! A branch whose external input is absent is skipped entirely: its layers
//! keep zero states and the joint layer drops that branch's residual term.
//! Trajectories of present branches are therefore bitwise independent of
//! anything an absent branch would have carried.

use std::fmt;
use std::str::FromStr;

use crate::conv::KernelStack;
use crate::error::{DscError, DscResult};
use crate::lca::{
    energy_multi, fixed_point_residual_multi, lca_step_multi, BranchInput, EnergyPoint,
    LayerState, LcaParams,
};
use crate::tensor::Tensor;

/// Which modality chain a layer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Vision,
    Text,
    Joint,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Vision => "vision",
            Branch::Text => "text",
            Branch::Joint => "joint",
        })
    }
}

impl FromStr for Branch {
    type Err = DscError;

    fn from_str(s: &str) -> DscResult<Branch> {
        match s {
            "vision" => Ok(Branch::Vision),
            "text" => Ok(Branch::Text),
            "joint" => Ok(Branch::Joint),
            other => Err(DscError::Config(format!(
                "unknown branch '{}', expected vision, text, or joint",
                other
            ))),
        }
    }
}

/// Where a layer's reconstruction target comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParentSource {
    /// The raw external signal of the layer's modality.
    External,
    /// Another layer's membrane potential.
    Layer(String),
}

/// One parent connection with its drive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Parent {
    pub source: ParentSource,
    pub scale: f64,
}

impl Parent {
    pub fn external() -> Parent {
        Parent {
            source: ParentSource::External,
            scale: 1.0,
        }
    }

    pub fn layer(name: &str) -> Parent {
        Parent {
            source: ParentSource::Layer(name.to_string()),
            scale: 1.0,
        }
    }
}

/// One dictionary layer: a name, a branch tag, parent connections, one
/// kernel stack per parent, and solver settings.
#[derive(Debug, Clone)]
pub struct DictionaryLayer {
    name: String,
    branch: Branch,
    parents: Vec<Parent>,
    stacks: Vec<KernelStack>,
    params: LcaParams,
}

impl DictionaryLayer {
    pub fn new(
        name: &str,
        branch: Branch,
        parents: Vec<Parent>,
        stacks: Vec<KernelStack>,
        params: LcaParams,
    ) -> DscResult<DictionaryLayer> {
        if name.trim().is_empty() || name.chars().any(|c| c.is_whitespace() || c == ']') {
            return Err(DscError::Graph(format!(
                "layer name '{}' must be nonempty without whitespace or ']'",
                name
            )));
        }
        params.validate()?;
        if parents.is_empty() {
            return Err(DscError::Graph(format!("layer {} has no parent", name)));
        }
        if parents.len() != stacks.len() {
            return Err(DscError::Graph(format!(
                "layer {} has {} parents but {} kernel stacks",
                name,
                parents.len(),
                stacks.len()
            )));
        }
        match branch {
            Branch::Joint => {
                if parents.len() < 2 {
                    return Err(DscError::Graph(format!(
                        "joint layer {} needs at least 2 parents, got {}",
                        name,
                        parents.len()
                    )));
                }
                if parents
                    .iter()
                    .any(|p| matches!(p.source, ParentSource::External))
                {
                    return Err(DscError::Graph(format!(
                        "joint layer {} cannot read an external input directly",
                        name
                    )));
                }
            }
            _ => {
                if parents.len() != 1 {
                    return Err(DscError::Graph(format!(
                        "layer {} must have exactly 1 parent, got {}",
                        name,
                        parents.len()
                    )));
                }
            }
        }
        for p in &parents {
            if !(p.scale.is_finite() && p.scale > 0.0) {
                return Err(DscError::Graph(format!(
                    "layer {} has a non-positive parent scale {}",
                    name, p.scale
                )));
            }
            if let ParentSource::Layer(parent_name) = &p.source {
                if parent_name == name {
                    return Err(DscError::Graph(format!("layer {} is its own parent", name)));
                }
            }
        }
        Ok(DictionaryLayer {
            name: name.to_string(),
            branch,
            parents,
            stacks,
            params,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn parents(&self) -> &[Parent] {
        &self.parents
    }

    pub fn stacks(&self) -> &[KernelStack] {
        &self.stacks
    }

    /// The single stack of a single-parent layer.
    pub fn stack(&self) -> &KernelStack {
        &self.stacks[0]
    }

    pub fn params(&self) -> &LcaParams {
        &self.params
    }

    pub(crate) fn stacks_mut(&mut self) -> &mut [KernelStack] {
        &mut self.stacks
    }
}

/// Shapes of the raw external signals, one per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalShapes {
    pub vision: Vec<usize>,
    pub text: Vec<usize>,
}

/// A validated layer DAG plus the global solver settings.
#[derive(Debug, Clone)]
pub struct LayerGraph {
    layers: Vec<DictionaryLayer>,
    feedback_enabled: bool,
    feedback_scale: f64,
    n_iterations: usize,
    external: ExternalShapes,
    /// For each layer, its unique child and this layer's slot among the
    /// child's parents; the sink has none.
    child: Vec<Option<(usize, usize)>>,
    /// Bottom-up order: every layer appears after all of its parents.
    order: Vec<usize>,
    /// Activation-map shape per layer.
    shapes: Vec<Vec<usize>>,
}

impl LayerGraph {
    pub fn new(
        layers: Vec<DictionaryLayer>,
        feedback_enabled: bool,
        feedback_scale: f64,
        n_iterations: usize,
        external: ExternalShapes,
    ) -> DscResult<LayerGraph> {
        if layers.is_empty() {
            return Err(DscError::Graph("graph has no layers".to_string()));
        }
        if n_iterations == 0 {
            return Err(DscError::Graph("n_iterations must be at least 1".to_string()));
        }
        if !(feedback_scale.is_finite() && feedback_scale >= 0.0) {
            return Err(DscError::Graph(format!(
                "feedback_scale must be finite and >= 0, got {}",
                feedback_scale
            )));
        }
        for (i, a) in layers.iter().enumerate() {
            for b in &layers[i + 1..] {
                if a.name == b.name {
                    return Err(DscError::Graph(format!("duplicate layer name {}", a.name)));
                }
            }
        }

        let index_of = |name: &str| layers.iter().position(|l| l.name == name);

        // Child map; doubles as the no-skip-feedback check.
        let mut child: Vec<Option<(usize, usize)>> = vec![None; layers.len()];
        for (ci, layer) in layers.iter().enumerate() {
            for (slot, p) in layer.parents.iter().enumerate() {
                if let ParentSource::Layer(pname) = &p.source {
                    let pi = index_of(pname).ok_or_else(|| {
                        DscError::Graph(format!(
                            "layer {} names unknown parent {}",
                            layer.name, pname
                        ))
                    })?;
                    if child[pi].is_some() {
                        return Err(DscError::Graph(format!(
                            "layer {} feeds more than one child",
                            pname
                        )));
                    }
                    child[pi] = Some((ci, slot));
                }
            }
        }

        let sinks: Vec<usize> = (0..layers.len()).filter(|&i| child[i].is_none()).collect();
        if sinks.len() != 1 {
            let names: Vec<&str> = sinks.iter().map(|&i| layers[i].name.as_str()).collect();
            return Err(DscError::Graph(format!(
                "graph must have exactly one top layer, found [{}]",
                names.join(", ")
            )));
        }
        let sink = sinks[0];

        let joints: Vec<usize> = (0..layers.len())
            .filter(|&i| layers[i].branch == Branch::Joint)
            .collect();
        if joints.len() > 1 {
            return Err(DscError::Graph(
                "graph has more than one joint layer".to_string(),
            ));
        }
        if let Some(&j) = joints.first() {
            if j != sink {
                return Err(DscError::Graph(format!(
                    "joint layer {} must be the top of the graph",
                    layers[j].name
                )));
            }
        } else if layers[sink].parents.len() > 1 {
            return Err(DscError::Graph(format!(
                "multi-parent top layer {} must be tagged joint",
                layers[sink].name
            )));
        }

        // Branch consistency and one external leaf per modality.
        let mut external_leaf = [None::<usize>; 2];
        for (i, layer) in layers.iter().enumerate() {
            for p in &layer.parents {
                match &p.source {
                    ParentSource::External => {
                        let m = match layer.branch {
                            Branch::Vision => 0,
                            Branch::Text => 1,
                            Branch::Joint => unreachable!("checked in DictionaryLayer::new"),
                        };
                        if let Some(prev) = external_leaf[m] {
                            return Err(DscError::Graph(format!(
                                "layers {} and {} both read the external {} input",
                                layers[prev].name, layer.name, layer.branch
                            )));
                        }
                        external_leaf[m] = Some(i);
                    }
                    ParentSource::Layer(pname) => {
                        let pi = index_of(pname).expect("resolved above");
                        let pb = layers[pi].branch;
                        if pb == Branch::Joint {
                            return Err(DscError::Graph(format!(
                                "layer {} cannot read from joint layer {}",
                                layer.name, pname
                            )));
                        }
                        if layer.branch != Branch::Joint && pb != layer.branch {
                            return Err(DscError::Graph(format!(
                                "{} layer {} cannot read from {} layer {}",
                                layer.branch, layer.name, pb, pname
                            )));
                        }
                    }
                }
            }
        }

        // Bottom-up order; anything left over sits on a cycle.
        let mut order = Vec::with_capacity(layers.len());
        let mut placed = vec![false; layers.len()];
        while order.len() < layers.len() {
            let mut progressed = false;
            for (i, layer) in layers.iter().enumerate() {
                if placed[i] {
                    continue;
                }
                let ready = layer.parents.iter().all(|p| match &p.source {
                    ParentSource::External => true,
                    ParentSource::Layer(pname) => placed[index_of(pname).expect("resolved")],
                });
                if ready {
                    placed[i] = true;
                    order.push(i);
                    progressed = true;
                }
            }
            if !progressed {
                let stuck: Vec<&str> = (0..layers.len())
                    .filter(|&i| !placed[i])
                    .map(|i| layers[i].name.as_str())
                    .collect();
                return Err(DscError::Graph(format!(
                    "cycle among layers [{}]",
                    stuck.join(", ")
                )));
            }
        }

        // Geometry: walk bottom-up, requiring one shared activation shape
        // per layer across all of its parent slots.
        let mut shapes: Vec<Vec<usize>> = vec![Vec::new(); layers.len()];
        for &i in &order {
            let layer = &layers[i];
            let mut shape: Option<Vec<usize>> = None;
            for (slot, p) in layer.parents.iter().enumerate() {
                let in_shape: &[usize] = match &p.source {
                    ParentSource::External => match layer.branch {
                        Branch::Vision => &external.vision,
                        Branch::Text => &external.text,
                        Branch::Joint => unreachable!(),
                    },
                    ParentSource::Layer(pname) => &shapes[index_of(pname).expect("resolved")],
                };
                let out = layer.stacks[slot].output_shape(in_shape).map_err(|e| {
                    DscError::Graph(format!("layer {} slot {}: {}", layer.name, slot, e))
                })?;
                match &shape {
                    None => shape = Some(out),
                    Some(existing) if *existing != out => {
                        return Err(DscError::Graph(format!(
                            "layer {} parents imply different activation shapes {:?} vs {:?}",
                            layer.name, existing, out
                        )));
                    }
                    _ => {}
                }
            }
            shapes[i] = shape.expect("at least one parent");
        }

        Ok(LayerGraph {
            layers,
            feedback_enabled,
            feedback_scale,
            n_iterations,
            external,
            child,
            order,
            shapes,
        })
    }

    pub fn layers(&self) -> &[DictionaryLayer] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> DscResult<&DictionaryLayer> {
        self.layers
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| DscError::Graph(format!("no layer named {}", name)))
    }

    pub(crate) fn index_of(&self, name: &str) -> DscResult<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| DscError::Graph(format!("no layer named {}", name)))
    }

    pub fn sink(&self) -> &DictionaryLayer {
        let i = (0..self.layers.len())
            .find(|&i| self.child[i].is_none())
            .expect("validated");
        &self.layers[i]
    }

    pub fn activation_shape(&self, name: &str) -> DscResult<&[usize]> {
        Ok(self.shapes[self.index_of(name)?].as_slice())
    }

    pub fn n_iterations(&self) -> usize {
        self.n_iterations
    }

    pub fn feedback_enabled(&self) -> bool {
        self.feedback_enabled
    }

    pub fn set_feedback_enabled(&mut self, enabled: bool) {
        self.feedback_enabled = enabled;
    }

    pub fn feedback_scale(&self) -> f64 {
        self.feedback_scale
    }

    pub fn external_shapes(&self) -> &ExternalShapes {
        &self.external
    }

    pub(crate) fn layer_mut(&mut self, idx: usize) -> &mut DictionaryLayer {
        &mut self.layers[idx]
    }

    pub(crate) fn bottom_up_order(&self) -> &[usize] {
        &self.order
    }

    /// Which layers run for a given input: a modality chain runs when its
    /// external signal is present, the joint layer when any parent runs.
    fn active_flags(&self, input: &NetworkInput) -> Vec<bool> {
        let mut active = vec![false; self.layers.len()];
        for &i in &self.order {
            active[i] = match self.layers[i].branch {
                Branch::Vision => input.vision.is_some(),
                Branch::Text => input.text.is_some(),
                Branch::Joint => self.layers[i].parents.iter().any(|p| match &p.source {
                    ParentSource::Layer(pname) => {
                        active[self.index_of(pname).expect("validated")]
                    }
                    ParentSource::External => unreachable!(),
                }),
            };
        }
        active
    }

    fn validate_input(&self, input: &NetworkInput) -> DscResult<Vec<bool>> {
        let has_vision_chain = self.layers.iter().any(|l| l.branch == Branch::Vision);
        let has_text_chain = self.layers.iter().any(|l| l.branch == Branch::Text);
        if let Some(v) = &input.vision {
            if !has_vision_chain {
                return Err(DscError::Precondition(
                    "a vision input was given but the graph has no vision branch".to_string(),
                ));
            }
            if v.shape() != self.external.vision.as_slice() {
                return Err(DscError::Geometry(format!(
                    "vision input shape {:?} does not match configured {:?}",
                    v.shape(),
                    self.external.vision
                )));
            }
        }
        if let Some(t) = &input.text {
            if !has_text_chain {
                return Err(DscError::Precondition(
                    "a text input was given but the graph has no text branch".to_string(),
                ));
            }
            if t.shape() != self.external.text.as_slice() {
                return Err(DscError::Geometry(format!(
                    "text input shape {:?} does not match configured {:?}",
                    t.shape(),
                    self.external.text
                )));
            }
        }
        let active = self.active_flags(input);
        if !active.iter().any(|&b| b) {
            return Err(DscError::Precondition(
                "no present modality feeds this graph".to_string(),
            ));
        }
        Ok(active)
    }
}

/// External signals for one inference run; an absent modality is `None`.
#[derive(Debug, Clone)]
pub struct NetworkInput {
    pub vision: Option<Tensor>,
    pub text: Option<Tensor>,
}

impl NetworkInput {
    pub fn both(vision: Tensor, text: Tensor) -> NetworkInput {
        NetworkInput {
            vision: Some(vision),
            text: Some(text),
        }
    }

    pub fn vision_only(vision: Tensor) -> NetworkInput {
        NetworkInput {
            vision: Some(vision),
            text: None,
        }
    }

    pub fn text_only(text: Tensor) -> NetworkInput {
        NetworkInput {
            vision: None,
            text: Some(text),
        }
    }
}

/// Frozen result of a network solve.
#[derive(Debug, Clone)]
pub struct NetworkState {
    names: Vec<String>,
    states: Vec<LayerState>,
    traces: Vec<Vec<EnergyPoint>>,
    active: Vec<bool>,
    iteration: usize,
}

impl NetworkState {
    fn index_of(&self, name: &str) -> DscResult<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DscError::Graph(format!("no layer named {}", name)))
    }

    pub fn state(&self, name: &str) -> DscResult<&LayerState> {
        Ok(&self.states[self.index_of(name)?])
    }

    /// The sparse code: the thresholded membrane of the named layer.
    pub fn extract_code(&self, name: &str) -> DscResult<&Tensor> {
        Ok(self.states[self.index_of(name)?].a())
    }

    /// Energy per iteration; entry 0 is the empty-code baseline, entry k
    /// the energy after k steps. Empty for layers skipped as absent.
    pub fn trace(&self, name: &str) -> DscResult<&[EnergyPoint]> {
        Ok(&self.traces[self.index_of(name)?])
    }

    pub fn is_active(&self, name: &str) -> DscResult<bool> {
        Ok(self.active[self.index_of(name)?])
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub(crate) fn all_states(&self) -> &[LayerState] {
        &self.states
    }
}

/// Residual of the child's reconstruction of its parent's membrane; with
/// feedback on, the parent subtracts this as inhibitory drive.
pub fn topdown_residual(
    u_parent: &Tensor,
    child_stack: &KernelStack,
    a_child: &Tensor,
) -> DscResult<Tensor> {
    u_parent.sub(&child_stack.conv_transpose(a_child)?)
}

/// Reconstruction targets for layer `idx` given a snapshot of all states:
/// the external signal for leaf slots, the parent's membrane otherwise.
/// Slots on absent branches are dropped.
fn resolve_inputs<'a>(
    graph: &'a LayerGraph,
    input: &'a NetworkInput,
    states: &'a [LayerState],
    active: &[bool],
    idx: usize,
) -> DscResult<Vec<BranchInput<'a>>> {
    let layer = &graph.layers[idx];
    let mut inputs = Vec::with_capacity(layer.parents.len());
    for (slot, p) in layer.parents.iter().enumerate() {
        let x: &Tensor = match &p.source {
            ParentSource::External => match layer.branch {
                Branch::Vision => match &input.vision {
                    Some(v) => v,
                    None => continue,
                },
                Branch::Text => match &input.text {
                    Some(t) => t,
                    None => continue,
                },
                Branch::Joint => unreachable!("joint layers have no external parent"),
            },
            ParentSource::Layer(pname) => {
                let pi = graph.index_of(pname)?;
                if !active[pi] {
                    continue;
                }
                states[pi].u()
            }
        };
        inputs.push(BranchInput {
            x,
            stack: &layer.stacks[slot],
            scale: p.scale,
        });
    }
    if inputs.is_empty() {
        return Err(DscError::Graph(format!(
            "layer {} has no present parent input",
            layer.name
        )));
    }
    Ok(inputs)
}

/// The reconstruction targets the named layer saw at the end of a solve.
pub fn final_layer_inputs<'a>(
    graph: &'a LayerGraph,
    input: &'a NetworkInput,
    net: &'a NetworkState,
    name: &str,
) -> DscResult<Vec<BranchInput<'a>>> {
    let idx = graph.index_of(name)?;
    if !net.active[idx] {
        return Err(DscError::Precondition(format!(
            "layer {} was absent in this solve",
            name
        )));
    }
    resolve_inputs(graph, input, &net.states, &net.active, idx)
}

/// Sup-norm distance of each active layer from its drive fixed point.
pub fn network_fixed_point_residuals(
    graph: &LayerGraph,
    input: &NetworkInput,
    net: &NetworkState,
) -> DscResult<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (idx, layer) in graph.layers.iter().enumerate() {
        if !net.active[idx] {
            continue;
        }
        let inputs = resolve_inputs(graph, input, &net.states, &net.active, idx)?;
        let r = fixed_point_residual_multi(&net.states[idx], &inputs)?;
        out.push((layer.name.clone(), r));
    }
    Ok(out)
}

/// Energy the named layer would have with an empty code, against the
/// reconstruction targets it saw at the end of the solve.
pub fn empty_code_energy(
    graph: &LayerGraph,
    input: &NetworkInput,
    net: &NetworkState,
    name: &str,
) -> DscResult<f64> {
    let idx = graph.index_of(name)?;
    let inputs = final_layer_inputs(graph, input, net, name)?;
    let zero = Tensor::zeros(&graph.shapes[idx]);
    Ok(energy_multi(&inputs, &zero, graph.layers[idx].params.lambda)?.total())
}

/// Runs the coupled dynamics of every present layer for the graph's
/// iteration budget, all layers stepping synchronously from zero states.
pub fn solve_network(graph: &LayerGraph, input: &NetworkInput) -> DscResult<NetworkState> {
    let active = graph.validate_input(input)?;
    let n = graph.layers.len();
    let mut states: Vec<LayerState> = (0..n)
        .map(|i| LayerState::zeros(&graph.shapes[i]))
        .collect();
    let mut traces: Vec<Vec<EnergyPoint>> = (0..n)
        .map(|i| {
            if active[i] {
                Vec::with_capacity(graph.n_iterations + 1)
            } else {
                Vec::new()
            }
        })
        .collect();

    for iteration in 1..=graph.n_iterations {
        let prev = states.clone();
        for idx in 0..n {
            if !active[idx] {
                continue;
            }
            let layer = &graph.layers[idx];
            let inputs = resolve_inputs(graph, input, &prev, &active, idx)?;
            let feedback: Option<Tensor> = match graph.child[idx] {
                Some((ci, slot)) if graph.feedback_enabled && active[ci] => {
                    let child = &graph.layers[ci];
                    let r = topdown_residual(prev[idx].u(), &child.stacks[slot], prev[ci].a())?;
                    let weight = graph.feedback_scale * child.parents[slot].scale;
                    Some(if weight == 1.0 { r } else { r.scale(weight) })
                }
                _ => None,
            };
            let outcome = lca_step_multi(
                &prev[idx],
                &inputs,
                feedback.as_ref(),
                &layer.params,
                &layer.name,
                iteration,
            )?;
            traces[idx].push(outcome.energy_of_previous);
            states[idx] = outcome.state;
        }
    }

    for idx in 0..n {
        if !active[idx] {
            continue;
        }
        let inputs = resolve_inputs(graph, input, &states, &active, idx)?;
        traces[idx].push(energy_multi(
            &inputs,
            states[idx].a(),
            graph.layers[idx].params.lambda,
        )?);
    }

    Ok(NetworkState {
        names: graph.layers.iter().map(|l| l.name.clone()).collect(),
        states,
        traces,
        active,
        iteration: graph.n_iterations,
    })
}
