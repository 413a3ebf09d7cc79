//! Read-only measurement over frozen models.
//!
//! Everything here runs inference and inspects the resulting codes: class
//! activation statistics, modality-invariant neuron detection at the joint
//! layer, activity-triggered averages, nearest-centroid probes, feature
//! export, and generation of an absent modality by decoding top-down
//! through its branch. Nothing in this module mutates a dictionary.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{Corpus, Sample};
use crate::error::{DscError, DscResult};
use crate::hierarchy::{
    solve_network, Branch, LayerGraph, NetworkInput, ParentSource,
};
use crate::lca::threshold_with;
use crate::tensor::Tensor;

/// Floor for "other"-class means when forming selectivity ratios.
pub const SELECTIVITY_EPS: f64 = 1e-9;

/// Fraction of strictly nonzero entries in a code.
pub fn sparsity_fraction(code: &Tensor) -> f64 {
    code.nonzero_fraction()
}

/// Collapses a `[features, h, w]` code to one mean per feature.
pub fn pooled_code(code: &Tensor) -> Vec<f64> {
    let shape = code.shape();
    let (f_n, positions) = (shape[0], shape[1] * shape[2]);
    (0..f_n)
        .map(|f| {
            code.data()[f * positions..(f + 1) * positions]
                .iter()
                .sum::<f64>()
                / positions as f64
        })
        .collect()
}

/// Solves `input` and returns the named layer's spatially pooled code.
pub fn pooled_activation(
    graph: &LayerGraph,
    input: &NetworkInput,
    layer: &str,
) -> DscResult<Vec<f64>> {
    let net = solve_network(graph, input)?;
    Ok(pooled_code(net.extract_code(layer)?))
}

/// Per-neuron mean of the pooled code over a set of presentations.
pub fn class_average_activation(
    graph: &LayerGraph,
    inputs: &[NetworkInput],
    layer: &str,
) -> DscResult<Vec<f64>> {
    if inputs.is_empty() {
        return Err(DscError::Precondition(
            "class_average_activation needs at least one input".to_string(),
        ));
    }
    let mut mean: Vec<f64> = Vec::new();
    for input in inputs {
        let pooled = pooled_activation(graph, input, layer)?;
        if mean.is_empty() {
            mean = vec![0.0; pooled.len()];
        }
        for (m, p) in mean.iter_mut().zip(&pooled) {
            *m += p;
        }
    }
    for m in mean.iter_mut() {
        *m /= inputs.len() as f64;
    }
    Ok(mean)
}

/// Mean activation of one neuron class versus the rest, under one
/// presentation condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionMeans {
    pub target: f64,
    pub other: f64,
}

impl ConditionMeans {
    fn ratio(&self) -> f64 {
        self.target / self.other.max(SELECTIVITY_EPS)
    }
}

/// One joint-layer neuron's statistics for a target class.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationProfile {
    pub neuron: usize,
    pub image_only: ConditionMeans,
    pub text_only: ConditionMeans,
    pub both: ConditionMeans,
    /// The smaller of the image-only and text-only selectivity ratios;
    /// a neuron is modality-invariant for the class when this clears the
    /// caller's threshold, since both single-modality ratios then do.
    pub selectivity: f64,
}

fn mean_pooled_codes(
    graph: &LayerGraph,
    layer: &str,
    samples: &[&Sample],
    with_vision: bool,
    with_text: bool,
) -> DscResult<Vec<f64>> {
    let inputs: Vec<NetworkInput> = samples
        .iter()
        .map(|s| s.network_input(with_vision, with_text))
        .collect();
    class_average_activation(graph, &inputs, layer)
}

/// Finds joint-layer neurons whose selectivity for `target_label` clears
/// `ratio_threshold` under image-only AND text-only presentation of the
/// corpus test split. Profiles come back in neuron order.
pub fn find_invariant_neurons(
    graph: &LayerGraph,
    corpus: &Corpus,
    target_label: &str,
    ratio_threshold: f64,
) -> DscResult<Vec<ActivationProfile>> {
    let sink = graph.sink();
    if sink.branch() != Branch::Joint {
        return Err(DscError::Graph(
            "invariant-neuron analysis needs a joint sink layer".to_string(),
        ));
    }
    let test = corpus.test_samples();
    let targets: Vec<&Sample> = test
        .iter()
        .copied()
        .filter(|s| s.label() == target_label)
        .collect();
    let others: Vec<&Sample> = test
        .iter()
        .copied()
        .filter(|s| s.label() != target_label)
        .collect();
    if targets.is_empty() || others.is_empty() {
        return Err(DscError::Precondition(format!(
            "test split needs both '{}' and other items ({} vs {})",
            target_label,
            targets.len(),
            others.len()
        )));
    }
    let layer = sink.name();
    let conditions = [(true, false), (false, true), (true, true)];
    let mut means = Vec::with_capacity(conditions.len());
    for (v, t) in conditions {
        means.push(ConditionSplit {
            target: mean_pooled_codes(graph, layer, &targets, v, t)?,
            other: mean_pooled_codes(graph, layer, &others, v, t)?,
        });
    }
    let n_neurons = means[0].target.len();
    let mut out = Vec::new();
    for neuron in 0..n_neurons {
        let image_only = means[0].at(neuron);
        let text_only = means[1].at(neuron);
        let both = means[2].at(neuron);
        let selectivity = image_only.ratio().min(text_only.ratio());
        if selectivity >= ratio_threshold {
            out.push(ActivationProfile {
                neuron,
                image_only,
                text_only,
                both,
                selectivity,
            });
        }
    }
    Ok(out)
}

struct ConditionSplit {
    target: Vec<f64>,
    other: Vec<f64>,
}

impl ConditionSplit {
    fn at(&self, neuron: usize) -> ConditionMeans {
        ConditionMeans {
            target: self.target[neuron],
            other: self.other[neuron],
        }
    }
}

/// Activation-weighted mean input per modality:
/// `sum(w_n * input_n) / sum(w_n)` with `w_n` the neuron's pooled
/// activation on sample `n` presented with both modalities. Returns zero
/// tensors when the neuron never fires.
pub fn activity_triggered_average(
    graph: &LayerGraph,
    corpus: &Corpus,
    layer: &str,
    neuron: usize,
) -> DscResult<(Tensor, Tensor)> {
    if corpus.is_empty() {
        return Err(DscError::Precondition(
            "activity-triggered averaging needs a nonempty corpus".to_string(),
        ));
    }
    let n_features = graph.activation_shape(layer)?[0];
    if neuron >= n_features {
        return Err(DscError::Precondition(format!(
            "neuron {} out of range for layer {} with {} features",
            neuron, layer, n_features
        )));
    }
    let first = &corpus.samples()[0];
    let mut image = Tensor::zeros(first.image().shape());
    let mut text = Tensor::zeros(first.text().shape());
    let mut total = 0.0;
    for s in corpus.samples() {
        let w = pooled_activation(graph, &s.network_input(true, true), layer)?[neuron];
        image.add_scaled(s.image(), w)?;
        text.add_scaled(s.text(), w)?;
        total += w;
    }
    if total == 0.0 {
        return Ok((
            Tensor::zeros(first.image().shape()),
            Tensor::zeros(first.text().shape()),
        ));
    }
    Ok((image.scale(1.0 / total), text.scale(1.0 / total)))
}

/// Nearest-centroid classifier over flattened codes, one centroid per
/// label. Distances are Euclidean; ties break toward the lexicographically
/// first label because centroids are stored label-sorted and the running
/// minimum only moves on a strict improvement.
#[derive(Debug, Clone)]
pub struct CentroidClassifier {
    centroids: Vec<(String, Vec<f64>)>,
}

impl CentroidClassifier {
    pub fn fit(labeled: &[(&str, Vec<f64>)]) -> DscResult<CentroidClassifier> {
        if labeled.is_empty() {
            return Err(DscError::Precondition(
                "centroid fit needs at least one labeled code".to_string(),
            ));
        }
        let width = labeled[0].1.len();
        let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
        for (label, code) in labeled {
            if code.len() != width {
                return Err(DscError::Geometry(format!(
                    "code for '{}' has {} values, expected {}",
                    label,
                    code.len(),
                    width
                )));
            }
            let entry = sums.entry(label).or_insert_with(|| (vec![0.0; width], 0));
            for (s, v) in entry.0.iter_mut().zip(code) {
                *s += v;
            }
            entry.1 += 1;
        }
        let centroids = sums
            .into_iter()
            .map(|(label, (mut sum, n))| {
                for s in sum.iter_mut() {
                    *s /= n as f64;
                }
                (label.to_string(), sum)
            })
            .collect();
        Ok(CentroidClassifier { centroids })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.centroids.iter().map(|(l, _)| l.as_str()).collect()
    }

    /// The winning label plus every per-class distance, label-sorted.
    pub fn classify(&self, query: &[f64]) -> DscResult<(String, Vec<(String, f64)>)> {
        let width = self.centroids[0].1.len();
        if query.len() != width {
            return Err(DscError::Geometry(format!(
                "query has {} values, centroids have {}",
                query.len(),
                width
            )));
        }
        let distances: Vec<(String, f64)> = self
            .centroids
            .iter()
            .map(|(label, c)| {
                let d = c
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (label.clone(), d)
            })
            .collect();
        let mut best = 0;
        for (i, (_, d)) in distances.iter().enumerate().skip(1) {
            if *d < distances[best].1 {
                best = i;
            }
        }
        Ok((distances[best].0.clone(), distances))
    }
}

/// Reconstructs the absent modality's external signal from a one-modality
/// presentation: solve with the present branch, then decode top-down —
/// each absent layer's membrane estimate is its child's reconstruction of
/// it, thresholded into a code and synthesized one level further down.
pub fn generate_missing_modality(graph: &LayerGraph, input: &NetworkInput) -> DscResult<Tensor> {
    let (has_v, has_t) = (input.vision.is_some(), input.text.is_some());
    if has_v == has_t {
        return Err(DscError::Precondition(
            "generation needs exactly one modality present".to_string(),
        ));
    }
    let absent = if has_v { Branch::Text } else { Branch::Vision };
    let sink = graph.sink();
    if sink.branch() != Branch::Joint {
        return Err(DscError::Graph(
            "generation needs a joint sink layer".to_string(),
        ));
    }
    let net = solve_network(graph, input)?;
    let a_joint = net.extract_code(sink.name())?;

    let mut slot_and_layer = None;
    for (slot, p) in sink.parents().iter().enumerate() {
        if let ParentSource::Layer(name) = &p.source {
            if graph.layer(name)?.branch() == absent {
                slot_and_layer = Some((slot, name.to_string()));
            }
        }
    }
    let (slot, top_name) = slot_and_layer.ok_or_else(|| {
        DscError::Graph(format!("graph has no {} branch to generate", absent))
    })?;

    // The joint layer's synthesis through the absent-branch stack is the
    // membrane estimate for the top of that chain.
    let mut membrane = sink.stacks()[slot].conv_transpose(a_joint)?;
    let mut layer = graph.layer(&top_name)?;
    loop {
        let p = layer.params();
        let code = threshold_with(&membrane, p.lambda, p.threshold, p.nonnegative);
        membrane = layer.stack().conv_transpose(&code)?;
        match &layer.parents()[0].source {
            ParentSource::External => return Ok(membrane),
            ParentSource::Layer(below) => layer = graph.layer(below)?,
        }
    }
}

/// Writes one CSV row per sample: the label and the flattened code of the
/// named layer under both-modality presentation.
pub fn export_features(
    graph: &LayerGraph,
    corpus: &Corpus,
    layer: &str,
    path: &Path,
) -> DscResult<()> {
    if corpus.is_empty() {
        return Err(DscError::Precondition(
            "feature export needs a nonempty corpus".to_string(),
        ));
    }
    let width: usize = graph.activation_shape(layer)?.iter().product();
    let mut out = String::from("label");
    for i in 0..width {
        out.push_str(&format!(",f{}", i));
    }
    out.push('\n');
    for s in corpus.samples() {
        let net = solve_network(graph, &s.network_input(true, true))?;
        let code = net.extract_code(layer)?;
        out.push_str(s.label());
        for v in code.data() {
            out.push_str(&format!(",{}", v));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DscError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
