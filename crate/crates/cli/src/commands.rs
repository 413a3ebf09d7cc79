//! The operations behind the `dsc` verbs, separated from argument
//! parsing so they can be driven in-process by tests.
//!
//! Every command returns its human-readable report as a string; the
//! binary prints it. File outputs (checkpoints, caches, CSVs, PNGs) go
//! through the owning modules, so their formats are identical whether
//! produced here or through the library.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dsc_core::analysis::{
    activity_triggered_average, class_average_activation, export_features,
    find_invariant_neurons, generate_missing_modality, sparsity_fraction,
    CentroidClassifier,
};
use dsc_core::data::{
    generate_synthetic_faces, generate_toy_corpus, load_image_corpus, write_png,
};
use dsc_core::hierarchy::{solve_network, ParentSource};
use dsc_core::learning::{metrics_csv, train};
use dsc_core::{Branch, Corpus, DscError, DscResult, LayerGraph, NetworkInput, Sample};

use crate::cache::{is_corpus_cache, load_corpus, save_corpus};
use crate::checkpoint::Checkpoint;
use crate::config::ModelConfig;

/// Where a command's corpus comes from: a file (cache or manifest) or
/// the seeded toy generator. Exactly one must be given.
#[derive(Debug, Clone, Default)]
pub struct CorpusSource {
    pub path: Option<PathBuf>,
    pub toy_seed: Option<u64>,
}

impl CorpusSource {
    pub fn resolve(&self) -> DscResult<Corpus> {
        match (&self.path, self.toy_seed) {
            (Some(path), None) => {
                if is_corpus_cache(path) {
                    load_corpus(path)
                } else {
                    // a manifest: image paths are relative to its directory
                    let dir = match path.parent() {
                        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                        _ => PathBuf::from("."),
                    };
                    load_image_corpus(&dir, path)
                }
            }
            (None, Some(seed)) => generate_toy_corpus(seed),
            _ => Err(DscError::Precondition(
                "pass exactly one corpus source: --corpus PATH or --toy-seed N".to_string(),
            )),
        }
    }
}

/// Which sample of the corpus a single-input command works on.
#[derive(Debug, Clone, Copy)]
pub enum SampleRef {
    Index(usize),
    /// The corpus's held-out ambiguous sample.
    Probe,
}

fn pick_sample<'a>(corpus: &'a Corpus, which: SampleRef) -> DscResult<&'a Sample> {
    match which {
        SampleRef::Probe => corpus.probe().ok_or_else(|| {
            DscError::Precondition("this corpus has no probe sample".to_string())
        }),
        SampleRef::Index(i) => corpus.samples().get(i).ok_or_else(|| {
            DscError::Precondition(format!(
                "sample index {} out of range for a corpus of {}",
                i,
                corpus.len()
            ))
        }),
    }
}

fn write_text(path: &Path, content: &str) -> DscResult<()> {
    fs::write(path, content).map_err(|e| DscError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn cmd_train(
    config_path: &Path,
    source: &CorpusSource,
    out: &Path,
    metrics: Option<&Path>,
) -> DscResult<String> {
    let config = ModelConfig::from_file(config_path)?;
    let corpus = source.resolve()?;
    let mut ck = Checkpoint::initial(config)?;
    let inputs: Vec<NetworkInput> = corpus
        .train_samples()
        .iter()
        .map(|s| s.network_input(true, true))
        .collect();
    let schedule = ck.config.schedule();
    let rows = train(&mut ck.graph, &inputs, &schedule)?;
    ck.epochs_completed = schedule.epochs as u64;
    ck.inputs_presented = (schedule.epochs * inputs.len()) as u64;
    ck.save(out)?;

    let metrics_path = match metrics {
        Some(p) => p.to_path_buf(),
        None => out.with_extension("metrics.csv"),
    };
    write_text(&metrics_path, &metrics_csv(&rows))?;

    let mut report = String::new();
    writeln!(
        report,
        "trained {} epochs over {} inputs ({} presentations)",
        schedule.epochs,
        inputs.len(),
        ck.inputs_presented
    )
    .unwrap();
    writeln!(report, "checkpoint: {}", out.display()).unwrap();
    writeln!(report, "metrics: {} ({} rows)", metrics_path.display(), rows.len()).unwrap();
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    pub with_vision: bool,
    pub with_text: bool,
    pub no_feedback: bool,
    /// Classify the flattened code at this layer against train-split
    /// centroids (computed with both modalities present).
    pub centroid_layer: Option<String>,
    /// Dump nonzero coefficients of every active layer to this CSV.
    pub codes_out: Option<PathBuf>,
}

fn fit_centroids(graph: &LayerGraph, corpus: &Corpus, layer: &str) -> DscResult<CentroidClassifier> {
    let mut labeled: Vec<(&str, Vec<f64>)> = Vec::new();
    for sample in corpus.train_samples() {
        let net = solve_network(graph, &sample.network_input(true, true))?;
        labeled.push((sample.label(), net.extract_code(layer)?.data().to_vec()));
    }
    CentroidClassifier::fit(&labeled)
}

pub fn cmd_infer(
    checkpoint: &Path,
    source: &CorpusSource,
    which: SampleRef,
    opts: &InferOptions,
) -> DscResult<String> {
    if !opts.with_vision && !opts.with_text {
        return Err(DscError::Precondition(
            "nothing to infer: both modalities removed".to_string(),
        ));
    }
    let mut ck = Checkpoint::load(checkpoint)?;
    if opts.no_feedback {
        ck.graph.set_feedback_enabled(false);
    }
    let corpus = source.resolve()?;
    let sample = pick_sample(&corpus, which)?;
    let input = sample.network_input(opts.with_vision, opts.with_text);
    let net = solve_network(&ck.graph, &input)?;

    let mut report = String::new();
    writeln!(
        report,
        "sample '{}' | vision {} | text {} | feedback {} | {} iterations",
        sample.label(),
        if opts.with_vision { "on" } else { "off" },
        if opts.with_text { "on" } else { "off" },
        if ck.graph.feedback_enabled() { "on" } else { "off" },
        ck.graph.n_iterations()
    )
    .unwrap();
    for layer in ck.graph.layers() {
        if !net.is_active(layer.name())? {
            continue;
        }
        let code = net.extract_code(layer.name())?;
        let e = net.trace(layer.name())?.last().copied().ok_or_else(|| {
            DscError::Precondition(format!("layer {} has an empty trace", layer.name()))
        })?;
        writeln!(
            report,
            "layer {}: sparsity {:.6}, reconstruction {:.6}, sparsity_cost {:.6}, energy {:.6}",
            layer.name(),
            sparsity_fraction(code),
            e.reconstruction,
            e.sparsity,
            e.total()
        )
        .unwrap();
    }

    if let Some(layer) = &opts.centroid_layer {
        let classifier = fit_centroids(&ck.graph, &corpus, layer)?;
        let query = net.extract_code(layer)?.data().to_vec();
        let (nearest, mut distances) = classifier.classify(&query)?;
        distances.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        writeln!(report, "centroid distances at {} (train split):", layer).unwrap();
        for (label, d) in &distances {
            writeln!(report, "  {}: {:.6}", label, d).unwrap();
        }
        writeln!(report, "nearest: {}", nearest).unwrap();
    }

    if let Some(path) = &opts.codes_out {
        let mut csv = String::from("layer,index,value\n");
        for layer in ck.graph.layers() {
            if !net.is_active(layer.name())? {
                continue;
            }
            let code = net.extract_code(layer.name())?;
            for (i, &v) in code.data().iter().enumerate() {
                if v != 0.0 {
                    writeln!(csv, "{},{},{}", layer.name(), i, v).unwrap();
                }
            }
        }
        write_text(path, &csv)?;
        writeln!(report, "codes: {}", path.display()).unwrap();
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub enum AnalyzeWhat {
    /// Per-class average pooled activation at a layer, over the test split.
    Activations { layer: String, out: Option<PathBuf> },
    /// Activity-triggered average inputs for one neuron, written as PNGs.
    Ata {
        layer: String,
        neuron: usize,
        out_dir: PathBuf,
    },
    /// Joint-layer neurons selective for a class under either modality
    /// alone. Defaults to the most frequent class in the corpus.
    Invariants { label: Option<String>, ratio: f64 },
    /// Flattened per-sample codes at a layer, as CSV.
    Export { layer: String, out: PathBuf },
    /// Mean code density and reconstruction energy per layer, test split.
    Sparsity,
}

pub fn cmd_analyze(checkpoint: &Path, source: &CorpusSource, what: &AnalyzeWhat) -> DscResult<String> {
    let ck = Checkpoint::load(checkpoint)?;
    let corpus = source.resolve()?;
    let mut report = String::new();
    match what {
        AnalyzeWhat::Activations { layer, out } => {
            let width: usize = ck.graph.activation_shape(layer)?[0];
            let mut csv = String::from("label");
            for i in 0..width {
                write!(csv, ",f{}", i).unwrap();
            }
            csv.push('\n');
            let mut by_class: BTreeMap<&str, Vec<NetworkInput>> = BTreeMap::new();
            for s in corpus.test_samples() {
                by_class
                    .entry(s.label())
                    .or_default()
                    .push(s.network_input(true, true));
            }
            if by_class.is_empty() {
                return Err(DscError::Precondition(
                    "activation report needs a nonempty test split".to_string(),
                ));
            }
            for (label, inputs) in &by_class {
                let means = class_average_activation(&ck.graph, inputs, layer)?;
                write!(csv, "{}", label).unwrap();
                for m in means {
                    write!(csv, ",{}", m).unwrap();
                }
                csv.push('\n');
            }
            match out {
                Some(path) => {
                    write_text(path, &csv)?;
                    writeln!(report, "activations at {}: {}", layer, path.display()).unwrap();
                }
                None => report.push_str(&csv),
            }
        }
        AnalyzeWhat::Ata { layer, neuron, out_dir } => {
            let (vision, text) = activity_triggered_average(&ck.graph, &corpus, layer, *neuron)?;
            fs::create_dir_all(out_dir).map_err(|e| DscError::Io {
                path: out_dir.display().to_string(),
                message: e.to_string(),
            })?;
            let v_path = out_dir.join(format!("ata_{}_{}_vision.png", layer, neuron));
            let t_path = out_dir.join(format!("ata_{}_{}_text.png", layer, neuron));
            write_png(&v_path, &vision)?;
            write_png(&t_path, &text)?;
            writeln!(report, "ata for {} neuron {}:", layer, neuron).unwrap();
            writeln!(report, "  vision: {}", v_path.display()).unwrap();
            writeln!(report, "  text: {}", t_path.display()).unwrap();
        }
        AnalyzeWhat::Invariants { label, ratio } => {
            let target = match label {
                Some(l) => l.clone(),
                // most frequent class; ties break to the first name
                None => corpus
                    .class_counts()
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                    .map(|(l, _)| l)
                    .ok_or_else(|| {
                        DscError::Precondition("corpus has no samples".to_string())
                    })?,
            };
            let profiles = find_invariant_neurons(&ck.graph, &corpus, &target, *ratio)?;
            writeln!(
                report,
                "invariant neurons for '{}' at ratio >= {}: {}",
                target,
                ratio,
                profiles.len()
            )
            .unwrap();
            for p in &profiles {
                writeln!(
                    report,
                    "  neuron {}: image_only {:.6}/{:.6}, text_only {:.6}/{:.6}, both {:.6}/{:.6}, selectivity {:.3}",
                    p.neuron,
                    p.image_only.target,
                    p.image_only.other,
                    p.text_only.target,
                    p.text_only.other,
                    p.both.target,
                    p.both.other,
                    p.selectivity
                )
                .unwrap();
            }
        }
        AnalyzeWhat::Export { layer, out } => {
            export_features(&ck.graph, &corpus, layer, out)?;
            writeln!(
                report,
                "exported {} rows of {} codes: {}",
                corpus.len(),
                layer,
                out.display()
            )
            .unwrap();
        }
        AnalyzeWhat::Sparsity => {
            let test = corpus.test_samples();
            if test.is_empty() {
                return Err(DscError::Precondition(
                    "sparsity report needs a nonempty test split".to_string(),
                ));
            }
            let names: Vec<String> =
                ck.graph.layers().iter().map(|l| l.name().to_string()).collect();
            let mut density = vec![0.0; names.len()];
            let mut recon = vec![0.0; names.len()];
            for s in &test {
                let net = solve_network(&ck.graph, &s.network_input(true, true))?;
                for (i, name) in names.iter().enumerate() {
                    density[i] += sparsity_fraction(net.extract_code(name)?);
                    recon[i] += net
                        .trace(name)?
                        .last()
                        .map(|e| e.reconstruction)
                        .unwrap_or(0.0);
                }
            }
            let n = test.len() as f64;
            for (i, name) in names.iter().enumerate() {
                writeln!(
                    report,
                    "layer {}: mean_sparsity {:.6}, mean_reconstruction {:.6}",
                    name,
                    density[i] / n,
                    recon[i] / n
                )
                .unwrap();
            }
        }
    }
    Ok(report)
}

pub fn cmd_generate(
    checkpoint: &Path,
    source: &CorpusSource,
    which: SampleRef,
    with_vision: bool,
    with_text: bool,
    out_dir: &Path,
) -> DscResult<String> {
    if with_vision == with_text {
        return Err(DscError::Precondition(
            "generation needs exactly one modality; pass exactly one of --no-image / --no-text"
                .to_string(),
        ));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let corpus = source.resolve()?;
    let sample = pick_sample(&corpus, which)?;
    let input = sample.network_input(with_vision, with_text);
    let generated = generate_missing_modality(&ck.graph, &input)?;

    // reconstruction of the branch we did see, from its leaf layer's code
    let present = if with_vision { Branch::Vision } else { Branch::Text };
    let net = solve_network(&ck.graph, &input)?;
    let leaf = ck
        .graph
        .layers()
        .iter()
        .find(|l| {
            l.branch() == present && l.parents().iter().any(|p| p.source == ParentSource::External)
        })
        .ok_or_else(|| {
            DscError::Graph(format!("graph has no external {} leaf", present))
        })?;
    let slot = leaf
        .parents()
        .iter()
        .position(|p| p.source == ParentSource::External)
        .expect("leaf was selected for having an external parent");
    let recon = leaf.stacks()[slot].conv_transpose(net.extract_code(leaf.name())?)?;

    fs::create_dir_all(out_dir).map_err(|e| DscError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let (gen_name, recon_name) = if with_vision {
        ("generated_text.png", "reconstructed_image.png")
    } else {
        ("generated_image.png", "reconstructed_text.png")
    };
    let gen_path = out_dir.join(gen_name);
    let recon_path = out_dir.join(recon_name);
    write_png(&gen_path, &generated)?;
    write_png(&recon_path, &recon)?;

    let mut report = String::new();
    writeln!(
        report,
        "sample '{}' presented {} only",
        sample.label(),
        present
    )
    .unwrap();
    writeln!(report, "generated ({:?}): {}", generated.shape(), gen_path.display()).unwrap();
    writeln!(report, "reconstruction: {}", recon_path.display()).unwrap();
    Ok(report)
}

fn corpus_summary(corpus: &Corpus, out: &Path) -> String {
    let mut report = String::new();
    let counts = corpus.class_counts();
    writeln!(
        report,
        "{} samples, {} classes, {} train / {} test{}",
        corpus.len(),
        counts.len(),
        corpus.train_samples().len(),
        corpus.test_samples().len(),
        if corpus.probe().is_some() { ", probe attached" } else { "" }
    )
    .unwrap();
    for (label, n) in counts {
        writeln!(report, "  {}: {}", label, n).unwrap();
    }
    writeln!(report, "corpus: {}", out.display()).unwrap();
    report
}

pub fn cmd_toy_gen(seed: u64, out: &Path) -> DscResult<String> {
    let corpus = generate_toy_corpus(seed)?;
    save_corpus(&corpus, out)?;
    Ok(corpus_summary(&corpus, out))
}

pub fn cmd_faces_gen(
    classes: usize,
    per_class: usize,
    multiplier: usize,
    seed: u64,
    out: &Path,
) -> DscResult<String> {
    let corpus = generate_synthetic_faces(classes, per_class, multiplier, seed)?;
    save_corpus(&corpus, out)?;
    Ok(corpus_summary(&corpus, out))
}
