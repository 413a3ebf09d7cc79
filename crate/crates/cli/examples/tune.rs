//! Scratch measurement harness for dialing in config hyperparameters.
//! Usage: tune <config> <toy|faces> [corpus_seed] [key=value ...]
//! Overrides: fb= fbscale, dt=, iters=, epochs=, lr=, l:<layer>=lambda,
//! ps:<layer>=s1,s2 parent scales, f:<layer>=features

use std::time::Instant;

use dsc_cli::config::ModelConfig;
use dsc_core::analysis::{
    find_invariant_neurons, generate_missing_modality, pooled_code, CentroidClassifier,
};
use dsc_core::data::{generate_synthetic_faces, generate_toy_corpus, render_text};
use dsc_core::hierarchy::{
    empty_code_energy, network_fixed_point_residuals, solve_network, LayerGraph,
};
use dsc_core::learning::train;
use dsc_core::{Corpus, NetworkInput};

/// One classifier per layer, all fit from a single solve per train sample
/// under the given presentation.
fn fit_condition(
    graph: &LayerGraph,
    corpus: &Corpus,
    layers: &[&str],
    with_vision: bool,
    with_text: bool,
) -> Vec<CentroidClassifier> {
    let mut labeled: Vec<Vec<(&str, Vec<f64>)>> = vec![Vec::new(); layers.len()];
    for s in corpus.train_samples() {
        let net = solve_network(graph, &s.network_input(with_vision, with_text)).unwrap();
        for (i, l) in layers.iter().enumerate() {
            labeled[i].push((s.label(), net.extract_code(l).unwrap().data().to_vec()));
        }
    }
    labeled
        .iter()
        .map(|lab| CentroidClassifier::fit(lab).unwrap())
        .collect()
}

fn classify_probe(
    graph: &LayerGraph,
    cents: &[CentroidClassifier],
    layers: &[&str],
    input: &NetworkInput,
) -> Vec<(String, Vec<(String, f64)>)> {
    let net = solve_network(graph, input).unwrap();
    layers
        .iter()
        .zip(cents)
        .map(|(l, c)| c.classify(net.extract_code(l).unwrap().data()).unwrap())
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg_path = &args[1];
    let mode = args.get(2).map(|s| s.as_str()).unwrap_or("toy");
    let corpus_seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(7);

    let text = std::fs::read_to_string(cfg_path).unwrap();
    let mut cfg = ModelConfig::parse(&text).unwrap();
    for arg in args.iter().skip(4) {
        let (k, v) = arg.split_once('=').unwrap();
        if let Some(layer) = k.strip_prefix("l:") {
            cfg.layers.iter_mut().find(|l| l.name == layer).unwrap().lambda = v.parse().unwrap();
        } else if let Some(layer) = k.strip_prefix("ps:") {
            cfg.layers.iter_mut().find(|l| l.name == layer).unwrap().parent_scales =
                v.split(',').map(|x| x.parse().unwrap()).collect();
        } else if let Some(layer) = k.strip_prefix("f:") {
            cfg.layers.iter_mut().find(|l| l.name == layer).unwrap().features = v.parse().unwrap();
        } else {
            match k {
                "fb" => cfg.solver.feedback_scale = v.parse().unwrap(),
                "dt" => cfg.solver.dt_over_tau = v.parse().unwrap(),
                "iters" => cfg.solver.iterations = v.parse().unwrap(),
                "epochs" => cfg.training.epochs = v.parse().unwrap(),
                "lr" => cfg.training.learning_rate = v.parse().unwrap(),
                "ue" => cfg.training.update_every = v.parse().unwrap(),
                "seed" => cfg.training.seed = v.parse().unwrap(),
                other => panic!("unknown override {}", other),
            }
        }
    }
    println!(
        "cfg: iters {}, dt {}, fb {}, epochs {}, lr {}, lambdas {:?}, scales {:?}",
        cfg.solver.iterations,
        cfg.solver.dt_over_tau,
        cfg.solver.feedback_scale,
        cfg.training.epochs,
        cfg.training.learning_rate,
        cfg.layers.iter().map(|l| (l.name.as_str(), l.lambda)).collect::<Vec<_>>(),
        cfg.layers.iter().map(|l| (l.name.as_str(), l.parent_scales.clone())).collect::<Vec<_>>(),
    );
    let corpus = if mode == "faces" {
        generate_synthetic_faces(10, 20, 5, corpus_seed).unwrap()
    } else {
        generate_toy_corpus(corpus_seed).unwrap()
    };

    let cache = std::path::Path::new("/tmp/tune.dscckpt");
    let graph = if let Ok(ck) = dsc_cli::Checkpoint::load(cache) {
        if ck.config.canonical_text() == cfg.canonical_text() {
            println!("train: cached");
            Some(ck.graph)
        } else {
            None
        }
    } else {
        None
    };
    let graph = match graph {
        Some(g) => g,
        None => {
            let mut graph = cfg.build_graph().unwrap();
            let inputs: Vec<NetworkInput> = corpus
                .train_samples()
                .iter()
                .map(|s| s.network_input(true, true))
                .collect();
            let t0 = Instant::now();
            let rows = train(&mut graph, &inputs, &cfg.schedule()).unwrap();
            print!("train: {:.1?} |", t0.elapsed());
            let last_epoch = cfg.training.epochs.saturating_sub(1);
            for l in graph.layers() {
                let (mut recon, mut sp, mut n) = (0.0, 0.0, 0);
                for r in rows.iter().filter(|r| r.epoch == last_epoch && r.layer == l.name()) {
                    recon += r.recon_energy;
                    sp += r.sparsity_fraction;
                    n += 1;
                }
                if n > 0 {
                    print!(" {}: recon {:.3} sp {:.3} |", l.name(), recon / n as f64, sp / n as f64);
                }
            }
            println!();
            let ck = dsc_cli::Checkpoint {
                config: cfg.clone(),
                graph,
                epochs_completed: cfg.training.epochs as u64,
                inputs_presented: 0,
            };
            ck.save(cache).unwrap();
            ck.graph
        }
    };

    let stacks: Vec<Vec<_>> = graph.layers().iter().map(|l| l.stacks().to_vec()).collect();
    let sink = graph.sink().name().to_string();

    // --- criterion 3 style: 400 iters, feedback off
    if mode != "diag" {
    let t0 = Instant::now();
    let mut cfg400 = cfg.clone();
    cfg400.solver.iterations = 400;
    cfg400.solver.feedback_enabled = false;
    let g400 = cfg400.build_graph_with(stacks.clone()).unwrap();
    let mut worst_resid: f64 = 0.0;
    let (mut descent_fail, mut zero_codes) = (0, 0);
    for s in corpus.test_samples() {
        let input = s.network_input(true, true);
        let net = solve_network(&g400, &input).unwrap();
        for l in g400.layers() {
            let fin = net.trace(l.name()).unwrap().last().unwrap().total();
            let empty = empty_code_energy(&g400, &input, &net, l.name()).unwrap();
            if !(fin < empty) {
                descent_fail += 1;
            }
            if net.extract_code(l.name()).unwrap().nonzero_fraction() == 0.0 {
                zero_codes += 1;
            }
        }
        for (_, r) in network_fixed_point_residuals(&g400, &input, &net).unwrap() {
            worst_resid = worst_resid.max(r);
        }
    }
    println!(
        "c3: descent failures {}, zero codes {}, worst residual {:.2e} ({:.1?})",
        descent_fail, zero_codes, worst_resid, t0.elapsed()
    );
    }

    if mode == "toy" || mode == "sweep" || mode == "diag" {
        // --- criterion 5: per-condition centroids
        let t0 = Instant::now();
        let probe = corpus.probe().unwrap();
        let layers = ["h1", sink.as_str()];

        let mut g_off = cfg.build_graph_with(stacks.clone()).unwrap();
        g_off.set_feedback_enabled(false);
        let (cents_a, cents_b, cents_c) = if mode == "diag" {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            let a = fit_condition(&graph, &corpus, &layers, true, false);
            let b = fit_condition(&graph, &corpus, &layers, true, true);
            let c = fit_condition(&g_off, &corpus, &layers, true, true);
            println!("centroid fits {:.1?}", t0.elapsed());
            (a, b, c)
        };

        let report = |img: &dsc_core::Tensor, tag: &str| {
            let img_only = NetworkInput::vision_only(img.clone());
            let both = NetworkInput::both(img.clone(), probe.text().clone());
            let a = classify_probe(&graph, &cents_a, &layers, &img_only);
            let b = classify_probe(&graph, &cents_b, &layers, &both);
            let c = classify_probe(&g_off, &cents_c, &layers, &both);
            let ca = classify_probe(&graph, &cents_b, &layers, &img_only);
            let margin = |d: &[(String, f64)]| {
                // positive: B wins by that relative margin
                let d13 = d.iter().find(|x| x.0 == "13").unwrap().1;
                let db = d.iter().find(|x| x.0 == "B").unwrap().1;
                (d13 - db) / (d13 + db)
            };
            println!(
                "{} | alone h1 {} {:+.3} p1 {} {:+.3} | fb-on h1 {} {:+.3} p1 {} {:+.3} | fb-off h1 {} {:+.3} p1 {} {:+.3} | cliA h1 {} {:+.3} p1 {} {:+.3}",
                tag,
                a[0].0, margin(&a[0].1), a[1].0, margin(&a[1].1),
                b[0].0, margin(&b[0].1), b[1].0, margin(&b[1].1),
                c[0].0, margin(&c[0].1), c[1].0, margin(&c[1].1),
                ca[0].0, margin(&ca[0].1), ca[1].0, margin(&ca[1].1),
            );
        };

        if mode == "diag" {
            use dsc_core::data::probe_image_at_gap;
            let flat_at = |g: &LayerGraph, input: &NetworkInput, layer: &str| -> Vec<f64> {
                let net = solve_network(g, input).unwrap();
                net.extract_code(layer).unwrap().data().to_vec()
            };
            let delta = |a: &[f64], b: &[f64]| -> Vec<f64> {
                a.iter().zip(b).map(|(x, y)| y - x).collect()
            };
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            {
                let net = solve_network(&graph, &probe.network_input(true, true)).unwrap();
                for l in &layers {
                    println!("{} code shape {:?}", l, net.extract_code(l).unwrap().shape());
                }
            }
            // fb-on both-presentation class centroids at h1, fit once
            let mut cent_b_vec = Vec::new();
            let mut cent_13_vec = Vec::new();
            for s in corpus.train_samples() {
                let p = flat_at(&graph, &s.network_input(true, true), "h1");
                if s.label() == "B" {
                    cent_b_vec.push(p);
                } else {
                    cent_13_vec.push(p);
                }
            }
            let mean = |vs: &Vec<Vec<f64>>| -> Vec<f64> {
                let mut m = vec![0.0; vs[0].len()];
                for v in vs {
                    for (mi, vi) in m.iter_mut().zip(v) {
                        *mi += vi;
                    }
                }
                m.iter().map(|x| x / vs.len() as f64).collect()
            };
            let cb_vec = mean(&cent_b_vec);
            let c13_vec = mean(&cent_13_vec);
            let axis = delta(&cb_vec, &c13_vec);
            println!("h1 flattened centroid axis |axis| {:.3}", norm(&axis));
            for gap in [4.0, 5.0, 6.0] {
                let img = probe_image_at_gap(gap);
                let alone = NetworkInput::vision_only(img.clone());
                let both = NetworkInput::both(img.clone(), probe.text().clone());
                for l in &layers {
                    let pa = flat_at(&graph, &alone, l);
                    let pb = flat_at(&graph, &both, l);
                    let d = delta(&pa, &pb);
                    println!(
                        "gap {} {}: |alone| {:.3} |both-alone| {:.3} rel {:.3}",
                        gap, l, norm(&pa), norm(&d), norm(&d) / norm(&pa).max(1e-12)
                    );
                }
                // does the probe's h1 shift align with the B->13 centroid axis,
                // and which side of the decision boundary is each condition on?
                let h1a = flat_at(&graph, &alone, "h1");
                let h1b = flat_at(&graph, &both, "h1");
                let shift = delta(&h1a, &h1b);
                let db_a = norm(&delta(&h1a, &cb_vec));
                let d13_a = norm(&delta(&h1a, &c13_vec));
                let db_b = norm(&delta(&h1b, &cb_vec));
                let d13_b = norm(&delta(&h1b, &c13_vec));
                println!(
                    "  h1 alone dB {:.3} d13 {:.3} ({}) | both dB {:.3} d13 {:.3} ({})",
                    db_a, d13_a, if db_a < d13_a { "B" } else { "13" },
                    db_b, d13_b, if db_b < d13_b { "B" } else { "13" },
                );
                println!(
                    "  shift |d| {:.3} vs axis |{:.3}|: cos {:.3}",
                    norm(&shift), norm(&axis),
                    dot(&shift, &axis) / (norm(&shift) * norm(&axis)).max(1e-12)
                );
            }
        } else if mode == "sweep" {
            use dsc_core::data::probe_image_at_gap;
            // pixel centroids for the ratio column
            let mut cb = dsc_core::Tensor::zeros(probe.image().shape());
            let mut c13 = dsc_core::Tensor::zeros(probe.image().shape());
            let (mut nb, mut n13) = (0, 0);
            for s in corpus.samples() {
                if s.label() == "B" {
                    cb.add_scaled(s.image(), 1.0).unwrap();
                    nb += 1;
                } else {
                    c13.add_scaled(s.image(), 1.0).unwrap();
                    n13 += 1;
                }
            }
            let cb = cb.scale(1.0 / nb as f64);
            let c13 = c13.scale(1.0 / n13 as f64);
            for gap in [
                5.0, 5.05, 5.1, 5.15, 5.2, 5.25, 5.3, 5.35, 5.4, 5.45, 5.5, 5.55, 5.6,
            ] {
                let img = probe_image_at_gap(gap);
                let ratio = img.sub(&cb).unwrap().l2_norm() / img.sub(&c13).unwrap().l2_norm();
                report(&img, &format!("gap {:.1} ratio {:.3}", gap, ratio));
            }
        } else {
            let mut cb = dsc_core::Tensor::zeros(probe.image().shape());
            let mut c13 = dsc_core::Tensor::zeros(probe.image().shape());
            let (mut nb, mut n13) = (0, 0);
            for s in corpus.samples() {
                if s.label() == "B" {
                    cb.add_scaled(s.image(), 1.0).unwrap();
                    nb += 1;
                } else {
                    c13.add_scaled(s.image(), 1.0).unwrap();
                    n13 += 1;
                }
            }
            let cb = cb.scale(1.0 / nb as f64);
            let c13 = c13.scale(1.0 / n13 as f64);
            let ratio =
                probe.image().sub(&cb).unwrap().l2_norm() / probe.image().sub(&c13).unwrap().l2_norm();
            println!("probe pixel ratio {:.4}", ratio);
            report(probe.image(), "probe");
        }
        println!("c5 elapsed {:.1?}", t0.elapsed());

        // --- criterion 6: generation accuracy
        if mode != "diag" {
        let t0 = Instant::now();
        let rb = render_text("B").unwrap();
        let r13 = render_text("13").unwrap();
        let pix =
            CentroidClassifier::fit(&[("B", rb.data().to_vec()), ("13", r13.data().to_vec())])
                .unwrap();
        let (mut ok, mut n) = (0, 0);
        for s in corpus.test_samples() {
            let gen = generate_missing_modality(
                &graph,
                &NetworkInput::vision_only(s.image().clone()),
            )
            .unwrap();
            if pix.classify(gen.data()).unwrap().0 == s.label() {
                ok += 1;
            }
            n += 1;
        }
        println!("c6: {}/{} correct ({:.1?})", ok, n, t0.elapsed());

        // --- criterion 8: joint sparsity + recon vs baseline
        let (mut sp, mut recon, mut base, mut n) = (0.0, 0.0, 0.0, 0);
        for s in corpus.test_samples() {
            let input = s.network_input(true, true);
            let net = solve_network(&graph, &input).unwrap();
            sp += net.extract_code(&sink).unwrap().nonzero_fraction();
            recon += net.trace(&sink).unwrap().last().unwrap().reconstruction;
            base += empty_code_energy(&graph, &input, &net, &sink).unwrap();
            n += 1;
        }
        println!(
            "c8: joint sparsity {:.3}, recon ratio {:.3}",
            sp / n as f64,
            recon / base
        );
        }
    } else {
        let t0 = Instant::now();
        let label = "Mara Quinn";
        for thresh in [1.2, 1.5, 2.0] {
            let profiles = find_invariant_neurons(&graph, &corpus, label, thresh).unwrap();
            let best = profiles.iter().map(|p| p.selectivity).fold(0.0f64, f64::max);
            println!(
                "c7 thresh {}: {} neurons, best selectivity {:.2}",
                thresh,
                profiles.len(),
                best
            );
        }
        println!("c7 elapsed {:.1?}", t0.elapsed());
    }
}
