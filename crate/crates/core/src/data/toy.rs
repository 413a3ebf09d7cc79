//! Seeded two-class glyph corpus: "B" versus "13".
//!
//! Both classes are drawn from the same three strokes — a vertical bar and
//! two stacked right-facing arcs — and differ only in the horizontal gap
//! between bar and arcs. Gap near zero fuses them into a B; a wide gap
//! separates them into a 1 followed by a 3. The corpus also carries a
//! probe whose gap is tuned so its image sits between the two pixel
//! centroids with a slight lean toward B, while its text channel renders
//! the contrary label. That probe is the input the feedback experiments
//! disambiguate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use std::f64::consts::FRAC_PI_2;

use crate::data::draw::Canvas;
use crate::data::{render_text, stratified_split, Corpus, Sample, VISION_SHAPE};
use crate::error::DscResult;
use crate::tensor::Tensor;

pub(crate) const LABEL_FUSED: &str = "B";
pub(crate) const LABEL_SEPARATED: &str = "13";

const N_PER_CLASS: usize = 50;
const SEPARATED_GAP: f64 = 11.0;
/// The probe should read as B from pixels alone, but only barely.
const PROBE_DISTANCE_RATIO: f64 = 0.974;

struct Glyph {
    bar_x: f64,
    center_y: f64,
    radius: f64,
    thickness: f64,
    gap: f64,
    tint: [f64; 3],
}

impl Glyph {
    fn render(&self) -> Tensor {
        let mut c = Canvas::new(VISION_SHAPE[2], VISION_SHAPE[1]);
        let half_h = 2.0 * self.radius;
        c.segment(
            self.bar_x,
            self.center_y - half_h,
            self.bar_x,
            self.center_y + half_h,
            self.thickness,
        );
        let arc_x = self.bar_x + self.gap;
        for dy in [-self.radius, self.radius] {
            c.arc(
                arc_x,
                self.center_y + dy,
                self.radius,
                -FRAC_PI_2,
                FRAC_PI_2,
                self.thickness,
            );
        }
        let mut img = Tensor::zeros(&VISION_SHAPE);
        let plane = VISION_SHAPE[1] * VISION_SHAPE[2];
        for ch in 0..3 {
            for (i, &v) in c.px.iter().enumerate() {
                img.data_mut()[ch * plane + i] = v * self.tint[ch];
            }
        }
        img
    }
}

fn jittered_glyph(rng: &mut ChaCha20Rng, gap_center: f64) -> Glyph {
    let level = rng.random_range(0.85..1.0);
    Glyph {
        bar_x: rng.random_range(20.5..23.5),
        center_y: rng.random_range(30.5..33.5),
        radius: rng.random_range(9.1..9.9),
        thickness: rng.random_range(2.1..2.7),
        gap: gap_center + rng.random_range(-0.6..0.6),
        tint: [
            level,
            level * rng.random_range(0.9..1.0),
            level * rng.random_range(0.9..1.0),
        ],
    }
}

fn probe_glyph(gap: f64) -> Glyph {
    Glyph {
        bar_x: 22.0,
        center_y: 32.0,
        radius: 9.5,
        thickness: 2.4,
        gap,
        tint: [0.925, 0.9, 0.9],
    }
}

fn mean_image<'a>(images: impl Iterator<Item = &'a Tensor>) -> Tensor {
    let mut acc = Tensor::zeros(&VISION_SHAPE);
    let mut n = 0usize;
    for img in images {
        acc.add_scaled(img, 1.0).unwrap();
        n += 1;
    }
    acc.scale(1.0 / n as f64)
}

fn distance(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Scratch hook for sweeping probe geometry while tuning configs.
#[doc(hidden)]
pub fn probe_image_at_gap(gap: f64) -> Tensor {
    probe_glyph(gap).render()
}

/// 50 fused and 50 separated glyphs with jittered geometry and tint, an
/// every-fifth-per-class test split, and the tuned ambiguous probe.
pub fn generate_toy_corpus(seed: u64) -> DscResult<Corpus> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let text_fused = render_text(LABEL_FUSED)?;
    let text_separated = render_text(LABEL_SEPARATED)?;

    // Geometry is drawn sequentially from the rng (seed order is the
    // contract); the renders themselves are pure and run in parallel.
    let mut specs = Vec::with_capacity(2 * N_PER_CLASS);
    for _ in 0..N_PER_CLASS {
        specs.push((jittered_glyph(&mut rng, 0.3), LABEL_FUSED));
        specs.push((jittered_glyph(&mut rng, SEPARATED_GAP), LABEL_SEPARATED));
    }
    let images: Vec<Tensor> = specs.par_iter().map(|(g, _)| g.render()).collect();
    let mut samples = Vec::with_capacity(specs.len());
    for ((_, label), image) in specs.iter().zip(images) {
        let text = if *label == LABEL_FUSED {
            text_fused.clone()
        } else {
            text_separated.clone()
        };
        samples.push(Sample::new(image, text, label)?);
    }

    let centroid_fused = mean_image(
        samples
            .iter()
            .filter(|s| s.label() == LABEL_FUSED)
            .map(|s| s.image()),
    );
    let centroid_separated = mean_image(
        samples
            .iter()
            .filter(|s| s.label() == LABEL_SEPARATED)
            .map(|s| s.image()),
    );

    // The ratio d(probe, fused) / d(probe, separated) grows monotonically
    // with the gap, so bisection pins the probe just on the B side of the
    // pixel decision boundary.
    let ratio_at = |gap: f64| {
        let img = probe_glyph(gap).render();
        distance(&img, &centroid_fused) / distance(&img, &centroid_separated)
    };
    let (mut lo, mut hi) = (0.0, SEPARATED_GAP);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ratio_at(mid) < PROBE_DISTANCE_RATIO {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let probe_gap = 0.5 * (lo + hi);
    let probe = Sample::new(
        probe_glyph(probe_gap).render(),
        text_separated.clone(),
        LABEL_FUSED,
    )?;

    let labels: Vec<&str> = samples.iter().map(|s| s.label()).collect();
    let split = stratified_split(&labels);
    // Free function borrow of `samples` ends before the move into Corpus.
    let corpus = Corpus::new(samples, split)?;
    Ok(corpus.with_probe(probe))
}
