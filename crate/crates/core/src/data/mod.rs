//! Dataset types, deterministic text rasterization, and corpus generators.
//!
//! Every sample pairs a [3, 64, 64] color image with a [1, 16, 128]
//! grayscale raster of its label text, both in [0, 1]. Corpora come from
//! three sources: the seeded two-class glyph generator ([`toy`]), the
//! seeded synthetic-face generator ([`faces`]), and an on-disk image
//! directory with a manifest ([`loader`]). Generators are pure functions
//! of their seed, so corpora are bit-reproducible.

mod draw;
mod faces;
mod font;
mod loader;
mod toy;

pub use faces::generate_synthetic_faces;
pub use loader::{load_image_corpus, write_png};
pub use toy::generate_toy_corpus;
#[doc(hidden)]
pub use toy::probe_image_at_gap;

use std::collections::BTreeMap;

use crate::error::{DscError, DscResult};
use crate::hierarchy::{ExternalShapes, NetworkInput};
use crate::tensor::Tensor;

pub const VISION_SHAPE: [usize; 3] = [3, 64, 64];
pub const TEXT_SHAPE: [usize; 3] = [1, 16, 128];

/// The canonical external geometry every corpus in this crate uses.
pub fn external_shapes() -> ExternalShapes {
    ExternalShapes {
        vision: VISION_SHAPE.to_vec(),
        text: TEXT_SHAPE.to_vec(),
    }
}

/// One multimodal item: an image, the raster of its label, and the label.
#[derive(Debug, Clone)]
pub struct Sample {
    image: Tensor,
    text: Tensor,
    label: String,
}

impl Sample {
    pub fn new(image: Tensor, text: Tensor, label: &str) -> DscResult<Sample> {
        if image.shape() != VISION_SHAPE {
            return Err(DscError::Geometry(format!(
                "sample '{}' image shape {:?}, expected {:?}",
                label,
                image.shape(),
                VISION_SHAPE
            )));
        }
        if text.shape() != TEXT_SHAPE {
            return Err(DscError::Geometry(format!(
                "sample '{}' text shape {:?}, expected {:?}",
                label,
                text.shape(),
                TEXT_SHAPE
            )));
        }
        for t in [&image, &text] {
            if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(DscError::Precondition(format!(
                    "sample '{}' has values outside [0, 1]",
                    label
                )));
            }
        }
        Ok(Sample {
            image,
            text,
            label: label.to_string(),
        })
    }

    pub fn image(&self) -> &Tensor {
        &self.image
    }

    pub fn text(&self) -> &Tensor {
        &self.text
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The external signals for a solve, with per-modality presence flags.
    pub fn network_input(&self, with_vision: bool, with_text: bool) -> NetworkInput {
        NetworkInput {
            vision: if with_vision {
                Some(self.image.clone())
            } else {
                None
            },
            text: if with_text { Some(self.text.clone()) } else { None },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A labeled sample set with a disjoint train/test assignment.
///
/// Class counts are always derived from the labels rather than stored, so
/// they cannot drift out of sync. The optional probe is the designated
/// ambiguous input of the toy corpus; it sits outside the split.
#[derive(Debug, Clone)]
pub struct Corpus {
    samples: Vec<Sample>,
    split: Vec<Split>,
    probe: Option<Sample>,
}

impl Corpus {
    pub fn new(samples: Vec<Sample>, split: Vec<Split>) -> DscResult<Corpus> {
        if samples.len() != split.len() {
            return Err(DscError::Precondition(format!(
                "{} samples but {} split assignments",
                samples.len(),
                split.len()
            )));
        }
        for s in &samples {
            let in_train = samples
                .iter()
                .zip(&split)
                .any(|(t, &sp)| sp == Split::Train && t.label == s.label);
            if !in_train {
                return Err(DscError::Precondition(format!(
                    "class '{}' has no training samples",
                    s.label
                )));
            }
        }
        Ok(Corpus {
            samples,
            split,
            probe: None,
        })
    }

    pub fn with_probe(mut self, probe: Sample) -> Corpus {
        self.probe = Some(probe);
        self
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn train_samples(&self) -> Vec<&Sample> {
        self.samples
            .iter()
            .zip(&self.split)
            .filter(|(_, &s)| s == Split::Train)
            .map(|(smp, _)| smp)
            .collect()
    }

    pub fn test_samples(&self) -> Vec<&Sample> {
        self.samples
            .iter()
            .zip(&self.split)
            .filter(|(_, &s)| s == Split::Test)
            .map(|(smp, _)| smp)
            .collect()
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// The designated ambiguous input, when the generator provides one.
    pub fn probe(&self) -> Option<&Sample> {
        self.probe.as_ref()
    }
}

/// Every fifth occurrence of each class goes to the test split, so every
/// class keeps training representation and small classes stay in train.
pub(crate) fn stratified_split(labels: &[&str]) -> Vec<Split> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let n = seen.entry(l).or_insert(0);
            *n += 1;
            if *n % 5 == 0 {
                Split::Test
            } else {
                Split::Train
            }
        })
        .collect()
}

const GLYPH_ROWS: usize = 7;
const GLYPH_COLS: usize = 5;
const GLYPH_ADVANCE: usize = 6;
const TEXT_LEFT_MARGIN: usize = 1;
const TEXT_TOP_MARGIN: usize = 4;
/// 1 + 21*6 - 1 = 126 < 128, so 21 glyph cells fit the raster width.
const MAX_NAME_CHARS: usize = 21;

/// Rasterizes a name with the embedded font: background 0, ink 1,
/// left-aligned, vertically centered. Case is folded to the uppercase
/// glyph set. The same name always produces identical bits.
pub fn render_text(name: &str) -> DscResult<Tensor> {
    let chars: Vec<char> = name.chars().collect();
    if chars.len() > MAX_NAME_CHARS {
        return Err(DscError::Render(format!(
            "name '{}' is {} characters; at most {} fit the raster",
            name,
            chars.len(),
            MAX_NAME_CHARS
        )));
    }
    let mut out = Tensor::zeros(&TEXT_SHAPE);
    let width = TEXT_SHAPE[2];
    for (i, &c) in chars.iter().enumerate() {
        let folded = c.to_ascii_uppercase();
        let bitmap = font::glyph(folded).ok_or_else(|| {
            DscError::Render(format!("character {:?} in '{}' has no glyph", c, name))
        })?;
        let col0 = TEXT_LEFT_MARGIN + i * GLYPH_ADVANCE;
        for (r, &row_bits) in bitmap.iter().enumerate().take(GLYPH_ROWS) {
            for col in 0..GLYPH_COLS {
                if row_bits & (1 << (GLYPH_COLS - 1 - col)) != 0 {
                    let y = TEXT_TOP_MARGIN + r;
                    out.data_mut()[y * width + col0 + col] = 1.0;
                }
            }
        }
    }
    Ok(out)
}

/// Fraction of inked pixels in a raster, used as a rendering regression.
pub fn ink_fraction(t: &Tensor) -> f64 {
    t.nonzero_fraction()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_name_renders_blank() {
        let t = render_text("").unwrap();
        assert_eq!(t.shape(), &TEXT_SHAPE);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rendering_is_deterministic_and_case_folded() {
        let a = render_text("Mara Quinn").unwrap();
        let b = render_text("Mara Quinn").unwrap();
        assert_eq!(a.data(), b.data());
        let upper = render_text("MARA QUINN").unwrap();
        assert_eq!(a.data(), upper.data());
    }

    #[test]
    fn rejects_overlong_and_unprintable_names() {
        let long = "A".repeat(22);
        assert!(matches!(render_text(&long), Err(DscError::Render(_))));
        assert!(matches!(render_text("B\u{1F600}"), Err(DscError::Render(_))));
    }

    #[test]
    fn ink_lands_in_the_centered_band() {
        let t = render_text("WHY").unwrap();
        let width = TEXT_SHAPE[2];
        for y in 0..TEXT_SHAPE[1] {
            let row_ink: f64 = t.data()[y * width..(y + 1) * width].iter().sum();
            if (TEXT_TOP_MARGIN..TEXT_TOP_MARGIN + GLYPH_ROWS).contains(&y) {
                assert!(row_ink > 0.0, "row {} should carry ink", y);
            } else {
                assert_eq!(row_ink, 0.0, "row {} should be blank", y);
            }
        }
    }

    #[test]
    fn name_render_ink_fraction_is_stable() {
        let t = render_text("Mara Quinn").unwrap();
        let ink = ink_fraction(&t);
        assert!(ink > 0.02 && ink < 0.5, "ink fraction {} out of band", ink);
        // Frozen after the first measurement with the embedded font.
        assert!(
            (ink - INK_FRACTION_MARA_QUINN).abs() < 1e-12,
            "ink fraction drifted: {}",
            ink
        );
    }

    const INK_FRACTION_MARA_QUINN: f64 = 0.07275390625;

    #[test]
    fn sample_validates_shape_and_range() {
        let good_img = Tensor::zeros(&VISION_SHAPE);
        let good_txt = Tensor::zeros(&TEXT_SHAPE);
        assert!(Sample::new(good_img.clone(), good_txt.clone(), "x").is_ok());
        assert!(Sample::new(Tensor::zeros(&[3, 32, 32]), good_txt.clone(), "x").is_err());
        let mut hot = good_img.clone();
        hot.data_mut()[0] = 1.5;
        assert!(Sample::new(hot, good_txt.clone(), "x").is_err());
        let mut neg = good_img;
        neg.data_mut()[0] = -0.1;
        assert!(Sample::new(neg, good_txt, "x").is_err());
    }

    #[test]
    fn network_input_respects_presence_flags() {
        let s = Sample::new(
            Tensor::zeros(&VISION_SHAPE),
            Tensor::zeros(&TEXT_SHAPE),
            "x",
        )
        .unwrap();
        let both = s.network_input(true, true);
        assert!(both.vision.is_some() && both.text.is_some());
        let img_only = s.network_input(true, false);
        assert!(img_only.vision.is_some() && img_only.text.is_none());
    }

    #[test]
    fn split_sends_every_fifth_per_class_to_test() {
        let labels: Vec<&str> = std::iter::repeat("a")
            .take(12)
            .chain(std::iter::repeat("b").take(3))
            .collect();
        let split = stratified_split(&labels);
        let a_test: Vec<usize> = (0..12).filter(|&i| split[i] == Split::Test).collect();
        assert_eq!(a_test, vec![4, 9]);
        assert!(split[12..].iter().all(|&s| s == Split::Train), "small class stays in train");
    }

    #[test]
    fn corpus_rejects_mismatched_split_and_test_only_classes() {
        let mk = |label: &str| {
            Sample::new(
                Tensor::zeros(&VISION_SHAPE),
                Tensor::zeros(&TEXT_SHAPE),
                label,
            )
            .unwrap()
        };
        assert!(Corpus::new(vec![mk("a")], vec![]).is_err());
        let err =
            Corpus::new(vec![mk("a"), mk("b")], vec![Split::Train, Split::Test]).unwrap_err();
        match err {
            DscError::Precondition(msg) => assert!(msg.contains("'b'"), "{}", msg),
            other => panic!("expected precondition error, got {:?}", other),
        }
    }

    #[test]
    fn class_counts_aggregate_duplicate_labels() {
        let mk = |label: &str| {
            Sample::new(
                Tensor::zeros(&VISION_SHAPE),
                Tensor::zeros(&TEXT_SHAPE),
                label,
            )
            .unwrap()
        };
        let samples = vec![mk("b"), mk("a"), mk("b")];
        let split = vec![Split::Train; 3];
        let corpus = Corpus::new(samples, split).unwrap();
        let counts = corpus.class_counts();
        assert_eq!(counts["a"], 1);
        assert_eq!(counts["b"], 2);
        assert_eq!(corpus.train_samples().len(), 3);
        assert_eq!(corpus.test_samples().len(), 0);
    }
}

