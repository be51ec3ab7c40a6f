#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use labelscope_core::emb1::EmbeddingTable;
use labelscope_core::embedding::EmbeddingVector;
use labelscope_core::masking::{ImageFrame, SegmentationMask};
use labelscope_core::pipeline::{Dataset, DatasetManifest, FrameEntry};
use labelscope_core::rng::{derive_seed, seeded};
use labelscope_core::{ClassId, Result};
use rand_distr::{Distribution, StandardNormal};

pub type Rows = Vec<(String, Vec<f64>)>;

pub struct FrameSpec {
    pub id: String,
    pub class: u32,
    pub embedding: Option<Vec<f64>>,
    pub image: Option<ImageFrame>,
    pub masks: Vec<(String, SegmentationMask)>,
}

impl FrameSpec {
    pub fn embedded(id: impl Into<String>, class: u32, embedding: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            class,
            embedding: Some(embedding),
            image: None,
            masks: Vec::new(),
        }
    }

    pub fn imaged(id: impl Into<String>, class: u32, image: ImageFrame) -> Self {
        Self {
            id: id.into(),
            class,
            embedding: None,
            image: Some(image),
            masks: Vec::new(),
        }
    }

    pub fn with_mask(mut self, name: &str, mask: SegmentationMask) -> Self {
        self.masks.push((name.to_string(), mask));
        self
    }
}

#[derive(Default)]
pub struct FixtureBuilder {
    pub catalog: Option<Vec<String>>,
    pub texts: Vec<(u32, Vec<f64>)>,
    pub frames: Vec<FrameSpec>,
    pub perturbed: Vec<(String, Rows)>,
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
}

impl Fixture {
    pub fn dataset(&self) -> Dataset {
        Dataset::load(&self.manifest).expect("fixture manifest loads")
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }
}

pub fn write_emb(path: &Path, rows: &[(String, Vec<f64>)]) {
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut t = EmbeddingTable::new(dim);
    for (id, v) in rows {
        t.push(id.clone(), v.iter().map(|x| *x as f32).collect())
            .unwrap();
    }
    t.write(path).unwrap();
}

impl FixtureBuilder {
    pub fn build(self) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("frames")).unwrap();
        std::fs::create_dir_all(root.join("masks")).unwrap();

        let catalog = match &self.catalog {
            Some(names) => {
                let text: String = names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| format!("{}\t{n}\n", i + 1))
                    .collect();
                std::fs::write(root.join("classes.tsv"), text).unwrap();
                "classes.tsv".to_string()
            }
            None => "builtin:ucf101".to_string(),
        };

        let texts: Vec<(String, Vec<f64>)> = self
            .texts
            .iter()
            .map(|(c, v)| (c.to_string(), v.clone()))
            .collect();
        write_emb(&root.join("texts.emb"), &texts);

        let embedded: Vec<(String, Vec<f64>)> = self
            .frames
            .iter()
            .filter_map(|f| f.embedding.clone().map(|e| (f.id.clone(), e)))
            .collect();
        if !embedded.is_empty() {
            write_emb(&root.join("frames.emb"), &embedded);
        }

        let mut entries = Vec::new();
        for f in &self.frames {
            let image = f.image.as_ref().map(|img| {
                let rel = PathBuf::from(format!("frames/{}.png", f.id));
                img.save_png(&root.join(&rel)).unwrap();
                rel
            });
            let mut masks = BTreeMap::new();
            for (name, m) in &f.masks {
                let rel = PathBuf::from(format!("masks/{}_{name}.png", f.id));
                m.save_png(&root.join(&rel)).unwrap();
                masks.insert(name.clone(), rel);
            }
            entries.push(FrameEntry {
                id: f.id.clone(),
                class: ClassId(f.class),
                image,
                embedding: f.embedding.as_ref().map(|_| PathBuf::from("frames.emb")),
                masks,
            });
        }

        let mut perturbed = BTreeMap::new();
        for (tag, rows) in &self.perturbed {
            let rel = PathBuf::from(format!("perturbed_{}.emb", tag.replace(':', "_")));
            write_emb(&root.join(&rel), rows);
            perturbed.insert(tag.clone(), rel);
        }

        let manifest = DatasetManifest {
            catalog,
            prompt_template: "a photo of a person doing {class}".into(),
            text_embeddings: PathBuf::from("texts.emb"),
            perturbed,
            frames: entries,
        };
        let path = root.join("manifest.toml");
        std::fs::write(&path, manifest.to_toml().unwrap()).unwrap();
        Fixture {
            dir,
            manifest: path,
        }
    }
}

pub fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

pub fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Standard normal draws, reproducible from `(seed, label)`.
pub fn gaussian(seed: u64, label: &str, n: usize) -> Vec<f64> {
    let mut rng = seeded(derive_seed(seed, label));
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Palette colour that identifies a class in synthetic images.
pub fn class_color(class: u32) -> [u8; 3] {
    [
        (40 + class * 47 % 200) as u8,
        (90 + class * 31 % 150) as u8,
        (60 + class * 71 % 180) as u8,
    ]
}

/// Most common non-black colour's class, if any pixel keeps one.
pub fn decode_class(frame: &ImageFrame, classes: &[u32]) -> Option<u32> {
    classes
        .iter()
        .map(|&c| {
            let color = class_color(c);
            (frame.pixels().iter().filter(|p| **p == color).count(), c)
        })
        .filter(|(n, _)| *n > 0)
        .max_by_key(|(n, c)| (*n, std::cmp::Reverse(*c)))
        .map(|(_, c)| c)
}

/// Embedding provider stub for images: the class colour fixes a direction,
/// blackened pixels pull the embedding toward the `dark` axis, and every
/// frame carries a fixed jitter derived from its id.
pub fn dark_class_embedding(
    frame_id: &str,
    frame: &ImageFrame,
    classes: &[u32],
    dim: usize,
    dark_axis: usize,
    jitter: f64,
) -> Result<EmbeddingVector> {
    let b = frame.count_black() as f64 / frame.len() as f64;
    let mut v = vec![0.0; dim];
    if let Some(c) = decode_class(frame, classes) {
        v[c as usize - 1] += 1.0 - b;
    }
    v[dark_axis] += 0.8 * b;
    for (x, n) in v.iter_mut().zip(gaussian(7, frame_id, dim)) {
        *x += jitter * n;
    }
    EmbeddingVector::new(v)
}
