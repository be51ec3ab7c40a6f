//! Dataset manifest (TOML) and the loaded, validated dataset.
//!
//! ```toml
//! catalog = "builtin:ucf101"          # or a path to an index<TAB>name file
//! prompt_template = "a photo of a person doing {class}"
//! text_embeddings = "texts.emb"       # EMB1 whose sidecar ids are class indices
//!
//! [perturbed]                         # optional precomputed perturbed embeddings
//! p10 = "masked_p10.emb"              # EMB1 keyed by frame id, one file per tag
//!
//! [[frames]]
//! id = "v_Archery_g01_c01_f000"
//! class = 3
//! image = "frames/v_Archery_g01_c01_f000.png"
//! embedding = "frames.emb"            # EMB1 keyed by frame id
//! masks = { grass = "masks/grass.png", keep = "masks/player.png" }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{ClassCatalog, ClassId};
use crate::emb1::{sidecar_path, EmbeddingTable};
use crate::embedding::{check_dims, EmbeddingVector};
use crate::error::{Error, Result};

/// Mask name reserved for the isolation (`keep`) mask.
pub const KEEP_MASK: &str = "keep";
pub const BUILTIN_UCF101: &str = "builtin:ucf101";
pub const DEFAULT_PROMPT_TEMPLATE: &str = "a photo of a person doing {class}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: String,
    pub class: ClassId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub masks: BTreeMap<String, PathBuf>,
}

impl FrameEntry {
    /// Named masks other than the `keep` mask.
    pub fn feature_masks(&self) -> impl Iterator<Item = (&str, &Path)> {
        self.masks
            .iter()
            .filter(|(k, _)| k.as_str() != KEEP_MASK)
            .map(|(k, v)| (k.as_str(), v.as_path()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default = "default_catalog")]
    pub catalog: String,
    #[serde(default = "default_prompt")]
    pub prompt_template: String,
    pub text_embeddings: PathBuf,
    #[serde(default)]
    pub perturbed: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
}

fn default_catalog() -> String {
    BUILTIN_UCF101.to_string()
}

fn default_prompt() -> String {
    DEFAULT_PROMPT_TEMPLATE.to_string()
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn render_prompt(&self, class_name: &str) -> String {
        self.prompt_template.replace("{class}", class_name)
    }
}

/// A manifest whose references have been checked and whose embeddings are loaded.
#[derive(Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub base_dir: PathBuf,
    pub catalog: ClassCatalog,
    /// Text embeddings ordered by class index.
    pub texts: Vec<(ClassId, EmbeddingVector)>,
    /// Base embeddings of frames that have one.
    pub frame_embeddings: HashMap<String, EmbeddingVector>,
    /// SHA-256 of the manifest and every referenced file, keyed by path as written.
    pub digests: BTreeMap<String, String>,
    pub dim: usize,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest = DatasetManifest::parse(&text)?;
        let base_dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let mut ds = Self::open(manifest, &base_dir)?;
        ds.digests.insert(
            "<manifest>".into(),
            hex::encode(Sha256::digest(text.as_bytes())),
        );
        Ok(ds)
    }

    /// Validates `manifest` against files under `base_dir` and loads embeddings.
    pub fn open(manifest: DatasetManifest, base_dir: &Path) -> Result<Self> {
        let placeholders = manifest.prompt_template.matches("{class}").count();
        if placeholders != 1 {
            return Err(Error::Manifest(format!(
                "prompt_template must contain exactly one {{class}} placeholder, found {placeholders}"
            )));
        }

        let mut digests = BTreeMap::new();
        let mut checked: HashSet<PathBuf> = HashSet::new();
        let mut reference = |rel: &Path, with_sidecar: bool| -> Result<PathBuf> {
            let full = base_dir.join(rel);
            if checked.insert(rel.to_path_buf()) {
                if !full.is_file() {
                    return Err(Error::Manifest(format!(
                        "referenced file {} does not exist",
                        full.display()
                    )));
                }
                digests.insert(rel.display().to_string(), sha256_file(&full)?);
                if with_sidecar {
                    let side = sidecar_path(&full);
                    if !side.is_file() {
                        return Err(Error::Manifest(format!(
                            "sidecar {} does not exist",
                            side.display()
                        )));
                    }
                    digests.insert(sidecar_path(rel).display().to_string(), sha256_file(&side)?);
                }
            }
            Ok(full)
        };

        let catalog = if manifest.catalog == BUILTIN_UCF101 {
            ClassCatalog::ucf101()
        } else {
            ClassCatalog::load(&reference(Path::new(&manifest.catalog), false)?)?
        };

        let mut ids = HashSet::new();
        for f in &manifest.frames {
            if f.id.is_empty() || f.id.contains(['\t', '\n', '\r']) {
                return Err(Error::Manifest(format!("invalid frame id {:?}", f.id)));
            }
            if !ids.insert(f.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate frame id {:?}", f.id)));
            }
            if !catalog.contains(f.class) {
                return Err(Error::Manifest(format!(
                    "frame {:?} has class {} outside the catalog",
                    f.id, f.class
                )));
            }
            if f.image.is_none() && f.embedding.is_none() {
                return Err(Error::Manifest(format!(
                    "frame {:?} has neither an image nor an embedding",
                    f.id
                )));
            }
            if let Some(p) = &f.image {
                reference(p, false)?;
            }
            if let Some(p) = &f.embedding {
                reference(p, true)?;
            }
            for p in f.masks.values() {
                reference(p, false)?;
            }
        }
        for p in manifest.perturbed.values() {
            reference(p, true)?;
        }

        let text_path = reference(&manifest.text_embeddings, true)?;
        let table = EmbeddingTable::read(&text_path)?;
        let mut texts = Vec::with_capacity(table.len());
        let mut seen = HashSet::new();
        for (id, v) in table.vectors()? {
            let class = id.parse::<u32>().map(ClassId).map_err(|_| {
                Error::Manifest(format!("text embedding id {id:?} is not a class index"))
            })?;
            if !catalog.contains(class) {
                return Err(Error::Manifest(format!(
                    "text embedding for unknown class {class}"
                )));
            }
            if !seen.insert(class) {
                return Err(Error::Manifest(format!(
                    "two text embeddings for class {class}"
                )));
            }
            texts.push((class, v));
        }
        if texts.is_empty() {
            return Err(Error::Manifest("text embedding file has no rows".into()));
        }
        texts.sort_by_key(|(c, _)| *c);
        let dim = table.dim;

        let mut tables: HashMap<&Path, HashMap<String, EmbeddingVector>> = HashMap::new();
        let mut frame_embeddings = HashMap::new();
        for f in &manifest.frames {
            let Some(rel) = &f.embedding else { continue };
            if !tables.contains_key(rel.as_path()) {
                let map = EmbeddingTable::read(&base_dir.join(rel))?.to_map()?;
                tables.insert(rel.as_path(), map);
            }
            if let Some(v) = tables[rel.as_path()].get(&f.id) {
                check_dims(dim, v.dim())?;
                frame_embeddings.insert(f.id.clone(), v.clone());
            }
        }

        Ok(Self {
            base_dir: base_dir.to_path_buf(),
            catalog,
            texts,
            frame_embeddings,
            digests,
            dim,
            manifest,
        })
    }

    pub fn frames(&self) -> &[FrameEntry] {
        &self.manifest.frames
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Candidate text embeddings, optionally restricted to `labels`.
    pub fn candidates(
        &self,
        labels: Option<&[ClassId]>,
    ) -> Result<Vec<(ClassId, EmbeddingVector)>> {
        match labels {
            None => Ok(self.texts.clone()),
            Some(labels) => labels
                .iter()
                .map(|c| {
                    self.texts
                        .iter()
                        .find(|(t, _)| t == c)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("no text embedding for label {c}")))
                })
                .collect(),
        }
    }

    /// Precomputed perturbed embeddings for `tag`, if the manifest lists them.
    pub fn perturbed(&self, tag: &str) -> Result<Option<HashMap<String, EmbeddingVector>>> {
        let Some(rel) = self.manifest.perturbed.get(tag) else {
            return Ok(None);
        };
        let map = EmbeddingTable::read(&self.resolve(rel))?.to_map()?;
        for v in map.values() {
            check_dims(self.dim, v.dim())?;
        }
        Ok(Some(map))
    }
}
