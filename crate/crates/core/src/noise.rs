//! Class-specific noise vectors learned with an augmented triplet loss.
//!
//! Each class `c` owns a noise vector `N_c` living in embedding space. A
//! triplet (anchor and positive from class `c`, negative from class `c'`)
//! is scored as
//!
//! ```text
//! max(0, d(f_a + N_c, f_p + N_c) - d(f_a + N_c, f_n + N_c') + margin)
//! ```
//!
//! with Euclidean `d`. Anchor and positive share `N_c`, so the first distance
//! does not depend on the noise and only the anchor/negative term produces a
//! gradient. At inference every candidate class is scored with its own noise
//! added to the image embedding.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::dispersion::FrequencyHistogram;
use crate::emb1::EmbeddingTable;
use crate::embedding::{
    check_candidates, check_dims, cosine_similarity, euclidean, softmax_classification,
    Classification, ClassifierConfig, EmbeddingVector,
};
use crate::error::{Error, Result};
use crate::rng;

/// Extracted image features grouped by class.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    classes: BTreeMap<ClassId, Vec<EmbeddingVector>>,
}

impl FeatureStore {
    pub fn new(classes: BTreeMap<ClassId, Vec<EmbeddingVector>>) -> Result<Self> {
        let dim = classes
            .values()
            .flatten()
            .next()
            .map(EmbeddingVector::dim)
            .unwrap_or(0);
        for (class, vectors) in &classes {
            if vectors.is_empty() {
                return Err(Error::TooFewVectors {
                    class: *class,
                    count: 0,
                });
            }
            for v in vectors {
                check_dims(dim, v.dim())?;
            }
        }
        Ok(Self { dim, classes })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (ClassId, EmbeddingVector)>) -> Result<Self> {
        let mut classes: BTreeMap<ClassId, Vec<EmbeddingVector>> = BTreeMap::new();
        for (c, v) in pairs {
            classes.entry(c).or_default().push(v);
        }
        Self::new(classes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.keys().copied()
    }

    pub fn features(&self, class: ClassId) -> Option<&[EmbeddingVector]> {
        self.classes.get(&class).map(Vec::as_slice)
    }

    fn feature(&self, class: ClassId, index: usize) -> Result<&EmbeddingVector> {
        self.classes
            .get(&class)
            .and_then(|v| v.get(index))
            .ok_or_else(|| Error::InvalidTriplet(format!("no feature {index} in class {class}")))
    }
}

/// Mapping from class to its learned noise vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDictionary {
    dim: usize,
    noise: BTreeMap<ClassId, EmbeddingVector>,
}

impl NoiseDictionary {
    pub fn new(dim: usize, noise: BTreeMap<ClassId, EmbeddingVector>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyEmbedding);
        }
        for v in noise.values() {
            check_dims(dim, v.dim())?;
        }
        Ok(Self { dim, noise })
    }

    pub fn zeros(dim: usize, classes: impl IntoIterator<Item = ClassId>) -> Result<Self> {
        let zero = EmbeddingVector::zeros(dim)?;
        Self::new(
            dim,
            classes.into_iter().map(|c| (c, zero.clone())).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn get(&self, class: ClassId) -> Option<&EmbeddingVector> {
        self.noise.get(&class)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &EmbeddingVector)> {
        self.noise.iter().map(|(c, v)| (*c, v))
    }

    fn require(&self, class: ClassId) -> Result<&EmbeddingVector> {
        self.noise.get(&class).ok_or(Error::MissingNoise(class))
    }

    /// Rows ordered by class, sidecar ids are the class indices, provenance
    /// goes into sidecar header records.
    pub fn to_table(&self, provenance: Option<&TripletConfig>) -> Result<EmbeddingTable> {
        let mut table = EmbeddingTable::new(self.dim);
        for (c, v) in &self.noise {
            table.push_vector(c.to_string(), v)?;
        }
        if let Some(cfg) = provenance {
            table.header = cfg.provenance_records();
        }
        Ok(table)
    }

    pub fn from_table(table: &EmbeddingTable) -> Result<Self> {
        let mut noise = BTreeMap::new();
        for (id, v) in table.vectors()? {
            let class: u32 = id.parse().map_err(|_| {
                Error::format(
                    "<noise dictionary>",
                    format!("row id {id:?} is not a class index"),
                )
            })?;
            if noise.insert(ClassId(class), v).is_some() {
                return Err(Error::format(
                    "<noise dictionary>",
                    format!("class {class} appears twice"),
                ));
            }
        }
        Self::new(table.dim, noise)
    }

    pub fn save(&self, path: &Path, provenance: Option<&TripletConfig>) -> Result<()> {
        self.to_table(provenance)?.write(path)
    }

    /// Loads a dictionary and the provenance header records, if any.
    pub fn load(path: &Path) -> Result<(Self, Vec<(String, String)>)> {
        let table = EmbeddingTable::read(path)?;
        let dict = Self::from_table(&table).map_err(|e| match e {
            Error::Format { reason, .. } => Error::format(path, reason),
            other => other,
        })?;
        Ok((dict, table.header))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub triplets_per_class_per_epoch: usize,
    pub seed: u64,
    pub noise_init_scale: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            learning_rate: 0.05,
            epochs: 20,
            triplets_per_class_per_epoch: 16,
            seed: 0,
            noise_init_scale: 0.01,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTripletConfig(msg));
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return bad(format!("margin must be >= 0, got {}", self.margin));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.triplets_per_class_per_epoch == 0 {
            return bad("triplets_per_class_per_epoch must be positive".into());
        }
        if !(self.noise_init_scale.is_finite() && self.noise_init_scale >= 0.0) {
            return bad(format!(
                "noise_init_scale must be >= 0, got {}",
                self.noise_init_scale
            ));
        }
        Ok(())
    }

    fn provenance_records(&self) -> Vec<(String, String)> {
        vec![
            ("alpha".into(), self.margin.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("seed".into(), self.seed.to_string()),
            (
                "triplets_per_class_per_epoch".into(),
                self.triplets_per_class_per_epoch.to_string(),
            ),
            ("noise_init_scale".into(), self.noise_init_scale.to_string()),
        ]
    }
}

/// Indices into a [`FeatureStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub class: ClassId,
    pub anchor: usize,
    pub positive: usize,
    pub negative_class: ClassId,
    pub negative: usize,
}

impl Triplet {
    fn validate(&self) -> Result<()> {
        if self.anchor == self.positive {
            return Err(Error::InvalidTriplet(
                "anchor and positive are the same frame".into(),
            ));
        }
        if self.class == self.negative_class {
            return Err(Error::InvalidTriplet(
                "negative drawn from the anchor class".into(),
            ));
        }
        Ok(())
    }
}

/// Plain hinge: `max(0, d_ap - d_an + margin)`.
pub fn triplet_loss(d_ap: f64, d_an: f64, margin: f64) -> Result<f64> {
    for d in [d_ap, d_an, margin] {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::NegativeDistance(d));
        }
    }
    Ok((d_ap - d_an + margin).max(0.0))
}

struct Resolved<'a> {
    anchor: &'a EmbeddingVector,
    positive: &'a EmbeddingVector,
    negative: &'a EmbeddingVector,
    noise_c: &'a EmbeddingVector,
    noise_neg: &'a EmbeddingVector,
}

fn resolve<'a>(
    t: &Triplet,
    store: &'a FeatureStore,
    noise: &'a NoiseDictionary,
) -> Result<Resolved<'a>> {
    t.validate()?;
    check_dims(store.dim(), noise.dim())?;
    Ok(Resolved {
        anchor: store.feature(t.class, t.anchor)?,
        positive: store.feature(t.class, t.positive)?,
        negative: store.feature(t.negative_class, t.negative)?,
        noise_c: noise.require(t.class)?,
        noise_neg: noise.require(t.negative_class)?,
    })
}

fn shifted(v: &EmbeddingVector, n: &EmbeddingVector) -> Vec<f64> {
    v.as_slice()
        .iter()
        .zip(n.as_slice())
        .map(|(a, b)| a + b)
        .collect()
}

/// Returns `(loss, a, n)` with `a = f_a + N_c`, `n = f_n + N_c'`.
fn augmented_parts(r: &Resolved<'_>, margin: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let a = shifted(r.anchor, r.noise_c);
    let p = shifted(r.positive, r.noise_c);
    let n = shifted(r.negative, r.noise_neg);
    let loss = triplet_loss(euclidean(&a, &p), euclidean(&a, &n), margin)?;
    Ok((loss, a, n))
}

pub fn augmented_triplet_loss(
    t: &Triplet,
    store: &FeatureStore,
    noise: &NoiseDictionary,
    margin: f64,
) -> Result<f64> {
    let r = resolve(t, store, noise)?;
    Ok(augmented_parts(&r, margin)?.0)
}

/// Analytic gradient of the augmented loss with respect to `N_c` and `N_c'`.
///
/// With an active hinge, `grad_c = -u` and `grad_neg = +u` where `u` is the
/// unit vector from the augmented negative to the augmented anchor. An
/// inactive hinge (including loss exactly zero) yields zero vectors.
pub fn noise_gradient(
    t: &Triplet,
    store: &FeatureStore,
    noise: &NoiseDictionary,
    margin: f64,
) -> Result<(EmbeddingVector, EmbeddingVector)> {
    let r = resolve(t, store, noise)?;
    let (loss, a, n) = augmented_parts(&r, margin)?;
    let dim = store.dim();
    if loss <= 0.0 {
        return Ok((EmbeddingVector::zeros(dim)?, EmbeddingVector::zeros(dim)?));
    }
    let dist = euclidean(&a, &n);
    if dist == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let u: Vec<f64> = a.iter().zip(&n).map(|(x, y)| (x - y) / dist).collect();
    Ok((
        EmbeddingVector::new(u.iter().map(|v| -v).collect())?,
        EmbeddingVector::new(u)?,
    ))
}

/// Samples `count_per_class` triplets for every class of the store.
///
/// Anchor and positive are two distinct frames of the class. The negative
/// class is drawn in proportion to how often the anchor class was mistaken
/// for it (when `confusions` has any usable mass for that class), otherwise
/// uniformly among the other classes.
pub fn mine_triplets(
    store: &FeatureStore,
    confusions: Option<&BTreeMap<ClassId, FrequencyHistogram>>,
    count_per_class: usize,
    seed: u64,
) -> Result<Vec<Triplet>> {
    let classes: Vec<ClassId> = store.classes().collect();
    if classes.len() < 2 {
        return Err(Error::NoNegativeClass);
    }
    for &c in &classes {
        let n = store.features(c).map_or(0, <[_]>::len);
        if n < 2 {
            return Err(Error::TooFewVectors { class: c, count: n });
        }
    }
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(classes.len() * count_per_class);
    for &c in &classes {
        let n_c = store.features(c).map_or(0, <[_]>::len);
        let others: Vec<ClassId> = classes.iter().copied().filter(|&o| o != c).collect();
        let weights: Vec<u64> = match confusions.and_then(|m| m.get(&c)) {
            Some(h) => others
                .iter()
                .map(|o| h.entry(*o).map_or(0, |e| e.count))
                .collect(),
            None => vec![0; others.len()],
        };
        let total: u64 = weights.iter().sum();
        for _ in 0..count_per_class {
            let anchor = rng.gen_range(0..n_c);
            let mut positive = rng.gen_range(0..n_c - 1);
            if positive >= anchor {
                positive += 1;
            }
            let negative_class = if total > 0 {
                let mut ticket = rng.gen_range(0..total);
                let mut pick = others[others.len() - 1];
                for (o, w) in others.iter().zip(&weights) {
                    if ticket < *w {
                        pick = *o;
                        break;
                    }
                    ticket -= w;
                }
                pick
            } else {
                others[rng.gen_range(0..others.len())]
            };
            let n_neg = store.features(negative_class).map_or(0, <[_]>::len);
            out.push(Triplet {
                class: c,
                anchor,
                positive,
                negative_class,
                negative: rng.gen_range(0..n_neg),
            });
        }
    }
    Ok(out)
}

fn mean_loss(
    triplets: &[Triplet],
    store: &FeatureStore,
    noise: &NoiseDictionary,
    margin: f64,
) -> Result<f64> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for t in triplets {
        sum += augmented_triplet_loss(t, store, noise, margin)?;
    }
    Ok(sum / triplets.len() as f64)
}

/// Learns one noise vector per class of `store`.
///
/// Noise starts uniform in `[-noise_init_scale, noise_init_scale]`. Each
/// epoch mines a fresh triplet set and applies one gradient step per triplet
/// (`N <- N - learning_rate * grad`). The trace holds, per epoch, the mean
/// augmented loss over that epoch's triplets after its updates.
pub fn train_noise_dictionary(
    store: &FeatureStore,
    cfg: &TripletConfig,
    confusions: Option<&BTreeMap<ClassId, FrequencyHistogram>>,
) -> Result<(NoiseDictionary, Vec<f64>)> {
    cfg.validate()?;
    if store.is_empty() {
        return Err(Error::NoNegativeClass);
    }
    let dim = store.dim();
    let mut rng = rng::seeded(cfg.seed);
    let mut noise = BTreeMap::new();
    for c in store.classes() {
        let values: Vec<f64> = (0..dim)
            .map(|_| {
                if cfg.noise_init_scale == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-cfg.noise_init_scale..=cfg.noise_init_scale)
                }
            })
            .collect();
        noise.insert(c, EmbeddingVector::new(values)?);
    }
    let mut dict = NoiseDictionary::new(dim, noise)?;
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let epoch_seed = rng.next_u64();
        let triplets = mine_triplets(
            store,
            confusions,
            cfg.triplets_per_class_per_epoch,
            epoch_seed,
        )?;
        for t in &triplets {
            let (g_c, g_neg) = noise_gradient(t, store, &dict, cfg.margin)?;
            if g_c.is_zero() && g_neg.is_zero() {
                continue;
            }
            step(&mut dict, t.class, &g_c, cfg.learning_rate)?;
            step(&mut dict, t.negative_class, &g_neg, cfg.learning_rate)?;
        }
        let loss = mean_loss(&triplets, store, &dict, cfg.margin)?;
        log::debug!("epoch {epoch}: mean augmented triplet loss {loss:.6}");
        trace.push(loss);
    }
    Ok((dict, trace))
}

fn step(dict: &mut NoiseDictionary, class: ClassId, grad: &EmbeddingVector, lr: f64) -> Result<()> {
    let current = dict.require(class)?;
    let updated = EmbeddingVector::new(
        current
            .as_slice()
            .iter()
            .zip(grad.as_slice())
            .map(|(n, g)| n - lr * g)
            .collect(),
    )?;
    dict.noise.insert(class, updated);
    Ok(())
}

/// Scores each candidate `c` as `cos(image + N_c, text_c)`, then softmax and
/// argmax exactly as in zero-shot classification.
pub fn noise_aware_classify(
    image: &EmbeddingVector,
    texts: &[(ClassId, EmbeddingVector)],
    noise: &NoiseDictionary,
    cfg: &ClassifierConfig,
) -> Result<Classification> {
    check_candidates(texts)?;
    check_dims(noise.dim(), image.dim())?;
    let similarities = texts
        .iter()
        .map(|(c, t)| {
            let shifted = image.add(noise.require(*c)?)?;
            Ok((*c, cosine_similarity(&shifted, t)?))
        })
        .collect::<Result<Vec<_>>>()?;
    softmax_classification(similarities, cfg)
}
