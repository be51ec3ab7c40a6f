//! Sources of embeddings for perturbed frames.
//!
//! The harness never computes image embeddings itself. A perturbed frame is
//! handed to an [`EmbeddingProvider`]; [`ExchangeProvider`] does this through
//! a directory shared with an external process:
//!
//! ```text
//! <root>/<request>/frames/000000.png ...   written by the harness
//! <root>/<request>/index.tsv                ordinal<TAB>frame_id<TAB>frames/000000.png
//!                                           (renamed into place last)
//! <root>/<request>/embeddings.emb[.ids]     written by the provider, ids = frame ids
//! <root>/<request>/DONE                     written by the provider when finished
//! <root>/<request>/FAILED                   alternative to DONE; contents = message
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::emb1::EmbeddingTable;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::masking::ImageFrame;

pub const INDEX_FILE: &str = "index.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb";
pub const DONE_FILE: &str = "DONE";
pub const FAILED_FILE: &str = "FAILED";

pub trait EmbeddingProvider {
    /// Embeds every `(frame_id, frame)`; `request` names the batch.
    fn embed(
        &mut self,
        request: &str,
        frames: &[(String, ImageFrame)],
    ) -> Result<HashMap<String, EmbeddingVector>>;
}

/// In-process provider backed by a closure of `(frame_id, frame)`.
pub struct FnProvider<F>(pub F);

impl<F> EmbeddingProvider for FnProvider<F>
where
    F: FnMut(&str, &ImageFrame) -> Result<EmbeddingVector>,
{
    fn embed(
        &mut self,
        _request: &str,
        frames: &[(String, ImageFrame)],
    ) -> Result<HashMap<String, EmbeddingVector>> {
        frames
            .iter()
            .map(|(id, f)| Ok((id.clone(), (self.0)(id, f)?)))
            .collect()
    }
}

/// File-based exchange with an out-of-process provider.
#[derive(Clone, Debug)]
pub struct ExchangeProvider {
    root: PathBuf,
    timeout: Duration,
    poll: Duration,
    issued: usize,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl ExchangeProvider {
    pub fn new(root: impl Into<PathBuf>, timeout: Duration, poll: Duration) -> Self {
        Self {
            root: root.into(),
            timeout,
            poll,
            issued: 0,
        }
    }

    pub fn from_config(cfg: &super::ProviderConfig) -> Result<Self> {
        if !(cfg.timeout_secs.is_finite() && cfg.timeout_secs > 0.0) {
            return Err(Error::Config(format!(
                "provider timeout must be positive, got {}",
                cfg.timeout_secs
            )));
        }
        Ok(Self::new(
            &cfg.request_dir,
            Duration::from_secs_f64(cfg.timeout_secs),
            Duration::from_millis(cfg.poll_millis.max(1)),
        ))
    }

    fn write_request(&self, dir: &Path, frames: &[(String, ImageFrame)]) -> Result<()> {
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        let mut index = String::new();
        for (i, (id, frame)) in frames.iter().enumerate() {
            let rel = format!("frames/{i:06}.png");
            frame.save_png(&dir.join(&rel))?;
            index.push_str(&format!("{i}\t{id}\t{rel}\n"));
        }
        let tmp = dir.join(".index.tsv.tmp");
        std::fs::write(&tmp, index).map_err(|e| Error::io(&tmp, e))?;
        let dst = dir.join(INDEX_FILE);
        std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))
    }

    fn wait(&self, dir: &Path) -> Result<()> {
        let start = Instant::now();
        loop {
            let failed = dir.join(FAILED_FILE);
            if failed.exists() {
                let msg = std::fs::read_to_string(&failed).unwrap_or_default();
                return Err(Error::Provider(format!(
                    "request {} failed: {}",
                    dir.display(),
                    msg.trim()
                )));
            }
            if dir.join(DONE_FILE).exists() {
                return Ok(());
            }
            if start.elapsed() >= self.timeout {
                return Err(Error::Provider(format!(
                    "timed out after {:.1}s waiting for {}",
                    self.timeout.as_secs_f64(),
                    dir.display()
                )));
            }
            std::thread::sleep(self.poll);
        }
    }
}

impl EmbeddingProvider for ExchangeProvider {
    fn embed(
        &mut self,
        request: &str,
        frames: &[(String, ImageFrame)],
    ) -> Result<HashMap<String, EmbeddingVector>> {
        if frames.is_empty() {
            return Ok(HashMap::new());
        }
        let dir = self
            .root
            .join(format!("{:03}-{}", self.issued, sanitize(request)));
        self.issued += 1;
        if dir.exists() {
            return Err(Error::Provider(format!(
                "request directory {} already exists",
                dir.display()
            )));
        }
        log::info!(
            "requesting {} embeddings in {}",
            frames.len(),
            dir.display()
        );
        self.write_request(&dir, frames)?;
        self.wait(&dir)?;
        let table = EmbeddingTable::read(&dir.join(EMBEDDINGS_FILE))
            .map_err(|e| Error::Provider(e.to_string()))?;
        let mut map = table.to_map().map_err(|e| Error::Provider(e.to_string()))?;
        let missing: Vec<&str> = frames
            .iter()
            .map(|(id, _)| id.as_str())
            .filter(|id| !map.contains_key(*id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Provider(format!(
                "response lacks embeddings for: {}",
                missing.join(", ")
            )));
        }
        map.retain(|k, _| frames.iter().any(|(id, _)| id == k));
        Ok(map)
    }
}

/// Request directories under `root` with a complete index and no answer yet.
pub fn pending_requests(root: &Path) -> Result<Vec<PathBuf>> {
    let Ok(entries) = std::fs::read_dir(root) else {
        return Ok(Vec::new());
    };
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.join(INDEX_FILE).is_file()
                && !p.join(DONE_FILE).exists()
                && !p.join(FAILED_FILE).exists()
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Answers one request directory with `f`, for in-process or test providers.
pub fn respond_to_request<F>(dir: &Path, mut f: F) -> Result<()>
where
    F: FnMut(&str, &ImageFrame) -> Result<EmbeddingVector>,
{
    let index_path = dir.join(INDEX_FILE);
    let index = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut table: Option<EmbeddingTable> = None;
    for line in index.lines().filter(|l| !l.is_empty()) {
        let parts: Vec<&str> = line.split('\t').collect();
        let [_, id, rel] = parts[..] else {
            return Err(Error::format(
                &index_path,
                format!("bad index line {line:?}"),
            ));
        };
        let frame = ImageFrame::load_png(&dir.join(rel))?;
        let v = f(id, &frame)?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(v.dim()));
        t.push_vector(id, &v)?;
    }
    table
        .unwrap_or_else(|| EmbeddingTable::new(0))
        .write(&dir.join(EMBEDDINGS_FILE))?;
    let done = dir.join(DONE_FILE);
    std::fs::write(&done, b"").map_err(|e| Error::io(&done, e))
}

/// Marks a request as failed with `message`.
pub fn fail_request(dir: &Path, message: &str) -> Result<()> {
    let path = dir.join(FAILED_FILE);
    std::fs::write(&path, message).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames() -> Vec<(String, ImageFrame)> {
        vec![
            ("a".into(), ImageFrame::filled(2, 2, [255, 0, 0]).unwrap()),
            ("b".into(), ImageFrame::filled(2, 2, [0, 0, 0]).unwrap()),
        ]
    }

    fn redness(_: &str, f: &ImageFrame) -> Result<EmbeddingVector> {
        EmbeddingVector::new(vec![f.pixel(0, 0)[0] as f64 / 255.0, 1.0])
    }

    #[test]
    fn fn_provider_maps_each_frame() {
        let mut p = FnProvider(redness);
        let out = p.embed("x", &frames()).unwrap();
        assert_eq!(out["a"].as_slice(), &[1.0, 1.0]);
        assert_eq!(out["b"].as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn exchange_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let responder = std::thread::spawn(move || loop {
            let pending = pending_requests(&root).unwrap();
            if let Some(req) = pending.first() {
                respond_to_request(req, redness).unwrap();
                return;
            }
            std::thread::sleep(Duration::from_millis(5));
        });
        let mut p = ExchangeProvider::new(
            dir.path(),
            Duration::from_secs(20),
            Duration::from_millis(5),
        );
        let out = p.embed("p10 mask", &frames()).unwrap();
        responder.join().unwrap();
        assert_eq!(out["a"].as_slice(), &[1.0, 1.0]);
        assert!(dir.path().join("000-p10_mask/frames/000001.png").is_file());
    }

    #[test]
    fn failure_and_timeout_are_provider_errors() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let responder = std::thread::spawn(move || loop {
            if let Some(req) = pending_requests(&root).unwrap().first() {
                fail_request(req, "model exploded").unwrap();
                return;
            }
            std::thread::sleep(Duration::from_millis(5));
        });
        let mut p = ExchangeProvider::new(
            dir.path(),
            Duration::from_secs(20),
            Duration::from_millis(5),
        );
        let err = p.embed("r", &frames()).unwrap_err();
        responder.join().unwrap();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("model exploded"));

        let mut p = ExchangeProvider::new(
            dir.path(),
            Duration::from_millis(30),
            Duration::from_millis(5),
        );
        let err = p.embed("r", &frames()).unwrap_err();
        assert!(matches!(err, Error::Provider(_)));
    }
}
