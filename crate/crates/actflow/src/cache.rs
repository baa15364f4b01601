//! Content-addressed annotator response cache.
//!
//! Entries live at `<dir>/<backend>/<kk>/<key>.json`, where `key` is the
//! SHA-256 of the request's canonical JSON (kind, prompt version and payload)
//! and `backend` is a hash of the annotator id, so stub and LM answers never
//! mix. Readers run concurrently; writers are serialized and atomic.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use actflow_core::annotator::{Annotator, AnnotatorError, AnnotatorRequest, AnnotatorResponse};
use actflow_core::fingerprint;
use serde::{Deserialize, Serialize};

use crate::artifacts;

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    annotator: String,
    request: AnnotatorRequest,
    response: AnnotatorResponse,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    writer: Mutex<()>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache {
            dir: dir.into(),
            writer: Mutex::new(()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(req: &AnnotatorRequest) -> String {
        fingerprint::of(req)
    }

    fn path(&self, annotator: &str, key: &str) -> PathBuf {
        let ns = &fingerprint::sha256_hex(annotator.as_bytes())[..16];
        self.dir
            .join(ns)
            .join(&key[..2])
            .join(format!("{key}.json"))
    }

    /// A stored response; unreadable or mismatched entries count as misses.
    pub fn get(&self, annotator: &str, req: &AnnotatorRequest) -> Option<AnnotatorResponse> {
        let key = Self::key(req);
        let text = fs::read_to_string(self.path(annotator, &key)).ok()?;
        let entry: Entry = serde_json::from_str(&text).ok()?;
        (entry.key == key && entry.request == *req).then_some(entry.response)
    }

    pub fn put(
        &self,
        annotator: &str,
        req: &AnnotatorRequest,
        resp: &AnnotatorResponse,
    ) -> Result<(), AnnotatorError> {
        let key = Self::key(req);
        let path = self.path(annotator, &key);
        let entry = Entry {
            key,
            annotator: annotator.into(),
            request: req.clone(),
            response: resp.clone(),
        };
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        artifacts::write_json(&path, &entry).map_err(|e| AnnotatorError::Cache(e.to_string()))
    }
}

/// Wraps an annotator with a shared response cache. Reports the inner id, so
/// cached and uncached runs produce identical artifacts.
#[derive(Debug)]
pub struct Cached<A> {
    inner: A,
    cache: Arc<ResponseCache>,
}

impl<A: Annotator> Cached<A> {
    pub fn new(inner: A, cache: Arc<ResponseCache>) -> Self {
        Cached { inner, cache }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }
}

impl<A: Annotator> Annotator for Cached<A> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn call(&self, req: &AnnotatorRequest) -> Result<AnnotatorResponse, AnnotatorError> {
        let id = self.inner.id();
        if let Some(mut resp) = self.cache.get(&id, req) {
            self.cache.hits.fetch_add(1, Ordering::Relaxed);
            resp.cached = true;
            return Ok(resp);
        }
        self.cache.misses.fetch_add(1, Ordering::Relaxed);
        let resp = self.inner.call(req)?;
        self.cache.put(&id, req, &resp)?;
        Ok(resp)
    }
}
