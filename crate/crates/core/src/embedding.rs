//! Dense per-user vectors and their text file format.
//!
//! ```text
//! dim=<d> method=<name> seed=<s> [key=value ...]
//! <external_id>\t<x_1>\t...\t<x_d>
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::graph::UserId;
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingMeta {
    pub method: String,
    pub seed: u64,
    /// Extra header fields (config hash, parent digest, ...), written sorted.
    pub extra: BTreeMap<String, String>,
}

impl EmbeddingMeta {
    pub fn new(method: impl Into<String>, seed: u64) -> Self {
        EmbeddingMeta {
            method: method.into(),
            seed,
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }
}

/// Row-major user x dim matrix with rows in ascending user id order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<T> {
    dim: usize,
    ids: Vec<UserId>,
    data: Vec<T>,
    index: HashMap<UserId, usize>,
    pub meta: EmbeddingMeta,
}

impl<T: Real> EmbeddingMatrix<T> {
    /// Rows are reordered by ascending id.
    pub fn from_rows(dim: usize, rows: Vec<(UserId, Vec<T>)>, meta: EmbeddingMeta) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        let mut rows = rows;
        rows.sort_by_key(|(id, _)| *id);
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::data(format!(
                    "vector for user {id} has length {}, expected {dim}",
                    v.len()
                )));
            }
            if ids.last() == Some(&id) {
                return Err(Error::data(format!("duplicate vector for user {id}")));
            }
            ids.push(id);
            data.extend(v);
        }
        let index = ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        Ok(EmbeddingMatrix {
            dim,
            ids,
            data,
            index,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[UserId] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: UserId) -> Option<&[T]> {
        self.index.get(&id).map(|&i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix restricted to `users` (those present), in ascending id order.
    pub fn subset(&self, users: &[UserId]) -> Self {
        let rows = users
            .iter()
            .filter_map(|&u| self.get(u).map(|v| (u, v.to_vec())))
            .collect::<Vec<_>>();
        let mut rows = rows;
        rows.dedup_by_key(|(u, _)| *u);
        Self::from_rows(self.dim, rows, self.meta.clone()).expect("subset of valid matrix")
    }

    pub fn header(&self) -> String {
        let mut h = format!(
            "dim={} method={} seed={}",
            self.dim, self.meta.method, self.meta.seed
        );
        for (k, v) in &self.meta.extra {
            h.push_str(&format!(" {k}={v}"));
        }
        h
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(out, "{id}")?;
            for x in self.row(i) {
                write!(out, "\t{x}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, path)
    }

    pub fn read<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let bad = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| Error::io(origin, e))?,
            None => return Err(bad(1, "missing header".into())),
        };
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(1, format!("malformed header field {tok:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let dim: usize = fields
            .remove("dim")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| bad(1, "header lacks a valid dim".into()))?;
        let method = fields
            .remove("method")
            .ok_or_else(|| bad(1, "header lacks method".into()))?;
        let seed: u64 = fields
            .remove("seed")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(1, "header lacks a valid seed".into()))?;
        let meta = EmbeddingMeta {
            method,
            seed,
            extra: fields,
        };
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let id = parts
                .next()
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| bad(i + 1, "invalid user id".into()))?;
            let v: Vec<T> = parts
                .map(|s| s.trim().parse::<T>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(i + 1, "invalid float".into()))?;
            if v.len() != dim {
                return Err(bad(i + 1, format!("expected {dim} values, found {}", v.len())));
            }
            rows.push((UserId(id), v));
        }
        Self::from_rows(dim, rows, meta)
    }
}
