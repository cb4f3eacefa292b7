//! Binary cache of token tables and sequence batches.
//!
//! Layout, all integers little-endian: magic `SWGT`, `u32` version, then
//! `u64` n, d, k, s, seed and config fingerprint. Two token tables follow
//! (view tag `u8`, width `u64`, id count `u64`, `u32` ids), then two sequence
//! batches (view tag `u8`, k, s, seed, id count as `u64`, `u32` ids).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::{info, warn};
use swapgt_core::tokenizer::{SequenceBatch, SequenceStrategy, TokenTable, View};
use swapgt_core::train::{prepare_tables, run_seeds, sequences_for};
use swapgt_core::Graph;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SWGT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheHeader {
    pub version: u32,
    pub n: u64,
    pub d: u64,
    pub k: u64,
    pub s: u64,
    pub seed: u64,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub header: CacheHeader,
    pub tables: (TokenTable, TokenTable),
    pub sequences: (SequenceBatch, SequenceBatch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Created,
    Regenerated,
}

/// Builds tables and the first run's sequences in memory.
pub fn build(config: &RunConfig, graph: &Graph) -> Result<PreparedData> {
    let tables = prepare_tables(&config.train, graph)?;
    let seed = run_seeds(config.train.base_seed, 0).1;
    let sequences = sequences_for(&config.train, &tables, seed)?;
    let header = CacheHeader {
        version: VERSION,
        n: graph.node_count() as u64,
        d: graph.feature_dim() as u64,
        k: sequences.0.k() as u64,
        s: sequences.0.s() as u64,
        seed,
        fingerprint: config.data_fingerprint(),
    };
    Ok(PreparedData { header, tables, sequences })
}

/// Header the cache for `config` and `graph` must carry.
pub fn expected_header(config: &RunConfig, graph: &Graph) -> CacheHeader {
    let setup = config.train.apply_variant();
    let (k, s) = match setup.strategy {
        SequenceStrategy::Swap(c) => (setup.table_k, c.s),
        SequenceStrategy::Single => (setup.table_k, 0),
        SequenceStrategy::Subsample { k, s } => (k, s),
    };
    CacheHeader {
        version: VERSION,
        n: graph.node_count() as u64,
        d: graph.feature_dim() as u64,
        k: k as u64,
        s: s as u64,
        seed: run_seeds(config.train.base_seed, 0).1,
        fingerprint: config.data_fingerprint(),
    }
}

/// Loads the cache at `path` when its header matches, otherwise builds and
/// writes a fresh one.
pub fn prepare(config: &RunConfig, graph: &Graph, path: &Path) -> Result<(PreparedData, CacheStatus)> {
    let expected = expected_header(config, graph);
    let status = if path.exists() {
        match read_header(path) {
            Ok(h) if h == expected => {
                info!("cache hit: {}", path.display());
                return Ok((read(path)?, CacheStatus::Hit));
            }
            Ok(_) => {
                warn!("{}: header does not match the configuration, regenerating", path.display());
                CacheStatus::Regenerated
            }
            Err(e) => {
                warn!("{}: unreadable cache ({e}), regenerating", path.display());
                CacheStatus::Regenerated
            }
        }
    } else {
        CacheStatus::Created
    };
    let data = build(config, graph)?;
    write(path, &data)?;
    Ok((data, status))
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.0.write_all(b)
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn ids(&mut self, ids: &[u32]) -> std::io::Result<()> {
        self.u64(ids.len() as u64)?;
        for id in ids {
            self.bytes(&id.to_le_bytes())?;
        }
        Ok(())
    }
}

pub(crate) struct In<R: Read>(pub R);

impl<R: Read> In<R> {
    pub fn array<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut b = [0; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    pub fn u8(&mut self) -> std::io::Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    pub fn u32(&mut self) -> std::io::Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    pub fn u64(&mut self) -> std::io::Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    /// A length prefix, refused when larger than `limit`.
    pub fn len(&mut self, limit: u64) -> std::io::Result<usize> {
        let n = self.u64()?;
        if n > limit {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("length {n} exceeds {limit}")));
        }
        Ok(n as usize)
    }
    fn ids(&mut self, limit: u64) -> std::io::Result<Vec<u32>> {
        let n = self.len(limit)?;
        (0..n).map(|_| self.u32()).collect()
    }
}

fn invalid(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Data(format!("{}: {}", path.display(), msg.into()))
}

fn read_header_from<R: Read>(r: &mut In<R>, path: &Path) -> Result<CacheHeader> {
    let io = |e| CliError::io(path, e);
    if &r.array::<4>().map_err(io)? != MAGIC {
        return Err(invalid(path, "not a sequence cache"));
    }
    let version = r.u32().map_err(io)?;
    if version != VERSION {
        return Err(invalid(path, format!("cache version {version}, expected {VERSION}")));
    }
    let mut f = [0u64; 6];
    for x in f.iter_mut() {
        *x = r.u64().map_err(io)?;
    }
    Ok(CacheHeader { version, n: f[0], d: f[1], k: f[2], s: f[3], seed: f[4], fingerprint: f[5] })
}

pub fn read_header(path: &Path) -> Result<CacheHeader> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_header_from(&mut In(BufReader::new(f)), path)
}

pub fn write(path: &Path, data: &PreparedData) -> Result<()> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = Out(BufWriter::new(f));
    let h = &data.header;
    let result = (|| -> std::io::Result<()> {
        w.bytes(MAGIC)?;
        w.bytes(&h.version.to_le_bytes())?;
        for v in [h.n, h.d, h.k, h.s, h.seed, h.fingerprint] {
            w.u64(v)?;
        }
        for t in [&data.tables.0, &data.tables.1] {
            w.bytes(&[t.view().tag()])?;
            w.u64(t.k() as u64)?;
            w.ids(t.ids())?;
        }
        for b in [&data.sequences.0, &data.sequences.1] {
            w.bytes(&[b.view().tag()])?;
            for v in [b.k() as u64, b.s() as u64, b.seed()] {
                w.u64(v)?;
            }
            w.ids(b.ids())?;
        }
        w.0.flush()
    })();
    result.map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<PreparedData> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = In(BufReader::new(f));
    let header = read_header_from(&mut r, path)?;
    let io = |e| CliError::io(path, e);
    let n = header.n as usize;
    let view = |tag: u8| View::from_tag(tag).ok_or_else(|| invalid(path, format!("unknown view tag {tag}")));
    let mut tables = Vec::new();
    for _ in 0..2 {
        let v = view(r.u8().map_err(io)?)?;
        let k = r.len(header.n).map_err(io)?;
        let ids = r.ids(header.n * header.n).map_err(io)?;
        tables.push(TokenTable::from_rows(v, n, k, ids)?);
    }
    let mut batches = Vec::new();
    for _ in 0..2 {
        let v = view(r.u8().map_err(io)?)?;
        let k = r.len(header.n).map_err(io)?;
        let s = r.len(1 << 20).map_err(io)?;
        let seed = r.u64().map_err(io)?;
        let ids = r.ids(header.n * (1 + s as u64) * (1 + k as u64)).map_err(io)?;
        batches.push(SequenceBatch::from_parts(v, n, k, s, seed, ids)?);
    }
    let mut rest = [0u8; 1];
    if r.0.read(&mut rest).map_err(io)? != 0 {
        return Err(invalid(path, "trailing bytes"));
    }
    let (t1, t0) = (tables.pop().unwrap(), tables.pop().unwrap());
    let (b1, b0) = (batches.pop().unwrap(), batches.pop().unwrap());
    if t0.view() != View::Attribute || t1.view() != View::Topology || b0.view() != View::Attribute || b1.view() != View::Topology {
        return Err(invalid(path, "views out of order"));
    }
    Ok(PreparedData { header, tables: (t0, t1), sequences: (b0, b1) })
}
