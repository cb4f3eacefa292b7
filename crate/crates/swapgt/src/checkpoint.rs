//! Trained parameters together with the config and seeds that produced them.
//!
//! Layout, little-endian: magic `SWGC`, `u32` version, `u64` run, split seed
//! and init seed, the config text (`u64` length + UTF-8), then `u64`
//! parameter count and per parameter: name (`u64` length + UTF-8), `u8`
//! rank, `u64` dims, `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use swapgt_core::nn::{ParamStore, Tensor};

use crate::cache::In;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SWGC";
pub const VERSION: u32 = 1;

const MAX_TEXT: u64 = 1 << 24;
const MAX_VALUES: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub run: usize,
    pub split_seed: u64,
    pub init_seed: u64,
    pub config_text: String,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(f);
        let result = (|| -> std::io::Result<()> {
            let text = |w: &mut BufWriter<File>, s: &str| -> std::io::Result<()> {
                w.write_all(&(s.len() as u64).to_le_bytes())?;
                w.write_all(s.as_bytes())
            };
            w.write_all(MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            for v in [self.run as u64, self.split_seed, self.init_seed] {
                w.write_all(&v.to_le_bytes())?;
            }
            text(&mut w, &self.config_text)?;
            w.write_all(&(self.params.len() as u64).to_le_bytes())?;
            for (name, t) in self.params.iter() {
                text(&mut w, name)?;
                w.write_all(&[t.rank() as u8])?;
                for &d in t.shape() {
                    w.write_all(&(d as u64).to_le_bytes())?;
                }
                for v in t.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()
        })();
        result.map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut r = In(BufReader::new(f));
        let io = |e| CliError::io(path, e);
        let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
        if &r.array::<4>().map_err(io)? != MAGIC {
            return Err(bad("not a checkpoint".into()));
        }
        let version = r.u32().map_err(io)?;
        if version != VERSION {
            return Err(bad(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let run = r.u64().map_err(io)? as usize;
        let split_seed = r.u64().map_err(io)?;
        let init_seed = r.u64().map_err(io)?;
        let text = |r: &mut In<BufReader<File>>| -> Result<String> {
            let n = r.len(MAX_TEXT).map_err(io)?;
            let mut buf = vec![0; n];
            r.0.read_exact(&mut buf).map_err(io)?;
            String::from_utf8(buf).map_err(|_| bad("text is not UTF-8".into()))
        };
        let config_text = text(&mut r)?;
        let count = r.len(1 << 20).map_err(io)?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = text(&mut r)?;
            let rank = r.u8().map_err(io)? as usize;
            if rank > 3 {
                return Err(bad(format!("parameter {name} has rank {rank}")));
            }
            let shape: Vec<usize> = (0..rank).map(|_| r.len(MAX_VALUES).map_err(io)).collect::<Result<_>>()?;
            let len: u64 = shape.iter().map(|&d| d as u64).product();
            if len > MAX_VALUES {
                return Err(bad(format!("parameter {name} is too large")));
            }
            let data = (0..len).map(|_| r.array::<8>().map(f64::from_le_bytes).map_err(io)).collect::<Result<_>>()?;
            params.push(&name, Tensor::new(&shape, data)?);
        }
        Ok(Self { run, split_seed, init_seed, config_text, params })
    }
}
