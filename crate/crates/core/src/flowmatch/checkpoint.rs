//! Versioned binary checkpoint container: config JSON plus a flat,
//! named parameter list.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::model::{ToyDiT, ToyDiTConfig};

const MAGIC: &[u8; 4] = b"T4DC";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &ToyDiT, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg_json = serde_json::to_vec(model.config())?;
    buf.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg_json);
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, tensor) in model.params() {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &e in tensor.shape() {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ToyDiT> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader {
        data: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version}, this build reads {VERSION}"
        )));
    }
    let cfg_len = r.u32()? as usize;
    let cfg: ToyDiTConfig = serde_json::from_slice(r.take(cfg_len)?)?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
        }
        params.push((name, Tensor::from_vec(&shape, data)?));
    }
    ToyDiT::from_parts(cfg, params)
}
