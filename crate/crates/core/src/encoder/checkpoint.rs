//! Encoder checkpoints: config header, flat parameter blob, optional
//! optimizer state for resuming, fnv1a64 content checksum.

use std::io::{Read, Write};
use std::path::Path;

use super::{Adam, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::similarity::fnv1a64;

const MAGIC: &[u8; 4] = b"SGC1";

/// Optimizer state captured alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn save(path: &Path, params: &EncoderParams, opt: Option<&OptimizerState>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let cfg = &params.config;
    for field in [
        cfg.vocab_size as u64,
        cfg.d_model as u64,
        cfg.n_layers as u64,
        cfg.n_heads as u64,
        cfg.max_len as u64,
        cfg.seed,
        params.n_params() as u64,
    ] {
        buf.extend_from_slice(&field.to_le_bytes());
    }
    for x in params.to_flat() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    match opt {
        Some(state) => {
            buf.push(1);
            buf.extend_from_slice(&state.step.to_le_bytes());
            for x in state.m.iter().chain(state.v.iter()) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        None => buf.push(0),
    }
    let checksum = fnv1a64(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(EncoderParams, Option<OptimizerState>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 4 + 7 * 8 + 1 + 8 || &buf[0..4] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint",
            path.display()
        )));
    }
    let body = &buf[..buf.len() - 8];
    let stored = u64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap());
    if fnv1a64(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }

    let mut off = 4;
    let mut read_u64 = |buf: &[u8]| {
        let x = u64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
        off += 8;
        x
    };
    let config = EncoderConfig {
        vocab_size: read_u64(&buf) as usize,
        d_model: read_u64(&buf) as usize,
        n_layers: read_u64(&buf) as usize,
        n_heads: read_u64(&buf) as usize,
        max_len: read_u64(&buf) as usize,
        seed: read_u64(&buf),
    };
    let n_params = read_u64(&buf) as usize;

    let mut params = EncoderParams::init(config)?;
    if params.n_params() != n_params {
        return Err(Error::Checkpoint(format!(
            "parameter count {} does not match config ({})",
            n_params,
            params.n_params()
        )));
    }
    let need = n_params * 8;
    if body.len() < off + need + 1 {
        return Err(Error::Checkpoint("checkpoint truncated".into()));
    }
    let flat: Vec<f64> = buf[off..off + need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.load_flat(&flat)?;
    off += need;

    let opt = match buf[off] {
        0 => None,
        1 => {
            off += 1;
            let step = u64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            off += 8;
            if body.len() < off + 2 * need {
                return Err(Error::Checkpoint("optimizer state truncated".into()));
            }
            let mut mv: Vec<f64> = buf[off..off + 2 * need]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let v = mv.split_off(n_params);
            Some(OptimizerState { step, m: mv, v })
        }
        _ => return Err(Error::Checkpoint("bad optimizer flag".into())),
    };
    Ok((params, opt))
}

impl OptimizerState {
    pub fn capture(adam: &Adam, step: u64) -> OptimizerState {
        OptimizerState {
            step,
            m: adam.m.clone(),
            v: adam.v.clone(),
        }
    }

    pub fn restore_into(&self, adam: &mut Adam) {
        adam.m = self.m.clone();
        adam.v = self.v.clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_optimizer() {
        let cfg = EncoderConfig {
            vocab_size: 9,
            d_model: 4,
            n_layers: 1,
            n_heads: 2,
            max_len: 6,
            seed: 5,
        };
        let params = EncoderParams::init(cfg).unwrap();
        let state = OptimizerState {
            step: 17,
            m: vec![0.5; params.n_params()],
            v: vec![0.25; params.n_params()],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        save(&path, &params, Some(&state)).unwrap();
        let (back, opt) = load(&path).unwrap();
        assert_eq!(back.to_flat(), params.to_flat());
        assert_eq!(opt.unwrap(), state);
    }

    #[test]
    fn corruption_detected() {
        let cfg = EncoderConfig {
            vocab_size: 6,
            d_model: 4,
            n_layers: 1,
            n_heads: 1,
            max_len: 4,
            seed: 2,
        };
        let params = EncoderParams::init(cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        save(&path, &params, None).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[100] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load(&path).is_err());
    }
}
