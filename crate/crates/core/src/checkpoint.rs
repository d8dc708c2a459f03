//! `DRPFN1` checkpoint files: a text manifest followed by little-endian f32
//! tensors in layout order, optionally followed by the Adam moments.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DomainInput, IclModel, ModelConfig};
use crate::optim::AdamState;

const MAGIC: &[u8; 6] = b"DRPFN1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: IclModel,
    pub step: u64,
    pub total_steps: u64,
    pub seed: u64,
    pub optimizer: Option<AdamState>,
}

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn manifest(c: &Checkpoint) -> String {
    let cfg = c.model.config();
    let domain = match cfg.domain_input {
        DomainInput::Time2Vec => "time2vec",
        DomainInput::Scalar => "scalar",
    };
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    kv("embed_dim", cfg.embed_dim.to_string());
    kv("num_layers", cfg.num_layers.to_string());
    kv("num_heads", cfg.num_heads.to_string());
    kv("ffn_dim", cfg.ffn_dim.to_string());
    kv("max_features", cfg.max_features.to_string());
    kv("max_classes", cfg.max_classes.to_string());
    kv("t2v_dim", cfg.t2v_dim.to_string());
    kv("domain_input", domain.to_string());
    kv("freeze_t2v", cfg.freeze_t2v.to_string());
    kv("step", c.step.to_string());
    kv("total_steps", c.total_steps.to_string());
    kv("seed", c.seed.to_string());
    kv("optimizer", c.optimizer.is_some().to_string());
    for slot in c.model.layout().slots() {
        kv("tensor", format!("{}:{}:{}", slot.name, slot.rows, slot.cols));
    }
    s
}

fn write_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = manifest(self);
        let mut out = Vec::with_capacity(16 + m.len() + 12 * self.model.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(m.len() as u32).to_le_bytes());
        out.extend_from_slice(m.as_bytes());
        write_f32s(&mut out, self.model.params());
        if let Some(st) = &self.optimizer {
            write_f32s(&mut out, &st.m);
            write_f32s(&mut out, &st.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..6] != MAGIC {
            return Err(ck("not a DRPFN1 checkpoint"));
        }
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let body = bytes.get(10..10 + len).ok_or_else(|| ck("truncated manifest"))?;
        let text = std::str::from_utf8(body).map_err(|_| ck("manifest is not UTF-8"))?;
        let mut cfg = ModelConfig::default();
        let (mut step, mut total_steps, mut seed, mut has_opt) = (0, 0, 0, false);
        let mut tensors = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| ck(format!("bad manifest line `{line}`")))?;
            let num = || v.parse::<u64>().map_err(|_| ck(format!("bad value for {k}: `{v}`")));
            let flag = || v.parse::<bool>().map_err(|_| ck(format!("bad value for {k}: `{v}`")));
            match k {
                "embed_dim" => cfg.embed_dim = num()? as usize,
                "num_layers" => cfg.num_layers = num()? as usize,
                "num_heads" => cfg.num_heads = num()? as usize,
                "ffn_dim" => cfg.ffn_dim = num()? as usize,
                "max_features" => cfg.max_features = num()? as usize,
                "max_classes" => cfg.max_classes = num()? as usize,
                "t2v_dim" => cfg.t2v_dim = num()? as usize,
                "domain_input" => {
                    cfg.domain_input = match v {
                        "time2vec" => DomainInput::Time2Vec,
                        "scalar" => DomainInput::Scalar,
                        _ => return Err(ck(format!("unknown domain_input `{v}`"))),
                    }
                }
                "freeze_t2v" => cfg.freeze_t2v = flag()?,
                "step" => step = num()?,
                "total_steps" => total_steps = num()?,
                "seed" => seed = num()?,
                "optimizer" => has_opt = flag()?,
                "tensor" => tensors.push(v.to_string()),
                _ => return Err(ck(format!("unknown manifest key `{k}`"))),
            }
        }
        cfg.validate().map_err(|e| ck(e.to_string()))?;
        let probe = IclModel::from_params(cfg.clone(), vec![0.0; crate::model::ParamLayout::new(&cfg).total])?;
        let expected: Vec<String> =
            probe.layout().slots().iter().map(|s| format!("{}:{}:{}", s.name, s.rows, s.cols)).collect();
        if expected != tensors {
            return Err(ck("tensor list does not match the model configuration"));
        }
        let n = probe.num_params();
        let blobs = if has_opt { 3 } else { 1 };
        let data = &bytes[10 + len..];
        if data.len() != 4 * n * blobs {
            return Err(ck(format!("expected {} tensor bytes, found {}", 4 * n * blobs, data.len())));
        }
        let floats: Vec<f64> =
            data.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        if floats.iter().any(|v| !v.is_finite()) {
            return Err(ck("non-finite tensor value"));
        }
        let model = IclModel::from_params(cfg, floats[..n].to_vec())?;
        let optimizer = has_opt.then(|| AdamState { m: floats[n..2 * n].to_vec(), v: floats[2 * n..].to_vec() });
        Ok(Self { model, step, total_steps, seed, optimizer })
    }

    /// Write via a sibling temporary file and a rename, so an interrupted
    /// save never leaves a truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn small() -> IclModel {
        let cfg = ModelConfig { embed_dim: 8, num_layers: 1, num_heads: 2, ffn_dim: 8, max_features: 2, max_classes: 3, t2v_dim: 2, ..Default::default() };
        IclModel::new(cfg, &mut from_seed(5)).unwrap()
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let model = small();
        let n = model.num_params();
        let st = AdamState { m: vec![0.25; n], v: vec![0.5; n] };
        let c = Checkpoint { model, step: 7, total_steps: 10, seed: 3, optimizer: Some(st) };
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn corrupted_header_rejected() {
        let c = Checkpoint { model: small(), step: 0, total_steps: 1, seed: 0, optimizer: None };
        let mut b = c.to_bytes();
        b[0] = b'X';
        assert!(Checkpoint::from_bytes(&b).is_err());
        let b = c.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
    }
}
