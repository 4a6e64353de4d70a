//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//! `"SMEMCKPT"`, u32 version, u32 model kind (0 memory network,
//! 1 bag-of-words baseline), u32 × 10 dimensions
//! (`N, H, L, M, T, K, |V|, grid rows, grid cols, feature kind`),
//! u64 vocabulary hash, u32 tensor count, then per tensor
//! u32 name length, UTF-8 name, u32 rank, u32 extents, f64 values.
//! Feature standardization, when present, is stored as the tensors
//! `feat_mean` and `feat_std`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureNorm, TinyConv};
use crate::param::ParamSet;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{Dims, IBowImgParams, Model, ModelKind, SMemConfig, SMemParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SMEMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub locations: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub feature_kind: FeatureKind,
    pub vocab_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model,
    pub norm: Option<FeatureNorm>,
}

impl Checkpoint {
    fn feature_dim(&self) -> usize {
        match &self.model {
            Model::SMem(p) => p.feature_dim(),
            Model::IBowImg(p) => p.feature_dim(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let hops = match self.model.kind() {
            ModelKind::SMem { hops } => hops,
            ModelKind::IBowImg => 0,
        };
        let kind = match self.model.kind() {
            ModelKind::SMem { .. } => 0u32,
            ModelKind::IBowImg => 1,
        };
        let header = [
            CHECKPOINT_VERSION,
            kind,
            self.model.embed_dim() as u32,
            hops as u32,
            self.meta.locations as u32,
            self.feature_dim() as u32,
            self.model.max_len() as u32,
            self.model.answers() as u32,
            self.model.vocab_size() as u32,
            self.meta.grid_rows as u32,
            self.meta.grid_cols as u32,
            self.meta.feature_kind.code(),
        ];
        for v in header {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.meta.vocab_hash.to_le_bytes());

        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        self.model.visit(&mut |name, t| tensors.push((name.to_string(), t.clone())));
        if let Some(norm) = &self.norm {
            let (mean, std) = norm.to_tensors();
            tensors.push(("feat_mean".into(), mean));
            tensors.push(("feat_std".into(), std));
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad magic, expected SMEMCKPT".into(),
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 8,
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let kind_at = r.pos;
        let kind = r.u32()?;
        let mut dims = [0usize; 10];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [n, hops, l, m, t, k, v, grid_rows, grid_cols, fk] = dims;
        let feature_kind = FeatureKind::from_code(fk as u32).ok_or_else(|| Error::Format {
            offset: kind_at + 40,
            msg: format!("unknown feature kind {fk}"),
        })?;
        let vocab_hash = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format {
                    offset: at,
                    msg: "tensor name is not UTF-8".into(),
                })?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let size: usize = shape.iter().product();
            let raw = r.take(8 * size)?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                msg: "trailing bytes after last tensor".into(),
            });
        }

        let dims = Dims {
            vocab: v,
            locations: l,
            feature_dim: m,
            max_len: t,
            answers: k,
        };
        let conv = tensors
            .iter()
            .find(|(name, _)| name == "conv_kernel")
            .map(|(_, t)| TinyConv::zeros(t.rows()));
        let mut scratch = Rng::new(0);
        let mut model = match kind {
            0 => {
                let cfg = SMemConfig {
                    embed_dim: n,
                    hops,
                    ..SMemConfig::default()
                };
                Model::SMem(SMemParams::init(&cfg, dims, &mut scratch)?)
            }
            1 => Model::IBowImg(IBowImgParams::init(n, dims, 1.0, &mut scratch)),
            other => {
                return Err(Error::Format {
                    offset: kind_at,
                    msg: format!("unknown model kind {other}"),
                })
            }
        };
        model.set_conv(conv);

        let mut missing = Vec::new();
        let mut mismatched = Vec::new();
        model.visit_mut(&mut |name, slot| match tensors.iter().position(|(n, _)| n == name) {
            Some(i) if tensors[i].1.shape() == slot.shape() => *slot = tensors.swap_remove(i).1,
            Some(_) => mismatched.push(name.to_string()),
            None => missing.push(name.to_string()),
        });
        if !missing.is_empty() || !mismatched.is_empty() {
            return Err(Error::Data(format!(
                "checkpoint tensors missing {missing:?}, wrong shape {mismatched:?}"
            )));
        }
        let mut take = |name: &str| tensors.iter().position(|(n, _)| n == name).map(|i| tensors.swap_remove(i).1);
        let norm = match (take("feat_mean"), take("feat_std")) {
            (Some(mean), Some(std)) => Some(FeatureNorm::from_tensors(&mean, &std)?),
            (None, None) => None,
            _ => return Err(Error::Data("checkpoint has only half of the feature normalization".into())),
        };
        if !tensors.is_empty() {
            let extra: Vec<_> = tensors.iter().map(|(n, _)| n.as_str()).collect();
            return Err(Error::Data(format!("unexpected checkpoint tensors {extra:?}")));
        }
        if let Model::SMem(p) = &model {
            if p.padding_row().iter().any(|&x| x != 0.0) {
                return Err(Error::Data("padding embedding row is not zero".into()));
            }
        }
        Ok(Self {
            meta: CheckpointMeta {
                locations: l,
                grid_rows,
                grid_cols,
                feature_kind,
                vocab_hash,
            },
            model,
            norm,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Format {
            offset: self.bytes.len(),
            msg: format!("truncated checkpoint, needed {n} bytes at offset {}", self.pos),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            vocab: 9,
            locations: 16,
            feature_dim: 12,
            max_len: 8,
            answers: 2,
        }
    }

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            locations: 16,
            grid_rows: 4,
            grid_cols: 4,
            feature_kind: FeatureKind::GridPatch,
            vocab_hash: 0xdead_beef,
        }
    }

    #[test]
    fn smem_round_trip_is_bitwise() {
        let cfg = SMemConfig {
            embed_dim: 6,
            hops: 2,
            ..Default::default()
        };
        let model = Model::SMem(SMemParams::init(&cfg, dims(), &mut Rng::new(3)).unwrap());
        let ck = Checkpoint {
            meta: meta(),
            model,
            norm: Some(FeatureNorm {
                mean: vec![0.5; 12],
                std: vec![2.0; 12],
            }),
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn ibowimg_with_conv_round_trips() {
        let mut p = IBowImgParams::init(4, Dims { feature_dim: 3, ..dims() }, 1.0, &mut Rng::new(1));
        p.conv = Some(TinyConv::init(3, &mut Rng::new(2)));
        let ck = Checkpoint {
            meta: CheckpointMeta {
                feature_kind: FeatureKind::TinyConv,
                ..meta()
            },
            model: Model::IBowImg(p),
            norm: None,
        };
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let cfg = SMemConfig {
            embed_dim: 4,
            ..Default::default()
        };
        let ck = Checkpoint {
            meta: meta(),
            model: Model::SMem(SMemParams::init(&cfg, dims(), &mut Rng::new(3)).unwrap()),
            norm: None,
        };
        let bytes = ck.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let cut = &bytes[..bytes.len() - 3];
        match Checkpoint::from_bytes(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, cut.len()),
            other => panic!("{other:?}"),
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::Format { .. })));
    }
}
