//! Versioned binary checkpoint of a learned policy, its optimiser state, the
//! training trace and an optional learned codec. All integers and floats are
//! little-endian; layout in `docs/formats.md`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::comms::{Codec, LearnedCodec};
use crate::error::{Error, Result};
use crate::geometry::Dims;

use super::learner::{Adam, LinearPolicy, Shape};
use super::Hyper;

pub const MAGIC: &[u8; 4] = b"SNCK";
pub const VERSION: u16 = 1;

/// One row of the training trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub episodes: u32,
    /// Mean per-agent sum of sub-goal rewards.
    pub mean_return: f64,
    pub success_rate: f64,
    /// Surrogate plus critic loss of the last minibatch.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub hyper: Hyper,
    pub policy: LinearPolicy,
    pub adam_actor: Adam,
    pub adam_critic: Adam,
    pub epochs_done: u32,
    pub trace: Vec<EpochStats>,
    pub codec: Option<CodecState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodecState {
    pub dims: Dims,
    pub params: LearnedCodec,
    pub loss_trace: Vec<f64>,
}

impl CodecState {
    pub fn codec(&self) -> Result<Codec> {
        Codec::from_learned(self.dims, self.params.clone())
    }
}

impl Checkpoint {
    /// Untrained policy of the given shape.
    pub fn init(shape: Shape, hyper: Hyper) -> Checkpoint {
        let policy = LinearPolicy::new(shape);
        Checkpoint {
            hyper,
            adam_actor: Adam::new(policy.actor.len()),
            adam_critic: Adam::new(policy.critic.len()),
            policy,
            epochs_done: 0,
            trace: Vec::new(),
            codec: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u16(VERSION);
        w.u8(self.policy.shape.code());
        w.u8(self.codec.is_some() as u8);
        let h = &self.hyper;
        w.u32(h.p as u32);
        w.u32(h.d as u32);
        for v in [h.alpha, h.beta, h.gamma, h.lr, h.clip] {
            w.f64(v);
        }
        w.u32(h.update_epochs as u32);
        w.u32(h.minibatch as u32);
        w.f64s(&self.policy.actor);
        w.f64s(&self.policy.critic);
        for a in [&self.adam_actor, &self.adam_critic] {
            w.u64(a.t);
            w.f64s(&a.m);
            w.f64s(&a.v);
        }
        w.u32(self.epochs_done);
        w.u32(self.trace.len() as u32);
        for e in &self.trace {
            w.u32(e.epoch);
            w.u32(e.episodes);
            w.f64(e.mean_return);
            w.f64(e.success_rate);
            w.f64(e.loss);
        }
        if let Some(c) = &self.codec {
            w.u32(c.dims.l as u32);
            w.u32(c.dims.w as u32);
            w.u32(c.params.pool as u32);
            let (v, d) = c.params.enc_w.dim();
            w.u32(v as u32);
            w.u32(d as u32);
            let p = &c.params;
            for &x in p.enc_w.iter().chain(&p.enc_b).chain(&p.dec_w).chain(&p.dec_b) {
                w.0.extend_from_slice(&x.to_le_bytes());
            }
            w.f64s(&c.loss_trace);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { b: bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let shape = Shape::from_code(r.u8()?).ok_or_else(|| bad("unknown policy shape"))?;
        let has_codec = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(bad("bad codec flag")),
        };
        let p = r.u32()? as usize;
        let d = r.u32()? as usize;
        let hyper = Hyper {
            p,
            d,
            alpha: r.f64()?,
            beta: r.f64()?,
            gamma: r.f64()?,
            lr: r.f64()?,
            clip: r.f64()?,
            update_epochs: r.u32()? as usize,
            minibatch: r.u32()? as usize,
        };
        let actor = r.f64s()?;
        let critic = r.f64s()?;
        if actor.len() != shape.actor_len() || critic.len() != shape.critic_len() {
            return Err(bad("coefficient table length"));
        }
        let mut adams = Vec::new();
        for n in [actor.len(), critic.len()] {
            let t = r.u64()?;
            let m = r.f64s()?;
            let v = r.f64s()?;
            if m.len() != n || v.len() != n {
                return Err(bad("optimiser state length"));
            }
            adams.push(Adam { m, v, t });
        }
        let adam_critic = adams.pop().expect("two optimisers");
        let adam_actor = adams.pop().expect("two optimisers");
        let epochs_done = r.u32()?;
        let n = r.u32()? as usize;
        let mut trace = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            trace.push(EpochStats {
                epoch: r.u32()?,
                episodes: r.u32()?,
                mean_return: r.f64()?,
                success_rate: r.f64()?,
                loss: r.f64()?,
            });
        }
        let codec = if has_codec {
            let dims = Dims::new(r.u32()? as usize, r.u32()? as usize);
            let pool = r.u32()? as usize;
            let v = r.u32()? as usize;
            let dd = r.u32()? as usize;
            let enc_w = Array2::from_shape_vec((v, dd), r.f32n(v * dd)?).map_err(|_| bad("encoder shape"))?;
            let enc_b = Array1::from(r.f32n(v)?);
            let dec_w = Array2::from_shape_vec((dd, v), r.f32n(v * dd)?).map_err(|_| bad("decoder shape"))?;
            let dec_b = Array1::from(r.f32n(dd)?);
            let params = LearnedCodec {
                pool,
                enc_w,
                enc_b,
                dec_w,
                dec_b,
            };
            Codec::from_learned(dims, params.clone())?;
            Some(CodecState {
                dims,
                params,
                loss_trace: r.f64s()?,
            })
        } else {
            None
        };
        if r.at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        hyper.validate().map_err(|e| bad(&e.to_string()))?;
        Ok(Checkpoint {
            hyper,
            policy: LinearPolicy { shape, actor, critic },
            adam_actor,
            adam_critic,
            epochs_done,
            trace,
            codec,
        })
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ck.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn bad(msg: &str) -> Error {
    Error::Checkpoint(msg.to_string())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    /// Length-prefixed (u32) run of f64.
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len() as u32);
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.b.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        if n.saturating_mul(8) > self.b.len() - self.at {
            return Err(bad("truncated"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn f32n(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| bad("size overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::init(Shape::SubGoal, Hyper::default());
        ck.policy.actor = vec![0.5, -1.25, 3.0, 0.0, 1e-9, -7.5, 2.0, 0.125, -0.0];
        ck.adam_actor.t = 12;
        ck.epochs_done = 2;
        ck.trace = vec![
            EpochStats {
                epoch: 0,
                episodes: 4,
                mean_return: 1.5,
                success_rate: 0.25,
                loss: 0.1,
            },
            EpochStats {
                epoch: 1,
                episodes: 4,
                mean_return: 2.5,
                success_rate: 0.5,
                loss: 0.05,
            },
        ];
        ck
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn round_trip_with_codec() {
        let mut ck = sample();
        let dims = Dims::new(12, 8);
        let codec = Codec::learned(dims, 6, 4, 3).unwrap();
        ck.codec = Some(CodecState {
            dims,
            params: codec.learned_params().unwrap().clone(),
            loss_trace: vec![0.5, 0.25],
        });
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.codec.unwrap().codec().unwrap(), codec);
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"SNCK");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(b[6], 0);
        assert_eq!(b[7], 0);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 16);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let b = sample().to_bytes();
        for cut in [0, 3, 10, b.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&b[..cut]), Err(Error::Checkpoint(_))));
        }
        let mut bad_magic = b.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
        let mut extra = b;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
