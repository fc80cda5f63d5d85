use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{BaseModelConfig, Scalar};
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

pub const BSE_MAGIC: &[u8; 8] = b"MOIN-BSE";
pub const BSE_VERSION: u32 = 1;

/// Linear projections of a block, in canonical order. These are the layers
/// an adapter may attach to.
pub const PROJECTIONS: [&str; 7] = ["wq", "wk", "wv", "wo", "w_gate", "w_up", "w_down"];

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub attn_norm: Array1<T>,
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub wo: Array2<T>,
    pub mlp_norm: Array1<T>,
    pub w_gate: Array2<T>,
    pub w_up: Array2<T>,
    pub w_down: Array2<T>,
}

impl<T: Scalar> BlockParams<T> {
    pub fn projection(&self, idx: usize) -> &Array2<T> {
        [
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.w_gate,
            &self.w_up,
            &self.w_down,
        ][idx]
    }
}

/// All tensors of the base model. Also used as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams<T> {
    pub tok_emb: Array2<T>,
    pub pos_emb: Array2<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub final_norm: Array1<T>,
    pub head: Array2<T>,
}

impl<T: Scalar> BaseParams<T> {
    pub fn zeros(cfg: &BaseModelConfig) -> Self {
        let d = cfg.d_model;
        let h = cfg.mlp_hidden;
        let z2 = |r, c| Array2::zeros((r, c));
        Self {
            tok_emb: z2(cfg.vocab_size, d),
            pos_emb: z2(cfg.context_len, d),
            blocks: (0..cfg.n_layers)
                .map(|_| BlockParams {
                    attn_norm: Array1::zeros(d),
                    wq: z2(d, d),
                    wk: z2(d, d),
                    wv: z2(d, d),
                    wo: z2(d, d),
                    mlp_norm: Array1::zeros(d),
                    w_gate: z2(h, d),
                    w_up: z2(h, d),
                    w_down: z2(d, h),
                })
                .collect(),
            final_norm: Array1::zeros(d),
            head: z2(cfg.vocab_size, d),
        }
    }

    /// `(name, shape, data)` for every tensor in canonical order.
    pub fn named<'a>(&'a self) -> Vec<(String, Vec<usize>, &'a [T])> {
        fn a2<T>(a: &Array2<T>) -> (Vec<usize>, &[T]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn a1<T>(a: &Array1<T>) -> (Vec<usize>, &[T]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        let mut push = |name: String, (shape, data): (Vec<usize>, &'a [T])| {
            out.push((name, shape, data));
        };
        push("tok_emb".into(), a2(&self.tok_emb));
        push("pos_emb".into(), a2(&self.pos_emb));
        for (i, b) in self.blocks.iter().enumerate() {
            push(format!("blocks.{i}.attn_norm"), a1(&b.attn_norm));
            for (p, name) in PROJECTIONS.iter().enumerate().take(4) {
                push(format!("blocks.{i}.{name}"), a2(b.projection(p)));
            }
            push(format!("blocks.{i}.mlp_norm"), a1(&b.mlp_norm));
            for (p, name) in PROJECTIONS.iter().enumerate().skip(4) {
                push(format!("blocks.{i}.{name}"), a2(b.projection(p)));
            }
        }
        push("final_norm".into(), a1(&self.final_norm));
        push("head".into(), a2(&self.head));
        out
    }

    /// Mutable slices in the same order as [`BaseParams::named`].
    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        fn s<T, D: ndarray::Dimension>(a: &mut ndarray::Array<T, D>) -> &mut [T] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out = vec![s(&mut self.tok_emb), s(&mut self.pos_emb)];
        for b in &mut self.blocks {
            out.push(s(&mut b.attn_norm));
            out.push(s(&mut b.wq));
            out.push(s(&mut b.wk));
            out.push(s(&mut b.wv));
            out.push(s(&mut b.wo));
            out.push(s(&mut b.mlp_norm));
            out.push(s(&mut b.w_gate));
            out.push(s(&mut b.w_up));
            out.push(s(&mut b.w_down));
        }
        out.push(s(&mut self.final_norm));
        out.push(s(&mut self.head));
        out
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.named().into_iter().map(|(_, _, d)| d).collect()
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> BaseParams<U> {
        let c2 = |a: &Array2<T>| a.mapv(|x| U::lit(x.as_f64()));
        let c1 = |a: &Array1<T>| a.mapv(|x| U::lit(x.as_f64()));
        BaseParams {
            tok_emb: c2(&self.tok_emb),
            pos_emb: c2(&self.pos_emb),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    attn_norm: c1(&b.attn_norm),
                    wq: c2(&b.wq),
                    wk: c2(&b.wk),
                    wv: c2(&b.wv),
                    wo: c2(&b.wo),
                    mlp_norm: c1(&b.mlp_norm),
                    w_gate: c2(&b.w_gate),
                    w_up: c2(&b.w_up),
                    w_down: c2(&b.w_down),
                })
                .collect(),
            final_norm: c1(&self.final_norm),
            head: c2(&self.head),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel<T = f32> {
    pub config: BaseModelConfig,
    pub params: BaseParams<T>,
    frozen: bool,
}

impl<T: Scalar> BaseModel<T> {
    /// Projections and embeddings ~ N(0, 0.02²) drawn in f32 from a ChaCha8
    /// stream seeded by `init_seed`, in canonical tensor order; norm gains
    /// are 1.
    pub fn init(config: BaseModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = BaseParams::<T>::zeros(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let normal = Normal::new(0.0f32, 0.02).expect("valid std");
        let names: Vec<String> = params.named().into_iter().map(|(n, _, _)| n).collect();
        for (name, slice) in names.iter().zip(params.slices_mut()) {
            if name.ends_with("norm") {
                slice.fill(T::one());
            } else {
                for v in slice.iter_mut() {
                    *v = T::lit(f64::from(normal.sample(&mut rng)));
                }
            }
        }
        Ok(Self {
            config,
            params,
            frozen: false,
        })
    }

    pub fn from_params(config: BaseModelConfig, params: BaseParams<T>) -> Result<Self> {
        config.validate()?;
        let expect = BaseParams::<T>::zeros(&config);
        for ((n, s1, _), (_, s2, _)) in expect.named().iter().zip(params.named().iter()) {
            if s1 != s2 {
                return Err(Error::ShapeMismatch(format!("{n}: expected {s1:?}, got {s2:?}")));
            }
        }
        if expect.blocks.len() != params.blocks.len() {
            return Err(Error::ShapeMismatch("layer count".into()));
        }
        Ok(Self {
            config,
            params,
            frozen: false,
        })
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// `(name, (out, in))` for every adaptable projection.
    pub fn adaptable_layers(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (i, b) in self.params.blocks.iter().enumerate() {
            for (p, name) in PROJECTIONS.iter().enumerate() {
                let w = b.projection(p);
                out.push((format!("blocks.{i}.{name}"), (w.nrows(), w.ncols())));
            }
        }
        out
    }

    /// `blocks.{i}.{proj}` → (block, projection index).
    pub fn locate(&self, name: &str) -> Option<(usize, usize)> {
        let rest = name.strip_prefix("blocks.")?;
        let (i, proj) = rest.split_once('.')?;
        let i: usize = i.parse().ok()?;
        let p = PROJECTIONS.iter().position(|&n| n == proj)?;
        (i < self.params.blocks.len()).then_some((i, p))
    }

    pub fn linear(&self, name: &str) -> Option<&Array2<T>> {
        let (i, p) = self.locate(name)?;
        Some(self.params.blocks[i].projection(p))
    }

    pub fn linear_mut(&mut self, name: &str) -> Option<&mut Array2<T>> {
        let (i, p) = self.locate(name)?;
        let b = &mut self.params.blocks[i];
        Some(match p {
            0 => &mut b.wq,
            1 => &mut b.wk,
            2 => &mut b.wv,
            3 => &mut b.wo,
            4 => &mut b.w_gate,
            5 => &mut b.w_up,
            _ => &mut b.w_down,
        })
    }

    /// SHA-256 over tensor names and their f32 little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, _, data) in self.params.named() {
            h.update(name.as_bytes());
            for v in data {
                h.update((v.as_f64() as f32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn cast<U: Scalar>(&self) -> BaseModel<U> {
        BaseModel {
            config: self.config,
            params: self.params.cast(),
            frozen: self.frozen,
        }
    }

    /// Checkpoint: magic, version, config block, frozen flag, tensor count,
    /// then per tensor: name, rank, dims (u32), f32 LE data.
    pub fn save(&self, path: &Path) -> Result<()> {
        let c = &self.config;
        binio::write_atomic(path, |w| {
            w.magic(BSE_MAGIC, BSE_VERSION)?;
            for v in [
                c.vocab_size,
                c.d_model,
                c.n_layers,
                c.n_heads,
                c.context_len,
                c.mlp_hidden,
            ] {
                w.u32(v as u32)?;
            }
            w.u64(c.rms_norm_eps.to_bits())?;
            w.u64(c.init_seed)?;
            w.u8(u8::from(self.frozen))?;
            let named = self.params.named();
            w.u32(named.len() as u32)?;
            for (name, shape, data) in named {
                w.str(&name)?;
                w.u32(shape.len() as u32)?;
                for d in shape {
                    w.u32(d as u32)?;
                }
                w.f32s(data.iter().map(|v| v.as_f64() as f32))?;
            }
            Ok(())
        })
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut r = Reader::new(r);
        r.magic(BSE_MAGIC, BSE_VERSION)?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32("config")? as usize;
        }
        let eps = f64::from_bits(r.u64("config")?);
        let config = BaseModelConfig {
            vocab_size: dims[0],
            d_model: dims[1],
            n_layers: dims[2],
            n_heads: dims[3],
            context_len: dims[4],
            mlp_hidden: dims[5],
            rms_norm_eps: eps,
            init_seed: r.u64("config")?,
        };
        config.validate()?;
        let frozen = r.u8("frozen flag")? != 0;
        let mut params = BaseParams::<T>::zeros(&config);
        let expected: Vec<(String, Vec<usize>)> =
            params.named().into_iter().map(|(n, s, _)| (n, s)).collect();
        let count = r.u32("tensor count")? as usize;
        if count != expected.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        for ((name, shape), slot) in expected.iter().zip(params.slices_mut()) {
            let got = r.str("tensor name")?;
            if &got != name {
                return Err(Error::Format(format!("expected tensor {name}, found {got}")));
            }
            let rank = r.u32(name)? as usize;
            let got_shape = (0..rank)
                .map(|_| r.u32(name).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if &got_shape != shape {
                return Err(Error::Format(format!(
                    "{name}: shape {got_shape:?}, expected {shape:?}"
                )));
            }
            let values = r.f32s(slot.len(), name)?;
            for (dst, v) in slot.iter_mut().zip(values) {
                *dst = T::lit(f64::from(v));
            }
        }
        r.expect_eof()?;
        Ok(Self {
            config,
            params,
            frozen,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(binio::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent closed-form count from the config.
    fn closed_form(c: &BaseModelConfig) -> usize {
        let (v, d, l, h, t) = (c.vocab_size, c.d_model, c.n_layers, c.mlp_hidden, c.context_len);
        v * d + t * d + l * (2 * d + 4 * d * d + 3 * d * h) + d + v * d
    }

    #[test]
    fn param_count_matches_closed_form() {
        for cfg in [
            BaseModelConfig::default(),
            BaseModelConfig {
                d_model: 12,
                n_heads: 3,
                n_layers: 3,
                mlp_hidden: 20,
                context_len: 9,
                ..Default::default()
            },
        ] {
            let m = BaseModel::<f32>::init(cfg).unwrap();
            assert_eq!(m.num_params(), closed_form(&cfg));
        }
    }

    #[test]
    fn head_dim_and_validation() {
        assert_eq!(BaseModelConfig::default().head_dim(), 16);
        let bad = BaseModelConfig {
            n_heads: 5,
            ..Default::default()
        };
        assert!(BaseModel::<f32>::init(bad).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = BaseModel::<f32>::init(BaseModelConfig::default()).unwrap();
        let b = BaseModel::<f32>::init(BaseModelConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        let c = BaseModel::<f32>::init(BaseModelConfig {
            init_seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.checksum(), c.checksum());
        assert!(a.params.blocks[0].attn_norm.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn f64_init_is_cast_of_f32_init() {
        let a = BaseModel::<f32>::init(BaseModelConfig::default()).unwrap();
        let b = BaseModel::<f64>::init(BaseModelConfig::default()).unwrap();
        assert_eq!(a.cast::<f64>(), b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bse");
        let mut m = BaseModel::<f32>::init(BaseModelConfig {
            d_model: 8,
            n_heads: 2,
            mlp_hidden: 16,
            context_len: 8,
            ..Default::default()
        })
        .unwrap();
        m.freeze();
        m.save(&p).unwrap();
        let back = BaseModel::<f32>::load(&p).unwrap();
        assert_eq!(back, m);
        let bytes = std::fs::read(&p).unwrap();
        assert!(matches!(
            BaseModel::<f32>::read(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn locate_names() {
        let m = BaseModel::<f32>::init(BaseModelConfig::default()).unwrap();
        assert_eq!(m.locate("blocks.1.w_up"), Some((1, 5)));
        assert_eq!(m.locate("blocks.2.wq"), None);
        assert_eq!(m.locate("head"), None);
        assert_eq!(m.adaptable_layers().len(), 14);
        assert_eq!(m.linear("blocks.0.w_down").unwrap().dim(), (64, 256));
    }
}
