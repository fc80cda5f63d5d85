//! Low-rank adapters: the per-topic experts.
//!
//! An adapted linear layer computes `y = W x + W_b (W_a x)` with
//! `W_a: r × d` and `W_b: k × r`. There is no `alpha / r` scaling and no
//! dropout. Fresh adapters have `W_a ~ N(0, 0.02²)` and `W_b = 0`, so they
//! are exact no-ops until trained. Adapters attach to the seven projections
//! of every block; embeddings and the output head are never adapted.

use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::lm::{BaseModel, Scalar};

pub const LRA_MAGIC: &[u8; 8] = b"MOIN-LRA";
pub const LRA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer<T = f32> {
    pub name: String,
    /// `r × d`
    pub a: Array2<T>,
    /// `k × r`
    pub b: Array2<T>,
}

impl<T: Scalar> LoraLayer<T> {
    pub fn in_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.b.nrows()
    }

    /// Dense `W_b · W_a`.
    pub fn delta(&self) -> Array2<T> {
        self.b.dot(&self.a)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainMeta {
    pub tokens_seen: u64,
    pub final_loss: f32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<T = f32> {
    pub topic_id: u64,
    pub rank: usize,
    pub layers: Vec<LoraLayer<T>>,
    pub meta: TrainMeta,
}

/// `W x + W_b (W_a x)`.
pub fn apply<T: Scalar>(
    w: &Array2<T>,
    a: &Array2<T>,
    b: &Array2<T>,
    x: ArrayView1<T>,
) -> Result<Array1<T>> {
    let (k, d) = w.dim();
    let r = a.nrows();
    if x.len() != d || a.ncols() != d || b.dim() != (k, r) {
        return Err(Error::ShapeMismatch(format!(
            "W {:?}, W_a {:?}, W_b {:?}, x {}",
            w.dim(),
            a.dim(),
            b.dim(),
            x.len()
        )));
    }
    Ok(w.dot(&x) + b.dot(&a.dot(&x)))
}

/// Fresh adapter over every projection of `base`.
pub fn init_adapter<T: Scalar>(
    base: &BaseModel<T>,
    topic_id: u64,
    rank: usize,
    seed: u64,
) -> Result<LoraAdapter<T>> {
    if rank == 0 {
        return Err(Error::InvalidConfig("rank must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 0.02).expect("valid std");
    let mut layers = Vec::new();
    for (name, (k, d)) in base.adaptable_layers() {
        let limit = k.min(d);
        if rank > limit {
            return Err(Error::InvalidConfig(format!(
                "rank {rank} exceeds min(d, k) = {limit} for {name}"
            )));
        }
        if rank * 4 > limit {
            log::warn!("rank {rank} is above min(d, k)/4 for {name}; adapter is not low-rank");
        }
        let a = Array2::from_shape_simple_fn((rank, d), || T::lit(f64::from(normal.sample(&mut rng))));
        layers.push(LoraLayer {
            name,
            a,
            b: Array2::zeros((k, rank)),
        });
    }
    Ok(LoraAdapter {
        topic_id,
        rank,
        layers,
        meta: TrainMeta {
            seed,
            ..Default::default()
        },
    })
}

impl<T: Scalar> LoraAdapter<T> {
    /// Number of added parameters, `Σ r (d + k)`.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.a.len() + l.b.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            topic_id: self.topic_id,
            rank: self.rank,
            layers: self
                .layers
                .iter()
                .map(|l| LoraLayer {
                    name: l.name.clone(),
                    a: Array2::zeros(l.a.dim()),
                    b: Array2::zeros(l.b.dim()),
                })
                .collect(),
            meta: self.meta,
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.a.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.a.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> LoraAdapter<U> {
        LoraAdapter {
            topic_id: self.topic_id,
            rank: self.rank,
            layers: self
                .layers
                .iter()
                .map(|l| LoraLayer {
                    name: l.name.clone(),
                    a: l.a.mapv(|x| U::lit(x.as_f64())),
                    b: l.b.mapv(|x| U::lit(x.as_f64())),
                })
                .collect(),
            meta: self.meta,
        }
    }

    /// For each block, the index into `layers` of each projection's adapter.
    /// Fails on unknown layer names, duplicates or shape mismatches.
    pub fn resolve(&self, base: &BaseModel<T>) -> Result<Vec<[Option<usize>; 7]>> {
        let mut slots = vec![[None; 7]; base.params.blocks.len()];
        for (idx, l) in self.layers.iter().enumerate() {
            let (blk, proj) = base
                .locate(&l.name)
                .ok_or_else(|| Error::ShapeMismatch(format!("unknown layer {}", l.name)))?;
            let w = base.params.blocks[blk].projection(proj);
            let (k, d) = w.dim();
            if l.a.dim() != (self.rank, d) || l.b.dim() != (k, self.rank) {
                return Err(Error::ShapeMismatch(format!(
                    "{}: W is {k}x{d}, W_a {:?}, W_b {:?}, rank {}",
                    l.name,
                    l.a.dim(),
                    l.b.dim(),
                    self.rank
                )));
            }
            if slots[blk][proj].replace(idx).is_some() {
                return Err(Error::ShapeMismatch(format!("duplicate layer {}", l.name)));
            }
        }
        Ok(slots)
    }

    /// Copy of `base` with `W + W_b W_a` materialized in every adapted layer.
    pub fn merge_into(&self, base: &BaseModel<T>) -> Result<BaseModel<T>> {
        self.resolve(base)?;
        let mut merged = base.clone();
        for l in &self.layers {
            let w = merged.linear_mut(&l.name).expect("resolved");
            *w += &l.delta();
        }
        Ok(merged)
    }

    /// SHA-256 over names and f32 LE tensor values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update(l.name.as_bytes());
            for v in l.a.iter().chain(l.b.iter()) {
                h.update((v.as_f64() as f32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

impl LoraAdapter<f32> {
    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_atomic(path, |w| {
            w.magic(LRA_MAGIC, LRA_VERSION)?;
            w.u64(self.topic_id)?;
            w.u32(self.rank as u32)?;
            w.u32(self.layers.len() as u32)?;
            for l in &self.layers {
                w.str(&l.name)?;
                w.u32(l.in_dim() as u32)?;
                w.u32(l.out_dim() as u32)?;
                w.f32s(l.a.iter().copied())?;
                w.f32s(l.b.iter().copied())?;
            }
            w.u64(self.meta.tokens_seen)?;
            w.f32(self.meta.final_loss)?;
            w.u64(self.meta.seed)?;
            Ok(())
        })
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut r = Reader::new(r);
        r.magic(LRA_MAGIC, LRA_VERSION)?;
        let topic_id = r.u64("topic_id")?;
        let rank = r.u32("rank")? as usize;
        let n = r.u32("layer count")? as usize;
        let mut layers = Vec::with_capacity(n.min(1024));
        for i in 0..n {
            let name = r.str(&format!("layer {i} name"))?;
            let d = r.u32(&name)? as usize;
            let k = r.u32(&name)? as usize;
            let a = r.f32s(rank * d, &format!("{name}.W_a"))?;
            let b = r.f32s(k * rank, &format!("{name}.W_b"))?;
            layers.push(LoraLayer {
                a: Array2::from_shape_vec((rank, d), a).expect("sized"),
                b: Array2::from_shape_vec((k, rank), b).expect("sized"),
                name,
            });
        }
        let meta = TrainMeta {
            tokens_seen: r.u64("metadata")?,
            final_loss: r.f32("metadata")?,
            seed: r.u64("metadata")?,
        };
        r.expect_eof()?;
        Ok(Self {
            topic_id,
            rank,
            layers,
            meta,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(binio::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::BaseModelConfig;
    use ndarray::array;
    use rand::Rng;

    fn base() -> BaseModel<f32> {
        BaseModel::init(BaseModelConfig::default()).unwrap()
    }

    #[test]
    fn zero_b_is_identity_of_base_layer() {
        let w = array![[1.0f64, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let a = array![[0.5, -1.0]];
        let b = Array2::zeros((3, 1));
        let x = array![0.25, -2.0];
        assert_eq!(apply(&w, &a, &b, x.view()).unwrap(), w.dot(&x));
    }

    #[test]
    fn hand_computed_rank_one() {
        let w = Array2::<f64>::zeros((3, 3));
        let a = array![[1.0, 0.0, 0.0]];
        let b = array![[1.0], [0.0], [0.0]];
        let x = array![7.0, 8.0, 9.0];
        assert_eq!(apply(&w, &a, &b, x.view()).unwrap(), array![7.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_dense_merge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = |r, c| Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0f64));
        let (w, a, b, x) = (m(3, 5), m(2, 5), m(3, 2), m(5, 1));
        let x = x.column(0).to_owned();
        let dense = (&w + &b.dot(&a)).dot(&x);
        let got = apply(&w, &a, &b, x.view()).unwrap();
        for (g, e) in got.iter().zip(dense.iter()) {
            assert!((g - e).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_errors() {
        let w = Array2::<f64>::zeros((3, 4));
        let a = Array2::zeros((2, 4));
        let b = Array2::zeros((3, 3));
        let x = Array1::zeros(4);
        assert!(matches!(apply(&w, &a, &b, x.view()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn init_layout_and_param_count() {
        let base = base();
        let ad = init_adapter(&base, 3, 8, 11).unwrap();
        assert_eq!(ad.layers.len(), 14);
        assert!(ad.layers.iter().all(|l| l.b.iter().all(|&v| v == 0.0)));
        // r (d + k) per layer: 4 attention (64,64) + gate/up (64->256) + down (256->64).
        let per_block = 4 * 8 * (64 + 64) + 3 * 8 * (64 + 256);
        assert_eq!(ad.num_params(), 2 * per_block);
        assert!(ad.resolve(&base).is_ok());
        assert!(init_adapter(&base, 0, 0, 0).is_err());
        assert!(init_adapter(&base, 0, 65, 0).is_err());
    }

    #[test]
    fn resolve_rejects_bad_layers() {
        let b = base();
        let mut ad = init_adapter(&b, 0, 4, 0).unwrap();
        ad.layers[0].name = "head".into();
        assert!(ad.resolve(&b).is_err());
        let mut ad = init_adapter(&b, 0, 4, 0).unwrap();
        ad.layers[1].name = ad.layers[0].name.clone();
        assert!(ad.resolve(&b).is_err());
        let small = BaseModel::<f32>::init(BaseModelConfig {
            d_model: 32,
            mlp_hidden: 64,
            ..Default::default()
        })
        .unwrap();
        let ad = init_adapter(&b, 0, 4, 0).unwrap();
        assert!(ad.resolve(&small).is_err());
    }

    #[test]
    fn file_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.lra");
        let mut ad = init_adapter(&base(), 5, 4, 9).unwrap();
        ad.layers[3].b[[2, 1]] = -0.125;
        ad.meta.tokens_seen = 1234;
        ad.meta.final_loss = 2.5;
        ad.save(&p).unwrap();
        let back = LoraAdapter::load(&p).unwrap();
        assert_eq!(back, ad);
        assert_eq!(back.checksum(), ad.checksum());
    }

    #[test]
    fn truncation_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.lra");
        init_adapter(&base(), 5, 4, 9).unwrap().save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        // Header (8 + 4 + 8 + 4 + 4) + name len/bytes + d + k, then 10 bytes into W_a.
        let cut = 28 + 4 + "blocks.0.wq".len() + 8 + 10;
        match LoraAdapter::read(&bytes[..cut]) {
            Err(Error::Truncated(what)) => assert_eq!(what, "blocks.0.wq.W_a"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
