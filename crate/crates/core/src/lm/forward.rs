//! Forward pass with activation cache, and the matching hand-written backward.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2};

use super::{BaseModel, BaseParams, Scalar};
use crate::error::{Error, Result};
use crate::lora::{LoraAdapter, LoraLayer};

const WQ: usize = 0;
const WK: usize = 1;
const WV: usize = 2;
const WO: usize = 3;
const GATE: usize = 4;
const UP: usize = 5;
const DOWN: usize = 6;

/// Where gradients accumulate. `Lora` skips every base-weight gradient.
pub enum GradTarget<'a, T> {
    Base(&'a mut BaseParams<T>),
    Lora(&'a mut LoraAdapter<T>),
}

struct BlockCache<T> {
    x_in: Array2<T>,
    inv1: Array1<T>,
    h1: Array2<T>,
    /// `x · W_aᵀ` per adapted projection.
    z: [Option<Array2<T>>; 7],
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    att: Array2<T>,
    x_mid: Array2<T>,
    inv2: Array1<T>,
    h2: Array2<T>,
    gate: Array2<T>,
    up: Array2<T>,
    act: Array2<T>,
}

pub struct ForwardCache<T> {
    tokens: Vec<u32>,
    slots: Vec<[Option<usize>; 7]>,
    blocks: Vec<BlockCache<T>>,
    x_final: Array2<T>,
    inv_f: Array1<T>,
    hf: Array2<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn rmsnorm<T: Scalar>(x: &Array2<T>, g: &Array1<T>, eps: T) -> (Array2<T>, Array1<T>) {
    let d = T::lit(x.ncols() as f64);
    let mut y = x.clone();
    let mut inv = Array1::zeros(x.nrows());
    for (mut row, iv) in y.rows_mut().into_iter().zip(inv.iter_mut()) {
        let ms = row.iter().map(|&v| v * v).sum::<T>() / d;
        *iv = T::one() / (ms + eps).sqrt();
        let r = *iv;
        row.zip_mut_with(g, |v, &gi| *v = *v * r * gi);
    }
    (y, inv)
}

fn rmsnorm_back<T: Scalar>(
    dy: &Array2<T>,
    x: &Array2<T>,
    inv: &Array1<T>,
    g: &Array1<T>,
    mut dg: Option<&mut Array1<T>>,
) -> Array2<T> {
    let d = T::lit(x.ncols() as f64);
    let mut dx = Array2::zeros(x.raw_dim());
    for (((dyr, xr), &r), mut dxr) in dy
        .rows()
        .into_iter()
        .zip(x.rows())
        .zip(inv.iter())
        .zip(dx.rows_mut())
    {
        let mut dot = T::zero();
        for ((&dyi, &xi), &gi) in dyr.iter().zip(xr.iter()).zip(g.iter()) {
            dot += dyi * gi * xi;
        }
        let c = r * r * r * dot / d;
        for (((o, &dyi), &xi), &gi) in dxr.iter_mut().zip(dyr.iter()).zip(xr.iter()).zip(g.iter()) {
            *o = dyi * gi * r - xi * c;
        }
        if let Some(dg) = dg.as_deref_mut() {
            for ((o, &dyi), &xi) in dg.iter_mut().zip(dyr.iter()).zip(xr.iter()) {
                *o += dyi * xi * r;
            }
        }
    }
    dx
}

fn lin<T: Scalar>(
    x: &Array2<T>,
    w: &Array2<T>,
    lora: Option<&LoraLayer<T>>,
) -> (Array2<T>, Option<Array2<T>>) {
    let mut y = x.dot(&w.t());
    let z = lora.map(|l| {
        let z = x.dot(&l.a.t());
        general_mat_mul(T::one(), &z, &l.b.t(), T::one(), &mut y);
        z
    });
    (y, z)
}

/// Returns `dx`; accumulates `dW` and/or the adapter factor gradients.
fn lin_back<T: Scalar>(
    dy: ArrayView2<T>,
    x: &Array2<T>,
    w: &Array2<T>,
    lora: Option<(&LoraLayer<T>, &Array2<T>)>,
    gw: Option<&mut Array2<T>>,
    glora: Option<&mut LoraLayer<T>>,
) -> Array2<T> {
    let mut dx = dy.dot(w);
    if let Some((l, z)) = lora {
        let dz = dy.dot(&l.b);
        general_mat_mul(T::one(), &dz, &l.a, T::one(), &mut dx);
        if let Some(g) = glora {
            general_mat_mul(T::one(), &dy.t(), z, T::one(), &mut g.b);
            general_mat_mul(T::one(), &dz.t(), x, T::one(), &mut g.a);
        }
    }
    if let Some(gw) = gw {
        general_mat_mul(T::one(), &dy.t(), x, T::one(), gw);
    }
    dx
}

fn block_weight_grad<T: Scalar>(g: &mut BaseParams<T>, blk: usize, proj: usize) -> &mut Array2<T> {
    let b = &mut g.blocks[blk];
    match proj {
        WQ => &mut b.wq,
        WK => &mut b.wk,
        WV => &mut b.wv,
        WO => &mut b.wo,
        GATE => &mut b.w_gate,
        UP => &mut b.w_up,
        _ => &mut b.w_down,
    }
}

impl<T: Scalar> BaseModel<T> {
    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Invalid("empty token sequence".into()));
        }
        if tokens.len() > self.config.context_len {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: self.config.context_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Invalid(format!("token id {bad} outside vocabulary")));
        }
        Ok(())
    }

    /// Logits `(len × vocab_size)`; with an adapter, every adapted projection
    /// computes `W x + W_b (W_a x)`.
    pub fn forward(&self, adapter: Option<&LoraAdapter<T>>, tokens: &[u32]) -> Result<Array2<T>> {
        self.forward_cached(adapter, tokens).map(|(logits, _)| logits)
    }

    pub fn forward_cached(
        &self,
        adapter: Option<&LoraAdapter<T>>,
        tokens: &[u32],
    ) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_tokens(tokens)?;
        let slots = match adapter {
            Some(a) => a.resolve(self)?,
            None => vec![[None; 7]; self.params.blocks.len()],
        };
        let cfg = &self.config;
        let n = tokens.len();
        let eps = T::lit(cfg.rms_norm_eps);
        let hd = cfg.head_dim();
        let scale = T::lit(1.0 / (hd as f64).sqrt());
        let p = &self.params;

        let mut x = Array2::zeros((n, cfg.d_model));
        for (i, &tok) in tokens.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&p.tok_emb.row(tok as usize));
            row += &p.pos_emb.row(i);
        }

        let mut blocks = Vec::with_capacity(p.blocks.len());
        for (bi, bp) in p.blocks.iter().enumerate() {
            let layer = |proj: usize| {
                slots[bi][proj].map(|idx| &adapter.expect("slots imply adapter").layers[idx])
            };
            let mut z: [Option<Array2<T>>; 7] = Default::default();

            let (h1, inv1) = rmsnorm(&x, &bp.attn_norm, eps);
            let (q, zq) = lin(&h1, &bp.wq, layer(WQ));
            let (k, zk) = lin(&h1, &bp.wk, layer(WK));
            let (v, zv) = lin(&h1, &bp.wv, layer(WV));
            z[WQ] = zq;
            z[WK] = zk;
            z[WV] = zv;

            let mut att = Array2::zeros((n, cfg.d_model));
            let mut probs = Vec::with_capacity(cfg.n_heads);
            for h in 0..cfg.n_heads {
                let cols = s![.., h * hd..(h + 1) * hd];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t());
                for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                    let mut max = T::neg_infinity();
                    for &sv in row.iter().take(i + 1) {
                        max = max.max(sv * scale);
                    }
                    let mut sum = T::zero();
                    for (j, sv) in row.iter_mut().enumerate() {
                        if j <= i {
                            *sv = (*sv * scale - max).exp();
                            sum += *sv;
                        } else {
                            *sv = T::zero();
                        }
                    }
                    row.mapv_inplace(|e| e / sum);
                }
                att.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            let (o, zo) = lin(&att, &bp.wo, layer(WO));
            z[WO] = zo;
            let x_in = std::mem::replace(&mut x, o);
            x += &x_in;

            let (h2, inv2) = rmsnorm(&x, &bp.mlp_norm, eps);
            let (gate, zg) = lin(&h2, &bp.w_gate, layer(GATE));
            let (up, zu) = lin(&h2, &bp.w_up, layer(UP));
            z[GATE] = zg;
            z[UP] = zu;
            let mut act = gate.mapv(|g| g * sigmoid(g));
            act *= &up;
            let (down, zd) = lin(&act, &bp.w_down, layer(DOWN));
            z[DOWN] = zd;
            let x_mid = std::mem::replace(&mut x, down);
            x += &x_mid;

            blocks.push(BlockCache {
                x_in,
                inv1,
                h1,
                z,
                q,
                k,
                v,
                probs,
                att,
                x_mid,
                inv2,
                h2,
                gate,
                up,
                act,
            });
        }

        let (hf, inv_f) = rmsnorm(&x, &p.final_norm, eps);
        let logits = hf.dot(&p.head.t());
        Ok((
            logits,
            ForwardCache {
                tokens: tokens.to_vec(),
                slots,
                blocks,
                x_final: x,
                inv_f,
                hf,
            },
        ))
    }

    /// Backpropagates `dlogits` through the cached forward pass, adding into
    /// `target`. `adapter` must be the one used for the forward pass.
    pub fn backward(
        &self,
        adapter: Option<&LoraAdapter<T>>,
        cache: &ForwardCache<T>,
        dlogits: ArrayView2<T>,
        target: &mut GradTarget<'_, T>,
    ) -> Result<()> {
        let cfg = &self.config;
        let n = cache.tokens.len();
        if dlogits.dim() != (n, cfg.vocab_size) {
            return Err(Error::ShapeMismatch(format!(
                "dlogits {:?}, expected ({n}, {})",
                dlogits.dim(),
                cfg.vocab_size
            )));
        }
        if let GradTarget::Lora(g) = target {
            let a = adapter.ok_or_else(|| Error::Invalid("adapter gradient without adapter".into()))?;
            if g.layers.len() != a.layers.len() {
                return Err(Error::ShapeMismatch("gradient buffer does not match adapter".into()));
            }
        }
        let p = &self.params;
        let hd = cfg.head_dim();
        let scale = T::lit(1.0 / (hd as f64).sqrt());

        let dhf = dlogits.dot(&p.head);
        let mut dx = match target {
            GradTarget::Base(g) => {
                general_mat_mul(T::one(), &dlogits.t(), &cache.hf, T::one(), &mut g.head);
                rmsnorm_back(&dhf, &cache.x_final, &cache.inv_f, &p.final_norm, Some(&mut g.final_norm))
            }
            GradTarget::Lora(_) => rmsnorm_back(&dhf, &cache.x_final, &cache.inv_f, &p.final_norm, None),
        };

        for bi in (0..p.blocks.len()).rev() {
            let bp = &p.blocks[bi];
            let c = &cache.blocks[bi];
            let slots = cache.slots[bi];
            let lb = |proj: usize, dy: ArrayView2<T>, x: &Array2<T>, w: &Array2<T>, target: &mut GradTarget<'_, T>| {
                let lora = slots[proj].map(|idx| {
                    (
                        &adapter.expect("slots imply adapter").layers[idx],
                        c.z[proj].as_ref().expect("cached z"),
                    )
                });
                match target {
                    GradTarget::Base(g) => lin_back(dy, x, w, lora, Some(block_weight_grad(g, bi, proj)), None),
                    GradTarget::Lora(g) => {
                        let gl = slots[proj].map(|idx| &mut g.layers[idx]);
                        lin_back(dy, x, w, lora, None, gl)
                    }
                }
            };

            // MLP: x = x_mid + down(silu(gate) * up)
            let dact = lb(DOWN, dx.view(), &c.act, &bp.w_down, target);
            let mut dgate = Array2::zeros(c.gate.raw_dim());
            let mut dup = Array2::zeros(c.up.raw_dim());
            ndarray::Zip::from(&mut dgate)
                .and(&mut dup)
                .and(&dact)
                .and(&c.gate)
                .and(&c.up)
                .for_each(|dg, du, &da, &g, &u| {
                    let sg = sigmoid(g);
                    *du = da * g * sg;
                    *dg = da * u * sg * (T::one() + g * (T::one() - sg));
                });
            let mut dh2 = lb(GATE, dgate.view(), &c.h2, &bp.w_gate, target);
            dh2 += &lb(UP, dup.view(), &c.h2, &bp.w_up, target);
            let dg2 = match target {
                GradTarget::Base(g) => Some(&mut g.blocks[bi].mlp_norm),
                GradTarget::Lora(_) => None,
            };
            dx += &rmsnorm_back(&dh2, &c.x_mid, &c.inv2, &bp.mlp_norm, dg2);

            // Attention: x_mid = x_in + wo(att)
            let datt = lb(WO, dx.view(), &c.att, &bp.wo, target);
            let mut dq = Array2::zeros((n, cfg.d_model));
            let mut dk = Array2::zeros((n, cfg.d_model));
            let mut dv = Array2::zeros((n, cfg.d_model));
            for h in 0..cfg.n_heads {
                let cols = s![.., h * hd..(h + 1) * hd];
                let prob = &c.probs[h];
                let dout = datt.slice(cols);
                let dp = dout.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&prob.t().dot(&dout));
                let mut ds = dp;
                for (mut dsr, pr) in ds.rows_mut().into_iter().zip(prob.rows()) {
                    let dot: T = dsr.iter().zip(pr.iter()).map(|(&a, &b)| a * b).sum();
                    dsr.zip_mut_with(&pr, |d, &pv| *d = pv * (*d - dot) * scale);
                }
                let mut dqh: ArrayViewMut2<T> = dq.slice_mut(cols);
                general_mat_mul(T::one(), &ds, &c.k.slice(cols), T::zero(), &mut dqh);
                let mut dkh = dk.slice_mut(cols);
                general_mat_mul(T::one(), &ds.t(), &c.q.slice(cols), T::zero(), &mut dkh);
            }
            let mut dh1 = lb(WQ, dq.view(), &c.h1, &bp.wq, target);
            dh1 += &lb(WK, dk.view(), &c.h1, &bp.wk, target);
            dh1 += &lb(WV, dv.view(), &c.h1, &bp.wv, target);
            let dg1 = match target {
                GradTarget::Base(g) => Some(&mut g.blocks[bi].attn_norm),
                GradTarget::Lora(_) => None,
            };
            dx += &rmsnorm_back(&dh1, &c.x_in, &c.inv1, &bp.attn_norm, dg1);
        }

        if let GradTarget::Base(g) = target {
            for (i, &tok) in cache.tokens.iter().enumerate() {
                let row = dx.row(i);
                g.tok_emb.row_mut(tok as usize).zip_mut_with(&row, |a, &b| *a += b);
                g.pos_emb.row_mut(i).zip_mut_with(&row, |a, &b| *a += b);
            }
        }
        Ok(())
    }
}
