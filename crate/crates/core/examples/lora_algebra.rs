//! Low-rank adapter algebra on a toy base model: the adapted projection,
//! the zero-init no-op, merging, added-parameter count and the file format.
//!
//! cargo run --release --example lora_algebra

use ndarray::Array1;

use moin::corpus::tokenize;
use moin::lm::{BaseModel, BaseModelConfig};
use moin::lora::{apply, init_adapter, LoraAdapter};

fn main() -> anyhow::Result<()> {
    let mut base = BaseModel::<f32>::init(BaseModelConfig::default())?;
    base.freeze();
    let mut adapter = init_adapter(&base, 3, 8, 42)?;

    let tokens = tokenize("a fresh adapter changes nothing");
    let before = base.forward(None, &tokens)?;
    let fresh = base.forward(Some(&adapter), &tokens)?;
    let max_diff = (&before - &fresh).iter().fold(0f32, |m, d| m.max(d.abs()));
    println!("fresh adapter, max |logit diff| = {max_diff:e}");

    // Give W_b some mass so the adapter does something.
    for (i, layer) in adapter.layers.iter_mut().enumerate() {
        layer.b.iter_mut().enumerate().for_each(|(j, v)| *v = ((i * 31 + j) % 7) as f32 * 1e-3);
    }
    let layer = &adapter.layers[0];
    let w = base.linear(&layer.name).expect("adapted layer exists");
    let x = Array1::from_shape_fn(layer.in_dim(), |i| (i as f32 * 0.1).sin());
    let y = apply(w, &layer.a, &layer.b, x.view())?;
    let dense = (w + &layer.delta()).dot(&x);
    let err = (&y - &dense).iter().fold(0f32, |m, d| m.max(d.abs()));
    println!("{}: |Wx + W_b(W_a x) - (W + W_b W_a)x| max = {err:e}", layer.name);

    let merged = adapter.merge_into(&base)?;
    let via_adapter = base.forward(Some(&adapter), &tokens)?;
    let via_merge = merged.forward(None, &tokens)?;
    let gap = (&via_adapter - &via_merge).iter().fold(0f32, |m, d| m.max(d.abs()));
    println!("adapter vs merged weights, max |logit diff| = {gap:e}");

    println!(
        "added parameters: {} over {} base ({:.1}%)",
        adapter.num_params(),
        base.num_params(),
        100.0 * adapter.num_params() as f64 / base.num_params() as f64
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("adapter.lra");
    adapter.save(&path)?;
    let back = LoraAdapter::<f32>::load(&path)?;
    println!(
        "saved {} bytes, reloads identical: {}, checksum {}",
        std::fs::metadata(&path)?.len(),
        back == adapter,
        back.checksum()
    );
    Ok(())
}
