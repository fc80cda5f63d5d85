//! On-disk formats: round trips, and the errors a damaged file produces.

use std::path::Path;

use moin::corpus::{load_corpus, load_mc_items, Split};
use moin::embedder::{embed_batch, load_embeddings, save_embeddings, EmbedderConfig};
use moin::lm::{BaseModel, BaseModelConfig};
use moin::lora::{init_adapter, LoraAdapter};
use moin::synthetic::make_synthetic_corpus;
use moin::topic_model::{ctfidf_keywords, kmeans_fit, Assignment, KMeansParams, TopicModel};
use moin::Error;

fn tiny_base() -> BaseModel<f32> {
    let mut b = BaseModel::<f32>::init(BaseModelConfig {
        d_model: 16,
        n_heads: 2,
        mlp_hidden: 32,
        context_len: 16,
        rms_norm_eps: 1e-6,
        ..Default::default()
    })
    .unwrap();
    b.freeze();
    b
}

/// Every strict prefix of a valid file must fail to load, never panic or
/// silently succeed.
fn assert_prefixes_fail<T>(bytes: &[u8], dir: &Path, load: impl Fn(&Path) -> moin::Result<T>) {
    let p = dir.join("cut");
    let step = (bytes.len() / 97).max(1);
    for cut in (0..bytes.len()).step_by(step) {
        std::fs::write(&p, &bytes[..cut]).unwrap();
        match load(&p) {
            Err(Error::Truncated(_)) | Err(Error::Format(_)) => {}
            Err(e) => panic!("prefix of {cut} bytes: unexpected error {e}"),
            Ok(_) => panic!("prefix of {cut} bytes loaded"),
        }
    }
}

fn assert_header_checked<T>(bytes: &[u8], dir: &Path, load: impl Fn(&Path) -> moin::Result<T>) {
    let p = dir.join("bad");
    let mut wrong_magic = bytes.to_vec();
    wrong_magic[0] ^= 0xff;
    std::fs::write(&p, &wrong_magic).unwrap();
    assert!(matches!(load(&p), Err(Error::Format(m)) if m.contains("magic")));
    let mut future = bytes.to_vec();
    future[8..12].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&p, &future).unwrap();
    assert!(matches!(load(&p), Err(Error::Format(m)) if m.contains("version")));
}

#[test]
fn base_checkpoint_round_trip_and_damage() {
    let dir = tempfile::tempdir().unwrap();
    let base = tiny_base();
    let p = dir.path().join("base.bse");
    base.save(&p).unwrap();
    let back = BaseModel::<f32>::load(&p).unwrap();
    assert_eq!(back.config, base.config);
    assert_eq!(back.checksum(), base.checksum());
    assert_eq!(back.config.rms_norm_eps, 1e-6);
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..8], b"MOIN-BSE");
    assert_header_checked(&bytes, dir.path(), BaseModel::<f32>::load);
    assert_prefixes_fail(&bytes, dir.path(), BaseModel::<f32>::load);
}

#[test]
fn adapter_round_trip_and_damage() {
    let dir = tempfile::tempdir().unwrap();
    let base = tiny_base();
    let mut a = init_adapter(&base, 17, 2, 3).unwrap();
    a.meta.tokens_seen = 12345;
    a.meta.final_loss = 2.5;
    a.layers[0].b.fill(0.25);
    let p = dir.path().join("a.lra");
    a.save(&p).unwrap();
    let back = LoraAdapter::<f32>::load(&p).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.checksum(), a.checksum());
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..8], b"MOIN-LRA");
    assert_header_checked(&bytes, dir.path(), LoraAdapter::<f32>::load);
    assert_prefixes_fail(&bytes, dir.path(), LoraAdapter::<f32>::load);

    // Saving is deterministic byte for byte.
    let p2 = dir.path().join("b.lra");
    a.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p2).unwrap(), bytes);
}

#[test]
fn adapter_from_another_base_is_rejected() {
    let base = tiny_base();
    let other = BaseModel::<f32>::init(BaseModelConfig {
        d_model: 24,
        n_heads: 2,
        mlp_hidden: 32,
        context_len: 16,
        ..Default::default()
    })
    .unwrap();
    let a = init_adapter(&other, 0, 2, 0).unwrap();
    assert!(base.forward(Some(&a), &[256, 97]).is_err());
}

#[test]
fn embeddings_and_topics_round_trip_and_damage() {
    let dir = tempfile::tempdir().unwrap();
    let sc = make_synthetic_corpus(3, 20, 20, 1).unwrap();
    let cfg = EmbedderConfig {
        dimension: 24,
        ..Default::default()
    };
    let emb = embed_batch(&sc.corpus.texts(), &cfg);
    let ep = dir.path().join("e.emb");
    save_embeddings(&emb, 24, &ep).unwrap();
    assert_eq!(load_embeddings(&ep).unwrap(), emb);
    let bytes = std::fs::read(&ep).unwrap();
    assert_eq!(&bytes[..8], b"MOIN-EMB");
    assert_header_checked(&bytes, dir.path(), load_embeddings);
    assert_prefixes_fail(&bytes, dir.path(), load_embeddings);

    let fit = kmeans_fit(&emb, &KMeansParams::new(3, 0)).unwrap();
    let assignment = Assignment::from_labels(&sc.corpus, &fit.labels).unwrap();
    let mut model = fit.model.prune(21).unwrap_or_else(|_| fit.model.clone());
    model.keywords = Some(ctfidf_keywords(&sc.corpus, &assignment, &model, 4));
    let tp = dir.path().join("t.tpc");
    model.save(&tp).unwrap();
    assert_eq!(TopicModel::load(&tp).unwrap(), model);
    let bytes = std::fs::read(&tp).unwrap();
    assert_eq!(&bytes[..8], b"MOIN-TPC");
    assert_header_checked(&bytes, dir.path(), TopicModel::load);
    assert_prefixes_fail(&bytes, dir.path(), TopicModel::load);
}

#[test]
fn jsonl_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.jsonl");
    std::fs::write(&p, "{\"id\": 1, \"text\": \"a\"}\n\n{\"id\": 2, \"txt\": \"b\"}\n").unwrap();
    assert!(matches!(load_corpus(&p, Split::Train), Err(Error::Parse { line: 3, .. })));

    std::fs::write(&p, "{\"id\": 1, \"text\": \"a\"}\n{\"id\": 1, \"text\": \"b\"}\n").unwrap();
    assert!(matches!(load_corpus(&p, Split::Train), Err(Error::DuplicateDocId(1))));

    std::fs::write(&p, "").unwrap();
    assert!(matches!(load_corpus(&p, Split::Train), Err(Error::EmptyCorpus(_))));

    // Extra keys are allowed.
    std::fs::write(&p, "{\"id\": 4, \"text\": \"x\", \"source\": \"web\"}\n").unwrap();
    assert_eq!(load_corpus(&p, Split::Train).unwrap().len(), 1);

    let t = dir.path().join("t.jsonl");
    std::fs::write(
        &t,
        "{\"id\": 0, \"prompt\": \"p\", \"options\": [\"a\", \"b\"], \"gold\": 1}\n\
         {\"id\": 1, \"prompt\": \"p\", \"options\": [\"a\", \"b\"], \"gold\": 2}\n",
    )
    .unwrap();
    assert!(matches!(load_mc_items(&t), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn missing_files_report_the_path() {
    let err = BaseModel::<f32>::load(Path::new("/nonexistent/base.bse")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/base.bse"));
}
