//! The on-disk collection of trained adapters, keyed by topic.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lora::LoraAdapter;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdapterRegistry {
    adapters: BTreeMap<usize, LoraAdapter<f32>>,
}

impl AdapterRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_adapters(adapters: impl IntoIterator<Item = LoraAdapter<f32>>) -> Result<Self> {
        let mut reg = Self::empty();
        for a in adapters {
            reg.insert(a)?;
        }
        Ok(reg)
    }

    /// Loads every `*.lra` file in `dir`. Topic ids come from the files.
    pub fn scan(dir: &Path) -> Result<Self> {
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().is_some_and(|ext| ext == "lra") {
                paths.push(path);
            }
        }
        paths.sort();
        let mut reg = Self::empty();
        for p in paths {
            reg.insert(LoraAdapter::load(&p)?)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, adapter: LoraAdapter<f32>) -> Result<()> {
        let topic = adapter.topic_id as usize;
        if self.adapters.insert(topic, adapter).is_some() {
            return Err(Error::Invalid(format!("two adapters for topic {topic}")));
        }
        Ok(())
    }

    pub fn get(&self, topic: usize) -> Option<&LoraAdapter<f32>> {
        self.adapters.get(&topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = usize> + '_ {
        self.adapters.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adapters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adapters.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{BaseModel, BaseModelConfig};
    use crate::lora::init_adapter;

    #[test]
    fn scan_lists_every_written_adapter() {
        let base = BaseModel::<f32>::init(BaseModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            mlp_hidden: 8,
            context_len: 8,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        for t in 0..47 {
            let a = init_adapter(&base, t, 1, t).unwrap();
            a.save(&dir.path().join(format!("adapter_{t:05}.lra"))).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let reg = AdapterRegistry::scan(dir.path()).unwrap();
        assert_eq!(reg.len(), 47);
        assert_eq!(reg.get(46).unwrap().topic_id, 46);
        assert!(reg.get(47).is_none());
        // Same topic under a second name is rejected.
        init_adapter(&base, 3, 1, 0).unwrap().save(&dir.path().join("dup.lra")).unwrap();
        assert!(AdapterRegistry::scan(dir.path()).is_err());
    }
}
