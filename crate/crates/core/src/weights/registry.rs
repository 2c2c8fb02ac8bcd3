use std::collections::BTreeMap;
use std::sync::{OnceLock, RwLock};

use super::WeightSpec;
use crate::error::{CvmError, Result};

/// Named weights. Reads are concurrent; registration takes the write lock.
pub struct WeightRegistry {
    entries: RwLock<BTreeMap<String, WeightSpec>>,
}

impl Default for WeightRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl WeightRegistry {
    pub fn empty() -> Self {
        Self {
            entries: RwLock::new(BTreeMap::new()),
        }
    }

    /// Registry holding `uniform`, `optimal_normal` and `anderson_darling`.
    pub fn with_builtins() -> Self {
        let reg = Self::empty();
        for spec in [
            WeightSpec::uniform(),
            WeightSpec::optimal_normal(),
            WeightSpec::anderson_darling(),
        ] {
            reg.register(spec).expect("built-in names are distinct");
        }
        reg
    }

    /// Process-wide registry used by the harness and the CLI.
    pub fn global() -> &'static WeightRegistry {
        static GLOBAL: OnceLock<WeightRegistry> = OnceLock::new();
        GLOBAL.get_or_init(WeightRegistry::with_builtins)
    }

    pub fn register(&self, spec: WeightSpec) -> Result<()> {
        let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
        if entries.contains_key(spec.name()) {
            return Err(CvmError::DuplicateWeight(spec.name().to_string()));
        }
        entries.insert(spec.name().to_string(), spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<WeightSpec> {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(name)
            .cloned()
            .ok_or_else(|| CvmError::UnknownWeight(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }
}

/// Add a weight to the global registry.
pub fn register_custom_weight(spec: WeightSpec) -> Result<()> {
    WeightRegistry::global().register(spec)
}

/// Look a weight up in the global registry.
pub fn resolve_weight(name: &str) -> Result<WeightSpec> {
    WeightRegistry::global().get(name)
}
