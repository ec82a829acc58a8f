//! Models available to the service, loaded once at startup.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::GrayImage;
use log::info;
use polyptych_core::bank::{load_bank, save_bank, ReferenceBank};
use polyptych_core::imageio;
use polyptych_core::ModelBundle32;
use serde::{Deserialize, Serialize};

/// Per-model description file inside a registry entry directory.
pub const ENTRY_FILE: &str = "entry.json";
pub const TEMPLATE_DIR: &str = "templates";

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry entry {id}: {source}")]
    Entry {
        id: String,
        #[source]
        source: polyptych_core::Error,
    },
    #[error("registry entry {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate model id {0}")]
    Duplicate(String),
    #[error("registry directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntryFile {
    pub genre: String,
    /// Paths relative to the entry directory.
    pub model: String,
    pub bank: String,
}

#[derive(Clone, Debug)]
pub struct Template {
    pub id: String,
    pub sketch: GrayImage,
}

#[derive(Debug)]
pub struct ModelEntry {
    pub id: String,
    pub genre: String,
    pub model: ModelBundle32,
    pub bank: ReferenceBank,
    /// Sorted by id.
    pub templates: Vec<Template>,
}

impl ModelEntry {
    pub fn new(
        id: impl Into<String>,
        genre: impl Into<String>,
        model: ModelBundle32,
        bank: ReferenceBank,
        mut templates: Vec<Template>,
    ) -> Result<Self, RegistryError> {
        let id = id.into();
        if !valid_id(&id) {
            return Err(RegistryError::Invalid {
                id,
                reason: "ids use only ASCII letters, digits, '-', '_' and '.'".into(),
            });
        }
        if bank.k != model.config.bank_k {
            return Err(RegistryError::Invalid {
                reason: format!(
                    "model attends to {} categories, bank has {}",
                    model.config.bank_k, bank.k
                ),
                id,
            });
        }
        templates.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(ModelEntry {
            id,
            genre: genre.into(),
            model,
            bank,
            templates,
        })
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

/// Immutable map from model id to its loaded model, bank and templates.
#[derive(Debug, Default)]
pub struct Registry {
    entries: BTreeMap<String, Arc<ModelEntry>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: ModelEntry) -> Result<(), RegistryError> {
        if self.entries.contains_key(&entry.id) {
            return Err(RegistryError::Duplicate(entry.id));
        }
        self.entries.insert(entry.id.clone(), Arc::new(entry));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<ModelEntry>> {
        self.entries.get(id)
    }

    /// Entries in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Arc<ModelEntry>> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load every subdirectory of `dir` that holds an [`ENTRY_FILE`]. The
    /// directory name is the model id. Any entry that fails to parse fails
    /// the whole load.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let dir = dir.as_ref();
        let io = |source| RegistryError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        subdirs.retain(|p| p.join(ENTRY_FILE).is_file());
        subdirs.sort();
        let mut reg = Registry::new();
        for path in subdirs {
            let id = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            reg.insert(load_entry(&path, id)?)?;
        }
        info!("registry {}: {} models", dir.display(), reg.len());
        Ok(reg)
    }
}

fn load_entry(path: &Path, id: String) -> Result<ModelEntry, RegistryError> {
    let core = |source| RegistryError::Entry { id: id.clone(), source };
    let text = fs::read_to_string(path.join(ENTRY_FILE)).map_err(|e| core(e.into()))?;
    let file: EntryFile = serde_json::from_str(&text).map_err(|e| core(e.into()))?;
    let model = ModelBundle32::load(path.join(&file.model)).map_err(core)?;
    let bank = load_bank(path.join(&file.bank)).map_err(core)?;
    let mut templates = Vec::new();
    let tdir = path.join(TEMPLATE_DIR);
    if tdir.is_dir() {
        let files = fs::read_dir(&tdir).map_err(|e| core(e.into()))?;
        for f in files {
            let f = f.map_err(|e| core(e.into()))?.path();
            if !f.is_file() {
                continue;
            }
            let tid = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let sketch = imageio::load_gray(&f).map_err(core)?;
            templates.push(Template { id: tid, sketch });
        }
    }
    ModelEntry::new(id, file.genre, model, bank, templates)
}

/// Write a registry entry directory `dir/id` that [`Registry::load`] accepts.
pub fn write_entry(
    dir: impl AsRef<Path>,
    id: &str,
    genre: &str,
    model: &ModelBundle32,
    bank: &ReferenceBank,
    templates: &[Template],
) -> Result<PathBuf, RegistryError> {
    if !valid_id(id) {
        return Err(RegistryError::Invalid {
            id: id.into(),
            reason: "not a valid model id".into(),
        });
    }
    let core = |source| RegistryError::Entry { id: id.into(), source };
    let path = dir.as_ref().join(id);
    fs::create_dir_all(path.join(TEMPLATE_DIR)).map_err(|e| core(e.into()))?;
    model.save(path.join("model.nply")).map_err(core)?;
    save_bank(bank, path.join("bank.npbk")).map_err(core)?;
    for t in templates {
        if !valid_id(&t.id) {
            return Err(RegistryError::Invalid {
                id: id.into(),
                reason: format!("template id {:?} is not a valid file name", t.id),
            });
        }
        imageio::save_gray(&t.sketch, path.join(TEMPLATE_DIR).join(format!("{}.png", t.id))).map_err(core)?;
    }
    let entry = EntryFile {
        genre: genre.into(),
        model: "model.nply".into(),
        bank: "bank.npbk".into(),
    };
    fs::write(
        path.join(ENTRY_FILE),
        serde_json::to_vec_pretty(&entry).expect("plain struct"),
    )
    .map_err(|e| core(e.into()))?;
    Ok(path)
}
