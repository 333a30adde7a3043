use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayImage};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetImage {
    pub id: String,
    pub image: GrayImage,
    pub gold: Option<BinaryMask>,
}

/// Images keyed by id (the file stem), in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    images: BTreeMap<String, DatasetImage>,
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if out.insert(stem.to_string(), path.clone()).is_some() {
                return Err(Error::param(format!("two files share the id {stem:?} in {}", dir.display())));
            }
        }
    }
    Ok(out)
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: DatasetImage) -> Result<()> {
        if let Some(g) = &item.gold {
            if g.dims() != item.image.dims() {
                return Err(Error::DimensionMismatch {
                    expected: item.image.dims(),
                    actual: g.dims(),
                });
            }
        }
        self.images.insert(item.id.clone(), item);
        Ok(())
    }

    /// Reads every image in `image_dir` and, where present, the gold mask
    /// with the same stem in `gold_dir`.
    pub fn load(image_dir: &Path, gold_dir: Option<&Path>) -> Result<Self> {
        let images = image_files(image_dir)?;
        let golds = match gold_dir {
            Some(d) if d.is_dir() => image_files(d)?,
            _ => BTreeMap::new(),
        };
        let mut ds = Self::new();
        for (id, path) in images {
            let image = GrayImage::load(&path)?;
            let gold = match golds.get(&id) {
                Some(g) => Some(BinaryMask::load(g)?),
                None => {
                    log::info!("image {id} has no gold standard");
                    None
                }
            };
            ds.insert(DatasetImage { id, image, gold })?;
        }
        Ok(ds)
    }

    /// Writes `{id}.png` images and gold masks into the two directories.
    pub fn save(&self, image_dir: &Path, gold_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(image_dir).map_err(|e| Error::io(image_dir, e))?;
        std::fs::create_dir_all(gold_dir).map_err(|e| Error::io(gold_dir, e))?;
        for item in self.images.values() {
            item.image.save_png(image_dir.join(format!("{}.png", item.id)))?;
            if let Some(g) = &item.gold {
                g.save_png(gold_dir.join(format!("{}.png", item.id)))?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.images.keys().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Result<&DatasetImage> {
        self.images
            .get(id)
            .ok_or_else(|| Error::UnknownImage(id.to_string()))
    }

    pub fn gold(&self, id: &str) -> Result<&BinaryMask> {
        self.get(id)?
            .gold
            .as_ref()
            .ok_or_else(|| Error::EmptyInput(format!("image {id} has no gold standard")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatasetImage> {
        self.images.values()
    }
}
