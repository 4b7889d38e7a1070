//! Early fusion: per-category blocks concatenated in canonical category
//! order into one row per sample, plus the feature store on disk.

use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::feature::{Category, FeatureBlock};
use crate::matrix::DenseMatrix;

pub const STORE_MAGIC: &[u8; 8] = b"MFFEATST";
const STORE_VERSION: u32 = 1;

/// Fixed block sizes; any registry holding one of these categories must
/// match.
pub fn contract_size(c: Category) -> Option<usize> {
    use Category::*;
    Some(match c {
        AsmNgramsCnn | ByteNgramsCnn | ByteEntCnn => 300,
        AsmPixel => 800,
        ByteImgCnn => 256,
        AsmApi => 794,
        AsmOpc => 93,
        AsmMd => 2,
        AsmReg => 38,
        AsmDd => 24,
        AsmSec => 24,
        AsmSym => 7,
        Byte1g => 256,
        AsmMisc => 95,
        _ => return None,
    })
}

/// Block sizes produced with default settings, in canonical order.
pub fn default_sizes() -> Vec<(Category, usize)> {
    use Category::*;
    Category::ALL
        .iter()
        .map(|&c| {
            let n = contract_size(c).unwrap_or_else(|| match c {
                ByteMd => 2,
                ByteEnt => 14,
                ByteHaralick => 13,
                ByteLbp => 256,
                _ => unreachable!("every other category has a contract size"),
            });
            (c, n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub category: Category,
    pub names: Vec<String>,
}

/// Ordered categories and their feature names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureRegistry {
    entries: Vec<RegistryEntry>,
}

impl FeatureRegistry {
    /// Entries must be in canonical order without repeats, names must be
    /// globally unique, and contract sizes must hold.
    pub fn new(entries: Vec<RegistryEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for w in entries.windows(2) {
            if w[0].category.position() >= w[1].category.position() {
                return Err(Error::Validation(format!(
                    "category {} must come before {}",
                    w[1].category, w[0].category
                )));
            }
        }
        for e in &entries {
            if let Some(n) = contract_size(e.category) {
                if e.names.len() != n {
                    return Err(Error::Validation(format!(
                        "{} must have {n} features, got {}",
                        e.category,
                        e.names.len()
                    )));
                }
            }
            if e.names.is_empty() {
                return Err(Error::Validation(format!("{} has no features", e.category)));
            }
            for n in &e.names {
                if !seen.insert(n.as_str()) {
                    return Err(Error::Validation(format!("feature name {n:?} appears twice")));
                }
            }
        }
        Ok(FeatureRegistry { entries })
    }

    /// Registry matching the category order and names of one sample's blocks.
    pub fn from_blocks(blocks: &[FeatureBlock]) -> Result<Self> {
        Self::new(
            blocks
                .iter()
                .map(|b| RegistryEntry {
                    category: b.category,
                    names: b.names.clone(),
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn categories(&self) -> Vec<Category> {
        self.entries.iter().map(|e| e.category).collect()
    }

    pub fn contains(&self, c: Category) -> bool {
        self.entries.iter().any(|e| e.category == c)
    }

    pub fn total_dim(&self) -> usize {
        self.entries.iter().map(|e| e.names.len()).sum()
    }

    /// Column range of a category.
    pub fn span(&self, c: Category) -> Option<std::ops::Range<usize>> {
        let mut off = 0;
        for e in &self.entries {
            if e.category == c {
                return Some(off..off + e.names.len());
            }
            off += e.names.len();
        }
        None
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().flat_map(|e| e.names.iter().cloned()).collect()
    }

    /// Category of every column.
    pub fn column_categories(&self) -> Vec<Category> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.category, e.names.len()))
            .collect()
    }
}

/// Concatenates one sample's blocks in registry order.
pub fn fuse(blocks: &[FeatureBlock], registry: &FeatureRegistry) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(registry.total_dim());
    for (i, e) in registry.entries.iter().enumerate() {
        let b = blocks
            .get(i)
            .ok_or_else(|| Error::Validation(format!("missing block for {}", e.category)))?;
        if b.category != e.category {
            return Err(Error::Validation(format!(
                "expected {} at position {i}, got {}",
                e.category, b.category
            )));
        }
        if b.names != e.names {
            return Err(Error::Validation(format!(
                "{} block has different feature names",
                e.category
            )));
        }
        row.extend_from_slice(&b.values);
    }
    if blocks.len() > registry.entries.len() {
        return Err(Error::Validation(format!(
            "unexpected extra block {}",
            blocks[registry.entries.len()].category
        )));
    }
    Ok(row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub registry: FeatureRegistry,
    pub ids: Vec<String>,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub values: DenseMatrix,
    /// Hash of the configuration that produced the matrix.
    pub provenance: Option<String>,
}

impl FeatureMatrix {
    pub fn new(
        registry: FeatureRegistry,
        ids: Vec<String>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
        values: DenseMatrix,
    ) -> Result<Self> {
        if values.n_cols != registry.total_dim() {
            return Err(Error::Shape(format!(
                "{} columns for a registry of {}",
                values.n_cols,
                registry.total_dim()
            )));
        }
        if ids.len() != values.n_rows || labels.len() != values.n_rows {
            return Err(Error::Shape(format!(
                "{} rows with {} ids and {} labels",
                values.n_rows,
                ids.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().flatten().find(|&&l| l >= num_classes) {
            return Err(Error::Validation(format!("label {l} with {num_classes} classes")));
        }
        Ok(FeatureMatrix {
            registry,
            ids,
            labels,
            num_classes,
            values,
            provenance: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.n_rows
    }

    /// Columns of the requested categories, kept in canonical order.
    pub fn select_categories(&self, cats: &[Category]) -> Result<FeatureMatrix> {
        if cats.is_empty() {
            return Err(Error::Validation("no categories selected".into()));
        }
        for c in cats {
            if !self.registry.contains(*c) {
                return Err(Error::Validation(format!("feature store has no {c} columns")));
            }
        }
        let mut cols = Vec::new();
        let mut entries = Vec::new();
        for e in &self.registry.entries {
            if cats.contains(&e.category) {
                cols.extend(self.registry.span(e.category).expect("present"));
                entries.push(e.clone());
            }
        }
        Ok(FeatureMatrix {
            registry: FeatureRegistry { entries },
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            values: self.values.select_cols(&cols),
            provenance: self.provenance.clone(),
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            registry: self.registry.clone(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            values: self.values.select_rows(idx),
            provenance: self.provenance.clone(),
        }
    }

    /// Adds or replaces one category, placed at its canonical position.
    pub fn set_category(&mut self, category: Category, names: Vec<String>, rows: &[Vec<f64>]) -> Result<()> {
        if rows.len() != self.n_rows() {
            return Err(Error::Shape(format!(
                "{} rows for a {}-row store",
                rows.len(),
                self.n_rows()
            )));
        }
        let block = DenseMatrix::from_rows(rows)?;
        if block.n_cols != names.len() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                block.n_cols
            )));
        }
        let mut entries: Vec<RegistryEntry> = Vec::new();
        let mut parts: Vec<DenseMatrix> = Vec::new();
        let mut placed = false;
        for e in &self.registry.entries {
            if !placed && e.category.position() >= category.position() {
                entries.push(RegistryEntry {
                    category,
                    names: names.clone(),
                });
                parts.push(block.clone());
                placed = true;
            }
            if e.category != category {
                entries.push(e.clone());
                parts.push(
                    self.values
                        .select_cols(&self.registry.span(e.category).expect("present").collect::<Vec<_>>()),
                );
            }
        }
        if !placed {
            entries.push(RegistryEntry { category, names });
            parts.push(block);
        }
        let registry = FeatureRegistry::new(entries)?;
        let mut values = DenseMatrix::new(self.n_rows(), 0, vec![])?;
        for p in &parts {
            values = values.hstack(p)?;
        }
        self.registry = registry;
        self.values = values;
        Ok(())
    }

    /// Indices of labeled rows and their labels.
    pub fn labeled(&self) -> (Vec<usize>, Vec<usize>) {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (i, l)))
            .unzip()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(STORE_MAGIC, STORE_VERSION);
        w.opt_str(self.provenance.as_deref());
        w.usize(self.num_classes);
        w.usize(self.registry.entries.len());
        for e in &self.registry.entries {
            w.str(e.category.as_str());
            w.usize(e.names.len());
            for n in &e.names {
                w.str(n);
            }
        }
        w.usize(self.n_rows());
        for (id, l) in self.ids.iter().zip(&self.labels) {
            w.str(id);
            w.u64(l.map_or(u64::MAX, |l| l as u64));
        }
        for &v in &self.values.data {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, STORE_MAGIC, &[STORE_VERSION])?;
        let provenance = r.opt_str()?;
        let num_classes = r.usize()?;
        let n_cat = r.len(1)?;
        let mut entries = Vec::with_capacity(n_cat);
        for _ in 0..n_cat {
            let category: Category = r.str()?.parse()?;
            let n = r.len(8)?;
            let names = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
            entries.push(RegistryEntry { category, names });
        }
        let registry = FeatureRegistry::new(entries)?;
        let n_rows = r.len(16)?;
        let mut ids = Vec::with_capacity(n_rows);
        let mut labels = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            ids.push(r.str()?);
            labels.push(match r.u64()? {
                u64::MAX => None,
                l => Some(l as usize),
            });
        }
        let n_cols = registry.total_dim();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for _ in 0..n_rows * n_cols {
            data.push(r.f64()?);
        }
        r.expect_end()?;
        let mut m = FeatureMatrix::new(
            registry,
            ids,
            labels,
            num_classes,
            DenseMatrix::new(n_rows, n_cols, data)?,
        )?;
        m.provenance = provenance;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Header `id,label,<feature names…>`; unlabeled rows leave `label` empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(self.registry.names());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![
                self.ids[i].clone(),
                self.labels[i].map_or(String::new(), |l| l.to_string()),
            ];
            rec.extend(self.values.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
