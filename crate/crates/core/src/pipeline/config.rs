//! TOML pipeline configuration. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::sha256_hex;
use crate::deepfeat::{TrainParams, DEFAULT_BYTE_CAP, DEFAULT_ENTROPY_LEN, DEFAULT_IMAGE_SIDE, DEFAULT_OPCODE_CAP};
use crate::error::{Error, Result};
use crate::featsel::{DEFAULT_MI_BINS, K_GRID};
use crate::feature::Category;
use crate::gbt::GbtParams;
use crate::hexfeat::DEFAULT_CHUNK_SIZE;
use crate::imaging::WidthPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub extract: ExtractConfig,
    #[serde(default)]
    pub cnn: CnnConfig,
    #[serde(default)]
    pub gbt: GbtConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub select: SelectConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: PathBuf,
    pub store: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub num_classes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { num_classes: 9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageWidth {
    /// `"buckets"`: width from the file-size table.
    Named(WidthName),
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthName {
    Buckets,
}

impl ImageWidth {
    pub fn policy(self) -> WidthPolicy {
        match self {
            ImageWidth::Named(WidthName::Buckets) => WidthPolicy::SizeBuckets,
            ImageWidth::Fixed(w) => WidthPolicy::Fixed(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Hand-crafted categories to compute.
    pub categories: Vec<Category>,
    pub chunk_size: usize,
    pub image_width: ImageWidth,
    pub haralick_levels: usize,
    /// Extraction threads; 0 lets the pool pick.
    pub workers: usize,
    pub opcode_vocab: Option<PathBuf>,
    pub api_vocab: Option<PathBuf>,
    pub misc_vocab: Option<PathBuf>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            categories: Category::ALL.iter().copied().filter(|c| !c.is_deep()).collect(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            image_width: ImageWidth::Named(WidthName::Buckets),
            haralick_levels: 32,
            workers: 0,
            opcode_vocab: None,
            api_vocab: None,
            misc_vocab: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    pub image_side: usize,
    pub entropy_len: usize,
    pub byte_cap: usize,
    pub opcode_cap: usize,
    /// Folds for out-of-fold deep features.
    pub folds: usize,
    pub train: TrainParams,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            image_side: DEFAULT_IMAGE_SIDE,
            entropy_len: DEFAULT_ENTROPY_LEN,
            byte_cap: DEFAULT_BYTE_CAP,
            opcode_cap: DEFAULT_OPCODE_CAP,
            folds: 5,
            train: TrainParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSet {
    Baseline,
    Best,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtConfig {
    /// Which column drives train-gbt, evaluate, select and stepwise.
    pub params: ParamSet,
    pub baseline: GbtParams,
    /// Keys left out keep the tuned values, not the baseline ones.
    #[serde(deserialize_with = "tuned_params")]
    pub best: GbtParams,
}

fn tuned_params<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<GbtParams, D::Error> {
    use serde::de::Error as _;
    let given = serde_json::Value::deserialize(d)?;
    let mut merged = serde_json::to_value(GbtParams::best()).map_err(D::Error::custom)?;
    match (given, &mut merged) {
        (serde_json::Value::Object(g), serde_json::Value::Object(m)) => m.extend(g),
        _ => return Err(D::Error::custom("gbt.best must be a table")),
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            params: ParamSet::Baseline,
            baseline: GbtParams::baseline(),
            best: GbtParams::best(),
        }
    }
}

impl GbtConfig {
    pub fn active(&self) -> &GbtParams {
        match self.params {
            ParamSet::Baseline => &self.baseline,
            ParamSet::Best => &self.best,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            stratified: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    pub k_grid: Vec<usize>,
    pub mi_bins: usize,
    /// Forward stepwise scores candidates by this many folds, always with
    /// the baseline booster.
    pub stepwise_folds: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            k_grid: K_GRID.to_vec(),
            mi_bins: DEFAULT_MI_BINS,
            stepwise_folds: 3,
        }
    }
}

/// A loaded configuration plus where its relative paths point.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
    /// sha256 of the canonical JSON form, after overrides.
    pub hash: String,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.manifest)
    }

    pub fn store_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.store)
    }

    pub fn model_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.model_dir)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.report_dir)
    }
}

/// Parses `key.path=value`; the value is read as a TOML literal and
/// falls back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<PipelineConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: PipelineConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    validate(&config)?;
    Ok(config)
}

fn validate(c: &PipelineConfig) -> Result<()> {
    let bad = |m: String| Err(Error::Config(m));
    if c.data.num_classes < 2 {
        return bad(format!(
            "data.num_classes must be at least 2, got {}",
            c.data.num_classes
        ));
    }
    if let Some(d) = c.extract.categories.iter().find(|c| c.is_deep()) {
        return bad(format!(
            "extract.categories: {d} is learned by train-cnn, not extracted"
        ));
    }
    if c.extract.chunk_size == 0 {
        return bad("extract.chunk_size must be positive".into());
    }
    if !(2..=256).contains(&c.extract.haralick_levels) || 256 % c.extract.haralick_levels != 0 {
        return bad(format!(
            "extract.haralick_levels {} must divide 256",
            c.extract.haralick_levels
        ));
    }
    if c.cnn.folds < 2 || c.eval.folds < 2 {
        return bad("cnn.folds and eval.folds must be at least 2".into());
    }
    if c.select.stepwise_folds < 2 {
        return bad("select.stepwise_folds must be at least 2".into());
    }
    if c.select.mi_bins < 2 {
        return bad("select.mi_bins must be at least 2".into());
    }
    c.gbt.baseline.validate()?;
    c.gbt.best.validate()
}

pub fn load_config(path: impl AsRef<Path>, overrides: &[String]) -> Result<LoadedConfig> {
    let path = path.as_ref();
    // A missing or unreadable config is a usage problem, not a data one.
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let config = parse_config(&text, overrides)?;
    let hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir, hash })
}
