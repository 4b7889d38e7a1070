//! End-to-end commands over a config: extract, train-cnn, train-gbt,
//! evaluate, select, stepwise, predict, importance.

mod config;

pub use config::{
    load_config, parse_config, CnnConfig, DataConfig, EvalConfig, ExtractConfig, GbtConfig, ImageWidth, LoadedConfig,
    ParamSet, PathsConfig, PipelineConfig, SelectConfig, WidthName,
};

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asmfeat::{self, AsmVocabularies, VocabList};
use crate::corpus::{load_manifest_with_classes, parse_asm_bytes, parse_hex, AsmListing, HexDump, ManifestEntry};
use crate::deepfeat::{
    build_entropy_cnn, build_grayscale_cnn, build_ngram_cnn, byte_tokens, opcode_tokens, out_of_fold_deep_features,
    save_cnn, Arch, CnnInput, CnnSpec,
};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, kfold_plan, write_submission, EvalReport, FoldPlan};
use crate::featsel::{forward_stepwise, score_and_evaluate, ScoreMethod, StepwiseTrace};
use crate::feature::{Category, FeatureBlock};
use crate::fusion::{FeatureMatrix, FeatureRegistry};
use crate::gbt::{self, category_importance, feature_importance, load_model, save_model, GbtParams, ImportanceKind};
use crate::hexfeat;
use crate::imaging::{self, bytes_to_image, GrayImage, HaralickConfig};
use crate::matrix::DenseMatrix;

/// Exit status of a command that did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some samples were skipped.
    Partial,
}

/// 1 usage, 2 data error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Named category sets. A bare category name selects that category alone.
pub fn preset(name: &str) -> Result<Vec<Category>> {
    use Category::*;
    let hex_hand = vec![ByteMd, Byte1g, ByteEnt, ByteHaralick, ByteLbp];
    let asm_hand = vec![AsmMd, AsmOpc, AsmPixel, AsmReg, AsmSym, AsmApi, AsmDd, AsmSec, AsmMisc];
    let mut cats = match name {
        "hex-hand" => hex_hand,
        "hex-hand-deep" => [hex_hand, vec![ByteImgCnn, ByteEntCnn, ByteNgramsCnn]].concat(),
        "asm-hand" => asm_hand,
        "asm-hand-deep" => [asm_hand, vec![AsmNgramsCnn]].concat(),
        "hand-crafted" => [hex_hand, asm_hand].concat(),
        "deep" => vec![ByteImgCnn, ByteEntCnn, ByteNgramsCnn, AsmNgramsCnn],
        "all" => Category::ALL.to_vec(),
        "final" => [asm_hand, vec![AsmNgramsCnn, ByteMd, Byte1g, ByteNgramsCnn]].concat(),
        other => match other.parse::<Category>() {
            Ok(c) => vec![c],
            Err(_) => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected one of {} or a category name",
                    PRESETS.join(", ")
                )))
            }
        },
    };
    cats.sort_by_key(|c| c.position());
    Ok(cats)
}

pub const PRESETS: [&str; 8] = [
    "hex-hand",
    "hex-hand-deep",
    "asm-hand",
    "asm-hand-deep",
    "hand-crafted",
    "deep",
    "all",
    "final",
];

/// Narrows the store to a preset, naming the command that produces any
/// missing category.
pub fn preset_matrix(store: &FeatureMatrix, name: &str) -> Result<FeatureMatrix> {
    let cats = preset(name)?;
    let missing: Vec<Category> = cats.iter().copied().filter(|c| !store.registry.contains(*c)).collect();
    if !missing.is_empty() {
        let hints: Vec<String> = missing
            .iter()
            .map(|c| match Arch::ALL.iter().find(|a| a.category() == *c) {
                Some(a) => format!("{c} (run `malfam train-cnn --arch {}`)", a.as_str()),
                None => format!("{c} (enable it under extract.categories and rerun `malfam extract`)"),
            })
            .collect();
        return Err(Error::Validation(format!(
            "preset {name:?} needs categories missing from the feature store: {}",
            hints.join("; ")
        )));
    }
    store.select_categories(&cats)
}

struct Extractor {
    cats: Vec<Category>,
    vocab: AsmVocabularies,
    chunk_size: usize,
    width: imaging::WidthPolicy,
    haralick: HaralickConfig,
}

fn load_vocab(cfg: &LoadedConfig, path: &Option<PathBuf>, cat: Category, default: VocabList) -> Result<VocabList> {
    match path {
        Some(p) => VocabList::load(cfg.resolve(p), cat),
        None => Ok(default),
    }
}

fn vocabularies(cfg: &LoadedConfig) -> Result<AsmVocabularies> {
    let e = &cfg.config.extract;
    Ok(AsmVocabularies {
        opcodes: load_vocab(cfg, &e.opcode_vocab, Category::AsmOpc, VocabList::default_opcodes())?,
        registers: VocabList::registers(),
        apis: load_vocab(cfg, &e.api_vocab, Category::AsmApi, VocabList::default_apis())?,
        misc: load_vocab(cfg, &e.misc_vocab, Category::AsmMisc, VocabList::default_misc())?,
    })
}

fn read_asm(path: &Path) -> Result<(Vec<u8>, AsmListing)> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let listing = parse_asm_bytes(&raw);
    Ok((raw, listing))
}

fn hex_image(dump: &HexDump, width: imaging::WidthPolicy) -> Result<GrayImage> {
    bytes_to_image(&dump.bytes_zero_filled(), width)
}

impl Extractor {
    fn new(cfg: &LoadedConfig) -> Result<Self> {
        let e = &cfg.config.extract;
        let mut cats = e.categories.clone();
        cats.sort_by_key(|c| c.position());
        cats.dedup();
        Ok(Extractor {
            cats,
            vocab: vocabularies(cfg)?,
            chunk_size: e.chunk_size,
            width: e.image_width.policy(),
            haralick: HaralickConfig {
                levels: e.haralick_levels,
                symmetric: true,
            },
        })
    }

    fn wants(&self, c: Category) -> bool {
        self.cats.contains(&c)
    }

    fn sample(&self, entry: &ManifestEntry) -> Result<Vec<FeatureBlock>> {
        use Category::*;
        let mut blocks = Vec::with_capacity(self.cats.len());
        if self.cats.iter().any(|c| c.is_hex()) {
            let dump = parse_hex(&entry.hex_path)?;
            for w in &dump.warnings {
                log::warn!("sample={} hex: {w}", entry.id);
            }
            if self.wants(ByteMd) {
                blocks.push(hexfeat::byte_metadata(&dump));
            }
            if self.wants(Byte1g) {
                blocks.push(hexfeat::byte_unigrams(&dump));
            }
            if self.wants(ByteEnt) {
                blocks.push(hexfeat::entropy_stats(&hexfeat::entropy_stream(
                    &dump,
                    self.chunk_size,
                )?));
            }
            if self.wants(ByteHaralick) || self.wants(ByteLbp) {
                let img = hex_image(&dump, self.width)?;
                if self.wants(ByteHaralick) {
                    blocks.push(imaging::haralick_features_with(&img, self.haralick));
                }
                if self.wants(ByteLbp) {
                    blocks.push(imaging::lbp_features(&img));
                }
            }
        }
        if self.cats.iter().any(|c| !c.is_hex()) {
            let (raw, listing) = read_asm(&entry.asm_path)?;
            for &c in self.cats.iter().filter(|c| !c.is_hex()) {
                blocks.push(match c {
                    AsmMd => asmfeat::asm_metadata(&listing),
                    AsmOpc => asmfeat::opcode_counts(&listing, &self.vocab.opcodes),
                    AsmPixel => imaging::asm_pixels(&raw, imaging::DEFAULT_ASM_PIXELS),
                    AsmReg => asmfeat::register_counts(&listing, &self.vocab.registers),
                    AsmSym => asmfeat::symbol_counts(&listing),
                    AsmApi => asmfeat::api_counts(&listing, &self.vocab.apis),
                    AsmDd => asmfeat::data_define_features(&listing),
                    AsmSec => asmfeat::section_features(&listing),
                    AsmMisc => asmfeat::misc_keyword_counts(&listing, &self.vocab.misc),
                    _ => unreachable!("deep categories are rejected at config load"),
                });
            }
        }
        Ok(blocks)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub rows: usize,
    pub skipped: Vec<(String, String)>,
}

/// Computes every enabled hand-crafted category for each manifest sample
/// and writes the fused store. Samples that fail are skipped.
pub fn cmd_extract(cfg: &LoadedConfig) -> Result<(ExtractSummary, Outcome)> {
    let manifest = load_manifest_with_classes(cfg.manifest_path(), cfg.config.data.num_classes)?;
    if manifest.is_empty() {
        return Err(Error::Validation("manifest has no samples".into()));
    }
    let ex = Extractor::new(cfg)?;
    let started = Instant::now();
    let results: Vec<Result<Vec<FeatureBlock>>> = pool(cfg.config.extract.workers)?.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let t = Instant::now();
                let r = ex.sample(e);
                log::debug!(
                    "sample={} blocks={} ms={}",
                    e.id,
                    ex.cats.len(),
                    t.elapsed().as_millis()
                );
                r
            })
            .collect()
    });
    let mut registry: Option<FeatureRegistry> = None;
    let (mut ids, mut labels, mut data, mut skipped) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (entry, r) in manifest.entries.iter().zip(results) {
        let blocks = match r {
            Ok(b) => b,
            Err(e) => {
                log::warn!("sample={} skipped: {e}", entry.id);
                skipped.push((entry.id.to_string(), e.to_string()));
                continue;
            }
        };
        let reg = match &registry {
            Some(r) => r,
            None => registry.insert(FeatureRegistry::from_blocks(&blocks)?),
        };
        data.extend(crate::fusion::fuse(&blocks, reg)?);
        ids.push(entry.id.to_string());
        labels.push(entry.label);
    }
    let registry =
        registry.ok_or_else(|| Error::Validation(format!("all {} samples failed extraction", manifest.len())))?;
    let n = ids.len();
    let values = DenseMatrix::new(n, registry.total_dim(), data)?;
    let mut store = FeatureMatrix::new(registry, ids, labels, cfg.config.data.num_classes, values)?;
    store.provenance = Some(cfg.hash.clone());
    let path = cfg.store_path();
    ensure_parent(&path)?;
    store.save(&path)?;
    log::info!(
        "extract: {n} rows, {} columns, {} skipped, {:.1}s -> {}",
        store.values.n_cols,
        skipped.len(),
        started.elapsed().as_secs_f64(),
        path.display()
    );
    let outcome = if skipped.is_empty() {
        Outcome::Success
    } else {
        Outcome::Partial
    };
    Ok((ExtractSummary { rows: n, skipped }, outcome))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn ensure_dir(d: &Path) -> Result<()> {
    std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))
}

/// Checks the preset name before touching the store so a typo is reported
/// as such.
fn load_preset(cfg: &LoadedConfig, name: &str) -> Result<FeatureMatrix> {
    preset(name)?;
    preset_matrix(&load_store(cfg)?, name)
}

fn load_store(cfg: &LoadedConfig) -> Result<FeatureMatrix> {
    let store = FeatureMatrix::load(cfg.store_path())?;
    if store.provenance.as_deref() != Some(cfg.hash.as_str()) {
        log::warn!("feature store was written under a different configuration");
    }
    Ok(store)
}

fn fold_plan(labels: &[usize], k: usize, stratified: bool, seed: u64) -> Result<FoldPlan> {
    match kfold_plan(labels, k, stratified, seed) {
        Ok(p) => Ok(p),
        Err(e) if stratified => {
            log::warn!("{e}; falling back to unstratified folds");
            kfold_plan(labels, k, false, seed)
        }
        Err(e) => Err(e),
    }
}

pub fn cnn_spec(cfg: &LoadedConfig, arch: Arch, vocab: &AsmVocabularies) -> Result<CnnSpec> {
    let c = &cfg.config.cnn;
    let k = cfg.config.data.num_classes;
    match arch {
        Arch::GrayImage => build_grayscale_cnn(k, c.image_side),
        Arch::EntropyStream => build_entropy_cnn(k, c.entropy_len),
        Arch::ByteNgram => build_ngram_cnn(arch, 256, k, c.byte_cap),
        Arch::OpcodeNgram => build_ngram_cnn(arch, vocab.opcodes.len() + 1, k, c.opcode_cap),
    }
}

fn cnn_input(cfg: &LoadedConfig, arch: Arch, vocab: &AsmVocabularies, entry: &ManifestEntry) -> Result<CnnInput> {
    let c = &cfg.config.cnn;
    let e = &cfg.config.extract;
    Ok(match arch {
        Arch::GrayImage => CnnInput::Image(hex_image(&parse_hex(&entry.hex_path)?, e.image_width.policy())?),
        Arch::EntropyStream => {
            CnnInput::Stream(hexfeat::entropy_stream(&parse_hex(&entry.hex_path)?, e.chunk_size)?.values)
        }
        Arch::ByteNgram => CnnInput::Tokens(byte_tokens(&parse_hex(&entry.hex_path)?, c.byte_cap)),
        Arch::OpcodeNgram => CnnInput::Tokens(opcode_tokens(
            &read_asm(&entry.asm_path)?.1,
            &vocab.opcodes,
            c.opcode_cap,
        )),
    })
}

pub fn cnn_model_path(cfg: &LoadedConfig, arch: Arch, fold: Option<usize>) -> PathBuf {
    let name = match fold {
        Some(f) => format!("cnn-{}-fold{f}.bin", arch.as_str()),
        None => format!("cnn-{}.bin", arch.as_str()),
    };
    cfg.model_dir().join(name)
}

/// Trains `arch` out-of-fold on the labeled store rows, writes its
/// 300/256-wide feature block into the store and saves every model.
pub fn cmd_train_cnn(cfg: &LoadedConfig, arch: Arch) -> Result<Outcome> {
    let mut store = load_store(cfg)?;
    let manifest = load_manifest_with_classes(cfg.manifest_path(), cfg.config.data.num_classes)?;
    let by_id: HashMap<&str, &ManifestEntry> = manifest.entries.iter().map(|e| (e.id.as_str(), e)).collect();
    let vocab = vocabularies(cfg)?;
    let spec = cnn_spec(cfg, arch, &vocab)?;
    let inputs: Vec<CnnInput> = pool(cfg.config.extract.workers)?.install(|| {
        store
            .ids
            .par_iter()
            .map(|id| {
                let entry = by_id
                    .get(id.as_str())
                    .ok_or_else(|| Error::Validation(format!("store sample {id} is not in the manifest")))?;
                cnn_input(cfg, arch, &vocab, entry)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (labeled_idx, labels) = store.labeled();
    let unlabeled_idx: Vec<usize> = (0..store.n_rows()).filter(|i| store.labels[*i].is_none()).collect();
    let labeled: Vec<(CnnInput, usize)> = labeled_idx
        .iter()
        .zip(&labels)
        .map(|(&i, &y)| (inputs[i].clone(), y))
        .collect();
    let unlabeled: Vec<CnnInput> = unlabeled_idx.iter().map(|&i| inputs[i].clone()).collect();
    let hp = &cfg.config.cnn.train;
    let plan = fold_plan(&labels, cfg.config.cnn.folds, true, hp.seed)?;
    let started = Instant::now();
    let oof = out_of_fold_deep_features(spec, &labeled, &unlabeled, &plan, hp)?;
    let mut rows = vec![Vec::new(); store.n_rows()];
    for (&i, f) in labeled_idx.iter().zip(oof.labeled_features) {
        rows[i] = f;
    }
    for (&i, f) in unlabeled_idx.iter().zip(oof.unlabeled_features) {
        rows[i] = f;
    }
    store.set_category(arch.category(), arch.feature_names(), &rows)?;
    store.provenance = Some(cfg.hash.clone());
    store.save(cfg.store_path())?;
    ensure_dir(&cfg.model_dir())?;
    for (f, m) in oof.fold_models.iter().enumerate() {
        save_cnn(m, cnn_model_path(cfg, arch, Some(f)), Some(&cfg.hash))?;
    }
    save_cnn(&oof.full_model, cnn_model_path(cfg, arch, None), Some(&cfg.hash))?;
    log::info!(
        "train-cnn {}: {} folds, {:.1}s, wrote {}",
        arch.as_str(),
        plan.k,
        started.elapsed().as_secs_f64(),
        arch.category()
    );
    Ok(Outcome::Success)
}

/// Written next to each booster so predict and importance can rebuild
/// its input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub preset: String,
    pub categories: Vec<Category>,
    /// Column count of each category, in the same order.
    pub widths: Vec<usize>,
    pub feature_names: Vec<String>,
    pub num_classes: usize,
    pub params: GbtParams,
    pub config_hash: String,
}

pub fn gbt_model_path(cfg: &LoadedConfig, preset: &str) -> PathBuf {
    cfg.model_dir().join(format!("gbt-{preset}.bin"))
}

fn sidecar_path(model: &Path) -> PathBuf {
    model.with_extension("json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn labeled_xy(m: &FeatureMatrix) -> Result<(DenseMatrix, Vec<usize>)> {
    let (rows, y) = m.labeled();
    if rows.is_empty() {
        return Err(Error::Validation("no labeled samples in the feature store".into()));
    }
    Ok((m.values.select_rows(&rows), y))
}

/// Fits the active parameter set on every labeled row of the preset.
pub fn cmd_train_gbt(cfg: &LoadedConfig, preset_name: &str) -> Result<PathBuf> {
    let m = load_preset(cfg, preset_name)?;
    let (x, y) = labeled_xy(&m)?;
    let params = cfg.config.gbt.active().clone();
    let model = gbt::train(&x, &y, m.num_classes, &params, None)?;
    let path = gbt_model_path(cfg, preset_name);
    ensure_parent(&path)?;
    save_model(&model, &path, Some(&cfg.hash))?;
    write_json(
        &sidecar_path(&path),
        &ModelSidecar {
            preset: preset_name.to_string(),
            categories: m.registry.categories(),
            widths: m.registry.entries().iter().map(|e| e.names.len()).collect(),
            feature_names: m.registry.names(),
            num_classes: m.num_classes,
            params,
            config_hash: cfg.hash.clone(),
        },
    )?;
    log::info!(
        "train-gbt {preset_name}: {} trees -> {}",
        model.num_trees(),
        path.display()
    );
    Ok(path)
}

fn eval_plan(cfg: &LoadedConfig, y: &[usize]) -> Result<FoldPlan> {
    let e = &cfg.config.eval;
    fold_plan(y, e.folds, e.stratified, e.seed)
}

/// k-fold CV of the active parameters on one preset; the JSON report
/// lands in the report directory.
pub fn cmd_evaluate(cfg: &LoadedConfig, preset_name: &str) -> Result<(EvalReport, PathBuf)> {
    let m = load_preset(cfg, preset_name)?;
    let (x, y) = labeled_xy(&m)?;
    let plan = eval_plan(cfg, &y)?;
    let params = cfg.config.gbt.active();
    let mut report = cross_validate(&x, &y, m.num_classes, params, &plan)?;
    report.config = serde_json::json!({
        "preset": preset_name,
        "categories": m.registry.categories(),
        "num_features": x.n_cols,
        "gbt": params,
        "config_hash": cfg.hash,
    });
    let path = cfg.report_dir().join(format!("evaluate-{preset_name}.json"));
    ensure_parent(&path)?;
    report.write_json(&path)?;
    log::info!(
        "evaluate {preset_name}: accuracy {:.4} logloss {:.4}",
        report.mean_accuracy,
        report.mean_logloss
    );
    Ok((report, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSummary {
    pub preset: String,
    pub method: ScoreMethod,
    pub k_grid: Vec<crate::featsel::KResult>,
    pub folds: Option<usize>,
    pub config_hash: String,
}

/// Univariate scoring plus the K sweep. Writes per-feature scores as CSV
/// and the sweep as JSON.
pub fn cmd_select(cfg: &LoadedConfig, preset_name: &str, method: ScoreMethod) -> Result<SelectSummary> {
    let m = load_preset(cfg, preset_name)?;
    let (_, y) = labeled_xy(&m)?;
    let plan = eval_plan(cfg, &y)?;
    let s = &cfg.config.select;
    let report = score_and_evaluate(&m, method, &s.k_grid, cfg.config.gbt.active(), &plan, s.mi_bins)?;
    let tag = format!(
        "select-{}-{preset_name}",
        serde_json::to_value(method)?.as_str().unwrap_or("method")
    );
    let dir = cfg.report_dir();
    ensure_dir(&dir)?;
    report.write_csv(dir.join(format!("{tag}.csv")))?;
    let summary = SelectSummary {
        preset: preset_name.to_string(),
        method,
        k_grid: report.k_grid,
        folds: report.folds,
        config_hash: cfg.hash.clone(),
    };
    write_json(&dir.join(format!("{tag}.json")), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseReport {
    pub preset: String,
    pub selected: Vec<Category>,
    pub trace: StepwiseTrace,
    pub config_hash: String,
}

/// Forward stepwise selection over the categories of a preset.
pub fn cmd_stepwise(cfg: &LoadedConfig, preset_name: &str) -> Result<StepwiseReport> {
    let m = load_preset(cfg, preset_name)?;
    let c = &cfg.config;
    let trace = forward_stepwise(
        &m,
        &m.registry.categories(),
        c.select.stepwise_folds,
        &c.gbt.baseline,
        c.eval.seed,
    )?;
    let report = StepwiseReport {
        preset: preset_name.to_string(),
        selected: trace.selected(),
        trace,
        config_hash: cfg.hash.clone(),
    };
    write_json(&cfg.report_dir().join(format!("stepwise-{preset_name}.json")), &report)?;
    Ok(report)
}

fn load_gbt(model_path: &Path) -> Result<(gbt::TreeEnsemble, ModelSidecar)> {
    let (model, _) = load_model(model_path)?;
    let side = sidecar_path(model_path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: ModelSidecar = serde_json::from_str(&text)?;
    if sidecar.feature_names.len() != model.num_features
        || sidecar.widths.iter().sum::<usize>() != model.num_features
        || sidecar.widths.len() != sidecar.categories.len()
    {
        return Err(Error::Shape(format!(
            "sidecar lists {} features, model expects {}",
            sidecar.feature_names.len(),
            model.num_features
        )));
    }
    Ok((model, sidecar))
}

/// Scores the unlabeled store rows (or all rows) and writes the
/// submission CSV plus a `.json` provenance note beside it.
pub fn cmd_predict(cfg: &LoadedConfig, model_path: &Path, out: &Path, all_rows: bool) -> Result<usize> {
    let (model, sidecar) = load_gbt(model_path)?;
    let store = load_store(cfg)?;
    let m = store.select_categories(&sidecar.categories)?;
    if m.registry.names() != sidecar.feature_names {
        return Err(Error::Shape(
            "feature store columns differ from the model's training columns".into(),
        ));
    }
    let rows: Vec<usize> = (0..m.n_rows()).filter(|&i| all_rows || m.labels[i].is_none()).collect();
    if rows.is_empty() {
        return Err(Error::Validation(
            "no rows to predict; pass --all to score labeled rows".into(),
        ));
    }
    let probs = model.predict_proba(&m.values.select_rows(&rows));
    let ids: Vec<String> = rows.iter().map(|&i| m.ids[i].clone()).collect();
    ensure_parent(out)?;
    write_submission(out, &ids, &probs)?;
    write_json(
        &out.with_extension("json"),
        &serde_json::json!({
            "model": model_path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "model_config_hash": sidecar.config_hash,
            "config_hash": cfg.hash,
            "rows": rows.len(),
        }),
    )?;
    Ok(rows.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub kind: ImportanceKind,
    pub features: Vec<gbt::RankedImportance>,
    pub categories: Vec<gbt::RankedImportance>,
    pub config_hash: String,
}

/// Per-feature and per-category importance of a saved booster.
pub fn cmd_importance(
    cfg: &LoadedConfig,
    model_path: &Path,
    kind: ImportanceKind,
    top: usize,
) -> Result<ImportanceReport> {
    let (model, sidecar) = load_gbt(model_path)?;
    let column_categories: Vec<Category> = sidecar
        .categories
        .iter()
        .zip(&sidecar.widths)
        .flat_map(|(&c, &w)| std::iter::repeat_n(c, w))
        .collect();
    let mut features = feature_importance(&model, kind, &sidecar.feature_names);
    features.truncate(top);
    let report = ImportanceReport {
        kind,
        features,
        categories: category_importance(&model, kind, &column_categories),
        config_hash: cfg.hash.clone(),
    };
    let stem = model_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let kind_tag = serde_json::to_value(kind)?.as_str().unwrap_or("kind").to_string();
    write_json(
        &cfg.report_dir().join(format!("importance-{stem}-{kind_tag}.json")),
        &report,
    )?;
    Ok(report)
}
