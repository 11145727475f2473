//! End-to-end orchestration: knowledge base -> catalog -> generated pairs ->
//! split -> trained model -> scored report, plus the encoding-ladder
//! comparison that runs several settings side by side.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{build_catalog, CatalogError, CatalogOptions, EntityCatalog};
use crate::codec::{CodecPreset, TokenSeq, PRESET_V1, PRESET_V1_1, PRESET_V2_1, PRESET_V3, PRESET_V4};
use crate::dataset::{
    split_dataset, write_atomic, write_dataset, write_split, DatasetIoError, DatasetSplit,
    EncodedPair, Partition, SplitError,
};
use crate::eval::{evaluate, EvalReport};
use crate::generator::{
    direct_translations, instantiate_with, GeneratorConfig, GeneratorError, QueryTemplate,
};
use crate::learner::{
    save_model, train, EpochStat, HyperParams, LearnerError, Seq2SeqModel, TrainConfig, Vocab,
};
use crate::ntriples::Triple;
use crate::util::Execution;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    DatasetIo(#[from] DatasetIoError),
    #[error("unknown experiment setting {0:?}")]
    UnknownSetting(String),
}

/// One row of the encoding ladder: which codec preset to use and which
/// generator options go with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSetting {
    pub name: &'static str,
    pub preset: CodecPreset,
    /// Two-placeholder templates included (second column of the ladder on).
    pub multi_placeholder: bool,
    /// Label -> entity-token pairs added to the training set.
    pub direct_translations: bool,
}

pub const SETTINGS: [ExperimentSetting; 6] = [
    ExperimentSetting {
        name: "v1",
        preset: PRESET_V1,
        multi_placeholder: false,
        direct_translations: false,
    },
    ExperimentSetting {
        name: "v1.1",
        preset: PRESET_V1_1,
        multi_placeholder: false,
        direct_translations: false,
    },
    ExperimentSetting {
        name: "v2",
        preset: PRESET_V1_1,
        multi_placeholder: true,
        direct_translations: false,
    },
    ExperimentSetting {
        name: "v2.1",
        preset: PRESET_V2_1,
        multi_placeholder: true,
        direct_translations: false,
    },
    ExperimentSetting {
        name: "v3",
        preset: PRESET_V3,
        multi_placeholder: true,
        direct_translations: false,
    },
    ExperimentSetting {
        name: "v4",
        preset: PRESET_V4,
        multi_placeholder: true,
        direct_translations: true,
    },
];

impl ExperimentSetting {
    pub fn by_name(name: &str) -> Option<&'static ExperimentSetting> {
        SETTINGS.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub setting: &'static ExperimentSetting,
    pub ratios: (u32, u32, u32),
    pub seed: u64,
    /// Occurrences of the rank-1 entity per template slot.
    pub top_entity_count: usize,
    pub max_pairs: Option<usize>,
    /// Vocabulary count threshold.
    pub min_count: usize,
    pub catalog: CatalogOptions,
    pub hp: HyperParams,
    pub train: TrainConfig,
    pub execution: Execution,
}

impl PipelineConfig {
    pub fn new(setting: &'static ExperimentSetting) -> PipelineConfig {
        PipelineConfig {
            setting,
            ratios: (80, 10, 10),
            seed: 42,
            top_entity_count: 10,
            max_pairs: None,
            min_count: 1,
            catalog: CatalogOptions::default(),
            hp: HyperParams::default(),
            train: TrainConfig::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub setting: String,
    pub entities: usize,
    pub pairs: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub curve: Vec<EpochStat>,
    /// Scores on the raw decoder output.
    pub eval_raw: EvalReport,
    /// Scores after sequence repair.
    pub eval_interpreted: EvalReport,
    /// First epoch whose dev BLEU is within half a point of the final one.
    pub convergence_epoch: Option<usize>,
}

pub struct PipelineOutput {
    pub report: PipelineReport,
    pub model: Seq2SeqModel,
    pub pairs: Vec<EncodedPair>,
    pub split: DatasetSplit,
}

fn to_pairs(selected: Vec<&EncodedPair>) -> Vec<(TokenSeq, TokenSeq)> {
    selected
        .iter()
        .map(|p| (p.nl.clone(), p.query.clone()))
        .collect()
}

/// First epoch with a dev score within 0.5 BLEU points of the final one.
pub fn convergence_epoch(curve: &[EpochStat]) -> Option<usize> {
    let last = curve.iter().rev().find_map(|s| s.dev_bleu)?;
    curve
        .iter()
        .find(|s| s.dev_bleu.is_some_and(|b| (last - b).abs() <= 0.005))
        .map(|s| s.epoch)
}

/// Builds the catalog, generates and splits the dataset, trains a model,
/// and scores it on the held-out test questions.
pub fn run_pipeline(
    triples: &[Triple],
    templates: &[QueryTemplate],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let setting = cfg.setting;
    let catalog: EntityCatalog = build_catalog(triples, &cfg.catalog)?;

    let mut gen_cfg = GeneratorConfig::new(setting.preset);
    gen_cfg.allow_multi_placeholder = setting.multi_placeholder;
    gen_cfg.top_entity_count = cfg.top_entity_count;
    gen_cfg.max_pairs = cfg.max_pairs;
    gen_cfg.seed = cfg.seed;
    let generated = instantiate_with(templates, &catalog, &gen_cfg, cfg.execution)?;
    let pairs = generated.pairs;

    let split = split_dataset(&pairs, cfg.ratios, cfg.seed)?;
    let mut train_pairs = to_pairs(split.select(&pairs, Partition::Train));
    let dev_pairs = to_pairs(split.select(&pairs, Partition::Dev));
    let test_pairs = to_pairs(split.select(&pairs, Partition::Test));
    if setting.direct_translations {
        // direct label->entity pairs strengthen the entity mapping but must
        // never leak into dev/test
        let direct = direct_translations(&catalog, &setting.preset)?;
        train_pairs.extend(direct.pairs.into_iter().map(|p| (p.nl, p.query)));
    }

    let src_vocab = Vocab::build(train_pairs.iter().map(|(nl, _)| nl), cfg.min_count);
    let tgt_vocab = Vocab::build(train_pairs.iter().map(|(_, q)| q), cfg.min_count);
    let mut model = Seq2SeqModel::new(src_vocab, tgt_vocab, cfg.hp, setting.preset.id, cfg.seed);

    let report = train(
        &mut model,
        &train_pairs,
        &dev_pairs,
        &cfg.train,
        cfg.execution,
        None,
    )?;

    let eval_raw = evaluate(
        &model,
        &test_pairs,
        &setting.preset,
        false,
        cfg.train.max_decode_len,
        cfg.execution,
    );
    let eval_interpreted = evaluate(
        &model,
        &test_pairs,
        &setting.preset,
        true,
        cfg.train.max_decode_len,
        cfg.execution,
    );

    let convergence = convergence_epoch(&report.curve);
    Ok(PipelineOutput {
        report: PipelineReport {
            setting: setting.name.to_string(),
            entities: catalog.len(),
            pairs: pairs.len(),
            train_size: train_pairs.len(),
            dev_size: dev_pairs.len(),
            test_size: test_pairs.len(),
            curve: report.curve,
            eval_raw,
            eval_interpreted,
            convergence_epoch: convergence,
        },
        model,
        pairs,
        split,
    })
}

/// Runs the ladder settings in order and returns one report per row.
pub fn run_ablation(
    triples: &[Triple],
    templates: &[QueryTemplate],
    base: &PipelineConfig,
    setting_names: &[&str],
) -> Result<Vec<PipelineReport>, PipelineError> {
    let mut reports = Vec::new();
    for name in setting_names {
        let setting = ExperimentSetting::by_name(name)
            .ok_or_else(|| PipelineError::UnknownSetting(name.to_string()))?;
        let mut cfg = base.clone();
        cfg.setting = setting;
        reports.push(run_pipeline(triples, templates, &cfg)?.report);
    }
    Ok(reports)
}

/// `epoch,train_loss,dev_bleu` rows; a skipped dev evaluation leaves the
/// last column empty.
pub fn curve_csv(curve: &[EpochStat]) -> String {
    let mut out = String::from("epoch,train_loss,dev_bleu\n");
    for s in curve {
        let dev = s.dev_bleu.map(|b| format!("{b:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{:.6},{}\n", s.epoch, s.train_loss, dev));
    }
    out
}

/// Fixed-width comparison table over several settings.
pub fn report_text(reports: &[PipelineReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>8} {:>8} {:>10} {:>10} {:>12}\n",
        "setting", "pairs", "test", "bleu%", "accuracy%", "convergence"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<8} {:>8} {:>8} {:>10.2} {:>10.2} {:>12}\n",
            r.setting,
            r.pairs,
            r.test_size,
            r.eval_interpreted.bleu * 100.0,
            r.eval_interpreted.exact_match * 100.0,
            r.convergence_epoch
                .map(|e| e.to_string())
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out
}

/// Writes dataset, split, checkpoint, learning curve, and reports under
/// `out_dir`; every file is written atomically.
pub fn write_artifacts(out_dir: &Path, output: &PipelineOutput) -> Result<(), PipelineError> {
    let data_dir = out_dir.join("dataset");
    write_dataset(&data_dir, &output.pairs)?;
    write_split(&data_dir, &output.split)?;
    save_model(&output.model, &out_dir.join("model.json"))?;
    write_atomic(&out_dir.join("curve.csv"), &curve_csv(&output.report.curve))?;
    let json =
        serde_json::to_string_pretty(&output.report).expect("report serializes") + "\n";
    write_atomic(&out_dir.join("report.json"), &json)?;
    write_atomic(
        &out_dir.join("report.txt"),
        &report_text(std::slice::from_ref(&output.report)),
    )?;
    Ok(())
}
