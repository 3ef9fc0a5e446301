use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use codesearch::codefeat::{Language, LanguageProfile};
use codesearch::corpus::{self, encode_all, load_jsonl, write_jsonl, RawRecord, VocabSet};
use codesearch::evalret::{self, build_index, export_embeddings, EmbeddingIndex, EvalConfig};
use codesearch::losses::{LossConfig, LossKind};
use codesearch::models::{ensure_supported, Arch, CodeSearchModel, ModelConfig};
use codesearch::synthcorpus::{self, SynthSpec};
use codesearch::trainer::{fit, load_checkpoint, save_checkpoint, TrainConfig, TrainLog, TrainState};

use crate::manifest::{manifest_path, RunManifest};
use crate::{
    Command, EvalArgs, ExportArgs, IndexArgs, PreprocessArgs, QueryArgs, SplitArgs, SynthArgs, TrainArgs, UsageError,
    VocabArgs,
};

/// Fraction of the training corpus held out when no validation file is given.
const HOLDOUT: f64 = 0.1;
const PREVIEW_CHARS: usize = 60;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a),
        Command::Vocab(a) => vocab(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Index(a) => index(a),
        Command::Query(a) => query(a),
        Command::ExportEmb(a) => export(a),
        Command::Synth(a) => synth(a),
    }
}

fn load(path: &Path) -> Result<Vec<RawRecord>> {
    load_jsonl(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let language: Language = a.lang.into();
    let mut profile = LanguageProfile::for_language(language);
    if let Some(k) = &a.keywords {
        profile = profile.with_keyword_file(k)?;
    }
    let mut records = load(&a.input)?;
    let missing = records
        .iter_mut()
        .map(|r| corpus::enrich(r, &profile))
        .filter(|found| !found)
        .count();
    write_jsonl(&a.output, Some(&format!("preprocess lang={language}")), &records)?;
    println!(
        "preprocessed {} records, {} without a method name",
        records.len(),
        missing
    );

    let mut m = RunManifest::new("preprocess");
    m.flag("lang", language);
    if let Some(k) = &a.keywords {
        m.flag("keywords", k.display()).input(k)?;
    }
    m.input(&a.input)?.output(&a.output)?;
    m.write(&manifest_path(&a.output))
}

fn vocab(a: VocabArgs) -> Result<()> {
    if a.min_freq == 0 || a.max_size < 2 {
        bail!(UsageError("--min-freq must be ≥ 1 and --max-size ≥ 2".into()));
    }
    let records = load(&a.corpus)?;
    let vocab = VocabSet::build(&records, a.min_freq, a.max_size);
    vocab.save(&a.out)?;
    let s = vocab.sizes();
    println!("vocabulary sizes: name={} api={} tokens={} text={}", s.name, s.api, s.tokens, s.text);

    let mut m = RunManifest::new("vocab");
    m.flag("min_freq", a.min_freq).flag("max_size", a.max_size);
    m.input(&a.corpus)?.output(&a.out)?;
    m.write(&manifest_path(&a.out))
}

fn split(a: SplitArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let (train, valid, test) = corpus::split(&records, (a.ratios[0], a.ratios[1], a.ratios[2]), a.seed)?;
    ensure_dir(&a.out_dir)?;
    let mut m = RunManifest::new("split");
    m.flag("ratios", format!("{},{},{}", a.ratios[0], a.ratios[1], a.ratios[2]));
    m.seed("seed", a.seed).input(&a.corpus)?;
    for (name, part) in [("train", &train), ("valid", &valid), ("test", &test)] {
        let path = a.out_dir.join(format!("{name}.jsonl"));
        write_jsonl(&path, None, part)?;
        m.output(&path)?;
        println!("{name}: {} records", part.len());
    }
    m.write(&a.out_dir.join("manifest.json"))
}

fn train(a: TrainArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let vocab = VocabSet::load(&a.vocab).with_context(|| format!("loading vocabulary {}", a.vocab.display()))?;
    let (train_records, valid_records) = match &a.valid {
        Some(p) => (records, load(p)?),
        None => {
            let (t, v, _) = corpus::split(&records, (1.0 - HOLDOUT, HOLDOUT, 0.0), a.seed)?;
            (t, v)
        }
    };
    let arch: Arch = a.arch.into();
    ensure_supported(arch, a.lang.map(Language::from), &train_records)?;

    let kind: LossKind = a.loss.into();
    let loss = match a.margin {
        Some(m) => LossConfig::with_margin(kind, m)?,
        None => LossConfig::new(kind),
    };
    let mut cfg = ModelConfig::new(arch, a.semb, vocab.sizes());
    cfg.embed_dim = a.embed_dim;
    if let Some(h) = a.hidden {
        cfg.lstm_hidden = h;
    }
    cfg.loss = loss;
    cfg.fusion = a.fusion.into();
    cfg.seed = a.seed;
    cfg.validate()?;
    if !cfg.is_standard_s_emb() {
        eprintln!("warning: non-standard S_emb {}", cfg.s_emb);
    }

    let tc = TrainConfig {
        initial_lr: a.lr,
        patience: a.patience,
        max_halvings: a.max_halvings,
        batch_size: a.batch_size as usize,
        max_epochs: a.max_epochs,
        seed: a.seed,
        validate_every: a.validate_every as usize,
        validation_pool_size: a.val_pool_size,
        validation_layer: a.val_layer.into(),
    };
    tc.validate()?;

    let (mut model, mut state) = match &a.resume {
        Some(p) => {
            let ck = load_checkpoint(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            if ck.vocab != vocab {
                bail!("checkpoint {} was trained with a different vocabulary", p.display());
            }
            if ck.model.config != cfg {
                bail!(UsageError(format!(
                    "model flags differ from the checkpoint being resumed ({})",
                    p.display()
                )));
            }
            (ck.model, ck.state)
        }
        None => (CodeSearchModel::<f32>::build(cfg.clone())?, TrainState::new(&tc)),
    };
    state.stopped = false;

    let train_data = encode_all(&train_records, &vocab, &cfg.max_lens);
    let valid_data = encode_all(&valid_records, &vocab, &cfg.max_lens);
    if valid_data.len() < 2 {
        bail!(UsageError(format!(
            "validation set has {} records; need at least 2",
            valid_data.len()
        )));
    }

    ensure_dir(&a.out)?;
    let log_path = a.out.join("train_log.jsonl");
    let mut log = TrainLog::create(&log_path, a.resume.is_some())?;
    let pool = tc.validation_pool_size.min(valid_data.len());
    if pool < tc.validation_pool_size {
        eprintln!(
            "warning: validation set has {} records; validation pool size reduced to {pool}",
            valid_data.len()
        );
    }
    let eval_cfg = EvalConfig::new(pool, tc.validation_layer, a.seed);
    let outcome = fit(
        &mut model,
        &train_data,
        &tc,
        &mut state,
        |m| Ok(evalret::evaluate(m, &valid_data, &eval_cfg)?.mrr),
        |record, _, _, _| log.write(record),
    )?;

    let best_path = a.out.join("best.ckpt");
    let last_path = a.out.join("last.ckpt");
    save_checkpoint(&best_path, &outcome.best_model, &outcome.best_state, &vocab, Some(&tc))?;
    save_checkpoint(&last_path, &model, &state, &vocab, Some(&tc))?;
    println!(
        "trained {} epochs; best validation MRR {:.6} at epoch {}",
        state.epoch, outcome.best_state.best_val_mrr, outcome.best_state.best_epoch
    );

    let mut m = RunManifest::new("train");
    m.flag("arch", arch)
        .flag("semb", a.semb)
        .flag("loss", kind)
        .flag("margin", loss.margin)
        .flag("batch_size", a.batch_size)
        .flag("max_epochs", a.max_epochs)
        .flag("lr", a.lr)
        .flag("patience", a.patience)
        .flag("max_halvings", a.max_halvings)
        .flag("validate_every", a.validate_every)
        .flag("val_pool_size", a.val_pool_size)
        .flag("val_layer", tc.validation_layer)
        .flag("embed_dim", cfg.embed_dim)
        .flag("hidden", cfg.lstm_hidden)
        .flag("fusion", format!("{:?}", cfg.fusion))
        .seed("seed", a.seed);
    m.input(&a.corpus)?.input(&a.vocab)?;
    if let Some(v) = &a.valid {
        m.input(v)?;
    }
    if let Some(r) = &a.resume {
        m.flag("resume", r.display());
    }
    m.output(&best_path)?.output(&last_path)?.output(&log_path)?;
    m.write(&a.out.join("manifest.json"))
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&a.model).with_context(|| format!("loading checkpoint {}", a.model.display()))?;
    let records = load(&a.corpus)?;
    let data = encode_all(&records, &ck.vocab, &ck.model.config.max_lens);
    let mut reports = Vec::new();
    for layer in a.layer.layers() {
        let cfg = EvalConfig::new(a.pool_size, layer, a.seed);
        let report = evalret::evaluate(&ck.model, &data, &cfg)?;
        println!("{report}");
        reports.push(report);
    }
    if let Some(path) = &a.report {
        let mut bytes = serde_json::to_vec_pretty(&reports)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let mut m = RunManifest::new("eval");
        m.flag("pool_size", a.pool_size)
            .flag("layer", format!("{:?}", a.layer).to_lowercase())
            .seed("seed", a.seed);
        m.input(&a.model)?.input(&a.corpus)?.output(path)?;
        m.write(&manifest_path(path))?;
    }
    Ok(())
}

fn index(a: IndexArgs) -> Result<()> {
    let ck = load_checkpoint(&a.model).with_context(|| format!("loading checkpoint {}", a.model.display()))?;
    let records = load(&a.corpus)?;
    let data = encode_all(&records, &ck.vocab, &ck.model.config.max_lens);
    let index = build_index(&ck.model, &data, a.layer.into())?;
    index.save(&a.out)?;
    println!("indexed {} snippets, dimension {}", index.len(), index.dim());

    let mut m = RunManifest::new("index");
    m.flag("layer", index.layer);
    m.input(&a.model)?.input(&a.corpus)?.output(&a.out)?;
    m.write(&manifest_path(&a.out))
}

fn preview(record: &RawRecord) -> String {
    let source = if record.code.is_empty() { &record.text } else { &record.code };
    let flat: String = source.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() > PREVIEW_CHARS {
        let cut: String = flat.chars().take(PREVIEW_CHARS).collect();
        format!("{cut}...")
    } else {
        flat
    }
}

fn query(a: QueryArgs) -> Result<()> {
    if a.k == 0 {
        bail!(UsageError("--k must be at least 1".into()));
    }
    let index = EmbeddingIndex::load(&a.index)?;
    let ck = load_checkpoint(&a.model).with_context(|| format!("loading checkpoint {}", a.model.display()))?;
    let records: HashMap<String, RawRecord> = match &a.corpus {
        Some(p) => load(p)?.into_iter().map(|r| (r.id.clone(), r)).collect(),
        None => HashMap::new(),
    };
    for hit in index.query(&ck.model, &ck.vocab, &a.text, a.k)? {
        let snippet = records.get(&hit.id).map(preview).unwrap_or_default();
        println!("{}\t{:.6}\t{}\t{}", hit.rank, hit.score, hit.id, snippet);
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let ck = load_checkpoint(&a.model).with_context(|| format!("loading checkpoint {}", a.model.display()))?;
    let records = load(&a.corpus)?;
    let data = encode_all(&records, &ck.vocab, &ck.model.config.max_lens);
    let labels: Vec<Option<String>> = if records.iter().any(|r| r.label.is_some()) {
        records.iter().map(|r| r.label.clone()).collect()
    } else {
        Vec::new()
    };
    export_embeddings(&ck.model, &data, &labels, a.side.into(), a.layer.into(), &a.out, a.pca2)?;
    println!("exported {} embeddings to {}", data.len(), a.out.display());

    let mut m = RunManifest::new("export-emb");
    m.flag("side", format!("{:?}", a.side).to_lowercase())
        .flag("layer", codesearch::models::EvalLayer::from(a.layer))
        .flag("pca2", a.pca2);
    m.input(&a.model)?.input(&a.corpus)?.output(&a.out)?;
    m.write(&manifest_path(&a.out))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec::new(a.records, a.concepts, a.noise, a.seed);
    let records = synthcorpus::write(&spec, &a.out)?;
    println!("wrote {} synthetic records with {} concepts", records.len(), a.concepts);

    let mut m = RunManifest::new("synth");
    m.flag("records", a.records)
        .flag("concepts", a.concepts)
        .flag("noise", a.noise)
        .seed("seed", a.seed);
    m.output(&a.out)?;
    m.write(&manifest_path(&a.out))
}
