use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{
    resolve_input, AttributeArgs, CliError, Command, EvaluateArgs, HeatmapArgs, InteractionArgs, PatternsArgs, Result,
    SegevalArgs, Settings, SyntheticArgs, ToyArgs, TrainArgs,
};
use crate::attribution::{
    enumerate_candidates, interaction_analysis, pattern_frequency, rank_candidates, resolve_label,
    synthetic_experiment, topk_segmentation_eval, CandidateMode, SyntheticSetup,
};
use crate::cd::{class_contribution, AttributionRecord, IndexSet, WordAttributor};
use crate::corpus::{
    dedupe_and_split, generate_toy_corpus, parse_conllu, parse_segmentation, read_conllu_tokens, write_conllu,
    write_segmentation, FeatureSchema, Ruleset, Splits, SyntheticConfig, WordSample, FINNISH_SKIP_LINES,
};
use crate::models::{
    argmax, evaluate_accuracy, load_model, majority_baseline, save_model, train, AccuracyReport, Architecture,
    EncoderConfig, Model, TrainConfig,
};
use crate::report::{bigram_spec, emit_heatmap, write_jsonl, write_jsonl_file, HeatmapSpec, RunManifest};
use crate::tensor::Rng;

pub(super) fn dispatch(cli: super::Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Train(a) => cmd_train(a, Settings::load(config, "train")?),
        Command::Evaluate(a) => cmd_evaluate(a, Settings::load(config, "evaluate")?),
        Command::Attribute(a) => cmd_attribute(a, Settings::load(config, "attribute")?),
        Command::Segeval(a) => cmd_segeval(a, Settings::load(config, "segeval")?),
        Command::Synthetic(a) => cmd_synthetic(a, Settings::load(config, "synthetic")?),
        Command::Patterns(a) => cmd_patterns(a, Settings::load(config, "patterns")?),
        Command::Interaction(a) => cmd_interaction(a, Settings::load(config, "interaction")?),
        Command::Heatmap(a) => cmd_heatmap(a, Settings::load(config, "heatmap")?),
        Command::Toy(a) => cmd_toy(a, Settings::load(config, "toy")?),
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", out.display()))
}

fn finish_manifest(name: &str, seed: Option<u64>, settings: &Settings, inputs: &[&Path], out: &Path) -> Result<()> {
    let mut m = RunManifest::new(name, seed, settings.config());
    for p in inputs {
        m.add_input(p)?;
    }
    m.write(&sidecar(out, "manifest.json"))?;
    Ok(())
}

fn default_skip(lang: &str) -> usize {
    if lang == "fi" {
        FINNISH_SKIP_LINES
    } else {
        0
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn load_words(path: &Path, schema: &FeatureSchema, skip: usize) -> Result<Vec<WordSample>> {
    Ok(parse_conllu(open(path)?, skip, schema)?)
}

/// Built-in schema for the language, or one inferred from the file.
fn schema_for(lang: &str, train_path: &Path, skip: usize) -> Result<FeatureSchema> {
    if let Some(s) = FeatureSchema::builtin(lang) {
        return Ok(s);
    }
    let tokens = read_conllu_tokens(open(train_path)?, skip)?;
    let schema = FeatureSchema::infer(
        lang,
        tokens
            .iter()
            .flat_map(|t| t.feats.iter().map(|(k, v)| (k.as_str(), v.as_str()))),
    );
    if schema.is_empty() {
        return Err(CliError::InvalidInput(format!(
            "no morphological features in {}",
            train_path.display()
        )));
    }
    log::info!("inferred schema with {} classes for {lang:?}", schema.len());
    Ok(schema)
}

fn load_model_file(path: &Path) -> Result<Model> {
    Ok(load_model(resolve_input(path)?)?)
}

fn encoder_config(
    settings: &mut Settings,
    arch: Architecture,
    embed: Option<usize>,
    hidden: Option<usize>,
    scale: Option<usize>,
    width: Option<usize>,
) -> Result<EncoderConfig> {
    let embed_dim = settings.get("embed_dim", embed, 50)?;
    Ok(match arch {
        Architecture::Cnn => {
            let scale = settings.get("filter_scale", scale, 25)?;
            let width = settings.get("max_width", width, 6)?;
            EncoderConfig::Cnn {
                embed_dim,
                banks: (1..=width).map(|n| (n, scale * n)).collect(),
            }
        }
        Architecture::Bilstm => EncoderConfig::Bilstm {
            embed_dim,
            hidden: settings.get("hidden", hidden, 100)?,
        },
    })
}

fn parse_arch(s: &str) -> Result<Architecture> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown architecture {s:?} (cnn or bilstm)")))
}

fn print_accuracy(model: &AccuracyReport, majority: Option<&AccuracyReport>) {
    println!("{:<16}{:>10}{:>10}", "class", "model", "majority");
    for (class, acc) in &model.per_class {
        let maj = majority
            .and_then(|m| m.class(class))
            .map(|v| format!("{:.2}", 100.0 * v))
            .unwrap_or_default();
        println!("{class:<16}{:>10.2}{maj:>10}", 100.0 * acc);
    }
    let maj = majority
        .map(|m| format!("{:.2}", 100.0 * m.average))
        .unwrap_or_default();
    println!("{:<16}{:>10.2}{maj:>10}", "average", 100.0 * model.average);
}

fn accuracy_rows(model: &AccuracyReport, majority: Option<&AccuracyReport>) -> Vec<serde_json::Value> {
    let mut rows = Vec::new();
    for (system, r) in std::iter::once(("model", model)).chain(majority.map(|m| ("majority", m))) {
        for (class, acc) in &r.per_class {
            rows.push(json!({"system": system, "class": class, "accuracy": acc, "words": r.words}));
        }
        rows.push(json!({"system": system, "class": "average", "accuracy": r.average, "words": r.words}));
    }
    rows
}

fn cmd_train(a: TrainArgs, mut s: Settings) -> Result<()> {
    let lang: String = s.require("lang", a.lang)?;
    let arch = parse_arch(&s.get("arch", a.arch, "cnn".to_string())?)?;
    let train_path = resolve_input(&s.require::<PathBuf>("train", a.train)?)?;
    let valid_path = resolve_input(&s.require::<PathBuf>("valid", a.valid)?)?;
    let test_path = s
        .opt::<PathBuf>("test", a.test)?
        .map(|p| resolve_input(&p))
        .transpose()?;
    let out: PathBuf = s.require("out", a.out)?;
    let skip = s.get("skip_lines", a.skip_lines, default_skip(&lang))?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        lr: s.get("lr", a.lr, defaults.lr)?,
        batch_size: s.get("batch_size", a.batch_size, defaults.batch_size)?,
        max_epochs: s.get("max_epochs", a.max_epochs, defaults.max_epochs)?,
        patience: s.get("patience", a.patience, defaults.patience)?,
        seed: s.get("seed", a.seed, defaults.seed)?,
        unk_replace_prob: defaults.unk_replace_prob,
    };
    let encoder = encoder_config(&mut s, arch, a.embed_dim, a.hidden, a.filter_scale, a.max_width)?;

    let schema = schema_for(&lang, &train_path, skip)?;
    let train_words = load_words(&train_path, &schema, skip)?;
    let valid_words = load_words(&valid_path, &schema, 0)?;
    let test_words = match &test_path {
        Some(p) => load_words(p, &schema, 0)?,
        None => Vec::new(),
    };
    let (splits, report) = dedupe_and_split(train_words, valid_words, test_words)?;
    log::info!(
        "unique words: train {}, valid {}, test {}",
        report.train.kept,
        report.valid.kept,
        report.test.kept
    );
    let (model, history) = train(encoder, &schema, &splits.train, &splits.valid, &cfg)?;
    save_model(&model, &out)?;
    write_jsonl_file(&sidecar(&out, "history.jsonl"), &history.epochs)?;
    println!(
        "best epoch {} of {}, validation accuracy {:.2}%",
        history.best_epoch,
        history.epochs.len(),
        100.0 * history.best_valid_accuracy
    );
    let mut inputs = vec![train_path.as_path(), valid_path.as_path()];
    if let Some(p) = &test_path {
        let acc = evaluate_accuracy(&model, &splits.test, &schema)?;
        let maj = majority_baseline(&schema, &splits.train, &splits.test)?;
        print_accuracy(&acc, Some(&maj));
        write_jsonl_file(&sidecar(&out, "eval.jsonl"), accuracy_rows(&acc, Some(&maj)))?;
        inputs.push(p);
    }
    finish_manifest("train", Some(cfg.seed), &s, &inputs, &out)
}

fn cmd_evaluate(a: EvaluateArgs, mut s: Settings) -> Result<()> {
    let model_path = resolve_input(&s.require::<PathBuf>("model", a.model)?)?;
    let test_path = resolve_input(&s.require::<PathBuf>("test", a.test)?)?;
    let train_path = s
        .opt::<PathBuf>("train", a.train)?
        .map(|p| resolve_input(&p))
        .transpose()?;
    let out = s.opt::<PathBuf>("out", a.out)?;
    let model = load_model_file(&model_path)?;
    let skip = s.get("skip_lines", a.skip_lines, default_skip(&model.schema.language))?;
    let (splits, _) = dedupe_and_split(
        match &train_path {
            Some(p) => load_words(p, &model.schema, skip)?,
            None => Vec::new(),
        },
        Vec::new(),
        load_words(&test_path, &model.schema, 0)?,
    )?;
    let acc = evaluate_accuracy(&model, &splits.test, &model.schema)?;
    let maj = match &train_path {
        Some(_) => Some(majority_baseline(&model.schema, &splits.train, &splits.test)?),
        None => None,
    };
    print_accuracy(&acc, maj.as_ref());
    if let Some(out) = out {
        write_jsonl_file(&out, accuracy_rows(&acc, maj.as_ref()))?;
        let mut inputs = vec![model_path.as_path(), test_path.as_path()];
        if let Some(p) = &train_path {
            inputs.push(p);
        }
        finish_manifest("evaluate", None, &s, &inputs, &out)?;
    }
    Ok(())
}

/// Explained label: the requested value or the model's prediction.
fn target_label(model: &Model, word: &str, class: &str, value: Option<String>) -> Result<(usize, usize, String)> {
    let k = model
        .schema
        .class_index(class)
        .ok_or_else(|| CliError::Mismatch(format!("class {class:?} not in the model schema")))?;
    let value = match value {
        Some(v) => v,
        None => model.schema.classes[k].labels[argmax(&model.logits(word)?[k])].clone(),
    };
    let (k, j) = resolve_label(model, class, &value)?;
    Ok((k, j, value))
}

fn emit_records(out: Option<&Path>, records: &[AttributionRecord]) -> Result<()> {
    match out {
        Some(p) => write_jsonl_file(p, records)?,
        None => {
            let stdout = std::io::stdout();
            write_jsonl(stdout.lock(), records)?;
        }
    }
    Ok(())
}

fn cmd_attribute(a: AttributeArgs, mut s: Settings) -> Result<()> {
    let model_path = resolve_input(&s.require::<PathBuf>("model", a.model)?)?;
    let word: String = s.require("word", a.word)?;
    let class: String = s.require("class", a.class)?;
    let value = s.opt("value", a.value)?;
    let mode: String = s.get("mode", a.mode, "singleton".to_string())?;
    let k_card: usize = s.get("k", a.k, 1)?;
    let boundaries = s.get("boundaries", a.boundaries.then_some(true), false)?;
    let out = s.opt::<PathBuf>("out", a.out)?;

    let model = load_model_file(&model_path)?;
    let (k, j, value) = target_label(&model, &word, &class, value)?;
    let logit = model.logits(&word)?[k][j];
    let attributor = WordAttributor::new(&model, &word)?;
    let ids = attributor.ids().to_vec();
    let len = word.chars().count();
    let sets: Vec<IndexSet> = match mode.as_str() {
        "singleton" => {
            let range = if boundaries { 0..len + 2 } else { 1..len + 1 };
            range
                .map(|p| IndexSet::new([p], &ids))
                .collect::<std::result::Result<_, _>>()?
        }
        "bigram" => {
            let mut v = Vec::new();
            for i in 0..len {
                for jj in i + 1..len {
                    v.push(IndexSet::from_chars([i, jj], &ids)?);
                }
            }
            v
        }
        m => {
            let cm: CandidateMode = m.parse().map_err(|_| CliError::Usage(format!("unknown mode {m:?}")))?;
            let heads = model.heads();
            let scorer = attributor.scorer(heads.heads[k], j)?;
            let cands = enumerate_candidates(len, k_card, cm)?;
            rank_candidates(&scorer, &ids, &cands.sets)?
                .into_iter()
                .map(|r| r.index_set)
                .collect()
        }
    };
    let heads = model.heads();
    let records = sets
        .into_iter()
        .map(|set| {
            let c = class_contribution(&heads.heads[k], &attributor.decompose(&set)?, j)?;
            Ok(AttributionRecord {
                word: word.clone(),
                class: class.clone(),
                value: value.clone(),
                index_set: set,
                beta_score: c.beta_score,
                gamma_score: c.gamma_score,
                bias: c.bias,
                logit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit_records(out.as_deref(), &records)?;
    if let Some(out) = out {
        let chars: Vec<char> = word.chars().collect();
        for r in &records {
            let shown: String = r
                .index_set
                .positions()
                .iter()
                .map(|&p| match p {
                    0 => '^',
                    p if p > len => '$',
                    p => chars[p - 1],
                })
                .collect();
            println!("{:?}\t{shown}\t{:.6}", r.index_set.positions(), r.beta_score);
        }
        finish_manifest("attribute", None, &s, &[&model_path], &out)?;
    }
    Ok(())
}

fn cmd_segeval(a: SegevalArgs, mut s: Settings) -> Result<()> {
    let model_path = resolve_input(&s.require::<PathBuf>("model", a.model)?)?;
    let seg_path = resolve_input(&s.require::<PathBuf>("segments", a.segments)?)?;
    let topk: usize = s.get("topk", a.topk, 3)?;
    let mode: CandidateMode = s
        .get("mode", a.mode, "cons".to_string())?
        .parse()
        .map_err(|e: crate::attribution::AttributionError| CliError::Usage(e.to_string()))?;
    let out = s.opt::<PathBuf>("out", a.out)?;
    if topk == 0 {
        return Err(CliError::Usage("--topk must be at least 1".into()));
    }
    let model = load_model_file(&model_path)?;
    let annotations = parse_segmentation(open(&seg_path)?, &model.schema)?;
    let report = topk_segmentation_eval(&model, &annotations, topk, mode)?;
    let rows: Vec<serde_json::Value> = (1..=topk)
        .map(|k| {
            json!({
                "mode": mode.to_string(),
                "k": k,
                "correct": report.correct[k - 1],
                "evaluated": report.evaluated,
                "total": report.total,
                "rate": report.rate(k),
                "skipped": report.skipped.len(),
                "capped": report.capped,
            })
        })
        .collect();
    for k in 1..=topk {
        println!(
            "{mode} top-{k}: {}/{} ({:.2}%)",
            report.correct[k - 1],
            report.evaluated,
            100.0 * report.rate(k)
        );
    }
    for sk in &report.skipped {
        eprintln!("skipped {} {}: {}", sk.surface, sk.feature, sk.reason);
    }
    if let Some(out) = out {
        write_jsonl_file(&out, &rows)?;
        if !report.skipped.is_empty() {
            write_jsonl_file(&sidecar(&out, "skipped.jsonl"), &report.skipped)?;
        }
        finish_manifest("segeval", None, &s, &[&model_path, &seg_path], &out)?;
    }
    Ok(())
}

fn load_ruleset(spec: &str) -> Result<Ruleset> {
    match spec {
        "plural_suffix" => Ok(Ruleset::plural_suffix()),
        "ambiguous_number" => Ok(Ruleset::ambiguous_number()),
        path => {
            let p = resolve_input(Path::new(path))?;
            Ok(Ruleset::from_toml(&std::fs::read_to_string(p)?)?)
        }
    }
}

fn cmd_synthetic(a: SyntheticArgs, mut s: Settings) -> Result<()> {
    let defaults = SyntheticSetup::default();
    let inj = SyntheticConfig {
        p_syn: 1.0,
        symbol: s.get("symbol", a.symbol, defaults.injection.symbol)?,
        class: s.get("class", a.class, defaults.injection.class.clone())?,
        positive: s.get("positive", a.positive, defaults.injection.positive.clone())?,
        negative: s.get("negative", a.negative, defaults.injection.negative.clone())?,
    };
    let levels = s.get("levels", a.levels, defaults.levels.clone())?;
    let seeds = s.get("seeds", a.seeds, defaults.seeds.clone())?;
    let arch = parse_arch(&s.get("arch", a.arch, "cnn".to_string())?)?;
    let max_epochs = s.get("max_epochs", a.max_epochs, defaults.train.max_epochs)?;
    let out = s.opt::<PathBuf>("out", a.out)?;
    let toy = s.opt::<String>("toy", a.toy)?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    let (splits, gt): (Splits, BTreeMap<String, Vec<usize>>) = match toy {
        Some(spec) => {
            let n = s.get("toy_words", a.toy_words, 2000)?;
            let corpus = generate_toy_corpus(&load_ruleset(&spec)?, n, &mut Rng::seeded(1))?;
            let gt = corpus
                .annotations
                .iter()
                .filter(|x| x.class == inj.class && x.value == inj.positive)
                .map(|x| (x.surface.clone(), x.indices.clone()))
                .collect();
            (corpus.split(0.1, 0.1), gt)
        }
        None => {
            let lang: String = s.require("lang", a.lang)?;
            let train_path = resolve_input(&s.require::<PathBuf>("train", a.train)?)?;
            let valid_path = resolve_input(&s.require::<PathBuf>("valid", a.valid)?)?;
            let test_path = resolve_input(&s.require::<PathBuf>("test", a.test)?)?;
            let seg_path = s
                .opt::<PathBuf>("segments", a.segments)?
                .map(|p| resolve_input(&p))
                .transpose()?;
            let skip = s.get("skip_lines", a.skip_lines, default_skip(&lang))?;
            let schema = schema_for(&lang, &train_path, skip)?;
            let (splits, _) = dedupe_and_split(
                load_words(&train_path, &schema, skip)?,
                load_words(&valid_path, &schema, 0)?,
                load_words(&test_path, &schema, 0)?,
            )?;
            let mut gt = BTreeMap::new();
            if let Some(p) = &seg_path {
                for x in parse_segmentation(open(p)?, &schema)? {
                    if x.class == inj.class && x.value == inj.positive {
                        gt.insert(x.surface, x.indices);
                    }
                }
                inputs.push(p.clone());
            }
            inputs.extend([train_path, valid_path, test_path]);
            (splits, gt)
        }
    };
    let setup = SyntheticSetup {
        levels,
        seeds,
        encoder: EncoderConfig::default_for(arch),
        train: TrainConfig {
            max_epochs,
            ..TrainConfig::default()
        },
        injection: inj,
    };
    let curves = synthetic_experiment(&splits, &gt, &setup)?;
    let mut rows = Vec::new();
    println!("{:>6}{:>12}{:>12}{:>12}", "p_syn", "prediction", "synthetic", "gt");
    for l in &curves.levels {
        println!(
            "{:>6.2}{:>12.2}{:>12.2}{:>12.2}",
            l.p_syn,
            100.0 * l.prediction_rate,
            100.0 * l.synthetic_rate,
            100.0 * l.gt_rate
        );
        rows.push(json!({
            "kind": "level",
            "p_syn": l.p_syn,
            "prediction_rate": l.prediction_rate,
            "synthetic_rate": l.synthetic_rate,
            "gt_rate": l.gt_rate,
        }));
        for c in &l.seeds {
            let mut v = serde_json::to_value(c).map_err(|e| CliError::Other(e.to_string()))?;
            v["kind"] = json!("seed");
            v["p_syn"] = json!(l.p_syn);
            rows.push(v);
        }
        for (seed, why) in &l.failed_seeds {
            eprintln!("p_syn {}: seed {seed} failed: {why}", l.p_syn);
        }
    }
    if let Some(out) = out {
        write_jsonl_file(&out, &rows)?;
        let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        finish_manifest("synthetic", None, &s, &refs, &out)?;
    }
    Ok(())
}

fn cmd_patterns(a: PatternsArgs, mut s: Settings) -> Result<()> {
    let model_path = resolve_input(&s.require::<PathBuf>("model", a.model)?)?;
    let test_path = resolve_input(&s.require::<PathBuf>("test", a.test)?)?;
    let class: String = s.require("class", a.class)?;
    let value: String = s.require("value", a.value)?;
    let lengths = s.get("lengths", a.lengths, vec![1, 2, 3])?;
    let top = s.get("top", a.top, 5)?;
    let out = s.opt::<PathBuf>("out", a.out)?;
    let model = load_model_file(&model_path)?;
    let (splits, _) = dedupe_and_split(Vec::new(), Vec::new(), load_words(&test_path, &model.schema, 0)?)?;
    let table = pattern_frequency(&model, &splits.test, &class, &value, &lengths)?;
    println!(
        "{class}={value}: {} of {} words correctly predicted",
        table.correct_words, table.gold_words
    );
    let mut rows = Vec::new();
    for l in &table.lengths {
        let shown: Vec<String> = l
            .patterns
            .iter()
            .take(top)
            .map(|p| format!("{} ({:.0}%)", p.pattern, 100.0 * p.rate))
            .collect();
        println!("{}: {}", l.length, shown.join(", "));
        for (rank, p) in l.patterns.iter().enumerate() {
            rows.push(json!({
                "length": l.length,
                "rank": rank + 1,
                "pattern": p.pattern,
                "count": p.count,
                "rate": p.rate,
                "words": l.words,
            }));
        }
    }
    if let Some(out) = out {
        write_jsonl_file(&out, &rows)?;
        finish_manifest("patterns", None, &s, &[&model_path, &test_path], &out)?;
    }
    Ok(())
}

fn cmd_interaction(a: InteractionArgs, mut s: Settings) -> Result<()> {
    let model_path = resolve_input(&s.require::<PathBuf>("model", a.model)?)?;
    let test_path = resolve_input(&s.require::<PathBuf>("test", a.test)?)?;
    let class: String = s.get("class", a.class, "Gender".to_string())?;
    let value: String = s.get("value", a.value, "Fem".to_string())?;
    let suffix: String = s.get("suffix", a.suffix, "a".to_string())?;
    let out = s.opt::<PathBuf>("out", a.out)?;
    let words_out = s.opt::<PathBuf>("words_out", a.words_out)?;
    let model = load_model_file(&model_path)?;
    let (splits, _) = dedupe_and_split(Vec::new(), Vec::new(), load_words(&test_path, &model.schema, 0)?)?;
    let report = interaction_analysis(
        &model,
        &splits.test,
        |w| w.surface.ends_with(suffix.as_str()),
        &class,
        &value,
    )?;
    println!(
        "selected {} words ending in {suffix:?}; {} excluded, {} skipped",
        report.selected,
        report.excluded,
        report.skipped.len()
    );
    let mut rows = Vec::new();
    for g in &report.groups {
        println!("{:<10} n = {}", g.name, g.size);
        rows.push(json!({"kind": "group", "name": g.name, "size": g.size, "max_median": g.max_median, "min_median": g.min_median}));
    }
    for (label, cmp) in [("max", &report.max_scores), ("min", &report.min_scores)] {
        if let Some(kw) = &cmp.kruskal_wallis {
            println!(
                "{label}-score Kruskal-Wallis: H({}) = {:.3}, p = {:.3e}",
                kw.df, kw.h, kw.p
            );
            rows.push(json!({"kind": "kruskal_wallis", "scores": label, "h": kw.h, "df": kw.df, "p": kw.p}));
        }
        for p in &cmp.pairwise {
            println!(
                "  Dunn {} vs {}: z = {:.3}, Bonferroni p = {:.3}",
                p.a, p.b, p.z, p.p_adjusted
            );
            rows.push(json!({"kind": "pairwise", "test": "dunn_bonferroni", "scores": label, "a": p.a, "b": p.b, "z": p.z, "p": p.p, "p_adjusted": p.p_adjusted}));
        }
        for n in &cmp.notices {
            eprintln!("{label}-score: {n}");
        }
    }
    if let Some(p) = &words_out {
        write_jsonl_file(p, &report.words)?;
    }
    if let Some(out) = out {
        write_jsonl_file(&out, &rows)?;
        finish_manifest("interaction", None, &s, &[&model_path, &test_path], &out)?;
    }
    Ok(())
}

fn cmd_heatmap(a: HeatmapArgs, mut s: Settings) -> Result<()> {
    let models: Vec<PathBuf> = s.require("model", (!a.model.is_empty()).then_some(a.model))?;
    let word: String = s.require("word", a.word)?;
    let class: String = s.require("class", a.class)?;
    let value = s.opt::<String>("value", a.value)?;
    let gt = s.get("gt", a.gt, Vec::<usize>::new())?;
    let bigram = s.get("bigram", a.bigram.then_some(true), false)?;
    let out: PathBuf = s.require("out", a.out)?;
    let paths = models.iter().map(|p| resolve_input(p)).collect::<Result<Vec<_>>>()?;
    let loaded = paths.iter().map(|p| load_model_file(p)).collect::<Result<Vec<_>>>()?;
    let (_, _, value) = target_label(&loaded[0], &word, &class, value)?;
    let chars: Vec<String> = word.chars().map(String::from).collect();
    let len = chars.len();
    if let Some(&bad) = gt.iter().find(|&&g| g >= len) {
        return Err(CliError::Usage(format!("ground-truth position {bad} outside {word:?}")));
    }
    let title = Some(format!("{word}: {class}={value}"));
    let spec = if bigram {
        let model = &loaded[0];
        let (k, j) = resolve_label(model, &class, &value)?;
        let attributor = WordAttributor::new(model, &word)?;
        let heads = model.heads();
        let scorer = attributor.scorer(heads.heads[k], j)?;
        let mut pair = vec![vec![0.0; len]; len];
        for (i, row) in pair.iter_mut().enumerate() {
            for (jj, cell) in row.iter_mut().enumerate().skip(i + 1) {
                *cell = scorer.score_chars(&[i, jj])?;
            }
        }
        HeatmapSpec {
            title,
            ..bigram_spec(&chars, |i, jj| pair[i][jj], gt.clone())
        }
    } else {
        let mut cols = vec!["^".to_string()];
        cols.extend(chars.iter().cloned());
        cols.push("$".into());
        let mut scores = Vec::new();
        for model in &loaded {
            let (k, j) = resolve_label(model, &class, &value)?;
            let attributor = WordAttributor::new(model, &word)?;
            let heads = model.heads();
            let scorer = attributor.scorer(heads.heads[k], j)?;
            let ids = attributor.ids();
            scores.push(
                (0..len + 2)
                    .map(|p| Ok(scorer.score(&IndexSet::new([p], ids)?)?))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        HeatmapSpec {
            title,
            row_labels: paths
                .iter()
                .map(|p| {
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                })
                .collect(),
            col_labels: cols,
            scores,
            bold_cols: gt.iter().map(|g| g + 1).collect(),
        }
    };
    let text = emit_heatmap(&spec, &out)?;
    println!("wrote {} and {}", out.display(), text.display());
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    finish_manifest("heatmap", None, &s, &refs, &out)
}

fn cmd_toy(a: ToyArgs, mut s: Settings) -> Result<()> {
    let spec: String = s.get("ruleset", a.ruleset, "plural_suffix".to_string())?;
    let n = s.get("words", a.words, 2000)?;
    let seed = s.get("seed", a.seed, 1)?;
    let dir: PathBuf = s.require("out_dir", a.out_dir)?;
    let ruleset = load_ruleset(&spec)?;
    let corpus = generate_toy_corpus(&ruleset, n, &mut Rng::seeded(seed))?;
    let splits = corpus.split(0.1, 0.1);
    std::fs::create_dir_all(&dir)?;
    for (name, words) in [
        ("train", &splits.train),
        ("valid", &splits.valid),
        ("test", &splits.test),
    ] {
        write_conllu(File::create(dir.join(format!("{name}.conllu")))?, words)?;
    }
    write_segmentation(File::create(dir.join("segments.tsv"))?, &corpus.annotations)?;
    let mut f = File::create(dir.join("ruleset.toml"))?;
    f.write_all(ruleset.to_toml().as_bytes())?;
    println!(
        "{} words ({} train, {} valid, {} test), {} annotations in {}",
        corpus.samples.len(),
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        corpus.annotations.len(),
        dir.display()
    );
    RunManifest::new("toy", Some(seed), s.config()).write(&dir.join("manifest.json"))?;
    Ok(())
}
