use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use spt_core::baseline::rename_variant;
use spt_core::composer::{generate_all, ComposeError, GenerationConfig, Mode, Variant};
use spt_core::corpus::{jsonl_records, read_corpus, CorpusRecord, VariantRecord};
use spt_core::cpg::{build_cpg, graph_diff};
use spt_core::harness::{
    augmentation_records, compile_check, export_augmentation, run_attack, serve, AttackConfig, CompilerSpec,
    ConstantDetector, Detector, DifferentialRunner, Equivalence, ExternalDetector, HarnessError, PatternDetector,
};
use spt_core::metrics::{report, MetricsReport};
use spt_core::parser::parse_text;
use spt_core::transforms::TransformRule;

use crate::{
    data, AttackArgs, Cli, Command, DetectArgs, Failure, GraphdiffArgs, MetricsArgs, TransformArgs, ValidateArgs,
};

/// Records per parallel chunk when streaming a corpus.
const CHUNK: usize = 256;

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    if let Command::Detect(args) = &cli.command {
        return detect(args);
    }
    fs::create_dir_all(&cli.output).with_context(|| format!("cannot create {}", cli.output.display())).map_err(data)?;
    let resolved = match &cli.command {
        Command::Transform(a) => Some(a.generation.config()),
        Command::Attack(a) => Some(a.generation.config()),
        Command::Validate(a) if a.variants.is_none() => Some(a.generation.config()),
        _ => None,
    };
    write_json(
        &cli.output.join("run-manifest.json"),
        &json!({ "tool": "spt", "version": env!("CARGO_PKG_VERSION"), "config": cli, "generation": resolved }),
    )?;
    match &cli.command {
        Command::Transform(a) => transform(cli, a),
        Command::Attack(a) => attack(cli, a),
        Command::Metrics(a) => metrics(cli, a),
        Command::Graphdiff(a) => graphdiff(cli, a),
        Command::Validate(a) => validate(cli, a),
        Command::Detect(_) => unreachable!("handled above"),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).with_context(|| format!("cannot write {}", path.display())).map_err(data)
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(data)?;
    writeln!(out).and_then(|_| out.flush()).map_err(data)
}

fn write_line(out: &mut impl Write, value: &impl Serialize) -> Outcome {
    serde_json::to_writer(&mut *out, value).map_err(data)?;
    writeln!(out).map_err(data)
}

fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>, Failure> {
    read_corpus(path).map_err(data)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display())).map_err(data)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1)).map_err(data)?;
        out.push(rec);
    }
    Ok(out)
}

/// Streams corpus records in chunks: JSONL line by line, a directory all at
/// once.
fn for_each_chunk(path: &Path, mut f: impl FnMut(Vec<CorpusRecord>) -> Outcome) -> Outcome {
    if path.is_dir() {
        return f(load_corpus(path)?);
    }
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display())).map_err(data)?;
    let mut chunk = Vec::with_capacity(CHUNK);
    for rec in jsonl_records(BufReader::new(file)) {
        chunk.push(rec.map_err(data)?);
        if chunk.len() == CHUNK {
            f(std::mem::take(&mut chunk))?;
        }
    }
    if !chunk.is_empty() {
        f(chunk)?;
    }
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct TransformStats {
    samples: usize,
    parsed: usize,
    unparsable: usize,
    over_budget: usize,
    /// Parsed samples with at least one variant.
    applicable: usize,
    variants: usize,
    parse_rate: Option<f64>,
    applicability_rate: Option<f64>,
    /// Samples with at least one single-location variant of each rule.
    samples_per_rule: BTreeMap<TransformRule, usize>,
    variants_per_mode: BTreeMap<Mode, usize>,
}

fn generate(rec: &CorpusRecord, config: &GenerationConfig) -> Result<Vec<Variant>, ComposeError> {
    generate_all(&rec.to_unit(), config)
}

fn transform(cli: &Cli, args: &TransformArgs) -> Outcome {
    let config = args.generation.config();
    let started = Instant::now();
    let mut stats = TransformStats::default();
    let mut out = create(&cli.output.join("variants.jsonl"))?;
    let mut next = args.idx_base;
    for_each_chunk(&args.input, |chunk| {
        let results: Vec<_> = chunk.par_iter().map(|r| generate(r, &config)).collect();
        for (rec, result) in chunk.iter().zip(results) {
            stats.samples += 1;
            let variants = match result {
                Ok(v) => v,
                Err(ComposeError::Parse(e)) => {
                    log::warn!("sample {} skipped: {e}", rec.idx);
                    stats.unparsable += 1;
                    continue;
                }
                Err(e) => {
                    log::warn!("sample {} skipped: {e}", rec.idx);
                    stats.parsed += 1;
                    stats.over_budget += 1;
                    continue;
                }
            };
            stats.parsed += 1;
            stats.applicable += usize::from(!variants.is_empty());
            let mut rules_here = std::collections::BTreeSet::new();
            for v in &variants {
                if v.mode == Mode::Single {
                    rules_here.extend(v.sole_rule());
                }
                *stats.variants_per_mode.entry(v.mode).or_default() += 1;
                write_line(&mut out, &VariantRecord::new(next, v))?;
                next += 1;
                stats.variants += 1;
            }
            for r in rules_here {
                *stats.samples_per_rule.entry(r).or_default() += 1;
            }
        }
        Ok(())
    })?;
    out.flush().map_err(data)?;
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    stats.parse_rate = ratio(stats.parsed, stats.samples);
    stats.applicability_rate = ratio(stats.applicable, stats.parsed);
    write_json(&cli.output.join("stats.json"), &stats)?;
    let secs = started.elapsed().as_secs_f64();
    let rate = stats.variants as f64 / secs.max(1e-9);
    write_json(&cli.output.join("timing.json"), &json!({ "seconds": secs, "variants_per_second": rate }))?;
    eprintln!(
        "{} variants from {} samples ({} unparsable) in {secs:.2}s, {rate:.0} variants/s",
        stats.variants, stats.samples, stats.unparsable
    );
    if args.strict && stats.variants == 0 {
        return Err(data(anyhow!("no variants produced")));
    }
    Ok(())
}

fn detector(args: &crate::DetectorArgs) -> Result<Box<dyn Detector>, Failure> {
    if let Some(p) = &args.pattern_detector {
        return Ok(Box::new(PatternDetector::new(p).map_err(|e| Failure::Usage(e.to_string()))?));
    }
    let Some(cmd) = &args.detector else {
        return Err(Failure::Usage("a detector is required: --detector, SPT_DETECTOR or --pattern-detector".into()));
    };
    Ok(Box::new(ExternalDetector {
        command: cmd.clone(),
        timeout: Duration::from_secs(args.timeout),
        per_sample: args.per_sample,
    }))
}

fn attack(cli: &Cli, args: &AttackArgs) -> Outcome {
    let det = detector(&args.detector)?;
    let corpus = load_corpus(&args.input)?;
    let config = AttackConfig {
        generation: args.generation.config(),
        compile_gate: args.validate_compile.then(|| CompilerSpec::parse(&args.compiler)),
        idx_base: args.idx_base,
    };
    let run = run_attack(det.as_ref(), &corpus, &config)?;
    let mut summary = run.report.to_json();
    summary["corpus_samples"] = json!(run.samples);
    summary["unparsable"] = json!(run.unparsable);
    summary["over_budget"] = json!(run.over_budget);
    summary["compile_rejected"] = json!(run.compile_rejected);
    write_json(&cli.output.join("report.json"), &summary)?;
    let table = run.report.to_table();
    fs::write(cli.output.join("report.txt"), &table).map_err(data)?;
    let mut log = create(&cli.output.join("verdicts.jsonl"))?;
    for e in &run.verdict_log {
        write_line(&mut log, e)?;
    }
    log.flush().map_err(data)?;
    let mut vs = create(&cli.output.join("variants.jsonl"))?;
    for v in &run.variants {
        write_line(&mut vs, v)?;
    }
    vs.flush().map_err(data)?;
    if let Some(ratio) = args.augment_ratio {
        let recs = augmentation_records(&run.variants, &corpus, ratio, cli.seed);
        export_augmentation(&recs, create(&cli.output.join("augmentation.jsonl"))?)?;
    }
    print!("{table}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricsRow {
    idx: i64,
    parent_idx: i64,
    rules: String,
    mode: String,
    report: MetricsReport,
}

/// Flat CSV form of a [`MetricsRow`].
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    idx: i64,
    parent_idx: i64,
    rules: &'a str,
    mode: &'a str,
    loc: usize,
    halstead_volume: f64,
    cyclomatic: usize,
    avg_cpg_degree: f64,
    edit_distance: usize,
    delta_loc: Option<f64>,
    delta_halstead_volume: Option<f64>,
    delta_cyclomatic: Option<f64>,
    delta_avg_cpg_degree: Option<f64>,
}

impl<'a> From<&'a MetricsRow> for CsvRow<'a> {
    fn from(r: &'a MetricsRow) -> Self {
        let m = &r.report;
        CsvRow {
            idx: r.idx,
            parent_idx: r.parent_idx,
            rules: &r.rules,
            mode: &r.mode,
            loc: m.loc,
            halstead_volume: m.halstead_volume,
            cyclomatic: m.cyclomatic,
            avg_cpg_degree: m.avg_cpg_degree,
            edit_distance: m.edit_distance,
            delta_loc: m.delta_loc,
            delta_halstead_volume: m.delta_halstead_volume,
            delta_cyclomatic: m.delta_cyclomatic,
            delta_avg_cpg_degree: m.delta_avg_cpg_degree,
        }
    }
}

fn metrics(cli: &Cli, args: &MetricsArgs) -> Outcome {
    let corpus = load_corpus(&args.input)?;
    let pairs: Vec<(i64, i64, String, String, String)> = match &args.variants {
        Some(path) => {
            let parents: HashMap<i64, &str> = corpus.iter().map(|r| (r.idx, r.func.as_str())).collect();
            let mut pairs = Vec::new();
            for v in read_jsonl::<VariantRecord>(path)? {
                let Some(parent) = parents.get(&v.parent_idx) else {
                    return Err(data(anyhow!("variant {} names unknown parent {}", v.idx, v.parent_idx)));
                };
                let rules: Vec<&str> = v.rules.iter().map(|r| r.as_str()).collect();
                pairs.push((v.idx, v.parent_idx, rules.join("+"), v.mode.as_str().into(), parent.to_string() + "\0" + &v.func));
            }
            pairs
        }
        None => corpus
            .iter()
            .filter_map(|r| {
                let renamed = rename_variant(&parse_text(&r.func).ok()?)?;
                Some((r.idx, r.idx, "rename".into(), "baseline".into(), r.func.clone() + "\0" + &renamed))
            })
            .collect(),
    };
    let rows: Vec<Option<MetricsRow>> = pairs
        .par_iter()
        .map(|(idx, parent_idx, rules, mode, both)| {
            let (before, after) = both.split_once('\0').expect("joined above");
            match report(before, after) {
                Ok(report) => Some(MetricsRow { idx: *idx, parent_idx: *parent_idx, rules: rules.clone(), mode: mode.clone(), report }),
                Err(e) => {
                    log::warn!("variant {idx} not measured: {e}");
                    None
                }
            }
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let rows: Vec<MetricsRow> = rows.into_iter().flatten().collect();
    let mut csv = csv::Writer::from_writer(create(&cli.output.join("metrics.csv"))?);
    for r in &rows {
        csv.serialize(CsvRow::from(r)).map_err(data)?;
    }
    csv.flush().map_err(data)?;
    let mean = |f: fn(&MetricsReport) -> Option<f64>| {
        let xs: Vec<f64> = rows.iter().filter_map(|r| f(&r.report)).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    let summary = json!({
        "variants": rows.len(),
        "skipped": skipped,
        "mean_delta_percent": {
            "loc": mean(|r| r.delta_loc),
            "halstead_volume": mean(|r| r.delta_halstead_volume),
            "cyclomatic": mean(|r| r.delta_cyclomatic),
            "avg_cpg_degree": mean(|r| r.delta_avg_cpg_degree),
        },
        "mean_edit_distance": (!rows.is_empty())
            .then(|| rows.iter().map(|r| r.report.edit_distance as f64).sum::<f64>() / rows.len() as f64),
    });
    write_json(&cli.output.join("metrics-summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(data)?);
    Ok(())
}

fn graphdiff(cli: &Cli, args: &GraphdiffArgs) -> Outcome {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())).map_err(data);
    let (before, after) = (read(&args.before)?, read(&args.after)?);
    let graph = |text: &str, name: &Path| -> Result<_, Failure> {
        let ast = parse_text(text).with_context(|| name.display().to_string()).map_err(data)?;
        build_cpg(&ast).with_context(|| name.display().to_string()).map_err(data)
    };
    let (gb, ga) = (graph(&before, &args.before)?, graph(&after, &args.after)?);
    let delta = graph_diff(&gb, &ga);
    write_json(&cli.output.join("graphdiff.json"), &delta)?;
    if args.dot {
        fs::write(cli.output.join("before.dot"), gb.to_dot()).map_err(data)?;
        fs::write(cli.output.join("after.dot"), ga.to_dot()).map_err(data)?;
    }
    println!("{}", serde_json::to_string_pretty(&delta).map_err(data)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct Validation {
    idx: i64,
    parent_idx: i64,
    compiles: bool,
    /// `equivalent`, `divergent` or `skipped`.
    differential: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn validate(cli: &Cli, args: &ValidateArgs) -> Outcome {
    let corpus = load_corpus(&args.input)?;
    let variants: Vec<VariantRecord> = match &args.variants {
        Some(path) => read_jsonl(path)?,
        None => {
            let config = args.generation.config();
            let generated: Vec<_> = corpus.par_iter().map(|r| generate(r, &config)).collect();
            let mut next = corpus.iter().map(|r| r.idx).max().map_or(0, |m| m + 1).max(1_000_000);
            let mut out = Vec::new();
            for (rec, g) in corpus.iter().zip(generated) {
                match g {
                    Ok(vs) => {
                        for v in &vs {
                            out.push(VariantRecord::new(next, v));
                            next += 1;
                        }
                    }
                    Err(e) => log::warn!("sample {} skipped: {e}", rec.idx),
                }
            }
            out
        }
    };
    let cc = CompilerSpec::parse(&args.compiler);
    let parents: HashMap<i64, &CorpusRecord> = corpus.iter().map(|r| (r.idx, r)).collect();
    let mut by_parent: BTreeMap<i64, Vec<&VariantRecord>> = BTreeMap::new();
    for v in &variants {
        by_parent.entry(v.parent_idx).or_default().push(v);
    }
    let results: Vec<Result<Vec<Validation>, HarnessError>> = by_parent
        .par_iter()
        .map(|(parent_idx, vs)| {
            let parent = parents.get(parent_idx);
            let runner = match parent {
                Some(p) if args.inputs > 0 => match DifferentialRunner::new(cc.clone(), &p.func, args.inputs, cli.seed) {
                    Ok(r) => Ok(r),
                    Err(e @ (HarnessError::CompilerSpawnFailure(_) | HarnessError::ExecutionTimeout(_))) => return Err(e),
                    Err(e) => Err(e.to_string()),
                },
                Some(_) => Err("differential testing disabled".to_string()),
                None => Err(format!("unknown parent {parent_idx}")),
            };
            vs.par_iter()
                .map(|v| {
                    let compiles = compile_check(&cc, &v.func)?;
                    let mut out =
                        Validation { idx: v.idx, parent_idx: *parent_idx, compiles, differential: "skipped", witness: None, note: None };
                    match &runner {
                        Err(note) => out.note = Some(note.clone()),
                        Ok(r) => match r.check(&v.func) {
                            Ok(Equivalence::Equivalent) => out.differential = "equivalent",
                            Ok(Equivalence::Divergent { input, .. }) => {
                                out.differential = "divergent";
                                out.witness = Some(input);
                            }
                            Err(e @ (HarnessError::CompilerSpawnFailure(_) | HarnessError::ExecutionTimeout(_))) => {
                                return Err(e)
                            }
                            Err(e) => out.note = Some(e.to_string()),
                        },
                    }
                    Ok(out)
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| r.idx);
    let mut out = create(&cli.output.join("validation.jsonl"))?;
    for r in &rows {
        write_line(&mut out, r)?;
    }
    out.flush().map_err(data)?;
    let count = |d: &str| rows.iter().filter(|r| r.differential == d).count();
    let compiled = rows.iter().filter(|r| r.compiles).count();
    let (equivalent, divergent) = (count("equivalent"), count("divergent"));
    let rate = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let summary = json!({
        "variants": rows.len(),
        "compiled": compiled,
        "compile_rate": rate(compiled, rows.len()),
        "differential_checked": equivalent + divergent,
        "equivalent": equivalent,
        "divergent": divergent,
        "equivalence_rate": rate(equivalent, equivalent + divergent),
        "skipped": count("skipped"),
        "inputs_per_test": args.inputs,
    });
    write_json(&cli.output.join("validation.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(data)?);
    if args.strict && (compiled < rows.len() || divergent > 0) {
        return Err(data(anyhow!("{} variants fail to compile, {divergent} diverge", rows.len() - compiled)));
    }
    Ok(())
}

fn detect(args: &DetectArgs) -> Outcome {
    let det: Box<dyn Detector> = match (&args.pattern, args.constant) {
        (Some(p), _) => Box::new(PatternDetector::new(p).map_err(|e| Failure::Usage(e.to_string()))?),
        (None, Some(c)) => Box::new(ConstantDetector(c == 1)),
        (None, None) => return Err(Failure::Usage("--pattern or --constant is required".into())),
    };
    serve(det.as_ref(), io::stdin().lock(), io::stdout().lock()).map_err(Failure::from)
}
