//! The `pairjoint` command-line driver.
//!
//! Each command reads a manifest (`gen-synthetic` writes one) and writes
//! plain files into `--out`, plus a `config.txt` snapshot of its flags.
//! Records are processed on a worker pool and merged back in record order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compat::{check_compatibility, gen_synthetic_with, CompatReport};
use crate::constructions::{derive_joint, AgConfig};
use crate::error::{Error, Result};
use crate::io::report::{
    render_reports, write_distance_table, write_metrics_long, write_summary_table, SummaryRow,
};
use crate::io::{
    joint_file_name, read_joint_file, write_joint_file, write_records, EncodeOptions, JointEntry,
    JointFile, Manifest, Validation,
};
use crate::metrics::{aggregate, distance_analysis, score_example, DistanceKind, ExampleScores};
use crate::numeric::SquareTable;
use crate::types::{
    ConditionalTable, JointTable, MarginalVector, Method, PairRecord, Position, Scheme, MASK_TOKEN,
};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pairjoint", version, about = "Pairwise joints from masked-LM conditionals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build joint tables for every record and method.
    Derive(DeriveArgs),
    /// Score joints against their records and write perplexity/faithfulness reports.
    Evaluate(EvaluateArgs),
    /// Measure how far each record's conditionals are from admitting a joint.
    CheckCompat(CheckCompatArgs),
    /// Write a synthetic dataset with known ground-truth joints.
    GenSynthetic(GenSyntheticArgs),
    /// Pairwise NLL bucketed by distance between the masked slots.
    AnalyzeDistance(AnalyzeDistanceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Renormalize rows that fail validation instead of rejecting the file.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Comma-separated subset of mlm, mrf, mrf_logit, hcb, ag.
    #[arg(long, value_delimiter = ',', default_value = "mlm,mrf,mrf_logit,hcb,ag")]
    pub methods: Vec<String>,
    /// Maximum Arnold–Gokhale iterations.
    #[arg(long, default_value_t = 50)]
    pub ag_iters: usize,
    /// Arnold–Gokhale convergence tolerance (max-abs change of any joint entry).
    #[arg(long, default_value_t = 1e-10)]
    pub ag_tol: f64,
}

impl MethodArgs {
    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for m in &self.methods {
            let m: Method = m.trim().parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        Ok(out)
    }

    pub fn ag_config(&self) -> Result<AgConfig> {
        let c = AgConfig {
            max_iterations: self.ag_iters,
            convergence_tol: self.ag_tol,
            track_objective: false,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DeriveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub methods: MethodArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub methods: MethodArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory of joint files from `derive`; joints are derived in memory when absent.
    #[arg(long)]
    pub joints: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckCompatArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Largest double-centered log-ratio residual still counted as compatible.
    #[arg(long, default_value_t = 1e-6)]
    pub compat_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GenSyntheticArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Vocabulary size V of every instance
    #[arg(long)]
    pub vocab_size: usize,
    /// Number of records to generate
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Symmetric Dirichlet concentration over the V² cells of the joint.
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Half-width of the uniform log-noise applied to the conditionals.
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    /// Store only the K most probable entries of each conditional row.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Largest token distance between the two masked slots.
    #[arg(long, default_value_t = 3)]
    pub max_distance: usize,
    /// Also store a syntactic distance (set equal to the token distance).
    #[arg(long)]
    pub with_syntactic: bool,
    /// Dataset name written to the manifest
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Token,
    Syntactic,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeDistanceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub methods: MethodArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Which distance to bucket by
    #[arg(long, value_enum, default_value_t = KindArg::Token)]
    pub kind: KindArg,
    /// Merge trailing buckets until each holds at least this many examples (0 keeps all).
    #[arg(long, default_value_t = 0)]
    pub merge_tail: usize,
    /// Directory of joint files from `derive`.
    #[arg(long)]
    pub joints: Option<PathBuf>,
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Derive(a) => cmd_derive(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::CheckCompat(a) => cmd_check_compat(&a).map(|_| ()),
        Command::GenSynthetic(a) => cmd_gen_synthetic(&a),
        Command::AnalyzeDistance(a) => cmd_analyze_distance(&a),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn prepare_out(run: &RunArgs, snapshot: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(&run.out).map_err(|e| Error::io(run.out.display().to_string(), e))?;
    let mut s = String::new();
    for (k, v) in snapshot {
        let _ = writeln!(s, "{k} = {v}");
    }
    let path = run.out.join("config.txt");
    fs::write(&path, s).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load(input: &InputArgs) -> Result<(Manifest, Vec<PairRecord>)> {
    let manifest = Manifest::load(&input.manifest)?;
    let validation = if input.lenient {
        Validation::Lenient
    } else {
        Validation::Strict
    };
    let (records, report) = manifest.load_records(validation)?;
    if report.floored_entries > 0 {
        log::info!(
            "{} table entries raised to the probability floor",
            report.floored_entries
        );
    }
    Ok((manifest, records))
}

fn method_snapshot(m: &MethodArgs) -> Vec<(&'static str, String)> {
    vec![
        ("methods", m.methods.join(",")),
        ("ag_iters", m.ag_iters.to_string()),
        ("ag_tol", m.ag_tol.to_string()),
    ]
}

/// Joints for every record, in record order.
pub fn derive_all(
    records: &[PairRecord],
    method: Method,
    ag: &AgConfig,
    jobs: usize,
) -> Result<Vec<JointTable>> {
    pool(jobs)?.install(|| {
        records
            .par_iter()
            .map(|r| derive_joint(r, method, ag))
            .collect()
    })
}

pub fn cmd_derive(args: &DeriveArgs) -> Result<()> {
    let methods = args.methods.methods()?;
    let ag = args.methods.ag_config()?;
    let (_, records) = load(&args.input)?;
    let vocab_size = common_vocab(&records)?;
    let mut snapshot = vec![
        ("command", "derive".to_string()),
        ("manifest", args.input.manifest.display().to_string()),
    ];
    snapshot.extend(method_snapshot(&args.methods));
    prepare_out(&args.run, &snapshot)?;
    for method in methods {
        let joints = derive_all(&records, method, &ag, args.run.jobs)?;
        let file = JointFile {
            method,
            vocab_size,
            entries: records
                .iter()
                .zip(joints)
                .map(|(r, joint)| JointEntry {
                    example_id: r.example_id.clone(),
                    joint,
                })
                .collect(),
        };
        write_joint_file(&args.run.out.join(joint_file_name(method)), &file)?;
    }
    Ok(())
}

fn common_vocab(records: &[PairRecord]) -> Result<usize> {
    let v = records.first().map_or(2, |r| r.vocab_size());
    if let Some(r) = records.iter().find(|r| r.vocab_size() != v) {
        return Err(Error::InvalidRecord {
            example_id: r.example_id.clone(),
            reason: format!("vocabulary size {} differs from {v}", r.vocab_size()),
        });
    }
    Ok(v)
}

fn joints_for(
    records: &[PairRecord],
    method: Method,
    ag: &AgConfig,
    joints_dir: Option<&Path>,
    jobs: usize,
) -> Result<Vec<JointTable>> {
    let Some(dir) = joints_dir else {
        return derive_all(records, method, ag, jobs);
    };
    let path = dir.join(joint_file_name(method));
    if !path.exists() {
        return Err(Error::MissingJoints { method, path });
    }
    let file = read_joint_file(&path)?;
    let mut by_id: HashMap<String, JointTable> = file
        .entries
        .into_iter()
        .map(|e| (e.example_id, e.joint))
        .collect();
    records
        .iter()
        .map(|r| {
            by_id.remove(&r.example_id).ok_or_else(|| Error::MissingJoints {
                method,
                path: path.clone(),
            })
        })
        .collect()
}

/// Per-record scores for one method; MLM scores its unaries with the
/// record's own conditionals.
pub fn score_all(
    records: &[PairRecord],
    joints: &[JointTable],
    jobs: usize,
) -> Result<Vec<ExampleScores>> {
    pool(jobs)?.install(|| {
        records
            .par_iter()
            .zip(joints.par_iter())
            .map(|(r, j)| score_example(r, j, j.method() == Method::Mlm))
            .collect()
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let methods = args.methods.methods()?;
    let ag = args.methods.ag_config()?;
    let (_, records) = load(&args.input)?;
    if records.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut snapshot = vec![
        ("command", "evaluate".to_string()),
        ("manifest", args.input.manifest.display().to_string()),
        (
            "joints",
            args.joints
                .as_ref()
                .map_or("derived".into(), |p| p.display().to_string()),
        ),
    ];
    snapshot.extend(method_snapshot(&args.methods));
    prepare_out(&args.run, &snapshot)?;

    let mut all = Vec::new();
    for &method in &methods {
        let joints = joints_for(&records, method, &ag, args.joints.as_deref(), args.run.jobs)?;
        let scores = score_all(&records, &joints, args.run.jobs)?;
        let mut by_scheme: BTreeMap<Scheme, Vec<ExampleScores>> = BTreeMap::new();
        for (r, s) in records.iter().zip(scores) {
            by_scheme.entry(r.scheme).or_default().push(s);
        }
        let mut reports = Vec::new();
        for (scheme, scores) in by_scheme {
            reports.push((scheme, aggregate(&scores)?));
        }
        let path = args.run.out.join(format!("report_{}.txt", method.as_str()));
        fs::write(&path, render_reports(&reports))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        all.extend(reports);
    }
    all.sort_by_key(|(scheme, r)| (*scheme, methods.iter().position(|m| *m == r.method)));
    let path = args.run.out.join("report.txt");
    fs::write(&path, render_reports(&all)).map_err(|e| Error::io(path.display().to_string(), e))?;
    let rows: Vec<SummaryRow> = all
        .iter()
        .map(|(s, r)| SummaryRow::from_report(*s, r))
        .collect();
    write_summary_table(&args.run.out.join("summary.csv"), &rows)?;
    write_metrics_long(&args.run.out.join("metrics.csv"), &rows)?;
    Ok(())
}

/// Per-record compatibility results plus a decade histogram of residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatSummary {
    pub reports: Vec<(String, CompatReport)>,
    /// `floor(log10(residual_max))` → count; exact zeros land in `i32::MIN`.
    pub histogram: BTreeMap<i32, usize>,
    pub n_compatible: usize,
}

pub fn compat_summary(
    records: &[PairRecord],
    tolerance: f64,
    jobs: usize,
) -> Result<CompatSummary> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to check".into()));
    }
    let reports: Vec<CompatReport> = pool(jobs)?.install(|| {
        records
            .par_iter()
            .map(|r| check_compatibility(&r.cond_a_given_b, &r.cond_b_given_a, tolerance))
            .collect::<Result<_>>()
    })?;
    let mut histogram = BTreeMap::new();
    for r in &reports {
        let bin = if r.residual_max > 0.0 {
            r.residual_max.log10().floor() as i32
        } else {
            i32::MIN
        };
        *histogram.entry(bin).or_insert(0) += 1;
    }
    Ok(CompatSummary {
        n_compatible: reports.iter().filter(|r| r.compatible).count(),
        reports: records
            .iter()
            .map(|r| r.example_id.clone())
            .zip(reports)
            .collect(),
        histogram,
    })
}

pub fn cmd_check_compat(args: &CheckCompatArgs) -> Result<CompatSummary> {
    if !(args.compat_tol >= 0.0) {
        return Err(Error::InvalidTolerance(args.compat_tol));
    }
    let (_, records) = load(&args.input)?;
    prepare_out(
        &args.run,
        &[
            ("command", "check-compat".into()),
            ("manifest", args.input.manifest.display().to_string()),
            ("compat_tol", args.compat_tol.to_string()),
        ],
    )?;
    let summary = compat_summary(&records, args.compat_tol, args.run.jobs)?;

    let path = args.run.out.join("compat.csv");
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["example_id", "residual_max", "residual_frobenius", "compatible"])
        .map_err(csv_err)?;
    for (id, r) in &summary.reports {
        w.write_record([
            id.clone(),
            r.residual_max.to_string(),
            r.residual_frobenius.to_string(),
            r.compatible.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;

    let mut s = String::new();
    let n = summary.reports.len();
    let _ = writeln!(s, "records = {n}");
    let _ = writeln!(s, "tolerance = {}", args.compat_tol);
    let _ = writeln!(s, "compatible = {}", summary.n_compatible);
    let _ = writeln!(s, "incompatible = {}", n - summary.n_compatible);
    for (bin, count) in &summary.histogram {
        if *bin == i32::MIN {
            let _ = writeln!(s, "residual.zero = {count}");
        } else {
            let _ = writeln!(s, "residual.1e{bin} = {count}");
        }
    }
    let path = args.run.out.join("compat_summary.txt");
    fs::write(&path, s).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(summary)
}

/// One synthetic record. Everything about record `index` derives from the
/// stream seeded with `seed + index`: the instance, then the gold pair, the
/// slot distance and the per-row logit offsets.
pub fn synthetic_record(args: &GenSyntheticArgs, index: usize) -> Result<PairRecord> {
    let seed = args.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = gen_synthetic_with(&mut rng, args.vocab_size, seed, args.concentration, args.perturb)?;
    let v = args.vocab_size;

    let u: f64 = rng.random();
    let probs = inst.true_joint.probs();
    let mut acc = 0.0;
    let mut cell = v * v - 1;
    for (k, p) in probs.as_slice().iter().enumerate() {
        acc += p;
        if u < acc {
            cell = k;
            break;
        }
    }
    let (gold_a, gold_b) = (cell / v, cell % v);
    let distance = rng.random_range(1..=args.max_distance);

    let mut with_logits = |t: ConditionalTable| -> Result<ConditionalTable> {
        let offsets: Vec<f64> = (0..v).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let logits = SquareTable::from_fn(v, |ctx, tgt| t.log_prob(tgt, ctx) + offsets[ctx]);
        t.with_logits(logits)
    };
    let cond_a_given_b = with_logits(inst.cond_a_given_b)?;
    let cond_b_given_a = with_logits(inst.cond_b_given_a)?;

    let pos_a = 1;
    let pos_b = pos_a + distance;
    let mut sentence = vec![0u32; pos_b + 2];
    sentence[pos_a] = MASK_TOKEN;
    sentence[pos_b] = MASK_TOKEN;
    Ok(PairRecord {
        example_id: format!("syn-{index:06}"),
        sentence,
        pos_a,
        pos_b,
        gold_a,
        gold_b,
        scheme: Scheme::Synthetic,
        cond_a_given_b,
        cond_b_given_a,
        marg_a: MarginalVector::new(Position::A, inst.true_joint.log_marginal(Position::A))?,
        marg_b: MarginalVector::new(Position::B, inst.true_joint.log_marginal(Position::B))?,
        syntactic_distance: args.with_syntactic.then_some(distance as u32),
    })
}

pub fn cmd_gen_synthetic(args: &GenSyntheticArgs) -> Result<()> {
    if args.vocab_size < 2 {
        return Err(Error::VocabTooSmall(args.vocab_size));
    }
    if args.count == 0 {
        return Err(Error::InvalidConfig("count must be at least 1".into()));
    }
    if args.max_distance == 0 {
        return Err(Error::InvalidConfig("max-distance must be at least 1".into()));
    }
    prepare_out(
        &args.run,
        &[
            ("command", "gen-synthetic".into()),
            ("vocab_size", args.vocab_size.to_string()),
            ("count", args.count.to_string()),
            ("seed", args.seed.to_string()),
            ("concentration", args.concentration.to_string()),
            ("perturb", args.perturb.to_string()),
            (
                "top_k",
                args.top_k.map_or("none".into(), |k| k.to_string()),
            ),
            ("max_distance", args.max_distance.to_string()),
        ],
    )?;
    let records: Vec<PairRecord> = pool(args.run.jobs)?.install(|| {
        (0..args.count)
            .into_par_iter()
            .map(|i| synthetic_record(args, i))
            .collect::<Result<_>>()
    })?;
    let file_name = "records.pjr";
    write_records(
        &args.run.out.join(file_name),
        &records,
        &EncodeOptions {
            model_label: "synthetic".into(),
            top_k: args.top_k,
        },
    )?;
    let mut params = BTreeMap::new();
    params.insert("vocab_size".into(), args.vocab_size.to_string());
    params.insert("count".into(), args.count.to_string());
    params.insert("seed".into(), args.seed.to_string());
    params.insert("concentration".into(), args.concentration.to_string());
    params.insert("perturb".into(), args.perturb.to_string());
    if let Some(k) = args.top_k {
        params.insert("top_k".into(), k.to_string());
    }
    let manifest = Manifest {
        name: args.name.clone(),
        corpus: "synthetic".into(),
        scheme: Scheme::Synthetic,
        model: "synthetic".into(),
        record_files: vec![PathBuf::from(file_name)],
        params,
        base_dir: args.run.out.clone(),
    };
    manifest.save(&args.run.out.join("manifest.txt"))
}

pub fn cmd_analyze_distance(args: &AnalyzeDistanceArgs) -> Result<()> {
    let methods = args.methods.methods()?;
    let ag = args.methods.ag_config()?;
    let kind = match args.kind {
        KindArg::Token => DistanceKind::Token,
        KindArg::Syntactic => DistanceKind::Syntactic,
    };
    let (_, records) = load(&args.input)?;
    if kind == DistanceKind::Syntactic {
        if let Some(r) = records.iter().find(|r| r.syntactic_distance.is_none()) {
            return Err(Error::MissingSyntacticDistance(r.example_id.clone()));
        }
    }
    let mut snapshot = vec![
        ("command", "analyze-distance".to_string()),
        ("manifest", args.input.manifest.display().to_string()),
        ("kind", kind.as_str().to_string()),
        ("merge_tail", args.merge_tail.to_string()),
    ];
    snapshot.extend(method_snapshot(&args.methods));
    prepare_out(&args.run, &snapshot)?;
    let mut scores = Vec::new();
    for method in methods {
        let joints = joints_for(&records, method, &ag, args.joints.as_deref(), args.run.jobs)?;
        scores.extend(score_all(&records, &joints, args.run.jobs)?);
    }
    let mut table = distance_analysis(&scores, kind)?;
    if args.merge_tail > 0 {
        table = table.merge_tail(args.merge_tail);
    }
    write_distance_table(
        &args.run.out.join(format!("distance_{}.csv", kind.as_str())),
        &table,
    )
}
