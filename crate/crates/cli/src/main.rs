//! `specmine`: file-mediated stages of the mining pipeline.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use specmine::baselines::{ktail, Fsm};
use specmine::efsm::Efsm;
use specmine::invariants::{
    build_predicate_pool, conditions_from_json, conditions_to_json, infer_conditions, Conditions, InferOptions,
};
use specmine::metrics::{accuracy, score, score_exhaustive, GenPolicy};
use specmine::miner::{mine, MinerConfig, StateView};
use specmine::simgen::{
    builtin_fixtures, exhaustive_trace, random_reference, simulate, GenProtocol, RandomShape, ReferenceContract,
};
use specmine::slicer::{slice, Slice, SliceConfig};
use specmine::trace::{parse_history, write_history, ContractSchema, Trace};

mod manifest;
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "specmine", version, about = "Mine state machine specifications from contract histories")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a reference contract and write its history.
    Gen(GenArgs),
    /// Cut a history into sessions.
    Slice(SliceArgs),
    /// Infer per-function pre- and post-conditions.
    Infer(InferArgs),
    /// Mine a state machine.
    Mine(MineArgs),
    /// Learn an event automaton with k-tail.
    Ktail(KtailArgs),
    /// Compare a model against ground truth.
    Eval(EvalArgs),
    /// Render a model as DOT or JSON.
    Export(ExportArgs),
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long = "slice-config")]
    slice_config: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// A built-in fixture, or `random-<seed>` for a random contract.
    #[arg(long, required_unless_present = "list")]
    fixture: Option<String>,
    #[arg(long, default_value_t = 100)]
    instances: u64,
    #[arg(long, default_value_t = 100)]
    txs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cover every reachable transition once instead of simulating.
    #[arg(long)]
    exhaustive: bool,
    #[arg(short = 'o', long = "out", required_unless_present = "list")]
    out: Option<PathBuf>,
    #[arg(long = "schema-out")]
    schema_out: Option<PathBuf>,
    #[arg(long = "slice-config-out")]
    slice_config_out: Option<PathBuf>,
    #[arg(long = "truth-out")]
    truth_out: Option<PathBuf>,
    /// Print the built-in fixtures and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InferOpts {
    #[arg(long = "min-support", default_value_t = 1)]
    min_support: usize,
    /// Further parameters to leave out of the templates. Slicing
    /// parameters are always left out.
    #[arg(long)]
    exclude: Vec<String>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    opts: InferOpts,
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Conditions from `infer`; inferred on the fly when absent.
    #[arg(long)]
    conds: Option<PathBuf>,
    #[command(flatten)]
    opts: InferOpts,
    #[arg(long, default_value = "predicates")]
    view: StateView,
    #[arg(long = "allow-loops", overrides_with = "no_loops")]
    allow_loops: bool,
    #[arg(long = "no-loops")]
    no_loops: bool,
    #[arg(long = "max-rmpath")]
    max_rmpath: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct KtailArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(short = 'k', default_value_t = 2)]
    k: usize,
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, alias = "model")]
    mined: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Held-out history for accuracy; needs --schema and --slice-config.
    #[arg(long = "test-trace", requires_all = ["schema", "slice_config"])]
    test_trace: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long = "slice-config")]
    slice_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-sentences", default_value_t = 10_000)]
    max_sentences: u64,
    #[arg(long = "min-coverage", default_value_t = 20)]
    min_coverage: u64,
    #[arg(long = "max-len-factor", default_value_t = 2)]
    max_len_factor: u64,
    /// Per-step stop probability of the walks [default: 1/(mean out-degree + 1)].
    #[arg(long = "stop-prob")]
    stop_prob: Option<f64>,
    /// Count each distinct sentence once.
    #[arg(long)]
    dedup: bool,
    /// Exact expectation of the sampled scores.
    #[arg(long)]
    exhaustive: bool,
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    format: Format,
    /// Declared domains make state labels shorter in DOT output.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json(path: &Path) -> Result<Json> {
    serde_json::from_str(&read(path)?).with_context(|| format!("{}: not valid JSON", path.display()))
}

fn load_schema(path: &Path) -> Result<ContractSchema> {
    ContractSchema::from_json_str(&read(path)?).with_context(|| format!("schema {}", path.display()))
}

fn load_slice_config(path: &Path) -> Result<SliceConfig> {
    SliceConfig::from_json_str(&read(path)?).with_context(|| format!("slice config {}", path.display()))
}

fn load_trace(path: &Path, schema: &ContractSchema) -> Result<Trace> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_history(BufReader::new(f), schema).with_context(|| format!("trace {}", path.display()))
}

struct Loaded {
    schema: ContractSchema,
    cfg: SliceConfig,
    trace: Trace,
}

fn load_inputs(i: &Inputs, man: &mut RunManifest) -> Result<Loaded> {
    for p in [&i.trace, &i.schema, &i.slice_config] {
        man.input(p)?;
    }
    let schema = load_schema(&i.schema)?;
    let cfg = load_slice_config(&i.slice_config)?;
    let trace = man.time("parse", || load_trace(&i.trace, &schema))?;
    Ok(Loaded { schema, cfg, trace })
}

fn sessions(l: &Loaded, man: &mut RunManifest) -> Result<Vec<Slice>> {
    let set = man.time("slice", || slice(&l.trace, &l.cfg)).context("slice")?;
    if set.no_sessions_found {
        log::warn!("no step binds a slicing parameter; the history is one session");
    }
    Ok(set.slices)
}

/// Writes `text` to `out`, or to standard output.
fn emit(out: Option<&Path>, text: &str, man: &mut RunManifest) -> Result<()> {
    match out {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            man.output(p)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn stamp(mut j: Json, hash: &str) -> Json {
    if let Some(o) = j.as_object_mut() {
        o.insert("manifest".into(), Json::String(hash.to_string()));
    }
    j
}

fn pretty(j: &Json) -> String {
    serde_json::to_string_pretty(j).expect("JSON values serialize") + "\n"
}

fn finish(man: &RunManifest, out: Option<&Path>) -> Result<()> {
    if let Some(p) = out {
        let m = man.write_next_to(p)?;
        log::info!("manifest written to {}", m.display());
    }
    Ok(())
}

fn fixture(name: &str) -> Result<ReferenceContract> {
    if let Some(seed) = name.strip_prefix("random-") {
        let seed: u64 = seed.parse().with_context(|| format!("bad random fixture seed `{seed}`"))?;
        return Ok(random_reference(seed, RandomShape::default()));
    }
    let mut all = builtin_fixtures();
    all.remove(name).ok_or_else(|| {
        anyhow!("unknown fixture `{name}` (known: {}, random-<seed>)", all.keys().cloned().collect::<Vec<_>>().join(", "))
    })
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    if a.list {
        for (name, rc) in builtin_fixtures() {
            println!("{name}\t{} states, {} transitions", rc.ground_truth.states, rc.ground_truth.edge_count());
        }
        return Ok(());
    }
    let (name, out) = (a.fixture.expect("required by clap"), a.out.expect("required by clap"));
    let rc = fixture(&name)?;
    let mut man = RunManifest::new("gen");
    man.option("fixture", &name);
    man.option("instances", a.instances);
    man.option("txs", a.txs);
    man.option("exhaustive", a.exhaustive);
    man.seed = Some(a.seed);
    let hash = man.seal();
    let trace = man.time("simulate", || {
        if a.exhaustive {
            exhaustive_trace(&rc, 10_000).map_err(|e| anyhow!("gen: {} reachable states is too many", e.0))
        } else {
            Ok(simulate(&rc, &GenProtocol { instances: a.instances, txs_per_instance: a.txs, seed: a.seed }))
        }
    })?;
    let mut buf = Vec::new();
    write_history(&trace, &mut buf)?;
    emit(Some(&out), std::str::from_utf8(&buf)?, &mut man)?;
    if let Some(p) = &a.schema_out {
        emit(Some(p), &pretty(&rc.schema.to_json()), &mut man)?;
    }
    if let Some(p) = &a.slice_config_out {
        emit(Some(p), &pretty(&rc.slice_config.to_json()), &mut man)?;
    }
    if let Some(p) = &a.truth_out {
        emit(Some(p), &pretty(&stamp(rc.ground_truth.to_json(), &hash)), &mut man)?;
    }
    log::info!("{}: {} steps", rc.name, trace.len());
    finish(&man, Some(&out))
}

fn slices_json(slices: &[Slice]) -> Json {
    let items: Vec<Json> = slices
        .iter()
        .map(|s| {
            json!({
                "key": s.key_label(),
                "run": s.run,
                "events": s.events(),
                "steps": s.steps.iter().map(|st| st.to_json()).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "count": slices.len(), "slices": items })
}

fn cmd_slice(a: SliceArgs) -> Result<()> {
    let mut man = RunManifest::new("slice");
    let l = load_inputs(&a.inputs, &mut man)?;
    let hash = man.seal();
    let slices = sessions(&l, &mut man)?;
    emit(a.out.as_deref(), &pretty(&stamp(slices_json(&slices), &hash)), &mut man)?;
    finish(&man, a.out.as_deref())
}

fn infer_options(o: &InferOpts, cfg: &SliceConfig, man: &mut RunManifest) -> InferOptions {
    let mut exclude: BTreeSet<String> = o.exclude.iter().cloned().collect();
    exclude.extend(cfg.binding_params.iter().cloned());
    exclude.extend(cfg.key_source.values().cloned());
    man.option("min_support", o.min_support);
    man.option("exclude", exclude.iter().cloned().collect::<Vec<_>>().join(","));
    InferOptions { min_support: o.min_support, exclude_params: exclude, ..InferOptions::default() }
}

fn infer(slices: &[Slice], l: &Loaded, opts: &InferOptions, man: &mut RunManifest) -> Result<Conditions> {
    let conds = man.time("infer", || infer_conditions(slices, &l.schema, opts)).context("infer")?;
    if build_predicate_pool(&conds, &l.schema).is_err() {
        log::warn!("no condition mentions only state variables; mining will not distinguish states");
    }
    Ok(conds)
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let mut man = RunManifest::new("infer");
    let l = load_inputs(&a.inputs, &mut man)?;
    let opts = infer_options(&a.opts, &l.cfg, &mut man);
    man.seal();
    let slices = sessions(&l, &mut man)?;
    let conds = infer(&slices, &l, &opts, &mut man)?;
    emit(a.out.as_deref(), &pretty(&conditions_to_json(&conds)), &mut man)?;
    finish(&man, a.out.as_deref())
}

fn cmd_mine(a: MineArgs) -> Result<()> {
    let mut man = RunManifest::new("mine");
    let l = load_inputs(&a.inputs, &mut man)?;
    let opts = infer_options(&a.opts, &l.cfg, &mut man);
    if let Some(p) = &a.conds {
        man.input(p)?;
    }
    let cfg = MinerConfig {
        view: a.view,
        allow_loops: !a.no_loops || a.allow_loops,
        max_rmpath_actions: a.max_rmpath,
        seed: a.seed,
        ..MinerConfig::default()
    };
    man.option("view", cfg.view.name());
    man.option("allow_loops", cfg.allow_loops);
    man.option("max_rmpath", format!("{:?}", cfg.max_rmpath_actions));
    man.seed = Some(a.seed);
    let hash = man.seal();
    let slices = sessions(&l, &mut man)?;
    let conds = match &a.conds {
        Some(p) => conditions_from_json(&read_json(p)?).with_context(|| format!("conditions {}", p.display()))?,
        None => infer(&slices, &l, &opts, &mut man)?,
    };
    let (model, report) = man.time("mine", || mine(&slices, &conds, &l.schema, &cfg)).context("mine")?;
    log::info!("{} states, {} transitions, {} refinements", model.states.len(), model.transitions.len(), report.rmpath_count);
    emit(a.out.as_deref(), &pretty(&stamp(model.to_json(), &hash)), &mut man)?;
    if let Some(p) = &a.report {
        let j = stamp(report.to_json(&model, &l.schema.domains()), &hash);
        emit(Some(p), &pretty(&j), &mut man)?;
    }
    finish(&man, a.out.as_deref())
}

fn cmd_ktail(a: KtailArgs) -> Result<()> {
    let mut man = RunManifest::new("ktail");
    let l = load_inputs(&a.inputs, &mut man)?;
    if a.k == 0 {
        bail!("ktail: k must be at least 1");
    }
    man.option("k", a.k);
    let hash = man.seal();
    let words: Vec<Vec<String>> = sessions(&l, &mut man)?.iter().map(Slice::events).collect();
    let fsm = man.time("ktail", || ktail(&words, a.k));
    emit(a.out.as_deref(), &pretty(&stamp(fsm.to_json(), &hash)), &mut man)?;
    finish(&man, a.out.as_deref())
}

/// Either kind of model, reduced to its event automaton.
fn load_automaton(path: &Path) -> Result<Fsm> {
    let j = read_json(path)?;
    match j.get("kind").and_then(Json::as_str) {
        Some("efsm") => Ok(Efsm::from_json(&j).with_context(|| format!("model {}", path.display()))?.to_fsm()),
        Some("fsm") => Fsm::from_json(&j).with_context(|| format!("automaton {}", path.display())),
        _ => bail!("{}: `kind` must be \"efsm\" or \"fsm\"", path.display()),
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut man = RunManifest::new("eval");
    man.input(&a.mined)?;
    man.input(&a.truth)?;
    let pol = GenPolicy {
        max_sentences: a.max_sentences,
        min_transition_coverage: a.min_coverage,
        max_len_factor: a.max_len_factor,
        seed: a.seed,
        stop_probability: a.stop_prob,
        dedup: a.dedup,
    };
    man.option("max_sentences", pol.max_sentences);
    man.option("min_coverage", pol.min_transition_coverage);
    man.option("max_len_factor", pol.max_len_factor);
    if let Some(p) = pol.stop_probability {
        man.option("stop_prob", p);
    }
    man.option("dedup", pol.dedup);
    man.option("exhaustive", a.exhaustive);
    man.seed = Some(a.seed);
    let mined = load_automaton(&a.mined)?;
    let truth = load_automaton(&a.truth)?;
    let test = match &a.test_trace {
        Some(t) => {
            let i = Inputs {
                trace: t.clone(),
                schema: a.schema.clone().expect("required by clap"),
                slice_config: a.slice_config.clone().expect("required by clap"),
            };
            let l = load_inputs(&i, &mut man)?;
            Some(sessions(&l, &mut man)?)
        }
        None => None,
    };
    let hash = man.seal();
    let mut s = man
        .time("score", || if a.exhaustive { score_exhaustive(&mined, &truth, &pol) } else { score(&mined, &truth, &pol) })
        .context("eval")?;
    if let Some(test) = test {
        s.acc = Some(accuracy(&mined, &test).context("eval")?);
    }
    emit(a.out.as_deref(), &pretty(&stamp(s.to_json(), &hash)), &mut man)?;
    finish(&man, a.out.as_deref())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let mut man = RunManifest::new("export");
    man.input(&a.model)?;
    let j = read_json(&a.model)?;
    let domains = match &a.schema {
        Some(p) => load_schema(p)?.domains(),
        None => Default::default(),
    };
    let text = match (j.get("kind").and_then(Json::as_str), a.format) {
        (Some("efsm"), Format::Dot) => Efsm::from_json(&j)?.to_dot(&domains),
        (Some("efsm"), Format::Json) => pretty(&Efsm::from_json(&j)?.to_json()),
        (Some("fsm"), Format::Dot) => Fsm::from_json(&j)?.to_dot(),
        (Some("fsm"), Format::Json) => pretty(&Fsm::from_json(&j)?.to_json()),
        _ => bail!("{}: `kind` must be \"efsm\" or \"fsm\"", a.model.display()),
    };
    man.seal();
    emit(a.out.as_deref(), &text, &mut man)?;
    finish(&man, a.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPECMINE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Slice(a) => cmd_slice(a),
        Cmd::Infer(a) => cmd_infer(a),
        Cmd::Mine(a) => cmd_mine(a),
        Cmd::Ktail(a) => cmd_ktail(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Export(a) => cmd_export(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
