use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use reachlab::action_space::enumerate_action_space;
use reachlab::episode::bridge::{echo_decision, serve};
use reachlab::episode::{run_episode, AgentRequest, EpisodeTrace};
use reachlab::fixtures;
use reachlab::io::{
    graph_to_string, jsonl_string, loss_csv, read_graph, read_jsonl, FlowRecord, PrefRecord, SubtaskRecord,
    TraceRecord,
};
use reachlab::metrics::{score_run_detailed, Prediction};
use reachlab::model::{Action, GuiFlow, GuiGraph};
use reachlab::policy::{
    dpo_margins, train, DpoExample, FeatureHasher, LinearPolicy, Objective as TrainObjective, SftExample, StepContext,
};
use reachlab::reward::{build_preference_pairs, CompletionSpec, PairSource, RegeneratedFlow, RewardError};
use reachlab::sampler::{filter_tasks_with_reasons, FlowRegistry, FlowSampler, PageNameRegistry, TaskTemplates};
use reachlab::subtasks::{extract_subtasks, ReachTemplates, TemplatePicker};
use reachlab::synth::{random_graph, SynthConfig};

use crate::agents::{load_policy, AgentFactory};
use crate::config::{FileConfig, RunConfig};
use crate::manifest::RunManifest;
use crate::{Cli, Command, ExitKind, GlobalOpts, GraphKind, Objective};

trait Classify<T> {
    fn kind(self, kind: ExitKind) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn kind(self, kind: ExitKind) -> anyhow::Result<T> {
        self.map_err(|e| e.into().context(kind))
    }
}

struct Ctx {
    global: GlobalOpts,
    cfg: RunConfig,
}

impl Ctx {
    fn graph(&self, manifest: &mut RunManifest) -> anyhow::Result<GuiGraph> {
        let path = self.global.graph.as_ref().ok_or_else(|| anyhow!("--graph is required")).kind(ExitKind::Config)?;
        manifest.input(path).kind(ExitKind::Data)?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).kind(ExitKind::Data)?;
        read_graph(&text).with_context(|| format!("loading graph {}", path.display())).kind(ExitKind::Data)
    }

    fn write(&self, manifest: &mut RunManifest, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        let path = self.global.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display())).kind(ExitKind::Data)?;
        manifest.output_bytes(name, contents.as_bytes());
        Ok(path)
    }

    fn completion_spec(&self, flow: &GuiFlow, g: &GuiGraph) -> Result<CompletionSpec, RewardError> {
        let mut spec = CompletionSpec::reach_terminal(flow, g)?;
        if let Some(d) = self.cfg.max_search_depth {
            spec.max_search_depth = d;
        }
        Ok(spec)
    }
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path, manifest: &mut RunManifest) -> anyhow::Result<Vec<T>> {
    manifest.input(path).kind(ExitKind::Data)?;
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display())).kind(ExitKind::Data)?;
    read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display())).kind(ExitKind::Data)
}

fn read_flows(path: &Path, g: &GuiGraph, manifest: &mut RunManifest) -> anyhow::Result<Vec<GuiFlow>> {
    let recs: Vec<FlowRecord> = read_lines(path, manifest)?;
    let mut flows = Vec::with_capacity(recs.len());
    for (i, r) in recs.into_iter().enumerate() {
        if r.flow.steps.is_empty() {
            return Err(anyhow!("flow {i} has no steps")).kind(ExitKind::Data);
        }
        r.flow.check_connected(g).with_context(|| format!("flow {i} does not match the graph")).kind(ExitKind::Data)?;
        flows.push(r.flow);
    }
    Ok(flows)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::EchoAgent { listen } = &cli.command {
        return echo_agent(listen.as_deref()).kind(ExitKind::Agent);
    }
    let file = FileConfig::load(cli.global.config.as_deref()).kind(ExitKind::Config)?;
    let mut cfg = RunConfig::resolve(&file, cli.global.seed);
    apply_flag_overrides(&cli.command, &mut cfg);
    cfg.validate().kind(ExitKind::Config)?;
    fs::create_dir_all(&cli.global.out)
        .with_context(|| format!("creating {}", cli.global.out.display()))
        .kind(ExitKind::Data)?;
    let ctx = Ctx { global: cli.global, cfg };
    match cli.command {
        Command::GenGraph { kind, pages } => gen_graph(&ctx, kind, pages),
        Command::BuildDataset { .. } => build_dataset(&ctx),
        Command::ExtractSubtasks { flows, known_names, template_indices } => {
            extract(&ctx, &flows, known_names.as_deref(), template_indices)
        }
        Command::BuildPrefs { flows, agent } => build_prefs(&ctx, &flows, AgentFactory::new(agent, ctx.cfg.timeout_secs).kind(ExitKind::Config)?),
        Command::Train { objective, flows, prefs, init, .. } => train_cmd(&ctx, objective, flows, prefs, init),
        Command::Eval { flows, agent, .. } => eval(&ctx, &flows, AgentFactory::new(agent, ctx.cfg.timeout_secs).kind(ExitKind::Config)?),
        Command::RunEpisode { task, start, flows, flow_index, agent, .. } => {
            let factory = AgentFactory::new(agent, ctx.cfg.timeout_secs).kind(ExitKind::Config)?;
            run_one(&ctx, task, start, flows, flow_index, factory)
        }
        Command::EchoAgent { .. } => unreachable!("handled above"),
    }
}

fn apply_flag_overrides(cmd: &Command, cfg: &mut RunConfig) {
    match cmd {
        Command::BuildDataset { num_flows: Some(n) } => cfg.num_flows = *n,
        Command::Train { steps, lr, beta, .. } => {
            if let Some(s) = steps {
                cfg.train.steps = *s;
            }
            if let Some(l) = lr {
                cfg.train.lr = *l;
            }
            if let Some(b) = beta {
                cfg.beta = *b;
            }
        }
        Command::Eval { max_steps: Some(m), .. } | Command::RunEpisode { max_steps: Some(m), .. } => {
            cfg.episode.max_steps = *m;
            cfg.score.max_steps = *m;
        }
        _ => {}
    }
}

fn gen_graph(ctx: &Ctx, kind: GraphKind, pages: usize) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("gen-graph", &ctx.cfg);
    let g = match kind {
        GraphKind::Random => {
            if pages == 0 {
                return Err(anyhow!("--pages must be positive")).kind(ExitKind::Config);
            }
            random_graph(&SynthConfig { pages, ..Default::default() }, ctx.cfg.seed)
        }
        GraphKind::Shopping => fixtures::shopping_graph(),
        GraphKind::Cart => fixtures::cart_scenario().0,
        GraphKind::TwoRoute => fixtures::two_route_graph().0,
    };
    let path = ctx.write(&mut manifest, "graph.json", &graph_to_string(&g))?;
    manifest.note("pages", g.page_count());
    manifest.note("edges", g.edges().len());
    println!("wrote {} ({} pages, {} edges)", path.display(), g.page_count(), g.edges().len());
    manifest.write(&ctx.global.out).kind(ExitKind::Data)
}

fn build_dataset(ctx: &Ctx) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("build-dataset", &ctx.cfg);
    let g = ctx.graph(&mut manifest)?;
    let mut sampler = FlowSampler::new(ctx.cfg.sampler.clone()).kind(ExitKind::Config)?;
    let sampled = sampler.sample(&g, ctx.cfg.num_flows, &TaskTemplates::default()).kind(ExitKind::Data)?;
    let n_sampled = sampled.len();
    let (flows, dropped) = filter_tasks_with_reasons(sampled, &FlowRegistry::new(), ctx.cfg.max_task_len);
    let records: Vec<FlowRecord> = flows.iter().cloned().map(FlowRecord::from).collect();
    ctx.write(&mut manifest, "flows.jsonl", &jsonl_string(&records))?;
    let steps: usize = flows.iter().map(GuiFlow::len).sum();
    let mean = if flows.is_empty() { 0.0 } else { steps as f64 / flows.len() as f64 };
    manifest.note("sampled", n_sampled);
    manifest.note("kept", flows.len());
    manifest.note("dropped", dropped.len());
    manifest.note("steps", steps);
    println!("flows {}  steps {}  steps/task {:.2}  dropped {}", flows.len(), steps, mean, dropped.len());
    manifest.write(&ctx.global.out).kind(ExitKind::Data)
}

fn extract(ctx: &Ctx, flows_path: &Path, known: Option<&Path>, indices: Option<Vec<usize>>) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("extract-subtasks", &ctx.cfg);
    let g = ctx.graph(&mut manifest)?;
    let flows = read_flows(flows_path, &g, &mut manifest)?;
    let mut registry = PageNameRegistry::new();
    if let Some(path) = known {
        manifest.input(path).kind(ExitKind::Data)?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).kind(ExitKind::Data)?;
        for name in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            registry.note_existing(name);
        }
    }
    let mut templates = ReachTemplates::standard(ctx.cfg.seed);
    if let Some(ix) = indices {
        templates.picker = TemplatePicker::scripted(ix);
    }
    let mut records = Vec::new();
    for (i, f) in flows.iter().enumerate() {
        for s in extract_subtasks(f, &g, &mut registry, &mut templates, &ctx.cfg.similarity) {
            records.push(SubtaskRecord {
                kind: s.spec.kind,
                target_page: s.spec.target_page,
                required_action: s.spec.required_action,
                task: s.spec.task_text,
                source_flow: i,
                pages: s.flow.len() + 1,
                jaccard_threshold: ctx.cfg.similarity.jaccard_threshold,
                flow: s.flow,
                extra: Default::default(),
            });
        }
    }
    ctx.write(&mut manifest, "subtasks.jsonl", &jsonl_string(&records))?;
    let reach = records.iter().filter(|r| r.kind == reachlab::model::SubtaskKind::Reach).count();
    manifest.note("reach", reach);
    manifest.note("operate", records.len() - reach);
    println!("subtasks {}  reach {}  operate {}", records.len(), reach, records.len() - reach);
    manifest.write(&ctx.global.out).kind(ExitKind::Data)
}

#[derive(Debug, Serialize)]
struct AgentFailure {
    flow: usize,
    error: String,
}

/// Asks the agent for its action at every golden step, conditioning on the
/// golden prefix.
fn regenerate(agent: &mut dyn reachlab::episode::Agent, g: &GuiGraph, f: &GuiFlow) -> anyhow::Result<Vec<Option<Action>>> {
    let mut out = Vec::with_capacity(f.len());
    let history: Vec<Action> = f.actions().cloned().collect();
    for (t, step) in f.steps.iter().enumerate() {
        let page = g.require_page(&step.page_id)?;
        let space = enumerate_action_space(page);
        let req = AgentRequest { task: &f.task, step_index: t, page, action_space: &space, history: &history[..t] };
        out.push(Some(agent.decide(&req).with_context(|| format!("step {t}"))?));
    }
    Ok(out)
}

fn build_prefs(ctx: &Ctx, flows_path: &Path, factory: AgentFactory) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("build-prefs", &ctx.cfg);
    let g = ctx.graph(&mut manifest)?;
    let flows = read_flows(flows_path, &g, &mut manifest)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let spec_fn = |f: &GuiFlow| ctx.completion_spec(f, &g);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, f) in flows.iter().enumerate() {
        let attempt = factory
            .make(Some(f), ctx.cfg.seed.wrapping_add(i as u64))
            .and_then(|mut agent| regenerate(agent.as_mut(), &g, f));
        let agent_actions = match attempt {
            Ok(a) => a,
            Err(e) => {
                eprintln!("flow {i}: {e:#}");
                failures.push(AgentFailure { flow: i, error: format!("{e:#}") });
                continue;
            }
        };
        let depth = spec_fn(f).map(|s| s.max_search_depth).unwrap_or(0);
        let regen = RegeneratedFlow { golden: f.clone(), agent_actions };
        for pair in build_preference_pairs(&g, &[regen], &spec_fn, &mut rng) {
            let history = f.actions().take(pair.step).cloned().collect();
            records.push(PrefRecord { pair, history, source_flow: i, max_search_depth: depth, extra: Default::default() });
        }
    }
    ctx.write(&mut manifest, "prefs.jsonl", &jsonl_string(&records))?;
    let agent_generated = records.iter().filter(|r| r.pair.source == PairSource::AgentGenerated).count();
    let space_sampled = records.len() - agent_generated;
    let report = serde_json::json!({
        "pairs": records.len(),
        "agent_generated": agent_generated,
        "space_sampled": space_sampled,
        "flows": flows.len(),
        "failures": failures,
    });
    ctx.write(&mut manifest, "prefs_report.json", &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    manifest.note("agent", format!("{:?}", factory.spec()));
    manifest.note("pairs", records.len());
    manifest.note("agent_generated", agent_generated);
    manifest.note("space_sampled", space_sampled);
    manifest.note("failed_flows", failures.len());
    println!("pairs {}  agent-generated {}  space-sampled {}  failed flows {}", records.len(), agent_generated, space_sampled, failures.len());
    manifest.write(&ctx.global.out).kind(ExitKind::Data)?;
    if !failures.is_empty() {
        return Err(anyhow!("{} of {} flows failed; partial output written", failures.len(), flows.len())).kind(ExitKind::Agent);
    }
    Ok(())
}

fn sft_examples(g: &GuiGraph, flows: &[GuiFlow], hasher: &FeatureHasher) -> anyhow::Result<Vec<SftExample>> {
    let mut out = Vec::new();
    for f in flows {
        let mut actions: Vec<Action> = f.actions().cloned().collect();
        actions.push(Action::complete());
        let mut pages: Vec<&str> = f.steps.iter().map(|s| s.page_id.as_str()).collect();
        pages.push(&f.terminal_page);
        for (t, (page_id, a)) in pages.iter().zip(&actions).enumerate() {
            let page = g.require_page(page_id)?;
            let ctx = StepContext { task: &f.task, page, history: &actions[..t] };
            out.push(SftExample::new(hasher, &ctx, a)?);
        }
    }
    Ok(out)
}

fn dpo_examples(g: &GuiGraph, prefs: &[PrefRecord], hasher: &FeatureHasher) -> anyhow::Result<Vec<DpoExample>> {
    prefs
        .iter()
        .map(|r| {
            let page = g.require_page(&r.pair.page_id)?;
            let ctx = StepContext { task: &r.pair.task, page, history: &r.history };
            Ok(DpoExample::new(hasher, &ctx, &r.pair.chosen, &r.pair.rejected)?)
        })
        .collect()
}

fn train_cmd(
    ctx: &Ctx,
    objective: Objective,
    flows: Option<PathBuf>,
    prefs: Option<PathBuf>,
    init: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("train", &ctx.cfg);
    let g = ctx.graph(&mut manifest)?;
    let initial = match &init {
        Some(p) => {
            manifest.input(p).kind(ExitKind::Data)?;
            load_policy(p).kind(ExitKind::Data)?
        }
        None => {
            let hasher = FeatureHasher::new(ctx.cfg.dim, ctx.cfg.hash_seed).kind(ExitKind::Config)?;
            LinearPolicy::zeros(hasher, ctx.cfg.beta).kind(ExitKind::Config)?
        }
    };
    // The flag or config beta applies to the run even when starting from a checkpoint.
    let policy = LinearPolicy::from_weights(*initial.hasher(), initial.weights().to_vec(), ctx.cfg.beta).kind(ExitKind::Config)?;
    let hasher = *policy.hasher();
    let obj = match objective {
        Objective::Sft => {
            let path = flows.ok_or_else(|| anyhow!("--flows is required for sft")).kind(ExitKind::Config)?;
            let flows = read_flows(&path, &g, &mut manifest)?;
            TrainObjective::Sft(sft_examples(&g, &flows, &hasher).kind(ExitKind::Data)?)
        }
        Objective::Dpo => {
            let path = prefs.ok_or_else(|| anyhow!("--prefs is required for dpo")).kind(ExitKind::Config)?;
            let recs: Vec<PrefRecord> = read_lines(&path, &mut manifest)?;
            TrainObjective::Dpo { examples: dpo_examples(&g, &recs, &hasher).kind(ExitKind::Data)?, reference: policy.clone() }
        }
    };
    if obj.is_empty() {
        return Err(anyhow!("empty training set")).kind(ExitKind::Data);
    }
    let outcome = train(policy, &obj, &ctx.cfg.train).kind(ExitKind::Data)?;
    let ckpt = serde_json::to_string(&outcome.policy.to_checkpoint())? + "\n";
    ctx.write(&mut manifest, "checkpoint.json", &ckpt)?;
    ctx.write(&mut manifest, "loss.csv", &loss_csv(&outcome.losses))?;
    let mut report = BTreeMap::new();
    report.insert("objective", serde_json::to_value(objective)?);
    report.insert("examples", obj.len().into());
    report.insert("steps", ctx.cfg.train.steps.into());
    report.insert("lr", ctx.cfg.train.lr.into());
    report.insert("beta", ctx.cfg.beta.into());
    if let (Some(first), Some(last)) = (outcome.losses.first(), outcome.losses.last()) {
        report.insert("initial_loss", (*first).into());
        report.insert("final_loss", (*last).into());
    }
    if let TrainObjective::Dpo { examples, reference } = &obj {
        let margins = dpo_margins(&outcome.policy, reference, examples);
        let positive = margins.iter().filter(|m| **m > 0.0).count() as f64 / margins.len() as f64;
        let mean = margins.iter().sum::<f64>() / margins.len() as f64;
        report.insert("positive_margin_fraction", positive.into());
        report.insert("mean_margin", mean.into());
        println!("positive margins {:.2}%  mean margin {:.4}", 100.0 * positive, mean);
    }
    ctx.write(&mut manifest, "train_report.json", &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    println!(
        "trained {} examples for {} steps; loss {:.4} -> {:.4}",
        obj.len(),
        ctx.cfg.train.steps,
        outcome.losses.first().copied().unwrap_or(f64::NAN),
        outcome.losses.last().copied().unwrap_or(f64::NAN)
    );
    manifest.write(&ctx.global.out).kind(ExitKind::Data)
}

fn eval(ctx: &Ctx, flows_path: &Path, factory: AgentFactory) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("eval", &ctx.cfg);
    let g = ctx.graph(&mut manifest)?;
    let flows = read_flows(flows_path, &g, &mut manifest)?;
    let mut traces: Vec<EpisodeTrace> = Vec::with_capacity(flows.len());
    let mut specs = Vec::with_capacity(flows.len());
    for (i, f) in flows.iter().enumerate() {
        specs.push(ctx.completion_spec(f, &g).with_context(|| format!("flow {i}")).kind(ExitKind::Data)?);
        let mut agent = factory.make(Some(f), ctx.cfg.seed.wrapping_add(i as u64)).kind(ExitKind::Agent)?;
        let trace = run_episode(&g, agent.as_mut(), &f.task, f.start_page(), ctx.cfg.episode)
            .with_context(|| format!("flow {i}"))
            .kind(ExitKind::Agent)?;
        traces.push(trace);
    }
    let preds: Vec<Prediction> = traces.iter().map(Prediction::from).collect();
    let (report, steps) = score_run_detailed(&preds, &flows, &specs, &g, &ctx.cfg.score).kind(ExitKind::Data)?;
    let trace_recs: Vec<TraceRecord> = traces.into_iter().map(|trace| TraceRecord { trace, extra: Default::default() }).collect();
    ctx.write(&mut manifest, "traces.jsonl", &jsonl_string(&trace_recs))?;
    ctx.write(&mut manifest, "judgments.jsonl", &jsonl_string(&steps))?;
    ctx.write(&mut manifest, "metrics.json", &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    manifest.note("agent", format!("{:?}", factory.spec()));
    println!("{report}");
    manifest.write(&ctx.global.out).kind(ExitKind::Data)
}

fn run_one(
    ctx: &Ctx,
    task: Option<String>,
    start: Option<String>,
    flows: Option<PathBuf>,
    flow_index: usize,
    factory: AgentFactory,
) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("run-episode", &ctx.cfg);
    let g = ctx.graph(&mut manifest)?;
    let gold = match &flows {
        Some(path) => {
            let all = read_flows(path, &g, &mut manifest)?;
            let n = all.len();
            Some(all.into_iter().nth(flow_index).ok_or_else(|| anyhow!("flow index {flow_index} out of range ({n} flows)")).kind(ExitKind::Config)?)
        }
        None => None,
    };
    let task = match (task, &gold) {
        (Some(t), _) => t,
        (None, Some(f)) => f.task.clone(),
        (None, None) => bail!(anyhow!("--task or --flows is required").context(ExitKind::Config)),
    };
    let start = start
        .or_else(|| gold.as_ref().map(|f| f.start_page().to_string()))
        .unwrap_or_else(|| g.home().to_string());
    let mut agent = factory.make(gold.as_ref(), ctx.cfg.seed).kind(ExitKind::Agent)?;
    let trace = match run_episode(&g, agent.as_mut(), &task, &start, ctx.cfg.episode) {
        Ok(t) => t,
        Err(e @ reachlab::episode::EpisodeError::UnknownPage(_)) => return Err(e).kind(ExitKind::Config),
        Err(e) => return Err(e).kind(ExitKind::Agent),
    };
    let rec = TraceRecord { trace, extra: Default::default() };
    let line = jsonl_string(std::slice::from_ref(&rec));
    ctx.write(&mut manifest, "trace.jsonl", &line)?;
    print!("{line}");
    manifest.write(&ctx.global.out).kind(ExitKind::Data)
}

fn echo_agent(listen: Option<&str>) -> anyhow::Result<()> {
    match listen {
        None => {
            let stdin = io::stdin();
            serve(stdin.lock(), io::stdout().lock(), echo_decision)?;
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            println!("{}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                thread::spawn(move || {
                    let reader = BufReader::new(stream.try_clone()?);
                    serve(reader, stream, echo_decision)
                });
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn lines_of(path: &Path) -> io::Result<Vec<String>> {
    BufReader::new(fs::File::open(path)?).lines().collect()
}
