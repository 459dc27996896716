//! Command-line front end: compile norms, plan, simulate, inspect, and
//! export artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use normweaver::artifact::{input_hash, PlanArtifact};
use normweaver::automata::{export_hoa, import_hoa, ltl_to_dra, Dra};
use normweaver::crdra::Norm;
use normweaver::executor::{run_episode, ExecConfig, ExecutionTrace};
use normweaver::ltl::{parse_ltl, AtomTable, LtlFormula};
use normweaver::mdp::LabeledMdp;
use normweaver::planner::{plan, PlannerConfig};
use normweaver::satisfaction::max_satisfaction_probability;
use normweaver::vacuum::{build_scenario_with, scenario_config};

#[derive(Parser)]
#[command(name = "normweaver", version, about = "Planning and execution under weighted, possibly conflicting temporal-logic norms")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile norms, build the conflict product, and write a plan artifact
    Plan {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Execute episodes under a previously written plan artifact
    Run {
        #[command(flatten)]
        input: InputArgs,
        /// master seed; per-episode seeds are derived deterministically
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
    /// Maximum probability of satisfying the conjunction of all norm formulas
    Maxprob {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Write each norm's compiled automaton as a HOA file
    ExportHoa {
        #[command(flatten)]
        input: InputArgs,
    },
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Built-in vacuum scenario id (1-4); exactly one of --scenario/--mdp
    #[arg(long)]
    scenario: Option<u32>,
    /// Labeled MDP JSON file; exactly one of --scenario/--mdp
    #[arg(long, conflicts_with = "scenario")]
    mdp: Option<PathBuf>,
    /// Norm file (`<weight> :: <formula>` per line, `#` comments); required
    /// with --mdp, replaces the built-in norms with --scenario
    #[arg(long)]
    norms: Option<PathBuf>,
    /// Directory of `<norm-name>.hoa` files; a matching file overrides
    /// compiling that norm's formula
    #[arg(long)]
    automata: Option<PathBuf>,
    /// Discount factor in [0, 1)
    #[arg(long)]
    gamma: Option<f64>,
    /// Exploration probability inside accepting end components
    #[arg(long)]
    epsilon: Option<f64>,
    /// Value-iteration residual tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Scenario-domain override, e.g. --override human_mess_prob=0
    #[arg(long = "override", value_name = "KEY=VAL")]
    overrides: Vec<String>,
    /// Output directory for artifacts, traces, and summaries
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Inputs resolved to in-memory form, plus the hash that ties a plan
/// artifact to them.
struct Resolved {
    m: LabeledMdp,
    norms: Vec<Norm>,
    supplied: Vec<Option<Dra>>,
    pcfg: PlannerConfig,
    hash: String,
}

fn parse_norm_file(text: &str, atoms: &mut AtomTable) -> Result<Vec<Norm>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (w, f) = line
            .split_once("::")
            .with_context(|| format!("norm file line {}: expected `<weight> :: <formula>`", lineno + 1))?;
        let weight: f64 = w
            .trim()
            .parse()
            .with_context(|| format!("norm file line {}: bad weight {:?}", lineno + 1, w.trim()))?;
        let formula = parse_ltl(f.trim(), atoms)
            .with_context(|| format!("norm file line {}: bad formula", lineno + 1))?;
        let name = format!("N{}", out.len() + 1);
        out.push(Norm::new(&name, weight, formula).with_context(|| format!("norm file line {}", lineno + 1))?);
    }
    if out.is_empty() {
        bail!("norm file contains no norms");
    }
    Ok(out)
}

fn resolve(input: &InputArgs) -> Result<Resolved> {
    let mut hash_parts: Vec<String> = Vec::new();
    let (mut m, mut norms, mut pcfg) = match (input.scenario, &input.mdp) {
        (Some(id), None) => {
            let (mut vcfg, norm_ids) = scenario_config(id)?;
            for ov in &input.overrides {
                let (k, v) = ov
                    .split_once('=')
                    .with_context(|| format!("--override {ov:?}: expected KEY=VAL"))?;
                vcfg.apply_override(k.trim(), v.trim())?;
            }
            hash_parts.push(format!("scenario:{id}"));
            hash_parts.push(format!("overrides:{}", input.overrides.join(",")));
            let (m, norms, pcfg) = build_scenario_with(&vcfg, &norm_ids)?;
            (m, norms, pcfg)
        }
        (None, Some(path)) => {
            if !input.overrides.is_empty() {
                bail!("--override applies only to --scenario inputs");
            }
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading MDP file {}", path.display()))?;
            let m = normweaver::mdp::from_json(&text)?;
            hash_parts.push(format!("mdp:{text}"));
            (m, Vec::new(), PlannerConfig::default())
        }
        _ => bail!("exactly one of --scenario and --mdp is required"),
    };
    match &input.norms {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading norm file {}", path.display()))?;
            norms = parse_norm_file(&text, &mut m.atoms)?;
            hash_parts.push(format!("norms:{text}"));
        }
        None => {
            if norms.is_empty() {
                bail!("--norms is required with --mdp");
            }
            hash_parts.push("norms:builtin".to_string());
        }
    }
    let mut supplied: Vec<Option<Dra>> = vec![None; norms.len()];
    if let Some(dir) = &input.automata {
        for (i, norm) in norms.iter().enumerate() {
            let path = dir.join(format!("{}.hoa", norm.name));
            if path.exists() {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading automaton {}", path.display()))?;
                let d = import_hoa(&text)
                    .with_context(|| format!("parsing automaton {}", path.display()))?;
                // fail now, not at planning time, if the APs don't match
                d.projector(&m.atoms)
                    .with_context(|| format!("automaton {} uses atoms unknown to the MDP", path.display()))?;
                hash_parts.push(format!("automaton:{}:{}", norm.name, text));
                supplied[i] = Some(d);
            }
        }
    }
    if let Some(g) = input.gamma {
        pcfg.gamma = g;
    }
    if let Some(e) = input.epsilon {
        pcfg.epsilon = e;
    }
    if let Some(t) = input.tol {
        pcfg.tol = t;
    }
    hash_parts.push(format!("config:{:?}:{:?}:{:?}", pcfg.gamma, pcfg.epsilon, pcfg.tol));
    let parts: Vec<&str> = hash_parts.iter().map(|s| s.as_str()).collect();
    let hash = input_hash(&parts);
    Ok(Resolved { m, norms, supplied, pcfg, hash })
}

fn worker_count() -> usize {
    std::env::var("NORMWEAVER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// splitmix64 finalizer: spreads the master seed into per-episode seeds.
fn derive_seed(master: u64, episode: u64) -> u64 {
    let mut z = master.wrapping_add(episode.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn cmd_plan(input: &InputArgs) -> Result<()> {
    let t0 = Instant::now();
    let r = resolve(input)?;
    let (product, policy) = plan(&r.m, &r.norms, &r.supplied, &r.pcfg)?;
    let report = policy.report.clone();
    let viol_initial = policy.viol[0];
    let artifact = PlanArtifact::new(r.hash.clone(), product, policy);
    let path = write_out(&input.out, "plan.json", &artifact.to_json())?;
    let wall_ms = t0.elapsed().as_millis();
    let summary = serde_json::json!({
        "command": "plan",
        "states": { "environment": r.m.state_names.len(), "product": report.build.product_states },
        "choices": report.build.materialized_choices,
        "pruned_choices": report.build.pruned_choices,
        "norms": r.norms.iter().map(|n| serde_json::json!({"name": n.name, "weight": n.weight})).collect::<Vec<_>>(),
        "amecs": report.num_amecs,
        "amec_states": report.amec_state_count,
        "no_update_states": report.no_update_count,
        "viol_initial": viol_initial,
        "plan_ms": report.plan_ms,
        "wall_ms": wall_ms as u64,
        "artifact": path.display().to_string(),
        "input_hash": r.hash,
    });
    write_out(&input.out, "plan_summary.json", &summary.to_string())?;
    println!(
        "planned {} product states ({} environment), {} choices, {} AMECs ({} states), {} noUpdate",
        report.build.product_states,
        r.m.state_names.len(),
        report.build.materialized_choices,
        report.num_amecs,
        report.amec_state_count,
        report.no_update_count,
    );
    println!("Viol*(initial) = {viol_initial:.6}");
    println!("wall time {wall_ms} ms; artifact {}", path.display());
    Ok(())
}

fn cmd_run(input: &InputArgs, seed: u64, horizon: usize, episodes: usize) -> Result<()> {
    if episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let r = resolve(input)?;
    let art_path = input.out.join("plan.json");
    let text = fs::read_to_string(&art_path).with_context(|| {
        format!("reading plan artifact {} (run `normweaver plan` first)", art_path.display())
    })?;
    let artifact = PlanArtifact::from_json(&text)?;
    artifact.check_hash(&r.hash)?;

    let workers = worker_count().min(episodes);
    let mut traces: Vec<Option<ExecutionTrace>> = vec![None; episodes];
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for w in 0..workers {
            let m = &r.m;
            let artifact = &artifact;
            handles.push(scope.spawn(move || -> Result<Vec<(usize, ExecutionTrace)>> {
                let mut out = Vec::new();
                for i in (w..episodes).step_by(workers) {
                    let cfg = ExecConfig { seed: derive_seed(seed, i as u64), ..ExecConfig::default() };
                    let tr = run_episode(m, &artifact.product, &artifact.policy, horizon, &cfg)
                        .with_context(|| format!("episode {i}"))?;
                    out.push((i, tr));
                }
                Ok(out)
            }));
        }
        for h in handles {
            for (i, tr) in h.join().expect("episode worker panicked")? {
                traces[i] = Some(tr);
            }
        }
        Ok(())
    })?;
    let traces: Vec<ExecutionTrace> = traces.into_iter().map(|t| t.expect("all episodes ran")).collect();

    let n = r.norms.len();
    let mut susp_counts = vec![0u64; n];
    let mut total = 0.0f64;
    for tr in &traces {
        total += tr.total_cost;
        for st in &tr.steps {
            if st.action.is_some() {
                for (i, count) in susp_counts.iter_mut().enumerate() {
                    if st.effective_mask & (1 << i) != 0 {
                        *count += 1;
                    }
                }
            }
        }
    }
    let mean_cost = total / episodes as f64;
    for (i, tr) in traces.iter().enumerate() {
        write_out(&input.out, &format!("trace_{i:03}.json"), &tr.to_json())?;
        write_out(&input.out, &format!("trace_{i:03}.tsv"), &tr.to_delimited())?;
    }
    let summary = serde_json::json!({
        "command": "run",
        "episodes": episodes,
        "horizon": horizon,
        "seed": seed,
        "mean_cost": mean_cost,
        "per_episode_cost": traces.iter().map(|t| t.total_cost).collect::<Vec<_>>(),
        "suspension_steps": r.norms.iter().zip(&susp_counts).map(|(nm, c)| {
            serde_json::json!({"name": nm.name, "weight": nm.weight, "steps": c})
        }).collect::<Vec<_>>(),
        "input_hash": r.hash,
    });
    write_out(&input.out, "run_summary.json", &summary.to_string())?;
    println!("ran {episodes} episode(s) of horizon {horizon}; mean accumulated cost {mean_cost:.6}");
    for (nm, c) in r.norms.iter().zip(&susp_counts) {
        println!("  {} (w={}): suspended on {} step(s) total", nm.name, nm.weight, c);
    }
    Ok(())
}

fn cmd_maxprob(input: &InputArgs) -> Result<()> {
    let r = resolve(input)?;
    let conj = r
        .norms
        .iter()
        .map(|n| n.formula.clone())
        .reduce(LtlFormula::and)
        .expect("at least one norm");
    let dra = ltl_to_dra(&conj, &r.m.atoms)?;
    let (p0, _, _, _) = max_satisfaction_probability(&r.m, &dra)?;
    let summary = serde_json::json!({
        "command": "maxprob",
        "formula": conj.display(&r.m.atoms).to_string(),
        "probability": p0,
        "conflict": p0 == 0.0,
    });
    write_out(&input.out, "maxprob_summary.json", &summary.to_string())?;
    println!("max satisfaction probability of the norm conjunction: {p0:.6}");
    if p0 == 0.0 {
        println!("the norm set is in conflict: no policy satisfies all norms");
    }
    Ok(())
}

fn cmd_export_hoa(input: &InputArgs) -> Result<()> {
    let r = resolve(input)?;
    let mut files = Vec::new();
    for norm in &r.norms {
        let dra = ltl_to_dra(&norm.formula, &r.m.atoms)
            .with_context(|| format!("norm {}", norm.name))?;
        let path = write_out(&input.out, &format!("{}.hoa", norm.name), &export_hoa(&dra))?;
        println!("{}: {} states -> {}", norm.name, dra.num_states(), path.display());
        files.push(serde_json::json!({
            "name": norm.name,
            "states": dra.num_states(),
            "file": path.display().to_string(),
        }));
    }
    let summary = serde_json::json!({ "command": "export-hoa", "automata": files });
    write_out(&input.out, "export_hoa_summary.json", &summary.to_string())?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Plan { input } => cmd_plan(input),
        Cmd::Run { input, seed, horizon, episodes } => cmd_run(input, *seed, *horizon, *episodes),
        Cmd::Maxprob { input } => cmd_maxprob(input),
        Cmd::ExportHoa { input } => cmd_export_hoa(input),
    }
}
