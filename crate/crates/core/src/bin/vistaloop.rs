use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vistaloop::control::{run_closed_loop, LoopConfig, LoopStatus};
use vistaloop::encoder::build_conditions;
use vistaloop::evaluator::evaluate;
use vistaloop::heads::heads;
use vistaloop::json::{audit_json, metrics_json, report_json, write_json};
use vistaloop::metrics::compute_metrics;
use vistaloop::parallel::with_configured_pool;
use vistaloop::refine::make_masks;
use vistaloop::render::{render_scene, MultiviewVideo};
use vistaloop::scenario_file::load_scenario;
use vistaloop::{Error, Result, Scenario};

#[derive(Parser)]
#[command(name = "vistaloop", version, about = "Closed-loop multiview driving-scene synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, evaluate and repair until the scene passes or the budget runs out.
    Run(RunArgs),
    /// Render frames once, without evaluation.
    Render(RenderArgs),
    /// Evaluate frames previously written by `run` or `render`.
    Evaluate(EvalArgs),
    /// Compute metrics for frames previously written by `run` or `render`.
    Metrics(EvalArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Ignore the scenario's fault plan.
    #[arg(long)]
    no_faults: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.6)]
    lambda: f64,
    #[arg(long, default_value_t = 0.8)]
    gamma_g: f64,
    #[arg(long, default_value_t = 0.7)]
    gamma_o: f64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..=32))]
    max_iters: u32,
    #[arg(long, default_value_t = 2)]
    feather: u32,
    /// Also write each object's projected-box masks.
    #[arg(long)]
    export_masks: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    export_masks: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: ScenarioArgs,
    /// Directory holding the frames; reports are written here too.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    lambda: f64,
}

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let mut s = load_scenario(&args.scenario)?;
    if args.no_faults {
        s.fault_plan.clear();
    }
    Ok(s)
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))
}

fn write_masks(scenario: &Scenario, out: &Path) -> Result<()> {
    let dir = out.join("masks");
    prepare(&dir)?;
    for o in &scenario.objects {
        for ((v, t), m) in make_masks(o, &scenario.rig, scenario.num_frames).masks {
            vistaloop::image::write_file(
                &dir.join(format!("object{}_view{v}_frame{t}.pgm", o.index)),
                &m.encode_pgm(),
            )?;
        }
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<LoopStatus> {
    let scenario = load(&args.input)?;
    let config = LoopConfig {
        gamma_g: args.gamma_g,
        gamma_o: args.gamma_o,
        lambda: args.lambda,
        alpha_emphasis: args.alpha,
        max_iterations: args.max_iters,
        seed: args.seed,
        feather: args.feather,
    };
    config.check()?;
    let (video, log) = run_closed_loop(&scenario, &config, heads())?;
    let metrics = compute_metrics(&video, &scenario, heads())?;
    prepare(&args.out)?;
    video.export(&args.out)?;
    if args.export_masks {
        write_masks(&scenario, &args.out)?;
    }
    let report = log.final_report().expect("the loop runs at least once");
    write_json(&args.out.join("audit.json"), &audit_json(&log))?;
    write_json(&args.out.join("report.json"), &report_json(report))?;
    write_json(&args.out.join("metrics.json"), &metrics_json(&metrics))?;
    println!(
        "{}: {} iteration(s), s_macro {:.3}",
        log.status.token(),
        log.iterations.len(),
        report.s_macro
    );
    Ok(log.status)
}

fn render(args: &RenderArgs) -> Result<()> {
    let scenario = load(&args.input)?;
    scenario.validate()?;
    let conditions = build_conditions(&scenario)?;
    let video = render_scene(
        &conditions,
        &scenario.rig,
        scenario.num_frames,
        args.seed,
        &scenario.fault_plan,
        1,
    );
    prepare(&args.out)?;
    video.export(&args.out)?;
    if args.export_masks {
        write_masks(&scenario, &args.out)?;
    }
    Ok(())
}

fn import(args: &EvalArgs) -> Result<(Scenario, MultiviewVideo)> {
    let scenario = load(&args.input)?;
    scenario.validate()?;
    let video = MultiviewVideo::import(&args.out, scenario.rig.len() as u32, scenario.num_frames)?;
    Ok((scenario, video))
}

fn evaluate_cmd(args: &EvalArgs) -> Result<()> {
    let (scenario, video) = import(args)?;
    let conditions = build_conditions(&scenario)?;
    let report = evaluate(&video, &conditions, &scenario.rig, args.lambda, heads())?;
    write_json(&args.out.join("report.json"), &report_json(&report))?;
    println!("s_macro {:.3}", report.s_macro);
    Ok(())
}

fn metrics_cmd(args: &EvalArgs) -> Result<()> {
    let (scenario, video) = import(args)?;
    let m = compute_metrics(&video, &scenario, heads())?;
    write_json(&args.out.join("metrics.json"), &metrics_json(&m))?;
    println!("layout IoU {:.3}, AP@50 {:.3}", m.layout_iou_mean, m.ap_at_50);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = with_configured_pool(|| match &cli.command {
        Command::Run(a) => run(a).map(|s| match s {
            LoopStatus::Passed => 0,
            LoopStatus::BudgetExhausted => 2,
        }),
        Command::Render(a) => render(a).map(|_| 0),
        Command::Evaluate(a) => evaluate_cmd(a).map(|_| 0),
        Command::Metrics(a) => metrics_cmd(a).map(|_| 0),
    })
    .and_then(|r| r);
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
