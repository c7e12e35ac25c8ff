use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rsca_sim::batch::run_batch;
use rsca_sim::cache::{cache_key, to_text, SynthesisCache};
use rsca_sim::config::SimConfig;
use rsca_sim::export::{plot_series, run_summary, write_batch, write_plot_csv, write_trace_csv};
use rsca_sim::runner::{run_scenario, Arch};
use rsca_sim::scenario::{Obstacle, Scenario, Tier};
use rsca_sim::verify::verify_sets;
use rsca_core::invariant_sets::SafeReference;

#[derive(Parser)]
#[command(name = "rsca", version, about = "Robust safe control architecture: set synthesis and obstacle-avoidance simulation")]
struct Cli {
    /// TOML configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its trace and plot data.
    Simulate(SimulateArgs),
    /// Run the randomized batch comparing RSCA and SCA.
    Batch(BatchArgs),
    /// Synthesize the tube and terminal sets for one tier and speed.
    Synthesize(SynthesizeArgs),
    /// Check the invariant-set certificates for every tier.
    VerifySets(VerifyArgs),
    /// Print the effective configuration as TOML.
    PrintConfig,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    obstacle_width: Option<f64>,
    #[arg(long)]
    obstacle_length: Option<f64>,
    /// Distance from the start to the obstacle's rear edge (m).
    #[arg(long)]
    obstacle_pos: Option<f64>,
    /// Lateral center of the obstacle (m, positive to the left).
    #[arg(long, allow_hyphen_values = true)]
    obstacle_lateral: Option<f64>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    tier: Option<Tier>,
    #[arg(long)]
    seed: Option<u64>,
    /// rsca, sca or both.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Synthesis file from `rsca synthesize`; used when it matches the scenario.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Scenario counts per tier, e.g. 40,40,40.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    tiers: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long, default_value = "d1")]
    tier: Tier,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    psi_bound: Option<f64>,
    /// Write the synthesized sets to this file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "5,12,20")]
    speeds: Vec<f64>,
    /// Terminal-set one-step simulations per tier and speed.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<SimConfig> {
    match path {
        Some(p) => SimConfig::load(p),
        None => Ok(SimConfig::default()),
    }
}

fn split_evenly(n: usize) -> [usize; 3] {
    [n / 3 + usize::from(!n.is_multiple_of(3)), n / 3 + usize::from(n % 3 > 1), n / 3]
}

fn simulate(mut cfg: SimConfig, a: SimulateArgs) -> anyhow::Result<()> {
    let s = &mut cfg.simulate;
    if let Some(v) = a.obstacle_width {
        s.obstacle_width = v;
    }
    if let Some(v) = a.obstacle_length {
        s.obstacle_length = v;
    }
    if let Some(v) = a.obstacle_pos {
        s.obstacle_pos = v;
    }
    if let Some(v) = a.speed {
        s.speed = v;
    }
    if let Some(v) = a.tier {
        s.tier = v;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.arch {
        s.arch = v.to_ascii_lowercase();
    }
    if let Some(v) = a.obstacle_lateral {
        cfg.obstacle_lateral_center = v;
    }
    cfg.validate()?;
    let s = &cfg.simulate;
    let obstacle = Obstacle { s_start: s.obstacle_pos, length: s.obstacle_length, width: s.obstacle_width, lateral_center: cfg.obstacle_lateral_center };
    let sc = Scenario::single(s.tier, s.speed, obstacle, s.seed);
    if !sc.is_passable(&cfg) {
        bail!("the obstacle leaves no room to pass on either side");
    }
    let archs: Vec<Arch> = match s.arch.as_str() {
        "both" => vec![Arch::Rsca, Arch::Sca],
        other => vec![other.parse().map_err(anyhow::Error::msg)?],
    };
    let cache = SynthesisCache::new();
    let syn_cfg = cfg.synthesis_config(sc.v_x, sc.tier);
    if let Some(p) = &a.cache {
        if cache.load_file(p)? != cache_key(&syn_cfg) {
            eprintln!("note: {} was synthesized for a different configuration; synthesizing afresh", p.display());
        }
    }
    let syn = cache.get_or_synthesize(&syn_cfg)?;
    let runs: Vec<_> = archs.iter().map(|&arch| run_scenario(&sc, &cfg, &syn, arch)).collect();
    for r in &runs {
        print!("{}", run_summary(&sc, r));
        println!();
    }
    if let Some(dir) = a.out {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in &runs {
            write_trace_csv(&dir.join(format!("trace_{}.csv", r.arch)), &r.trace)?;
            std::fs::write(dir.join(format!("summary_{}.txt", r.arch)), run_summary(&sc, r))?;
        }
        let sr = SafeReference::new(sc.side(&cfg), cfg.road_half_width, cfg.car_width, cfg.epsilon);
        let refs: Vec<_> = runs.iter().collect();
        write_plot_csv(&dir.join("plot.csv"), &plot_series(&sc, &cfg, &refs, sr.x_sr[0]))?;
        println!("wrote outputs to {}", dir.display());
    }
    Ok(())
}

fn batch(mut cfg: SimConfig, a: BatchArgs) -> anyhow::Result<()> {
    match (a.n, a.tiers) {
        (_, Some(t)) => {
            cfg.batch.tiers = [t[0], t[1], t[2]];
            cfg.batch.n = t.iter().sum();
            if let Some(n) = a.n {
                if n != cfg.batch.n {
                    bail!("--n {n} does not match --tiers total {}", cfg.batch.n);
                }
            }
        }
        (Some(n), None) => {
            cfg.batch.n = n;
            cfg.batch.tiers = split_evenly(n);
        }
        (None, None) => {}
    }
    if let Some(v) = a.seed {
        cfg.batch.seed = v;
    }
    if let Some(v) = a.workers {
        cfg.batch.workers = v;
    }
    let t = Instant::now();
    let out = run_batch(&cfg, &SynthesisCache::new())?;
    print!("{}", out.report.summary());
    println!("elapsed: {:.1} s", t.elapsed().as_secs_f64());
    if let Some(dir) = a.out {
        for p in write_batch(&dir, &out.report)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn synthesize_cmd(mut cfg: SimConfig, a: SynthesizeArgs) -> anyhow::Result<()> {
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.psi_bound {
        cfg.psi_bound = v;
    }
    cfg.validate()?;
    let speed = a.speed.unwrap_or(cfg.simulate.speed);
    let t = Instant::now();
    let syn = rsca_core::invariant_sets::synthesize(&cfg.synthesis_config(speed, a.tier))?;
    println!("tier {} v_x {speed} m/s: synthesized in {:.0} ms", a.tier, t.elapsed().as_secs_f64() * 1e3);
    println!("K = {:?}", syn.gain.k_gain);
    println!("Z: s = {}, alpha = {:.4}, {} rows, inclusion slack {:.3e}", syn.mrpi_s, syn.mrpi_alpha, syn.tubes.z.num_rows(), syn.z_slack);
    println!("terminal sets: top {} rows, bottom {} rows", syn.tubes.x_terminal_top.num_rows(), syn.tubes.x_terminal_bottom.num_rows());
    let us = syn.tubes.u_tight_supervisor.as_interval()?;
    let uc = syn.tubes.u_tight_controller.as_interval()?;
    println!("input bounds: supervisor [{:.4}, {:.4}], controller [{:.4}, {:.4}]", us.0, us.1, uc.0, uc.1);
    if let Some(p) = a.cache {
        std::fs::write(&p, to_text(&syn)).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn verify(cfg: SimConfig, a: VerifyArgs) -> anyhow::Result<()> {
    let checks = verify_sets(&cfg, &SynthesisCache::new(), &a.speeds, a.samples, a.seed)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        bail!("{failed} of {} set checks failed", checks.len());
    }
    println!("all {} set checks passed", checks.len());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Simulate(a) => simulate(cfg, a),
        Cmd::Batch(a) => batch(cfg, a),
        Cmd::Synthesize(a) => synthesize_cmd(cfg, a),
        Cmd::VerifySets(a) => verify(cfg, a),
        Cmd::PrintConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}
