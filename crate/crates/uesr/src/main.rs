use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uesr::env::{create_env, render_ascii, Action, LayoutVariant};
use uesr::harness::{emit_plots, evaluate, train, transfer, ExperimentConfig};
use uesr::rng::Rng;
use uesr::verify::run_gradient_battery;

#[derive(Parser)]
#[command(
    name = "uesr",
    about = "Warehouse multi-agent RL workbench with unexpectedness-encoding communication",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents per a config file.
    Train {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fine-tune a checkpoint on a shifted layout for a few batches of
    /// episodes, then report deliveries per episode.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target layout: training | goal_shift | shelf_shift.
        #[arg(long)]
        variant: String,
        /// Fine-tuning batches; 0 means zero-shot evaluation.
        #[arg(long, default_value_t = 10)]
        batches: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Episodes used when --batches is 0.
        #[arg(long, default_value_t = 100)]
        zero_shot_episodes: u64,
    },
    /// Evaluate a checkpoint with frozen parameters.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "training")]
        variant: String,
        #[arg(long, default_value_t = 100)]
        episodes: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the gradient verification battery.
    GradCheck,
    /// Print random-action rollouts of a layout as ASCII frames.
    Render {
        #[arg(long, default_value = "training")]
        variant: String,
        #[arg(long, default_value_t = 5)]
        steps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Build a learning-curve SVG from metrics CSVs.
    Plot {
        /// Metrics CSV files (grouped by their scheme tag).
        csvs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out_dir: PathBuf,
    },
}

fn parse_variant(name: &str) -> Result<LayoutVariant, String> {
    LayoutVariant::from_name(name)
        .ok_or_else(|| format!("unknown variant {name:?} (training | goal_shift | shelf_shift)"))
}

fn run() -> Result<(), String> {
    match Cli::parse().command {
        Command::Train { config, seed } => {
            let mut cfg = ExperimentConfig::from_file(&config).map_err(|e| e.to_string())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            println!(
                "training scheme={} layout={} seed={} steps={}",
                cfg.scheme.name(),
                cfg.layout.name(),
                cfg.seed,
                cfg.total_env_steps
            );
            let out = train(&cfg).map_err(|e| e.to_string())?;
            println!(
                "done: {} env steps, {} episodes, {} updates in {:.1}s",
                out.env_steps, out.episodes_completed, out.updates_performed, out.wall_clock_s
            );
            println!(
                "final deliveries/episode (cumulative) = {:.4}",
                out.final_deliveries_per_episode
            );
            println!(
                "best window deliveries/episode = {:.4} at env step {}",
                out.best_window_deliveries, out.best_window_step
            );
            if let Some(p) = out.checkpoint_path {
                println!("checkpoint: {}", p.display());
            }
            if let Some(p) = out.best_checkpoint_path {
                if p.exists() {
                    println!("best checkpoint: {}", p.display());
                }
            }
            Ok(())
        }
        Command::Transfer {
            checkpoint,
            variant,
            batches,
            seed,
            zero_shot_episodes,
        } => {
            let variant = parse_variant(&variant)?;
            let out = transfer(&checkpoint, variant, batches, seed, zero_shot_episodes)
                .map_err(|e| e.to_string())?;
            if out.zero_shot {
                println!(
                    "zero-shot on {}: {:.4} deliveries/episode over {} episodes",
                    variant.name(),
                    out.deliveries_per_episode,
                    out.episodes
                );
            } else {
                println!(
                    "transfer to {}: {} updates over {} episodes ({} env steps)",
                    variant.name(),
                    out.updates_performed,
                    out.episodes,
                    out.env_steps
                );
                println!(
                    "cumulative deliveries/episode during fine-tuning = {:.4}",
                    out.deliveries_per_episode
                );
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            variant,
            episodes,
            seed,
        } => {
            let variant = parse_variant(&variant)?;
            let out =
                evaluate(&checkpoint, variant, episodes, seed).map_err(|e| e.to_string())?;
            println!(
                "eval on {}: mean {:.4} +/- {:.4} deliveries/episode over {} episodes",
                variant.name(),
                out.mean_deliveries,
                out.std_deliveries,
                out.episodes
            );
            Ok(())
        }
        Command::GradCheck => {
            let results = run_gradient_battery();
            let mut all_ok = true;
            for r in &results {
                println!("{r}");
                all_ok &= r.passed();
            }
            if all_ok {
                println!("all {} gradient checks passed", results.len());
                Ok(())
            } else {
                Err("gradient checks failed".into())
            }
        }
        Command::Render {
            variant,
            steps,
            seed,
        } => {
            let variant = parse_variant(&variant)?;
            let mut env = create_env(variant, seed);
            let mut rng = Rng::derive(seed, "render-actions");
            println!("{}", render_ascii(&env));
            for t in 0..steps {
                if env.episode_done() {
                    env.reset_episode();
                    println!("--- episode reset ---");
                }
                let actions: Vec<Action> = (0..env.agents.len())
                    .map(|_| Action::from_index(rng.range(Action::COUNT)))
                    .collect();
                env.step(&actions).map_err(|e| e.to_string())?;
                println!("step {}:\n{}", t + 1, render_ascii(&env));
            }
            Ok(())
        }
        Command::Plot { csvs, out_dir } => {
            if csvs.is_empty() {
                return Err("no metrics CSVs given".into());
            }
            let files = emit_plots(&csvs, &out_dir).map_err(|e| e.to_string())?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
