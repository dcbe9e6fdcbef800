use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use razor_core::config::{DeriveMode, Overrides, RunConfig};
use razor_core::pipeline;

/// Embedding dimension search for CTR models.
#[derive(Parser)]
#[command(name = "razor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted informative fields.
    GenData(Common),
    /// Pretrain the relaxed model and write a checkpoint.
    Pretrain(Common),
    /// Derive an input configuration from a checkpoint.
    Derive {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to read; defaults to the one in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Retrain the pruned model and report test metrics.
    RetrainEval {
        #[command(flatten)]
        common: Common,
        /// Input configuration to read; defaults to the one in the output
        /// directory.
        #[arg(long)]
        input_config: Option<PathBuf>,
    },
    /// Run every stage in sequence.
    Pipeline(Common),
}

/// Flags shared by every command. They override keys from `--config`.
#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cpt: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Candidate dimensions, e.g. "0,1,2,4,8".
    #[arg(long)]
    space: Option<String>,
    #[arg(long, value_parser = ["cpt", "argmax"])]
    derive_mode: Option<String>,
    /// Remove the 0 candidate from the search space.
    #[arg(long)]
    no_zero_dim: bool,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> razor_core::Result<RunConfig> {
        let derive_mode = self
            .derive_mode
            .as_deref()
            .map(str::parse::<DeriveMode>)
            .transpose()?;
        let overrides = Overrides {
            seed: self.seed,
            cpt: self.cpt,
            lambda: self.lambda,
            tau: self.tau,
            space: self.space.clone(),
            derive_mode,
            no_zero_dim: self.no_zero_dim,
            out: self.out.clone(),
        };
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

fn run(command: Command) -> razor_core::Result<()> {
    match command {
        Command::GenData(c) => {
            let roles = pipeline::cmd_gen_data(&c.resolve()?)?;
            println!("informative fields: {:?}", roles.informative);
        }
        Command::Pretrain(c) => {
            let ckpt = pipeline::cmd_pretrain(&c.resolve()?)?;
            if let Some(last) = ckpt.state.log.last() {
                println!(
                    "epochs {} loss {:.5} L_p {:.4}",
                    ckpt.state.epochs_done, last.mean_loss, last.lp
                );
            }
        }
        Command::Derive { common, checkpoint } => {
            let config = pipeline::cmd_derive(&common.resolve()?, checkpoint.as_deref())?;
            for e in &config.entries {
                println!("{}\t{}", e.name, e.dim);
            }
        }
        Command::RetrainEval {
            common,
            input_config,
        } => {
            let report = pipeline::cmd_retrain_eval(&common.resolve()?, input_config.as_deref())?;
            print_report(&report);
        }
        Command::Pipeline(c) => print_report(&pipeline::cmd_pipeline(&c.resolve()?)?),
    }
    Ok(())
}

fn print_report(r: &pipeline::RunReport) {
    let auc = r
        .auc
        .map_or_else(|| "undefined".to_owned(), |a| format!("{a:.6}"));
    println!(
        "auc {auc} logloss {:.6} fields {} dims {} params {}",
        r.logloss, r.fields, r.dims, r.params
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
