use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use olrx::harness::{
    cmd_ber_sweep, cmd_continual, cmd_delay_model, cmd_gradcheck, cmd_offline_train,
    cmd_shift_recovery, prepare_out_dir, ExperimentConfig,
};

/// Link-level OFDM simulator with an online-fine-tuned neural receiver.
#[derive(Parser)]
#[command(name = "olrx", version)]
struct Cli {
    /// TOML configuration file; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// `section.key=value` override; repeatable.
    #[arg(long = "set", global = true)]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the receiver offline and write a checkpoint.
    OfflineTrain,
    /// BER versus SNR for the configured receivers.
    BerSweep,
    /// Fine-tune on a shifted distribution and evaluate per sample budget.
    ShiftRecovery,
    /// Run the drifting-channel adaptation loop.
    Continual,
    /// Check analytic gradients against finite differences.
    Gradcheck,
    /// Report the update cadence chosen by the delay model.
    DelayModel,
}

fn run(cli: Cli) -> olrx::Result<()> {
    let mut overrides = cli.set;
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    prepare_out_dir(&cli.out)?;
    let out = cli.out.as_path();
    let json = match cli.command {
        Command::OfflineTrain => {
            serde_json::to_string_pretty(&cmd_offline_train(&cfg, out)?.summary)
        }
        Command::BerSweep => serde_json::to_string_pretty(&cmd_ber_sweep(&cfg, out)?.outputs),
        Command::ShiftRecovery => {
            serde_json::to_string_pretty(&cmd_shift_recovery(&cfg, out)?.outputs)
        }
        Command::Continual => serde_json::to_string_pretty(&cmd_continual(&cfg, out)?.summary),
        Command::Gradcheck => serde_json::to_string_pretty(&cmd_gradcheck(&cfg, out)?.summary),
        Command::DelayModel => serde_json::to_string_pretty(&cmd_delay_model(&cfg, out)?.summary),
    };
    println!(
        "{}",
        json.map_err(|e| olrx::Error::InvalidState(e.to_string()))?
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
