//! Repository node daemon: serves the OAI-PMH, SWORD, PID and content
//! endpoints on one listener and runs the peer-sync scheduler.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use lago_core::clock::{Shutdown, SystemClock};
use lago_core::federation::NodeConfig;
use lago_core::node::Node;
use lago_core::wire::HttpTransport;

#[derive(Parser)]
#[command(name = "lago-node", about = "LAGO data-repository node", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the node until interrupted.
    Serve {
        /// Config TOML; falls back to $LAGO_NODE_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Validate a config file and print the resolved identity.
    Check {
        /// Config TOML; falls back to $LAGO_NODE_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { config } => serve(config),
        Command::Check { config } => check(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn config_path(flag: Option<PathBuf>) -> Result<PathBuf, String> {
    flag.or_else(|| std::env::var_os("LAGO_NODE_CONFIG").map(PathBuf::from))
        .ok_or_else(|| "no config: pass --config or set LAGO_NODE_CONFIG".to_string())
}

fn check(flag: Option<PathBuf>) -> Result<(), String> {
    let path = config_path(flag)?;
    let config = NodeConfig::load(&path).map_err(|e| e.to_string())?;
    println!(
        "config ok: node {:?} binding {} with {} peer(s), data in {}",
        config.node_name,
        config.http_bind,
        config.peers.len(),
        config.data_dir.display()
    );
    Ok(())
}

fn serve(flag: Option<PathBuf>) -> Result<(), String> {
    let path = config_path(flag)?;
    let config = NodeConfig::load(&path).map_err(|e| e.to_string())?;
    let node = Node::open(
        config,
        Arc::new(SystemClock),
        Arc::new(HttpTransport::default()),
    )
    .map_err(|e| e.to_string())?;

    let shutdown = Shutdown::new();
    let signal_hook = shutdown.clone();
    ctrlc::set_handler(move || {
        eprintln!("shutdown requested, finishing in-flight work");
        signal_hook.signal();
    })
    .map_err(|e| e.to_string())?;

    eprintln!(
        "node {:?} listening on {} ({} peer(s))",
        node.config().node_name,
        node.config().http_bind,
        node.config().peers.len(),
    );
    node.serve(&shutdown).map_err(|e| e.to_string())
}
