//! Bulk ingest/export tool: scan a CSV manifest into SAF packages,
//! deposit a SAF tree against a node over SWORD, or export a node's
//! records back to SAF.
//!
//! Exit codes: 0 success, 1 partial failure, 2 usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lago_core::clock::SystemClock;
use lago_core::ingest::{
    build_saf, bulk_deposit, bulk_export, scan_manifest, BatchReport, BulkDepositOptions,
    BulkExportOptions, ItemStatus,
};
use lago_core::metadata::LagoProfile;
use lago_core::wire::HttpTransport;

#[derive(Parser)]
#[command(
    name = "lago-ingest",
    about = "Batch SAF build, deposit and export for LAGO repository nodes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a CSV manifest and build one SAF package per valid row.
    Scan {
        /// Manifest CSV (sourcePath,title,dateIssued,type,site,detector,rcut,altitude[,extra...])
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the SAF tree (must be empty or absent).
        #[arg(long)]
        out: PathBuf,
        /// Profile TOML overriding the built-in default.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Deposit every SAF package in a directory over SWORD.
    Deposit {
        /// Directory holding item_NNNN package directories.
        #[arg(long)]
        saf: PathBuf,
        /// Node base URL, e.g. `http://repo.site:8080`
        #[arg(long)]
        endpoint: String,
        /// Target collection id.
        #[arg(long)]
        collection: String,
        /// Deposit bearer token.
        #[arg(long)]
        token: String,
        /// Concurrent deposits.
        #[arg(long, default_value_t = 4)]
        parallel: usize,
    },
    /// Export a node's records (and bitstreams) to a SAF tree.
    Export {
        /// Node base URL.
        #[arg(long)]
        endpoint: String,
        /// Restrict to one set, e.g. local:data
        #[arg(long)]
        set: Option<String>,
        /// Only records with datestamp >= this UTC instant
        /// (YYYY-MM-DDThh:mm:ssZ).
        #[arg(long)]
        from: Option<String>,
        /// Output directory (must be empty or absent).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let transport = HttpTransport::default();
    let clock = SystemClock;

    match cli.command {
        Command::Scan {
            manifest,
            out,
            profile,
        } => {
            let profile = match profile {
                Some(path) => LagoProfile::load(&path).map_err(|e| e.to_string())?,
                None => LagoProfile::default_profile(),
            };
            let report = scan_manifest(&manifest, &profile).map_err(|e| e.to_string())?;
            for row_error in &report.row_errors {
                eprintln!("row {}: excluded: {}", row_error.row, row_error.message);
            }
            let dirs = build_saf(&report.descriptors, &out).map_err(|e| e.to_string())?;
            println!(
                "built {} package(s) under {} ({} row(s) excluded)",
                dirs.len(),
                out.display(),
                report.row_errors.len()
            );
            Ok(if report.row_errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Deposit {
            saf,
            endpoint,
            collection,
            token,
            parallel,
        } => {
            let options = BulkDepositOptions {
                endpoint,
                collection,
                token,
                parallelism: parallel.max(1),
            };
            let report =
                bulk_deposit(&transport, &clock, &saf, &options).map_err(|e| e.to_string())?;
            print_batch(&report);
            Ok(exit_for(&report))
        }
        Command::Export {
            endpoint,
            set,
            from,
            out,
        } => {
            let from = match from {
                Some(text) => Some(text.parse().map_err(|e| format!("--from: {e}"))?),
                None => None,
            };
            let options = BulkExportOptions {
                endpoint,
                set,
                from,
            };
            let report =
                bulk_export(&transport, &clock, &options, &out).map_err(|e| e.to_string())?;
            print_batch(&report);
            Ok(exit_for(&report))
        }
    }
}

fn print_batch(report: &BatchReport) {
    for outcome in &report.per_item {
        let name = outcome
            .package_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| outcome.package_dir.display().to_string());
        match &outcome.status {
            ItemStatus::Deposited { item_uuid, pid } => println!(
                "{name}\tdeposited\t{item_uuid}\t{}",
                pid.as_deref().unwrap_or("-")
            ),
            ItemStatus::Exported => println!("{name}\texported"),
            ItemStatus::Skipped { item_uuid, .. } => {
                println!("{name}\tskipped (already deposited as {item_uuid})")
            }
            ItemStatus::Failed { error } => println!("{name}\tfailed\t{error}"),
        }
    }
    println!(
        "totals: {} succeeded, {} failed, {} skipped in {:.1?}",
        report.succeeded, report.failed, report.skipped, report.elapsed
    );
}

fn exit_for(report: &BatchReport) -> ExitCode {
    if report.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
