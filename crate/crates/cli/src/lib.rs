//! Command-line front end: `simulate`, `train`, `recon` and `eval`.

mod args;
mod eval;
mod recon;

use std::path::Path;

use clap::Parser;
use mrdc::cascade::{CascadeConfig, CascadeModel};
use mrdc::data::{read_dataset, simulate_dataset, write_dataset, DatasetRecord, SimulationConfig};
use mrdc::training::{self, save_checkpoint, TrainConfig};
use mrdc::{Error, Result};

pub use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parses `args` (program name first) and runs the subcommand.
pub fn run_cli<S: AsRef<str>>(args: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(args.iter().map(|s| s.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let threads = match std::env::var("MRDC_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("error: MRDC_THREADS must be a positive integer, got {v:?}");
                return EXIT_USAGE;
            }
        },
        Err(_) => None,
    };
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::InvalidConfig(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Recon(a) => recon::run(a),
        Command::Eval(a) => eval::run(a),
    }
}

fn simulate(a: args::SimulateArgs) -> Result<()> {
    let (height, width) = a.size;
    let config = SimulationConfig {
        height,
        width,
        n_coil: a.coils,
        records: a.records,
        noise_sigma: a.noise,
        seed: a.seed,
        protocols: a.protocols,
        af: a.af,
        calib: a.calib,
    };
    let mut records = simulate_dataset(&config)?;
    // What is kept in memory is exactly what lands on disk.
    records.iter_mut().for_each(DatasetRecord::quantize_to_f32);
    write_dataset(&records, &a.out)?;
    println!("wrote {} records ({height}x{width}, {} coils) to {}", records.len(), a.coils, a.out.display());
    Ok(())
}

fn load_records(dir: &Path) -> Result<Vec<DatasetRecord>> {
    let records = read_dataset(dir)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("no records under {}", dir.display())));
    }
    Ok(records)
}

fn common_shape(records: &[DatasetRecord]) -> Result<(usize, usize, usize)> {
    let first = &records[0];
    let shape = (first.n_coil(), first.dims().0, first.dims().1);
    for r in records {
        if (r.n_coil(), r.dims().0, r.dims().1) != shape {
            return Err(Error::ShapeMismatch(format!(
                "record {} is {} coils x {:?}, record {} is {} coils x {:?}",
                first.id,
                shape.0,
                first.dims(),
                r.id,
                r.n_coil(),
                r.dims()
            )));
        }
    }
    Ok(shape)
}

fn train(a: args::TrainArgs) -> Result<()> {
    let records = load_records(&a.data)?;
    let (n_coil, height, width) = common_shape(&records)?;
    let config = CascadeConfig {
        n_c: a.nc,
        n_d: a.nd,
        n_filters: a.filters,
        dilation: a.dilation,
        n_coil,
        height,
        width,
        shared_lambda: a.shared_lambda,
        ..CascadeConfig::desk(a.variant)
    };
    let mut model = CascadeModel::new(config, a.seed)?;
    let tc = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        loss: a.loss,
        precision: a.precision,
        af: a.af,
        calib: a.calib,
        resample_masks: a.resample_masks,
        checkpoint: Some(a.out.clone()),
        checkpoint_every: a.checkpoint_every,
        dump: Some(a.out.with_extension("nan-dump")),
        verbose: !a.quiet,
    };
    let report = training::train(&mut model, &records, &tc)?;
    save_checkpoint(&a.out, &model, a.precision, a.epochs, a.seed)?;
    if let Some(path) = &a.loss_log {
        let json = serde_json::json!({
            "epoch_losses": report.epoch_losses,
            "step_losses": report.step_losses,
        });
        std::fs::write(path, serde_json::to_vec_pretty(&json).expect("finite losses"))
            .map_err(|e| Error::Io { path: path.clone(), source: e })?;
    }
    let lambdas: Vec<String> = model.lambdas().iter().map(|l| format!("{l:.4}")).collect();
    println!(
        "trained {} on {} records for {} epochs; final epoch loss {:.6e}; lambda [{}]; checkpoint {}",
        model.variant().display_name(),
        records.len(),
        a.epochs,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        lambdas.join(", "),
        a.out.display()
    );
    Ok(())
}
