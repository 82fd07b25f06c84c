use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bplight_cli::checkpoint::Checkpoint;
use bplight_cli::record::append_runs_csv;
use bplight_cli::runner::{perf_for, run_infer, run_train};
use bplight_cli::spec::{DataSource, ExperimentSpec};
use bplight_cli::sweep::{noise_audit, run_sweep, SweepAxis, SweepPhase};
use bplight_cli::{CliError, Result};
use bplight_core::arch::{preset, resolve, serialize_config, PRESET_NAMES};
use bplight_core::device::DeviceParams;
use bplight_core::oracle::{InitScheme, TrainingParams};
use bplight_core::perf::Phase;
use bplight_core::train::Mode;
use clap::{Args, Parser, Subcommand, ValueEnum};

const RUNS_CSV: &str = "runs.csv";

#[derive(Parser)]
#[command(name = "bplight", version, about = "Train, sweep and profile CNNs on a simulated memristor/photonic accelerator")]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for run records, checkpoints and CSV tables.
    #[arg(long, global = true, env = "BPLIGHT_OUT", default_value = "runs")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write its run record and checkpoint.
    Train {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        device: DeviceArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a checkpoint on the test split.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        device: DeviceArgs,
        /// Seed for evaluation noise.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run one experiment per axis value over shared seeds.
    Sweep {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        device: DeviceArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values, kept in the given order.
        #[arg(long)]
        values: String,
        /// Comma-separated training seeds.
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        /// `infer` trains once per seed and evaluates under each value;
        /// `train` retrains under each value.
        #[arg(long, value_enum, default_value_t = PhaseArg::Infer)]
        phase: PhaseArg,
    },
    /// Print and write latency, throughput, power, area and efficiency.
    Perf {
        #[arg(long, default_value = "VGG-A")]
        net: String,
        /// Square input extent in pixels.
        #[arg(long)]
        image: Option<usize>,
        #[arg(long, value_enum, default_value_t = PerfPhase::Both)]
        phase: PerfPhase,
        #[command(flatten)]
        device: DeviceArgs,
    },
    /// Inference from a checkpoint with each noise source alone, none and all.
    NoiseAudit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        device: DeviceArgs,
        /// Comma-separated evaluation seeds.
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
    },
    /// List the built-in networks, or print one in config form.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Args)]
struct NetArgs {
    /// Preset name or config file path. A config's `[device]` section is applied.
    #[arg(long, default_value = "LeNet-A")]
    net: String,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding IDX image and label files, plain or gzipped.
    #[arg(long, env = "BPLIGHT_DATA", default_value = "data/mnist-subset")]
    data: PathBuf,
    /// Use a seeded synthetic set instead of files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    test: usize,
    #[arg(long, default_value_t = 7)]
    subset_seed: u64,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        if self.synthetic {
            DataSource::Synthetic {
                train: self.train,
                test: self.test,
                seed: self.subset_seed,
            }
        } else {
            DataSource::Idx {
                dir: self.data.clone(),
                train: self.train,
                test: self.test,
                subset_seed: self.subset_seed,
            }
        }
    }
}

#[derive(Args)]
struct DeviceArgs {
    /// DAC and ADC resolution.
    #[arg(long)]
    bits: Option<u32>,
    /// Device parameter override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl DeviceArgs {
    fn apply(&self, dev: &mut DeviceParams) -> Result<()> {
        if let Some(bits) = self.bits {
            dev.set_resolution(bits);
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::invalid(format!("`--set {kv}` is not KEY=VALUE")))?;
            dev.set(k.trim(), v.trim())?;
        }
        dev.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Analog)]
    mode: ModeArg,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ideal,
    Analog,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Bits,
    PropLoss,
    Noise,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Infer,
    Train,
}

#[derive(Clone, Copy, ValueEnum)]
enum PerfPhase {
    Training,
    Inference,
    Both,
}

/// Network plus the device it implies: defaults, then the config's
/// `[device]` section, then command-line overrides.
fn network_and_device(net: &str, device: &DeviceArgs) -> Result<(bplight_core::arch::NetworkConfig, DeviceParams)> {
    let network = resolve(net)?;
    let mut dev = DeviceParams::default();
    if preset(net).is_err() {
        let text = std::fs::read_to_string(net).map_err(|e| CliError::io(net, e))?;
        dev.apply_config(&text)?;
    }
    device.apply(&mut dev)?;
    Ok((network, dev))
}

fn build_spec(net: &NetArgs, data: &DataArgs, device: &DeviceArgs, train: &TrainArgs) -> Result<ExperimentSpec> {
    let (network, dev) = network_and_device(&net.net, device)?;
    let spec = ExperimentSpec {
        net: net.net.clone(),
        network,
        mode: match train.mode {
            ModeArg::Ideal => Mode::Ideal,
            ModeArg::Analog => Mode::Analog,
        },
        device: dev,
        training: TrainingParams {
            learning_rate: train.lr,
            batch_size: train.batch,
            epochs: train.epochs,
            seed: train.seed,
        },
        init: InitScheme::default(),
        data: data.source(),
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| CliError::invalid(format!("`{v}` is not a seed"))))
        .collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(CliError::invalid("at least one seed is required"));
    }
    Ok(seeds)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let out = &cli.out;
    let ensure_out = || std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e));
    match cli.command {
        Command::Train {
            net,
            data,
            device,
            train,
        } => {
            let spec = build_spec(&net, &data, &device, &train)?;
            let run = run_train(&spec)?;
            ensure_out()?;
            let json = run.record.write_json(out)?;
            let ckpt = out.join(format!("{}.ckpt", run.record.run_id));
            run.checkpoint().save(&ckpt)?;
            append_runs_csv(&out.join(RUNS_CSV), std::slice::from_ref(&run.record))?;
            println!("test accuracy {:.4}", run.record.test_accuracy);
            println!("record     {}", json.display());
            println!("checkpoint {}", ckpt.display());
        }
        Command::Infer {
            checkpoint,
            data,
            device,
            seed,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let mut dev = ck.header.spec.device.clone();
            device.apply(&mut dev)?;
            let record = run_infer(&ck, &dev, &data.source(), seed)?;
            ensure_out()?;
            let json = record.write_json(out)?;
            append_runs_csv(&out.join(RUNS_CSV), std::slice::from_ref(&record))?;
            println!("test accuracy {:.4}", record.test_accuracy);
            println!("record {}", json.display());
        }
        Command::Sweep {
            net,
            data,
            device,
            train,
            axis,
            values,
            seeds,
            phase,
        } => {
            let spec = build_spec(&net, &data, &device, &train)?;
            let axis_name = match axis {
                AxisArg::Bits => "bits",
                AxisArg::PropLoss => "prop-loss",
                AxisArg::Noise => "noise",
            };
            let axis = SweepAxis::parse(axis_name, &values)?;
            let phase = match phase {
                PhaseArg::Infer => SweepPhase::Infer,
                PhaseArg::Train => SweepPhase::Train,
            };
            let outcome = run_sweep(&spec, &axis, &parse_seeds(&seeds)?, phase)?;
            ensure_out()?;
            for r in &outcome.records {
                r.write_json(out)?;
            }
            append_runs_csv(&out.join(RUNS_CSV), &outcome.records)?;
            let stem = format!("sweep-{}-{}", axis.name(), &spec.hash()[..12]);
            let csv_path = out.join(format!("{stem}.csv"));
            outcome.summary.write_csv(&csv_path)?;
            write_json(&out.join(format!("{stem}.json")), &outcome.summary)?;
            println!("{:>8}  {:>6}  {:>8}  verdict", axis.name(), "failed", "mean");
            for row in &outcome.summary.rows {
                let mean = row.mean_accuracy.map_or("-".into(), |m| format!("{m:.4}"));
                println!("{:>8}  {:>6}  {:>8}  {}", row.value, row.failed, mean, row.step_verdict);
            }
            for f in &outcome.failures {
                eprintln!("failed: {} = {}, seed {}: {}", axis.name(), f.value, f.seed, f.error);
            }
            println!(
                "trend {} {}",
                outcome.summary.trend.as_str(),
                if outcome.summary.trend_holds { "holds" } else { "violated" }
            );
            println!("summary {}", csv_path.display());
        }
        Command::Perf {
            net,
            image,
            phase,
            device,
        } => {
            let (mut network, dev) = network_and_device(&net, &device)?;
            if let Some(px) = image {
                network = network.with_image(px, px);
            }
            let phases: &[Phase] = match phase {
                PerfPhase::Training => &[Phase::Training],
                PerfPhase::Inference => &[Phase::Inference],
                PerfPhase::Both => &Phase::ALL,
            };
            let reports = phases
                .iter()
                .map(|&p| perf_for(&network, &dev, p))
                .collect::<Result<Vec<_>>>()?;
            for r in &reports {
                println!("{} {} {}x{} at {} bits", r.net, r.phase.as_str(), r.image[0], r.image[1], r.resolution_bits);
                println!("  forward latency   {:.3} ns", r.forward_latency_ns);
                println!("  backward latency  {} ps", r.backward_latency_ps);
                println!("  interval          {:.3} ns", r.interval_ns);
                println!("  ops per sample    {}", r.op_count);
                println!("  throughput        {:.6e} GOPS/s", r.throughput_gops);
                println!("  power             {:.6} W", r.power_w);
                println!("  area              {:.6} mm2", r.area_mm2);
                println!("  energy efficiency {:.6e} GOPS/s/W", r.energy_eff_gops_per_w);
                println!("  comp efficiency   {:.6e} GOPS/s/mm2", r.comp_eff_gops_per_mm2);
                let c = &r.comparison;
                println!(
                    "  vs baseline       throughput x{:.1} (claimed x{}), versus GPU x{:.1} (claimed x{})",
                    c.throughput_vs_pipelayer,
                    c.baseline.claimed_vs_pipelayer,
                    c.throughput_vs_gpu,
                    c.baseline.claimed_vs_gpu
                );
                println!("  claimed averages  {} GOPS/s", c.baseline.claimed_gops);
            }
            ensure_out()?;
            let path = out.join(format!(
                "perf-{}-{}x{}-{}b.json",
                network.name, network.input[1], network.input[2], reports[0].resolution_bits
            ));
            write_json(&path, &reports)?;
            println!("report {}", path.display());
        }
        Command::NoiseAudit {
            checkpoint,
            data,
            device,
            seeds,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let mut dev = ck.header.spec.device.clone();
            device.apply(&mut dev)?;
            let (_, test) = data.source().load(&ck.header.spec.network)?;
            let audit = noise_audit(&ck, &dev, &test, &parse_seeds(&seeds)?)?;
            ensure_out()?;
            let stem = format!("noise-audit-{}", &ck.header.spec_hash[..12]);
            audit.write_csv(&out.join(format!("{stem}.csv")))?;
            write_json(&out.join(format!("{stem}.json")), &audit)?;
            println!("ideal reference accuracy {:.4}", audit.ideal_accuracy);
            println!("{:>12}  {:>8}  {:>9}  {:>12}", "setting", "accuracy", "delta pp", "published pp");
            for r in &audit.rows {
                let published = r.published_pp.map_or("-".into(), |p| p.to_string());
                println!("{:>12}  {:>8.4}  {:>9.3}  {:>12}", r.setting, r.mean_accuracy, r.delta_pp, published);
            }
            println!("table {}", out.join(format!("{stem}.csv")).display());
        }
        Command::Presets { show } => match show {
            Some(name) => print!("{}", serialize_config(&preset(&name)?)),
            None => {
                for name in PRESET_NAMES {
                    let cfg = preset(name)?;
                    println!(
                        "{name:<8} input {}x{}x{}, {} conv layers, {} fc layers",
                        cfg.input[0],
                        cfg.input[1],
                        cfg.input[2],
                        cfg.conv_layer_count(),
                        cfg.dense_widths().len()
                    );
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(bplight_cli::error::exit::RUNTIME);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
