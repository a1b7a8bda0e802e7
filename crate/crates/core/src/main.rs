//! Command-line front end: run one simulation or sweep a parameter grid.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use fedstack_core::config::{parse_ra, parse_sa, Scheme, SimConfig};
use fedstack_core::error::Error;
use fedstack_core::orchestrator::{run_simulation, SimRun};
use fedstack_core::output::write_outputs;

/// Round-based simulator for device scheduling, resource allocation, and
/// sub-channel matching in federated learning over a shared wireless cell.
#[derive(Debug, Parser)]
#[command(name = "fedstack", version, about)]
struct Cli {
    /// TOML config file; benchmark defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Scheduling scheme: aou|random|cluster|fixed.
    #[arg(long)]
    scheme: Option<String>,
    /// Per-pair allocation policy: mo (latency-minimal) | fix (tau=p=0.5).
    #[arg(long)]
    ra: Option<String>,
    /// Sub-channel assignment policy: match (exchange-stable) | random.
    #[arg(long)]
    sa: Option<String>,
    /// Number of communication rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter grid "name=v1,v2,..." (repeatable; grids combine).
    ///
    /// Sweepable: e_max, transmit_power, disc_radius, bandwidth,
    /// num_devices, num_subchannels, total_samples.
    #[arg(long = "sweep")]
    sweeps: Vec<String>,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<(), Error> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => SimConfig::from_path(path)?,
        None => SimConfig::default(),
    };
    apply_overrides(&mut cfg, &cli)?;
    cfg.normalize();
    cfg.validate()?;

    if cli.sweeps.is_empty() {
        let run = run_simulation(&cfg)?;
        let out_dir = PathBuf::from(&cfg.out_dir);
        write_outputs(&run, cfg.system.num_devices, &out_dir)?;
        print_run_line(&run, &out_dir);
        return Ok(());
    }

    let axes: Vec<SweepAxis> = cli.sweeps.iter().map(|s| parse_sweep(s)).collect::<Result<_, _>>()?;
    run_sweep(&cfg, &axes)
}

fn apply_overrides(cfg: &mut SimConfig, cli: &Cli) -> Result<(), Error> {
    if let Some(seed) = cli.seed {
        cfg.system.rng_seed = seed;
    }
    if let Some(scheme) = &cli.scheme {
        cfg.scheme.scheme = Scheme::parse(scheme)?;
        if cfg.scheme.scheme != Scheme::Fixed {
            cfg.scheme.fixed_set = None;
        }
    }
    if let Some(ra) = &cli.ra {
        cfg.scheme.policy.ra = parse_ra(ra)?;
    }
    if let Some(sa) = &cli.sa {
        cfg.scheme.policy.sa = parse_sa(sa)?;
    }
    if let Some(rounds) = cli.rounds {
        cfg.rounds = rounds;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok(())
}

fn print_run_line(run: &SimRun, out_dir: &Path) {
    println!(
        "scheme={} seed={} rounds={} final_loss={} cum_time_s={} out={}",
        run.summary.scheme,
        run.summary.seed,
        run.summary.rounds,
        run.summary.final_loss,
        run.summary.cumulative_time,
        out_dir.display()
    );
}

struct SweepAxis {
    param: String,
    values: Vec<f64>,
}

fn parse_sweep(text: &str) -> Result<SweepAxis, Error> {
    let (param, grid) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep {text:?}: expected name=v1,v2,...")))?;
    let values: Vec<f64> = grid
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("sweep {param}: bad value {v:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(Error::Config(format!("sweep {param}: empty grid")));
    }
    let axis = SweepAxis { param: param.trim().to_string(), values };
    // Fail fast on unknown names before any run starts.
    let mut probe = SimConfig::default();
    apply_param(&mut probe, &axis.param, axis.values[0])?;
    Ok(axis)
}

fn as_count(param: &str, v: f64) -> Result<usize, Error> {
    if v.fract() != 0.0 || v < 0.0 || v > usize::MAX as f64 {
        return Err(Error::Config(format!("sweep {param}: {v} is not a device/sample count")));
    }
    Ok(v as usize)
}

fn apply_param(cfg: &mut SimConfig, param: &str, v: f64) -> Result<(), Error> {
    match param {
        "e_max" => cfg.system.energy_budget = v,
        "transmit_power" => cfg.system.transmit_power = v,
        "disc_radius" => cfg.system.disc_radius = v,
        "bandwidth" => {
            // Keep the configured noise *density* fixed when the band
            // widens: total noise scales with bandwidth.
            let density = cfg.system.noise_variance / cfg.system.bandwidth;
            cfg.system.bandwidth = v;
            cfg.system.noise_variance = density * v;
        }
        "num_devices" => cfg.system.num_devices = as_count(param, v)?,
        "num_subchannels" => cfg.system.num_subchannels = as_count(param, v)?,
        "total_samples" => cfg.task.total_samples = as_count(param, v)?,
        other => {
            return Err(Error::Config(format!(
                "sweep parameter {other:?} is not recognized (try e_max, transmit_power, \
                 disc_radius, bandwidth, num_devices, num_subchannels, total_samples)"
            )));
        }
    }
    Ok(())
}

fn run_sweep(base: &SimConfig, axes: &[SweepAxis]) -> Result<(), Error> {
    let parent = PathBuf::from(&base.out_dir);
    std::fs::create_dir_all(&parent).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", parent.display())))
    })?;
    let mut table = String::new();
    for axis in axes {
        table.push_str(&axis.param);
        table.push(',');
    }
    table.push_str("final_loss,cumulative_time_s,mean_participants,out_dir\n");

    // Odometer over the grid product, first axis slowest.
    let mut index = vec![0usize; axes.len()];
    loop {
        let mut cfg = base.clone();
        let mut tags = Vec::with_capacity(axes.len());
        for (axis, &i) in axes.iter().zip(&index) {
            apply_param(&mut cfg, &axis.param, axis.values[i])?;
            tags.push(format!("{}-{}", axis.param, axis.values[i]));
        }
        cfg.normalize();
        cfg.validate()?;
        let sub = parent.join(tags.join("_"));
        cfg.out_dir = sub.display().to_string();
        let run = run_simulation(&cfg)?;
        write_outputs(&run, cfg.system.num_devices, &sub)?;
        print_run_line(&run, &sub);

        let mean_participants = if run.summary.participant_series.is_empty() {
            0.0
        } else {
            run.summary.participant_series.iter().sum::<usize>() as f64
                / run.summary.participant_series.len() as f64
        };
        for (axis, &i) in axes.iter().zip(&index) {
            table.push_str(&format!("{},", axis.values[i]));
        }
        table.push_str(&format!(
            "{},{},{},{}\n",
            run.summary.final_loss,
            run.summary.cumulative_time,
            mean_participants,
            sub.display()
        ));

        // Advance the odometer; stop after the last combination.
        let mut pos = axes.len();
        loop {
            if pos == 0 {
                let path = parent.join("sweep.csv");
                std::fs::write(&path, &table).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
                })?;
                println!("sweep table: {}", path.display());
                return Ok(());
            }
            pos -= 1;
            index[pos] += 1;
            if index[pos] < axes[pos].values.len() {
                break;
            }
            index[pos] = 0;
        }
    }
}
