// SPDX-License-Identifier: Apache-2.0

//! Command-line front end over the `bsnn` library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use bsnn::elaborator::{elaborate, emit_hdl, estimate_resources};
use bsnn::harness::{
    self, read_observations, scaling_csv, sweep_scaling, window_duration, write_observations, ExperimentConfig,
    Observations,
};
use bsnn::netgen::{adjacency_matrices, generate, ConnectivityParams, GridDims, NetworkSpec};
use bsnn::neuroblocks::{BlockConfig, DelayModel};
use bsnn::readout::{evaluate, train, Checkpoint, EncodingMode, TrainConfig};
use bsnn::shd;
use bsnn::spikeio::{probe_labels, RasterWindow, Server, ServerConfig, SpikeEvent};

type Res = Result<(), Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "bsnn", version, about = "Boolean spiking reservoir toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a reservoir topology to JSON.
    Generate {
        /// XxYxZ
        #[arg(long, default_value = "7x7x4", value_parser = parse_dims)]
        dims: GridDims,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = shd::CHANNELS)]
        channels: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write delay and weight adjacency CSVs here.
        #[arg(long)]
        adjacency: Option<PathBuf>,
    },
    /// Flatten a topology to gates; emit Verilog and a resource estimate.
    Elaborate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        hdl: Option<PathBuf>,
        #[arg(long)]
        resources: Option<PathBuf>,
        #[arg(long)]
        lumped: bool,
    },
    /// Simulate one observation window.
    Simulate {
        #[arg(long)]
        network: PathBuf,
        /// CSV `time_step,channel`; a synthetic sample when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        jitter_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        lumped: bool,
        /// Observation cache output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `.svg` or `.csv`
        #[arg(long)]
        raster: Option<PathBuf>,
        #[arg(long)]
        vcd: Option<PathBuf>,
    },
    /// Serve simulation windows over UDP until interrupted.
    Serve {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "127.0.0.1:9750")]
        bind: String,
        #[arg(long, default_value_t = 0.0)]
        jitter_sigma: f64,
        #[arg(long, default_value_t = 0)]
        jitter_seed: u64,
        #[arg(long)]
        lumped: bool,
    },
    /// Features of a run directory's windows as CSV.
    Encode {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = "combined", value_parser = parse_mode)]
        mode: EncodingMode,
        #[arg(long, default_value_t = 0)]
        repeat: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a readout on a run directory's training windows.
    Train {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = "combined", value_parser = parse_mode)]
        mode: EncodingMode,
        #[arg(long, default_value_t = 0)]
        repeat: u32,
        #[arg(long, default_value_t = 0.01)]
        c: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a run directory's test windows.
    Evaluate {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        repeat: u32,
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Full pipeline from a TOML config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train rate, latency and combined readouts.
        #[arg(long)]
        compare: bool,
        /// Print the default config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Resource model against the scaling law over layer counts.
    Sweep {
        #[arg(long, default_value_t = 2)]
        from: u32,
        #[arg(long, default_value_t = 5)]
        to: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Raster of one cached window.
    Raster {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// `.svg` or `.csv`
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dims(s: &str) -> Result<GridDims, String> {
    let v: Vec<u32> = s
        .split('x')
        .map(|p| p.parse().map_err(|_| format!("bad dimension {p:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(GridDims { x, y, z }),
        _ => Err("expected XxYxZ".into()),
    }
}

fn parse_mode(s: &str) -> Result<EncodingMode, String> {
    EncodingMode::ALL
        .into_iter()
        .find(|m| m.to_string() == s)
        .ok_or_else(|| format!("unknown encoding {s:?}"))
}

fn block(lumped: bool) -> BlockConfig {
    BlockConfig {
        delay_model: if lumped { DelayModel::Lumped } else { DelayModel::InverterChain },
        ..Default::default()
    }
}

fn read_events(path: &Path) -> Result<Vec<SpikeEvent>, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (t, c) = l.split_once(',').ok_or_else(|| format!("bad line {l:?}"))?;
            Ok(SpikeEvent {
                time_step: t.trim().parse()?,
                channel: c.trim().parse()?,
            })
        })
        .collect()
}

fn write_raster(r: &RasterWindow, out: &Path) -> std::io::Result<()> {
    let body = match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => r.to_csv(),
        _ => r.to_svg(),
    };
    std::fs::write(out, body)
}

fn features_csv(f: &harness::FeatureSet) -> String {
    let mut s = String::new();
    for (split, x, y) in [("train", &f.x_train, &f.y_train), ("test", &f.x_test, &f.y_test)] {
        for (row, label) in x.rows().into_iter().zip(y) {
            s += &format!("{split},{label}");
            for v in row {
                s += &format!(",{v}");
            }
            s.push('\n');
        }
    }
    s
}

fn run(cmd: Cmd) -> Res {
    match cmd {
        Cmd::Generate {
            dims,
            seed,
            channels,
            out,
            adjacency,
        } => {
            let spec = generate(dims, &ConnectivityParams::default(), Some(seed), channels)?;
            spec.save(&out)?;
            if let Some(dir) = adjacency {
                std::fs::create_dir_all(&dir)?;
                let a = adjacency_matrices(&spec);
                std::fs::write(dir.join("delay_ps.csv"), a.delay_csv())?;
                std::fs::write(dir.join("weight.csv"), a.weight_csv())?;
            }
            println!("{} neurons, {} synapses", spec.len(), spec.synapses.len());
        }
        Cmd::Elaborate {
            network,
            hdl,
            resources,
            lumped,
        } => {
            let spec = NetworkSpec::load(&network)?;
            let net = elaborate(&spec, &block(lumped))?;
            if let Some(p) = hdl {
                std::fs::write(p, emit_hdl(&net.netlist))?;
            }
            let r = estimate_resources(&spec, true);
            if let Some(p) = resources {
                std::fs::write(p, r.to_csv())?;
            }
            println!("{} gates, {} nets, {} LEs", net.netlist.gates.len(), net.netlist.nets.len(), r.logic_elements);
        }
        Cmd::Simulate {
            network,
            input,
            jitter_sigma,
            seed,
            lumped,
            out,
            raster,
            vcd,
        } => {
            let spec = NetworkSpec::load(&network)?;
            let net = elaborate(&spec, &block(lumped))?;
            let events = match input {
                Some(p) => read_events(&p)?,
                None => shd::preprocess(&shd::synthetic_samples(1, 1, seed)[0]).to_input().events,
            };
            let (m, trace) = harness::single_window(&net, events, jitter_sigma, seed)?;
            println!("{} spikes from {} probes", m.total(), m.channels);
            if let Some(p) = out {
                write_observations(&p, std::slice::from_ref(&m))?;
            }
            if let Some(p) = raster {
                write_raster(&RasterWindow::from_matrix(&m, probe_labels(&net.netlist), window_duration()), &p)?;
            }
            if let Some(p) = vcd {
                std::fs::write(p, trace.to_vcd())?;
            }
        }
        Cmd::Serve {
            network,
            bind,
            jitter_sigma,
            jitter_seed,
            lumped,
        } => {
            let spec = NetworkSpec::load(&network)?;
            let net = Arc::new(elaborate(&spec, &block(lumped))?);
            let cfg = ServerConfig {
                input_channels: net.input_ports.len(),
                ..Default::default()
            };
            let server = Server::bind(bind, harness::window_runner(net, jitter_sigma, jitter_seed), cfg)?;
            println!("serving on {}", server.local_addr());
            loop {
                std::thread::sleep(Duration::from_secs(10));
                log::info!("{:?}", server.stats());
            }
        }
        Cmd::Encode {
            run_dir,
            mode,
            repeat,
            out,
        } => {
            let f = Observations::load(&run_dir, repeat)?.features(mode)?;
            std::fs::write(out, features_csv(&f))?;
        }
        Cmd::Train {
            run_dir,
            mode,
            repeat,
            c,
            out,
        } => {
            let obs = Observations::load(&run_dir, repeat)?;
            let scaler = obs.scaler()?;
            let f = obs.features_with(&scaler, mode)?;
            let classes = f.y_train.iter().chain(&f.y_test).max().map_or(0, |m| m + 1);
            let t = train(&f.x_train, &f.y_train, classes, &TrainConfig { c, ..Default::default() })?;
            println!(
                "loss {:.6} after {} iterations{}",
                t.loss,
                t.iterations,
                if t.converged { "" } else { " (not converged)" }
            );
            Checkpoint {
                mode,
                scaler,
                model: t.model,
            }
            .save(&out)?;
        }
        Cmd::Evaluate {
            run_dir,
            model,
            repeat,
            confusion,
        } => {
            let ck = Checkpoint::load(&model)?;
            let f = Observations::load(&run_dir, repeat)?.features_with(&ck.scaler, ck.mode)?;
            let e = evaluate(&ck.model, &f.x_test, &f.y_test);
            println!("accuracy {:.4}", e.accuracy);
            if let Some(p) = confusion {
                std::fs::write(p, e.confusion_csv())?;
            }
        }
        Cmd::Run {
            config,
            compare,
            print_config,
        } => {
            if print_config {
                print!("{}", ExperimentConfig::default().to_toml()?);
                return Ok(());
            }
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let report = if compare {
                harness::compare_encodings(&cfg)?
            } else {
                harness::run_experiment(&cfg)?
            };
            print!("{}", report.accuracy_csv());
            println!("artifacts in {}", report.run_dir.display());
        }
        Cmd::Sweep { from, to, seed, out } => {
            let csv = scaling_csv(&sweep_scaling(from..=to, &ConnectivityParams::default(), seed)?);
            match out {
                Some(p) => std::fs::write(p, csv)?,
                None => print!("{csv}"),
            }
        }
        Cmd::Raster {
            observations,
            index,
            out,
        } => {
            let w = read_observations(&observations)?;
            let m = w.get(index).ok_or_else(|| format!("{} windows, no index {index}", w.len()))?;
            let labels = (0..m.channels).map(bsnn::elaborator::probe_label).collect();
            write_raster(&RasterWindow::from_matrix(m, labels, window_duration()), &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
