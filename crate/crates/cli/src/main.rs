//! `ddlqr` — data-driven continuous-time LQR from the command line.
//!
//! Subcommands:
//!   gen      generate benchmark systems, simulate, and export data sets
//!   solve    run one method on an exported data directory
//!   bench    run the full benchmark suite and emit records/plots
//!   compare  summarize previously emitted benchmark records
//!
//! Exit codes: 0 ok, 1 usage, 2 data not informative, 3 solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddlqr_core::cl::ClParam;
use ddlqr_core::conic::{self, SolverSettings};
use ddlqr_core::emit;
use ddlqr_core::irl::IrlParam;
use ddlqr_core::iterate::StopRule;
use ddlqr_core::linalg::Matrix;
use ddlqr_core::sim::{ClData, IrlData, LinearSystem, Weights};
use ddlqr_core::suite::{self, ExperimentConfig, MethodId};
use ddlqr_core::{Error, SymMatrix};

#[derive(Parser)]
#[command(name = "ddlqr", version, about = "data-driven continuous-time LQR toolbox")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate systems, simulate excitation, and export data sets.
    Gen(GenArgs),
    /// Run one method on an exported data directory.
    Solve(SolveArgs),
    /// Run the benchmark suite and emit records, summaries, and plots.
    Bench(BenchArgs),
    /// Summarize previously emitted benchmark records.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Method id: pi-cl, pi-irl, vi-cl, vi-irl, flow-cl, flow-irl,
    /// ricflow-cl, ricflow-irl, sdp-cl1, sdp-cl2, sdp-cl3, sdp-irl1,
    /// sdp-irl2.
    #[arg(long)]
    method: String,
    /// Data directory produced by `ddlqr gen` (one system directory).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory holding the records_<method>.csv files from `bench`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Solve(args) => run_solve(args),
        Command::Bench(args) => run_bench(args),
        Command::Compare(args) => run_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::DataNotInformativeCl { .. } | Error::DataNotInformativeIrl { .. } => 2,
                Error::Config(_) | Error::Io(_) => 1,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run_gen(args: GenArgs) -> Result<(), Error> {
    let mut config = load_config(&args.config)?;
    if let Some(out) = args.out {
        config.output_dir = out.display().to_string();
    }
    let root = Path::new(&config.output_dir).join("gen");
    std::fs::create_dir_all(&root)?;
    for index in 0..config.num_systems {
        let setup = suite::prepare_system(&config, index)?;
        let dir = root.join(format!("system_{index:03}"));
        std::fs::create_dir_all(&dir)?;
        emit::write_matrix_csv(&dir.join("a.csv"), "a", setup.system.a())?;
        emit::write_matrix_csv(&dir.join("b.csv"), "b", setup.system.b())?;
        emit::write_matrix_csv(&dir.join("q.csv"), "q", setup.system.q().as_matrix())?;
        emit::write_matrix_csv(&dir.join("r.csv"), "r", setup.system.r().as_matrix())?;
        emit::write_matrix_csv(&dir.join("k0.csv"), "k0", &setup.initial_gain)?;
        emit::write_trajectory_csv(&dir.join("trajectory.csv"), &setup.trajectory)?;
        emit::write_matrix_csv(
            &dir.join("cl_increments.csv"),
            "cl_increments",
            &setup.cl.increments,
        )?;
        emit::write_matrix_csv(
            &dir.join("cl_input_integrals.csv"),
            "cl_input_integrals",
            &setup.cl.input_integrals,
        )?;
        emit::write_matrix_csv(
            &dir.join("cl_state_integrals.csv"),
            "cl_state_integrals",
            &setup.cl.state_integrals,
        )?;
        emit::write_matrix_csv(
            &dir.join("irl_outer_increments.csv"),
            "irl_outer_increments",
            &setup.irl.outer_increments,
        )?;
        emit::write_matrix_csv(
            &dir.join("irl_state_moments.csv"),
            "irl_state_moments",
            &setup.irl.state_moments,
        )?;
        emit::write_matrix_csv(
            &dir.join("irl_input_state_moments.csv"),
            "irl_input_state_moments",
            &setup.irl.input_state_moments,
        )?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

struct LoadedData {
    weights: Weights,
    cl: Option<ClData>,
    irl: Option<IrlData>,
    truth: Option<(Matrix, Matrix)>,
    initial_gain: Option<Matrix>,
}

fn load_data(dir: &Path) -> Result<LoadedData, Error> {
    let q = SymMatrix::new(emit::read_matrix_csv(&dir.join("q.csv"))?)?;
    let r = SymMatrix::new(emit::read_matrix_csv(&dir.join("r.csv"))?)?;
    let weights = Weights::new(q, r)?;

    let cl = if dir.join("cl_increments.csv").exists() {
        Some(ClData::from_matrices(
            emit::read_matrix_csv(&dir.join("cl_increments.csv"))?,
            emit::read_matrix_csv(&dir.join("cl_input_integrals.csv"))?,
            emit::read_matrix_csv(&dir.join("cl_state_integrals.csv"))?,
        )?)
    } else {
        None
    };

    let irl = if dir.join("irl_outer_increments.csv").exists() {
        Some(IrlData::from_matrices(
            weights.q.dim(),
            weights.r.dim(),
            emit::read_matrix_csv(&dir.join("irl_outer_increments.csv"))?,
            emit::read_matrix_csv(&dir.join("irl_state_moments.csv"))?,
            emit::read_matrix_csv(&dir.join("irl_input_state_moments.csv"))?,
        )?)
    } else {
        None
    };

    let truth = if dir.join("a.csv").exists() && dir.join("b.csv").exists() {
        Some((
            emit::read_matrix_csv(&dir.join("a.csv"))?,
            emit::read_matrix_csv(&dir.join("b.csv"))?,
        ))
    } else {
        None
    };
    let initial_gain = if dir.join("k0.csv").exists() {
        Some(emit::read_matrix_csv(&dir.join("k0.csv"))?)
    } else {
        None
    };

    Ok(LoadedData {
        weights,
        cl,
        irl,
        truth,
        initial_gain,
    })
}

fn print_gain(label: &str, k: &Matrix, truth: &Option<(Matrix, Matrix)>, weights: &Weights) {
    println!("{label} gain:");
    for i in 0..k.nrows() {
        let row: Vec<String> = (0..k.ncols())
            .map(|j| format!("{:+.8e}", k[(i, j)]))
            .collect();
        println!("  [{}]", row.join(", "));
    }
    // report the residual against the model-based solution when the
    // ground-truth plant was exported alongside the data
    if let Some((a, b)) = truth {
        if let Ok(sys) = LinearSystem::new(
            a.clone(),
            b.clone(),
            weights.q.clone(),
            weights.r.clone(),
        ) {
            if let Ok(oracle) = ddlqr_core::oracle::care_solve(&sys) {
                println!(
                    "residual vs model-based gain: {:.3e}",
                    (k - &oracle.gain).norm()
                );
            }
        }
    }
}

fn run_solve(args: SolveArgs) -> Result<(), Error> {
    let method: MethodId = args.method.parse()?;
    let data = load_data(&args.data)?;
    let config = ExperimentConfig::default();
    let need_cl = matches!(
        method,
        MethodId::PiCl
            | MethodId::ViCl
            | MethodId::FlowCl
            | MethodId::RicflowCl
            | MethodId::SdpCl1
            | MethodId::SdpCl2
            | MethodId::SdpCl3
    );
    let cl = if need_cl {
        Some(ClParam::new(
            data.cl
                .clone()
                .ok_or_else(|| Error::Config("missing closed-loop data files".into()))?,
            data.weights.clone(),
        )?)
    } else {
        None
    };
    let irl = if !need_cl {
        Some(IrlParam::new(
            data.irl
                .clone()
                .ok_or_else(|| Error::Config("missing quadratic-integral data files".into()))?,
            data.weights.clone(),
        )?)
    } else {
        None
    };
    let need_k0 = matches!(
        method,
        MethodId::PiCl | MethodId::PiIrl | MethodId::FlowCl | MethodId::FlowIrl
    );
    if need_k0 && data.initial_gain.is_none() {
        return Err(Error::Config(
            "method needs k0.csv in the data directory".into(),
        ));
    }
    let k0 = data.initial_gain.clone();

    let settings = SolverSettings::default();
    let n = data.weights.q.dim();
    let gain = match method {
        MethodId::PiCl => {
            let cl = cl.as_ref().unwrap();
            let g0 = cl.particular_solution(&k0.unwrap())?;
            let run = cl.policy_iteration(&g0, &StopRule::default())?;
            run.final_policy().gain().clone()
        }
        MethodId::PiIrl => {
            let irl = irl.as_ref().unwrap();
            let run = irl.policy_iteration(&k0.unwrap(), &StopRule::default())?;
            run.final_gain().clone()
        }
        MethodId::ViCl => {
            let cl = cl.as_ref().unwrap();
            let run = cl.value_iteration(&SymMatrix::zeros(n), &config.vi_options())?;
            cl.care_residual_compressed(run.values.last().unwrap()).gain
        }
        MethodId::ViIrl => {
            let irl = irl.as_ref().unwrap();
            let run = irl.value_iteration(&SymMatrix::zeros(n), &config.vi_options())?;
            irl.value_split(run.values.last().unwrap())?.gain
        }
        MethodId::FlowCl => {
            let cl = cl.as_ref().unwrap();
            let g0 = cl.particular_solution(&k0.unwrap())?;
            let run =
                cl.projected_gradient_flow(&g0, config.alpha, 0.0, &config.flow_options())?;
            run.policies.last().unwrap().gain().clone()
        }
        MethodId::FlowIrl => {
            let irl = irl.as_ref().unwrap();
            let run = irl.gradient_flow(&k0.unwrap(), config.beta, &config.flow_options())?;
            run.gains.last().unwrap().clone()
        }
        MethodId::RicflowCl => {
            let cl = cl.as_ref().unwrap();
            let run = cl.riccati_flow(&SymMatrix::zeros(n), &config.ricflow_options())?;
            cl.care_residual_compressed(run.last()).gain
        }
        MethodId::RicflowIrl => {
            let irl = irl.as_ref().unwrap();
            let run = irl.riccati_flow(&SymMatrix::zeros(n), &config.ricflow_options())?;
            irl.value_split(run.last())?.gain
        }
        MethodId::SdpCl1 => conic::solve_cl1(cl.as_ref().unwrap(), &settings)?.gain,
        MethodId::SdpCl2 => conic::solve_cl2(cl.as_ref().unwrap(), &settings)?.gain,
        MethodId::SdpCl3 => conic::solve_cl3(cl.as_ref().unwrap(), &settings)?.gain,
        MethodId::SdpIrl1 => conic::solve_irl1(irl.as_ref().unwrap(), &settings)?.gain,
        MethodId::SdpIrl2 => conic::solve_irl2(irl.as_ref().unwrap(), &settings)?.gain,
    };
    print_gain(method.as_str(), &gain, &data.truth, &data.weights);
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), Error> {
    let mut config = load_config(&args.config)?;
    if let Some(out) = args.out {
        config.output_dir = out.display().to_string();
    }
    let result = suite::run_suite(&config)?;
    let dir = PathBuf::from(&config.output_dir);
    emit::emit_suite(&dir, &result)?;
    println!("{}", emit::comparison_table(&result.summaries));
    println!("wrote records, plots, and tables to {}", dir.display());
    Ok(())
}

fn run_compare(args: CompareArgs) -> Result<(), Error> {
    let mut lines = String::new();
    lines.push_str(&format!(
        "{:<12} {:>5} {:>13} {:>13} {:>13}\n",
        "method", "runs", "median_K", "mean_K", "worst_K"
    ));
    let mut any = false;
    for method in MethodId::ALL {
        let records = match emit::read_records_csv(&args.out, method) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if records.is_empty() {
            continue;
        }
        any = true;
        let mut finals: Vec<f64> = records
            .iter()
            .filter_map(|r| {
                let v = r.final_gain_residual;
                v.is_finite().then_some(v)
            })
            .collect();
        finals.sort_by(f64::total_cmp);
        let median = finals[finals.len() / 2];
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let worst = finals.last().copied().unwrap_or(f64::NAN);
        lines.push_str(&format!(
            "{:<12} {:>5} {:>13.3e} {:>13.3e} {:>13.3e}\n",
            method.to_string(),
            records.len(),
            median,
            mean,
            worst
        ));
    }
    if !any {
        return Err(Error::Config(format!(
            "no record files found under {}",
            args.out.display()
        )));
    }
    print!("{lines}");
    std::fs::write(args.out.join("comparison.txt"), lines)?;
    Ok(())
}
