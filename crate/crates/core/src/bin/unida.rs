use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unida::container::Container;
use unida::error::{Result, UnidaError};
use unida::runner::{
    emit_rows, emit_tables, eval_report_csv, parse_seeds, parse_table_csv, resolve_temperature,
    run_on_task, run_seed, AggregateReport, ExperimentConfig, Method, TableFormat, Task,
};
use unida::trainer::{head_from_matrix, head_to_matrix};
use unida::LinearHead;

#[derive(Parser)]
#[command(name = "unida", version, about = "Universal domain adaptation on frozen embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Experiment config file (or, for `run`, a directory of `.cfg` files).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated seeds, overriding the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Table format for reports.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the teacher temperature on the source calibration split.
    Calibrate(Common),
    /// Train source-only heads.
    Train(Common),
    /// Calibrate, then distill student heads on the target.
    Distill(Common),
    /// Evaluate the zero-shot teacher (max-logit score, no rejection).
    ZeroShot(Common),
    /// Evaluate a saved head on the config's target.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Head file written by `train` or `distill`.
        #[arg(long)]
        head: PathBuf,
    },
    /// Run the configured method end to end and write report tables.
    Run(Common),
    /// Re-emit one or more report CSVs in the chosen format.
    Report {
        /// Report CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common, method: Option<Method>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "cfg"))
            .collect();
        v.sort();
        if v.is_empty() {
            return Err(UnidaError::Config(format!("no .cfg files in {}", path.display())));
        }
        Ok(v)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn save_head(head: &LinearHead, path: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    let m = head_to_matrix(head);
    let meta = BTreeMap::from([
        ("kind".to_string(), "linear_head".to_string()),
        ("method".to_string(), cfg.method.name().to_string()),
        ("run".to_string(), cfg.name.clone()),
        ("seed".to_string(), seed.to_string()),
    ]);
    Container {
        labels: vec![-1; m.nrows()],
        label_count: m.ncols() as u32,
        features: m,
        meta,
    }
    .write(path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load_head(path: &Path) -> Result<LinearHead> {
    let c = Container::read(path)?;
    if c.meta.get("kind").map(String::as_str) != Some("linear_head") {
        return Err(UnidaError::Format(format!(
            "{} is not a linear head (metadata kind != linear_head)",
            path.display()
        )));
    }
    head_from_matrix(&c.features)
}

fn write_calibration(report: &AggregateReport, out: &Path) -> Result<()> {
    if let Some(cal) = &report.calibration {
        write(&out.join(format!("calibration_{}.txt", report.name)), &cal.to_report())?;
        write(
            &out.join(format!("calibration_{}_bins.csv", report.name)),
            &cal.bins_in.to_csv(),
        )?;
    }
    Ok(())
}

fn write_run_outputs(report: &AggregateReport, out: &Path) -> Result<()> {
    write_calibration(report, out)?;
    for run in &report.runs {
        if !run.report.curve.is_empty() {
            write(
                &out.join(format!("curve_{}_seed{}.csv", report.name, run.seed)),
                &run.report.curve_csv(),
            )?;
        }
    }
    Ok(())
}

fn write_tables(reports: &[AggregateReport], out: &Path, format: TableFormat) -> Result<()> {
    let csv = emit_tables(reports, TableFormat::Csv);
    write(&out.join("report.csv"), &csv)?;
    let shown = match format {
        TableFormat::Csv => csv,
        TableFormat::Markdown => {
            let md = emit_tables(reports, TableFormat::Markdown);
            write(&out.join("report.md"), &md)?;
            md
        }
    };
    print!("{shown}");
    Ok(())
}

fn train_heads(common: &Common, method: Method) -> Result<()> {
    let cfg = load_config(common, Some(method))?;
    let task = Task::load(&cfg)?;
    let (tau, cal) = resolve_temperature(&cfg, &task)?;
    if let Some(cal) = &cal {
        write(&common.out.join(format!("calibration_{}.txt", cfg.name)), &cal.to_report())?;
    }
    for &seed in &cfg.seeds {
        let run = run_seed(&cfg, &task, tau, seed)?;
        if let Some(head) = &run.head {
            save_head(
                head,
                &common.out.join(format!("head_{}_seed{}.udfs", cfg.name, seed)),
                &cfg,
                seed,
            )?;
        }
        println!(
            "seed={seed} final_loss={} h_score={} ucr={}",
            run.final_loss.unwrap_or(f64::NAN),
            run.report.h_score,
            run.report.ucr
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(common) => {
            fs::create_dir_all(&common.out)?;
            let cfg = load_config(&common, None)?;
            let task = Task::load(&cfg)?;
            let cal = task.calibrate(&cfg.calibration)?;
            write(&common.out.join(format!("calibration_{}.txt", cfg.name)), &cal.to_report())?;
            write(
                &common.out.join(format!("calibration_{}_bins.csv", cfg.name)),
                &cal.bins_in.to_csv(),
            )?;
            print!("{}", cal.to_report());
        }
        Command::Train(common) => {
            fs::create_dir_all(&common.out)?;
            train_heads(&common, Method::SourceOnly)?;
        }
        Command::Distill(common) => {
            fs::create_dir_all(&common.out)?;
            train_heads(&common, Method::Distill)?;
        }
        Command::ZeroShot(common) => {
            fs::create_dir_all(&common.out)?;
            let cfg = load_config(&common, Some(Method::ZeroShot))?;
            let task = Task::load(&cfg)?;
            let report = run_on_task(&cfg, &task)?;
            write_run_outputs(&report, &common.out)?;
            write_tables(&[report], &common.out, common.format.parse()?)?;
        }
        Command::Evaluate { common, head } => {
            fs::create_dir_all(&common.out)?;
            let cfg = load_config(&common, None)?;
            let task = Task::load(&cfg)?;
            let head = load_head(&head)?;
            let report = task.evaluate_head(&head)?;
            let csv = eval_report_csv(&report);
            write(&common.out.join("report.csv"), &csv)?;
            if !report.curve.is_empty() {
                write(&common.out.join(format!("curve_{}.csv", cfg.name)), &report.curve_csv())?;
            }
            print!("{csv}");
        }
        Command::Run(common) => {
            fs::create_dir_all(&common.out)?;
            let format: TableFormat = common.format.parse()?;
            let mut reports = Vec::new();
            for path in config_paths(&common.config)? {
                let sub = Common {
                    config: path,
                    ..common.clone()
                };
                let cfg = load_config(&sub, None)?;
                let task = Task::load(&cfg)?;
                let report = run_on_task(&cfg, &task)?;
                write_run_outputs(&report, &common.out)?;
                reports.push(report);
            }
            write_tables(&reports, &common.out, format)?;
        }
        Command::Report {
            inputs,
            format,
            out,
        } => {
            let mut rows = Vec::new();
            for p in &inputs {
                rows.extend(parse_table_csv(&fs::read_to_string(p)?)?);
            }
            let text = emit_rows(&rows, format.parse()?);
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
