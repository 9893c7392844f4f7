use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panoiqa_core::analysis::{gap_table_csv, gap_table_markdown, RankDirection};
use panoiqa_core::{
    benchmark_fixtures, extract_viewports, gap, make_trajectory, rank_from_metric, DistortionType, ErpImage, GapRecord,
    Metric, Perspective, RankTable, ScopeKind, TrajectoryMode,
};
use panoiqa_tool::config::ExperimentConfig;
use panoiqa_tool::error::{CliError, Result, Stage};
use panoiqa_tool::experiment::{
    self, cross_markdown, experiment_markdown, write_bundle, Dataset, FeatureTable, Predictor, TrainedModel,
};
use panoiqa_tool::synth::{run_synth, SynthOptions};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "panoiqa",
    version,
    about = "Viewport-based blind quality assessment for 360° panoramas"
)]
struct Cli {
    /// Seed for splits and synthesis; recorded in every output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report raw Pearson instead of PLCC after logistic remapping.
    #[arg(long, global = true)]
    no_prefit: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the viewports of one panorama as PNG files.
    ExtractViewports {
        image: PathBuf,
        #[arg(long, default_value = "image8")]
        trajectory: TrajectoryMode,
        /// Longitude of the first viewport, degrees.
        #[arg(long, default_value_t = 0.0)]
        start_deg: f64,
    },
    /// Generate a synthetic distorted database with a manifest.
    Synth {
        #[arg(long, default_value = "synth")]
        name: String,
        #[arg(long, default_value_t = 10)]
        sources: usize,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, value_delimiter = ',', default_value = "gb,gn")]
        types: Vec<DistortionType>,
        #[arg(long, default_value_t = 5)]
        levels: u8,
        #[arg(long, value_delimiter = ',', default_value = "homogeneous,heterogeneous")]
        scopes: Vec<ScopeKind>,
    },
    /// Train one scorer on the train split of a manifest; writes model.json.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "composite")]
        scorer: String,
        #[command(flatten)]
        protocol: Protocol,
    },
    /// Evaluate scorers on a database (train on its split, test on the rest),
    /// or a saved model on every image of a manifest.
    Evaluate {
        #[arg(long, conflicts_with_all = ["manifest", "scorers"])]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        scorers: Vec<String>,
        /// Saved model from `train`; evaluates on all rows of `--manifest`.
        #[arg(long, conflicts_with = "scorers")]
        model: Option<PathBuf>,
        #[command(flatten)]
        protocol: Protocol,
    },
    /// Train on a source database and test on target databases.
    Cross {
        #[arg(long, conflicts_with_all = ["source", "targets", "scorers"])]
        config: Option<PathBuf>,
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long = "target")]
        targets: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        scorers: Vec<String>,
        #[command(flatten)]
        protocol: Protocol,
    },
    /// Gap arithmetic: one pair, a CSV of pairs, or the embedded benchmark
    /// fixtures.
    Gap {
        #[arg(long, requires = "p_test")]
        p_ori: Option<f64>,
        #[arg(long)]
        p_test: Option<f64>,
        /// CSV with columns model,database,metric,p_ori,p_test.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        fixtures: bool,
    },
    /// Aggregate per-perspective ranks (CSV: database plus any of
    /// q1,q2,q3,t), or rank one metric column.
    Rank {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        fixtures: bool,
        /// CSV with columns database,value, ranked by `--direction`.
        #[arg(long, conflicts_with = "input")]
        values: Option<PathBuf>,
        #[arg(long, default_value = "higher")]
        direction: String,
    },
    /// Render a report.json or cross.json bundle as Markdown.
    Report { input: PathBuf },
}

#[derive(Args, Clone)]
struct Protocol {
    #[arg(long)]
    trajectory: Option<TrajectoryMode>,
    #[arg(long)]
    train_ratio: Option<f64>,
    /// Keep all versions of one reference image in the same split.
    #[arg(long)]
    grouped_split: bool,
}

impl Protocol {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(t) = self.trajectory {
            c.trajectory = t;
        }
        if let Some(r) = self.train_ratio {
            c.train_ratio = r;
        }
        c.grouped_split |= self.grouped_split;
    }
}

struct Globals {
    seed: Option<u64>,
    no_prefit: bool,
    out: Option<PathBuf>,
}

impl Globals {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.no_prefit {
            c.prefit = false;
        }
        if self.out.is_some() {
            c.out = self.out.clone();
        }
    }

    fn require_out(&self, what: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("{what} needs --out")))
    }
}

fn build_config(
    config: Option<&Path>,
    source: Option<&Path>,
    scorers: &[String],
    g: &Globals,
    p: &Protocol,
) -> Result<ExperimentConfig> {
    let mut c = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let source = source.ok_or_else(|| CliError::Config("give --config or a database manifest".into()))?;
            let names: Vec<&str> = if scorers.is_empty() {
                vec!["composite"]
            } else {
                scorers.iter().map(String::as_str).collect()
            };
            ExperimentConfig::new(source, &names)
        }
    };
    p.apply(&mut c);
    g.apply(&mut c);
    Ok(c)
}

fn emit(g: &Globals, files: Vec<(String, String)>, stdout_index: usize) -> Result<()> {
    match &g.out {
        Some(out) => {
            write_bundle(out, &files)?;
            for (name, _) in &files {
                eprintln!("wrote {}", out.join(name).display());
            }
        }
        None => print!("{}", files[stdout_index].1),
    }
    Ok(())
}

#[derive(Deserialize)]
struct GapInput {
    model: String,
    database: String,
    metric: Metric,
    p_ori: Option<f64>,
    p_test: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| CliError::data(Stage::Load, format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| CliError::data(Stage::Load, format!("{}: {e}", path.display())))
}

fn cmd_gap(g: &Globals, p_ori: Option<f64>, p_test: Option<f64>, input: Option<&Path>, fixtures: bool) -> Result<()> {
    if let (Some(a), Some(b)) = (p_ori, p_test) {
        match gap(a, b) {
            Some(v) => println!("{v:.1}%"),
            None => return Err(CliError::numerical(Stage::Evaluate, "gap undefined for p_ori = 0")),
        }
        return Ok(());
    }
    let (records, printed): (Vec<GapRecord>, Vec<Option<f64>>) = if fixtures {
        benchmark_fixtures()
            .transfer_gaps
            .iter()
            .map(|t| (t.to_record(), t.printed_gap))
            .unzip()
    } else if let Some(path) = input {
        read_csv::<GapInput>(path)?
            .into_iter()
            .map(|r| (GapRecord::new(r.model, r.database, r.metric, r.p_ori, r.p_test), None))
            .unzip()
    } else {
        return Err(CliError::Config(
            "gap needs --p-ori/--p-test, --input or --fixtures".into(),
        ));
    };
    let mut md = gap_table_markdown(&records);
    if fixtures {
        let off: Vec<String> = records
            .iter()
            .zip(&printed)
            .filter_map(|(r, p)| match (r.gap_percent, p) {
                (Some(c), Some(p)) if (c - p).abs() > 0.15 => Some(format!(
                    "- {} {} {}: computed {c:.2}%, printed {p:.1}%",
                    r.model, r.database, r.metric
                )),
                _ => None,
            })
            .collect();
        md.push_str(&format!(
            "\n{} cells differ from the printed gap by more than 0.15 pp\n",
            off.len()
        ));
        for line in off {
            md.push_str(&line);
            md.push('\n');
        }
    }
    emit(
        g,
        vec![("gap.md".into(), md), ("gap.csv".into(), gap_table_csv(&records))],
        0,
    )
}

fn parse_direction(s: &str) -> Result<RankDirection> {
    Ok(match s {
        "higher" => RankDirection::HigherBetter,
        "lower" => RankDirection::LowerBetter,
        "magnitude" => RankDirection::HigherMagnitudeBetter,
        "low-magnitude" => RankDirection::LowerMagnitudeBetter,
        other => {
            return Err(CliError::Config(format!(
                "unknown direction `{other}` (higher|lower|magnitude|low-magnitude)"
            )))
        }
    })
}

fn cmd_rank(g: &Globals, input: Option<&Path>, fixtures: bool, values: Option<&Path>, direction: &str) -> Result<()> {
    if let Some(path) = values {
        #[derive(Deserialize)]
        struct Row {
            database: String,
            value: Option<f64>,
        }
        let rows: Vec<Row> = read_csv(path)?;
        let vals: Vec<(String, Option<f64>)> = rows.into_iter().map(|r| (r.database, r.value)).collect();
        let out =
            rank_from_metric(&vals, parse_direction(direction)?).map_err(|e| CliError::data(Stage::Evaluate, e))?;
        let mut csv = String::from("database,rank\n");
        for ((db, _), r) in vals.iter().zip(&out.ranks) {
            csv.push_str(&format!("{db},{r}\n"));
        }
        for t in &out.ties {
            eprintln!("tie: {}", t.join(", "));
        }
        return emit(g, vec![("rank.csv".into(), csv)], 0);
    }
    let (dbs, per) = if fixtures {
        let f = benchmark_fixtures();
        let dbs: Vec<String> = f.global_ranking.iter().map(|r| r.database.clone()).collect();
        let mut per = BTreeMap::new();
        per.insert(Perspective::Q1, f.global_ranking.iter().map(|r| r.q1).collect());
        per.insert(Perspective::Q2, f.global_ranking.iter().map(|r| r.q2).collect());
        per.insert(Perspective::Q3, f.global_ranking.iter().map(|r| r.q3).collect());
        per.insert(Perspective::T, f.global_ranking.iter().map(|r| r.t).collect());
        (dbs, per)
    } else if let Some(path) = input {
        read_rank_columns(path)?
    } else {
        return Err(CliError::Config("rank needs --input, --values or --fixtures".into()));
    };
    let table = RankTable::new(dbs, per).map_err(|e| CliError::data(Stage::Evaluate, e))?;
    emit(
        g,
        vec![
            ("rank.md".into(), table.to_markdown()),
            ("rank.csv".into(), table.to_csv()),
        ],
        0,
    )
}

/// Database names and one rank column per perspective.
type RankColumns = (Vec<String>, BTreeMap<Perspective, Vec<usize>>);

fn read_rank_columns(path: &Path) -> Result<RankColumns> {
    let bad = |m: String| CliError::data(Stage::Load, format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.get(0) != Some("database") {
        return Err(bad("first column must be `database`".into()));
    }
    let persp: Vec<Perspective> = header
        .iter()
        .skip(1)
        .map(|h| {
            Perspective::ALL
                .into_iter()
                .find(|p| p.label().eq_ignore_ascii_case(h))
                .ok_or_else(|| bad(format!("unknown perspective column `{h}`")))
        })
        .collect::<Result<_>>()?;
    let mut dbs = Vec::new();
    let mut per: BTreeMap<Perspective, Vec<usize>> = persp.iter().map(|p| (*p, Vec::new())).collect();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        dbs.push(rec[0].to_string());
        for (k, p) in persp.iter().enumerate() {
            let v = rec.get(k + 1).unwrap_or("").trim();
            let v: usize = v
                .parse()
                .map_err(|_| bad(format!("line {}: `{v}` is not a rank", i + 2)))?;
            per.get_mut(p).expect("inserted").push(v);
        }
    }
    Ok((dbs, per))
}

fn cmd_report(input: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(input).map_err(|e| CliError::data(Stage::Load, format!("{}: {e}", input.display())))?;
    if let Ok(r) = serde_json::from_str::<experiment::ExperimentReport>(&text) {
        print!("{}", experiment_markdown(&r));
    } else if let Ok(r) = serde_json::from_str::<experiment::CrossReport>(&text) {
        print!("{}", cross_markdown(&r));
    } else {
        return Err(CliError::data(
            Stage::Load,
            format!("{} is neither an experiment nor a cross report", input.display()),
        ));
    }
    Ok(())
}

fn cmd_extract(g: &Globals, image: &Path, mode: TrajectoryMode, start_deg: f64) -> Result<()> {
    let out = g.require_out("extract-viewports")?;
    let img = ErpImage::open(image, false).map_err(|e| CliError::data(Stage::Load, e))?;
    let traj = make_trajectory::<f64>(mode).with_start(start_deg.to_radians());
    let vps = extract_viewports(&img, &traj).map_err(|e| CliError::data(Stage::Features, e))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (m, vp) in vps.iter().enumerate() {
        let path = out.join(format!("{}_vp{m:02}.png", img.id()));
        vp.save_png(&path).map_err(|e| CliError::data(Stage::Write, e))?;
    }
    eprintln!("wrote {} viewports to {}", vps.len(), out.display());
    Ok(())
}

fn cmd_train(g: &Globals, manifest: &Path, scorer: &str, p: &Protocol) -> Result<()> {
    let out = g.require_out("train")?.to_path_buf();
    let cfg = build_config(None, Some(manifest), &[scorer.to_string()], g, p)?;
    let kinds = cfg.validate()?;
    if !kinds[0].is_trainable() {
        return Err(CliError::Config(format!(
            "`{scorer}` is a fixed scorer and needs no training"
        )));
    }
    let ds = Dataset::load(manifest)?;
    let run = experiment::train_on(&cfg, &kinds, &ds)?;
    let Predictor::Trained { params, .. } = run.predictors.into_iter().next().expect("one scorer") else {
        unreachable!("trainable scorer");
    };
    let model = TrainedModel {
        tool: experiment::TOOL.into(),
        scorer: kinds[0].name().into(),
        trajectory: cfg.trajectory,
        database: ds.name.clone(),
        seed: cfg.seed,
        n_train: run.train_idx.len(),
        params,
    };
    let json = serde_json::to_string_pretty(&model).expect("model serializes") + "\n";
    write_bundle(&out, &[("model.json".into(), json)])?;
    eprintln!("wrote {}", out.join("model.json").display());
    Ok(())
}

fn cmd_evaluate_model(g: &Globals, model: &Path, manifest: &Path) -> Result<()> {
    let text = std::fs::read_to_string(model).map_err(|e| CliError::Config(format!("{}: {e}", model.display())))?;
    let model: TrainedModel =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid model file: {e}")))?;
    let kind = model.kind()?;
    let ds = Dataset::load(manifest)?;
    let traj = make_trajectory::<f64>(model.trajectory);
    let features = FeatureTable::compute(&ds, &traj, &[kind.feature_map().expect("trainable")])?;
    let all: Vec<usize> = (0..ds.items.len()).collect();
    let pred = Predictor::Trained {
        kind,
        params: model.params,
    };
    let p = pred.predict(&ds, &features, &traj, &all)?;
    let report = panoiqa_core::evaluate(&p, &ds.mos(), !g.no_prefit).map_err(|e| CliError::data(Stage::Evaluate, e))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let md = format!(
        "| Scorer | Database | PLCC | SRCC | n |\n|---|---|---|---|---|\n| {} | {} | {:.3} | {:.3} | {} |\n",
        kind.name(),
        ds.name,
        report.plcc,
        report.srcc,
        report.n
    );
    emit(g, vec![("eval.md".into(), md), ("eval.json".into(), json)], 0)
}

fn run(cli: Cli) -> Result<()> {
    let g = Globals {
        seed: cli.seed,
        no_prefit: cli.no_prefit,
        out: cli.out,
    };
    match cli.command {
        Command::ExtractViewports {
            image,
            trajectory,
            start_deg,
        } => cmd_extract(&g, &image, trajectory, start_deg),
        Command::Synth {
            name,
            sources,
            width,
            height,
            types,
            levels,
            scopes,
        } => {
            let out = g.require_out("synth")?;
            let opts = SynthOptions {
                name,
                sources,
                width,
                height,
                types,
                levels,
                scopes,
                seed: g.seed.unwrap_or(0),
            };
            let s = run_synth(&opts, out)?;
            eprintln!(
                "wrote {} records ({} pristine) to {}",
                s.records,
                s.pristine,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            manifest,
            scorer,
            protocol,
        } => cmd_train(&g, &manifest, &scorer, &protocol),
        Command::Evaluate {
            config,
            manifest,
            scorers,
            model,
            protocol,
        } => {
            if let Some(model) = model {
                let manifest = manifest.ok_or_else(|| CliError::Config("--model needs --manifest".into()))?;
                return cmd_evaluate_model(&g, &model, &manifest);
            }
            let cfg = build_config(config.as_deref(), manifest.as_deref(), &scorers, &g, &protocol)?;
            let report = experiment::run_experiment(&cfg)?;
            if cfg.out.is_none() {
                print!("{}", experiment_markdown(&report));
            }
            Ok(())
        }
        Command::Cross {
            config,
            source,
            targets,
            scorers,
            protocol,
        } => {
            let mut cfg = build_config(config.as_deref(), source.as_deref(), &scorers, &g, &protocol)?;
            if !targets.is_empty() {
                cfg.targets = targets;
            }
            let report = experiment::run_cross(&cfg)?;
            if cfg.out.is_none() {
                print!("{}", cross_markdown(&report));
            }
            Ok(())
        }
        Command::Gap {
            p_ori,
            p_test,
            input,
            fixtures,
        } => cmd_gap(&g, p_ori, p_test, input.as_deref(), fixtures),
        Command::Rank {
            input,
            fixtures,
            values,
            direction,
        } => cmd_rank(&g, input.as_deref(), fixtures, values.as_deref(), &direction),
        Command::Report { input } => cmd_report(&input),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: [config] cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
