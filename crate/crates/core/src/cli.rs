//! Command-line front end: argument parsing, config-file merging and the
//! four subcommands. Every file written here starts with a comment line
//! holding the fully resolved [`RunConfig`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, Prep, ReportRow};
use crate::features::assemble_feature_matrix;
use crate::ingest::Dataset;
use crate::models::ModelSpec;
use crate::selection::{self, Thresholds, ThresholdSweepResult};
use crate::synth::{self, CohortConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_MODEL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gradecast", version, about = "Early course-grade prediction from homework submission logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed for generation and randomized models.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for inputs and outputs (default `data`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort (submissions.csv + gradebook.csv).
    Synth {
        /// Number of students (default 249).
        #[arg(long)]
        students: Option<usize>,
        /// Number of questions across the four homeworks and the test (default 409).
        #[arg(long)]
        questions: Option<usize>,
    },
    /// Write the feature matrix to features.csv.
    Extract {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Leave-one-out evaluation of one or more models.
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Variance thresholds `t_perf,t_subs`.
        #[arg(long)]
        thresholds: Option<String>,
        /// Pick thresholds per model with the four-combination sweep.
        #[arg(long)]
        sweep: bool,
        /// Report path (default `<out-dir>/report.md`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the four threshold combinations for one model.
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Submission log (default `<out-dir>/submissions.csv`).
    #[arg(long)]
    pub submissions: Option<PathBuf>,
    /// Gradebook (default `<out-dir>/gradebook.csv`).
    #[arg(long)]
    pub gradebook: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// svm|linreg|svr|tree|nb|knn|random|majority, comma-separated or
    /// repeated; `all` selects the seven report rows.
    #[arg(long = "model", value_delimiter = ',')]
    pub models: Vec<String>,
    /// Min-max scale every kept column into [0, 1] before training.
    #[arg(long)]
    pub normalize: bool,
    /// Fit selection and scaling once on all rows instead of per fold.
    #[arg(long)]
    pub global_prep: bool,
    /// Box constraint for svm and svr (default 1.0).
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// Neighbors for knn (default 5).
    #[arg(long)]
    pub k: Option<usize>,
    /// Insensitive-tube width for svr (default 0.1).
    #[arg(long)]
    pub epsilon: Option<f64>,
}

/// Config-file contents; every key is optional.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub students: Option<usize>,
    pub questions: Option<usize>,
    pub submissions: Option<PathBuf>,
    pub gradebook: Option<PathBuf>,
    pub model: Option<Vec<String>>,
    pub thresholds: Option<String>,
    pub sweep: Option<bool>,
    pub normalize: Option<bool>,
    pub global_prep: Option<bool>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub students: usize,
    pub questions: usize,
    pub submissions: PathBuf,
    pub gradebook: PathBuf,
    pub model: Vec<String>,
    pub thresholds: Thresholds,
    pub sweep: bool,
    pub normalize: bool,
    pub global_prep: bool,
    #[serde(rename = "C")]
    pub c: f64,
    pub k: usize,
    pub epsilon: f64,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(command: &str, out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        RunConfig {
            command: command.to_owned(),
            seed: 42,
            students: 249,
            questions: 409,
            submissions: out_dir.join("submissions.csv"),
            gradebook: out_dir.join("gradebook.csv"),
            model: vec!["svm".to_owned()],
            thresholds: Thresholds::new(0.02, 0.05),
            sweep: false,
            normalize: false,
            global_prep: false,
            c: 1.0,
            k: 5,
            epsilon: 0.1,
            out: out_dir.join("report.md"),
            out_dir,
        }
    }

    /// Merges flags over the config file over defaults.
    pub fn resolve(cli: &Cli) -> Result<RunConfig> {
        let file: FileConfig = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text)?
            }
            None => FileConfig::default(),
        };
        let command = match &cli.command {
            Command::Synth { .. } => "synth",
            Command::Extract { .. } => "extract",
            Command::Evaluate { .. } => "evaluate",
            Command::Sweep { .. } => "sweep",
        };
        let out_dir = cli.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("data"));
        let mut cfg = RunConfig::new(command, &out_dir);
        cfg.seed = cli.seed.or(file.seed).unwrap_or(cfg.seed);
        cfg.students = file.students.unwrap_or(cfg.students);
        cfg.questions = file.questions.unwrap_or(cfg.questions);
        cfg.submissions = file.submissions.clone().unwrap_or(cfg.submissions);
        cfg.gradebook = file.gradebook.clone().unwrap_or(cfg.gradebook);
        cfg.model = file.model.clone().unwrap_or(cfg.model);
        if let Some(t) = &file.thresholds {
            cfg.thresholds = t.parse().map_err(Error::InvalidSpec)?;
        }
        cfg.sweep = file.sweep.unwrap_or(cfg.sweep);
        cfg.normalize = file.normalize.unwrap_or(cfg.normalize);
        cfg.global_prep = file.global_prep.unwrap_or(cfg.global_prep);
        cfg.c = file.c.unwrap_or(cfg.c);
        cfg.k = file.k.unwrap_or(cfg.k);
        cfg.epsilon = file.epsilon.unwrap_or(cfg.epsilon);
        cfg.out = file.out.clone().unwrap_or(cfg.out);

        let apply_input = |cfg: &mut RunConfig, input: &InputArgs| {
            if let Some(p) = &input.submissions {
                cfg.submissions = p.clone();
            }
            if let Some(p) = &input.gradebook {
                cfg.gradebook = p.clone();
            }
        };
        let apply_eval = |cfg: &mut RunConfig, eval: &EvalArgs| {
            if !eval.models.is_empty() {
                cfg.model = eval.models.clone();
            }
            cfg.normalize |= eval.normalize;
            cfg.global_prep |= eval.global_prep;
            cfg.c = eval.c.unwrap_or(cfg.c);
            cfg.k = eval.k.unwrap_or(cfg.k);
            cfg.epsilon = eval.epsilon.unwrap_or(cfg.epsilon);
        };
        match &cli.command {
            Command::Synth { students, questions } => {
                cfg.students = students.unwrap_or(cfg.students);
                cfg.questions = questions.unwrap_or(cfg.questions);
            }
            Command::Extract { input } => apply_input(&mut cfg, input),
            Command::Evaluate { input, eval, thresholds, sweep, out } => {
                apply_input(&mut cfg, input);
                apply_eval(&mut cfg, eval);
                if let Some(t) = thresholds {
                    cfg.thresholds = t.parse().map_err(Error::InvalidSpec)?;
                }
                cfg.sweep |= *sweep;
                if let Some(o) = out {
                    cfg.out = o.clone();
                }
            }
            Command::Sweep { input, eval } => {
                apply_input(&mut cfg, input);
                apply_eval(&mut cfg, eval);
            }
        }
        cfg.model = expand_models(&cfg.model);
        cfg.model_specs()?;
        Ok(cfg)
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        self.model
            .iter()
            .map(|name| {
                let mut spec: ModelSpec = name.parse()?;
                spec.c = self.c;
                spec.k = self.k;
                spec.epsilon = self.epsilon;
                spec.seed = self.seed;
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    pub fn prep(&self, thresholds: Thresholds) -> Prep {
        Prep { thresholds, normalize: self.normalize, global: self.global_prep }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("RunConfig serializes")
    }

    pub fn csv_header(&self) -> String {
        format!("# run_config: {}", self.to_json())
    }

    pub fn markdown_header(&self) -> String {
        format!("<!-- run_config: {} -->", self.to_json())
    }
}

fn expand_models(names: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for n in names {
        if n.eq_ignore_ascii_case("all") {
            out.extend(["svm", "linreg", "tree", "nb", "knn", "random", "majority"].map(String::from));
        } else {
            out.push(n.trim().to_ascii_lowercase());
        }
    }
    out
}

/// Process exit status for an error: 2 for unreadable or invalid input,
/// 3 for failures while training or evaluating, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::BadHeader { .. }
        | Error::MalformedRow { .. }
        | Error::EmptyLog
        | Error::EmptyGradebook
        | Error::DuplicateStudent(_)
        | Error::ScoreOutOfRange { .. }
        | Error::UnknownGrade(_)
        | Error::OrphanEvent(_)
        | Error::InconsistentAssignment(_)
        | Error::Csv(_) => EXIT_INPUT,
        Error::DimensionMismatch { .. }
        | Error::EmptyTrainingSet
        | Error::TooFewStudents(_)
        | Error::Fold { .. }
        | Error::Sweep { .. } => EXIT_MODEL,
        Error::InvalidSpec(_) | Error::InfeasibleConfig(_) | Error::Json(_) => EXIT_USAGE,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, header: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = create(path)?;
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    let (ds, renumbered) = Dataset::load(&cfg.submissions, &cfg.gradebook)?;
    if renumbered > 0 {
        log::warn!("re-numbered {renumbered} attempt numbers to follow timestamp order");
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub submissions: PathBuf,
    pub gradebook: PathBuf,
    pub n_events: usize,
    pub n_students: usize,
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let cohort_cfg = CohortConfig::scaled(cfg.students, cfg.questions, cfg.seed);
    let cohort = synth::generate_cohort(&cohort_cfg)?;
    let (submissions, gradebook) = cohort.write_to_dir(&cfg.out_dir, Some(&cfg.csv_header()))?;
    Ok(SynthSummary { submissions, gradebook, n_events: cohort.events.len(), n_students: cohort.students.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub path: PathBuf,
    pub rows: usize,
    pub cols: usize,
}

pub fn cmd_extract(cfg: &RunConfig) -> Result<ExtractSummary> {
    let ds = load(cfg)?;
    let fm = assemble_feature_matrix(&ds);
    let path = cfg.out_dir.join("features.csv");
    write_with(&path, &cfg.csv_header(), |w| fm.write_csv(w))?;
    Ok(ExtractSummary { path, rows: fm.n_rows(), cols: fm.n_cols() })
}

#[derive(Debug)]
pub struct ModelRun {
    pub spec: ModelSpec,
    pub thresholds: Thresholds,
    pub outcome: std::result::Result<ReportRow, Error>,
}

#[derive(Debug)]
pub struct EvaluateSummary {
    pub report: PathBuf,
    pub runs: Vec<ModelRun>,
}

impl EvaluateSummary {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.outcome.is_ok())
    }
}

/// Writes the report for every model that finished, even when others
/// failed; per-model failures are returned in the summary.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluateSummary> {
    let ds = load(cfg)?;
    let fm = assemble_feature_matrix(&ds);
    let labels = ds.grades();
    let specs = cfg.model_specs()?;
    let single = specs.len() == 1;

    let mut runs = Vec::new();
    for spec in specs {
        let thresholds = if cfg.sweep {
            match selection::threshold_sweep(&fm, &labels, &spec, cfg.normalize, cfg.global_prep) {
                Ok(s) => s.winner,
                Err(e) => {
                    runs.push(ModelRun { spec, thresholds: cfg.thresholds, outcome: Err(e) });
                    continue;
                }
            }
        } else {
            cfg.thresholds
        };
        let outcome = eval::loocv(&fm, &labels, &spec, &cfg.prep(thresholds)).and_then(|preds| {
            if !preds.non_converged_folds.is_empty() {
                log::warn!("{spec}: SMO stopped at the pass limit in {} folds", preds.non_converged_folds.len());
            }
            let row = ReportRow::new(spec, &preds);
            row.report.check_identities().map_err(|m| Error::InvalidSpec(format!("metric identity violated: {m}")))?;
            let name = if single { "predictions.csv".to_owned() } else { format!("predictions_{}.csv", spec.name()) };
            write_with(&cfg.out_dir.join(name), &cfg.csv_header(), |w| eval::write_predictions(w, &fm.row_ids, &preds))?;
            Ok(row)
        });
        if let Err(e) = &outcome {
            log::error!("{spec}: {e}");
        }
        runs.push(ModelRun { spec, thresholds, outcome });
    }

    let rows: Vec<ReportRow> = runs.iter().filter_map(|r| r.outcome.as_ref().ok().cloned()).collect();
    let mut text = format!("{}\n\n", cfg.markdown_header());
    if !rows.is_empty() {
        text.push_str(&eval::render_report(&rows, cfg.normalize));
    }
    let failed: Vec<&ModelRun> = runs.iter().filter(|r| r.outcome.is_err()).collect();
    if !failed.is_empty() || cfg.sweep {
        text.push_str("\n## Model status\n\n| Model | Thresholds | Status |\n|---|---|---|\n");
        for r in &runs {
            let status = match &r.outcome {
                Ok(_) => "ok".to_owned(),
                Err(e) => format!("failed: {e}"),
            };
            text.push_str(&format!(
                "| {} | ({:.2}, {:.2}) | {status} |\n",
                r.spec.name(),
                r.thresholds.t_perf,
                r.thresholds.t_subs
            ));
        }
    }
    write_text(&cfg.out, &text)?;

    let mask = selection::apply_variance_threshold(&fm, cfg.thresholds)?;
    let mut mask_json = serde_json::to_value(mask.to_file(&fm))?;
    mask_json["run_config"] = serde_json::to_value(cfg)?;
    write_text(&cfg.out_dir.join("mask.json"), &serde_json::to_string_pretty(&mask_json)?)?;

    Ok(EvaluateSummary { report: cfg.out.clone(), runs })
}

/// Markdown table of the four combinations, the winner marked with `*`.
pub fn render_sweep(spec: &ModelSpec, result: &ThresholdSweepResult) -> String {
    let mut out = format!("## Threshold sweep ({})\n\n| Thresholds | Accuracy | Best |\n|---|---|---|\n", spec.label());
    for (t, acc) in &result.accuracies {
        let mark = if *t == result.winner { "*" } else { "" };
        out.push_str(&format!("| ({:.2}, {:.2}) | {} | {mark} |\n", t.t_perf, t.t_subs, eval::format_percent(*acc)));
    }
    out
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<(ThresholdSweepResult, String)> {
    let ds = load(cfg)?;
    let fm = assemble_feature_matrix(&ds);
    let specs = cfg.model_specs()?;
    let spec = specs.first().ok_or_else(|| Error::InvalidSpec("no model given".into()))?;
    if specs.len() > 1 {
        log::warn!("sweep runs one model; using {spec}");
    }
    let result = selection::threshold_sweep(&fm, &ds.grades(), spec, cfg.normalize, cfg.global_prep)?;
    let table = render_sweep(spec, &result);
    write_text(&cfg.out_dir.join("sweep.md"), &format!("{}\n\n{table}", cfg.markdown_header()))?;

    let mask = selection::apply_variance_threshold(&fm, result.winner)?;
    let mut mask_json = serde_json::to_value(mask.to_file(&fm))?;
    mask_json["run_config"] = serde_json::to_value(cfg)?;
    write_text(&cfg.out_dir.join("mask.json"), &serde_json::to_string_pretty(&mask_json)?)?;
    Ok((result, table))
}

/// Runs a parsed command line; returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match RunConfig::resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let result = match &cli.command {
        Command::Synth { .. } => cmd_synth(&cfg).map(|s| {
            println!(
                "wrote {} ({} events) and {} ({} students)",
                s.submissions.display(),
                s.n_events,
                s.gradebook.display(),
                s.n_students
            );
            EXIT_OK
        }),
        Command::Extract { .. } => cmd_extract(&cfg).map(|s| {
            println!("{} rows x {} feature columns -> {}", s.rows, s.cols, s.path.display());
            EXIT_OK
        }),
        Command::Evaluate { .. } => cmd_evaluate(&cfg).map(|s| {
            for r in &s.runs {
                match &r.outcome {
                    Ok(row) => println!(
                        "{:<8} accuracy {}  mse {:.3}",
                        r.spec.name(),
                        eval::format_percent(row.report.accuracy),
                        row.report.mse
                    ),
                    Err(e) => println!("{:<8} FAILED: {e}", r.spec.name()),
                }
            }
            println!("report -> {}", s.report.display());
            if s.all_ok() {
                EXIT_OK
            } else {
                EXIT_MODEL
            }
        }),
        Command::Sweep { .. } => cmd_sweep(&cfg).map(|(_, table)| {
            print!("{table}");
            EXIT_OK
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
