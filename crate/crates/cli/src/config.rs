//! Run configuration: defaults, the flat key=value file format, and the
//! command-line flags that override it. The fully resolved configuration is
//! echoed into every run directory and loads back via `--config`.

use std::fmt;
use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::{Path, PathBuf};

use refrec::data::{DataFormat, Orientation};
use refrec::eval::EvalTask;
use refrec::model::{DecayKind, Optimizer, ReflectionMode};
use refrec::HyperParams64;

/// Bad flags, bad config keys, or a missing required input. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Everything a run needs, after defaults, config file, and flags are
/// merged in that order.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: DataFormat,
    pub delimiter: char,
    pub has_header: bool,
    pub implicit: bool,
    pub min_count: usize,
    pub task: EvalTask,
    pub mode: ReflectionMode,
    pub hyper: HyperParams64,
    pub k_list: Vec<usize>,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub k_neighbors: usize,
    pub lambda_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub deterministic: bool,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            format: DataFormat::MlDat,
            delimiter: ',',
            has_header: false,
            implicit: false,
            min_count: 0,
            task: EvalTask::Rating,
            mode: ReflectionMode::ImplicitT,
            hyper: HyperParams64::default(),
            k_list: vec![3, 5, 10],
            train_fraction: 0.9,
            val_fraction: 0.05,
            k_neighbors: 10,
            lambda_grid: vec![0.5, 0.1, 0.05, 0.01, 0.005, 0.001, 0.0005],
            alpha_grid: vec![200.0, 20.0, 2.0, 0.2, 0.02],
            deterministic: false,
            checkpoint: None,
            out: PathBuf::from("run"),
        }
    }
}

/// Valid config keys, in the order `render` writes them.
pub const KEYS: [&str; 33] = [
    "data",
    "format",
    "delimiter",
    "has_header",
    "implicit",
    "min_count",
    "task",
    "mode",
    "decay",
    "alpha",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "dp",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "residual",
    "orientation",
    "optimizer",
    "clip_predictions",
    "seed",
    "k_list",
    "train_fraction",
    "val_fraction",
    "k_neighbors",
    "lambda_grid",
    "alpha_grid",
    "deterministic",
    "checkpoint",
    "out",
];

/// Flags shared by every subcommand. Each one overrides the corresponding
/// config key; unset flags leave the key at its file or default value.
#[derive(Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// Config file of key=value lines; flags override file values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Ratings file to ingest
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Input dialect
    #[arg(long, value_parser = ["ml-dat", "csv"])]
    pub format: Option<String>,
    /// Field separator for csv input
    #[arg(long, value_name = "CHAR")]
    pub delimiter: Option<char>,
    /// Skip the first input line
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL", value_parser = bool_lexeme)]
    pub has_header: Option<bool>,
    /// Read every interaction as value 1
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL", value_parser = bool_lexeme)]
    pub implicit: Option<bool>,
    /// Drop users and items with fewer records, repeated to a fixpoint
    #[arg(long, value_name = "N")]
    pub min_count: Option<usize>,
    /// What to score
    #[arg(long, value_parser = ["rating", "ranking"])]
    pub task: Option<String>,
    /// Reflection variant, or plain for no imputation
    #[arg(long, value_parser = ["tied", "independent", "implicit", "plain"])]
    pub mode: Option<String>,
    /// Decay family damping imputed scores
    #[arg(long, value_parser = ["phi1", "phi2", "phi3", "phi4"])]
    pub decay: Option<String>,
    /// Decay strength
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Encoder L2 weight
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Decoder L2 weight
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Latent-map anchor weight
    #[arg(long)]
    pub lambda3: Option<f64>,
    /// Independent-reflector L2 weight
    #[arg(long)]
    pub lambda4: Option<f64>,
    /// Hidden width
    #[arg(long, value_name = "N")]
    pub dp: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Vectors per optimizer step
    #[arg(long, value_name = "N")]
    pub batch: Option<usize>,
    /// Epoch cap
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Epochs past the best validation score before stopping
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    /// Add the raw input back after decoding
    #[arg(long, value_name = "on|off", value_parser = bool_lexeme)]
    pub residual: Option<bool>,
    /// Axis supplying the input vectors
    #[arg(long, value_parser = ["item", "user"])]
    pub orientation: Option<String>,
    /// Update rule
    #[arg(long, value_parser = ["adam", "sgd"])]
    pub optimizer: Option<String>,
    /// Clamp rating predictions to the training range
    #[arg(long, value_name = "on|off", value_parser = bool_lexeme)]
    pub clip: Option<bool>,
    /// Seed for the split, the parameter init, and the epoch shuffle
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ranking cutoffs, comma separated
    #[arg(long, value_name = "LIST")]
    pub k_list: Option<String>,
    /// Fraction of records kept out of the test set
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Fraction of the non-test pool held out for validation
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Neighbors for the imputation baseline
    #[arg(long, value_name = "N")]
    pub k_neighbors: Option<usize>,
    /// Regularization grid, comma separated
    #[arg(long, value_name = "LIST")]
    pub lambda_grid: Option<String>,
    /// Decay-strength grid, comma separated
    #[arg(long, value_name = "LIST")]
    pub alpha_grid: Option<String>,
    /// Bit-reproducible runs: ordered reductions, zeroed seconds column
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL", value_parser = bool_lexeme)]
    pub deterministic: Option<bool>,
    /// Saved model to load
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Vector indices to export, comma separated (default: all)
    #[arg(long, value_name = "LIST")]
    pub vectors: Option<String>,
    /// Run directory; every artifact lands here
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Defaults, then the config file, then flags.
pub fn resolve(args: &CommonArgs) -> Result<RunConfig, UsageError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        apply_file(&mut cfg, path)?;
    }
    if let Some(v) = &args.data {
        cfg.data = Some(v.clone());
    }
    if let Some(v) = &args.format {
        cfg.format = parse_format("format", v)?;
    }
    if let Some(v) = args.delimiter {
        cfg.delimiter = v;
    }
    if let Some(v) = args.has_header {
        cfg.has_header = v;
    }
    if let Some(v) = args.implicit {
        cfg.implicit = v;
    }
    if let Some(v) = args.min_count {
        cfg.min_count = v;
    }
    if let Some(v) = &args.task {
        cfg.task = EvalTask::parse(v).ok_or_else(|| choice_error("task", v, &["rating", "ranking"]))?;
    }
    if let Some(v) = &args.mode {
        cfg.mode = ReflectionMode::parse(v)
            .ok_or_else(|| choice_error("mode", v, &["tied", "independent", "implicit", "plain"]))?;
    }
    if let Some(v) = &args.decay {
        cfg.hyper.decay = DecayKind::parse(v)
            .ok_or_else(|| choice_error("decay", v, &["phi1", "phi2", "phi3", "phi4"]))?;
    }
    if let Some(v) = args.alpha {
        cfg.hyper.alpha = v;
    }
    if let Some(v) = args.lambda1 {
        cfg.hyper.lambda1 = v;
    }
    if let Some(v) = args.lambda2 {
        cfg.hyper.lambda2 = v;
    }
    if let Some(v) = args.lambda3 {
        cfg.hyper.lambda3 = v;
    }
    if let Some(v) = args.lambda4 {
        cfg.hyper.lambda4 = v;
    }
    if let Some(v) = args.dp {
        cfg.hyper.d_p = v;
    }
    if let Some(v) = args.lr {
        cfg.hyper.learning_rate = v;
    }
    if let Some(v) = args.batch {
        cfg.hyper.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.hyper.max_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.hyper.patience = v;
    }
    if let Some(v) = args.residual {
        cfg.hyper.residual = v;
    }
    if let Some(v) = &args.orientation {
        cfg.hyper.orientation =
            Orientation::parse(v).ok_or_else(|| choice_error("orientation", v, &["item", "user"]))?;
    }
    if let Some(v) = &args.optimizer {
        cfg.hyper.optimizer =
            Optimizer::parse(v).ok_or_else(|| choice_error("optimizer", v, &["adam", "sgd"]))?;
    }
    if let Some(v) = args.clip {
        cfg.hyper.clip_predictions = v;
    }
    if let Some(v) = args.seed {
        cfg.hyper.seed = v;
    }
    if let Some(v) = &args.k_list {
        cfg.k_list = parse_usize_list("k_list", v)?;
    }
    if let Some(v) = args.train_fraction {
        cfg.train_fraction = v;
    }
    if let Some(v) = args.val_fraction {
        cfg.val_fraction = v;
    }
    if let Some(v) = args.k_neighbors {
        cfg.k_neighbors = v;
    }
    if let Some(v) = &args.lambda_grid {
        cfg.lambda_grid = parse_f64_list("lambda_grid", v)?;
    }
    if let Some(v) = &args.alpha_grid {
        cfg.alpha_grid = parse_f64_list("alpha_grid", v)?;
    }
    if let Some(v) = args.deterministic {
        cfg.deterministic = v;
    }
    if let Some(v) = &args.checkpoint {
        cfg.checkpoint = Some(v.clone());
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    Ok(cfg)
}

/// Applies `key = value` lines. Blank lines and `#` comments are skipped.
pub fn apply_file(cfg: &mut RunConfig, path: &Path) -> Result<(), UsageError> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(UsageError(format!(
                "{}:{}: expected key = value, got {line:?}",
                path.display(),
                idx + 1
            )));
        };
        set_key(cfg, key.trim(), value.trim())
            .map_err(|e| UsageError(format!("{}:{}: {e}", path.display(), idx + 1)))?;
    }
    Ok(())
}

fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), UsageError> {
    match key {
        "data" => cfg.data = optional_path(value),
        "format" => cfg.format = parse_format(key, value)?,
        "delimiter" => cfg.delimiter = parse_delimiter(key, value)?,
        "has_header" => cfg.has_header = parse_bool(key, value)?,
        "implicit" => cfg.implicit = parse_bool(key, value)?,
        "min_count" => cfg.min_count = parse_num(key, value)?,
        "task" => {
            cfg.task = EvalTask::parse(value)
                .ok_or_else(|| choice_error(key, value, &["rating", "ranking"]))?;
        }
        "mode" => {
            cfg.mode = ReflectionMode::parse(value)
                .ok_or_else(|| choice_error(key, value, &["tied", "independent", "implicit", "plain"]))?;
        }
        "decay" => {
            cfg.hyper.decay = DecayKind::parse(value)
                .ok_or_else(|| choice_error(key, value, &["phi1", "phi2", "phi3", "phi4"]))?;
        }
        "alpha" => cfg.hyper.alpha = parse_num(key, value)?,
        "lambda1" => cfg.hyper.lambda1 = parse_num(key, value)?,
        "lambda2" => cfg.hyper.lambda2 = parse_num(key, value)?,
        "lambda3" => cfg.hyper.lambda3 = parse_num(key, value)?,
        "lambda4" => cfg.hyper.lambda4 = parse_num(key, value)?,
        "dp" => cfg.hyper.d_p = parse_num(key, value)?,
        "learning_rate" => cfg.hyper.learning_rate = parse_num(key, value)?,
        "batch_size" => cfg.hyper.batch_size = parse_num(key, value)?,
        "max_epochs" => cfg.hyper.max_epochs = parse_num(key, value)?,
        "patience" => cfg.hyper.patience = parse_num(key, value)?,
        "residual" => cfg.hyper.residual = parse_bool(key, value)?,
        "orientation" => {
            cfg.hyper.orientation =
                Orientation::parse(value).ok_or_else(|| choice_error(key, value, &["item", "user"]))?;
        }
        "optimizer" => {
            cfg.hyper.optimizer =
                Optimizer::parse(value).ok_or_else(|| choice_error(key, value, &["adam", "sgd"]))?;
        }
        "clip_predictions" => cfg.hyper.clip_predictions = parse_bool(key, value)?,
        "seed" => cfg.hyper.seed = parse_num(key, value)?,
        "k_list" => cfg.k_list = parse_usize_list(key, value)?,
        "train_fraction" => cfg.train_fraction = parse_num(key, value)?,
        "val_fraction" => cfg.val_fraction = parse_num(key, value)?,
        "k_neighbors" => cfg.k_neighbors = parse_num(key, value)?,
        "lambda_grid" => cfg.lambda_grid = parse_f64_list(key, value)?,
        "alpha_grid" => cfg.alpha_grid = parse_f64_list(key, value)?,
        "deterministic" => cfg.deterministic = parse_bool(key, value)?,
        "checkpoint" => cfg.checkpoint = optional_path(value),
        "out" => {
            if value.is_empty() {
                return Err(UsageError("key out: a directory is required".into()));
            }
            cfg.out = PathBuf::from(value);
        }
        unknown => {
            return Err(UsageError(format!(
                "unknown key {unknown:?}; valid keys: {}",
                KEYS.join(", ")
            )));
        }
    }
    Ok(())
}

/// All keys in a fixed order, loadable back through [`apply_file`].
pub fn render(cfg: &RunConfig) -> String {
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "data = {}", path(&cfg.data));
    let _ = writeln!(s, "format = {}", format_name(cfg.format));
    let _ = writeln!(s, "delimiter = {}", render_delimiter(cfg.delimiter));
    let _ = writeln!(s, "has_header = {}", cfg.has_header);
    let _ = writeln!(s, "implicit = {}", cfg.implicit);
    let _ = writeln!(s, "min_count = {}", cfg.min_count);
    let _ = writeln!(s, "task = {}", cfg.task.as_str());
    let _ = writeln!(s, "mode = {}", cfg.mode.as_str());
    let _ = writeln!(s, "decay = {}", cfg.hyper.decay.as_str());
    let _ = writeln!(s, "alpha = {}", cfg.hyper.alpha);
    let _ = writeln!(s, "lambda1 = {}", cfg.hyper.lambda1);
    let _ = writeln!(s, "lambda2 = {}", cfg.hyper.lambda2);
    let _ = writeln!(s, "lambda3 = {}", cfg.hyper.lambda3);
    let _ = writeln!(s, "lambda4 = {}", cfg.hyper.lambda4);
    let _ = writeln!(s, "dp = {}", cfg.hyper.d_p);
    let _ = writeln!(s, "learning_rate = {}", cfg.hyper.learning_rate);
    let _ = writeln!(s, "batch_size = {}", cfg.hyper.batch_size);
    let _ = writeln!(s, "max_epochs = {}", cfg.hyper.max_epochs);
    let _ = writeln!(s, "patience = {}", cfg.hyper.patience);
    let _ = writeln!(s, "residual = {}", cfg.hyper.residual);
    let _ = writeln!(s, "orientation = {}", cfg.hyper.orientation.as_str());
    let _ = writeln!(s, "optimizer = {}", cfg.hyper.optimizer.as_str());
    let _ = writeln!(s, "clip_predictions = {}", cfg.hyper.clip_predictions);
    let _ = writeln!(s, "seed = {}", cfg.hyper.seed);
    let _ = writeln!(s, "k_list = {}", join_usize(&cfg.k_list));
    let _ = writeln!(s, "train_fraction = {}", cfg.train_fraction);
    let _ = writeln!(s, "val_fraction = {}", cfg.val_fraction);
    let _ = writeln!(s, "k_neighbors = {}", cfg.k_neighbors);
    let _ = writeln!(s, "lambda_grid = {}", join_f64(&cfg.lambda_grid));
    let _ = writeln!(s, "alpha_grid = {}", join_f64(&cfg.alpha_grid));
    let _ = writeln!(s, "deterministic = {}", cfg.deterministic);
    let _ = writeln!(s, "checkpoint = {}", path(&cfg.checkpoint));
    let _ = writeln!(s, "out = {}", cfg.out.display());
    s
}

fn format_name(f: DataFormat) -> &'static str {
    match f {
        DataFormat::MlDat => "ml-dat",
        DataFormat::Csv => "csv",
    }
}

fn parse_format(key: &str, value: &str) -> Result<DataFormat, UsageError> {
    match value {
        "ml-dat" => Ok(DataFormat::MlDat),
        "csv" => Ok(DataFormat::Csv),
        _ => Err(choice_error(key, value, &["ml-dat", "csv"])),
    }
}

fn render_delimiter(c: char) -> String {
    if c == '\t' {
        "\\t".to_string()
    } else {
        c.to_string()
    }
}

fn parse_delimiter(key: &str, value: &str) -> Result<char, UsageError> {
    if value == "\\t" {
        return Ok('\t');
    }
    let mut chars = value.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(UsageError(format!(
            "key {key}: expected a single character (or \\t), got {value:?}"
        ))),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, UsageError> {
    bool_word(value)
        .ok_or_else(|| UsageError(format!("key {key}: expected true/false/on/off, got {value:?}")))
}

fn bool_word(value: &str) -> Option<bool> {
    match value {
        "true" | "on" => Some(true),
        "false" | "off" => Some(false),
        _ => None,
    }
}

fn bool_lexeme(value: &str) -> Result<bool, String> {
    bool_word(value).ok_or_else(|| format!("expected true/false/on/off, got {value:?}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| UsageError(format!("key {key}: expected a number, got {value:?}")))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, UsageError> {
    let list: Vec<f64> = value
        .split(',')
        .map(|p| parse_num(key, p.trim()))
        .collect::<Result<_, _>>()?;
    if list.is_empty() || list.iter().any(|v| !v.is_finite()) {
        return Err(UsageError(format!("key {key}: expected finite numbers, got {value:?}")));
    }
    Ok(list)
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>, UsageError> {
    let list: Vec<usize> = value
        .split(',')
        .map(|p| parse_num(key, p.trim()))
        .collect::<Result<_, _>>()?;
    if list.is_empty() || list.contains(&0) {
        return Err(UsageError(format!("key {key}: cutoffs must be positive, got {value:?}")));
    }
    Ok(list)
}

/// Comma list of vector indices for the latent export.
pub fn parse_index_list(value: &str) -> Result<Vec<usize>, UsageError> {
    value
        .split(',')
        .map(|p| parse_num("vectors", p.trim()))
        .collect()
}

fn join_usize(list: &[usize]) -> String {
    list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn join_f64(list: &[f64]) -> String {
    list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn choice_error(key: &str, value: &str, choices: &[&str]) -> UsageError {
    UsageError(format!(
        "key {key}: expected one of {}, got {value:?}",
        choices.join("/")
    ))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_every_key_and_round_trip() {
        let cfg = RunConfig::default();
        let text = render(&cfg);
        assert_eq!(text.lines().count(), KEYS.len());
        for (line, key) in text.lines().zip(KEYS) {
            assert!(line.starts_with(&format!("{key} =")), "{line}");
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.config");
        fs::write(&path, &text).unwrap();
        let mut reloaded = RunConfig::default();
        reloaded.hyper.alpha = 999.0;
        reloaded.out = PathBuf::from("elsewhere");
        apply_file(&mut reloaded, &path).unwrap();
        assert_eq!(render(&reloaded), text);
    }

    #[test]
    fn unknown_key_lists_the_valid_ones() {
        let mut cfg = RunConfig::default();
        let err = set_key(&mut cfg, "alpah", "2").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpah"), "{msg}");
        assert!(msg.contains("alpha"), "{msg}");
        assert!(msg.contains("valid keys"), "{msg}");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let mut cfg = RunConfig::default();
        let err = set_key(&mut cfg, "alpha", "twenty").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        let err = set_key(&mut cfg, "mode", "tide").unwrap_err();
        assert!(err.to_string().contains("mode"), "{err}");
        assert!(err.to_string().contains("tied"), "{err}");
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.config");
        fs::write(&path, "alpha = 20\nseed = 7\n").unwrap();
        let args = CommonArgs {
            config: Some(path),
            alpha: Some(2.0),
            ..CommonArgs::default()
        };
        let cfg = resolve(&args).unwrap();
        assert_eq!(cfg.hyper.alpha, 2.0);
        assert_eq!(cfg.hyper.seed, 7);
    }

    #[test]
    fn lists_and_delimiters_parse() {
        let mut cfg = RunConfig::default();
        set_key(&mut cfg, "k_list", "1, 5,20").unwrap();
        assert_eq!(cfg.k_list, vec![1, 5, 20]);
        set_key(&mut cfg, "lambda_grid", "0.5,0.0005").unwrap();
        assert_eq!(cfg.lambda_grid, vec![0.5, 0.0005]);
        set_key(&mut cfg, "delimiter", "\\t").unwrap();
        assert_eq!(cfg.delimiter, '\t');
        assert!(set_key(&mut cfg, "k_list", "3,0").is_err());
        assert!(set_key(&mut cfg, "lambda_grid", "").is_err());
        assert!(set_key(&mut cfg, "delimiter", "ab").is_err());
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.config");
        fs::write(&path, "# a comment\n\nseed = 9\n").unwrap();
        let mut cfg = RunConfig::default();
        apply_file(&mut cfg, &path).unwrap();
        assert_eq!(cfg.hyper.seed, 9);
        fs::write(&path, "seed 9\n").unwrap();
        let err = apply_file(&mut cfg, &path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }
}
