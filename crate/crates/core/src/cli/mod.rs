//! Command-line front end. Every subcommand resolves its parameters from
//! defaults, an optional JSON config file and the flags (in increasing
//! priority), validates them, runs, and emits a JSON run report.

mod commands;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub use commands::*;
pub use report::Report;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad parameters; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    crate::mesh::MeshError,
    crate::sampling::SamplingError,
    crate::sdf::SdfError,
    crate::views::ViewError,
    crate::texture::TextureError,
    crate::lowpoly::LowpolyError,
    crate::kernels::KernelError,
    std::io::Error,
    serde_json::Error
);

pub type Result<T> = std::result::Result<T, CliError>;

/// Flags shared by every subcommand that are not run parameters.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON object of parameters keyed by flag name; flags on the command line win.
    /// A previous run report is accepted too (its `parameters` are used).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write the run report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(name = "shapetex", version, about = "Geometry and texture tools for textured 3D assets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Uniform and sharp-edge surface samples, optionally reduced by farthest point sampling.
    Sample(SampleArgs),
    /// Signed distance grid of a mesh or an analytic sphere.
    SdfGrid(SdfGridArgs),
    /// Marching-cubes surface of a grid file.
    Extract(ExtractArgs),
    /// Volume and near-surface IoU of two meshes.
    Iou(IouArgs),
    /// Greedy texture-coverage view selection.
    SelectViews(SelectViewsArgs),
    /// Bakes view images into a UV texture and coverage mask.
    Bake(BakeArgs),
    /// Fills uncovered texels from nearby textured geometry.
    Inpaint(InpaintArgs),
    /// Decimates a textured mesh and rebakes its texture.
    Lowpoly(LowpolyArgs),
    /// Trains a tiny flow-matching network on a shifted Gaussian.
    FlowDemo(FlowDemoArgs),
    /// Checks the multi-task attention kernel on random inputs.
    AttnCheck(AttnCheckArgs),
    /// select-views, bake and inpaint in one run.
    Pipeline(PipelineArgs),
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Sample(a) => execute(a),
        Command::SdfGrid(a) => execute(a),
        Command::Extract(a) => execute(a),
        Command::Iou(a) => execute(a),
        Command::SelectViews(a) => execute(a),
        Command::Bake(a) => execute(a),
        Command::Inpaint(a) => execute(a),
        Command::Lowpoly(a) => execute(a),
        Command::FlowDemo(a) => execute(a),
        Command::AttnCheck(a) => execute(a),
        Command::Pipeline(a) => execute(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// One subcommand: its parameter struct doubles as the config-file schema.
pub trait RunCommand: Serialize + DeserializeOwned + Clone + Send {
    const NAME: &'static str;
    fn defaults() -> Self;
    fn common(&self) -> &Common;
    fn set_common(&mut self, common: Common);
    fn threads(&self) -> usize;
    /// Checks every parameter before any work starts.
    fn validate(&self) -> Result<()>;
    /// Runs the command; may fill derived parameters so the report holds the resolved set.
    fn execute(&mut self, report: &mut Report) -> Result<()>;
}

fn execute<C: RunCommand>(cli: C) -> Result<()> {
    let common = cli.common().clone();
    let config = match &common.config {
        Some(path) => load_config(path, C::NAME)?,
        None => Map::new(),
    };
    let mut args: C = resolve(&cli, &C::defaults(), &config)?;
    args.set_common(common.clone());
    if args.threads() > 4096 {
        return Err(CliError::Usage(format!("--threads ({}) is unreasonably large", args.threads())));
    }
    args.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads())
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let mut report = Report::new(C::NAME, pool.current_num_threads());
    pool.install(|| args.execute(&mut report))?;
    report.finish(&args)?;
    match &common.report {
        Some(path) => report.save(path)?,
        None => println!("{}", report.to_json()?),
    }
    Ok(())
}

fn load_config(path: &std::path::Path, command: &str) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("--config: cannot read {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--config: {}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Usage("--config: expected a JSON object".into()));
    };
    if let (Some(Value::String(c)), Some(Value::Object(_))) = (map.get("command"), map.get("parameters")) {
        if c != command {
            return Err(CliError::Usage(format!("--config: report is for `{c}`, not `{command}`")));
        }
        let Some(Value::Object(params)) = map.remove("parameters") else { unreachable!() };
        map = params;
    }
    Ok(map.into_iter().map(|(k, v)| (k.replace('_', "-"), v)).collect())
}

fn non_null<T: Serialize>(value: &T) -> Result<Map<String, Value>> {
    match serde_json::to_value(value)? {
        Value::Object(m) => Ok(m.into_iter().filter(|(_, v)| !v.is_null()).collect()),
        _ => unreachable!("parameter structs serialize to objects"),
    }
}

/// Defaults, then config entries, then explicit flags.
fn resolve<C: RunCommand>(cli: &C, defaults: &C, config: &Map<String, Value>) -> Result<C> {
    let mut merged = non_null(defaults)?;
    for (k, v) in config {
        if !v.is_null() {
            merged.insert(k.clone(), v.clone());
        }
    }
    merged.extend(non_null(cli)?);
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("--config: {e}")))
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let cli = SampleArgs {
            seed: Some(9),
            ..Default::default()
        };
        let mut config = Map::new();
        config.insert("seed".into(), Value::from(3));
        config.insert("uniform".into(), Value::from(100));
        let r = resolve(&cli, &SampleArgs::defaults(), &config).unwrap();
        assert_eq!(r.seed, Some(9));
        assert_eq!(r.uniform, Some(100));
        assert_eq!(r.importance, SampleArgs::defaults().importance);
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let mut config = Map::new();
        config.insert("bogus".into(), Value::from(1));
        let err = resolve(&SampleArgs::default(), &SampleArgs::defaults(), &config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn report_is_accepted_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        std::fs::write(&path, r#"{"command":"sample","parameters":{"seed":4,"target_faces":null}}"#).unwrap();
        let map = load_config(&path, "sample").unwrap();
        assert_eq!(map["seed"], Value::from(4));
        assert!(map.contains_key("target-faces"));
        assert!(load_config(&path, "iou").is_err());
    }
}
