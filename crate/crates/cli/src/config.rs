//! Flag/file/default resolution. Every subcommand declares its keys once via
//! [`command_config!`], which yields a clap struct of optional flags and a
//! resolved struct with concrete values. Resolution layers defaults, then the
//! JSON file, then flags, and deserializes the result with unknown keys
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config keys or out-of-range values.
    Usage(String),
    /// I/O or simulation failures.
    Runtime(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON file with flat kebab-case keys; flags override its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR", default_value = "hbbm-out")]
    pub out: PathBuf,
    /// Worker threads for replicate loops; outputs do not depend on it
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Exit with status 2 when a validation check is breached
    #[arg(long)]
    pub strict: bool,
}

/// `--seed` value: an integer or `random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedArg {
    Fixed(u64),
    Random(RandomTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomTag {
    Random,
}

impl FromStr for SeedArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("random") {
            return Ok(SeedArg::Random(RandomTag::Random));
        }
        s.parse::<u64>()
            .map(SeedArg::Fixed)
            .map_err(|_| format!("expected a non-negative integer or `random`, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Default,
    Given,
    Random,
}

/// Declares the flag struct and the resolved config of a subcommand.
/// Fields without `= default` are required.
macro_rules! command_config {
    (
        $(#[$fm:meta])*
        $flags:ident => $resolved:ident {
            $(
                $(#[doc = $doc:literal])*
                $(#[arg($($arg:tt)*)])?
                $field:ident : $ty:ty $(= $default:expr)?
            ),* $(,)?
        }
    ) => {
        $(#[$fm])*
        #[derive(Debug, Clone, Default, clap::Args, serde::Serialize)]
        #[command(allow_negative_numbers = true)]
        #[serde(rename_all = "kebab-case")]
        pub struct $flags {
            $(
                $(#[doc = $doc])*
                #[arg(long $(, $($arg)*)?)]
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
            /// Master seed: an integer, or `random` to draw one (recorded in config.json)
            #[arg(long, value_name = "SEED|random")]
            #[serde(skip_serializing_if = "Option::is_none")]
            pub seed: Option<$crate::config::SeedArg>,
            #[command(flatten)]
            #[serde(skip)]
            pub common: $crate::config::Common,
        }

        #[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        pub struct $resolved {
            $( pub $field: $ty, )*
            pub seed: u64,
        }

        impl $crate::config::Layered for $flags {
            type Resolved = $resolved;

            fn defaults() -> serde_json::Map<String, serde_json::Value> {
                #[allow(unused_mut)]
                let mut m = serde_json::Map::new();
                $($(
                    let v: $ty = $default;
                    m.insert(
                        stringify!($field).replace('_', "-"),
                        serde_json::to_value(v).expect("defaults serialize"),
                    );
                )?)*
                m
            }

            fn common(&self) -> &$crate::config::Common {
                &self.common
            }
        }
    };
}
pub(crate) use command_config;

pub trait Layered: Serialize {
    type Resolved: Serialize + DeserializeOwned;
    fn defaults() -> Map<String, Value>;
    fn common(&self) -> &Common;
}

#[derive(Debug, Clone)]
pub struct Resolution<R> {
    pub config: R,
    pub seed_source: SeedSource,
}

fn read_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(usage(format!("config {} must hold a JSON object", path.display()))),
        Err(e) => Err(usage(format!("config {}: {e}", path.display()))),
    }
}

/// Layers defaults, the config file and the flags, then deserializes.
pub fn resolve<F: Layered>(flags: &F) -> Result<Resolution<F::Resolved>, CliError> {
    let mut merged = F::defaults();
    if let Some(path) = &flags.common().config {
        merged.extend(read_file(path)?);
    }
    match serde_json::to_value(flags).expect("flags serialize") {
        Value::Object(m) => merged.extend(m),
        _ => unreachable!("flag structs serialize to objects"),
    }
    let seed_source = match merged.get("seed") {
        None => {
            merged.insert("seed".into(), DEFAULT_SEED.into());
            SeedSource::Default
        }
        Some(Value::String(s)) if s.eq_ignore_ascii_case("random") => {
            merged.insert("seed".into(), rand::random::<u64>().into());
            SeedSource::Random
        }
        Some(_) => SeedSource::Given,
    };
    let config = serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))?;
    Ok(Resolution { config, seed_source })
}

/// Range check naming the offending key.
pub fn check(ok: bool, field: &str, msg: impl fmt::Display) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(usage(format!("invalid {field}: {msg}")))
    }
}

pub fn positive(v: f64, field: &str) -> Result<(), CliError> {
    check(v > 0.0 && v.is_finite(), field, format_args!("must be positive, got {v}"))
}
