//! Command-line grammar and its translation into [`Command`].

use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use i3_core::envelope::{Record, Value};
use i3_core::node::ServiceKind;
use url::Url;

use crate::config::Defaults;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    /// Raw reply envelopes where the command makes a call.
    Xml,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub output: OutputFormat,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Broker {
        host: IpAddr,
        port: u16,
        snapshot: Option<PathBuf>,
    },
    Serve(ServeArgs),
    Deploy {
        wsdd: PathBuf,
        container: Url,
    },
    Undeploy {
        wsdd: PathBuf,
        container: Url,
    },
    Call {
        broker: Url,
        service: String,
        method: String,
        args: Vec<Value>,
        timeout: Duration,
    },
    Seed {
        broker: Url,
        fixture: PathBuf,
        targets: Vec<SeedTarget>,
        timeout: Duration,
    },
    Verify {
        broker: Url,
        student: String,
        timeout: Duration,
    },
    Issue {
        broker: Url,
        student: String,
        programme: String,
        timeout: Duration,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServeArgs {
    pub services: Vec<ServiceKind>,
    pub wsdd: Vec<PathBuf>,
    pub store_dir: PathBuf,
    pub broker: Url,
    pub host: IpAddr,
    pub port: u16,
    pub timeout: Duration,
    pub access_log: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub console: Option<PathBuf>,
    pub delay: Option<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum SeedTarget {
    Amis,
    Lmis,
    Hmis,
    Emis,
}

impl SeedTarget {
    pub const ALL: [SeedTarget; 4] = [SeedTarget::Amis, SeedTarget::Lmis, SeedTarget::Hmis, SeedTarget::Emis];
}

/// Bad command line; `text` is ready to print. Help and version requests
/// arrive here too, with `exit_code` 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError {
    pub text: String,
    pub exit_code: i32,
}

impl UsageError {
    fn new(text: impl Into<String>) -> Self {
        UsageError {
            text: format!("error: {}\n\nFor more information, try '--help'.\n", text.into()),
            exit_code: crate::exec::EXIT_USAGE,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "i3", version, about = "Run, deploy and call the i3 department services")]
struct Cli {
    /// Output style for results.
    #[arg(long, value_enum, default_value_t = OutputFormat::Text, global = true)]
    output: OutputFormat,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Run the service broker.
    Broker {
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8700)]
        port: u16,
        /// Registry snapshot file, reloaded at start.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Host department services in a container and deploy them.
    Serve {
        /// Comma-separated: amis, lmis, hmis, emis, campus:CODE.
        #[arg(long, value_delimiter = ',', required = true)]
        services: Vec<String>,
        /// Deployment descriptors; only services this process implements are deployed.
        #[arg(long)]
        wsdd: Vec<PathBuf>,
        /// Store root; each service keeps its files in its own subdirectory.
        #[arg(long = "store")]
        store_dir: Option<PathBuf>,
        #[arg(long)]
        broker: Option<String>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// 0 picks a free port.
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Deadline for outgoing calls and provider probes.
        #[arg(long)]
        timeout_ms: Option<u64>,
        /// Journal every store file this process touches.
        #[arg(long)]
        access_log: Option<PathBuf>,
        /// Also write audit records to this file as JSON lines.
        #[arg(long)]
        audit_log: Option<PathBuf>,
        /// Directory of console assets served under /console.
        #[arg(long)]
        console: Option<PathBuf>,
        /// Added latency before every invocation, in milliseconds.
        #[arg(long)]
        delay_ms: Option<u64>,
    },
    /// Deploy services from a descriptor on a running container.
    Deploy {
        #[arg(long)]
        wsdd: PathBuf,
        #[arg(long)]
        container: String,
    },
    /// Undeploy services named in an undeployment descriptor.
    Undeploy {
        #[arg(long)]
        wsdd: PathBuf,
        #[arg(long)]
        container: String,
    },
    /// Invoke a method by service name.
    Call {
        #[arg(long)]
        broker: Option<String>,
        #[arg(long)]
        service: String,
        #[arg(long)]
        method: String,
        /// kind:value, with kind one of s, i, b, d, j; or plain `nil`.
        #[arg(long = "arg", allow_hyphen_values = true)]
        args: Vec<String>,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Load a fixture directory through the services.
    Seed {
        #[arg(long)]
        broker: Option<String>,
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        targets: Vec<SeedTarget>,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Run a No-Dues verification for a student.
    Verify {
        #[arg(long)]
        broker: Option<String>,
        #[arg(long)]
        student: String,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Issue a degree certificate.
    Issue {
        #[arg(long)]
        broker: Option<String>,
        #[arg(long)]
        student: String,
        #[arg(long)]
        programme: String,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
}

fn url(s: &str, what: &str) -> Result<Url, UsageError> {
    let u = Url::parse(s).map_err(|e| UsageError::new(format!("--{what} {s:?}: {e}")))?;
    if !matches!(u.scheme(), "http" | "https") || u.host().is_none() {
        return Err(UsageError::new(format!("--{what} {s:?}: expected an http URL")));
    }
    // joins treat the last segment as a file unless the path ends in '/'
    if u.path().ends_with('/') {
        Ok(u)
    } else {
        Url::parse(&format!("{u}/")).map_err(|e| UsageError::new(e.to_string()))
    }
}

fn existing_file(p: PathBuf, what: &str) -> Result<PathBuf, UsageError> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(UsageError::new(format!("--{what} {}: no such file", p.display())))
    }
}

fn existing_dir(p: PathBuf, what: &str) -> Result<PathBuf, UsageError> {
    if p.is_dir() {
        Ok(p)
    } else {
        Err(UsageError::new(format!("--{what} {}: no such directory", p.display())))
    }
}

/// Parses `argv` (including the program name) using the given defaults.
pub fn parse_args_with<I, T>(argv: I, defaults: &Defaults) -> Result<Invocation, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| UsageError {
        text: e.render().to_string(),
        exit_code: if e.use_stderr() { crate::exec::EXIT_USAGE } else { 0 },
    })?;
    let broker = |flag: Option<String>| url(flag.as_deref().unwrap_or(defaults.broker_url()), "broker");
    let timeout = |flag: Option<u64>| Duration::from_millis(flag.unwrap_or(defaults.timeout_ms()));
    let command = match cli.command {
        Sub::Broker { host, port, snapshot } => Command::Broker { host, port, snapshot },
        Sub::Serve {
            services,
            wsdd,
            store_dir,
            broker: b,
            host,
            port,
            timeout_ms,
            access_log,
            audit_log,
            console,
            delay_ms,
        } => {
            let services = services
                .iter()
                .map(|s| s.parse::<ServiceKind>().map_err(UsageError::new))
                .collect::<Result<Vec<_>, _>>()?;
            Command::Serve(ServeArgs {
                services,
                wsdd: wsdd
                    .into_iter()
                    .map(|p| existing_file(p, "wsdd"))
                    .collect::<Result<_, _>>()?,
                store_dir: store_dir.unwrap_or_else(|| defaults.store_dir()),
                broker: broker(b)?,
                host,
                port,
                timeout: timeout(timeout_ms),
                access_log,
                audit_log,
                console: console.map(|c| existing_dir(c, "console")).transpose()?,
                delay: delay_ms.map(Duration::from_millis),
            })
        }
        Sub::Deploy { wsdd, container } => Command::Deploy {
            wsdd: existing_file(wsdd, "wsdd")?,
            container: url(&container, "container")?,
        },
        Sub::Undeploy { wsdd, container } => Command::Undeploy {
            wsdd: existing_file(wsdd, "wsdd")?,
            container: url(&container, "container")?,
        },
        Sub::Call {
            broker: b,
            service,
            method,
            args,
            timeout_ms,
        } => Command::Call {
            broker: broker(b)?,
            service,
            method,
            args: args
                .iter()
                .map(|a| parse_value_arg(a).map_err(UsageError::new))
                .collect::<Result<_, _>>()?,
            timeout: timeout(timeout_ms),
        },
        Sub::Seed {
            broker: b,
            fixture,
            mut targets,
            timeout_ms,
        } => {
            if targets.is_empty() {
                targets = SeedTarget::ALL.to_vec();
            }
            targets.sort();
            targets.dedup();
            Command::Seed {
                broker: broker(b)?,
                fixture: existing_dir(fixture, "fixture")?,
                targets,
                timeout: timeout(timeout_ms),
            }
        }
        Sub::Verify {
            broker: b,
            student,
            timeout_ms,
        } => Command::Verify {
            broker: broker(b)?,
            student,
            timeout: timeout(timeout_ms),
        },
        Sub::Issue {
            broker: b,
            student,
            programme,
            timeout_ms,
        } => Command::Issue {
            broker: broker(b)?,
            student,
            programme,
            timeout: timeout(timeout_ms),
        },
    };
    Ok(Invocation {
        output: cli.output,
        command,
    })
}

/// Parses `argv` with defaults from the environment and `./i3.toml`.
pub fn parse_args<I, T>(argv: I) -> Result<Invocation, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let defaults =
        Defaults::load(Path::new("."), std::env::var(crate::config::BROKER_ENV).ok()).map_err(UsageError::new)?;
    parse_args_with(argv, &defaults)
}

/// One `--arg`: `s:text`, `i:42`, `b:true`, `d:2024-01-31`, `nil`, or
/// `j:JSON` (see [`json_to_value`]).
pub fn parse_value_arg(arg: &str) -> Result<Value, String> {
    if arg == "nil" {
        return Ok(Value::Nil);
    }
    let Some((kind, raw)) = arg.split_once(':') else {
        return Err(format!("argument {arg:?} is not kind:value"));
    };
    match kind {
        "s" => Ok(Value::Text(raw.to_string())),
        "i" => raw
            .parse()
            .map(Value::Int)
            .map_err(|_| format!("argument {arg:?}: not an integer")),
        "b" => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("argument {arg:?}: expected true or false")),
        },
        "d" => NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map(Value::Date)
            .map_err(|e| format!("argument {arg:?}: {e}")),
        "j" => {
            let json: serde_json::Value = serde_json::from_str(raw).map_err(|e| format!("argument {arg:?}: {e}"))?;
            json_to_value(&json).map_err(|e| format!("argument {arg:?}: {e}"))
        }
        other => Err(format!("argument {arg:?}: unknown kind {other:?}")),
    }
}

/// JSON form of values: strings, integers, booleans, `null` and arrays map
/// directly; `{"@date": "YYYY-MM-DD"}` is a date; any other object must name
/// its record type in `"@type"`.
pub fn json_to_value(j: &serde_json::Value) -> Result<Value, String> {
    use serde_json::Value as J;
    Ok(match j {
        J::Null => Value::Nil,
        J::Bool(b) => Value::Bool(*b),
        J::Number(n) => Value::Int(n.as_i64().ok_or_else(|| format!("{n} is not a 64-bit integer"))?),
        J::String(s) => Value::Text(s.clone()),
        J::Array(items) => Value::List(items.iter().map(json_to_value).collect::<Result<_, _>>()?),
        J::Object(map) => {
            if let Some(d) = map.get("@date") {
                let s = d.as_str().ok_or("@date must be a string")?;
                return NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map(Value::Date)
                    .map_err(|e| format!("@date {s:?}: {e}"));
            }
            let qname = map
                .get("@type")
                .and_then(J::as_str)
                .ok_or("objects need an \"@type\" record name")?;
            let mut record = Record::new(qname);
            for (k, v) in map.iter().filter(|(k, _)| *k != "@type") {
                record.fields.insert(k.clone(), json_to_value(v)?);
            }
            Value::Record(record)
        }
    })
}

/// Inverse of [`json_to_value`].
pub fn value_to_json(v: &Value) -> serde_json::Value {
    use serde_json::{json, Map, Value as J};
    match v {
        Value::Text(s) => J::String(s.clone()),
        Value::Int(i) => json!(i),
        Value::Bool(b) => J::Bool(*b),
        Value::Date(d) => json!({ "@date": d.to_string() }),
        Value::List(items) => J::Array(items.iter().map(value_to_json).collect()),
        Value::Nil => J::Null,
        Value::Record(r) => {
            let mut map = Map::new();
            map.insert("@type".into(), J::String(r.qname.clone()));
            for (k, v) in &r.fields {
                map.insert(k.clone(), value_to_json(v));
            }
            J::Object(map)
        }
    }
}
