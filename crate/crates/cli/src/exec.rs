//! Runs a parsed [`Command`] and maps its outcome to an exit code.

use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use i3_core::broker::Registry;
use i3_core::emis::{Certificate, NoDuesStatus, Overall, EMIS_SERVICE};
use i3_core::envelope::{encode_envelope, Body, Envelope, Fault, FaultCode, MappingTable, RecordCodec, Value};
use i3_core::node::{Node, NodeConfig};
use i3_core::rpc::{http_client, CallError, RpcClient};
use i3_core::server::{self, DeployReport, Surface, UndeployReport};
use i3_core::wsdd::{parse_wsdd, Descriptor};
use tokio::net::TcpListener;
use url::Url;

use crate::args::{value_to_json, Command, Invocation, OutputFormat, ServeArgs};
use crate::render;
use crate::seed;

pub const EXIT_OK: i32 = 0;
/// A fault, a refused verification, or a rejected descriptor.
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

/// Where a command writes. Results go to `out`, diagnostics to `err`.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

/// Exit code for a failed call. An unregistered service reads as the
/// NoSuchService fault a container would have returned.
pub fn exit_code(e: &CallError) -> i32 {
    match e {
        CallError::Fault(_) | CallError::NotFound(_) => EXIT_DOMAIN,
        CallError::Connection(_) | CallError::Timeout | CallError::Protocol(_) => EXIT_TRANSPORT,
    }
}

fn unregistered(name: &str) -> Fault {
    Fault::new(
        FaultCode::NoSuchService,
        "NoSuchService",
        format!("{name} is not registered with the broker"),
    )
}

/// Future resolving on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub async fn execute(inv: Invocation, io: &mut Io<'_>) -> i32 {
    let out = inv.output;
    let result = match inv.command {
        Command::Broker { host, port, snapshot } => broker(host, port, snapshot, io).await,
        Command::Serve(args) => serve(args, io).await,
        Command::Deploy { wsdd, container } => deploy(&wsdd, &container, false, out, io).await,
        Command::Undeploy { wsdd, container } => deploy(&wsdd, &container, true, out, io).await,
        Command::Call {
            broker,
            service,
            method,
            args,
            timeout,
        } => call(broker, &service, &method, args, timeout, out, io).await,
        Command::Seed {
            broker,
            fixture,
            targets,
            timeout,
        } => {
            let rpc = RpcClient::with_timeout(broker, timeout);
            seed::run(&rpc, &fixture, &targets, out, io).await
        }
        Command::Verify {
            broker,
            student,
            timeout,
        } => verify(broker, &student, timeout, out, io).await,
        Command::Issue {
            broker,
            student,
            programme,
            timeout,
        } => issue(broker, &student, &programme, timeout, out, io).await,
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            EXIT_TRANSPORT
        }
    }
}

type Outcome = std::io::Result<i32>;

async fn bind(host: std::net::IpAddr, port: u16) -> std::io::Result<TcpListener> {
    TcpListener::bind((host, port)).await
}

async fn broker(host: std::net::IpAddr, port: u16, snapshot: Option<std::path::PathBuf>, io: &mut Io<'_>) -> Outcome {
    let registry = match snapshot {
        Some(path) => match Registry::with_snapshot(path) {
            Ok(r) => r,
            Err(e) => {
                writeln!(io.err, "error: {e}")?;
                return Ok(EXIT_DOMAIN);
            }
        },
        None => Registry::new(),
    };
    let surface = Surface {
        registry: Some(Arc::new(registry)),
        ..Surface::default()
    };
    let handle = server::spawn(bind(host, port).await?, server::router(surface))?;
    writeln!(io.out, "listening on {}", handle.url())?;
    io.out.flush()?;
    shutdown_signal().await;
    handle.stop().await?;
    Ok(EXIT_OK)
}

async fn serve(args: ServeArgs, io: &mut Io<'_>) -> Outcome {
    let mut descriptors = Vec::new();
    for path in &args.wsdd {
        match parse_wsdd(&std::fs::read(path)?) {
            Ok(Descriptor::Deployment(d)) => descriptors.push(d),
            Ok(Descriptor::Undeployment(_)) => {
                writeln!(io.err, "error: {} is an undeployment descriptor", path.display())?;
                return Ok(EXIT_DOMAIN);
            }
            Err(e) => {
                writeln!(io.err, "error: {}: {e}", path.display())?;
                return Ok(EXIT_DOMAIN);
            }
        }
    }
    let cfg = NodeConfig {
        services: args.services,
        store_dir: args.store_dir,
        broker: args.broker,
        timeout: args.timeout,
        access_log: args.access_log,
        audit_file: args.audit_log,
        delay: args.delay,
        console_dir: args.console,
        bridge: true,
    };
    let node = match Node::start(bind(args.host, args.port).await?, cfg, &descriptors).await {
        Ok(n) => n,
        Err(e) => {
            writeln!(io.err, "error: {e}")?;
            return Ok(EXIT_DOMAIN);
        }
    };
    writeln!(io.out, "listening on {}", node.url())?;
    for l in &node.report.deployed {
        writeln!(io.out, "deployed {} at {}", l.name, l.endpoint)?;
    }
    for f in &node.report.failed {
        writeln!(io.err, "failed {}: {}", f.name, f.error)?;
    }
    io.out.flush()?;
    node.run_until(shutdown_signal()).await?;
    Ok(EXIT_OK)
}

async fn deploy(
    wsdd: &std::path::Path,
    container: &Url,
    undeploy: bool,
    out: OutputFormat,
    io: &mut Io<'_>,
) -> Outcome {
    let body = std::fs::read(wsdd)?;
    let path = if undeploy { "admin/undeploy" } else { "admin/deploy" };
    let endpoint = container.join(path).expect("relative path joins");
    let resp = match http_client().post(endpoint).body(body).send().await {
        Ok(r) => r,
        Err(e) => {
            writeln!(io.err, "error: transport: {e}")?;
            return Ok(EXIT_TRANSPORT);
        }
    };
    let status = resp.status();
    let bytes = match resp.bytes().await {
        Ok(b) => b,
        Err(e) => {
            writeln!(io.err, "error: transport: {e}")?;
            return Ok(EXIT_TRANSPORT);
        }
    };
    if !status.is_success() {
        writeln!(io.err, "rejected ({status}): {}", String::from_utf8_lossy(&bytes))?;
        return Ok(EXIT_DOMAIN);
    }
    let json: serde_json::Value = match serde_json::from_slice(&bytes) {
        Ok(j) => j,
        Err(e) => {
            writeln!(io.err, "error: protocol: {e}")?;
            return Ok(EXIT_TRANSPORT);
        }
    };
    if matches!(out, OutputFormat::Json) {
        writeln!(io.out, "{json}")?;
    }
    let failed = if undeploy {
        let r: UndeployReport = serde_json::from_value(json).map_err(std::io::Error::other)?;
        if !matches!(out, OutputFormat::Json) {
            for name in &r.removed {
                writeln!(io.out, "{name}")?;
            }
            for d in &r.diagnostics {
                writeln!(io.err, "not undeployed: {d}")?;
            }
        }
        !r.diagnostics.is_empty()
    } else {
        let r: DeployReport = serde_json::from_value(json).map_err(std::io::Error::other)?;
        if !matches!(out, OutputFormat::Json) {
            for l in &r.deployed {
                writeln!(io.out, "{}", l.name)?;
            }
            for f in &r.failed {
                writeln!(io.err, "failed {}: {}", f.name, f.error)?;
            }
        }
        !r.failed.is_empty()
    };
    Ok(if failed { EXIT_DOMAIN } else { EXIT_OK })
}

/// The reply of one call: exact bytes and decoded envelope, or a fault
/// standing in for an unregistered service.
enum Reply {
    Wire(Vec<u8>, Envelope),
    Failed(CallError),
}

async fn exchange(rpc: &RpcClient, service: &str, method: &str, args: Vec<Value>, timeout: Duration) -> Reply {
    match rpc
        .exchange(service, Envelope::call(service, method, args), timeout)
        .await
    {
        Ok((raw, env)) => Reply::Wire(raw, env),
        Err(CallError::NotFound(name)) => {
            let env = Envelope {
                header: Vec::new(),
                body: Body::Fault(unregistered(&name)),
            };
            let raw = encode_envelope(&env, &MappingTable::empty()).expect("faults always encode");
            Reply::Wire(raw, env)
        }
        Err(e) => Reply::Failed(e),
    }
}

fn write_fault(f: &Fault, out: OutputFormat, io: &mut Io<'_>) -> std::io::Result<()> {
    match out {
        OutputFormat::Json => writeln!(
            io.out,
            "{}",
            serde_json::json!({ "fault": { "code": f.code.as_str(), "reason": f.reason, "detail": f.detail } })
        ),
        _ => writeln!(io.out, "{}", render::fault(f)),
    }
}

fn transport(e: &CallError, io: &mut Io<'_>) -> Outcome {
    writeln!(io.err, "error: {e}")?;
    Ok(exit_code(e))
}

async fn call(
    broker: Url,
    service: &str,
    method: &str,
    args: Vec<Value>,
    timeout: Duration,
    out: OutputFormat,
    io: &mut Io<'_>,
) -> Outcome {
    let rpc = RpcClient::with_timeout(broker, timeout);
    let (raw, env) = match exchange(&rpc, service, method, args, timeout).await {
        Reply::Wire(raw, env) => (raw, env),
        Reply::Failed(e) => return transport(&e, io),
    };
    if out == OutputFormat::Xml {
        io.out.write_all(&raw)?;
        io.out.flush()?;
        return Ok(if env.is_fault() { EXIT_DOMAIN } else { EXIT_OK });
    }
    match env.body {
        Body::Response { result } => {
            match out {
                OutputFormat::Json => writeln!(io.out, "{}", value_to_json(&result))?,
                _ => writeln!(io.out, "{}", render::value(&result))?,
            }
            Ok(EXIT_OK)
        }
        Body::Fault(f) => {
            write_fault(&f, out, io)?;
            Ok(EXIT_DOMAIN)
        }
        Body::Call { .. } => transport(&CallError::Protocol("reply was a call".into()), io),
    }
}

/// Verifications wait on three provider probes, each with its own deadline.
fn orchestration_timeout(timeout: Duration) -> Duration {
    timeout * 2 + Duration::from_millis(500)
}

async fn verify(broker: Url, student: &str, timeout: Duration, out: OutputFormat, io: &mut Io<'_>) -> Outcome {
    let rpc = RpcClient::with_timeout(broker, timeout);
    let t = orchestration_timeout(timeout);
    let (raw, env) = match exchange(&rpc, EMIS_SERVICE, "verifyNoDues", vec![Value::text(student)], t).await {
        Reply::Wire(raw, env) => (raw, env),
        Reply::Failed(e) => return transport(&e, io),
    };
    let status = match env.body {
        Body::Response { result } => match NoDuesStatus::from_value(&result) {
            Ok(s) => s,
            Err(e) => return transport(&CallError::Protocol(e.to_string()), io),
        },
        Body::Fault(f) => {
            if out == OutputFormat::Xml {
                io.out.write_all(&raw)?;
            } else {
                write_fault(&f, out, io)?;
            }
            return Ok(EXIT_DOMAIN);
        }
        Body::Call { .. } => return transport(&CallError::Protocol("reply was a call".into()), io),
    };
    match out {
        OutputFormat::Xml => io.out.write_all(&raw)?,
        OutputFormat::Json => writeln!(
            io.out,
            "{}",
            serde_json::to_string(&status).map_err(std::io::Error::other)?
        )?,
        OutputFormat::Text => write!(io.out, "{}", render::status_table(&status))?,
    }
    Ok(if status.overall == Overall::Clear {
        EXIT_OK
    } else {
        EXIT_DOMAIN
    })
}

async fn issue(
    broker: Url,
    student: &str,
    programme: &str,
    timeout: Duration,
    out: OutputFormat,
    io: &mut Io<'_>,
) -> Outcome {
    let rpc = RpcClient::with_timeout(broker, timeout);
    let t = orchestration_timeout(timeout);
    let args = vec![Value::text(student), Value::text(programme)];
    let (raw, env) = match exchange(&rpc, EMIS_SERVICE, "issueCertificate", args, t).await {
        Reply::Wire(raw, env) => (raw, env),
        Reply::Failed(e) => return transport(&e, io),
    };
    if out == OutputFormat::Xml {
        io.out.write_all(&raw)?;
        return Ok(if env.is_fault() { EXIT_DOMAIN } else { EXIT_OK });
    }
    match env.body {
        Body::Response { result } => {
            let cert = match Certificate::from_value(&result) {
                Ok(c) => c,
                Err(e) => return transport(&CallError::Protocol(e.to_string()), io),
            };
            match out {
                OutputFormat::Json => writeln!(
                    io.out,
                    "{}",
                    serde_json::to_string(&cert).map_err(std::io::Error::other)?
                )?,
                _ => write!(io.out, "{}", render::certificate(&cert))?,
            }
            Ok(EXIT_OK)
        }
        Body::Fault(f) => {
            // a refusal carries the blocking verification as JSON
            match (out, serde_json::from_str::<NoDuesStatus>(&f.detail)) {
                (OutputFormat::Text, Ok(status)) => {
                    writeln!(io.out, "refused: {}", f.reason)?;
                    write!(io.out, "{}", render::status_table(&status))?;
                }
                _ => write_fault(&f, out, io)?,
            }
            Ok(EXIT_DOMAIN)
        }
        Body::Call { .. } => transport(&CallError::Protocol("reply was a call".into()), io),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_errors_split_into_domain_and_transport() {
        for code in FaultCode::ALL {
            assert_eq!(exit_code(&CallError::Fault(Fault::new(code, "r", "d"))), EXIT_DOMAIN);
        }
        assert_eq!(exit_code(&CallError::NotFound("X".into())), EXIT_DOMAIN);
        assert_eq!(exit_code(&CallError::Timeout), EXIT_TRANSPORT);
        assert_eq!(exit_code(&CallError::Connection("refused".into())), EXIT_TRANSPORT);
        assert_eq!(exit_code(&CallError::Protocol("junk".into())), EXIT_TRANSPORT);
    }
}
