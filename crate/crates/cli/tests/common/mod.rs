#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use i3_cli::config::Defaults;
use i3_cli::{execute, parse_args_with, Io};
use i3_core::broker::Registry;
use i3_core::node::{Node, NodeConfig, ServiceKind};
use i3_core::server::{self, ServerHandle, Surface};
use i3_core::wsdd::{parse_wsdd, DeploymentDescriptor, Descriptor};
use tokio::net::TcpListener;
use url::Url;

pub const FILE1: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/wsdd/file1.wsdd");
pub const UNDEPLOY_FILE1: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/wsdd/undeploy-file1.wsdd");
pub const EMIS_WSDD: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/wsdd/emis.wsdd");
pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/uos-demo");

pub fn deployment(path: &str) -> DeploymentDescriptor {
    match parse_wsdd(&std::fs::read(path).unwrap()).unwrap() {
        Descriptor::Deployment(d) => d,
        other => panic!("{path}: {other:?}"),
    }
}

pub async fn listener() -> TcpListener {
    TcpListener::bind("127.0.0.1:0").await.unwrap()
}

pub async fn broker() -> ServerHandle {
    let surface = Surface {
        registry: Some(Arc::new(Registry::new())),
        ..Surface::default()
    };
    server::spawn(listener().await, server::router(surface)).unwrap()
}

/// Starts a process-local node deploying the matching parts of file 1 and the EMIS descriptor.
pub async fn node(
    broker: &Url,
    services: Vec<ServiceKind>,
    store: &Path,
    delay: Option<Duration>,
    timeout: Duration,
) -> Node {
    let mut cfg = NodeConfig::new(services, store, broker.clone());
    cfg.delay = delay;
    cfg.timeout = timeout;
    cfg.bridge = true;
    let node = Node::start(listener().await, cfg, &[deployment(FILE1), deployment(EMIS_WSDD)])
        .await
        .unwrap();
    assert!(node.report.failed.is_empty(), "{:?}", node.report.failed);
    node
}

/// Runs a CLI command in-process; returns (exit code, stdout bytes, stderr text).
pub async fn run(argv: &[&str]) -> (i32, Vec<u8>, String) {
    let mut full = vec!["i3"];
    full.extend_from_slice(argv);
    let inv = match parse_args_with(full, &Defaults::default()) {
        Ok(inv) => inv,
        Err(e) => return (e.exit_code, Vec::new(), e.text),
    };
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = execute(
        inv,
        &mut Io {
            out: &mut out,
            err: &mut err,
        },
    )
    .await;
    (code, out, String::from_utf8_lossy(&err).into_owned())
}

pub fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}
