//! Assembles one serving process: department implementations over their
//! stores, a container that publishes to the broker, and the HTTP surface.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use url::Url;

use crate::container::{AuditLog, Container, Delayed, ImplementationRegistry, ServiceImplementation, AUDIT_CAPACITY};
use crate::departments::{
    AdmissionsDirectory, Amis, Campus, DomainError, Hmis, Lmis, RemoteAdmissions, AMIS_ID, CAMPUS_ID, HMIS_ID, LMIS_ID,
};
use crate::emis::{Emis, RpcGateway, DEFAULT_PROVIDER_TIMEOUT, EMIS_ID};
use crate::rpc::{BrokerClient, RpcClient};
use crate::server::{self, DeployReport, ServerHandle, Surface};
use crate::store::{AccessJournal, StoreDir};
use crate::wsdd::DeploymentDescriptor;

/// A department service a process can host.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServiceKind {
    Amis,
    Lmis,
    Hmis,
    Emis,
    Campus(String),
}

impl ServiceKind {
    /// Implementation id, matched against a descriptor's `className`.
    pub fn class_name(&self) -> &'static str {
        match self {
            ServiceKind::Amis => AMIS_ID,
            ServiceKind::Lmis => LMIS_ID,
            ServiceKind::Hmis => HMIS_ID,
            ServiceKind::Emis => EMIS_ID,
            ServiceKind::Campus(_) => CAMPUS_ID,
        }
    }

    /// Directory under the store root holding this service's files.
    pub fn store_subdir(&self) -> String {
        match self {
            ServiceKind::Campus(code) => format!("campus-{code}"),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceKind::Amis => f.write_str("amis"),
            ServiceKind::Lmis => f.write_str("lmis"),
            ServiceKind::Hmis => f.write_str("hmis"),
            ServiceKind::Emis => f.write_str("emis"),
            ServiceKind::Campus(code) => write!(f, "campus:{code}"),
        }
    }
}

impl FromStr for ServiceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "amis" => Ok(ServiceKind::Amis),
            "lmis" => Ok(ServiceKind::Lmis),
            "hmis" => Ok(ServiceKind::Hmis),
            "emis" => Ok(ServiceKind::Emis),
            _ => match s.strip_prefix("campus:") {
                Some(code) if !code.is_empty() && code.bytes().all(|b| b.is_ascii_alphanumeric()) => {
                    Ok(ServiceKind::Campus(code.to_string()))
                }
                _ => Err(format!(
                    "unknown service {s:?} (expected amis, lmis, hmis, emis or campus:CODE)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub services: Vec<ServiceKind>,
    pub store_dir: PathBuf,
    pub broker: Url,
    /// Deadline for outgoing calls and for each provider probe.
    pub timeout: Duration,
    /// When set, every store file touched is journaled here.
    pub access_log: Option<PathBuf>,
    /// Audit records are also appended here as JSON lines.
    pub audit_file: Option<PathBuf>,
    /// Latency added before every invocation (for fan-out experiments).
    pub delay: Option<Duration>,
    pub console_dir: Option<PathBuf>,
    pub bridge: bool,
}

impl NodeConfig {
    pub fn new(services: Vec<ServiceKind>, store_dir: impl Into<PathBuf>, broker: Url) -> Self {
        NodeConfig {
            services,
            store_dir: store_dir.into(),
            broker,
            timeout: DEFAULT_PROVIDER_TIMEOUT,
            access_log: None,
            audit_file: None,
            delay: None,
            console_dir: None,
            bridge: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error("{0}")]
    Config(String),
    #[error("store: {0}")]
    Domain(#[from] DomainError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the configured services over their stores.
pub fn build_implementations(cfg: &NodeConfig, rpc: &Arc<RpcClient>) -> Result<ImplementationRegistry, NodeError> {
    let campuses = cfg
        .services
        .iter()
        .filter(|s| matches!(s, ServiceKind::Campus(_)))
        .count();
    if campuses > 1 {
        return Err(NodeError::Config("a process hosts at most one campus roster".into()));
    }
    let journal = cfg.access_log.as_deref().map(AccessJournal::open).transpose()?;
    let open = |kind: &ServiceKind| -> Result<StoreDir, NodeError> {
        let dir = StoreDir::open(cfg.store_dir.join(kind.store_subdir()))?;
        Ok(match &journal {
            Some(j) => dir.with_journal(j.clone()),
            None => dir,
        })
    };

    // co-located admissions is used directly, otherwise through the broker
    let amis = if cfg.services.contains(&ServiceKind::Amis) {
        Some(Arc::new(Amis::open(open(&ServiceKind::Amis)?)?))
    } else {
        None
    };
    let admissions: Arc<dyn AdmissionsDirectory> = match &amis {
        Some(a) => a.clone(),
        None => Arc::new(RemoteAdmissions::new(rpc.clone())),
    };

    let mut registry = ImplementationRegistry::new();
    let mut add = |imp: Arc<dyn ServiceImplementation>| {
        let imp = match cfg.delay {
            Some(d) => Arc::new(Delayed::new(imp, d)) as Arc<dyn ServiceImplementation>,
            None => imp,
        };
        registry.register(imp);
    };
    for kind in &cfg.services {
        match kind {
            ServiceKind::Amis => add(amis.clone().expect("opened above")),
            ServiceKind::Lmis => add(Arc::new(Lmis::open(open(kind)?, admissions.clone())?)),
            ServiceKind::Hmis => add(Arc::new(Hmis::open(open(kind)?)?)),
            ServiceKind::Emis => {
                let gateway = Arc::new(RpcGateway::new(rpc.clone(), cfg.timeout));
                add(Arc::new(
                    Emis::open(open(kind)?, admissions.clone(), gateway)?.with_timeout(cfg.timeout),
                ))
            }
            ServiceKind::Campus(code) => add(Arc::new(Campus::open(code, open(kind)?, admissions.clone())?)),
        }
    }
    Ok(registry)
}

/// Keeps only the services whose `className` this process implements.
pub fn select_services(d: &DeploymentDescriptor, impls: &ImplementationRegistry) -> DeploymentDescriptor {
    let ids = impls.ids();
    DeploymentDescriptor {
        handlers: d.handlers.clone(),
        services: d
            .services
            .iter()
            .filter(|s| ids.contains(&s.class_name))
            .cloned()
            .collect(),
    }
}

pub struct Node {
    pub container: Arc<Container>,
    pub rpc: Arc<RpcClient>,
    pub report: DeployReport,
    handle: ServerHandle,
}

impl Node {
    /// Binds the HTTP surface on `listener` and deploys the matching services
    /// from `descriptors`, publishing each to the broker.
    pub async fn start(
        listener: TcpListener,
        cfg: NodeConfig,
        descriptors: &[DeploymentDescriptor],
    ) -> Result<Node, NodeError> {
        let rpc = Arc::new(RpcClient::with_timeout(cfg.broker.clone(), cfg.timeout));
        let impls = build_implementations(&cfg, &rpc)?;
        let base = server::base_url(listener.local_addr()?);
        let audit = match &cfg.audit_file {
            Some(path) => AuditLog::with_file(AUDIT_CAPACITY, path)?,
            None => AuditLog::new(AUDIT_CAPACITY),
        };
        let selected: Vec<DeploymentDescriptor> = descriptors.iter().map(|d| select_services(d, &impls)).collect();
        let container = Arc::new(
            Container::new(base, impls)
                .with_publisher(Arc::new(BrokerClient::new(cfg.broker.clone())))
                .with_audit(Arc::new(audit)),
        );
        let surface = Surface {
            container: Some(container.clone()),
            registry: None,
            bridge: cfg.bridge.then(|| rpc.clone()),
            console_dir: cfg.console_dir.clone(),
        };
        // serve before deploying so published endpoints answer immediately
        let handle = server::spawn(listener, server::router(surface))?;
        let mut report = DeployReport::default();
        for d in selected.iter().filter(|d| !d.services.is_empty()) {
            let r = DeployReport::from(container.deploy(d).await);
            report.deployed.extend(r.deployed);
            report.failed.extend(r.failed);
        }
        Ok(Node {
            container,
            rpc,
            report,
            handle,
        })
    }

    pub fn url(&self) -> Url {
        self.handle.url()
    }

    /// Stops serving without retracting, as a crashed process would.
    pub async fn kill(self) -> std::io::Result<()> {
        self.handle.stop().await
    }

    /// Undeploys (retracting from the broker), then stops.
    pub async fn shutdown(self) -> std::io::Result<()> {
        let names = self.container.list_deployed().into_iter().map(|l| l.name).collect();
        self.container
            .undeploy(&crate::wsdd::UndeploymentDescriptor { service_names: names })
            .await;
        self.handle.stop().await
    }

    /// Serves until `signal` resolves, then shuts down cleanly.
    pub async fn run_until(self, signal: impl std::future::Future<Output = ()>) -> std::io::Result<()> {
        signal.await;
        self.shutdown().await
    }
}
