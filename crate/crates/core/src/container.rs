//! Service container: deploys services from descriptors, runs their request
//! flows and dispatches envelope calls to registered implementations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::broker::{description_document, MethodSignature, Registry, ServiceDescription};
use crate::envelope::{decode_envelope, encode_envelope, Body, Envelope, Fault, FaultCode, MappingTable, Value};
use crate::wsdd::{
    validate_descriptor, DeploymentDescriptor, Diagnostic, HandlerDef, ServiceDef, UndeploymentDescriptor,
};

/// Default capacity of the in-memory audit ring.
pub const AUDIT_CAPACITY: usize = 10_000;

/// Backing code for a deployed service, looked up by the descriptor's `className`.
#[async_trait]
pub trait ServiceImplementation: Send + Sync {
    fn id(&self) -> &str;

    fn methods(&self) -> Vec<MethodSignature>;

    /// Record qnames the implementation produces or consumes.
    fn record_types(&self) -> Vec<String>;

    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault>;
}

/// Wraps an implementation and sleeps before every call.
pub struct Delayed {
    inner: Arc<dyn ServiceImplementation>,
    delay: Duration,
}

impl Delayed {
    pub fn new(inner: Arc<dyn ServiceImplementation>, delay: Duration) -> Self {
        Delayed { inner, delay }
    }
}

#[async_trait]
impl ServiceImplementation for Delayed {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn methods(&self) -> Vec<MethodSignature> {
        self.inner.methods()
    }

    fn record_types(&self) -> Vec<String> {
        self.inner.record_types()
    }

    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault> {
        tokio::time::sleep(self.delay).await;
        self.inner.invoke(method, args).await
    }
}

#[derive(Clone, Default)]
pub struct ImplementationRegistry {
    impls: BTreeMap<String, Arc<dyn ServiceImplementation>>,
}

impl ImplementationRegistry {
    pub fn new() -> Self {
        ImplementationRegistry::default()
    }

    /// Registers under `imp.id()`, replacing any earlier entry.
    pub fn register(&mut self, imp: Arc<dyn ServiceImplementation>) {
        self.impls.insert(imp.id().to_string(), imp);
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn ServiceImplementation>> {
        self.impls.get(id)
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.impls.keys().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditEvent {
    /// Written by a logging handler in the request flow.
    Handler { handler: String },
    /// Written once per call after the request flow, with the outcome.
    Dispatch { outcome: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub service: String,
    pub method: String,
    #[serde(flatten)]
    pub event: AuditEvent,
}

struct AuditRing {
    records: VecDeque<AuditRecord>,
    total: u64,
}

/// Append-only audit trail: a bounded in-memory ring, optionally mirrored to
/// a JSON-lines file.
pub struct AuditLog {
    ring: Mutex<AuditRing>,
    capacity: usize,
    file: Option<Mutex<File>>,
}

impl AuditLog {
    pub fn new(capacity: usize) -> Self {
        AuditLog {
            ring: Mutex::new(AuditRing {
                records: VecDeque::new(),
                total: 0,
            }),
            capacity: capacity.max(1),
            file: None,
        }
    }

    pub fn with_file(capacity: usize, path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut log = AuditLog::new(capacity);
        log.file = Some(Mutex::new(file));
        Ok(log)
    }

    pub fn append(&self, service: &str, method: &str, event: AuditEvent) -> AuditRecord {
        let mut ring = self.ring.lock().expect("audit lock poisoned");
        ring.total += 1;
        let record = AuditRecord {
            seq: ring.total,
            at: Utc::now().trunc_subsecs(6),
            service: service.to_string(),
            method: method.to_string(),
            event,
        };
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&record).expect("audit records serialize");
            let mut f = file.lock().expect("audit file lock poisoned");
            if let Err(e) = writeln!(f, "{line}") {
                tracing::warn!("audit file write failed: {e}");
            }
        }
        if ring.records.len() == self.capacity {
            ring.records.pop_front();
        }
        ring.records.push_back(record.clone());
        record
    }

    /// Number of records ever appended; never decreases.
    pub fn total(&self) -> u64 {
        self.ring.lock().expect("audit lock poisoned").total
    }

    /// Records still held in memory, oldest first.
    pub fn records(&self) -> Vec<AuditRecord> {
        let ring = self.ring.lock().expect("audit lock poisoned");
        ring.records.iter().cloned().collect()
    }
}

impl Default for AuditLog {
    fn default() -> Self {
        AuditLog::new(AUDIT_CAPACITY)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandlerError {
    /// Stop the flow and answer with this fault.
    Fault(Fault),
    /// The handler itself broke; answered as Server.Internal.
    Failed(String),
}

/// One step of a service's request flow.
pub trait Handler: Send + Sync {
    fn handle(&self, service: &str, env: Envelope, audit: &AuditLog) -> Result<Envelope, HandlerError>;
}

/// Appends one audit record per request and passes the envelope through.
pub struct LogHandler {
    name: String,
}

impl LogHandler {
    pub fn new(name: impl Into<String>) -> Self {
        LogHandler { name: name.into() }
    }
}

impl Handler for LogHandler {
    fn handle(&self, service: &str, env: Envelope, audit: &AuditLog) -> Result<Envelope, HandlerError> {
        let method = match &env.body {
            Body::Call { method, .. } => method.as_str(),
            _ => "",
        };
        audit.append(
            service,
            method,
            AuditEvent::Handler {
                handler: self.name.clone(),
            },
        );
        Ok(env)
    }
}

pub type HandlerFactory = Arc<dyn Fn(&HandlerDef) -> Arc<dyn Handler> + Send + Sync>;

/// Handler factories keyed by the local part of the handler type
/// (`java:LogHandler` and `x:LogHandler` both select `LogHandler`).
#[derive(Clone)]
pub struct HandlerRegistry {
    factories: BTreeMap<String, HandlerFactory>,
}

impl HandlerRegistry {
    pub fn empty() -> Self {
        HandlerRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, type_name: impl Into<String>, factory: HandlerFactory) {
        self.factories.insert(type_name.into(), factory);
    }

    fn build(&self, def: &HandlerDef) -> Option<Arc<dyn Handler>> {
        self.factories.get(local_part(&def.native_type)).map(|f| f(def))
    }
}

impl Default for HandlerRegistry {
    fn default() -> Self {
        let mut r = HandlerRegistry::empty();
        r.register(
            "LogHandler",
            Arc::new(|def: &HandlerDef| Arc::new(LogHandler::new(def.name.clone())) as Arc<dyn Handler>),
        );
        r
    }
}

fn local_part(tag: &str) -> &str {
    tag.rsplit_once(':').map_or(tag, |(_, local)| local)
}

/// Where the container announces deployments.
#[async_trait]
pub trait Publisher: Send + Sync {
    async fn publish(&self, desc: ServiceDescription) -> Result<(), String>;

    async fn retract(&self, name: &str) -> Result<(), String>;
}

#[async_trait]
impl Publisher for Registry {
    async fn publish(&self, desc: ServiceDescription) -> Result<(), String> {
        Registry::publish(self, desc).map(|_| ()).map_err(|e| e.to_string())
    }

    async fn retract(&self, name: &str) -> Result<(), String> {
        Registry::retract(self, name).map(|_| ()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceState {
    Active,
    Undeployed,
}

pub struct DeployedService {
    pub def: ServiceDef,
    pub endpoint: Url,
    pub state: ServiceState,
    pub description: ServiceDescription,
    mappings: MappingTable,
    implementation: Arc<dyn ServiceImplementation>,
    flow: Vec<Arc<dyn Handler>>,
}

impl DeployedService {
    pub fn mappings(&self) -> &MappingTable {
        &self.mappings
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceListing {
    pub name: String,
    pub state: ServiceState,
    pub endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeployError {
    #[error("validation failed: {}", join_diagnostics(.0))]
    ValidationFailed(Vec<Diagnostic>),
    #[error("endpoint conflict: {0} is already active")]
    EndpointConflict(String),
    #[error("publish failed: {0}")]
    PublishFailed(String),
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeployOutcome {
    pub deployed: Vec<ServiceListing>,
    pub failed: Vec<(String, DeployError)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UndeployOutcome {
    pub removed: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

pub struct Container {
    base: Url,
    impls: ImplementationRegistry,
    handlers: HandlerRegistry,
    publisher: Option<Arc<dyn Publisher>>,
    retain_undeployed: bool,
    services: RwLock<BTreeMap<String, Arc<DeployedService>>>,
    admin: tokio::sync::Mutex<()>,
    audit: Arc<AuditLog>,
}

impl Container {
    /// `base` is the externally reachable root; endpoints are `base/services/NAME`.
    pub fn new(base: Url, impls: ImplementationRegistry) -> Self {
        Container {
            base,
            impls,
            handlers: HandlerRegistry::default(),
            publisher: None,
            retain_undeployed: false,
            services: RwLock::new(BTreeMap::new()),
            admin: tokio::sync::Mutex::new(()),
            audit: Arc::new(AuditLog::default()),
        }
    }

    pub fn with_publisher(mut self, publisher: Arc<dyn Publisher>) -> Self {
        self.publisher = Some(publisher);
        self
    }

    pub fn with_handlers(mut self, handlers: HandlerRegistry) -> Self {
        self.handlers = handlers;
        self
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = audit;
        self
    }

    /// Keep undeployed services in the listing instead of dropping them.
    pub fn retain_undeployed(mut self, retain: bool) -> Self {
        self.retain_undeployed = retain;
        self
    }

    pub fn base(&self) -> &Url {
        &self.base
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn implementations(&self) -> &ImplementationRegistry {
        &self.impls
    }

    pub fn endpoint_for(&self, name: &str) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("container base is a hierarchical URL")
            .pop_if_empty()
            .push("services")
            .push(name);
        url
    }

    fn active(&self, name: &str) -> Option<Arc<DeployedService>> {
        let services = self.services.read().expect("services lock poisoned");
        services.get(name).filter(|s| s.state == ServiceState::Active).cloned()
    }

    pub fn service(&self, name: &str) -> Option<Arc<DeployedService>> {
        self.active(name)
    }

    pub fn list_deployed(&self) -> Vec<ServiceListing> {
        let services = self.services.read().expect("services lock poisoned");
        services.values().map(|s| listing(s)).collect()
    }

    pub fn describe(&self, name: &str) -> Option<Vec<u8>> {
        self.active(name).map(|s| description_document(&s.description))
    }

    fn prepare(&self, d: &DeploymentDescriptor, def: &ServiceDef) -> Result<DeployedService, DeployError> {
        let fail = |reason: String| {
            DeployError::ValidationFailed(vec![Diagnostic {
                subject: def.name.clone(),
                reason,
            }])
        };
        if local_part(&def.provider) != "RPC" {
            return Err(fail(format!("unsupported provider {:?}", def.provider)));
        }
        let imp = self.impls.get(&def.class_name).cloned().ok_or_else(|| {
            fail(format!(
                "no implementation registered for className {:?}",
                def.class_name
            ))
        })?;
        let mappings = MappingTable::new(def.bean_mappings.iter().cloned()).map_err(|e| fail(e.to_string()))?;
        let unmapped: Vec<String> = imp
            .record_types()
            .into_iter()
            .filter(|q| mappings.by_qname(q).is_none())
            .collect();
        if !unmapped.is_empty() {
            return Err(fail(format!("record types not bean-mapped: {}", unmapped.join(", "))));
        }
        let mut flow = Vec::new();
        for handler_name in &def.request_flow {
            let hdef = d
                .handler(handler_name)
                .ok_or_else(|| fail(format!("request flow names unknown handler {handler_name:?}")))?;
            let handler = self
                .handlers
                .build(hdef)
                .ok_or_else(|| fail(format!("unsupported handler type {:?}", hdef.native_type)))?;
            flow.push(handler);
        }
        let methods: Vec<MethodSignature> = imp
            .methods()
            .into_iter()
            .filter(|m| def.allowed_methods.admits(&m.name))
            .collect();
        if methods.is_empty() {
            return Err(fail("no implemented method is allowed".into()));
        }
        let endpoint = self.endpoint_for(&def.name);
        let description = ServiceDescription {
            name: def.name.clone(),
            endpoint: endpoint.to_string(),
            methods,
            record_types: def.bean_mappings.clone(),
            published_at: Utc::now().trunc_subsecs(6),
        };
        Ok(DeployedService {
            def: def.clone(),
            endpoint,
            state: ServiceState::Active,
            description,
            mappings,
            implementation: imp,
            flow,
        })
    }

    /// Deploys each service of `d` independently; failures are reported per
    /// service and leave the others deployed.
    pub async fn deploy(&self, d: &DeploymentDescriptor) -> DeployOutcome {
        let _admin = self.admin.lock().await;
        let mut outcome = DeployOutcome::default();
        let diagnostics = validate_descriptor(d, &self.impls.ids());
        for def in &d.services {
            let own: Vec<Diagnostic> = diagnostics
                .iter()
                .filter(|diag| diag.subject == def.name)
                .cloned()
                .collect();
            let result = if !own.is_empty() {
                Err(DeployError::ValidationFailed(own))
            } else if self.active(&def.name).is_some() {
                Err(DeployError::EndpointConflict(def.name.clone()))
            } else {
                match self.prepare(d, def) {
                    Ok(svc) => self.activate(svc).await,
                    Err(e) => Err(e),
                }
            };
            match result {
                Ok(l) => outcome.deployed.push(l),
                Err(e) => outcome.failed.push((def.name.clone(), e)),
            }
        }
        outcome
    }

    async fn activate(&self, svc: DeployedService) -> Result<ServiceListing, DeployError> {
        let name = svc.def.name.clone();
        let desc = svc.description.clone();
        let svc = Arc::new(svc);
        let previous = self
            .services
            .write()
            .expect("services lock poisoned")
            .insert(name.clone(), svc.clone());
        if let Some(publisher) = &self.publisher {
            if let Err(e) = publisher.publish(desc).await {
                let mut services = self.services.write().expect("services lock poisoned");
                match previous {
                    Some(p) => services.insert(name, p),
                    None => services.remove(&name),
                };
                return Err(DeployError::PublishFailed(e));
            }
        }
        tracing::info!(service = %name, endpoint = %svc.endpoint, "deployed");
        Ok(listing(&svc))
    }

    /// Undeploys the named services; unknown names become diagnostics.
    pub async fn undeploy(&self, u: &UndeploymentDescriptor) -> UndeployOutcome {
        let _admin = self.admin.lock().await;
        let mut outcome = UndeployOutcome::default();
        for name in &u.service_names {
            let removed = {
                let mut services = self.services.write().expect("services lock poisoned");
                match services.get(name) {
                    Some(s) if s.state == ServiceState::Active => {
                        if self.retain_undeployed {
                            let retired = retire(s);
                            services.insert(name.clone(), Arc::new(retired));
                        } else {
                            services.remove(name);
                        }
                        true
                    }
                    _ => false,
                }
            };
            if !removed {
                outcome.diagnostics.push(Diagnostic {
                    subject: name.clone(),
                    reason: "not deployed".into(),
                });
                continue;
            }
            if let Some(publisher) = &self.publisher {
                if let Err(e) = publisher.retract(name).await {
                    outcome.diagnostics.push(Diagnostic {
                        subject: name.clone(),
                        reason: format!("broker retraction failed: {e}"),
                    });
                }
            }
            tracing::info!(service = %name, "undeployed");
            outcome.removed.push(name.clone());
        }
        outcome
    }

    /// Runs the service's request flow in descriptor order.
    pub fn apply_request_flow(&self, svc: &DeployedService, env: Envelope) -> Result<Envelope, Fault> {
        let mut env = env;
        for handler in &svc.flow {
            env = match handler.handle(&svc.def.name, env, &self.audit) {
                Ok(next) => next,
                Err(HandlerError::Fault(f)) => return Err(f),
                Err(HandlerError::Failed(msg)) => return Err(Fault::new(FaultCode::Internal, "HandlerFailed", msg)),
            };
        }
        Ok(env)
    }

    /// Routes a call envelope to its service and returns a Response or Fault.
    pub async fn dispatch(&self, env: Envelope) -> Envelope {
        let (service, method) = match &env.body {
            Body::Call { service, method, .. } => (service.clone(), method.clone()),
            _ => return Envelope::fault(FaultCode::BadArguments, "NotACall", "the body must hold a call"),
        };
        let Some(svc) = self.active(&service) else {
            return Envelope::fault(FaultCode::NoSuchService, "NoSuchService", service);
        };
        let outcome = self.dispatch_to(&svc, env).await;
        let label = match &outcome {
            Ok(_) => "response".to_string(),
            Err(f) => f.code.as_str().to_string(),
        };
        self.audit
            .append(&service, &method, AuditEvent::Dispatch { outcome: label });
        match outcome {
            Ok(v) => Envelope::response(v),
            Err(f) => Envelope {
                header: Vec::new(),
                body: Body::Fault(f),
            },
        }
    }

    async fn dispatch_to(&self, svc: &DeployedService, env: Envelope) -> Result<Value, Fault> {
        let env = self.apply_request_flow(svc, env)?;
        let Body::Call { method, args, .. } = env.body else {
            return Err(Fault::new(
                FaultCode::Internal,
                "HandlerFailed",
                "request flow replaced the call",
            ));
        };
        let sig = svc
            .implementation
            .methods()
            .into_iter()
            .find(|m| m.name == method)
            .ok_or_else(|| Fault::new(FaultCode::NoSuchMethod, "NoSuchMethod", method.clone()))?;
        if !svc.def.allowed_methods.admits(&method) {
            return Err(Fault::new(FaultCode::MethodNotAllowed, "MethodNotAllowed", method));
        }
        check_arguments(&sig, &args)?;
        let result = svc.implementation.invoke(&method, args).await?;
        if result.kind() != sig.result && result != Value::Nil {
            return Err(Fault::new(
                FaultCode::Internal,
                "BadResult",
                format!("{method} returned {} instead of {}", result.kind(), sig.result),
            ));
        }
        if let Some(q) = unmapped_qname(&result, &svc.mappings) {
            return Err(Fault::new(FaultCode::Internal, "UnmappedRecordType", q));
        }
        Ok(result)
    }

    /// Wire entry point for `POST /services/{name}`: returns whether the
    /// reply is a fault, and the reply bytes.
    pub async fn handle_wire(&self, name: &str, body: &[u8]) -> (bool, Vec<u8>) {
        let Some(svc) = self.active(name) else {
            let env = Envelope::fault(FaultCode::NoSuchService, "NoSuchService", name);
            return (true, encode_plain(&env));
        };
        let env = match decode_envelope(body, &svc.mappings) {
            Ok(env) => env,
            Err(e) => {
                let env = Envelope::fault(FaultCode::BadArguments, "MalformedEnvelope", e.to_string());
                return (true, encode_plain(&env));
            }
        };
        match &env.body {
            Body::Call { service, .. } if service != name => {
                let env = Envelope::fault(
                    FaultCode::BadArguments,
                    "ServiceMismatch",
                    format!("envelope addresses {service}, endpoint is {name}"),
                );
                return (true, encode_plain(&env));
            }
            _ => {}
        }
        let reply = self.dispatch(env).await;
        let is_fault = reply.is_fault();
        match encode_envelope(&reply, &svc.mappings) {
            Ok(bytes) => (is_fault, bytes),
            Err(e) => {
                let env = Envelope::fault(FaultCode::Internal, "EncodeFailed", e.to_string());
                (true, encode_plain(&env))
            }
        }
    }
}

fn listing(s: &DeployedService) -> ServiceListing {
    ServiceListing {
        name: s.def.name.clone(),
        state: s.state,
        endpoint: s.endpoint.to_string(),
    }
}

fn retire(s: &DeployedService) -> DeployedService {
    DeployedService {
        def: s.def.clone(),
        endpoint: s.endpoint.clone(),
        state: ServiceState::Undeployed,
        description: s.description.clone(),
        mappings: s.mappings.clone(),
        implementation: s.implementation.clone(),
        flow: s.flow.clone(),
    }
}

fn encode_plain(env: &Envelope) -> Vec<u8> {
    encode_envelope(env, &MappingTable::empty()).expect("fault envelopes always encode")
}

fn check_arguments(sig: &MethodSignature, args: &[Value]) -> Result<(), Fault> {
    if args.len() != sig.arity() {
        return Err(Fault::new(
            FaultCode::BadArguments,
            "ArityMismatch",
            format!("{} takes {} argument(s), got {}", sig.name, sig.arity(), args.len()),
        ));
    }
    for (i, (arg, kind)) in args.iter().zip(&sig.params).enumerate() {
        if arg.kind() != *kind {
            return Err(Fault::new(
                FaultCode::BadArguments,
                "KindMismatch",
                format!(
                    "argument {} of {} must be {}, got {}",
                    i + 1,
                    sig.name,
                    kind,
                    arg.kind()
                ),
            ));
        }
    }
    Ok(())
}

fn unmapped_qname(v: &Value, mappings: &MappingTable) -> Option<String> {
    match v {
        Value::Record(r) => {
            if mappings.by_qname(&r.qname).is_none() {
                return Some(r.qname.clone());
            }
            r.fields.values().find_map(|f| unmapped_qname(f, mappings))
        }
        Value::List(items) => items.iter().find_map(|i| unmapped_qname(i, mappings)),
        _ => None,
    }
}
