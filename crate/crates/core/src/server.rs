//! HTTP surface: container endpoints, broker endpoints, the JSON bridge
//! used by the console, and the console's static assets.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;
use url::Url;

use crate::broker::{parse_description_document, registry_document, BrokerError, Registry, RegistryQuery};
use crate::container::{Container, DeployOutcome, ServiceListing, UndeployOutcome};
use crate::departments::{StudentRecord, AMIS_SERVICE, LMIS_SERVICE};
use crate::emis::{Certificate, ExamRecord, NoDuesStatus, EMIS_SERVICE};
use crate::envelope::{decode_envelope, encode_envelope, Body, Envelope, FaultCode, MappingTable, RecordCodec, Value};
use crate::rpc::{CallError, RpcClient};
use crate::wsdd::{parse_wsdd, Descriptor};

const XML: &str = "text/xml; charset=utf-8";

/// What a single process serves. Every part is optional.
#[derive(Clone, Default)]
pub struct Surface {
    pub container: Option<Arc<Container>>,
    pub registry: Option<Arc<Registry>>,
    pub bridge: Option<Arc<RpcClient>>,
    pub console_dir: Option<PathBuf>,
}

pub fn router(surface: Surface) -> Router {
    let mut app = Router::new();
    if let Some(c) = surface.container {
        app = app.merge(container_routes(c));
    }
    if let Some(r) = surface.registry {
        app = app.merge(registry_routes(r));
    }
    if let Some(rpc) = surface.bridge {
        app = app.merge(bridge_routes(rpc));
    }
    if let Some(dir) = surface.console_dir {
        app = app.nest_service("/console", ServeDir::new(dir));
    }
    app
}

/// A running server. Dropping the handle leaves the server running;
/// call [`ServerHandle::stop`] to shut it down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> Url {
        base_url(self.addr)
    }

    /// Stops accepting, closes idle connections and waits for in-flight requests.
    pub async fn stop(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(());
        self.task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)))
    }
}

/// `http://addr/`, with unspecified addresses replaced by loopback.
pub fn base_url(addr: SocketAddr) -> Url {
    let ip = match addr.ip() {
        ip if ip.is_unspecified() && ip.is_ipv4() => std::net::Ipv4Addr::LOCALHOST.into(),
        ip if ip.is_unspecified() => std::net::Ipv6Addr::LOCALHOST.into(),
        ip => ip,
    };
    Url::parse(&format!("http://{}/", SocketAddr::new(ip, addr.port()))).expect("socket addresses form valid URLs")
}

pub fn spawn(listener: TcpListener, app: Router) -> std::io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                if rx.await.is_err() {
                    // handle dropped: keep serving
                    std::future::pending::<()>().await;
                }
            })
            .await
    });
    Ok(ServerHandle {
        addr,
        shutdown: tx,
        task,
    })
}

fn xml_reply(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, XML)], body).into_response()
}

fn plain(status: StatusCode, message: impl Into<String>) -> Response {
    (status, message.into()).into_response()
}

// container

fn container_routes(c: Arc<Container>) -> Router {
    Router::new()
        .route("/services/{name}", post(service_post).get(service_get))
        .route("/admin/deploy", post(admin_deploy))
        .route("/admin/undeploy", post(admin_undeploy))
        .route("/admin/services", get(admin_services))
        .with_state(c)
}

async fn service_post(State(c): State<Arc<Container>>, Path(name): Path<String>, body: Bytes) -> Response {
    let (is_fault, bytes) = c.handle_wire(&name, &body).await;
    let status = if is_fault {
        StatusCode::INTERNAL_SERVER_ERROR
    } else {
        StatusCode::OK
    };
    xml_reply(status, bytes)
}

async fn service_get(
    State(c): State<Arc<Container>>,
    Path(name): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    if !q.contains_key("describe") {
        return plain(StatusCode::BAD_REQUEST, "POST an envelope, or GET with ?describe");
    }
    match c.describe(&name) {
        Some(doc) => xml_reply(StatusCode::OK, doc),
        None => plain(StatusCode::NOT_FOUND, format!("no active service {name}")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedDeployment {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployReport {
    pub deployed: Vec<ServiceListing>,
    pub failed: Vec<FailedDeployment>,
}

impl From<DeployOutcome> for DeployReport {
    fn from(o: DeployOutcome) -> Self {
        DeployReport {
            deployed: o.deployed,
            failed: o
                .failed
                .into_iter()
                .map(|(name, e)| FailedDeployment {
                    name,
                    error: e.to_string(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndeployReport {
    pub removed: Vec<String>,
    pub diagnostics: Vec<String>,
}

impl From<UndeployOutcome> for UndeployReport {
    fn from(o: UndeployOutcome) -> Self {
        UndeployReport {
            removed: o.removed,
            diagnostics: o.diagnostics.iter().map(ToString::to_string).collect(),
        }
    }
}

async fn admin_deploy(State(c): State<Arc<Container>>, body: Bytes) -> Response {
    match parse_wsdd(&body) {
        Ok(Descriptor::Deployment(d)) => Json(DeployReport::from(c.deploy(&d).await)).into_response(),
        Ok(Descriptor::Undeployment(_)) => plain(StatusCode::BAD_REQUEST, "expected a <deployment> document"),
        Err(e) => plain(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn admin_undeploy(State(c): State<Arc<Container>>, body: Bytes) -> Response {
    match parse_wsdd(&body) {
        Ok(Descriptor::Undeployment(u)) => Json(UndeployReport::from(c.undeploy(&u).await)).into_response(),
        Ok(Descriptor::Deployment(_)) => plain(StatusCode::BAD_REQUEST, "expected an <undeployment> document"),
        Err(e) => plain(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn admin_services(State(c): State<Arc<Container>>) -> Json<Vec<ServiceListing>> {
    Json(c.list_deployed())
}

// broker

fn registry_routes(r: Arc<Registry>) -> Router {
    Router::new()
        .route("/registry/publish", post(registry_publish))
        .route("/registry/retract", post(registry_retract))
        .route("/registry/find", get(registry_find))
        .route("/registry/bind/{name}", get(registry_bind))
        .route("/registry/describe/{name}", get(registry_describe))
        .with_state(r)
}

fn envelope_reply(env: Envelope) -> Response {
    let status = if env.is_fault() {
        StatusCode::INTERNAL_SERVER_ERROR
    } else {
        StatusCode::OK
    };
    let bytes = encode_envelope(&env, &MappingTable::empty()).expect("registry replies carry no records");
    xml_reply(status, bytes)
}

/// Decodes a one-Text-argument registry call.
fn registry_argument(body: &[u8], method: &str) -> Result<String, Envelope> {
    let env = decode_envelope(body, &MappingTable::empty())
        .map_err(|e| Envelope::fault(FaultCode::BadArguments, "MalformedEnvelope", e.to_string()))?;
    match env.body {
        Body::Call { method: m, args, .. } if m == method => match args.as_slice() {
            [Value::Text(s)] => Ok(s.clone()),
            _ => Err(Envelope::fault(
                FaultCode::BadArguments,
                "BadArguments",
                format!("{method} takes one Text argument"),
            )),
        },
        Body::Call { method: m, .. } => Err(Envelope::fault(FaultCode::NoSuchMethod, "NoSuchMethod", m)),
        _ => Err(Envelope::fault(
            FaultCode::BadArguments,
            "NotACall",
            "expected a Call body",
        )),
    }
}

fn broker_fault(e: BrokerError) -> Envelope {
    match e {
        BrokerError::InvalidDescription(m) => Envelope::fault(FaultCode::BadArguments, "InvalidDescription", m),
        BrokerError::InvalidQuery(m) => Envelope::fault(FaultCode::BadArguments, "InvalidQuery", m),
        BrokerError::NotFound(m) => Envelope::fault(FaultCode::BadArguments, "NotFound", m),
        BrokerError::Snapshot(e) => Envelope::fault(FaultCode::Internal, "SnapshotFailed", e.to_string()),
    }
}

async fn registry_publish(State(r): State<Arc<Registry>>, body: Bytes) -> Response {
    let reply = registry_argument(&body, "publish").and_then(|doc| {
        let desc = parse_description_document(doc.as_bytes())
            .map_err(|e| Envelope::fault(FaultCode::BadArguments, "InvalidDescription", e.0))?;
        r.publish(desc).map_err(broker_fault)?;
        Ok(Envelope::response(Value::Bool(true)))
    });
    envelope_reply(reply.unwrap_or_else(|f| f))
}

async fn registry_retract(State(r): State<Arc<Registry>>, body: Bytes) -> Response {
    let reply = registry_argument(&body, "retract")
        .and_then(|name| r.retract(&name).map_err(broker_fault))
        .map(|existed| Envelope::response(Value::Bool(existed)));
    envelope_reply(reply.unwrap_or_else(|f| f))
}

async fn registry_find(State(r): State<Arc<Registry>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let pattern = q.get("name").map(String::as_str).unwrap_or("*");
    match RegistryQuery::parse(pattern) {
        Ok(query) => xml_reply(StatusCode::OK, registry_document(r.find(&query).iter())),
        Err(e) => plain(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn registry_bind(State(r): State<Arc<Registry>>, Path(name): Path<String>) -> Response {
    match r.bind(&name) {
        Ok((_, desc)) => xml_reply(StatusCode::OK, crate::broker::description_document(&desc)),
        Err(BrokerError::NotFound(n)) => plain(StatusCode::NOT_FOUND, format!("service not found: {n}")),
        Err(e) => plain(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn registry_describe(State(r): State<Arc<Registry>>, Path(name): Path<String>) -> Response {
    match r.describe(&name) {
        Ok(doc) => xml_reply(StatusCode::OK, doc),
        Err(BrokerError::NotFound(n)) => plain(StatusCode::NOT_FOUND, format!("service not found: {n}")),
        Err(e) => plain(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

// bridge

fn bridge_routes(rpc: Arc<RpcClient>) -> Router {
    Router::new()
        .route("/bridge/students", get(bridge_search).post(bridge_register))
        .route("/bridge/students/{id}", get(bridge_student))
        .route("/bridge/members", post(bridge_enroll))
        .route("/bridge/exams/{id}", get(bridge_exams))
        .route("/bridge/verify/{id}", get(bridge_verify).post(bridge_verify))
        .route("/bridge/issue", post(bridge_issue))
        .route("/bridge/registry", get(bridge_registry))
        .with_state(rpc)
}

/// Error body of every bridge endpoint: `kind` is a fault code, `transport`,
/// or `request`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeError {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl BridgeError {
    fn request(message: impl Into<String>) -> Self {
        BridgeError {
            kind: "request".into(),
            message: message.into(),
            reason: None,
            detail: None,
        }
    }

    fn status(&self) -> StatusCode {
        match self.kind.as_str() {
            "transport" => StatusCode::BAD_GATEWAY,
            "request" => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl From<CallError> for BridgeError {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Fault(f) => {
                // structured details (e.g. a refused verification) pass through as JSON
                let detail = serde_json::from_str(&f.detail).unwrap_or(serde_json::Value::String(f.detail.clone()));
                BridgeError {
                    kind: f.code.as_str().to_string(),
                    message: format!("{}: {}", f.reason, f.detail),
                    reason: Some(f.reason),
                    detail: Some(detail),
                }
            }
            CallError::Protocol(m) => BridgeError {
                kind: "protocol".into(),
                message: m,
                reason: None,
                detail: None,
            },
            other => BridgeError {
                kind: "transport".into(),
                message: other.to_string(),
                reason: None,
                detail: None,
            },
        }
    }
}

impl IntoResponse for BridgeError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

type BridgeResult<T> = Result<Json<T>, BridgeError>;

fn decode<T: RecordCodec>(v: &Value) -> Result<T, BridgeError> {
    T::from_value(v).map_err(|e| BridgeError {
        kind: "protocol".into(),
        message: e.to_string(),
        reason: None,
        detail: None,
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, BridgeError> {
    serde_json::from_slice(body).map_err(|e| BridgeError::request(e.to_string()))
}

async fn bridge_search(
    State(rpc): State<Arc<RpcClient>>,
    Query(q): Query<HashMap<String, String>>,
) -> BridgeResult<Vec<StudentRecord>> {
    let query = q.get("q").cloned().unwrap_or_default();
    let v = rpc
        .call(AMIS_SERVICE, "searchStudents", vec![Value::Text(query)])
        .await?;
    let Value::List(items) = v else {
        return Err(BridgeError::request("searchStudents did not return a list"));
    };
    Ok(Json(items.iter().map(decode).collect::<Result<_, _>>()?))
}

async fn bridge_register(State(rpc): State<Arc<RpcClient>>, body: Bytes) -> BridgeResult<serde_json::Value> {
    let student: StudentRecord = parse_json(&body)?;
    let id = rpc
        .call(AMIS_SERVICE, "registerStudent", vec![student.to_value()])
        .await?;
    Ok(Json(json!({ "id": id.as_text().unwrap_or_default() })))
}

async fn bridge_student(State(rpc): State<Arc<RpcClient>>, Path(id): Path<String>) -> BridgeResult<StudentRecord> {
    let v = rpc.call(AMIS_SERVICE, "getStudent", vec![Value::Text(id)]).await?;
    Ok(Json(decode(&v)?))
}

#[derive(Deserialize)]
struct MemberRequest {
    student_id: String,
}

async fn bridge_enroll(State(rpc): State<Arc<RpcClient>>, body: Bytes) -> BridgeResult<serde_json::Value> {
    let req: MemberRequest = parse_json(&body)?;
    rpc.call(LMIS_SERVICE, "enrollMember", vec![Value::Text(req.student_id.clone())])
        .await?;
    Ok(Json(json!({ "student_id": req.student_id, "enrolled": true })))
}

async fn bridge_exams(State(rpc): State<Arc<RpcClient>>, Path(id): Path<String>) -> BridgeResult<Vec<ExamRecord>> {
    let v = rpc.call(EMIS_SERVICE, "getExamRecords", vec![Value::Text(id)]).await?;
    let Value::List(items) = v else {
        return Err(BridgeError::request("getExamRecords did not return a list"));
    };
    Ok(Json(items.iter().map(decode).collect::<Result<_, _>>()?))
}

async fn bridge_verify(State(rpc): State<Arc<RpcClient>>, Path(id): Path<String>) -> BridgeResult<NoDuesStatus> {
    // the orchestrator applies its own per-provider deadlines; allow for them
    let timeout = rpc.timeout() * 2;
    let v = rpc
        .call_with_timeout(EMIS_SERVICE, "verifyNoDues", vec![Value::Text(id)], timeout)
        .await?;
    Ok(Json(decode(&v)?))
}

#[derive(Deserialize)]
struct IssueRequest {
    student_id: String,
    programme: String,
}

async fn bridge_issue(State(rpc): State<Arc<RpcClient>>, body: Bytes) -> BridgeResult<Certificate> {
    let req: IssueRequest = parse_json(&body)?;
    let timeout = rpc.timeout() * 2;
    let v = rpc
        .call_with_timeout(
            EMIS_SERVICE,
            "issueCertificate",
            vec![Value::Text(req.student_id), Value::Text(req.programme)],
            timeout,
        )
        .await?;
    Ok(Json(decode(&v)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub endpoint: String,
    pub methods: Vec<String>,
    pub published_at: String,
}

async fn bridge_registry(State(rpc): State<Arc<RpcClient>>) -> BridgeResult<Vec<RegistryEntry>> {
    let entries = rpc.broker().find("*").await?;
    Ok(Json(
        entries
            .into_iter()
            .map(|d| RegistryEntry {
                name: d.name,
                endpoint: d.endpoint,
                methods: d.methods.into_iter().map(|m| m.name).collect(),
                published_at: d.published_at.to_rfc3339(),
            })
            .collect(),
    ))
}
