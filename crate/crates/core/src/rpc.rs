//! HTTP client side: talking to the broker and calling deployed services.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use url::Url;

use crate::broker::{description_document, parse_description_document, parse_registry_document, ServiceDescription};
use crate::container::Publisher;
use crate::envelope::{decode_envelope, encode_envelope, Body, Envelope, Fault, FaultCode, MappingTable, Value};

/// How long a broker binding is reused before it is looked up again.
pub const BINDING_TTL: Duration = Duration::from_secs(60);
pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_millis(2_000);

/// Service name the broker answers to on its envelope endpoints.
pub const REGISTRY_SERVICE: &str = "Registry";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    #[error("service not found: {0}")]
    NotFound(String),
    #[error("connection error: {0}")]
    Connection(String),
    #[error("timeout")]
    Timeout,
    #[error("fault {0}")]
    Fault(Fault),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl CallError {
    /// Short reason suitable for an Unknown verdict.
    pub fn reason(&self) -> String {
        match self {
            CallError::NotFound(name) => format!("not registered: {name}"),
            CallError::Connection(_) => "connection error".into(),
            CallError::Timeout => "timeout".into(),
            CallError::Fault(f) => format!("{} {}", f.code, f.reason),
            CallError::Protocol(m) => format!("protocol error: {m}"),
        }
    }

    pub fn fault(&self) -> Option<&Fault> {
        match self {
            CallError::Fault(f) => Some(f),
            _ => None,
        }
    }

    /// True when the remote side was not reachable or not registered.
    pub fn is_unavailable(&self) -> bool {
        match self {
            CallError::NotFound(_) | CallError::Connection(_) | CallError::Timeout => true,
            CallError::Fault(f) => matches!(f.code, FaultCode::Unavailable | FaultCode::NoSuchService),
            CallError::Protocol(_) => false,
        }
    }
}

fn transport_error(e: reqwest::Error) -> CallError {
    if e.is_timeout() {
        CallError::Timeout
    } else {
        CallError::Connection(e.to_string())
    }
}

pub fn http_client() -> reqwest::Client {
    reqwest::Client::builder()
        .no_proxy()
        .build()
        .expect("http client construction")
}

/// Client for the broker's HTTP surface with a per-name binding cache.
#[derive(Debug)]
pub struct BrokerClient {
    base: Url,
    http: reqwest::Client,
    ttl: Duration,
    cache: Mutex<HashMap<String, (Instant, ServiceDescription)>>,
}

impl BrokerClient {
    pub fn new(base: Url) -> Self {
        BrokerClient::with_ttl(base, BINDING_TTL)
    }

    pub fn with_ttl(base: Url, ttl: Duration) -> Self {
        BrokerClient {
            base,
            http: http_client(),
            ttl,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn base(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str) -> Result<Url, CallError> {
        self.base
            .join(path)
            .map_err(|e| CallError::Protocol(format!("bad broker URL: {e}")))
    }

    fn name_url(&self, prefix: &str, name: &str) -> Result<Url, CallError> {
        let mut url = self.url(prefix)?;
        url.path_segments_mut()
            .map_err(|_| CallError::Protocol("broker URL cannot be a base".into()))?
            .pop_if_empty()
            .push(name);
        Ok(url)
    }

    async fn get(&self, url: Url) -> Result<(reqwest::StatusCode, Vec<u8>), CallError> {
        let resp = self.http.get(url).send().await.map_err(transport_error)?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(transport_error)?;
        Ok((status, body.to_vec()))
    }

    async fn registry_call(&self, path: &str, method: &str, arg: String) -> Result<Value, CallError> {
        let env = Envelope::call(REGISTRY_SERVICE, method, vec![Value::Text(arg)]);
        post_envelope(&self.http, self.url(path)?, &env, &MappingTable::empty())
            .await
            .map(|(_, v)| v)
    }

    pub async fn publish(&self, desc: &ServiceDescription) -> Result<(), CallError> {
        let doc = String::from_utf8(description_document(desc)).expect("documents are UTF-8");
        self.registry_call("registry/publish", "publish", doc).await?;
        self.invalidate(&desc.name);
        Ok(())
    }

    pub async fn retract(&self, name: &str) -> Result<bool, CallError> {
        self.invalidate(name);
        match self
            .registry_call("registry/retract", "retract", name.to_string())
            .await?
        {
            Value::Bool(b) => Ok(b),
            other => Err(CallError::Protocol(format!("retract returned {}", other.kind()))),
        }
    }

    pub async fn find(&self, pattern: &str) -> Result<Vec<ServiceDescription>, CallError> {
        let mut url = self.url("registry/find")?;
        url.query_pairs_mut().append_pair("name", pattern);
        let (status, body) = self.get(url).await?;
        if !status.is_success() {
            return Err(CallError::Protocol(format!(
                "find failed with {status}: {}",
                String::from_utf8_lossy(&body)
            )));
        }
        parse_registry_document(&body).map_err(|e| CallError::Protocol(e.to_string()))
    }

    /// Looks the service up on the broker, bypassing the cache.
    pub async fn bind_fresh(&self, name: &str) -> Result<ServiceDescription, CallError> {
        let (status, body) = self.get(self.name_url("registry/bind", name)?).await?;
        if status == reqwest::StatusCode::NOT_FOUND {
            return Err(CallError::NotFound(name.to_string()));
        }
        if !status.is_success() {
            return Err(CallError::Protocol(format!("bind failed with {status}")));
        }
        let desc = parse_description_document(&body).map_err(|e| CallError::Protocol(e.to_string()))?;
        self.cache
            .lock()
            .expect("cache lock poisoned")
            .insert(name.to_string(), (Instant::now(), desc.clone()));
        Ok(desc)
    }

    /// Cached bind; entries older than the TTL are refreshed.
    pub async fn bind(&self, name: &str) -> Result<ServiceDescription, CallError> {
        let cached = {
            let cache = self.cache.lock().expect("cache lock poisoned");
            cache
                .get(name)
                .filter(|(at, _)| at.elapsed() < self.ttl)
                .map(|(_, d)| d.clone())
        };
        match cached {
            Some(d) => Ok(d),
            None => self.bind_fresh(name).await,
        }
    }

    pub async fn describe(&self, name: &str) -> Result<Vec<u8>, CallError> {
        let (status, body) = self.get(self.name_url("registry/describe", name)?).await?;
        if status == reqwest::StatusCode::NOT_FOUND {
            return Err(CallError::NotFound(name.to_string()));
        }
        Ok(body)
    }

    pub fn invalidate(&self, name: &str) {
        self.cache.lock().expect("cache lock poisoned").remove(name);
    }
}

#[async_trait]
impl Publisher for BrokerClient {
    async fn publish(&self, desc: ServiceDescription) -> Result<(), String> {
        BrokerClient::publish(self, &desc).await.map_err(|e| e.to_string())
    }

    async fn retract(&self, name: &str) -> Result<(), String> {
        BrokerClient::retract(self, name)
            .await
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

/// Posts an envelope and returns the raw reply with its decoded form,
/// whatever the body kind.
pub async fn exchange_envelope(
    http: &reqwest::Client,
    endpoint: Url,
    env: &Envelope,
    mappings: &MappingTable,
) -> Result<(Vec<u8>, Envelope), CallError> {
    let bytes = encode_envelope(env, mappings).map_err(|e| CallError::Protocol(e.to_string()))?;
    let resp = http
        .post(endpoint)
        .header("content-type", "text/xml; charset=utf-8")
        .body(bytes)
        .send()
        .await
        .map_err(transport_error)?;
    let body = resp.bytes().await.map_err(transport_error)?.to_vec();
    let reply = decode_envelope(&body, mappings).map_err(|e| CallError::Protocol(e.to_string()))?;
    Ok((body, reply))
}

fn into_result(reply: Envelope) -> Result<Value, CallError> {
    match reply.body {
        Body::Response { result } => Ok(result),
        Body::Fault(f) => Err(CallError::Fault(f)),
        Body::Call { .. } => Err(CallError::Protocol("reply was a call".into())),
    }
}

/// Posts an envelope and decodes the reply. Returns the raw reply bytes as well.
pub async fn post_envelope(
    http: &reqwest::Client,
    endpoint: Url,
    env: &Envelope,
    mappings: &MappingTable,
) -> Result<(Vec<u8>, Value), CallError> {
    let (raw, reply) = exchange_envelope(http, endpoint, env, mappings).await?;
    into_result(reply).map(|v| (raw, v))
}

/// Calls services by name: bind through the broker, then post the envelope.
#[derive(Debug)]
pub struct RpcClient {
    broker: BrokerClient,
    http: reqwest::Client,
    timeout: Duration,
}

/// A successful call: decoded value plus the exact reply bytes.
#[derive(Debug, Clone)]
pub struct CallReply {
    pub value: Value,
    pub raw: Vec<u8>,
}

impl RpcClient {
    pub fn new(broker: Url) -> Self {
        RpcClient::with_timeout(broker, DEFAULT_CALL_TIMEOUT)
    }

    pub fn with_timeout(broker: Url, timeout: Duration) -> Self {
        RpcClient {
            broker: BrokerClient::new(broker),
            http: http_client(),
            timeout,
        }
    }

    pub fn broker(&self) -> &BrokerClient {
        &self.broker
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub async fn call(&self, service: &str, method: &str, args: Vec<Value>) -> Result<Value, CallError> {
        self.call_with_timeout(service, method, args, self.timeout).await
    }

    pub async fn call_with_timeout(
        &self,
        service: &str,
        method: &str,
        args: Vec<Value>,
        timeout: Duration,
    ) -> Result<Value, CallError> {
        self.call_raw(service, Envelope::call(service, method, args), timeout)
            .await
            .map(|r| r.value)
    }

    /// Sends a prepared envelope. A connection failure or a NoSuchService
    /// fault drops the cached binding so the next call asks the broker again.
    pub async fn call_raw(&self, service: &str, env: Envelope, timeout: Duration) -> Result<CallReply, CallError> {
        let (raw, reply) = self.exchange(service, env, timeout).await?;
        into_result(reply).map(|value| CallReply { value, raw })
    }

    /// Like [`RpcClient::call_raw`] but a fault reply is returned as-is with
    /// its bytes; only binding and transport problems are errors.
    pub async fn exchange(
        &self,
        service: &str,
        env: Envelope,
        timeout: Duration,
    ) -> Result<(Vec<u8>, Envelope), CallError> {
        let attempt = async {
            let desc = self.broker.bind(service).await?;
            let endpoint = Url::parse(&desc.endpoint).map_err(|e| CallError::Protocol(e.to_string()))?;
            let mappings =
                MappingTable::new(desc.record_types.iter().cloned()).map_err(|e| CallError::Protocol(e.to_string()))?;
            let result = exchange_envelope(&self.http, endpoint, &env, &mappings).await;
            match &result {
                Err(CallError::Connection(_)) => self.broker.invalidate(service),
                Ok((_, reply)) if matches!(&reply.body, Body::Fault(f) if f.code == FaultCode::NoSuchService) => {
                    self.broker.invalidate(service)
                }
                _ => {}
            }
            result
        };
        match tokio::time::timeout(timeout, attempt).await {
            Ok(r) => r,
            Err(_) => Err(CallError::Timeout),
        }
    }
}
