//! Deployment descriptors: the `<deployment>` / `<undeployment>` documents
//! that declare services, their provider, request-flow handlers, parameters,
//! and bean mappings.
//!
//! The grammar is closed: elements outside it are rejected rather than skipped.
//! Provider and handler type tags such as `java:RPC` are opaque strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use roxmltree::Node;

use crate::envelope::{BeanMapping, MappingTable};
use crate::xml::{self, push_attr};

pub const WSDD_NS: &str = "http://xml.apache.org/axis/wsdd/";

const PARAM_CLASS_NAME: &str = "className";
const PARAM_ALLOWED_METHODS: &str = "allowedMethods";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerDef {
    pub name: String,
    pub native_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllowedMethods {
    Wildcard,
    Only(BTreeSet<String>),
}

impl AllowedMethods {
    pub fn admits(&self, method: &str) -> bool {
        match self {
            AllowedMethods::Wildcard => true,
            AllowedMethods::Only(set) => set.contains(method),
        }
    }

    /// `"*"` is the wildcard; anything else is a single-space separated list.
    pub fn parse(value: &str) -> Result<Self, String> {
        if value == "*" {
            return Ok(AllowedMethods::Wildcard);
        }
        let mut set = BTreeSet::new();
        for name in value.split(' ') {
            if name.is_empty() {
                return Err(format!("empty method name in {value:?}"));
            }
            set.insert(name.to_string());
        }
        Ok(AllowedMethods::Only(set))
    }

    fn render(&self) -> String {
        match self {
            AllowedMethods::Wildcard => "*".to_string(),
            AllowedMethods::Only(set) => set.iter().map(String::as_str).collect::<Vec<_>>().join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDef {
    pub name: String,
    pub provider: String,
    /// Handler names, run in this order before dispatch.
    pub request_flow: Vec<String>,
    pub class_name: String,
    pub allowed_methods: AllowedMethods,
    pub bean_mappings: Vec<BeanMapping>,
    /// Parameters other than `className` and `allowedMethods`; kept, not used.
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeploymentDescriptor {
    pub handlers: Vec<HandlerDef>,
    pub services: Vec<ServiceDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndeploymentDescriptor {
    pub service_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Descriptor {
    Deployment(DeploymentDescriptor),
    Undeployment(UndeploymentDescriptor),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WsddError {
    #[error("malformed XML at {line}:{column}: {message}")]
    MalformedXml { line: u32, column: u32, message: String },
    #[error("unknown root element <{0}>")]
    UnknownRoot(String),
    #[error("unknown element <{0}>")]
    UnknownElement(String),
    #[error("<{element}> lacks attribute {attribute:?}")]
    MissingAttribute { element: String, attribute: String },
    #[error("service {service} lacks parameter {parameter:?}")]
    MissingParameter { service: String, parameter: String },
    #[error("service {service}: bad parameter {parameter:?}: {reason}")]
    InvalidParameter {
        service: String,
        parameter: String,
        reason: String,
    },
    #[error("duplicate service {0}")]
    DuplicateService(String),
    #[error("duplicate handler {0}")]
    DuplicateHandler(String),
    #[error("service {service} references unknown handler {handler}")]
    UnresolvedHandler { service: String, handler: String },
    #[error("service {service}: bad bean mapping: {reason}")]
    InvalidBeanMapping { service: String, reason: String },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
}

/// One problem found by [`validate_descriptor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Service name, or the handler name for handler-level problems.
    pub subject: String,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.reason)
    }
}

fn local<'a>(node: Node<'a, '_>) -> &'a str {
    node.tag_name().name()
}

fn in_wsdd_ns(node: Node<'_, '_>) -> bool {
    matches!(node.tag_name().namespace(), None | Some(WSDD_NS))
}

fn attr<'a>(node: Node<'a, '_>, name: &str) -> Result<&'a str, WsddError> {
    node.attribute(name).ok_or_else(|| WsddError::MissingAttribute {
        element: local(node).to_string(),
        attribute: name.to_string(),
    })
}

fn elements<'a, 'i>(node: Node<'a, 'i>) -> Result<Vec<Node<'a, 'i>>, WsddError> {
    let children =
        xml::element_children(node).map_err(|_| WsddError::UnknownElement(format!("text inside {}", local(node))))?;
    for c in &children {
        if !in_wsdd_ns(*c) {
            return Err(WsddError::UnknownElement(local(*c).to_string()));
        }
    }
    Ok(children)
}

/// Parses a `<deployment>` or `<undeployment>` document.
pub fn parse_wsdd(doc: &[u8]) -> Result<Descriptor, WsddError> {
    let malformed = |line, column, message| WsddError::MalformedXml { line, column, message };
    let text = std::str::from_utf8(doc).map_err(|e| {
        let (line, column) = xml::utf8_error_position(doc, &e);
        malformed(line, column, "invalid UTF-8".to_string())
    })?;
    let text = xml::check_utf8_declaration(text).map_err(|(l, c, m)| malformed(l, c, m))?;
    let parsed = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        malformed(pos.row, pos.col, e.to_string())
    })?;
    let root = parsed.root_element();
    if !in_wsdd_ns(root) {
        return Err(WsddError::UnknownRoot(local(root).to_string()));
    }
    match local(root) {
        "deployment" => parse_deployment(root).map(Descriptor::Deployment),
        "undeployment" => parse_undeployment(root).map(Descriptor::Undeployment),
        other => Err(WsddError::UnknownRoot(other.to_string())),
    }
}

fn parse_deployment(root: Node<'_, '_>) -> Result<DeploymentDescriptor, WsddError> {
    let mut d = DeploymentDescriptor::default();
    for child in elements(root)? {
        match local(child) {
            "handler" => {
                let name = attr(child, "name")?.to_string();
                if d.handlers.iter().any(|h| h.name == name) {
                    return Err(WsddError::DuplicateHandler(name));
                }
                d.handlers.push(HandlerDef {
                    name,
                    native_type: attr(child, "type")?.to_string(),
                });
                if !elements(child)?.is_empty() {
                    return Err(WsddError::UnknownElement("handler content".into()));
                }
            }
            "service" => {
                let service = parse_service(child)?;
                if d.services.iter().any(|s| s.name == service.name) {
                    return Err(WsddError::DuplicateService(service.name));
                }
                d.services.push(service);
            }
            other => return Err(WsddError::UnknownElement(other.to_string())),
        }
    }
    for s in &d.services {
        for h in &s.request_flow {
            if !d.handlers.iter().any(|def| &def.name == h) {
                return Err(WsddError::UnresolvedHandler {
                    service: s.name.clone(),
                    handler: h.clone(),
                });
            }
        }
    }
    Ok(d)
}

fn parse_service(node: Node<'_, '_>) -> Result<ServiceDef, WsddError> {
    let name = attr(node, "name")?.to_string();
    if name.is_empty() {
        return Err(WsddError::InvalidDescriptor("empty service name".into()));
    }
    let provider = attr(node, "provider")?.to_string();
    let mut request_flow = None;
    let mut params: BTreeMap<String, String> = BTreeMap::new();
    let mut bean_mappings = Vec::new();

    for child in elements(node)? {
        match local(child) {
            "requestFlow" => {
                if request_flow.is_some() {
                    return Err(WsddError::UnknownElement("requestFlow (repeated)".into()));
                }
                let mut flow = Vec::new();
                for h in elements(child)? {
                    if local(h) != "handler" {
                        return Err(WsddError::UnknownElement(local(h).to_string()));
                    }
                    flow.push(attr(h, "type")?.to_string());
                }
                request_flow = Some(flow);
            }
            "parameter" => {
                let pname = attr(child, "name")?.to_string();
                let value = attr(child, "value")?.to_string();
                if params.insert(pname.clone(), value).is_some() {
                    return Err(WsddError::InvalidParameter {
                        service: name.clone(),
                        parameter: pname,
                        reason: "repeated".into(),
                    });
                }
            }
            "beanMapping" => {
                let qname = attr(child, "qname")?;
                let native_type = attr(child, "languageSpecificType")?;
                let bad = |reason: String| WsddError::InvalidBeanMapping {
                    service: name.clone(),
                    reason,
                };
                let (prefix, _) = BeanMapping::split_qname(qname)
                    .ok_or_else(|| bad(format!("qname {qname:?} must be PREFIX:LOCAL")))?;
                let namespace = child
                    .lookup_namespace_uri(Some(prefix))
                    .ok_or_else(|| bad(format!("prefix {prefix:?} is not declared")))?;
                bean_mappings.push(BeanMapping::new(qname, namespace, native_type));
            }
            other => return Err(WsddError::UnknownElement(other.to_string())),
        }
    }

    MappingTable::new(bean_mappings.iter().cloned()).map_err(|e| WsddError::InvalidBeanMapping {
        service: name.clone(),
        reason: e.to_string(),
    })?;

    let class_name = params
        .remove(PARAM_CLASS_NAME)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| WsddError::MissingParameter {
            service: name.clone(),
            parameter: PARAM_CLASS_NAME.into(),
        })?;
    let allowed_methods = match params.remove(PARAM_ALLOWED_METHODS) {
        None => AllowedMethods::Wildcard,
        Some(v) => AllowedMethods::parse(&v).map_err(|reason| WsddError::InvalidParameter {
            service: name.clone(),
            parameter: PARAM_ALLOWED_METHODS.into(),
            reason,
        })?,
    };

    Ok(ServiceDef {
        name,
        provider,
        request_flow: request_flow.unwrap_or_default(),
        class_name,
        allowed_methods,
        bean_mappings,
        parameters: params,
    })
}

fn parse_undeployment(root: Node<'_, '_>) -> Result<UndeploymentDescriptor, WsddError> {
    let mut names: Vec<String> = Vec::new();
    for child in elements(root)? {
        if local(child) != "service" {
            return Err(WsddError::UnknownElement(local(child).to_string()));
        }
        let name = attr(child, "name")?.to_string();
        if names.contains(&name) {
            return Err(WsddError::DuplicateService(name));
        }
        names.push(name);
    }
    if names.is_empty() {
        return Err(WsddError::InvalidDescriptor("undeployment names no services".into()));
    }
    Ok(UndeploymentDescriptor { service_names: names })
}

/// Invariant checks that do not depend on which implementations exist.
fn structural_diagnostics(d: &DeploymentDescriptor) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let diag = |subject: &str, reason: String| Diagnostic {
        subject: subject.to_string(),
        reason,
    };
    let mut handler_names = BTreeSet::new();
    for h in &d.handlers {
        if h.name.is_empty() {
            out.push(diag("", "handler with empty name".into()));
        }
        if !handler_names.insert(h.name.as_str()) {
            out.push(diag(&h.name, "duplicate handler name".into()));
        }
    }
    let mut service_names = BTreeSet::new();
    for s in &d.services {
        if s.name.is_empty() {
            out.push(diag("", "service with empty name".into()));
        }
        if !service_names.insert(s.name.as_str()) {
            out.push(diag(&s.name, "duplicate service name".into()));
        }
        if s.class_name.is_empty() {
            out.push(diag(&s.name, "empty className".into()));
        }
        for h in &s.request_flow {
            if !handler_names.contains(h.as_str()) {
                out.push(diag(&s.name, format!("request flow names unknown handler {h:?}")));
            }
        }
        if let AllowedMethods::Only(set) = &s.allowed_methods {
            if set.is_empty() || set.iter().any(|m| m.is_empty() || m.contains(' ')) {
                out.push(diag(
                    &s.name,
                    "allowedMethods must be * or nonempty space-free names".into(),
                ));
            }
        }
        for reserved in [PARAM_CLASS_NAME, PARAM_ALLOWED_METHODS] {
            if s.parameters.contains_key(reserved) {
                out.push(diag(&s.name, format!("{reserved} duplicated in auxiliary parameters")));
            }
        }
        if let Err(e) = MappingTable::new(s.bean_mappings.iter().cloned()) {
            out.push(diag(&s.name, e.to_string()));
        }
    }
    out
}

/// Lists every invariant violation plus every `className` that is not a
/// registered implementation id. Empty means the descriptor is deployable.
pub fn validate_descriptor(d: &DeploymentDescriptor, impl_registry: &BTreeSet<String>) -> Vec<Diagnostic> {
    let mut out = structural_diagnostics(d);
    for s in &d.services {
        if !s.class_name.is_empty() && !impl_registry.contains(&s.class_name) {
            out.push(Diagnostic {
                subject: s.name.clone(),
                reason: format!("no implementation registered for className {:?}", s.class_name),
            });
        }
    }
    out
}

/// Writes a descriptor in the canonical two-space-indented layout.
pub fn serialize_wsdd(d: &Descriptor) -> Result<Vec<u8>, WsddError> {
    let mut out = String::new();
    match d {
        Descriptor::Deployment(dep) => {
            if let Some(first) = structural_diagnostics(dep).into_iter().next() {
                return Err(WsddError::InvalidDescriptor(first.to_string()));
            }
            out.push_str("<deployment");
            push_attr(&mut out, "xmlns", WSDD_NS);
            if dep.handlers.is_empty() && dep.services.is_empty() {
                out.push_str("/>\n");
                return Ok(out.into_bytes());
            }
            out.push_str(">\n");
            for h in &dep.handlers {
                out.push_str("  <handler");
                push_attr(&mut out, "name", &h.name);
                push_attr(&mut out, "type", &h.native_type);
                out.push_str("/>\n");
            }
            for s in &dep.services {
                write_service(&mut out, s);
            }
            out.push_str("</deployment>\n");
        }
        Descriptor::Undeployment(u) => {
            let unique: BTreeSet<_> = u.service_names.iter().collect();
            if u.service_names.is_empty() || unique.len() != u.service_names.len() {
                return Err(WsddError::InvalidDescriptor(
                    "undeployment needs nonempty, unique service names".into(),
                ));
            }
            out.push_str("<undeployment");
            push_attr(&mut out, "xmlns", WSDD_NS);
            out.push_str(">\n");
            for name in &u.service_names {
                out.push_str("  <service");
                push_attr(&mut out, "name", name);
                out.push_str("/>\n");
            }
            out.push_str("</undeployment>\n");
        }
    }
    Ok(out.into_bytes())
}

fn write_service(out: &mut String, s: &ServiceDef) {
    out.push_str("  <service");
    push_attr(out, "name", &s.name);
    push_attr(out, "provider", &s.provider);
    out.push_str(">\n");
    if !s.request_flow.is_empty() {
        out.push_str("    <requestFlow>\n");
        for h in &s.request_flow {
            out.push_str("      <handler");
            push_attr(out, "type", h);
            out.push_str("/>\n");
        }
        out.push_str("    </requestFlow>\n");
    }
    let mut param = |name: &str, value: &str| {
        out.push_str("    <parameter");
        push_attr(out, "name", name);
        push_attr(out, "value", value);
        out.push_str("/>\n");
    };
    param(PARAM_CLASS_NAME, &s.class_name);
    param(PARAM_ALLOWED_METHODS, &s.allowed_methods.render());
    for (k, v) in &s.parameters {
        param(k, v);
    }
    for m in &s.bean_mappings {
        out.push_str("    <beanMapping");
        push_attr(out, "qname", &m.qname);
        push_attr(out, &format!("xmlns:{}", m.prefix()), &m.namespace);
        push_attr(out, "languageSpecificType", &m.native_type);
        out.push_str("/>\n");
    }
    out.push_str("  </service>\n");
}

impl DeploymentDescriptor {
    pub fn service(&self, name: &str) -> Option<&ServiceDef> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn handler(&self, name: &str) -> Option<&HandlerDef> {
        self.handlers.iter().find(|h| h.name == name)
    }
}
