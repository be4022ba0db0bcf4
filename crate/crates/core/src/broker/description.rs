use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use roxmltree::Node;

use crate::envelope::{BeanMapping, ValueKind, XML_DECLARATION};
use crate::xml::{self, push_attr};

pub const DESCRIPTION_NS: &str = "urn:i3/description";

/// Structural signature of one exposed method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSignature {
    pub name: String,
    pub params: Vec<ValueKind>,
    pub result: ValueKind,
}

impl MethodSignature {
    pub fn new(name: impl Into<String>, params: &[ValueKind], result: ValueKind) -> Self {
        MethodSignature {
            name: name.into(),
            params: params.to_vec(),
            result,
        }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Registry entry describing a deployed service and how to call it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDescription {
    pub name: String,
    /// Absolute URL of the service endpoint.
    pub endpoint: String,
    pub methods: Vec<MethodSignature>,
    pub record_types: Vec<BeanMapping>,
    pub published_at: DateTime<Utc>,
}

impl ServiceDescription {
    pub fn method(&self, name: &str) -> Option<&MethodSignature> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Same entry ignoring the publication timestamp.
    pub fn same_content(&self, other: &ServiceDescription) -> bool {
        self.name == other.name
            && self.endpoint == other.endpoint
            && self.methods == other.methods
            && self.record_types == other.record_types
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid description document: {0}")]
pub struct DescriptionParseError(pub String);

fn write_description(out: &mut String, d: &ServiceDescription, declare_ns: bool) {
    out.push_str("<i3:ServiceDescription");
    if declare_ns {
        push_attr(out, "xmlns:i3", DESCRIPTION_NS);
    }
    push_attr(out, "name", &d.name);
    push_attr(out, "endpoint", &d.endpoint);
    push_attr(
        out,
        "publishedAt",
        &d.published_at.to_rfc3339_opts(SecondsFormat::Micros, true),
    );
    out.push('>');
    for m in &d.methods {
        out.push_str("<i3:method");
        push_attr(out, "name", &m.name);
        push_attr(out, "result", m.result.wire_name());
        if m.params.is_empty() {
            out.push_str("/>");
            continue;
        }
        out.push('>');
        for p in &m.params {
            let _ = write!(out, "<i3:param type=\"{}\"/>", p.wire_name());
        }
        out.push_str("</i3:method>");
    }
    for r in &d.record_types {
        out.push_str("<i3:recordType");
        push_attr(out, "qname", &r.qname);
        push_attr(out, &format!("xmlns:{}", r.prefix()), &r.namespace);
        push_attr(out, "languageSpecificType", &r.native_type);
        out.push_str("/>");
    }
    out.push_str("</i3:ServiceDescription>");
}

/// The self-description document served by `describe`.
pub fn description_document(d: &ServiceDescription) -> Vec<u8> {
    let mut out = String::from(XML_DECLARATION);
    write_description(&mut out, d, true);
    out.into_bytes()
}

/// Several descriptions in one `<i3:Registry>` document; used for find
/// results and for the registry snapshot file.
pub fn registry_document<'a>(entries: impl IntoIterator<Item = &'a ServiceDescription>) -> Vec<u8> {
    let mut out = String::from(XML_DECLARATION);
    out.push_str("<i3:Registry");
    push_attr(&mut out, "xmlns:i3", DESCRIPTION_NS);
    out.push('>');
    for d in entries {
        write_description(&mut out, d, false);
    }
    out.push_str("</i3:Registry>");
    out.into_bytes()
}

fn bad(msg: impl Into<String>) -> DescriptionParseError {
    DescriptionParseError(msg.into())
}

fn is_d(node: Node<'_, '_>, local: &str) -> bool {
    node.tag_name().namespace() == Some(DESCRIPTION_NS) && node.tag_name().name() == local
}

fn parse_doc(bytes: &[u8]) -> Result<roxmltree::Document<'_>, DescriptionParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| bad(e.to_string()))?;
    roxmltree::Document::parse(text).map_err(|e| bad(e.to_string()))
}

fn kind_attr(node: Node<'_, '_>, attr: &str) -> Result<ValueKind, DescriptionParseError> {
    let name = node.attribute(attr).ok_or_else(|| bad(format!("missing {attr}")))?;
    ValueKind::from_wire_name(name).ok_or_else(|| bad(format!("unknown kind {name:?}")))
}

fn read_description(node: Node<'_, '_>) -> Result<ServiceDescription, DescriptionParseError> {
    if !is_d(node, "ServiceDescription") {
        return Err(bad("expected i3:ServiceDescription"));
    }
    let attr = |name: &str| {
        node.attribute(name)
            .map(str::to_string)
            .ok_or_else(|| bad(format!("missing {name}")))
    };
    let published_at = DateTime::parse_from_rfc3339(&attr("publishedAt")?)
        .map_err(|e| bad(e.to_string()))?
        .with_timezone(&Utc);
    let mut methods = Vec::new();
    let mut record_types = Vec::new();
    for child in xml::element_children(node).map_err(|_| bad("stray text"))? {
        if is_d(child, "method") {
            let mut params = Vec::new();
            for p in xml::element_children(child).map_err(|_| bad("stray text"))? {
                if !is_d(p, "param") {
                    return Err(bad("method may only hold params"));
                }
                params.push(kind_attr(p, "type")?);
            }
            methods.push(MethodSignature {
                name: child
                    .attribute("name")
                    .ok_or_else(|| bad("method without name"))?
                    .to_string(),
                params,
                result: kind_attr(child, "result")?,
            });
        } else if is_d(child, "recordType") {
            let qname = child
                .attribute("qname")
                .ok_or_else(|| bad("recordType without qname"))?;
            let (prefix, _) = BeanMapping::split_qname(qname).ok_or_else(|| bad("bad qname"))?;
            let namespace = child
                .lookup_namespace_uri(Some(prefix))
                .ok_or_else(|| bad("undeclared prefix"))?;
            let native = child.attribute("languageSpecificType").unwrap_or_default();
            record_types.push(BeanMapping::new(qname, namespace, native));
        } else {
            return Err(bad(format!("unexpected <{}>", child.tag_name().name())));
        }
    }
    Ok(ServiceDescription {
        name: attr("name")?,
        endpoint: attr("endpoint")?,
        methods,
        record_types,
        published_at,
    })
}

pub fn parse_description_document(bytes: &[u8]) -> Result<ServiceDescription, DescriptionParseError> {
    let doc = parse_doc(bytes)?;
    read_description(doc.root_element())
}

pub fn parse_registry_document(bytes: &[u8]) -> Result<Vec<ServiceDescription>, DescriptionParseError> {
    let doc = parse_doc(bytes)?;
    let root = doc.root_element();
    if !is_d(root, "Registry") {
        return Err(bad("expected i3:Registry"));
    }
    xml::element_children(root)
        .map_err(|_| bad("stray text"))?
        .into_iter()
        .map(read_description)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ServiceDescription {
        ServiceDescription {
            name: "AdmissionDataBaseManagerService".into(),
            endpoint: "http://127.0.0.1:8080/services/AdmissionDataBaseManagerService".into(),
            methods: vec![
                MethodSignature::new("getStudent", &[ValueKind::Text], ValueKind::Record),
                MethodSignature::new("listDepartments", &[], ValueKind::List),
            ],
            record_types: vec![BeanMapping::new(
                "myNS:StudentRecord",
                "urn:BeanService",
                "java:StudentRecord",
            )],
            published_at: DateTime::parse_from_rfc3339("2026-10-15T08:00:00.123456Z")
                .unwrap()
                .with_timezone(&Utc),
        }
    }

    #[test]
    fn description_round_trips() {
        let d = sample();
        let doc = description_document(&d);
        assert_eq!(parse_description_document(&doc).unwrap(), d);
        let text = String::from_utf8(doc).unwrap();
        assert!(
            text.contains("<i3:method name=\"getStudent\" result=\"record\"><i3:param type=\"string\"/></i3:method>")
        );
    }

    #[test]
    fn registry_document_round_trips() {
        let mut second = sample();
        second.name = "Other".into();
        let doc = registry_document([&sample(), &second]);
        assert_eq!(parse_registry_document(&doc).unwrap(), vec![sample(), second]);
        assert!(parse_registry_document(&registry_document([])).unwrap().is_empty());
    }
}
