use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};
use roxmltree::Node;

use super::{
    Body, Envelope, EnvelopeError, Fault, FaultCode, MappingTable, Record, Value, ValueKind, ENVELOPE_NS,
    SERVICE_NS_PREFIX, XML_DECLARATION,
};
use crate::xml::{self, escape_text, first_invalid_char, is_ncname, push_attr};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Serializes an envelope to its wire bytes.
pub fn encode_envelope(env: &Envelope, mappings: &MappingTable) -> Result<Vec<u8>, EnvelopeError> {
    let mut out = String::with_capacity(256);
    out.push_str(XML_DECLARATION);
    out.push_str("<i3:Envelope");
    push_attr(&mut out, "xmlns:i3", ENVELOPE_NS);
    out.push('>');

    if env.header.is_empty() {
        out.push_str("<i3:Header/>");
    } else {
        out.push_str("<i3:Header>");
        for (name, value) in &env.header {
            check_chars(name)?;
            let mut attrs = String::new();
            push_attr(&mut attrs, "name", name);
            write_text_element(&mut out, "i3:entry", &attrs, value)?;
        }
        out.push_str("</i3:Header>");
    }

    out.push_str("<i3:Body>");
    match &env.body {
        Body::Call { service, method, args } => {
            if service.is_empty() {
                return Err(EnvelopeError::InvalidEnvelope("empty service name".into()));
            }
            check_chars(service)?;
            if !is_ncname(method) {
                return Err(EnvelopeError::InvalidEnvelope(format!(
                    "method name {method:?} is not an XML name"
                )));
            }
            let _ = write!(out, "<m:{method}");
            push_attr(&mut out, "xmlns:m", &format!("{SERVICE_NS_PREFIX}{service}"));
            if args.is_empty() {
                out.push_str("/>");
            } else {
                out.push('>');
                for arg in args {
                    write_value(&mut out, "i3:arg", arg, mappings)?;
                }
                let _ = write!(out, "</m:{method}>");
            }
        }
        Body::Response { result } => {
            out.push_str("<i3:Response>");
            write_value(&mut out, "i3:value", result, mappings)?;
            out.push_str("</i3:Response>");
        }
        Body::Fault(fault) => {
            out.push_str("<i3:Fault>");
            write_text_element(&mut out, "i3:code", "", fault.code.as_str())?;
            write_text_element(&mut out, "i3:reason", "", &fault.reason)?;
            write_text_element(&mut out, "i3:detail", "", &fault.detail)?;
            out.push_str("</i3:Fault>");
        }
    }
    out.push_str("</i3:Body></i3:Envelope>");
    Ok(out.into_bytes())
}

/// Serializes one value as an `<i3:value>` element. The `i3` prefix is left
/// unbound; the fragment is meant to be embedded in an envelope.
pub fn encode_value(v: &Value, mappings: &MappingTable) -> Result<String, EnvelopeError> {
    let mut out = String::new();
    write_value(&mut out, "i3:value", v, mappings)?;
    Ok(out)
}

fn check_chars(s: &str) -> Result<(), EnvelopeError> {
    match first_invalid_char(s) {
        Some(c) => Err(EnvelopeError::InvalidEnvelope(format!(
            "character U+{:04X} cannot be carried in XML",
            c as u32
        ))),
        None => Ok(()),
    }
}

fn write_text_element(out: &mut String, tag: &str, attrs: &str, text: &str) -> Result<(), EnvelopeError> {
    check_chars(text)?;
    let _ = write!(out, "<{tag}{attrs}");
    if text.is_empty() {
        out.push_str("/>");
    } else {
        out.push('>');
        escape_text(out, text);
        let _ = write!(out, "</{tag}>");
    }
    Ok(())
}

fn write_value(out: &mut String, tag: &str, v: &Value, mappings: &MappingTable) -> Result<(), EnvelopeError> {
    let mut attrs = String::new();
    push_attr(&mut attrs, "type", v.kind().wire_name());
    match v {
        Value::Text(s) => write_text_element(out, tag, &attrs, s),
        Value::Int(i) => write_text_element(out, tag, &attrs, &i.to_string()),
        Value::Bool(b) => write_text_element(out, tag, &attrs, if *b { "true" } else { "false" }),
        Value::Date(d) => {
            if !(1..=9999).contains(&d.year()) {
                return Err(EnvelopeError::InvalidEnvelope(format!(
                    "date {d} outside years 0001-9999"
                )));
            }
            write_text_element(out, tag, &attrs, &d.format(DATE_FORMAT).to_string())
        }
        Value::Nil => {
            let _ = write!(out, "<{tag}{attrs}/>");
            Ok(())
        }
        Value::List(items) => {
            if let Some(first) = items.first() {
                let kind = first.kind();
                if let Some(bad) = items.iter().find(|i| i.kind() != kind) {
                    return Err(EnvelopeError::InvalidEnvelope(format!(
                        "heterogeneous list: {kind} and {}",
                        bad.kind()
                    )));
                }
            }
            let _ = write!(out, "<{tag}{attrs}");
            if items.is_empty() {
                out.push_str("/>");
                return Ok(());
            }
            out.push('>');
            for item in items {
                write_value(out, "i3:item", item, mappings)?;
            }
            let _ = write!(out, "</{tag}>");
            Ok(())
        }
        Value::Record(record) => {
            let mapping = mappings
                .by_qname(&record.qname)
                .ok_or_else(|| EnvelopeError::UnmappedRecordType(record.qname.clone()))?;
            push_attr(&mut attrs, "qname", &mapping.qname);
            push_attr(&mut attrs, &format!("xmlns:{}", mapping.prefix()), &mapping.namespace);
            let _ = write!(out, "<{tag}{attrs}");
            if record.fields.is_empty() {
                out.push_str("/>");
                return Ok(());
            }
            out.push('>');
            for (name, field) in &record.fields {
                if !is_ncname(name) {
                    return Err(EnvelopeError::InvalidEnvelope(format!(
                        "field name {name:?} is not an XML name"
                    )));
                }
                write_value(out, name, field, mappings)?;
            }
            let _ = write!(out, "</{tag}>");
            Ok(())
        }
    }
}

fn shape(msg: impl Into<String>) -> EnvelopeError {
    EnvelopeError::UnknownBodyShape(msg.into())
}

fn parse_document(text: &str) -> Result<roxmltree::Document<'_>, EnvelopeError> {
    roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        EnvelopeError::MalformedXml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })
}

fn is_i3(node: Node<'_, '_>, local: &str) -> bool {
    node.tag_name().namespace() == Some(ENVELOPE_NS) && node.tag_name().name() == local
}

fn children<'a, 'i>(node: Node<'a, 'i>) -> Result<Vec<Node<'a, 'i>>, EnvelopeError> {
    xml::element_children(node).map_err(|_| shape(format!("unexpected text inside <{}>", node.tag_name().name())))
}

fn text_of(node: Node<'_, '_>) -> Result<String, EnvelopeError> {
    xml::text_content(node).ok_or_else(|| shape(format!("<{}> must contain only text", node.tag_name().name())))
}

/// Parses wire bytes into an envelope. Any input either decodes or yields one
/// of `MalformedXml`, `UnknownBodyShape`, `UnmappedRecordType`, or
/// `UnknownScalarType`.
pub fn decode_envelope(doc: &[u8], mappings: &MappingTable) -> Result<Envelope, EnvelopeError> {
    let text = std::str::from_utf8(doc).map_err(|e| {
        let (line, column) = xml::utf8_error_position(doc, &e);
        EnvelopeError::MalformedXml {
            line,
            column,
            message: "invalid UTF-8".into(),
        }
    })?;
    let text = xml::check_utf8_declaration(text).map_err(|(line, column, message)| EnvelopeError::MalformedXml {
        line,
        column,
        message,
    })?;
    let parsed = parse_document(text)?;
    let root = parsed.root_element();
    if !is_i3(root, "Envelope") {
        return Err(shape(format!(
            "root element <{}> is not i3:Envelope",
            root.tag_name().name()
        )));
    }

    let mut parts = children(root)?.into_iter().peekable();
    let mut header = Vec::new();
    if let Some(h) = parts.next_if(|n| is_i3(*n, "Header")) {
        for entry in children(h)? {
            if !is_i3(entry, "entry") {
                return Err(shape("header may only hold i3:entry elements"));
            }
            let name = entry
                .attribute("name")
                .ok_or_else(|| shape("header entry without name"))?;
            header.push((name.to_string(), text_of(entry)?));
        }
    }
    let body = parts
        .next()
        .filter(|n| is_i3(*n, "Body"))
        .ok_or_else(|| shape("missing i3:Body"))?;
    if parts.next().is_some() {
        return Err(shape("unexpected element after i3:Body"));
    }

    let content = children(body)?;
    let [inner] = content.as_slice() else {
        return Err(shape(format!("body holds {} elements, expected 1", content.len())));
    };
    let inner = *inner;

    let body = if is_i3(inner, "Response") {
        let values = children(inner)?;
        match values.as_slice() {
            [v] if is_i3(*v, "value") => Body::Response {
                result: decode_value(*v, mappings)?,
            },
            _ => return Err(shape("response must hold exactly one i3:value")),
        }
    } else if is_i3(inner, "Fault") {
        let parts = children(inner)?;
        let [code, reason, detail] = parts.as_slice() else {
            return Err(shape("fault must hold code, reason, detail"));
        };
        if !(is_i3(*code, "code") && is_i3(*reason, "reason") && is_i3(*detail, "detail")) {
            return Err(shape("fault must hold code, reason, detail"));
        }
        let code = text_of(*code)?.parse::<FaultCode>().map_err(shape)?;
        Body::Fault(Fault {
            code,
            reason: text_of(*reason)?,
            detail: text_of(*detail)?,
        })
    } else {
        let service = inner
            .tag_name()
            .namespace()
            .and_then(|ns| ns.strip_prefix(SERVICE_NS_PREFIX))
            .filter(|s| !s.is_empty())
            .ok_or_else(|| shape(format!("unknown body element <{}>", inner.tag_name().name())))?;
        let mut args = Vec::new();
        for arg in children(inner)? {
            if !is_i3(arg, "arg") {
                return Err(shape("call may only hold i3:arg elements"));
            }
            args.push(decode_value(arg, mappings)?);
        }
        Body::Call {
            service: service.to_string(),
            method: inner.tag_name().name().to_string(),
            args,
        }
    };
    Ok(Envelope { header, body })
}

/// Decodes one value element (`i3:arg`, `i3:value`, `i3:item`, or a record field).
pub fn decode_value(el: Node<'_, '_>, mappings: &MappingTable) -> Result<Value, EnvelopeError> {
    let type_name = el
        .attribute("type")
        .ok_or_else(|| shape(format!("<{}> lacks a type attribute", el.tag_name().name())))?;
    let kind =
        ValueKind::from_wire_name(type_name).ok_or_else(|| EnvelopeError::UnknownScalarType(type_name.to_string()))?;
    match kind {
        ValueKind::Text => Ok(Value::Text(text_of(el)?)),
        ValueKind::Int => {
            let t = text_of(el)?;
            t.parse::<i64>()
                .map(Value::Int)
                .map_err(|_| shape(format!("invalid int literal {t:?}")))
        }
        ValueKind::Bool => match text_of(el)?.as_str() {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            other => Err(shape(format!("invalid bool literal {other:?}"))),
        },
        ValueKind::Date => {
            let t = text_of(el)?;
            NaiveDate::parse_from_str(&t, DATE_FORMAT)
                .ok()
                .filter(|d| (1..=9999).contains(&d.year()))
                .map(Value::Date)
                .ok_or_else(|| shape(format!("invalid date literal {t:?}")))
        }
        ValueKind::Nil => {
            if children(el)?.is_empty() && text_of(el)?.trim().is_empty() {
                Ok(Value::Nil)
            } else {
                Err(shape("nil value with content"))
            }
        }
        ValueKind::List => {
            let mut items = Vec::new();
            for item in children(el)? {
                if !is_i3(item, "item") {
                    return Err(shape("list may only hold i3:item elements"));
                }
                items.push(decode_value(item, mappings)?);
            }
            if let Some(first) = items.first() {
                let k = first.kind();
                if items.iter().any(|v| v.kind() != k) {
                    return Err(shape("heterogeneous list"));
                }
            }
            Ok(Value::List(items))
        }
        ValueKind::Record => {
            let qname = el.attribute("qname").ok_or_else(|| shape("record without qname"))?;
            let unmapped = || EnvelopeError::UnmappedRecordType(qname.to_string());
            let (prefix, local) = qname.split_once(':').ok_or_else(unmapped)?;
            let namespace = el.lookup_namespace_uri(Some(prefix)).ok_or_else(unmapped)?;
            let mapping = mappings.by_expanded_name(namespace, local).ok_or_else(unmapped)?;
            let mut fields = BTreeMap::new();
            for field in children(el)? {
                if field.tag_name().namespace().is_some() {
                    return Err(shape("record fields must be unqualified"));
                }
                let name = field.tag_name().name().to_string();
                let value = decode_value(field, mappings)?;
                if fields.insert(name, value).is_some() {
                    return Err(shape("duplicate record field"));
                }
            }
            Ok(Value::Record(Record {
                qname: mapping.qname.clone(),
                fields,
            }))
        }
    }
}

/// Decodes a standalone value fragment such as the output of [`encode_value`].
pub fn decode_value_fragment(fragment: &str, mappings: &MappingTable) -> Result<Value, EnvelopeError> {
    let wrapped = format!("<i3:fragment xmlns:i3=\"{ENVELOPE_NS}\">{fragment}</i3:fragment>");
    let parsed = parse_document(&wrapped)?;
    let content = children(parsed.root_element())?;
    match content.as_slice() {
        [el] => decode_value(*el, mappings),
        _ => Err(shape("fragment must hold exactly one element")),
    }
}
