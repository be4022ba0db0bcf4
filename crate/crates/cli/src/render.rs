//! Human-readable output.

use std::fmt::Write as _;

use i3_core::emis::{Certificate, NoDuesStatus};
use i3_core::envelope::{Fault, Value};

pub fn fault(f: &Fault) -> String {
    if f.detail.is_empty() {
        format!("Fault {}: {}", f.code, f.reason)
    } else {
        format!("Fault {}: {}: {}", f.code, f.reason, f.detail)
    }
}

pub fn value(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, 0);
    s.truncate(s.trim_end().len());
    s
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Text(t) => Some(t.clone()),
        Value::Int(i) => Some(i.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Date(d) => Some(d.to_string()),
        Value::Nil => Some("nil".into()),
        Value::List(items) if items.is_empty() => Some("[]".into()),
        _ => None,
    }
}

fn write_value(s: &mut String, v: &Value, indent: usize) {
    let pad = "  ".repeat(indent);
    if let Some(text) = scalar(v) {
        let _ = writeln!(s, "{pad}{text}");
        return;
    }
    match v {
        Value::List(items) => {
            for item in items {
                match scalar(item) {
                    Some(text) => {
                        let _ = writeln!(s, "{pad}- {text}");
                    }
                    None => {
                        let _ = writeln!(s, "{pad}-");
                        write_value(s, item, indent + 1);
                    }
                }
            }
        }
        Value::Record(r) => {
            let _ = writeln!(s, "{pad}{}", r.qname);
            let width = r.fields.keys().map(String::len).max().unwrap_or(0);
            for (k, field) in &r.fields {
                match scalar(field) {
                    Some(text) => {
                        let _ = writeln!(s, "{pad}  {k:<width$}  {text}");
                    }
                    None => {
                        let _ = writeln!(s, "{pad}  {k}:");
                        write_value(s, field, indent + 2);
                    }
                }
            }
        }
        _ => unreachable!("scalars handled above"),
    }
}

pub fn status_table(status: &NoDuesStatus) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "student     {}", status.student_id);
    let _ = writeln!(s, "checked at  {}", status.checked_at.to_rfc3339());
    let _ = writeln!(s, "{:<11} {:<8} {:>8}  detail", "provider", "verdict", "latency");
    for p in &status.statuses {
        let _ = writeln!(
            s,
            "{:<11} {:<8} {:>5} ms  {}",
            format!("{:?}", p.provider),
            p.verdict.name(),
            p.latency_ms,
            p.verdict.detail()
        );
    }
    let _ = writeln!(s, "overall     {:?}", status.overall);
    s
}

pub fn certificate(c: &Certificate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "certificate {}", c.serial);
    let _ = writeln!(s, "student     {}", c.student_id);
    let _ = writeln!(s, "programme   {}", c.programme);
    let _ = writeln!(s, "issued at   {}", c.issued_at.to_rfc3339());
    s.push_str(&status_table(&c.verification_snapshot));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use i3_core::envelope::{FaultCode, Record};

    #[test]
    fn nested_values_indent() {
        let r = Record::new("myNS:ListItem")
            .with("label", "SW")
            .with("value", Value::Int(3));
        let v = Value::List(vec![Value::Record(r), Value::text("x")]);
        assert_eq!(value(&v), "-\n  myNS:ListItem\n    label  SW\n    value  3\n- x");
        assert_eq!(value(&Value::Nil), "nil");
    }

    #[test]
    fn fault_line_names_the_code() {
        let f = Fault::new(FaultCode::NoSuchService, "NoSuchService", "Nope");
        assert_eq!(fault(&f), "Fault Server.NoSuchService: NoSuchService: Nope");
    }
}
