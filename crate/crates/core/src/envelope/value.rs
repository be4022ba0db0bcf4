use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;

/// Payload value carried in envelopes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Text(String),
    Int(i64),
    Bool(bool),
    Date(NaiveDate),
    /// Elements share one [`ValueKind`].
    List(Vec<Value>),
    Record(Record),
    Nil,
}

/// Variant tag of a [`Value`], also used for method signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueKind {
    Text,
    Int,
    Bool,
    Date,
    List,
    Record,
    Nil,
}

impl ValueKind {
    pub const ALL: [ValueKind; 7] = [
        ValueKind::Text,
        ValueKind::Int,
        ValueKind::Bool,
        ValueKind::Date,
        ValueKind::List,
        ValueKind::Record,
        ValueKind::Nil,
    ];

    /// Name used in the `type` attribute on the wire.
    pub fn wire_name(self) -> &'static str {
        match self {
            ValueKind::Text => "string",
            ValueKind::Int => "int",
            ValueKind::Bool => "bool",
            ValueKind::Date => "date",
            ValueKind::List => "list",
            ValueKind::Record => "record",
            ValueKind::Nil => "nil",
        }
    }

    pub fn from_wire_name(name: &str) -> Option<ValueKind> {
        ValueKind::ALL.into_iter().find(|k| k.wire_name() == name)
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// A bean-mapped record: a namespaced type name plus named fields.
///
/// Fields are kept sorted by name, which is also their order on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub qname: String,
    pub fields: BTreeMap<String, Value>,
}

/// A field was missing or held the wrong kind when reading a record.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldError {
    #[error("record {qname} has no field {field}")]
    Missing { qname: String, field: String },
    #[error("field {field} of {qname} is {found}, expected {expected}")]
    WrongKind {
        qname: String,
        field: String,
        expected: ValueKind,
        found: ValueKind,
    },
    #[error("expected record {expected}, found {found}")]
    WrongType { expected: String, found: String },
    #[error("expected a record value, found {0}")]
    NotARecord(ValueKind),
    #[error("invalid value in field {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Int(_) => ValueKind::Int,
            Value::Bool(_) => ValueKind::Bool,
            Value::Date(_) => ValueKind::Date,
            Value::List(_) => ValueKind::List,
            Value::Record(_) => ValueKind::Record,
            Value::Nil => ValueKind::Nil,
        }
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_record(&self) -> Option<&Record> {
        match self {
            Value::Record(r) => Some(r),
            _ => None,
        }
    }

    /// Unwraps a record of the given qname.
    pub fn into_record(self, qname: &str) -> Result<Record, FieldError> {
        match self {
            Value::Record(r) if r.qname == qname => Ok(r),
            Value::Record(r) => Err(FieldError::WrongType {
                expected: qname.to_string(),
                found: r.qname,
            }),
            other => Err(FieldError::NotARecord(other.kind())),
        }
    }

    /// Checks list homogeneity recursively.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Value::List(items) => {
                let first = items.first().map(Value::kind);
                items.iter().all(|v| Some(v.kind()) == first && v.is_well_formed())
            }
            Value::Record(r) => r.fields.values().all(Value::is_well_formed),
            _ => true,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<NaiveDate> for Value {
    fn from(d: NaiveDate) -> Self {
        Value::Date(d)
    }
}

impl From<Record> for Value {
    fn from(r: Record) -> Self {
        Value::Record(r)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(Value::Nil)
    }
}

impl Record {
    pub fn new(qname: impl Into<String>) -> Self {
        Record {
            qname: qname.into(),
            fields: BTreeMap::new(),
        }
    }

    /// Builder-style field insert.
    pub fn with(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.fields.insert(name.into(), value.into());
        self
    }

    pub fn get(&self, field: &str) -> Result<&Value, FieldError> {
        self.fields.get(field).ok_or_else(|| FieldError::Missing {
            qname: self.qname.clone(),
            field: field.to_string(),
        })
    }

    fn wrong(&self, field: &str, expected: ValueKind, found: &Value) -> FieldError {
        FieldError::WrongKind {
            qname: self.qname.clone(),
            field: field.to_string(),
            expected,
            found: found.kind(),
        }
    }

    pub fn text(&self, field: &str) -> Result<&str, FieldError> {
        match self.get(field)? {
            Value::Text(s) => Ok(s),
            v => Err(self.wrong(field, ValueKind::Text, v)),
        }
    }

    pub fn int(&self, field: &str) -> Result<i64, FieldError> {
        match self.get(field)? {
            Value::Int(i) => Ok(*i),
            v => Err(self.wrong(field, ValueKind::Int, v)),
        }
    }

    pub fn bool(&self, field: &str) -> Result<bool, FieldError> {
        match self.get(field)? {
            Value::Bool(b) => Ok(*b),
            v => Err(self.wrong(field, ValueKind::Bool, v)),
        }
    }

    pub fn date(&self, field: &str) -> Result<NaiveDate, FieldError> {
        match self.get(field)? {
            Value::Date(d) => Ok(*d),
            v => Err(self.wrong(field, ValueKind::Date, v)),
        }
    }

    /// A date field that may be `Nil`.
    pub fn opt_date(&self, field: &str) -> Result<Option<NaiveDate>, FieldError> {
        match self.get(field)? {
            Value::Date(d) => Ok(Some(*d)),
            Value::Nil => Ok(None),
            v => Err(self.wrong(field, ValueKind::Date, v)),
        }
    }

    /// A text field that may be `Nil`.
    pub fn opt_text(&self, field: &str) -> Result<Option<&str>, FieldError> {
        match self.get(field)? {
            Value::Text(s) => Ok(Some(s)),
            Value::Nil => Ok(None),
            v => Err(self.wrong(field, ValueKind::Text, v)),
        }
    }

    pub fn list(&self, field: &str) -> Result<&[Value], FieldError> {
        match self.get(field)? {
            Value::List(items) => Ok(items),
            v => Err(self.wrong(field, ValueKind::List, v)),
        }
    }

    pub fn record(&self, field: &str) -> Result<&Record, FieldError> {
        match self.get(field)? {
            Value::Record(r) => Ok(r),
            v => Err(self.wrong(field, ValueKind::Record, v)),
        }
    }
}

/// Conversion between a domain type and its bean-mapped record form.
pub trait RecordCodec: Sized {
    /// The qname under which the type travels, e.g. `myNS:StudentRecord`.
    const QNAME: &'static str;

    fn to_record(&self) -> Record;

    fn from_record(record: &Record) -> Result<Self, FieldError>;

    fn to_value(&self) -> Value {
        Value::Record(self.to_record())
    }

    fn from_value(value: &Value) -> Result<Self, FieldError> {
        match value {
            Value::Record(r) if r.qname == Self::QNAME => Self::from_record(r),
            Value::Record(r) => Err(FieldError::WrongType {
                expected: Self::QNAME.to_string(),
                found: r.qname.clone(),
            }),
            other => Err(FieldError::NotARecord(other.kind())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_wire_names() {
        for k in ValueKind::ALL {
            assert_eq!(ValueKind::from_wire_name(k.wire_name()), Some(k));
        }
        assert_eq!(ValueKind::from_wire_name("complex64"), None);
    }

    #[test]
    fn homogeneity_is_checked_recursively() {
        let ok = Value::List(vec![Value::Int(1), Value::Int(2)]);
        assert!(ok.is_well_formed());
        let mixed = Value::List(vec![Value::Int(1), Value::text("x")]);
        assert!(!mixed.is_well_formed());
        let nested = Value::Record(Record::new("a:B").with("xs", mixed));
        assert!(!nested.is_well_formed());
    }

    #[test]
    fn record_accessors_report_kind_mismatch() {
        let r = Record::new("myNS:X").with("n", 3i64).with("s", "t");
        assert_eq!(r.int("n"), Ok(3));
        assert!(matches!(r.text("n"), Err(FieldError::WrongKind { .. })));
        assert!(matches!(r.text("zz"), Err(FieldError::Missing { .. })));
    }
}
