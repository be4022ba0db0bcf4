//! Proptest strategies shared by the unit, integration, and acceptance suites.

use chrono::NaiveDate;
use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

use crate::envelope::{BeanMapping, Body, Envelope, Fault, FaultCode, MappingTable, Record, Value};

/// Record qnames used by generated values, all bound in [`generator_mappings`].
pub const GENERATED_QNAMES: [&str; 4] = ["myNS:StudentRecord", "myNS:ListItem", "other:Thing", "m:Shadow"];

/// Mapping table covering [`GENERATED_QNAMES`]. `m:` deliberately reuses the
/// prefix the call element binds.
pub fn generator_mappings() -> MappingTable {
    MappingTable::new([
        BeanMapping::new("myNS:StudentRecord", "urn:BeanService", "java:StudentRecord"),
        BeanMapping::new("myNS:ListItem", "urn:BeanService", "java:ListItem"),
        BeanMapping::new("other:Thing", "urn:other", "x:Thing"),
        BeanMapping::new("m:Shadow", "urn:shadow", "x:Shadow"),
    ])
    .expect("static mappings are unique")
}

/// Text drawn from XML-representable characters, with markup and whitespace
/// characters over-represented.
pub fn arb_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9 ]{0,12}",
        "[&<>\"' \t\r\n\\]\\[]{0,8}",
        "\\PC{0,8}".prop_filter("xml chars", |s| crate::xml::first_invalid_char(s).is_none()),
    ]
}

fn arb_name() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_.-]{0,8}"
}

fn arb_date() -> impl Strategy<Value = NaiveDate> {
    (1i32..=9999, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap())
}

pub fn arb_scalar() -> impl Strategy<Value = Value> {
    prop_oneof![
        arb_text().prop_map(Value::Text),
        any::<i64>().prop_map(Value::Int),
        any::<bool>().prop_map(Value::Bool),
        arb_date().prop_map(Value::Date),
        Just(Value::Nil),
    ]
}

/// Well-formed values: homogeneous lists, records with mapped qnames.
pub fn arb_value() -> impl Strategy<Value = Value> {
    arb_scalar().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            vec(inner.clone(), 0..4).prop_map(|items| {
                let kind = items.first().map(Value::kind);
                Value::List(items.into_iter().filter(|v| Some(v.kind()) == kind).collect())
            }),
            (
                proptest::sample::select(GENERATED_QNAMES.to_vec()),
                btree_map(arb_name(), inner, 0..4)
            )
                .prop_map(|(qname, fields)| Value::Record(Record {
                    qname: qname.to_string(),
                    fields,
                })),
        ]
    })
}

pub fn arb_fault_code() -> impl Strategy<Value = FaultCode> {
    proptest::sample::select(FaultCode::ALL.to_vec())
}

pub fn arb_body() -> impl Strategy<Value = Body> {
    prop_oneof![
        (
            arb_text().prop_filter("nonempty", |s| !s.is_empty()),
            arb_name(),
            vec(arb_value(), 0..4)
        )
            .prop_map(|(service, method, args)| Body::Call { service, method, args }),
        arb_value().prop_map(|result| Body::Response { result }),
        (arb_fault_code(), arb_text(), arb_text()).prop_map(|(code, reason, detail)| Body::Fault(Fault {
            code,
            reason,
            detail
        })),
    ]
}

pub fn arb_envelope() -> impl Strategy<Value = Envelope> {
    (vec((arb_text(), arb_text()), 0..3), arb_body()).prop_map(|(header, body)| Envelope { header, body })
}
