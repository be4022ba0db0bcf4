//! XML message envelope carrying calls, responses, and faults.
//!
//! The wire profile is a fixed, minimal RPC style: one envelope namespace
//! (`urn:i3/envelope`, prefix `i3`), a method-named body child for calls in
//! `urn:i3/service/SERVICE`, no indentation, and a fixed attribute order.
//! Encoding is deterministic so equal inputs always give equal bytes.

mod codec;
mod mapping;
mod value;

use std::fmt;
use std::str::FromStr;

pub use codec::{decode_envelope, decode_value, decode_value_fragment, encode_envelope, encode_value};
pub use mapping::{BeanMapping, MappingError, MappingTable};
pub use value::{FieldError, Record, RecordCodec, Value, ValueKind};

pub const ENVELOPE_NS: &str = "urn:i3/envelope";
pub const SERVICE_NS_PREFIX: &str = "urn:i3/service/";
pub const XML_DECLARATION: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    /// Ordered (name, text) header entries; unknown names are carried through.
    pub header: Vec<(String, String)>,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Call {
        service: String,
        method: String,
        args: Vec<Value>,
    },
    Response {
        result: Value,
    },
    Fault(Fault),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub code: FaultCode,
    pub reason: String,
    pub detail: String,
}

/// The closed set of fault codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultCode {
    NoSuchService,
    NoSuchMethod,
    MethodNotAllowed,
    BadArguments,
    Internal,
    Unavailable,
}

impl FaultCode {
    pub const ALL: [FaultCode; 6] = [
        FaultCode::NoSuchService,
        FaultCode::NoSuchMethod,
        FaultCode::MethodNotAllowed,
        FaultCode::BadArguments,
        FaultCode::Internal,
        FaultCode::Unavailable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultCode::NoSuchService => "Server.NoSuchService",
            FaultCode::NoSuchMethod => "Client.NoSuchMethod",
            FaultCode::MethodNotAllowed => "Client.MethodNotAllowed",
            FaultCode::BadArguments => "Client.BadArguments",
            FaultCode::Internal => "Server.Internal",
            FaultCode::Unavailable => "Server.Unavailable",
        }
    }
}

impl fmt::Display for FaultCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown fault code {s:?}"))
    }
}

impl Fault {
    pub fn new(code: FaultCode, reason: impl Into<String>, detail: impl Into<String>) -> Self {
        Fault {
            code,
            reason: reason.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.reason)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

impl Envelope {
    pub fn call(service: impl Into<String>, method: impl Into<String>, args: Vec<Value>) -> Self {
        Envelope {
            header: Vec::new(),
            body: Body::Call {
                service: service.into(),
                method: method.into(),
                args,
            },
        }
    }

    pub fn response(result: Value) -> Self {
        Envelope {
            header: Vec::new(),
            body: Body::Response { result },
        }
    }

    pub fn fault(code: FaultCode, reason: impl Into<String>, detail: impl Into<String>) -> Self {
        Envelope {
            header: Vec::new(),
            body: Body::Fault(Fault::new(code, reason, detail)),
        }
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.header.push((name.into(), value.into()));
        self
    }

    pub fn is_fault(&self) -> bool {
        matches!(self.body, Body::Fault(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("malformed XML at {line}:{column}: {message}")]
    MalformedXml { line: u32, column: u32, message: String },
    #[error("unknown body shape: {0}")]
    UnknownBodyShape(String),
    #[error("unmapped record type {0}")]
    UnmappedRecordType(String),
    #[error("unknown scalar type {0:?}")]
    UnknownScalarType(String),
    /// Encode side only: the envelope violates a structural invariant
    /// (heterogeneous list, invalid XML name, unrepresentable character).
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
}
