//! Department services: admissions (AMIS), library (LMIS), hostel (HMIS)
//! and per-campus rosters. Each keeps its own store in its own format and
//! reaches the others only through envelope calls.

mod amis;
mod campus;
mod hmis;
mod lmis;
mod records;

use std::sync::Arc;

use async_trait::async_trait;

pub use amis::{Amis, AMIS_ID, AMIS_SERVICE};
pub use campus::{campus_service_name, Campus, CAMPUS_ID};
pub use hmis::{Hmis, HostelDocument, HMIS_ID, HMIS_SERVICE};
pub use lmis::{parse_op_log, LibraryOp, LibraryState, Lmis, LMIS_ID, LMIS_SERVICE};
pub use records::{
    is_student_id, AllotmentRecord, BookRecord, DepartmentRecord, HostelStudentRecord, LibraryStudentRecord, ListItem,
    LoanRecord, ProgrammeRecord, StudentRecord, BATCH_YEAR_LOOKAHEAD, FIRST_BATCH_YEAR,
};

use crate::emis::NoDuesStatus;
use crate::envelope::{Fault, FaultCode, RecordCodec, Value};
use crate::rpc::{CallError, RpcClient};

/// Errors raised by department and examination operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("invalid {field}: {reason}")]
    InvalidRecord { field: String, reason: String },
    #[error("unknown student: {0}")]
    UnknownStudent(String),
    #[error("admissions unavailable: {0}")]
    AmisUnavailable(String),
    #[error("unknown book: {0}")]
    UnknownBook(String),
    #[error("unknown member: {0}")]
    UnknownMember(String),
    #[error("book already out: {0}")]
    BookAlreadyOut(String),
    #[error("no open loan for book {0}")]
    NoOpenLoan(String),
    #[error("unknown room: {0}")]
    UnknownRoom(String),
    #[error("room occupied: {0}")]
    RoomOccupied(String),
    #[error("student already holds a room: {0}")]
    AlreadyAllotted(String),
    #[error("no active allotment for {0}")]
    NoActiveAllotment(String),
    #[error("unknown department: {0}")]
    UnknownDepartment(String),
    #[error("unknown programme: {0}")]
    UnknownProgramme(String),
    #[error("not eligible: {0}")]
    NotEligible(String),
    #[error("dues outstanding for {}", .0.student_id)]
    DuesOutstanding(Box<NoDuesStatus>),
    #[error("store failure: {0}")]
    Store(String),
}

impl DomainError {
    pub fn kind(&self) -> &'static str {
        match self {
            DomainError::NotFound(_) => "NotFound",
            DomainError::DuplicateId(_) => "DuplicateId",
            DomainError::InvalidRecord { .. } => "InvalidRecord",
            DomainError::UnknownStudent(_) => "UnknownStudent",
            DomainError::AmisUnavailable(_) => "AmisUnavailable",
            DomainError::UnknownBook(_) => "UnknownBook",
            DomainError::UnknownMember(_) => "UnknownMember",
            DomainError::BookAlreadyOut(_) => "BookAlreadyOut",
            DomainError::NoOpenLoan(_) => "NoOpenLoan",
            DomainError::UnknownRoom(_) => "UnknownRoom",
            DomainError::RoomOccupied(_) => "RoomOccupied",
            DomainError::AlreadyAllotted(_) => "AlreadyAllotted",
            DomainError::NoActiveAllotment(_) => "NoActiveAllotment",
            DomainError::UnknownDepartment(_) => "UnknownDepartment",
            DomainError::UnknownProgramme(_) => "UnknownProgramme",
            DomainError::NotEligible(_) => "NotEligible",
            DomainError::DuesOutstanding(_) => "DuesOutstanding",
            DomainError::Store(_) => "StoreFailure",
        }
    }

    pub fn store(e: impl std::fmt::Display) -> Self {
        DomainError::Store(e.to_string())
    }
}

/// Domain errors travel as faults whose reason is the error kind. The
/// detail is the message, or the JSON verification verdict for
/// `DuesOutstanding`.
impl From<DomainError> for Fault {
    fn from(e: DomainError) -> Fault {
        let code = match &e {
            DomainError::Store(_) => FaultCode::Internal,
            DomainError::AmisUnavailable(_) => FaultCode::Unavailable,
            _ => FaultCode::BadArguments,
        };
        let detail = match &e {
            DomainError::DuesOutstanding(status) => serde_json::to_string(status).expect("statuses serialize"),
            other => other.to_string(),
        };
        Fault::new(code, e.kind(), detail)
    }
}

/// Read access to admissions data, used by services that validate ids.
#[async_trait]
pub trait AdmissionsDirectory: Send + Sync {
    /// `Ok(None)` when AMIS answered that the student does not exist;
    /// `Err` when AMIS could not be asked.
    async fn student(&self, id: &str) -> Result<Option<StudentRecord>, String>;

    async fn programme(&self, code: &str) -> Result<Option<ProgrammeRecord>, String>;
}

pub(crate) async fn require_student(dir: &dyn AdmissionsDirectory, id: &str) -> Result<StudentRecord, DomainError> {
    match dir.student(id).await {
        Ok(Some(s)) => Ok(s),
        Ok(None) => Err(DomainError::UnknownStudent(id.to_string())),
        Err(reason) => Err(DomainError::AmisUnavailable(reason)),
    }
}

/// Admissions lookups through the broker and AMIS's envelope endpoint.
pub struct RemoteAdmissions {
    rpc: Arc<RpcClient>,
}

impl RemoteAdmissions {
    pub fn new(rpc: Arc<RpcClient>) -> Self {
        RemoteAdmissions { rpc }
    }

    async fn lookup<T: RecordCodec>(&self, method: &str, key: &str) -> Result<Option<T>, String> {
        match self.rpc.call(AMIS_SERVICE, method, vec![Value::text(key)]).await {
            Ok(v) => T::from_value(&v).map(Some).map_err(|e| e.to_string()),
            Err(CallError::Fault(f)) if f.reason == "NotFound" => Ok(None),
            Err(e) => Err(e.reason()),
        }
    }
}

#[async_trait]
impl AdmissionsDirectory for RemoteAdmissions {
    async fn student(&self, id: &str) -> Result<Option<StudentRecord>, String> {
        self.lookup("getStudent", id).await
    }

    async fn programme(&self, code: &str) -> Result<Option<ProgrammeRecord>, String> {
        self.lookup("getProgramme", code).await
    }
}

fn bad_arg(i: usize, reason: impl Into<String>) -> Fault {
    Fault::new(
        FaultCode::BadArguments,
        "InvalidArgument",
        format!("argument {}: {}", i + 1, reason.into()),
    )
}

pub(crate) fn arg_text(args: &[Value], i: usize) -> Result<String, Fault> {
    match args.get(i) {
        Some(Value::Text(s)) => Ok(s.clone()),
        other => Err(bad_arg(i, format!("expected string, got {:?}", other.map(Value::kind)))),
    }
}

pub(crate) fn arg_int(args: &[Value], i: usize) -> Result<i64, Fault> {
    match args.get(i) {
        Some(Value::Int(n)) => Ok(*n),
        other => Err(bad_arg(i, format!("expected int, got {:?}", other.map(Value::kind)))),
    }
}

pub(crate) fn arg_record<T: RecordCodec>(args: &[Value], i: usize) -> Result<T, Fault> {
    let v = args.get(i).ok_or_else(|| bad_arg(i, "missing"))?;
    T::from_value(v).map_err(|e| bad_arg(i, e.to_string()))
}

pub(crate) fn list_of<T: RecordCodec>(items: &[T]) -> Value {
    Value::List(items.iter().map(RecordCodec::to_value).collect())
}

pub(crate) fn unknown_method(method: &str) -> Fault {
    Fault::new(FaultCode::NoSuchMethod, "NoSuchMethod", method)
}
