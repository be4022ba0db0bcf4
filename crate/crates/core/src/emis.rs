//! Examinations and the No-Dues verification that gates certificates.
//!
//! A verification asks admissions, library and hostel at the same time,
//! each under its own deadline, and is clear only when all three answer
//! clear. Everything EMIS decides is appended to `emis.ledger`, one RON
//! value per line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use chrono::{DateTime, Datelike, NaiveDate, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::broker::MethodSignature;
use crate::container::ServiceImplementation;
use crate::departments::{
    arg_text, require_student, unknown_method, AdmissionsDirectory, DomainError, HostelStudentRecord,
    LibraryStudentRecord, AMIS_SERVICE, HMIS_SERVICE, LMIS_SERVICE,
};
use crate::envelope::{Fault, FieldError, Record, RecordCodec, Value, ValueKind};
use crate::rpc::{CallError, RpcClient};
use crate::store::StoreDir;

pub const EMIS_ID: &str = "ExaminationDataBaseManager";
pub const EMIS_SERVICE: &str = "ExaminationDataBaseManagerService";
pub const LEDGER_FILE: &str = "emis.ledger";
pub const DEFAULT_PROVIDER_TIMEOUT: Duration = Duration::from_millis(2_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Passed,
    Failed,
    Incomplete,
}

impl FromStr for Outcome {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Passed" => Ok(Outcome::Passed),
            "Failed" => Ok(Outcome::Failed),
            "Incomplete" => Ok(Outcome::Incomplete),
            other => Err(DomainError::InvalidRecord {
                field: "outcome".into(),
                reason: format!("{other:?} is not Passed, Failed or Incomplete"),
            }),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamRecord {
    pub student_id: String,
    pub programme: String,
    pub outcome: Outcome,
    pub recorded_at: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provider {
    Admissions,
    Library,
    Hostel,
}

impl Provider {
    pub const ALL: [Provider; 3] = [Provider::Admissions, Provider::Library, Provider::Hostel];

    pub fn service(self) -> &'static str {
        match self {
            Provider::Admissions => AMIS_SERVICE,
            Provider::Library => LMIS_SERVICE,
            Provider::Hostel => HMIS_SERVICE,
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Provider {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Provider::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| format!("unknown provider {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "detail")]
pub enum Verdict {
    Clear,
    Dues(String),
    /// The provider could not say; the reason is never empty.
    Unknown(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Clear => "Clear",
            Verdict::Dues(_) => "Dues",
            Verdict::Unknown(_) => "Unknown",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            Verdict::Clear => "",
            Verdict::Dues(d) | Verdict::Unknown(d) => d,
        }
    }

    pub fn is_clear(&self) -> bool {
        *self == Verdict::Clear
    }

    fn from_parts(name: &str, detail: &str) -> Result<Verdict, String> {
        match name {
            "Clear" => Ok(Verdict::Clear),
            "Dues" => Ok(Verdict::Dues(detail.to_string())),
            "Unknown" if !detail.is_empty() => Ok(Verdict::Unknown(detail.to_string())),
            "Unknown" => Err("Unknown verdict without a reason".into()),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderStatus {
    pub provider: Provider,
    pub verdict: Verdict,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overall {
    Clear,
    Blocked,
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoDuesStatus {
    pub student_id: String,
    pub statuses: Vec<ProviderStatus>,
    pub overall: Overall,
    pub checked_at: DateTime<Utc>,
}

impl NoDuesStatus {
    /// Clear only when every provider answered Clear.
    pub fn aggregate(student_id: &str, statuses: Vec<ProviderStatus>, checked_at: DateTime<Utc>) -> Self {
        let all_clear = Provider::ALL
            .iter()
            .all(|p| statuses.iter().any(|s| s.provider == *p && s.verdict.is_clear()))
            && statuses.iter().all(|s| s.verdict.is_clear());
        NoDuesStatus {
            student_id: student_id.to_string(),
            statuses,
            overall: if all_clear { Overall::Clear } else { Overall::Blocked },
            checked_at,
        }
    }

    pub fn verdict(&self, provider: Provider) -> Option<&Verdict> {
        self.statuses
            .iter()
            .find(|s| s.provider == provider)
            .map(|s| &s.verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub serial: String,
    pub student_id: String,
    pub programme: String,
    pub issued_at: DateTime<Utc>,
    pub verification_snapshot: NoDuesStatus,
}

pub fn certificate_serial(year: i32, n: u64) -> String {
    format!("C-{year:04}-{n:06}")
}

fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn parse_timestamp(field: &str, s: &str) -> Result<DateTime<Utc>, FieldError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| FieldError::Invalid {
            field: field.to_string(),
            reason: e.to_string(),
        })
}

fn invalid(field: &str, reason: impl ToString) -> FieldError {
    FieldError::Invalid {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

impl RecordCodec for ExamRecord {
    const QNAME: &'static str = "myNS:ExamRecord";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("student_id", self.student_id.as_str())
            .with("programme", self.programme.as_str())
            .with("outcome", self.outcome.to_string())
            .with("recorded_at", self.recorded_at)
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        Ok(ExamRecord {
            student_id: r.text("student_id")?.to_string(),
            programme: r.text("programme")?.to_string(),
            outcome: r
                .text("outcome")?
                .parse()
                .map_err(|e: DomainError| invalid("outcome", e))?,
            recorded_at: r.date("recorded_at")?,
        })
    }
}

impl RecordCodec for ProviderStatus {
    const QNAME: &'static str = "myNS:ProviderStatus";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("provider", self.provider.to_string())
            .with("verdict", self.verdict.name())
            .with("detail", self.verdict.detail())
            .with("latency_ms", self.latency_ms as i64)
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        let latency = r.int("latency_ms")?;
        Ok(ProviderStatus {
            provider: r
                .text("provider")?
                .parse()
                .map_err(|e: String| invalid("provider", e))?,
            verdict: Verdict::from_parts(r.text("verdict")?, r.text("detail")?).map_err(|e| invalid("verdict", e))?,
            latency_ms: u64::try_from(latency).map_err(|e| invalid("latency_ms", e))?,
        })
    }
}

impl RecordCodec for NoDuesStatus {
    const QNAME: &'static str = "myNS:NoDuesStatus";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("student_id", self.student_id.as_str())
            .with(
                "statuses",
                Value::List(self.statuses.iter().map(RecordCodec::to_value).collect()),
            )
            .with("overall", self.overall.to_string())
            .with("checked_at", timestamp(&self.checked_at))
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        let statuses = r
            .list("statuses")?
            .iter()
            .map(ProviderStatus::from_value)
            .collect::<Result<Vec<_>, _>>()?;
        let status = NoDuesStatus::aggregate(
            r.text("student_id")?,
            statuses,
            parse_timestamp("checked_at", r.text("checked_at")?)?,
        );
        if status.overall.to_string() != r.text("overall")? {
            return Err(invalid("overall", "does not match the provider verdicts"));
        }
        Ok(status)
    }
}

impl RecordCodec for Certificate {
    const QNAME: &'static str = "myNS:Certificate";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("serial", self.serial.as_str())
            .with("student_id", self.student_id.as_str())
            .with("programme", self.programme.as_str())
            .with("issued_at", timestamp(&self.issued_at))
            .with("verification_snapshot", self.verification_snapshot.to_value())
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        Ok(Certificate {
            serial: r.text("serial")?.to_string(),
            student_id: r.text("student_id")?.to_string(),
            programme: r.text("programme")?.to_string(),
            issued_at: parse_timestamp("issued_at", r.text("issued_at")?)?,
            verification_snapshot: NoDuesStatus::from_record(r.record("verification_snapshot")?)?,
        })
    }
}

/// One line of the EMIS ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerEntry {
    Result(ExamRecord),
    Verification(NoDuesStatus),
    Certificate(Certificate),
}

pub fn parse_ledger(text: &str) -> Result<Vec<LedgerEntry>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| ron::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>, String> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_ledger(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.to_string()),
    }
}

/// Answers one provider's part of a verification.
#[async_trait]
pub trait ProviderGateway: Send + Sync {
    async fn probe(&self, provider: Provider, student_id: &str) -> Verdict;
}

/// Probes providers through the broker and their envelope endpoints.
pub struct RpcGateway {
    rpc: Arc<RpcClient>,
    timeout: Duration,
}

impl RpcGateway {
    pub fn new(rpc: Arc<RpcClient>, timeout: Duration) -> Self {
        RpcGateway { rpc, timeout }
    }
}

fn describe_loans(s: &LibraryStudentRecord) -> String {
    let books: Vec<String> = s
        .open_loans
        .iter()
        .map(|l| format!("{} due {}", l.book_id, l.due_at))
        .collect();
    format!("{} open loan(s): {}", books.len(), books.join(", "))
}

fn describe_allotment(s: &HostelStudentRecord) -> String {
    match &s.active_allotment {
        Some(a) => format!("room {} allotted since {}", a.room_id, a.allotted_at),
        None => "active allotment".into(),
    }
}

#[async_trait]
impl ProviderGateway for RpcGateway {
    async fn probe(&self, provider: Provider, student_id: &str) -> Verdict {
        let method = match provider {
            Provider::Admissions => "getStudent",
            Provider::Library => "libraryStatus",
            Provider::Hostel => "hostelStatus",
        };
        let reply = self
            .rpc
            .call_with_timeout(provider.service(), method, vec![Value::text(student_id)], self.timeout)
            .await;
        let value = match reply {
            Ok(v) => v,
            Err(CallError::Fault(f)) if provider == Provider::Admissions && f.reason == "NotFound" => {
                return Verdict::Unknown("not registered in admissions".into())
            }
            Err(e) => return Verdict::Unknown(e.reason()),
        };
        let protocol = |e: FieldError| Verdict::Unknown(format!("protocol error: {e}"));
        match provider {
            Provider::Admissions => Verdict::Clear,
            Provider::Library => match LibraryStudentRecord::from_value(&value) {
                Ok(s) if s.defaulter => Verdict::Dues(describe_loans(&s)),
                Ok(_) => Verdict::Clear,
                Err(e) => protocol(e),
            },
            Provider::Hostel => match HostelStudentRecord::from_value(&value) {
                Ok(s) if s.dues => Verdict::Dues(describe_allotment(&s)),
                Ok(_) => Verdict::Clear,
                Err(e) => protocol(e),
            },
        }
    }
}

#[derive(Default)]
struct LedgerState {
    results: BTreeMap<(String, String), ExamRecord>,
    certificates: Vec<Certificate>,
}

impl LedgerState {
    fn apply(&mut self, entry: &LedgerEntry) {
        match entry {
            LedgerEntry::Result(r) => {
                self.results
                    .insert((r.student_id.clone(), r.programme.clone()), r.clone());
            }
            LedgerEntry::Verification(_) => {}
            LedgerEntry::Certificate(c) => self.certificates.push(c.clone()),
        }
    }

    fn certificate_for(&self, student_id: &str, programme: &str) -> Option<&Certificate> {
        self.certificates
            .iter()
            .find(|c| c.student_id == student_id && c.programme == programme)
    }
}

pub struct Emis {
    store: StoreDir,
    admissions: Arc<dyn AdmissionsDirectory>,
    gateway: Arc<dyn ProviderGateway>,
    timeout: Duration,
    ledger: Mutex<LedgerState>,
    issuance: tokio::sync::Mutex<()>,
}

impl Emis {
    pub fn open(
        store: StoreDir,
        admissions: Arc<dyn AdmissionsDirectory>,
        gateway: Arc<dyn ProviderGateway>,
    ) -> Result<Self, DomainError> {
        let mut state = LedgerState::default();
        if let Some(bytes) = store.read(LEDGER_FILE).map_err(DomainError::store)? {
            let text = String::from_utf8(bytes).map_err(DomainError::store)?;
            for entry in parse_ledger(&text).map_err(DomainError::Store)? {
                state.apply(&entry);
            }
        }
        Ok(Emis {
            store,
            admissions,
            gateway,
            timeout: DEFAULT_PROVIDER_TIMEOUT,
            ledger: Mutex::new(state),
            issuance: tokio::sync::Mutex::new(()),
        })
    }

    /// Per-provider deadline for verifications.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn append(&self, entry: LedgerEntry) -> Result<(), DomainError> {
        let line = ron::to_string(&entry).map_err(DomainError::store)?;
        let mut ledger = self.ledger.lock().expect("ledger lock poisoned");
        self.store.append_line(LEDGER_FILE, &line).map_err(DomainError::store)?;
        ledger.apply(&entry);
        Ok(())
    }

    pub async fn record_result(
        &self,
        student_id: &str,
        programme: &str,
        outcome: Outcome,
    ) -> Result<ExamRecord, DomainError> {
        require_student(self.admissions.as_ref(), student_id).await?;
        match self.admissions.programme(programme).await {
            Ok(Some(_)) => {}
            Ok(None) => return Err(DomainError::UnknownProgramme(programme.to_string())),
            Err(reason) => return Err(DomainError::AmisUnavailable(reason)),
        }
        let record = ExamRecord {
            student_id: student_id.to_string(),
            programme: programme.to_string(),
            outcome,
            recorded_at: Utc::now().date_naive(),
        };
        self.append(LedgerEntry::Result(record.clone()))?;
        Ok(record)
    }

    pub fn exam_records(&self, student_id: &str) -> Vec<ExamRecord> {
        let ledger = self.ledger.lock().expect("ledger lock poisoned");
        ledger
            .results
            .values()
            .filter(|r| r.student_id == student_id)
            .cloned()
            .collect()
    }

    pub fn is_eligible(&self, student_id: &str, programme: &str) -> bool {
        let ledger = self.ledger.lock().expect("ledger lock poisoned");
        ledger
            .results
            .get(&(student_id.to_string(), programme.to_string()))
            .is_some_and(|r| r.outcome == Outcome::Passed)
    }

    async fn probe(&self, provider: Provider, student_id: &str) -> ProviderStatus {
        let started = Instant::now();
        let verdict = match tokio::time::timeout(self.timeout, self.gateway.probe(provider, student_id)).await {
            Ok(Verdict::Unknown(r)) if r.is_empty() => Verdict::Unknown("no reason given".into()),
            Ok(v) => v,
            Err(_) => Verdict::Unknown("timeout".into()),
        };
        ProviderStatus {
            provider,
            verdict,
            latency_ms: started.elapsed().as_millis() as u64,
        }
    }

    /// Queries the three providers concurrently and records the verdict.
    pub async fn verify_no_dues(&self, student_id: &str) -> Result<NoDuesStatus, DomainError> {
        let (admissions, library, hostel) = tokio::join!(
            self.probe(Provider::Admissions, student_id),
            self.probe(Provider::Library, student_id),
            self.probe(Provider::Hostel, student_id),
        );
        let status = NoDuesStatus::aggregate(
            student_id,
            vec![admissions, library, hostel],
            Utc::now().trunc_subsecs(6),
        );
        self.append(LedgerEntry::Verification(status.clone()))?;
        Ok(status)
    }

    /// Issues the certificate after a fresh verification, or returns the
    /// one already issued for this student and programme.
    pub async fn issue_certificate(&self, student_id: &str, programme: &str) -> Result<Certificate, DomainError> {
        let _one_at_a_time = self.issuance.lock().await;
        {
            let ledger = self.ledger.lock().expect("ledger lock poisoned");
            if let Some(c) = ledger.certificate_for(student_id, programme) {
                return Ok(c.clone());
            }
        }
        if !self.is_eligible(student_id, programme) {
            return Err(DomainError::NotEligible(format!(
                "no Passed result for {student_id} in {programme}"
            )));
        }
        let status = self.verify_no_dues(student_id).await?;
        if status.overall != Overall::Clear {
            return Err(DomainError::DuesOutstanding(Box::new(status)));
        }
        let issued_at = Utc::now().trunc_subsecs(6);
        let n = self.ledger.lock().expect("ledger lock poisoned").certificates.len() as u64 + 1;
        let cert = Certificate {
            serial: certificate_serial(issued_at.year(), n),
            student_id: student_id.to_string(),
            programme: programme.to_string(),
            issued_at,
            verification_snapshot: status,
        };
        self.append(LedgerEntry::Certificate(cert.clone()))?;
        Ok(cert)
    }

    pub fn get_certificate(&self, serial: &str) -> Result<Certificate, DomainError> {
        let ledger = self.ledger.lock().expect("ledger lock poisoned");
        ledger
            .certificates
            .iter()
            .find(|c| c.serial == serial)
            .cloned()
            .ok_or_else(|| DomainError::NotFound(serial.to_string()))
    }
}

#[async_trait]
impl ServiceImplementation for Emis {
    fn id(&self) -> &str {
        EMIS_ID
    }

    fn methods(&self) -> Vec<MethodSignature> {
        use ValueKind::*;
        vec![
            MethodSignature::new("recordResult", &[Text, Text, Text], Record),
            MethodSignature::new("verifyNoDues", &[Text], Record),
            MethodSignature::new("issueCertificate", &[Text, Text], Record),
            MethodSignature::new("getCertificate", &[Text], Record),
            MethodSignature::new("getExamRecords", &[Text], List),
            MethodSignature::new("isEligible", &[Text, Text], Bool),
        ]
    }

    fn record_types(&self) -> Vec<String> {
        [
            ExamRecord::QNAME,
            ProviderStatus::QNAME,
            NoDuesStatus::QNAME,
            Certificate::QNAME,
        ]
        .map(String::from)
        .to_vec()
    }

    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault> {
        let v = match method {
            "recordResult" => {
                let outcome: Outcome = arg_text(&args, 2)?.parse()?;
                self.record_result(&arg_text(&args, 0)?, &arg_text(&args, 1)?, outcome)
                    .await?
                    .to_value()
            }
            "verifyNoDues" => self.verify_no_dues(&arg_text(&args, 0)?).await?.to_value(),
            "issueCertificate" => self
                .issue_certificate(&arg_text(&args, 0)?, &arg_text(&args, 1)?)
                .await?
                .to_value(),
            "getCertificate" => self.get_certificate(&arg_text(&args, 0)?)?.to_value(),
            "getExamRecords" => Value::List(
                self.exam_records(&arg_text(&args, 0)?)
                    .iter()
                    .map(RecordCodec::to_value)
                    .collect(),
            ),
            "isEligible" => Value::Bool(self.is_eligible(&arg_text(&args, 0)?, &arg_text(&args, 1)?)),
            other => return Err(unknown_method(other)),
        };
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::departments::{ProgrammeRecord, StudentRecord};
    use std::collections::HashMap;

    struct Directory;

    #[async_trait]
    impl AdmissionsDirectory for Directory {
        async fn student(&self, id: &str) -> Result<Option<StudentRecord>, String> {
            Ok((id != "S-2024-9999").then(|| StudentRecord {
                id: id.into(),
                first_name: "A".into(),
                last_name: "B".into(),
                address: String::new(),
                contact_number: String::new(),
                faculty: String::new(),
                department: String::new(),
                degree_program: String::new(),
                graduation_batch_year: 2026,
            }))
        }

        async fn programme(&self, code: &str) -> Result<Option<ProgrammeRecord>, String> {
            Ok((code == "BE-SW").then(|| ProgrammeRecord {
                code: code.into(),
                title: "BE Software".into(),
                department: "SW".into(),
                duration_years: 4,
            }))
        }
    }

    /// Fixed verdicts with an optional delay per provider.
    #[derive(Default)]
    struct Fake {
        verdicts: Mutex<HashMap<Provider, Verdict>>,
        delays: HashMap<Provider, Duration>,
    }

    impl Fake {
        fn set(&self, p: Provider, v: Verdict) {
            self.verdicts.lock().unwrap().insert(p, v);
        }
    }

    #[async_trait]
    impl ProviderGateway for Fake {
        async fn probe(&self, provider: Provider, _: &str) -> Verdict {
            if let Some(d) = self.delays.get(&provider) {
                tokio::time::sleep(*d).await;
            }
            self.verdicts
                .lock()
                .unwrap()
                .get(&provider)
                .cloned()
                .unwrap_or(Verdict::Clear)
        }
    }

    fn emis(dir: &Path, fake: Arc<Fake>) -> Emis {
        Emis::open(StoreDir::open(dir).unwrap(), Arc::new(Directory), fake).unwrap()
    }

    #[tokio::test]
    async fn results_are_upserted() {
        let dir = tempfile::tempdir().unwrap();
        let e = emis(dir.path(), Arc::default());
        e.record_result("S-2024-0001", "BE-SW", Outcome::Failed).await.unwrap();
        assert!(!e.is_eligible("S-2024-0001", "BE-SW"));
        e.record_result("S-2024-0001", "BE-SW", Outcome::Passed).await.unwrap();
        assert!(e.is_eligible("S-2024-0001", "BE-SW"));
        assert_eq!(e.exam_records("S-2024-0001").len(), 1);
        assert!(matches!(
            e.record_result("S-2024-9999", "BE-SW", Outcome::Passed).await,
            Err(DomainError::UnknownStudent(_))
        ));
        assert!(matches!(
            e.record_result("S-2024-0001", "XX", Outcome::Passed).await,
            Err(DomainError::UnknownProgramme(_))
        ));
    }

    #[tokio::test]
    async fn dues_block_and_clear_issues() {
        let dir = tempfile::tempdir().unwrap();
        let fake = Arc::new(Fake::default());
        let e = emis(dir.path(), fake.clone());
        assert!(matches!(
            e.issue_certificate("S-2024-0001", "BE-SW").await,
            Err(DomainError::NotEligible(_))
        ));
        e.record_result("S-2024-0001", "BE-SW", Outcome::Passed).await.unwrap();
        fake.set(Provider::Library, Verdict::Dues("1 open loan(s): B-1".into()));
        let status = e.verify_no_dues("S-2024-0001").await.unwrap();
        assert_eq!(status.overall, Overall::Blocked);
        assert_eq!(status.verdict(Provider::Hostel), Some(&Verdict::Clear));
        match e.issue_certificate("S-2024-0001", "BE-SW").await {
            Err(DomainError::DuesOutstanding(s)) => {
                assert!(matches!(s.verdict(Provider::Library), Some(Verdict::Dues(_))))
            }
            other => panic!("{other:?}"),
        }
        fake.set(Provider::Library, Verdict::Clear);
        let first = e.issue_certificate("S-2024-0001", "BE-SW").await.unwrap();
        assert_eq!(first.verification_snapshot.overall, Overall::Clear);
        fake.set(Provider::Hostel, Verdict::Dues("room".into()));
        let again = e.issue_certificate("S-2024-0001", "BE-SW").await.unwrap();
        assert_eq!(again, first);
        assert_eq!(e.get_certificate(&first.serial).unwrap(), first);
        assert!(matches!(
            e.get_certificate("C-1900-000001"),
            Err(DomainError::NotFound(_))
        ));

        let reopened = emis(dir.path(), fake.clone());
        assert_eq!(reopened.issue_certificate("S-2024-0001", "BE-SW").await.unwrap(), first);
        fake.set(Provider::Hostel, Verdict::Clear);
        reopened
            .record_result("S-2024-0002", "BE-SW", Outcome::Passed)
            .await
            .unwrap();
        let second = reopened.issue_certificate("S-2024-0002", "BE-SW").await.unwrap();
        assert!(second.serial > first.serial);
    }

    #[tokio::test]
    async fn timeouts_fail_closed() {
        let dir = tempfile::tempdir().unwrap();
        let mut fake = Fake::default();
        fake.delays.insert(Provider::Hostel, Duration::from_millis(500));
        let e = emis(dir.path(), Arc::new(fake)).with_timeout(Duration::from_millis(50));
        let status = e.verify_no_dues("S-2024-0001").await.unwrap();
        assert_eq!(status.overall, Overall::Blocked);
        assert_eq!(
            status.verdict(Provider::Hostel),
            Some(&Verdict::Unknown("timeout".into()))
        );
        assert_eq!(status.verdict(Provider::Library), Some(&Verdict::Clear));
    }

    #[tokio::test]
    async fn probes_run_concurrently() {
        let dir = tempfile::tempdir().unwrap();
        let mut fake = Fake::default();
        for p in Provider::ALL {
            fake.delays.insert(p, Duration::from_millis(100));
        }
        let e = emis(dir.path(), Arc::new(fake));
        let started = Instant::now();
        e.verify_no_dues("S-2024-0001").await.unwrap();
        assert!(started.elapsed() < Duration::from_millis(200));
    }

    #[tokio::test]
    async fn concurrent_issuance_creates_one_certificate() {
        let dir = tempfile::tempdir().unwrap();
        let e = Arc::new(emis(dir.path(), Arc::default()));
        e.record_result("S-2024-0001", "BE-SW", Outcome::Passed).await.unwrap();
        let tasks: Vec<_> = (0..8)
            .map(|_| {
                let e = e.clone();
                tokio::spawn(async move { e.issue_certificate("S-2024-0001", "BE-SW").await.unwrap() })
            })
            .collect();
        let mut serials = Vec::new();
        for t in tasks {
            serials.push(t.await.unwrap().serial);
        }
        serials.dedup();
        assert_eq!(serials.len(), 1);
        let entries = read_ledger(&dir.path().join(LEDGER_FILE)).unwrap();
        let certs = entries
            .iter()
            .filter(|e| matches!(e, LedgerEntry::Certificate(_)))
            .count();
        assert_eq!(certs, 1);
    }

    #[test]
    fn records_round_trip() {
        let at = Utc::now().trunc_subsecs(6);
        let status = NoDuesStatus::aggregate(
            "S-2024-0001",
            vec![
                ProviderStatus {
                    provider: Provider::Admissions,
                    verdict: Verdict::Clear,
                    latency_ms: 3,
                },
                ProviderStatus {
                    provider: Provider::Library,
                    verdict: Verdict::Dues("B-1".into()),
                    latency_ms: 4,
                },
                ProviderStatus {
                    provider: Provider::Hostel,
                    verdict: Verdict::Unknown("connection error".into()),
                    latency_ms: 0,
                },
            ],
            at,
        );
        assert_eq!(status.overall, Overall::Blocked);
        assert_eq!(NoDuesStatus::from_record(&status.to_record()).unwrap(), status);
        let cert = Certificate {
            serial: certificate_serial(2026, 1),
            student_id: "S-2024-0001".into(),
            programme: "BE-SW".into(),
            issued_at: at,
            verification_snapshot: status.clone(),
        };
        assert_eq!(cert.serial, "C-2026-000001");
        assert_eq!(Certificate::from_record(&cert.to_record()).unwrap(), cert);
        let line = ron::to_string(&LedgerEntry::Certificate(cert.clone())).unwrap();
        assert!(!line.contains('\n'));
        assert_eq!(parse_ledger(&line).unwrap(), vec![LedgerEntry::Certificate(cert)]);
    }

    #[test]
    fn missing_provider_is_not_clear() {
        let s = NoDuesStatus::aggregate("x", vec![], Utc::now());
        assert_eq!(s.overall, Overall::Blocked);
    }
}
