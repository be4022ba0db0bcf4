//! Campus rosters: one instance per campus, each with its own
//! `roster.txt` of `student_id|campus|registered_on` lines.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use chrono::{NaiveDate, Utc};

use super::{arg_text, require_student, unknown_method, AdmissionsDirectory, DomainError};
use crate::broker::MethodSignature;
use crate::container::ServiceImplementation;
use crate::envelope::{Fault, Value, ValueKind};
use crate::store::StoreDir;

pub const CAMPUS_ID: &str = "CampusDataBaseManager";
pub const ROSTER_FILE: &str = "roster.txt";

/// Service name for a campus code, e.g. `CampusJAMDataBaseManagerService`.
pub fn campus_service_name(code: &str) -> String {
    format!("Campus{code}DataBaseManagerService")
}

pub struct Campus {
    code: String,
    store: StoreDir,
    admissions: Arc<dyn AdmissionsDirectory>,
    roster: Mutex<BTreeMap<String, NaiveDate>>,
}

fn parse_roster(text: &str, code: &str) -> Result<BTreeMap<String, NaiveDate>, DomainError> {
    let mut roster = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = |why: String| DomainError::Store(format!("{ROSTER_FILE} line {}: {why}", n + 1));
        let parts: Vec<&str> = line.split('|').collect();
        let [id, campus, date] = parts[..] else {
            return Err(bad(format!("expected 3 fields, found {}", parts.len())));
        };
        if campus != code {
            return Err(bad(format!("row for campus {campus:?} in the {code} roster")));
        }
        let date = date.parse().map_err(|e| bad(format!("bad date: {e}")))?;
        roster.insert(id.to_string(), date);
    }
    Ok(roster)
}

impl Campus {
    pub fn open(code: &str, store: StoreDir, admissions: Arc<dyn AdmissionsDirectory>) -> Result<Self, DomainError> {
        if code.is_empty() || !code.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(DomainError::InvalidRecord {
                field: "campus".into(),
                reason: format!("{code:?} is not an alphanumeric code"),
            });
        }
        let roster = match store.read(ROSTER_FILE).map_err(DomainError::store)? {
            Some(bytes) => parse_roster(&String::from_utf8(bytes).map_err(DomainError::store)?, code)?,
            None => BTreeMap::new(),
        };
        Ok(Campus {
            code: code.to_string(),
            store,
            admissions,
            roster: Mutex::new(roster),
        })
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    /// Registers a student known to admissions; repeating it is a no-op.
    pub async fn register_campus_student(&self, student_id: &str, campus: &str) -> Result<(), DomainError> {
        if campus != self.code {
            return Err(DomainError::InvalidRecord {
                field: "campus".into(),
                reason: format!("this service holds the {} roster, not {campus}", self.code),
            });
        }
        require_student(self.admissions.as_ref(), student_id).await?;
        let mut roster = self.roster.lock().expect("roster lock poisoned");
        if roster.contains_key(student_id) {
            return Ok(());
        }
        if student_id.contains(['|', '\n', '\r']) {
            return Err(DomainError::InvalidRecord {
                field: "student_id".into(),
                reason: "contains a reserved character".into(),
            });
        }
        let today = Utc::now().date_naive();
        self.store
            .append_line(ROSTER_FILE, &format!("{student_id}|{}|{today}", self.code))
            .map_err(DomainError::store)?;
        roster.insert(student_id.to_string(), today);
        Ok(())
    }

    pub fn roster(&self) -> Vec<String> {
        self.roster
            .lock()
            .expect("roster lock poisoned")
            .keys()
            .cloned()
            .collect()
    }
}

#[async_trait]
impl ServiceImplementation for Campus {
    fn id(&self) -> &str {
        CAMPUS_ID
    }

    fn methods(&self) -> Vec<MethodSignature> {
        use ValueKind::*;
        vec![
            MethodSignature::new("registerCampusStudent", &[Text, Text], Bool),
            MethodSignature::new("listRoster", &[], List),
        ]
    }

    fn record_types(&self) -> Vec<String> {
        Vec::new()
    }

    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault> {
        match method {
            "registerCampusStudent" => {
                self.register_campus_student(&arg_text(&args, 0)?, &arg_text(&args, 1)?)
                    .await?;
                Ok(Value::Bool(true))
            }
            "listRoster" => Ok(Value::List(self.roster().into_iter().map(Value::Text).collect())),
            other => Err(unknown_method(other)),
        }
    }
}
