//! Hostel: rooms and allotments, kept as a single JSON document
//! (`hostel.json`) rewritten on every change.

use std::sync::Mutex;

use async_trait::async_trait;
use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{arg_text, unknown_method, AllotmentRecord, DomainError, HostelStudentRecord};
use crate::broker::MethodSignature;
use crate::container::ServiceImplementation;
use crate::envelope::{Fault, RecordCodec, Value, ValueKind};
use crate::store::StoreDir;

pub const HMIS_ID: &str = "HostelDataBaseManager";
pub const HMIS_SERVICE: &str = "HostelDataBaseManagerService";
pub const DOCUMENT_FILE: &str = "hostel.json";

/// The whole hostel store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostelDocument {
    pub rooms: Vec<String>,
    pub allotments: Vec<AllotmentRecord>,
}

impl HostelDocument {
    fn active_for_student(&self, student_id: &str) -> Option<usize> {
        self.allotments
            .iter()
            .position(|a| a.student_id == student_id && a.is_active())
    }

    fn room_taken(&self, room_id: &str) -> bool {
        self.allotments.iter().any(|a| a.room_id == room_id && a.is_active())
    }

    /// Status of any student id; unknown ids are simply clear.
    pub fn status(&self, student_id: &str) -> HostelStudentRecord {
        let active = self.active_for_student(student_id).map(|i| self.allotments[i].clone());
        HostelStudentRecord::new(student_id, active)
    }
}

pub struct Hmis {
    store: StoreDir,
    doc: Mutex<HostelDocument>,
}

impl Hmis {
    pub fn open(store: StoreDir) -> Result<Self, DomainError> {
        let doc = match store.read(DOCUMENT_FILE).map_err(DomainError::store)? {
            Some(bytes) => {
                serde_json::from_slice(&bytes).map_err(|e| DomainError::Store(format!("{DOCUMENT_FILE}: {e}")))?
            }
            None => HostelDocument::default(),
        };
        Ok(Hmis {
            store,
            doc: Mutex::new(doc),
        })
    }

    fn doc(&self) -> std::sync::MutexGuard<'_, HostelDocument> {
        self.doc.lock().expect("HMIS lock poisoned")
    }

    /// Writes `next` and installs it only once it is on disk.
    fn save(&self, current: &mut HostelDocument, next: HostelDocument) -> Result<(), DomainError> {
        let mut bytes = serde_json::to_vec_pretty(&next).map_err(DomainError::store)?;
        bytes.push(b'\n');
        self.store.replace(DOCUMENT_FILE, &bytes).map_err(DomainError::store)?;
        *current = next;
        Ok(())
    }

    pub fn add_room(&self, room_id: &str) -> Result<String, DomainError> {
        if room_id.is_empty() {
            return Err(DomainError::InvalidRecord {
                field: "room_id".into(),
                reason: "must not be empty".into(),
            });
        }
        let mut doc = self.doc();
        if doc.rooms.iter().any(|r| r == room_id) {
            return Err(DomainError::DuplicateId(room_id.to_string()));
        }
        let mut next = doc.clone();
        next.rooms.push(room_id.to_string());
        self.save(&mut doc, next)?;
        Ok(room_id.to_string())
    }

    pub fn allot_room_on(
        &self,
        room_id: &str,
        student_id: &str,
        on: NaiveDate,
    ) -> Result<AllotmentRecord, DomainError> {
        let mut doc = self.doc();
        if !doc.rooms.iter().any(|r| r == room_id) {
            return Err(DomainError::UnknownRoom(room_id.to_string()));
        }
        if doc.active_for_student(student_id).is_some() {
            return Err(DomainError::AlreadyAllotted(student_id.to_string()));
        }
        if doc.room_taken(room_id) {
            return Err(DomainError::RoomOccupied(room_id.to_string()));
        }
        let allotment = AllotmentRecord {
            room_id: room_id.to_string(),
            student_id: student_id.to_string(),
            allotted_at: on,
            vacated_at: None,
        };
        let mut next = doc.clone();
        next.allotments.push(allotment.clone());
        self.save(&mut doc, next)?;
        Ok(allotment)
    }

    pub fn allot_room(&self, room_id: &str, student_id: &str) -> Result<AllotmentRecord, DomainError> {
        self.allot_room_on(room_id, student_id, Utc::now().date_naive())
    }

    pub fn vacate_room_on(&self, student_id: &str, on: NaiveDate) -> Result<AllotmentRecord, DomainError> {
        let mut doc = self.doc();
        let i = doc
            .active_for_student(student_id)
            .ok_or_else(|| DomainError::NoActiveAllotment(student_id.to_string()))?;
        let mut next = doc.clone();
        next.allotments[i].vacated_at = Some(on);
        let closed = next.allotments[i].clone();
        self.save(&mut doc, next)?;
        Ok(closed)
    }

    pub fn vacate_room(&self, student_id: &str) -> Result<AllotmentRecord, DomainError> {
        self.vacate_room_on(student_id, Utc::now().date_naive())
    }

    pub fn hostel_status(&self, student_id: &str) -> HostelStudentRecord {
        self.doc().status(student_id)
    }

    pub fn snapshot(&self) -> HostelDocument {
        self.doc().clone()
    }
}

#[async_trait]
impl ServiceImplementation for Hmis {
    fn id(&self) -> &str {
        HMIS_ID
    }

    fn methods(&self) -> Vec<MethodSignature> {
        use ValueKind::*;
        vec![
            MethodSignature::new("addRoom", &[Text], Text),
            MethodSignature::new("allotRoom", &[Text, Text], Record),
            MethodSignature::new("vacateRoom", &[Text], Record),
            MethodSignature::new("hostelStatus", &[Text], Record),
        ]
    }

    fn record_types(&self) -> Vec<String> {
        vec![HostelStudentRecord::QNAME.to_string()]
    }

    /// Allotments are not a mapped record type, so the allotment-changing
    /// methods answer with the student's updated hostel standing.
    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault> {
        let v = match method {
            "addRoom" => Value::Text(self.add_room(&arg_text(&args, 0)?)?),
            "allotRoom" => {
                let a = self.allot_room(&arg_text(&args, 0)?, &arg_text(&args, 1)?)?;
                self.hostel_status(&a.student_id).to_value()
            }
            "vacateRoom" => {
                let a = self.vacate_room(&arg_text(&args, 0)?)?;
                self.hostel_status(&a.student_id).to_value()
            }
            "hostelStatus" => self.hostel_status(&arg_text(&args, 0)?).to_value(),
            other => return Err(unknown_method(other)),
        };
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hmis(dir: &std::path::Path) -> Hmis {
        Hmis::open(StoreDir::open(dir).unwrap()).unwrap()
    }

    #[test]
    fn allot_vacate_status() {
        let dir = tempfile::tempdir().unwrap();
        let h = hmis(dir.path());
        h.add_room("R-101").unwrap();
        h.add_room("R-102").unwrap();
        assert!(matches!(h.add_room("R-101"), Err(DomainError::DuplicateId(_))));
        assert!(!h.hostel_status("S-2024-0001").dues);
        h.allot_room("R-101", "S-2024-0001").unwrap();
        assert!(h.hostel_status("S-2024-0001").dues);
        assert!(matches!(
            h.allot_room("R-101", "S-2024-0002"),
            Err(DomainError::RoomOccupied(_))
        ));
        assert!(matches!(
            h.allot_room("R-102", "S-2024-0001"),
            Err(DomainError::AlreadyAllotted(_))
        ));
        assert!(matches!(
            h.allot_room("R-999", "S-2024-0002"),
            Err(DomainError::UnknownRoom(_))
        ));
        drop(h);
        let h = hmis(dir.path());
        assert!(h.hostel_status("S-2024-0001").dues);
        let closed = h.vacate_room("S-2024-0001").unwrap();
        assert!(closed.vacated_at.is_some());
        assert!(!h.hostel_status("S-2024-0001").dues);
        assert!(matches!(
            h.vacate_room("S-2024-0001"),
            Err(DomainError::NoActiveAllotment(_))
        ));
        h.allot_room("R-101", "S-2024-0002").unwrap();
        let on_disk: HostelDocument =
            serde_json::from_slice(&std::fs::read(dir.path().join(DOCUMENT_FILE)).unwrap()).unwrap();
        assert_eq!(on_disk, h.snapshot());
    }
}
