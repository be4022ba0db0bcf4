use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::envelope::{FieldError, Record, RecordCodec, Value};

use super::DomainError;

/// Earliest accepted graduation batch year.
pub const FIRST_BATCH_YEAR: i64 = 1947;
/// How far past the current year a batch year may lie.
pub const BATCH_YEAR_LOOKAHEAD: i64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub id: String,
    pub first_name: String,
    pub last_name: String,
    pub address: String,
    pub contact_number: String,
    pub faculty: String,
    pub department: String,
    pub degree_program: String,
    pub graduation_batch_year: i64,
}

/// `S-YYYY-NNNN`.
pub fn is_student_id(id: &str) -> bool {
    let b = id.as_bytes();
    b.len() == 11
        && b[0] == b'S'
        && b[1] == b'-'
        && b[6] == b'-'
        && b[2..6].iter().all(u8::is_ascii_digit)
        && b[7..].iter().all(u8::is_ascii_digit)
}

impl StudentRecord {
    pub fn validate(&self, current_year: i32) -> Result<(), DomainError> {
        let invalid = |field: &str, reason: String| {
            Err(DomainError::InvalidRecord {
                field: field.to_string(),
                reason,
            })
        };
        if !is_student_id(&self.id) {
            return invalid("id", format!("{:?} does not match S-YYYY-NNNN", self.id));
        }
        if self.first_name.trim().is_empty() {
            return invalid("first_name", "must not be empty".into());
        }
        if self.last_name.trim().is_empty() {
            return invalid("last_name", "must not be empty".into());
        }
        let max = i64::from(current_year) + BATCH_YEAR_LOOKAHEAD;
        if !(FIRST_BATCH_YEAR..=max).contains(&self.graduation_batch_year) {
            return invalid(
                "graduation_batch_year",
                format!("{} outside [{FIRST_BATCH_YEAR}, {max}]", self.graduation_batch_year),
            );
        }
        Ok(())
    }
}

impl RecordCodec for StudentRecord {
    const QNAME: &'static str = "myNS:StudentRecord";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("id", self.id.as_str())
            .with("first_name", self.first_name.as_str())
            .with("last_name", self.last_name.as_str())
            .with("address", self.address.as_str())
            .with("contact_number", self.contact_number.as_str())
            .with("faculty", self.faculty.as_str())
            .with("department", self.department.as_str())
            .with("degree_program", self.degree_program.as_str())
            .with("graduation_batch_year", self.graduation_batch_year)
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        Ok(StudentRecord {
            id: r.text("id")?.to_string(),
            first_name: r.text("first_name")?.to_string(),
            last_name: r.text("last_name")?.to_string(),
            address: r.text("address")?.to_string(),
            contact_number: r.text("contact_number")?.to_string(),
            faculty: r.text("faculty")?.to_string(),
            department: r.text("department")?.to_string(),
            degree_program: r.text("degree_program")?.to_string(),
            graduation_batch_year: r.int("graduation_batch_year")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepartmentRecord {
    pub code: String,
    pub title: String,
    pub faculty: String,
}

impl RecordCodec for DepartmentRecord {
    const QNAME: &'static str = "myNS:DepartmentRecord";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("code", self.code.as_str())
            .with("title", self.title.as_str())
            .with("faculty", self.faculty.as_str())
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        Ok(DepartmentRecord {
            code: r.text("code")?.to_string(),
            title: r.text("title")?.to_string(),
            faculty: r.text("faculty")?.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgrammeRecord {
    pub code: String,
    pub title: String,
    pub department: String,
    pub duration_years: i64,
}

impl RecordCodec for ProgrammeRecord {
    const QNAME: &'static str = "myNS:ProgrammeRecord";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("code", self.code.as_str())
            .with("title", self.title.as_str())
            .with("department", self.department.as_str())
            .with("duration_years", self.duration_years)
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        Ok(ProgrammeRecord {
            code: r.text("code")?.to_string(),
            title: r.text("title")?.to_string(),
            department: r.text("department")?.to_string(),
            duration_years: r.int("duration_years")?,
        })
    }
}

/// A (label, value) pair returned by the listing methods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListItem {
    pub label: String,
    pub value: String,
}

impl RecordCodec for ListItem {
    const QNAME: &'static str = "myNS:ListItem";

    fn to_record(&self) -> Record {
        Record::new(Self::QNAME)
            .with("label", self.label.as_str())
            .with("value", self.value.as_str())
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        Ok(ListItem {
            label: r.text("label")?.to_string(),
            value: r.text("value")?.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookRecord {
    pub id: String,
    pub isbn: String,
    pub title: String,
    pub author: String,
    pub publisher: String,
    pub year: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanRecord {
    pub book_id: String,
    pub student_id: String,
    pub issued_at: NaiveDate,
    pub due_at: NaiveDate,
    pub returned_at: Option<NaiveDate>,
}

impl LoanRecord {
    pub fn is_open(&self) -> bool {
        self.returned_at.is_none()
    }
}

/// A student's standing with the library. `defaulter` holds exactly when
/// there is an open loan.
///
/// On the wire the open loans are carried as three parallel lists (book id,
/// issue date, due date) because loans are not a mapped record type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryStudentRecord {
    pub student_id: String,
    pub open_loans: Vec<LoanRecord>,
    pub defaulter: bool,
}

impl LibraryStudentRecord {
    pub fn new(student_id: impl Into<String>, open_loans: Vec<LoanRecord>) -> Self {
        let defaulter = !open_loans.is_empty();
        LibraryStudentRecord {
            student_id: student_id.into(),
            open_loans,
            defaulter,
        }
    }
}

fn date_list(values: &[Value], field: &str) -> Result<Vec<NaiveDate>, FieldError> {
    values
        .iter()
        .map(|v| match v {
            Value::Date(d) => Ok(*d),
            other => Err(FieldError::Invalid {
                field: field.to_string(),
                reason: format!("expected date items, found {}", other.kind()),
            }),
        })
        .collect()
}

fn text_list(values: &[Value], field: &str) -> Result<Vec<String>, FieldError> {
    values
        .iter()
        .map(|v| match v {
            Value::Text(s) => Ok(s.clone()),
            other => Err(FieldError::Invalid {
                field: field.to_string(),
                reason: format!("expected string items, found {}", other.kind()),
            }),
        })
        .collect()
}

impl RecordCodec for LibraryStudentRecord {
    const QNAME: &'static str = "myNS:LibraryStudentRecord";

    fn to_record(&self) -> Record {
        let books = self
            .open_loans
            .iter()
            .map(|l| Value::text(l.book_id.as_str()))
            .collect();
        let issued = self.open_loans.iter().map(|l| Value::Date(l.issued_at)).collect();
        let due = self.open_loans.iter().map(|l| Value::Date(l.due_at)).collect();
        Record::new(Self::QNAME)
            .with("student_id", self.student_id.as_str())
            .with("defaulter", self.defaulter)
            .with("open_loan_books", Value::List(books))
            .with("open_loan_issued_at", Value::List(issued))
            .with("open_loan_due_at", Value::List(due))
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        let student_id = r.text("student_id")?.to_string();
        let books = text_list(r.list("open_loan_books")?, "open_loan_books")?;
        let issued = date_list(r.list("open_loan_issued_at")?, "open_loan_issued_at")?;
        let due = date_list(r.list("open_loan_due_at")?, "open_loan_due_at")?;
        if books.len() != issued.len() || books.len() != due.len() {
            return Err(FieldError::Invalid {
                field: "open_loan_books".into(),
                reason: "loan lists differ in length".into(),
            });
        }
        let defaulter = r.bool("defaulter")?;
        if defaulter == books.is_empty() {
            return Err(FieldError::Invalid {
                field: "defaulter".into(),
                reason: "must be true exactly when loans are open".into(),
            });
        }
        let open_loans = books
            .into_iter()
            .zip(issued.into_iter().zip(due))
            .map(|(book_id, (issued_at, due_at))| LoanRecord {
                book_id,
                student_id: student_id.clone(),
                issued_at,
                due_at,
                returned_at: None,
            })
            .collect();
        Ok(LibraryStudentRecord {
            student_id,
            open_loans,
            defaulter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllotmentRecord {
    pub room_id: String,
    pub student_id: String,
    pub allotted_at: NaiveDate,
    pub vacated_at: Option<NaiveDate>,
}

impl AllotmentRecord {
    pub fn is_active(&self) -> bool {
        self.vacated_at.is_none()
    }
}

/// A student's standing with the hostel. `dues` holds exactly when there is
/// an active allotment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostelStudentRecord {
    pub student_id: String,
    pub active_allotment: Option<AllotmentRecord>,
    pub dues: bool,
}

impl HostelStudentRecord {
    pub fn new(student_id: impl Into<String>, active_allotment: Option<AllotmentRecord>) -> Self {
        let dues = active_allotment.is_some();
        HostelStudentRecord {
            student_id: student_id.into(),
            active_allotment,
            dues,
        }
    }
}

impl RecordCodec for HostelStudentRecord {
    const QNAME: &'static str = "myNS:HostelStudentRecord";

    fn to_record(&self) -> Record {
        let a = self.active_allotment.as_ref();
        Record::new(Self::QNAME)
            .with("student_id", self.student_id.as_str())
            .with("dues", self.dues)
            .with("room_id", a.map(|a| a.room_id.clone()))
            .with("allotted_at", a.map(|a| a.allotted_at))
    }

    fn from_record(r: &Record) -> Result<Self, FieldError> {
        let student_id = r.text("student_id")?.to_string();
        let dues = r.bool("dues")?;
        let room = r.opt_text("room_id")?;
        let since = r.opt_date("allotted_at")?;
        let active_allotment = match (room, since) {
            (Some(room), Some(at)) => Some(AllotmentRecord {
                room_id: room.to_string(),
                student_id: student_id.clone(),
                allotted_at: at,
                vacated_at: None,
            }),
            (None, None) => None,
            _ => {
                return Err(FieldError::Invalid {
                    field: "room_id".into(),
                    reason: "room and allotment date must be both present or both nil".into(),
                })
            }
        };
        if dues != active_allotment.is_some() {
            return Err(FieldError::Invalid {
                field: "dues".into(),
                reason: "must be true exactly when an allotment is active".into(),
            });
        }
        Ok(HostelStudentRecord {
            student_id,
            active_allotment,
            dues,
        })
    }
}

pub(crate) fn current_year() -> i32 {
    chrono::Utc::now().year()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn student() -> StudentRecord {
        StudentRecord {
            id: "S-2024-0001".into(),
            first_name: "Ayesha".into(),
            last_name: "Khan".into(),
            address: "12 Campus Road".into(),
            contact_number: "+92-300-0000000".into(),
            faculty: "Science".into(),
            department: "CS".into(),
            degree_program: "BSCS".into(),
            graduation_batch_year: 2028,
        }
    }

    #[test]
    fn student_record_has_nine_fields() {
        let r = student().to_record();
        assert_eq!(r.fields.len(), 9);
        assert_eq!(StudentRecord::from_record(&r).unwrap(), student());
    }

    #[test]
    fn student_validation() {
        assert!(student().validate(2026).is_ok());
        let mut s = student();
        s.graduation_batch_year = 1800;
        assert!(
            matches!(s.validate(2026), Err(DomainError::InvalidRecord { ref field, .. }) if field == "graduation_batch_year")
        );
        s.graduation_batch_year = 2035;
        assert!(s.validate(2026).is_err());
        s.graduation_batch_year = 2034;
        assert!(s.validate(2026).is_ok());
        s.id = "S-24-1".into();
        assert!(s.validate(2026).is_err());
        let mut s = student();
        s.last_name = " ".into();
        assert!(s.validate(2026).is_err());
    }

    #[test]
    fn student_ids() {
        assert!(is_student_id("S-2024-0001"));
        assert!(!is_student_id("S-2024-001"));
        assert!(!is_student_id("X-2024-0001"));
        assert!(!is_student_id("S-2024-00011"));
    }

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2026, 10, d).unwrap()
    }

    #[test]
    fn library_status_round_trips() {
        let loan = LoanRecord {
            book_id: "B-1".into(),
            student_id: "S-2024-0001".into(),
            issued_at: day(1),
            due_at: day(15),
            returned_at: None,
        };
        let s = LibraryStudentRecord::new("S-2024-0001", vec![loan]);
        assert!(s.defaulter);
        assert_eq!(LibraryStudentRecord::from_record(&s.to_record()).unwrap(), s);
        let clear = LibraryStudentRecord::new("S-2024-0001", vec![]);
        assert_eq!(LibraryStudentRecord::from_record(&clear.to_record()).unwrap(), clear);
    }

    #[test]
    fn inconsistent_flags_rejected() {
        let mut r = LibraryStudentRecord::new("S-2024-0001", vec![]).to_record();
        r.fields.insert("defaulter".into(), Value::Bool(true));
        assert!(LibraryStudentRecord::from_record(&r).is_err());
        let mut r = HostelStudentRecord::new("S-2024-0001", None).to_record();
        r.fields.insert("dues".into(), Value::Bool(true));
        assert!(HostelStudentRecord::from_record(&r).is_err());
    }

    #[test]
    fn hostel_status_round_trips() {
        let a = AllotmentRecord {
            room_id: "R-101".into(),
            student_id: "S-2024-0001".into(),
            allotted_at: day(2),
            vacated_at: None,
        };
        let s = HostelStudentRecord::new("S-2024-0001", Some(a));
        assert!(s.dues);
        assert_eq!(HostelStudentRecord::from_record(&s.to_record()).unwrap(), s);
        let clear = HostelStudentRecord::new("S-2024-0001", None);
        assert_eq!(clear.to_record().fields["room_id"], Value::Nil);
        assert_eq!(HostelStudentRecord::from_record(&clear.to_record()).unwrap(), clear);
    }
}
