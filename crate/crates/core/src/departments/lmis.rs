//! Library: members, books and loans, kept as an append-only operation log
//! (`lmis.log`, one tab-separated operation per line) replayed at startup.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use chrono::{Days, NaiveDate, Utc};

use super::{
    arg_int, arg_text, require_student, unknown_method, AdmissionsDirectory, BookRecord, DomainError,
    LibraryStudentRecord, LoanRecord,
};
use crate::broker::MethodSignature;
use crate::container::ServiceImplementation;
use crate::envelope::{Fault, RecordCodec, Value, ValueKind};
use crate::store::{escape_field, unescape_field, StoreDir};

pub const LMIS_ID: &str = "LibraryDataBaseManager";
pub const LMIS_SERVICE: &str = "LibraryDataBaseManagerService";
pub const LOAN_PERIOD_DAYS: u64 = 14;
pub const LOG_FILE: &str = "lmis.log";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LibraryOp {
    Member {
        student_id: String,
        enrolled_on: NaiveDate,
    },
    Book(BookRecord),
    Issue {
        book_id: String,
        student_id: String,
        issued_at: NaiveDate,
        due_at: NaiveDate,
    },
    Return {
        book_id: String,
        returned_at: NaiveDate,
    },
}

impl LibraryOp {
    pub fn to_line(&self) -> String {
        let fields: Vec<String> = match self {
            LibraryOp::Member {
                student_id,
                enrolled_on,
            } => vec!["MEMBER".into(), escape_field(student_id), enrolled_on.to_string()],
            LibraryOp::Book(b) => vec![
                "BOOK".into(),
                escape_field(&b.id),
                escape_field(&b.isbn),
                escape_field(&b.title),
                escape_field(&b.author),
                escape_field(&b.publisher),
                b.year.to_string(),
            ],
            LibraryOp::Issue {
                book_id,
                student_id,
                issued_at,
                due_at,
            } => vec![
                "ISSUE".into(),
                escape_field(book_id),
                escape_field(student_id),
                issued_at.to_string(),
                due_at.to_string(),
            ],
            LibraryOp::Return { book_id, returned_at } => {
                vec!["RETURN".into(), escape_field(book_id), returned_at.to_string()]
            }
        };
        fields.join("\t")
    }

    pub fn parse_line(line: &str) -> Result<LibraryOp, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        let text = |i: usize| unescape_field(fields[i]);
        let date = |i: usize| {
            fields[i]
                .parse::<NaiveDate>()
                .map_err(|e| format!("bad date {:?}: {e}", fields[i]))
        };
        let want = |n: usize| {
            if fields.len() == n {
                Ok(())
            } else {
                Err(format!("{} takes {} fields, found {}", fields[0], n, fields.len()))
            }
        };
        match fields[0] {
            "MEMBER" => {
                want(3)?;
                Ok(LibraryOp::Member {
                    student_id: text(1)?,
                    enrolled_on: date(2)?,
                })
            }
            "BOOK" => {
                want(7)?;
                Ok(LibraryOp::Book(BookRecord {
                    id: text(1)?,
                    isbn: text(2)?,
                    title: text(3)?,
                    author: text(4)?,
                    publisher: text(5)?,
                    year: fields[6].parse().map_err(|e| format!("bad year: {e}"))?,
                }))
            }
            "ISSUE" => {
                want(5)?;
                Ok(LibraryOp::Issue {
                    book_id: text(1)?,
                    student_id: text(2)?,
                    issued_at: date(3)?,
                    due_at: date(4)?,
                })
            }
            "RETURN" => {
                want(3)?;
                Ok(LibraryOp::Return {
                    book_id: text(1)?,
                    returned_at: date(2)?,
                })
            }
            other => Err(format!("unknown operation {other:?}")),
        }
    }
}

/// Parses a whole log; blank lines are skipped.
pub fn parse_op_log(text: &str) -> Result<Vec<LibraryOp>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| LibraryOp::parse_line(l).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

/// The library tables, rebuilt by replaying the log.
#[derive(Debug, Clone, Default)]
pub struct LibraryState {
    pub members: BTreeMap<String, NaiveDate>,
    pub books: BTreeMap<String, BookRecord>,
    pub loans: Vec<LoanRecord>,
}

impl LibraryState {
    pub fn replay(ops: &[LibraryOp]) -> Result<Self, DomainError> {
        let mut s = LibraryState::default();
        for op in ops {
            s.apply(op)?;
        }
        Ok(s)
    }

    fn open_loan(&self, book_id: &str) -> Option<usize> {
        self.loans.iter().position(|l| l.book_id == book_id && l.is_open())
    }

    /// Checks that `op` is a legal transition from the current state.
    pub fn check(&self, op: &LibraryOp) -> Result<(), DomainError> {
        match op {
            LibraryOp::Member { .. } => Ok(()),
            LibraryOp::Book(b) => {
                if self.books.contains_key(&b.id) {
                    Err(DomainError::DuplicateId(b.id.clone()))
                } else {
                    Ok(())
                }
            }
            LibraryOp::Issue {
                book_id, student_id, ..
            } => {
                if !self.books.contains_key(book_id) {
                    Err(DomainError::UnknownBook(book_id.clone()))
                } else if !self.members.contains_key(student_id) {
                    Err(DomainError::UnknownMember(student_id.clone()))
                } else if self.open_loan(book_id).is_some() {
                    Err(DomainError::BookAlreadyOut(book_id.clone()))
                } else {
                    Ok(())
                }
            }
            LibraryOp::Return { book_id, .. } => {
                if !self.books.contains_key(book_id) {
                    Err(DomainError::UnknownBook(book_id.clone()))
                } else if self.open_loan(book_id).is_none() {
                    Err(DomainError::NoOpenLoan(book_id.clone()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn apply(&mut self, op: &LibraryOp) -> Result<(), DomainError> {
        self.check(op)?;
        match op {
            LibraryOp::Member {
                student_id,
                enrolled_on,
            } => {
                self.members.entry(student_id.clone()).or_insert(*enrolled_on);
            }
            LibraryOp::Book(b) => {
                self.books.insert(b.id.clone(), b.clone());
            }
            LibraryOp::Issue {
                book_id,
                student_id,
                issued_at,
                due_at,
            } => self.loans.push(LoanRecord {
                book_id: book_id.clone(),
                student_id: student_id.clone(),
                issued_at: *issued_at,
                due_at: *due_at,
                returned_at: None,
            }),
            LibraryOp::Return { book_id, returned_at } => {
                let i = self.open_loan(book_id).expect("checked above");
                self.loans[i].returned_at = Some(*returned_at);
            }
        }
        Ok(())
    }

    /// Status of any student id; unknown ids are simply clear.
    pub fn status(&self, student_id: &str) -> LibraryStudentRecord {
        let open = self
            .loans
            .iter()
            .filter(|l| l.student_id == student_id && l.is_open())
            .cloned()
            .collect();
        LibraryStudentRecord::new(student_id, open)
    }
}

pub struct Lmis {
    store: StoreDir,
    admissions: Arc<dyn AdmissionsDirectory>,
    state: Mutex<LibraryState>,
}

impl Lmis {
    pub fn open(store: StoreDir, admissions: Arc<dyn AdmissionsDirectory>) -> Result<Self, DomainError> {
        let ops = match store.read(LOG_FILE).map_err(DomainError::store)? {
            Some(bytes) => {
                let text = String::from_utf8(bytes).map_err(DomainError::store)?;
                parse_op_log(&text).map_err(DomainError::Store)?
            }
            None => Vec::new(),
        };
        let state = LibraryState::replay(&ops).map_err(|e| DomainError::Store(format!("replay: {e}")))?;
        Ok(Lmis {
            store,
            admissions,
            state: Mutex::new(state),
        })
    }

    fn commit(&self, state: &mut LibraryState, op: LibraryOp) -> Result<(), DomainError> {
        state.check(&op)?;
        self.store
            .append_line(LOG_FILE, &op.to_line())
            .map_err(DomainError::store)?;
        state.apply(&op)
    }

    fn state(&self) -> std::sync::MutexGuard<'_, LibraryState> {
        self.state.lock().expect("LMIS lock poisoned")
    }

    /// Validates the id against admissions, then records the membership.
    /// Enrolling an existing member is a no-op.
    pub async fn enroll_member(&self, student_id: &str) -> Result<(), DomainError> {
        require_student(self.admissions.as_ref(), student_id).await?;
        let mut state = self.state();
        if state.members.contains_key(student_id) {
            return Ok(());
        }
        self.commit(
            &mut state,
            LibraryOp::Member {
                student_id: student_id.to_string(),
                enrolled_on: Utc::now().date_naive(),
            },
        )
    }

    pub fn add_book(&self, book: BookRecord) -> Result<String, DomainError> {
        if book.id.is_empty() {
            return Err(DomainError::InvalidRecord {
                field: "id".into(),
                reason: "must not be empty".into(),
            });
        }
        let id = book.id.clone();
        self.commit(&mut self.state(), LibraryOp::Book(book))?;
        Ok(id)
    }

    pub fn issue_book_on(&self, book_id: &str, student_id: &str, on: NaiveDate) -> Result<LoanRecord, DomainError> {
        let mut state = self.state();
        let due_at = on + Days::new(LOAN_PERIOD_DAYS);
        self.commit(
            &mut state,
            LibraryOp::Issue {
                book_id: book_id.to_string(),
                student_id: student_id.to_string(),
                issued_at: on,
                due_at,
            },
        )?;
        Ok(state.loans.last().expect("just pushed").clone())
    }

    pub fn issue_book(&self, book_id: &str, student_id: &str) -> Result<LoanRecord, DomainError> {
        self.issue_book_on(book_id, student_id, Utc::now().date_naive())
    }

    pub fn return_book_on(&self, book_id: &str, on: NaiveDate) -> Result<LoanRecord, DomainError> {
        let mut state = self.state();
        let i = state.open_loan(book_id);
        self.commit(
            &mut state,
            LibraryOp::Return {
                book_id: book_id.to_string(),
                returned_at: on,
            },
        )?;
        Ok(state.loans[i.expect("commit checked the open loan")].clone())
    }

    pub fn return_book(&self, book_id: &str) -> Result<LoanRecord, DomainError> {
        self.return_book_on(book_id, Utc::now().date_naive())
    }

    pub fn library_status(&self, student_id: &str) -> LibraryStudentRecord {
        self.state().status(student_id)
    }

    pub fn snapshot(&self) -> LibraryState {
        self.state().clone()
    }
}

#[async_trait]
impl ServiceImplementation for Lmis {
    fn id(&self) -> &str {
        LMIS_ID
    }

    fn methods(&self) -> Vec<MethodSignature> {
        use ValueKind::*;
        vec![
            MethodSignature::new("enrollMember", &[Text], Bool),
            MethodSignature::new("addBook", &[Text, Text, Text, Text, Text, Int], Text),
            MethodSignature::new("issueBook", &[Text, Text], Record),
            MethodSignature::new("returnBook", &[Text], Record),
            MethodSignature::new("libraryStatus", &[Text], Record),
        ]
    }

    fn record_types(&self) -> Vec<String> {
        vec![LibraryStudentRecord::QNAME.to_string()]
    }

    /// Loans are not a mapped record type, so the loan-changing methods
    /// answer with the student's updated library standing.
    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault> {
        let v = match method {
            "enrollMember" => {
                self.enroll_member(&arg_text(&args, 0)?).await?;
                Value::Bool(true)
            }
            "addBook" => Value::Text(self.add_book(BookRecord {
                id: arg_text(&args, 0)?,
                isbn: arg_text(&args, 1)?,
                title: arg_text(&args, 2)?,
                author: arg_text(&args, 3)?,
                publisher: arg_text(&args, 4)?,
                year: arg_int(&args, 5)?,
            })?),
            "issueBook" => {
                let loan = self.issue_book(&arg_text(&args, 0)?, &arg_text(&args, 1)?)?;
                self.library_status(&loan.student_id).to_value()
            }
            "returnBook" => {
                let loan = self.return_book(&arg_text(&args, 0)?)?;
                self.library_status(&loan.student_id).to_value()
            }
            "libraryStatus" => self.library_status(&arg_text(&args, 0)?).to_value(),
            other => return Err(unknown_method(other)),
        };
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::departments::{ProgrammeRecord, StudentRecord};

    struct Directory(Option<Vec<&'static str>>);

    #[async_trait]
    impl AdmissionsDirectory for Directory {
        async fn student(&self, id: &str) -> Result<Option<StudentRecord>, String> {
            let known = self.0.as_ref().ok_or("connection error")?;
            Ok(known.contains(&id).then(|| StudentRecord {
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

        async fn programme(&self, _: &str) -> Result<Option<ProgrammeRecord>, String> {
            Ok(None)
        }
    }

    fn book(id: &str) -> BookRecord {
        BookRecord {
            id: id.into(),
            isbn: "978-0-00".into(),
            title: "Distributed\tSystems".into(),
            author: "A. Author".into(),
            publisher: "Press".into(),
            year: 2001,
        }
    }

    fn lmis(dir: &std::path::Path, known: Option<Vec<&'static str>>) -> Lmis {
        Lmis::open(StoreDir::open(dir).unwrap(), Arc::new(Directory(known))).unwrap()
    }

    #[tokio::test]
    async fn enroll_checks_admissions() {
        let dir = tempfile::tempdir().unwrap();
        let l = lmis(dir.path(), Some(vec!["S-2024-0001"]));
        l.enroll_member("S-2024-0001").await.unwrap();
        assert!(matches!(
            l.enroll_member("S-2024-0009").await,
            Err(DomainError::UnknownStudent(_))
        ));
        let down = lmis(tempfile::tempdir().unwrap().path(), None);
        assert!(matches!(
            down.enroll_member("S-2024-0001").await,
            Err(DomainError::AmisUnavailable(_))
        ));
        assert!(down.snapshot().members.is_empty());
    }

    #[tokio::test]
    async fn loan_lifecycle_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let l = lmis(dir.path(), Some(vec!["S-2024-0001"]));
        l.enroll_member("S-2024-0001").await.unwrap();
        l.add_book(book("B-1")).unwrap();
        assert!(matches!(l.add_book(book("B-1")), Err(DomainError::DuplicateId(_))));
        assert!(!l.library_status("S-2024-0001").defaulter);
        let d = NaiveDate::from_ymd_opt(2026, 10, 1).unwrap();
        let loan = l.issue_book_on("B-1", "S-2024-0001", d).unwrap();
        assert_eq!(loan.due_at, NaiveDate::from_ymd_opt(2026, 10, 15).unwrap());
        assert!(matches!(
            l.issue_book("B-1", "S-2024-0001"),
            Err(DomainError::BookAlreadyOut(_))
        ));
        let status = l.library_status("S-2024-0001");
        assert!(status.defaulter);
        assert_eq!(status.open_loans, vec![loan]);
        drop(l);
        let l = lmis(dir.path(), Some(vec![]));
        assert!(l.library_status("S-2024-0001").defaulter);
        let closed = l.return_book("B-1").unwrap();
        assert!(closed.returned_at.is_some());
        assert!(!l.library_status("S-2024-0001").defaulter);
        assert!(matches!(l.return_book("B-1"), Err(DomainError::NoOpenLoan(_))));
        assert!(matches!(l.return_book("B-9"), Err(DomainError::UnknownBook(_))));
        assert!(matches!(
            l.issue_book("B-1", "S-2024-0002"),
            Err(DomainError::UnknownMember(_))
        ));
        assert_eq!(l.snapshot().books["B-1"].title, "Distributed\tSystems");
    }

    #[test]
    fn unknown_student_is_clear() {
        let dir = tempfile::tempdir().unwrap();
        let l = lmis(dir.path(), Some(vec![]));
        let s = l.library_status("S-1999-0001");
        assert!(!s.defaulter && s.open_loans.is_empty());
    }

    #[test]
    fn op_lines_round_trip() {
        let d = NaiveDate::from_ymd_opt(2026, 1, 2).unwrap();
        let ops = vec![
            LibraryOp::Member {
                student_id: "S-2024-0001".into(),
                enrolled_on: d,
            },
            LibraryOp::Book(book("B\\1")),
            LibraryOp::Issue {
                book_id: "B\\1".into(),
                student_id: "S-2024-0001".into(),
                issued_at: d,
                due_at: d,
            },
            LibraryOp::Return {
                book_id: "B\\1".into(),
                returned_at: d,
            },
        ];
        let text: String = ops.iter().map(|o| o.to_line() + "\n").collect();
        assert_eq!(parse_op_log(&text).unwrap(), ops);
        assert!(parse_op_log("LEND\tx").is_err());
        assert!(parse_op_log("RETURN\tx").is_err());
    }
}
