//! Loads a fixture directory into running services through their methods.
//!
//! Files, all CSV with a header row: `departments.csv`, `programmes.csv`,
//! `students.csv` (admissions); `books.csv`, `loans.csv` (library; every
//! student is enrolled); `rooms.csv`, `allotments.csv` (hostel);
//! `results.csv` (examinations). Rows that already exist are skipped, so
//! seeding twice is harmless.

use std::path::Path;

use i3_core::departments::{
    BookRecord, DepartmentRecord, ProgrammeRecord, StudentRecord, AMIS_SERVICE, HMIS_SERVICE, LMIS_SERVICE,
};
use i3_core::emis::EMIS_SERVICE;
use i3_core::envelope::{RecordCodec, Value};
use i3_core::rpc::{CallError, RpcClient};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{OutputFormat, SeedTarget};
use crate::exec::{exit_code, Io, EXIT_DOMAIN, EXIT_OK};

#[derive(Deserialize)]
struct Loan {
    book_id: String,
    student_id: String,
}

#[derive(Deserialize)]
struct Room {
    room_id: String,
}

#[derive(Deserialize)]
struct Allotment {
    room_id: String,
    student_id: String,
}

#[derive(Deserialize)]
struct ExamResult {
    student_id: String,
    programme: String,
    outcome: String,
}

/// Counts for one fixture file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub file: String,
    pub added: usize,
    pub existing: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error("{file}: {message}")]
    Fixture { file: String, message: String },
    #[error("{file} row {row}: {error}")]
    Call { file: String, row: usize, error: CallError },
}

fn read<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<T>, SeedError> {
    let fixture = |message: String| SeedError::Fixture {
        file: file.to_string(),
        message,
    };
    let path = dir.join(file);
    if !path.exists() {
        return Ok(Vec::new());
    }
    csv::Reader::from_path(&path)
        .map_err(|e| fixture(e.to_string()))?
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| fixture(e.to_string()))
}

/// Fault reasons meaning the row is already in place.
const ALREADY: [&str; 4] = ["DuplicateId", "BookAlreadyOut", "AlreadyAllotted", "RoomOccupied"];

struct Loader<'a> {
    rpc: &'a RpcClient,
    tallies: Vec<Tally>,
}

impl Loader<'_> {
    async fn each<T>(
        &mut self,
        file: &str,
        rows: Vec<T>,
        service: &str,
        method: &str,
        args: impl Fn(&T) -> Vec<Value>,
    ) -> Result<(), SeedError> {
        let mut tally = Tally {
            file: file.to_string(),
            ..Tally::default()
        };
        for (i, row) in rows.iter().enumerate() {
            match self.rpc.call(service, method, args(row)).await {
                Ok(_) => tally.added += 1,
                Err(CallError::Fault(f)) if ALREADY.contains(&f.reason.as_str()) => tally.existing += 1,
                Err(error) => {
                    return Err(SeedError::Call {
                        file: file.to_string(),
                        row: i + 1,
                        error,
                    })
                }
            }
        }
        self.tallies.push(tally);
        Ok(())
    }
}

/// Seeds the selected targets in dependency order and returns per-file counts.
pub async fn load(rpc: &RpcClient, dir: &Path, targets: &[SeedTarget]) -> Result<Vec<Tally>, SeedError> {
    let mut l = Loader {
        rpc,
        tallies: Vec::new(),
    };
    let students: Vec<StudentRecord> = read(dir, "students.csv")?;
    if targets.contains(&SeedTarget::Amis) {
        let departments: Vec<DepartmentRecord> = read(dir, "departments.csv")?;
        let programmes: Vec<ProgrammeRecord> = read(dir, "programmes.csv")?;
        l.each("departments.csv", departments, AMIS_SERVICE, "addDepartment", |d| {
            vec![d.to_value()]
        })
        .await?;
        l.each("programmes.csv", programmes, AMIS_SERVICE, "addProgramme", |p| {
            vec![p.to_value()]
        })
        .await?;
        l.each("students.csv", students.clone(), AMIS_SERVICE, "registerStudent", |s| {
            vec![s.to_value()]
        })
        .await?;
    }
    if targets.contains(&SeedTarget::Lmis) {
        let books: Vec<BookRecord> = read(dir, "books.csv")?;
        let loans: Vec<Loan> = read(dir, "loans.csv")?;
        l.each("students.csv (members)", students, LMIS_SERVICE, "enrollMember", |s| {
            vec![Value::text(&s.id)]
        })
        .await?;
        l.each("books.csv", books, LMIS_SERVICE, "addBook", |b| {
            vec![
                Value::text(&b.id),
                Value::text(&b.isbn),
                Value::text(&b.title),
                Value::text(&b.author),
                Value::text(&b.publisher),
                Value::Int(b.year),
            ]
        })
        .await?;
        l.each("loans.csv", loans, LMIS_SERVICE, "issueBook", |x| {
            vec![Value::text(&x.book_id), Value::text(&x.student_id)]
        })
        .await?;
    }
    if targets.contains(&SeedTarget::Hmis) {
        let rooms: Vec<Room> = read(dir, "rooms.csv")?;
        let allotments: Vec<Allotment> = read(dir, "allotments.csv")?;
        l.each("rooms.csv", rooms, HMIS_SERVICE, "addRoom", |r| {
            vec![Value::text(&r.room_id)]
        })
        .await?;
        l.each("allotments.csv", allotments, HMIS_SERVICE, "allotRoom", |a| {
            vec![Value::text(&a.room_id), Value::text(&a.student_id)]
        })
        .await?;
    }
    if targets.contains(&SeedTarget::Emis) {
        let results: Vec<ExamResult> = read(dir, "results.csv")?;
        l.each("results.csv", results, EMIS_SERVICE, "recordResult", |r| {
            vec![
                Value::text(&r.student_id),
                Value::text(&r.programme),
                Value::text(&r.outcome),
            ]
        })
        .await?;
    }
    Ok(l.tallies)
}

pub async fn run(
    rpc: &RpcClient,
    dir: &Path,
    targets: &[SeedTarget],
    out: OutputFormat,
    io: &mut Io<'_>,
) -> std::io::Result<i32> {
    match load(rpc, dir, targets).await {
        Ok(tallies) => {
            if out == OutputFormat::Json {
                writeln!(
                    io.out,
                    "{}",
                    serde_json::to_string(&tallies).map_err(std::io::Error::other)?
                )?;
            } else {
                for t in &tallies {
                    writeln!(
                        io.out,
                        "{:<24} added {:>3}  existing {:>3}",
                        t.file, t.added, t.existing
                    )?;
                }
            }
            Ok(EXIT_OK)
        }
        Err(e) => {
            writeln!(io.err, "seed failed: {e}")?;
            Ok(match &e {
                SeedError::Call { error, .. } => exit_code(error),
                SeedError::Fixture { .. } => EXIT_DOMAIN,
            })
        }
    }
}
