//! Random issue/return/allot/vacate histories: every verification must match
//! a conjunction recomputed from the raw store files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use i3_core::departments::{Amis, BookRecord, Hmis, Lmis, StudentRecord};
use i3_core::emis::{Emis, Overall, Provider, ProviderGateway, Verdict};
use i3_core::store::StoreDir;
use proptest::prelude::*;

const STUDENTS: [&str; 4] = ["S-2024-0001", "S-2024-0002", "S-2024-0003", "S-2024-0004"];
const UNREGISTERED: &str = "S-2024-0099";
const BOOKS: [&str; 3] = ["B-1", "B-2", "B-3"];
const ROOMS: [&str; 2] = ["R-1", "R-2"];

#[derive(Debug, Clone)]
enum Op {
    Issue(usize, usize),
    Return(usize),
    Allot(usize, usize),
    Vacate(usize),
}

fn op() -> impl Strategy<Value = Op> {
    // student index 4 is the unregistered id
    prop_oneof![
        (0..BOOKS.len(), 0..=STUDENTS.len()).prop_map(|(b, s)| Op::Issue(b, s)),
        (0..BOOKS.len()).prop_map(Op::Return),
        (0..ROOMS.len(), 0..=STUDENTS.len()).prop_map(|(r, s)| Op::Allot(r, s)),
        (0..=STUDENTS.len()).prop_map(Op::Vacate),
    ]
}

fn student(i: usize) -> &'static str {
    STUDENTS.get(i).copied().unwrap_or(UNREGISTERED)
}

struct Local {
    amis: Arc<Amis>,
    lmis: Arc<Lmis>,
    hmis: Arc<Hmis>,
}

#[async_trait]
impl ProviderGateway for Local {
    async fn probe(&self, provider: Provider, id: &str) -> Verdict {
        match provider {
            Provider::Admissions => match self.amis.get_student(id) {
                Ok(_) => Verdict::Clear,
                Err(e) => Verdict::Unknown(e.to_string()),
            },
            Provider::Library if self.lmis.library_status(id).defaulter => Verdict::Dues("open loan".into()),
            Provider::Hostel if self.hmis.hostel_status(id).dues => Verdict::Dues("room".into()),
            _ => Verdict::Clear,
        }
    }
}

/// Students with an unreturned book, straight from the library op log.
fn defaulters(log: &Path) -> BTreeSet<String> {
    let text = std::fs::read_to_string(log).unwrap_or_default();
    let mut out_to: BTreeMap<String, String> = BTreeMap::new();
    for line in text.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        match f[0] {
            "ISSUE" => {
                out_to.insert(f[1].to_string(), f[2].to_string());
            }
            "RETURN" => {
                out_to.remove(f[1]);
            }
            _ => {}
        }
    }
    out_to.into_values().collect()
}

/// Students holding a room, straight from the hostel document.
fn residents(doc: &Path) -> BTreeSet<String> {
    let Ok(bytes) = std::fs::read(doc) else {
        return BTreeSet::new();
    };
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    v["allotments"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["vacated_at"].is_null())
        .map(|a| a["student_id"].as_str().unwrap().to_string())
        .collect()
}

fn admitted(csv: &Path) -> BTreeSet<String> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect()
}

fn record(id: &str) -> StudentRecord {
    StudentRecord {
        id: id.into(),
        first_name: "First".into(),
        last_name: "Last".into(),
        address: String::new(),
        contact_number: String::new(),
        faculty: "Engineering".into(),
        department: "SW".into(),
        degree_program: "BE-SW".into(),
        graduation_batch_year: 2027,
    }
}

async fn run(ops: Vec<Op>, probe: usize) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let amis = Arc::new(Amis::open(StoreDir::open(root.join("amis")).unwrap()).unwrap());
    for s in STUDENTS {
        amis.register_student(record(s)).unwrap();
    }
    let lmis = Arc::new(Lmis::open(StoreDir::open(root.join("lmis")).unwrap(), amis.clone()).unwrap());
    let hmis = Arc::new(Hmis::open(StoreDir::open(root.join("hmis")).unwrap()).unwrap());
    for s in STUDENTS {
        lmis.enroll_member(s).await.unwrap();
    }
    for b in BOOKS {
        lmis.add_book(BookRecord {
            id: b.into(),
            isbn: "0".into(),
            title: "T".into(),
            author: "A".into(),
            publisher: "P".into(),
            year: 2000,
        })
        .unwrap();
    }
    for r in ROOMS {
        hmis.add_room(r).unwrap();
    }
    let gateway = Arc::new(Local {
        amis: amis.clone(),
        lmis: lmis.clone(),
        hmis: hmis.clone(),
    });
    let emis = Emis::open(StoreDir::open(root.join("emis")).unwrap(), amis.clone(), gateway).unwrap();

    for op in ops {
        // rejected operations leave the stores untouched, which the oracle sees
        let _ = match op {
            Op::Issue(b, s) => lmis.issue_book(BOOKS[b], student(s)).map(drop),
            Op::Return(b) => lmis.return_book(BOOKS[b]).map(drop),
            Op::Allot(r, s) => hmis.allot_room(ROOMS[r], student(s)).map(drop),
            Op::Vacate(s) => hmis.vacate_room(student(s)).map(drop),
        };
    }

    let id = student(probe);
    let status = emis.verify_no_dues(id).await.unwrap();
    let owes_library = defaulters(&root.join("lmis/lmis.log")).contains(id);
    let owes_hostel = residents(&root.join("hmis/hostel.json")).contains(id);
    let known = admitted(&root.join("amis/students.csv")).contains(id);
    let expected = if known && !owes_library && !owes_hostel {
        Overall::Clear
    } else {
        Overall::Blocked
    };
    prop_assert_eq!(status.overall, expected, "{:?}", status);
    prop_assert_eq!(lmis.library_status(id).defaulter, owes_library);
    prop_assert_eq!(hmis.hostel_status(id).dues, owes_hostel);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn overall_matches_raw_store_conjunction(ops in prop::collection::vec(op(), 0..12), probe in 0..=STUDENTS.len()) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(run(ops, probe))?;
    }
}
