//! Admissions: the authoritative student, department and programme tables,
//! stored as one CSV file per record type.

use std::collections::BTreeMap;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::records::current_year;
use super::{
    arg_record, arg_text, list_of, unknown_method, AdmissionsDirectory, DepartmentRecord, DomainError, ListItem,
    ProgrammeRecord, StudentRecord,
};
use crate::broker::MethodSignature;
use crate::container::ServiceImplementation;
use crate::envelope::{Fault, RecordCodec, Value, ValueKind};
use crate::store::StoreDir;

pub const AMIS_ID: &str = "AdmissionDataBaseManager";
pub const AMIS_SERVICE: &str = "AdmissionDataBaseManagerService";

const STUDENTS: &str = "students.csv";
const DEPARTMENTS: &str = "departments.csv";
const PROGRAMMES: &str = "programmes.csv";

#[derive(Default)]
struct Tables {
    students: BTreeMap<String, StudentRecord>,
    departments: BTreeMap<String, DepartmentRecord>,
    programmes: BTreeMap<String, ProgrammeRecord>,
}

pub struct Amis {
    store: StoreDir,
    tables: Mutex<Tables>,
}

fn read_table<T: DeserializeOwned>(store: &StoreDir, name: &str) -> Result<Vec<T>, DomainError> {
    let Some(bytes) = store.read(name).map_err(DomainError::store)? else {
        return Ok(Vec::new());
    };
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| DomainError::Store(format!("{name}: {e}")))
}

fn write_table<'a, T: Serialize + 'a>(
    store: &StoreDir,
    name: &str,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<(), DomainError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(DomainError::store)?;
    }
    let bytes = w.into_inner().map_err(DomainError::store)?;
    store.replace(name, &bytes).map_err(DomainError::store)
}

fn sorted_items(mut items: Vec<ListItem>) -> Vec<ListItem> {
    items.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| a.value.cmp(&b.value)));
    items
}

impl Amis {
    pub fn open(store: StoreDir) -> Result<Self, DomainError> {
        let mut tables = Tables::default();
        for s in read_table::<StudentRecord>(&store, STUDENTS)? {
            tables.students.insert(s.id.clone(), s);
        }
        for d in read_table::<DepartmentRecord>(&store, DEPARTMENTS)? {
            tables.departments.insert(d.code.clone(), d);
        }
        for p in read_table::<ProgrammeRecord>(&store, PROGRAMMES)? {
            tables.programmes.insert(p.code.clone(), p);
        }
        Ok(Amis {
            store,
            tables: Mutex::new(tables),
        })
    }

    fn tables(&self) -> std::sync::MutexGuard<'_, Tables> {
        self.tables.lock().expect("AMIS lock poisoned")
    }

    pub fn register_student(&self, s: StudentRecord) -> Result<String, DomainError> {
        s.validate(current_year())?;
        let mut t = self.tables();
        if t.students.contains_key(&s.id) {
            return Err(DomainError::DuplicateId(s.id));
        }
        let id = s.id.clone();
        let mut next = t.students.clone();
        next.insert(id.clone(), s);
        write_table(&self.store, STUDENTS, next.values())?;
        t.students = next;
        Ok(id)
    }

    pub fn get_student(&self, id: &str) -> Result<StudentRecord, DomainError> {
        self.tables()
            .students
            .get(id)
            .cloned()
            .ok_or_else(|| DomainError::NotFound(id.to_string()))
    }

    /// Case-insensitive substring match over names and department; the
    /// empty query matches everyone.
    pub fn search_students(&self, query: &str) -> Vec<StudentRecord> {
        let q = query.to_lowercase();
        self.tables()
            .students
            .values()
            .filter(|s| {
                let full = format!("{} {}", s.first_name, s.last_name).to_lowercase();
                full.contains(&q) || s.department.to_lowercase().contains(&q)
            })
            .cloned()
            .collect()
    }

    pub fn list_departments(&self) -> Vec<ListItem> {
        sorted_items(
            self.tables()
                .departments
                .values()
                .map(|d| ListItem {
                    label: d.title.clone(),
                    value: d.code.clone(),
                })
                .collect(),
        )
    }

    pub fn list_programmes(&self, department: &str) -> Vec<ListItem> {
        sorted_items(
            self.tables()
                .programmes
                .values()
                .filter(|p| p.department == department)
                .map(|p| ListItem {
                    label: p.title.clone(),
                    value: p.code.clone(),
                })
                .collect(),
        )
    }

    pub fn add_department(&self, d: DepartmentRecord) -> Result<DepartmentRecord, DomainError> {
        if d.code.is_empty() || d.title.is_empty() {
            return Err(DomainError::InvalidRecord {
                field: if d.code.is_empty() { "code" } else { "title" }.into(),
                reason: "must not be empty".into(),
            });
        }
        let mut t = self.tables();
        if t.departments.contains_key(&d.code) {
            return Err(DomainError::DuplicateId(d.code));
        }
        let mut next = t.departments.clone();
        next.insert(d.code.clone(), d.clone());
        write_table(&self.store, DEPARTMENTS, next.values())?;
        t.departments = next;
        Ok(d)
    }

    pub fn add_programme(&self, p: ProgrammeRecord) -> Result<ProgrammeRecord, DomainError> {
        if p.code.is_empty() {
            return Err(DomainError::InvalidRecord {
                field: "code".into(),
                reason: "must not be empty".into(),
            });
        }
        if p.duration_years < 1 {
            return Err(DomainError::InvalidRecord {
                field: "duration_years".into(),
                reason: format!("{} is below 1", p.duration_years),
            });
        }
        let mut t = self.tables();
        if !t.departments.contains_key(&p.department) {
            return Err(DomainError::UnknownDepartment(p.department));
        }
        if t.programmes.contains_key(&p.code) {
            return Err(DomainError::DuplicateId(p.code));
        }
        let mut next = t.programmes.clone();
        next.insert(p.code.clone(), p.clone());
        write_table(&self.store, PROGRAMMES, next.values())?;
        t.programmes = next;
        Ok(p)
    }

    pub fn get_programme(&self, code: &str) -> Result<ProgrammeRecord, DomainError> {
        self.tables()
            .programmes
            .get(code)
            .cloned()
            .ok_or_else(|| DomainError::NotFound(code.to_string()))
    }
}

#[async_trait]
impl ServiceImplementation for Amis {
    fn id(&self) -> &str {
        AMIS_ID
    }

    fn methods(&self) -> Vec<MethodSignature> {
        use ValueKind::*;
        vec![
            MethodSignature::new("registerStudent", &[Record], Text),
            MethodSignature::new("getStudent", &[Text], Record),
            MethodSignature::new("searchStudents", &[Text], List),
            MethodSignature::new("listDepartments", &[], List),
            MethodSignature::new("listProgrammes", &[Text], List),
            MethodSignature::new("addDepartment", &[Record], Record),
            MethodSignature::new("addProgramme", &[Record], Record),
            MethodSignature::new("getProgramme", &[Text], Record),
        ]
    }

    fn record_types(&self) -> Vec<String> {
        [
            StudentRecord::QNAME,
            DepartmentRecord::QNAME,
            ProgrammeRecord::QNAME,
            ListItem::QNAME,
        ]
        .map(String::from)
        .to_vec()
    }

    async fn invoke(&self, method: &str, args: Vec<Value>) -> Result<Value, Fault> {
        let v = match method {
            "registerStudent" => Value::Text(self.register_student(arg_record(&args, 0)?)?),
            "getStudent" => self.get_student(&arg_text(&args, 0)?)?.to_value(),
            "searchStudents" => list_of(&self.search_students(&arg_text(&args, 0)?)),
            "listDepartments" => list_of(&self.list_departments()),
            "listProgrammes" => list_of(&self.list_programmes(&arg_text(&args, 0)?)),
            "addDepartment" => self.add_department(arg_record(&args, 0)?)?.to_value(),
            "addProgramme" => self.add_programme(arg_record(&args, 0)?)?.to_value(),
            "getProgramme" => self.get_programme(&arg_text(&args, 0)?)?.to_value(),
            other => return Err(unknown_method(other)),
        };
        Ok(v)
    }
}

#[async_trait]
impl AdmissionsDirectory for Amis {
    async fn student(&self, id: &str) -> Result<Option<StudentRecord>, String> {
        Ok(self.get_student(id).ok())
    }

    async fn programme(&self, code: &str) -> Result<Option<ProgrammeRecord>, String> {
        Ok(self.get_programme(code).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn student(id: &str, first: &str, dept: &str) -> StudentRecord {
        StudentRecord {
            id: id.into(),
            first_name: first.into(),
            last_name: "Ahmed".into(),
            address: "Hostel Road, \"Block A\", Jamshoro".into(),
            contact_number: "0300".into(),
            faculty: "Engineering".into(),
            department: dept.into(),
            degree_program: "BE".into(),
            graduation_batch_year: 2027,
        }
    }

    fn open(dir: &std::path::Path) -> Amis {
        Amis::open(StoreDir::open(dir).unwrap()).unwrap()
    }

    #[test]
    fn register_get_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let a = open(dir.path());
        let s = student("S-2024-0001", "Sara", "Software Engineering");
        assert_eq!(a.register_student(s.clone()).unwrap(), "S-2024-0001");
        assert_eq!(a.get_student("S-2024-0001").unwrap(), s);
        assert!(matches!(
            a.register_student(s.clone()),
            Err(DomainError::DuplicateId(_))
        ));
        assert!(matches!(a.get_student("S-2024-0002"), Err(DomainError::NotFound(_))));
        drop(a);
        assert_eq!(open(dir.path()).get_student("S-2024-0001").unwrap(), s);
    }

    #[test]
    fn rejects_bad_batch_year() {
        let dir = tempfile::tempdir().unwrap();
        let a = open(dir.path());
        let mut s = student("S-2024-0001", "Sara", "CS");
        s.graduation_batch_year = 1800;
        assert!(matches!(a.register_student(s), Err(DomainError::InvalidRecord { .. })));
        assert!(a.search_students("").is_empty());
    }

    #[test]
    fn search_is_case_insensitive() {
        let dir = tempfile::tempdir().unwrap();
        let a = open(dir.path());
        a.register_student(student("S-2024-0001", "Sara", "Software Engineering"))
            .unwrap();
        a.register_student(student("S-2024-0002", "Bilal", "Civil")).unwrap();
        assert_eq!(a.search_students("").len(), 2);
        assert_eq!(a.search_students("SOFTWARE").len(), 1);
        assert_eq!(a.search_students("bil").len(), 1);
        assert_eq!(a.search_students("sara ahmed").len(), 1);
        assert!(a.search_students("zzz").is_empty());
    }

    #[test]
    fn listings_sorted_by_label() {
        let dir = tempfile::tempdir().unwrap();
        let a = open(dir.path());
        for (code, title) in [
            ("SW", "Software Engineering"),
            ("CE", "Civil Engineering"),
            ("EE", "Electrical Engineering"),
        ] {
            a.add_department(DepartmentRecord {
                code: code.into(),
                title: title.into(),
                faculty: "Engineering".into(),
            })
            .unwrap();
        }
        let labels: Vec<_> = a.list_departments().into_iter().map(|i| i.label).collect();
        assert_eq!(
            labels,
            ["Civil Engineering", "Electrical Engineering", "Software Engineering"]
        );
        let p = ProgrammeRecord {
            code: "BE-SW".into(),
            title: "BE Software".into(),
            department: "SW".into(),
            duration_years: 4,
        };
        a.add_programme(p.clone()).unwrap();
        assert_eq!(
            a.list_programmes("SW"),
            vec![ListItem {
                label: "BE Software".into(),
                value: "BE-SW".into()
            }]
        );
        assert!(a.list_programmes("XX").is_empty());
        let mut orphan = p.clone();
        orphan.code = "X".into();
        orphan.department = "XX".into();
        assert!(matches!(
            a.add_programme(orphan),
            Err(DomainError::UnknownDepartment(_))
        ));
        assert!(matches!(a.add_programme(p), Err(DomainError::DuplicateId(_))));
        drop(a);
        let a = open(dir.path());
        assert_eq!(a.list_departments().len(), 3);
        assert_eq!(a.get_programme("BE-SW").unwrap().duration_years, 4);
    }
}
