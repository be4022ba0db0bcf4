//! The registry that sits between requesters and providers: services are
//! published into it, found by name pattern, and bound to an endpoint.

mod description;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{SubsecRound, Utc};
use url::Url;

pub use description::{
    description_document, parse_description_document, parse_registry_document, registry_document,
    DescriptionParseError, MethodSignature, ServiceDescription, DESCRIPTION_NS,
};

use crate::envelope::MappingTable;
use crate::store;
use crate::xml::is_ncname;

#[derive(Debug, thiserror::Error)]
pub enum BrokerError {
    #[error("invalid description: {0}")]
    InvalidDescription(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("service not found: {0}")]
    NotFound(String),
    #[error("registry snapshot: {0}")]
    Snapshot(#[from] io::Error),
}

/// Name pattern: a literal, `*`, `*suffix`, or `prefix*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryQuery {
    pattern: String,
}

impl RegistryQuery {
    pub fn parse(pattern: &str) -> Result<Self, BrokerError> {
        if pattern.is_empty() {
            return Err(BrokerError::InvalidQuery("empty pattern".into()));
        }
        let stars = pattern.matches('*').count();
        let ok = match stars {
            0 => true,
            1 => pattern.starts_with('*') || pattern.ends_with('*'),
            _ => false,
        };
        if !ok {
            return Err(BrokerError::InvalidQuery(format!(
                "{pattern:?}: '*' is only allowed once, at one end"
            )));
        }
        Ok(RegistryQuery {
            pattern: pattern.to_string(),
        })
    }

    pub fn all() -> Self {
        RegistryQuery { pattern: "*".into() }
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn matches(&self, name: &str) -> bool {
        if let Some(suffix) = self.pattern.strip_prefix('*') {
            name.ends_with(suffix)
        } else if let Some(prefix) = self.pattern.strip_suffix('*') {
            name.starts_with(prefix)
        } else {
            name == self.pattern
        }
    }
}

/// Returned by a successful publish.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Acknowledgment {
    pub name: String,
    pub replaced: bool,
}

/// Checks the invariants a description must satisfy to be published.
pub fn validate_description(desc: &ServiceDescription) -> Result<(), BrokerError> {
    let invalid = |m: String| Err(BrokerError::InvalidDescription(m));
    if desc.name.is_empty() {
        return invalid("empty name".into());
    }
    match Url::parse(&desc.endpoint) {
        Ok(u) if u.has_host() => {}
        _ => return invalid(format!("endpoint {:?} is not an absolute URL", desc.endpoint)),
    }
    if desc.methods.is_empty() {
        return invalid(format!("{} exposes no methods", desc.name));
    }
    if let Some(m) = desc.methods.iter().find(|m| !is_ncname(&m.name)) {
        return invalid(format!("method name {:?} is not an XML name", m.name));
    }
    MappingTable::new(desc.record_types.iter().cloned()).map_err(|e| BrokerError::InvalidDescription(e.to_string()))?;
    Ok(())
}

/// In-memory registry with an optional snapshot file rewritten on every change.
#[derive(Debug, Default)]
pub struct Registry {
    entries: RwLock<BTreeMap<String, ServiceDescription>>,
    snapshot: Option<PathBuf>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// Opens a registry backed by `path`, loading it when it exists.
    pub fn with_snapshot(path: impl Into<PathBuf>) -> Result<Self, BrokerError> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let bytes = std::fs::read(&path)?;
            let loaded = parse_registry_document(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            for d in loaded {
                entries.insert(d.name.clone(), d);
            }
        }
        Ok(Registry {
            entries: RwLock::new(entries),
            snapshot: Some(path),
        })
    }

    pub fn snapshot_path(&self) -> Option<&Path> {
        self.snapshot.as_deref()
    }

    fn persist(&self, entries: &BTreeMap<String, ServiceDescription>) -> Result<(), BrokerError> {
        if let Some(path) = &self.snapshot {
            store::write_atomic(path, &registry_document(entries.values()))?;
        }
        Ok(())
    }

    /// Inserts or replaces the entry for `desc.name`, stamping `published_at`.
    pub fn publish(&self, mut desc: ServiceDescription) -> Result<Acknowledgment, BrokerError> {
        validate_description(&desc)?;
        desc.published_at = Utc::now().trunc_subsecs(6);
        let mut entries = self.entries.write().expect("registry lock poisoned");
        let name = desc.name.clone();
        let replaced = entries.insert(name.clone(), desc).is_some();
        self.persist(&entries)?;
        Ok(Acknowledgment { name, replaced })
    }

    /// Removes an entry; returns whether it existed.
    pub fn retract(&self, name: &str) -> Result<bool, BrokerError> {
        let mut entries = self.entries.write().expect("registry lock poisoned");
        let existed = entries.remove(name).is_some();
        if existed {
            self.persist(&entries)?;
        }
        Ok(existed)
    }

    /// All matching entries, sorted by name.
    pub fn find(&self, q: &RegistryQuery) -> Vec<ServiceDescription> {
        let entries = self.entries.read().expect("registry lock poisoned");
        entries.values().filter(|d| q.matches(&d.name)).cloned().collect()
    }

    pub fn bind(&self, name: &str) -> Result<(Url, ServiceDescription), BrokerError> {
        let entries = self.entries.read().expect("registry lock poisoned");
        let desc = entries
            .get(name)
            .cloned()
            .ok_or_else(|| BrokerError::NotFound(name.to_string()))?;
        let url = Url::parse(&desc.endpoint).map_err(|e| BrokerError::InvalidDescription(e.to_string()))?;
        Ok((url, desc))
    }

    pub fn describe(&self, name: &str) -> Result<Vec<u8>, BrokerError> {
        let entries = self.entries.read().expect("registry lock poisoned");
        entries
            .get(name)
            .map(description_document)
            .ok_or_else(|| BrokerError::NotFound(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("registry lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::ValueKind;

    fn desc(name: &str, endpoint: &str) -> ServiceDescription {
        ServiceDescription {
            name: name.into(),
            endpoint: endpoint.into(),
            methods: vec![MethodSignature::new(
                "getStudent",
                &[ValueKind::Text],
                ValueKind::Record,
            )],
            record_types: vec![],
            published_at: Utc::now(),
        }
    }

    #[test]
    fn publish_then_find_exact() {
        let r = Registry::new();
        let d = desc("A", "http://h:1/services/A");
        r.publish(d.clone()).unwrap();
        let found = r.find(&RegistryQuery::parse("A").unwrap());
        assert_eq!(found.len(), 1);
        assert!(found[0].same_content(&d));
    }

    #[test]
    fn republish_is_last_writer_wins() {
        let r = Registry::new();
        r.publish(desc("A", "http://h:1/services/A")).unwrap();
        let ack = r.publish(desc("A", "http://h:2/services/A")).unwrap();
        assert!(ack.replaced);
        let (url, _) = r.bind("A").unwrap();
        assert_eq!(url.port(), Some(2));
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn empty_methods_rejected() {
        let mut d = desc("A", "http://h:1/services/A");
        d.methods.clear();
        assert!(matches!(
            Registry::new().publish(d),
            Err(BrokerError::InvalidDescription(_))
        ));
    }

    #[test]
    fn relative_endpoint_rejected() {
        let d = desc("A", "/services/A");
        assert!(matches!(
            Registry::new().publish(d),
            Err(BrokerError::InvalidDescription(_))
        ));
    }

    #[test]
    fn glob_matching() {
        let r = Registry::new();
        assert!(r.find(&RegistryQuery::all()).is_empty());
        for n in [
            "LibraryDataBaseManagerService",
            "AdmissionDataBaseManagerService",
            "Other",
        ] {
            r.publish(desc(n, "http://h:1/x")).unwrap();
        }
        let names = |p: &str| -> Vec<String> {
            r.find(&RegistryQuery::parse(p).unwrap())
                .into_iter()
                .map(|d| d.name)
                .collect()
        };
        assert_eq!(
            names("*DataBaseManagerService"),
            ["AdmissionDataBaseManagerService", "LibraryDataBaseManagerService"]
        );
        assert_eq!(names("Lib*"), ["LibraryDataBaseManagerService"]);
        assert_eq!(names("*").len(), 3);
        assert!(names("Nope").is_empty());
        assert!(RegistryQuery::parse("a*b").is_err());
        assert!(RegistryQuery::parse("*a*").is_err());
        assert!(RegistryQuery::parse("").is_err());
    }

    #[test]
    fn bind_and_describe_unknown() {
        let r = Registry::new();
        assert!(matches!(r.bind("X"), Err(BrokerError::NotFound(_))));
        assert!(matches!(r.describe("X"), Err(BrokerError::NotFound(_))));
        r.publish(desc("X", "http://h:1/x")).unwrap();
        assert_eq!(r.describe("X").unwrap(), r.describe("X").unwrap());
        assert!(r.retract("X").unwrap());
        assert!(matches!(r.bind("X"), Err(BrokerError::NotFound(_))));
        assert!(!r.retract("X").unwrap());
    }

    #[test]
    fn snapshot_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.xml");
        {
            let r = Registry::with_snapshot(&path).unwrap();
            r.publish(desc("A", "http://h:1/services/A")).unwrap();
            r.publish(desc("B", "http://h:1/services/B")).unwrap();
            r.retract("B").unwrap();
        }
        let r = Registry::with_snapshot(&path).unwrap();
        let found = r.find(&RegistryQuery::all());
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].name, "A");
    }
}
