use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::xml::is_ncname;

/// Association between a namespaced wire type name and a native type tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeanMapping {
    /// Prefixed name, e.g. `myNS:StudentRecord`.
    pub qname: String,
    /// Namespace URI bound to the prefix, e.g. `urn:BeanService`.
    pub namespace: String,
    /// Provider-tagged native type, e.g. `java:StudentRecord`. Never interpreted.
    pub native_type: String,
}

impl BeanMapping {
    pub fn new(qname: impl Into<String>, namespace: impl Into<String>, native_type: impl Into<String>) -> Self {
        BeanMapping {
            qname: qname.into(),
            namespace: namespace.into(),
            native_type: native_type.into(),
        }
    }

    /// Splits the qname into (prefix, local part).
    pub fn split_qname(qname: &str) -> Option<(&str, &str)> {
        let (prefix, local) = qname.split_once(':')?;
        (is_ncname(prefix) && is_ncname(local)).then_some((prefix, local))
    }

    pub fn prefix(&self) -> &str {
        Self::split_qname(&self.qname).map(|(p, _)| p).unwrap_or_default()
    }

    pub fn local_name(&self) -> &str {
        Self::split_qname(&self.qname).map(|(_, l)| l).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MappingError {
    #[error("duplicate bean mapping for {{{namespace}}}{local}")]
    Duplicate { namespace: String, local: String },
    #[error("invalid bean mapping {qname:?}: {reason}")]
    Invalid { qname: String, reason: String },
}

/// Prefixes that the envelope grammar already binds.
const RESERVED_PREFIXES: [&str; 3] = ["i3", "xml", "xmlns"];

/// Lookup table of bean mappings, unique by (namespace, local name) and by qname.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingTable {
    by_qname: BTreeMap<String, BeanMapping>,
    by_expanded: BTreeMap<(String, String), String>,
}

impl MappingTable {
    pub fn new(mappings: impl IntoIterator<Item = BeanMapping>) -> Result<Self, MappingError> {
        let mut table = MappingTable::default();
        for m in mappings {
            table.insert(m)?;
        }
        Ok(table)
    }

    pub fn empty() -> Self {
        MappingTable::default()
    }

    pub fn insert(&mut self, mapping: BeanMapping) -> Result<(), MappingError> {
        let Some((prefix, local)) = BeanMapping::split_qname(&mapping.qname) else {
            return Err(MappingError::Invalid {
                qname: mapping.qname.clone(),
                reason: "qname must be PREFIX:LOCAL".into(),
            });
        };
        if RESERVED_PREFIXES.contains(&prefix) {
            return Err(MappingError::Invalid {
                qname: mapping.qname.clone(),
                reason: format!("prefix {prefix:?} is reserved"),
            });
        }
        if mapping.namespace.is_empty() {
            return Err(MappingError::Invalid {
                qname: mapping.qname.clone(),
                reason: "empty namespace".into(),
            });
        }
        let key = (mapping.namespace.clone(), local.to_string());
        if self.by_expanded.contains_key(&key) || self.by_qname.contains_key(&mapping.qname) {
            return Err(MappingError::Duplicate {
                namespace: key.0,
                local: key.1,
            });
        }
        self.by_expanded.insert(key, mapping.qname.clone());
        self.by_qname.insert(mapping.qname.clone(), mapping);
        Ok(())
    }

    /// Union of several tables; identical entries are merged, conflicting ones rejected.
    pub fn merged<'a>(tables: impl IntoIterator<Item = &'a MappingTable>) -> Result<Self, MappingError> {
        let mut out = MappingTable::default();
        for t in tables {
            for m in t.iter() {
                if out.by_qname.get(&m.qname) == Some(m) {
                    continue;
                }
                out.insert(m.clone())?;
            }
        }
        Ok(out)
    }

    pub fn by_qname(&self, qname: &str) -> Option<&BeanMapping> {
        self.by_qname.get(qname)
    }

    pub fn by_expanded_name(&self, namespace: &str, local: &str) -> Option<&BeanMapping> {
        self.by_expanded
            .get(&(namespace.to_string(), local.to_string()))
            .and_then(|q| self.by_qname.get(q))
    }

    pub fn iter(&self) -> impl Iterator<Item = &BeanMapping> {
        self.by_qname.values()
    }

    pub fn len(&self) -> usize {
        self.by_qname.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_qname.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(q: &str, ns: &str) -> BeanMapping {
        BeanMapping::new(q, ns, format!("java:{q}"))
    }

    #[test]
    fn duplicate_expanded_name_rejected() {
        let err = MappingTable::new([m("a:X", "urn:n"), m("b:X", "urn:n")]).unwrap_err();
        assert!(matches!(err, MappingError::Duplicate { .. }));
    }

    #[test]
    fn duplicate_qname_string_rejected() {
        assert!(MappingTable::new([m("a:X", "urn:one"), m("a:X", "urn:two")]).is_err());
    }

    #[test]
    fn same_local_in_distinct_namespaces_is_fine() {
        let t = MappingTable::new([m("a:X", "urn:one"), m("b:X", "urn:two")]).unwrap();
        assert_eq!(t.by_expanded_name("urn:two", "X").unwrap().qname, "b:X");
    }

    #[test]
    fn reserved_and_unprefixed_qnames_rejected() {
        assert!(MappingTable::new([m("i3:X", "urn:n")]).is_err());
        assert!(MappingTable::new([m("X", "urn:n")]).is_err());
    }

    #[test]
    fn merge_tolerates_identical_entries() {
        let a = MappingTable::new([m("myNS:A", "urn:BeanService")]).unwrap();
        let b = MappingTable::new([m("myNS:A", "urn:BeanService"), m("myNS:B", "urn:BeanService")]).unwrap();
        assert_eq!(MappingTable::merged([&a, &b]).unwrap().len(), 2);
    }
}
