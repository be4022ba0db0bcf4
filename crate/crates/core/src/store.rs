//! File plumbing shared by the per-service stores.
//!
//! Every store file a service touches goes through [`StoreDir`], which can
//! record each path it opens in an access journal. The journal lets an
//! operator (or a test) confirm that a service never reaches into another
//! service's files.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

/// Writes `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Append-only list of store paths opened by this process.
#[derive(Debug)]
pub struct AccessJournal {
    file: Mutex<File>,
}

impl AccessJournal {
    pub fn open(path: &Path) -> io::Result<Arc<Self>> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Arc::new(AccessJournal { file: Mutex::new(file) }))
    }

    fn record(&self, mode: &str, path: &Path) {
        let mut f = self.file.lock().expect("journal lock poisoned");
        let _ = writeln!(f, "{mode}\t{}", path.display());
    }
}

/// Root directory of one service's store.
#[derive(Debug, Clone)]
pub struct StoreDir {
    root: PathBuf,
    journal: Option<Arc<AccessJournal>>,
}

impl StoreDir {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let root = root.canonicalize()?;
        Ok(StoreDir { root, journal: None })
    }

    pub fn with_journal(mut self, journal: Arc<AccessJournal>) -> Self {
        self.journal = Some(journal);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn note(&self, mode: &str, path: &Path) {
        if let Some(j) = &self.journal {
            j.record(mode, path);
        }
    }

    /// Reads a file, or `None` if it does not exist yet.
    pub fn read(&self, name: &str) -> io::Result<Option<Vec<u8>>> {
        let path = self.path(name);
        self.note("read", &path);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn replace(&self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.path(name);
        self.note("write", &path);
        write_atomic(&path, bytes)
    }

    /// Appends one line (a trailing newline is added) and syncs.
    pub fn append_line(&self, name: &str, line: &str) -> io::Result<()> {
        let path = self.path(name);
        self.note("append", &path);
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        f.write_all(line.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_data()
    }
}

/// Escapes a field for tab-separated line formats.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape {other:?}")),
        }
    }
    Ok(out)
}
