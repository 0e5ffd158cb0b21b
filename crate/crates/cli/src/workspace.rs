//! Output directory layout.
//!
//! ```text
//! output_dir/
//!   .lock
//!   data/{train,valid}.jsonl, stats.json
//!   tg/tg-<hash>/          teacher/teacher-<hash>/
//!   student/student-<hash>/ reports/report-<hash>/
//! ```
//!
//! Every artifact directory is named after a hash of its contents and never
//! rewritten. `<stage>/LATEST` names the most recent one.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toxcl_core::Error;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Tg,
    Teacher,
    Student,
    Reports,
}

impl Stage {
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Tg => "tg",
            Stage::Teacher => "teacher",
            Stage::Student => "student",
            Stage::Reports => "reports",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Stage::Reports => "report",
            other => other.dir_name(),
        }
    }
}

pub struct Workspace {
    root: PathBuf,
}

/// Exclusive hold on an output directory, released on drop.
pub struct WorkspaceLock {
    _file: File,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| Error::io(path, e).into()
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn split_path(&self, split: &str) -> PathBuf {
        self.data_dir().join(format!("{split}.jsonl"))
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir_name())
    }

    /// Takes the writer lock, failing immediately if another run holds it.
    pub fn lock(&self) -> Result<WorkspaceLock, CliError> {
        fs::create_dir_all(&self.root).map_err(io(&self.root))?;
        let path = self.root.join(".lock");
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(WorkspaceLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => Err(CliError::Locked(self.root.clone())),
            Err(fs::TryLockError::Error(e)) => Err(Error::io(&path, e).into()),
        }
    }

    /// Most recent artifact of `stage`, if any.
    pub fn latest(&self, stage: Stage) -> Result<Option<PathBuf>, CliError> {
        let pointer = self.stage_dir(stage).join("LATEST");
        match fs::read_to_string(&pointer) {
            Ok(name) => Ok(Some(self.stage_dir(stage).join(name.trim()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&pointer, e).into()),
        }
    }

    pub fn require_latest(&self, stage: Stage) -> Result<PathBuf, CliError> {
        self.latest(stage)?
            .ok_or_else(|| CliError::MissingPrerequisite(stage.dir_name().to_owned()))
    }

    /// Writes an artifact through `fill`, then moves it to its content-hash
    /// name and updates `LATEST`.
    pub fn publish(
        &self,
        stage: Stage,
        fill: impl FnOnce(&Path) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        let parent = self.stage_dir(stage);
        let staging = parent.join(format!(".staging-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(io(&staging))?;
        fill(&staging)?;
        let hash = hash_dir(&staging)?;
        let name = format!("{}-{}", stage.prefix(), &hash[..12]);
        let target = parent.join(&name);
        if target.exists() {
            fs::remove_dir_all(&staging).map_err(io(&staging))?;
        } else {
            fs::rename(&staging, &target).map_err(io(&target))?;
        }
        let pointer = parent.join("LATEST");
        fs::write(&pointer, &name).map_err(io(&pointer))?;
        Ok(target)
    }
}

/// SHA-256 over file names and contents, in name order.
fn hash_dir(dir: &Path) -> Result<String, CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io(dir))?;
    entries.sort();
    let mut hasher = Sha256::new();
    for path in entries {
        hasher.update(path.file_name().unwrap_or_default().as_encoded_bytes());
        hasher.update([0]);
        hasher.update(fs::read(&path).map_err(io(&path))?);
    }
    Ok(hex::encode(hasher.finalize()))
}
