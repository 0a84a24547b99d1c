use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use calico::adl::render_errors;
use calico::debugger::Reconfiguration;
use calico::plan::ActionPolicy;
use calico::runtime::{parse_scenarios, parse_scripts, BehaviorScript, RunningSystem, Scenario};
use calico::{parse, Architecture};
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "calico.json";
pub const REPORT_FILE: &str = "session.md";
const STATE_DIR: &str = ".calico";

/// Workspace settings read from `calico.json`. Every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub actions: ActionPolicy,
    pub seed: Option<u64>,
    pub state_cap: Option<usize>,
}

/// A parse failure in a workspace input. Maps to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub struct Workspace {
    pub root: PathBuf,
}

/// Held for the duration of a command; dropping it releases the lock.
pub struct Lock(#[allow(dead_code)] File);

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn scripts_dir(&self) -> PathBuf {
        self.root.join("scripts")
    }

    pub fn scenarios_dir(&self) -> PathBuf {
        self.root.join("scenarios")
    }

    pub fn reconfig_dir(&self) -> PathBuf {
        self.root.join("reconfig")
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join(REPORT_FILE)
    }

    pub fn state_dir(&self) -> PathBuf {
        self.root.join(STATE_DIR)
    }

    pub fn state_path(&self) -> PathBuf {
        self.state_dir().join("state.json")
    }

    pub fn plan_path(&self) -> PathBuf {
        self.state_dir().join("plan.json")
    }

    pub fn construction_path(&self) -> PathBuf {
        self.state_dir().join("construction.json")
    }

    pub fn model_path(&self) -> PathBuf {
        self.state_dir().join("model.adl")
    }

    pub fn trace_path(&self) -> PathBuf {
        self.state_dir().join("trace.jsonl")
    }

    pub fn lock(&self) -> Result<Lock> {
        fs::create_dir_all(self.state_dir()).with_context(|| format!("cannot create {}", self.state_dir().display()))?;
        let path = self.state_dir().join("lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        match file.try_lock() {
            Ok(()) => Ok(Lock(file)),
            Err(fs::TryLockError::WouldBlock) => bail!("workspace {} is busy with another command", self.root.display()),
            Err(fs::TryLockError::Error(e)) => Err(e).with_context(|| format!("cannot lock {}", path.display())),
        }
    }

    pub fn config(&self) -> Result<Config> {
        let path = self.root.join(CONFIG_FILE);
        if !path.exists() {
            return Ok(Config::default());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| InputError(format!("{}: {e}", path.display())).into())
    }

    /// Resolves a user-supplied path: first under the workspace root, then as given.
    pub fn resolve(&self, path: &Path) -> Result<PathBuf> {
        let under_root = self.root.join(path);
        if under_root.is_file() {
            return Ok(under_root);
        }
        if path.is_file() {
            return Ok(path.to_path_buf());
        }
        Err(InputError(format!("no such file: {}", path.display())).into())
    }

    pub fn load_model(&self, path: &Path) -> Result<(PathBuf, Architecture)> {
        let path = self.resolve(path)?;
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let arch = parse(&text).map_err(|errors| {
            let lines = render_errors(&errors)
                .lines()
                .map(|l| format!("{}:{l}", path.display()))
                .collect::<Vec<_>>()
                .join("\n");
            InputError(lines)
        })?;
        Ok((path, arch))
    }

    /// Every script in `scripts/`, ordered by file name.
    pub fn scripts(&self) -> Result<Vec<BehaviorScript>> {
        let mut out = Vec::new();
        for path in files_with_extension(&self.scripts_dir(), "script")? {
            let text = fs::read_to_string(&path)?;
            out.extend(parse_scripts(&text).map_err(|e| InputError(format!("{}:{e}", path.display())))?);
        }
        Ok(out)
    }

    /// A scenario named `name` in `scenarios/`, or the first scenario of the file at `name`.
    pub fn scenario(&self, name: &str) -> Result<Scenario> {
        for path in files_with_extension(&self.scenarios_dir(), "scenario")? {
            let text = fs::read_to_string(&path)?;
            let found = parse_scenarios(&text).map_err(|e| InputError(format!("{}:{e}", path.display())))?;
            if let Some(s) = found.into_iter().find(|s| s.name == name) {
                return Ok(s);
            }
        }
        let path = self
            .resolve(Path::new(name))
            .map_err(|_| InputError(format!("no scenario named {name}")))?;
        let text = fs::read_to_string(&path)?;
        parse_scenarios(&text)
            .map_err(|e| InputError(format!("{}:{e}", path.display())))?
            .into_iter()
            .next()
            .ok_or_else(|| InputError(format!("{} holds no scenario", path.display())).into())
    }

    /// Target models in `reconfig/`, keyed by file stem, each paired with the workspace scripts.
    pub fn reconfigurations(&self, scripts: &[BehaviorScript]) -> Result<BTreeMap<String, Reconfiguration>> {
        let mut out = BTreeMap::new();
        for path in files_with_extension(&self.reconfig_dir(), "adl")? {
            let (_, architecture) = self.load_model(&path)?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            out.insert(
                name,
                Reconfiguration {
                    architecture,
                    scripts: scripts.to_vec(),
                },
            );
        }
        Ok(out)
    }

    pub fn load_system(&self) -> Result<RunningSystem> {
        let path = self.state_path();
        if !path.exists() {
            return Err(InputError(format!("no deployed system in {}; run `deploy` first", self.root.display())).into());
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).with_context(|| format!("corrupt state file {}", path.display()))
    }

    /// Persists the system together with its plan and model.
    pub fn save_system(&self, sys: &RunningSystem) -> Result<()> {
        fs::create_dir_all(self.state_dir())?;
        write_atomic(&self.state_path(), &serde_json::to_string(sys)?)?;
        write_atomic(&self.plan_path(), &serde_json::to_string_pretty(sys.plan())?)?;
        let model = calico::serialize(sys.model()).map_err(|e| anyhow!("cannot serialize model: {e}"))?;
        write_atomic(&self.model_path(), &model)
    }

    pub fn append_trace(&self, jsonl: &str) -> Result<()> {
        append(&self.trace_path(), jsonl)
    }

    /// Appends one dated section to the session report.
    pub fn append_section(&self, title: &str, body: &str) -> Result<()> {
        let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let mut text = format!("## {stamp} {title}\n\n{}", body.trim_end());
        text.push_str("\n\n");
        append(&self.report_path(), &text)
    }
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn append(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot replace {}", path.display()))
}
