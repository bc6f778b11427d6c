//! Campaign persistence: `campaign.json`, an append-only `events.jsonl` and
//! a periodic `snapshot.json` of the replayed state.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::campaign::CampaignDefinition;
use super::state::{CampaignState, Event};
use super::ServiceError;

pub const DEFINITION_FILE: &str = "campaign.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

pub struct EventLog {
    dir: Option<PathBuf>,
    file: Option<File>,
    events: Vec<Event>,
    snapshot_every: u64,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            dir: None,
            file: None,
            events: Vec::new(),
            snapshot_every: 0,
        }
    }

    /// Creates the campaign directory and writes its definition.
    pub fn create(dir: &Path, def: &CampaignDefinition, snapshot_every: u64) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir)?;
        let def_path = dir.join(DEFINITION_FILE);
        if def_path.exists() {
            return Err(ServiceError::Storage(format!("{} already exists", def_path.display())));
        }
        write_atomic(&def_path, &serde_json::to_vec_pretty(def).expect("definition serializes"))?;
        let file = OpenOptions::new().create(true).append(true).open(dir.join(EVENTS_FILE))?;
        Ok(EventLog {
            dir: Some(dir.to_path_buf()),
            file: Some(file),
            events: Vec::new(),
            snapshot_every,
        })
    }

    /// Loads a campaign: snapshot if present, then the events after it. A
    /// torn final line left by a crash is dropped.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<(CampaignDefinition, CampaignState, Self), ServiceError> {
        let def: CampaignDefinition = serde_json::from_slice(&fs::read(dir.join(DEFINITION_FILE))?)
            .map_err(|e| ServiceError::Storage(format!("{}: {e}", dir.join(DEFINITION_FILE).display())))?;
        let mut state = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| ServiceError::Storage(format!("{}: {e}", dir.join(SNAPSHOT_FILE).display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => CampaignState::default(),
            Err(e) => return Err(e.into()),
        };
        let events_path = dir.join(EVENTS_FILE);
        let (events, torn) = read_events_checked(&events_path)?;
        if torn {
            let mut bytes = Vec::new();
            for e in &events {
                bytes.extend(serde_json::to_vec(e).expect("event serializes"));
                bytes.push(b'\n');
            }
            write_atomic(&events_path, &bytes)?;
        }
        let from = state.seq;
        for e in events.iter().filter(|e| e.seq > from) {
            state.apply(e);
        }
        let file = OpenOptions::new().create(true).append(true).open(&events_path)?;
        Ok((
            def,
            state,
            EventLog {
                dir: Some(dir.to_path_buf()),
                file: Some(file),
                events,
                snapshot_every,
            },
        ))
    }

    pub fn append(&mut self, event: Event) -> Result<(), ServiceError> {
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&event).expect("event serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.events.push(event);
        Ok(())
    }

    /// Writes a snapshot when the sequence number hits the snapshot period.
    pub fn maybe_snapshot(&mut self, state: &CampaignState) -> Result<(), ServiceError> {
        match &self.dir {
            Some(dir) if self.snapshot_every > 0 && state.seq.is_multiple_of(self.snapshot_every) => {
                if let Some(f) = self.file.as_mut() {
                    f.sync_data()?;
                }
                write_atomic(
                    &dir.join(SNAPSHOT_FILE),
                    &serde_json::to_vec(state).expect("state serializes"),
                )
            }
            _ => Ok(()),
        }
    }

    /// Events appended or loaded through this log.
    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, ServiceError> {
    Ok(read_events_checked(path)?.0)
}

fn read_events_checked(path: &Path) -> Result<(Vec<Event>, bool), ServiceError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), false)),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut events = Vec::with_capacity(lines.len());
    let mut torn = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Event>(line) {
            Ok(e) => events.push(e),
            Err(e) if i + 1 == lines.len() => {
                tracing::warn!(path = %path.display(), error = %e, "dropping torn final event");
                torn = true;
            }
            Err(e) => {
                return Err(ServiceError::Storage(format!("{} line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok((events, torn))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
