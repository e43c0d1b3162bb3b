//! Gazetteer-backed resolution of the U.S. state an article is about.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::event_signals::UNKNOWN_STATE;

/// Postal codes of the 50 states and DC.
pub const STATE_CODES: [&str; 51] = [
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DC", "DE", "FL", "GA", "HI", "IA", "ID", "IL", "IN", "KS", "KY", "LA",
    "MA", "MD", "ME", "MI", "MN", "MO", "MS", "MT", "NC", "ND", "NE", "NH", "NJ", "NM", "NV", "NY", "OH", "OK", "OR",
    "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA", "WI", "WV", "WY",
];

pub const PRIORITY_INSTITUTE: u8 = 1;
pub const PRIORITY_CITY: u8 = 2;
pub const PRIORITY_STATE_NAME: u8 = 3;

pub fn is_state_code(code: &str) -> bool {
    STATE_CODES.binary_search(&code).is_ok()
}

/// Lowercases and splits on anything that is not a letter or digit,
/// rejoining tokens with single spaces.
pub fn normalize(text: &str) -> String {
    tokens(text).join(" ")
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub state: String,
    pub priority: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, GazetteerEntry>,
    max_tokens: usize,
}

impl Gazetteer {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&GazetteerEntry> {
        self.entries.get(&normalize(name))
    }

    /// Adds an entry; an existing name is replaced only by a higher priority.
    pub fn insert(&mut self, name: &str, state: &str, priority: u8) -> Result<()> {
        let norm = normalize(name);
        if norm.is_empty() {
            return Err(Error::invalid("empty place name"));
        }
        if !is_state_code(state) {
            return Err(Error::invalid(format!("unknown state code {state:?}")));
        }
        if !(PRIORITY_INSTITUTE..=PRIORITY_STATE_NAME).contains(&priority) {
            return Err(Error::invalid(format!("priority {priority} not in 1..=3")));
        }
        let entry = GazetteerEntry { name: norm.clone(), state: state.to_string(), priority };
        self.max_tokens = self.max_tokens.max(norm.split(' ').count());
        match self.entries.get(&norm) {
            Some(old) if old.priority >= priority => {}
            _ => {
                self.entries.insert(norm, entry);
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &GazetteerEntry> {
        self.entries.values()
    }
}

/// Reads `name<TAB>state<TAB>priority` rows. Lines starting with `#` and
/// blank lines are skipped. Malformed rows are returned with their line
/// numbers; zero valid rows is an error.
pub fn load_gazetteer<R: BufRead>(reader: R) -> Result<(Gazetteer, Vec<RejectedRow>)> {
    let mut gaz = Gazetteer::default();
    let mut rejected = Vec::new();
    let mut valid = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<gazetteer>", e))?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let outcome = if fields.len() != 3 {
            Err(Error::invalid(format!("expected 3 tab-separated fields, found {}", fields.len())))
        } else {
            fields[2]
                .trim()
                .parse::<u8>()
                .map_err(|_| Error::invalid(format!("bad priority {:?}", fields[2])))
                .and_then(|p| gaz.insert(fields[0], fields[1].trim(), p))
        };
        match outcome {
            Ok(()) => valid += 1,
            Err(e) => {
                let reason = match e {
                    Error::InvalidArgument(m) => m,
                    other => other.to_string(),
                };
                log::warn!("gazetteer line {lineno}: {reason}");
                rejected.push(RejectedRow { line: lineno, reason });
            }
        }
    }
    if valid == 0 {
        return Err(Error::parse("gazetteer", "no valid rows"));
    }
    Ok((gaz, rejected))
}

pub fn load_gazetteer_path(path: &Path) -> Result<(Gazetteer, Vec<RejectedRow>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_gazetteer(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    /// State code, or `UNKNOWN`.
    pub state: String,
    pub matched_name: Option<String>,
    /// Share of matched mentions pointing to the chosen state.
    pub score: f64,
}

impl Resolution {
    fn unknown() -> Self {
        Self { state: UNKNOWN_STATE.to_string(), matched_name: None, score: 0.0 }
    }
}

/// Finds gazetteer names as whole-token sequences, taking the longest
/// match at each position without overlaps, then picks the mention with
/// the highest priority, then the longest name, then the earliest position.
pub fn resolve_state(text: &str, gazetteer: &Gazetteer) -> Resolution {
    let toks = tokens(text);
    let mut mentions: Vec<(usize, &GazetteerEntry)> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let longest = (1..=gazetteer.max_tokens.min(toks.len() - i))
            .rev()
            .find_map(|len| gazetteer.entries.get(&toks[i..i + len].join(" ")).map(|e| (len, e)));
        match longest {
            Some((len, entry)) => {
                mentions.push((i, entry));
                i += len;
            }
            None => i += 1,
        }
    }
    let Some(&(_, best)) = mentions
        .iter()
        .min_by(|(pa, a), (pb, b)| b.priority.cmp(&a.priority).then(b.name.len().cmp(&a.name.len())).then(pa.cmp(pb)))
    else {
        return Resolution::unknown();
    };
    let agreeing = mentions.iter().filter(|(_, e)| e.state == best.state).count();
    Resolution {
        state: best.state.clone(),
        matched_name: Some(best.name.clone()),
        score: agreeing as f64 / mentions.len() as f64,
    }
}
