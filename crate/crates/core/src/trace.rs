//! Run traces: an ordered event log in a line-oriented text format, a
//! terminal summary, a stable digest, and the stateless summary reducer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Visit,
    Init,
    Select,
    Deny,
    Follower,
    Declare,
    Enumerate,
    InjectConverge,
    InjectDiverge,
    QlistSet,
    QlistRemove,
    PhiSet,
    Want,
}

impl Kind {
    pub const ALL: [Kind; 13] = [
        Kind::Visit,
        Kind::Init,
        Kind::Select,
        Kind::Deny,
        Kind::Follower,
        Kind::Declare,
        Kind::Enumerate,
        Kind::InjectConverge,
        Kind::InjectDiverge,
        Kind::QlistSet,
        Kind::QlistRemove,
        Kind::PhiSet,
        Kind::Want,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Visit => "visit",
            Kind::Init => "init",
            Kind::Select => "select",
            Kind::Deny => "deny",
            Kind::Follower => "follower",
            Kind::Declare => "declare",
            Kind::Enumerate => "enumerate",
            Kind::InjectConverge => "inject-converge",
            Kind::InjectDiverge => "inject-diverge",
            Kind::QlistSet => "qlist-set",
            Kind::QlistRemove => "qlist-remove",
            Kind::PhiSet => "phi-set",
            Kind::Want => "want",
        }
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One event: `<id> stage <s> <kind> <subject> key=value ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub id: u64,
    pub stage: u64,
    pub kind: Kind,
    /// A node (`-` for the root), `N<e>`/`Q<e>`, or a functional `e:x`.
    pub subject: String,
    pub fields: Vec<(String, String)>,
}

impl Event {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|f| f.0 == key).map(|f| f.1.as_str())
    }

    pub fn num(&self, key: &str) -> Option<u64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    /// Comma-separated list field; `-` is the empty list.
    pub fn list(&self, key: &str) -> Vec<String> {
        match self.get(key) {
            None | Some("-") => Vec::new(),
            Some(v) => v.split(',').map(str::to_string).collect(),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage {} {} {}", self.id, self.stage, self.kind, self.subject)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Final per-subject state: follower and live use.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeSummary {
    pub follower: Option<u64>,
    pub use_: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Summary {
    pub a: BTreeSet<u64>,
    pub nodes: BTreeMap<String, NodeSummary>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunTrace {
    /// `meta` header pairs, in emission order.
    pub meta: Vec<(String, String)>,
    pub events: Vec<Event>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn opt(v: Option<u64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn join<T: fmt::Display>(xs: impl IntoIterator<Item = T>) -> String {
    let v: Vec<String> = xs.into_iter().map(|x| x.to_string()).collect();
    if v.is_empty() {
        "-".to_string()
    } else {
        v.join(",")
    }
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|m| m.0 == key).map(|m| m.1.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|m| m.0 == key) {
            Some(m) => m.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    /// Appends an event and returns its id.
    pub fn push(&mut self, stage: u64, kind: Kind, subject: impl ToString, fields: Vec<(&str, String)>) -> u64 {
        let id = self.events.len() as u64;
        self.events.push(Event {
            id,
            stage,
            kind,
            subject: subject.to_string(),
            fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
        id
    }

    pub fn event(&self, id: u64) -> Option<&Event> {
        self.events.binary_search_by_key(&id, |e| e.id).ok().map(|i| &self.events[i])
    }

    pub fn of_kind(&self, kind: Kind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_string().as_bytes()))
    }

    /// Checks ids strictly increasing and enumerated elements fresh.
    pub fn check_well_formed(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for w in self.events.windows(2) {
            if w[1].id <= w[0].id {
                return Err(format!("event id {} not increasing", w[1].id));
            }
            if w[1].stage < w[0].stage {
                return Err(format!("event {} goes back in stage", w[1].id));
            }
        }
        for e in self.of_kind(Kind::Enumerate) {
            let el = e.num("elem").ok_or_else(|| format!("event {} lacks elem", e.id))?;
            if !seen.insert(el) {
                return Err(format!("event {} re-enumerates {el}", e.id));
            }
        }
        Ok(())
    }
}

/// Replays events without construction state: `follower` sets the follower,
/// `declare` sets the live use, `enumerate` drops the enumerator's use and
/// adds the element to A, `init` clears both.
pub fn reduce(events: &[Event]) -> Summary {
    let mut s = Summary::default();
    for e in events {
        match e.kind {
            Kind::Follower => {
                s.nodes.entry(e.subject.clone()).or_default().follower = e.num("y");
            }
            Kind::Declare => {
                s.nodes.entry(e.subject.clone()).or_default().use_ = e.num("use");
            }
            Kind::Enumerate => {
                if let Some(el) = e.num("elem") {
                    s.a.insert(el);
                }
                s.nodes.entry(e.subject.clone()).or_default().use_ = None;
            }
            Kind::Init => {
                s.nodes.remove(&e.subject);
            }
            _ => {}
        }
    }
    s.nodes.retain(|_, n| n.follower.is_some() || n.use_.is_some());
    s
}

impl fmt::Display for RunTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# injury-lab trace v1")?;
        for (k, v) in &self.meta {
            writeln!(f, "meta {k}={v}")?;
        }
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        writeln!(f, "summary A={}", join(&self.summary.a))?;
        for (n, st) in &self.summary.nodes {
            writeln!(f, "summary node {n} follower={} use={}", opt(st.follower), opt(st.use_))?;
        }
        Ok(())
    }
}

fn parse_opt(v: &str) -> Result<Option<u64>, String> {
    if v == "-" {
        Ok(None)
    } else {
        v.parse().map(Some).map_err(|_| format!("bad number `{v}`"))
    }
}

fn kv(tok: &str) -> Result<(&str, &str), String> {
    tok.split_once('=').ok_or_else(|| format!("expected key=value, got `{tok}`"))
}

fn parse_line(t: &mut RunTrace, line: &str) -> Result<(), String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    match toks.first().copied() {
        None => Ok(()),
        Some(w) if w.starts_with('#') => Ok(()),
        Some("meta") => {
            for tok in &toks[1..] {
                let (k, v) = kv(tok)?;
                t.meta.push((k.to_string(), v.to_string()));
            }
            Ok(())
        }
        Some("summary") => match toks.get(1).copied() {
            Some(a) if a.starts_with("A=") => {
                let v = &a[2..];
                if v != "-" {
                    for x in v.split(',') {
                        t.summary.a.insert(x.parse().map_err(|_| format!("bad element `{x}`"))?);
                    }
                }
                Ok(())
            }
            Some("node") => {
                let name = toks.get(2).ok_or("summary node needs a name")?;
                let mut st = NodeSummary::default();
                for tok in &toks[3..] {
                    match kv(tok)? {
                        ("follower", v) => st.follower = parse_opt(v)?,
                        ("use", v) => st.use_ = parse_opt(v)?,
                        (k, _) => return Err(format!("unknown summary key `{k}`")),
                    }
                }
                t.summary.nodes.insert(name.to_string(), st);
                Ok(())
            }
            _ => Err("malformed summary line".into()),
        },
        Some(id) => {
            if toks.len() < 5 || toks[1] != "stage" {
                return Err("expected `<id> stage <s> <kind> <subject> ...`".into());
            }
            let fields = toks[5..]
                .iter()
                .map(|tok| kv(tok).map(|(k, v)| (k.to_string(), v.to_string())))
                .collect::<Result<_, _>>()?;
            t.events.push(Event {
                id: id.parse().map_err(|_| format!("bad id `{id}`"))?,
                stage: toks[2].parse().map_err(|_| format!("bad stage `{}`", toks[2]))?,
                kind: toks[3].parse()?,
                subject: toks[4].to_string(),
                fields,
            });
            Ok(())
        }
    }
}

impl FromStr for RunTrace {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut t = RunTrace::new();
        for (i, line) in s.lines().enumerate() {
            parse_line(&mut t, line).map_err(|msg| TraceError::Parse { line: i + 1, msg })?;
        }
        Ok(t)
    }
}
