//! Line-oriented scenario files and the run/verify orchestration on top of
//! them.
//!
//! ```text
//! construction nonlow-low2          # or nonlow-alpha, low-alpha
//! alpha w^w
//! stages 10000
//! seed 7
//! levels 4
//! adv p0 mode random seed 3 flip 0.05 stabilize 2000
//! adv p1 psi arg * stage 0 value 0
//! adv f0 mode bounded-random seed 1 bound w change 0.05 stabilize 900
//! adv f1 fca bound 3
//! adv f1 fca arg 0 stage 1 value 1 marker 2
//! psi 0 p0
//! f 0 f0
//! fun 0 family first 1 stride 20 delay 1 policy low:1
//! fun 1 arg 0 first 3 delay 2 policy fresh use 5
//! restrict 1 0,1,2
//! verify diagonalization off
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::approx::{BoundedCaAdversary, DeltaTwoAdversary, FcaMode, PsiMode};
use crate::bounds::Layout;
use crate::functional::{ArgSchedule, FunctionalSpec, UsePolicy};
use crate::low_alpha::{self, LowAlphaSetup};
use crate::ordinal::CnfOrdinal;
use crate::trace::RunTrace;
use crate::tree_construction::{self, ConfigError, TreeSetup};
use crate::verify::{self, check_names, Options, Report, VerifyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Construction {
    NonlowLow2,
    NonlowAlpha,
    LowAlpha,
}

impl Construction {
    pub fn as_str(self) -> &'static str {
        match self {
            Construction::NonlowLow2 => "nonlow-low2",
            Construction::NonlowAlpha => "nonlow-alpha",
            Construction::LowAlpha => "low-alpha",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Construction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nonlow-low2" => Ok(Construction::NonlowLow2),
            "nonlow-alpha" => Ok(Construction::NonlowAlpha),
            "low-alpha" => Ok(Construction::LowAlpha),
            _ => Err(format!("unknown construction `{s}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub enum AdversaryDecl {
    Psi(DeltaTwoAdversary),
    Fca(BoundedCaAdversary),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub construction: Construction,
    pub alpha: Option<CnfOrdinal>,
    pub stages: u64,
    pub seed: u64,
    /// `None` derives the depth from the attached adversaries.
    pub levels: Option<usize>,
    pub adversaries: BTreeMap<String, AdversaryDecl>,
    /// Adversary ids attached to P-levels (ψ) and Q-levels (f), by index.
    pub psi: BTreeMap<usize, String>,
    pub fca: BTreeMap<usize, String>,
    pub functionals: BTreeMap<u64, FunctionalSpec>,
    pub restrict: BTreeMap<u64, Vec<u64>>,
    pub toggles: BTreeMap<String, bool>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            construction: Construction::NonlowLow2,
            alpha: None,
            stages: 100,
            seed: 0,
            levels: None,
            adversaries: BTreeMap::new(),
            psi: BTreeMap::new(),
            fca: BTreeMap::new(),
            functionals: BTreeMap::new(),
            restrict: BTreeMap::new(),
            toggles: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: undeclared adversary `{id}`")]
    UnknownAdversary { line: usize, id: String },
    #[error("line {line}: adversary `{id}` is not a {expected} adversary")]
    WrongKind { line: usize, id: String, expected: &'static str },
    #[error("line {line}: invalid CNF `{text}`")]
    BadCnf { line: usize, text: String },
    #[error("line {line}: unknown check `{name}`")]
    UnknownCheck { line: usize, name: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

struct Line<'a> {
    no: usize,
    words: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn err(&self, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Parse { line: self.no, msg: msg.into() }
    }

    fn word(&self, i: usize) -> Result<&'a str, ScenarioError> {
        self.words.get(i).copied().ok_or_else(|| self.err(format!("missing field {}", i + 1)))
    }

    fn num<T: FromStr>(&self, i: usize) -> Result<T, ScenarioError> {
        let w = self.word(i)?;
        w.parse().map_err(|_| self.err(format!("bad number `{w}`")))
    }

    fn cnf(&self, text: &str) -> Result<CnfOrdinal, ScenarioError> {
        text.parse().map_err(|_| ScenarioError::BadCnf { line: self.no, text: text.into() })
    }

    /// `key value` pairs from field `from` on.
    fn pairs(&self, from: usize) -> Result<BTreeMap<&'a str, &'a str>, ScenarioError> {
        let rest = self.words.get(from..).unwrap_or(&[]);
        if rest.len() % 2 != 0 {
            return Err(self.err("expected key/value pairs"));
        }
        Ok(rest.chunks(2).map(|c| (c[0], c[1])).collect())
    }

    fn key<T: FromStr>(&self, kv: &BTreeMap<&str, &str>, key: &str) -> Result<T, ScenarioError> {
        let v = kv.get(key).ok_or_else(|| self.err(format!("missing `{key}`")))?;
        v.parse().map_err(|_| self.err(format!("bad value `{v}` for `{key}`")))
    }
}

/// Parses and validates a scenario file.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut attachments: Vec<(usize, bool, usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = content.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let l = Line { no: i + 1, words };
        match l.words[0] {
            "construction" => sc.construction = l.word(1)?.parse().map_err(|m: String| l.err(m))?,
            "alpha" => sc.alpha = Some(l.cnf(l.word(1)?)?),
            "stages" => sc.stages = l.num(1)?,
            "seed" => sc.seed = l.num(1)?,
            "levels" => sc.levels = Some(l.num(1)?),
            "adv" => adversary_line(&mut sc, &l)?,
            "psi" | "f" => attachments.push((l.no, l.words[0] == "psi", l.num(1)?, l.word(2)?.to_string())),
            "fun" => functional_line(&mut sc, &l)?,
            "restrict" => {
                let e = l.num(1)?;
                let xs: Result<Vec<u64>, _> = l.word(2)?.split(',').map(str::parse).collect();
                sc.restrict.insert(e, xs.map_err(|_| l.err("bad argument list"))?);
            }
            "verify" => {
                let name = l.word(1)?;
                if !check_names().contains(&name) {
                    return Err(ScenarioError::UnknownCheck { line: l.no, name: name.into() });
                }
                let on = match l.word(2)? {
                    "on" => true,
                    "off" => false,
                    w => return Err(l.err(format!("expected on|off, got `{w}`"))),
                };
                sc.toggles.insert(name.into(), on);
            }
            w => return Err(l.err(format!("unknown directive `{w}`"))),
        }
    }
    for (line, is_psi, e, id) in attachments {
        let expected = if is_psi { "psi" } else { "fca" };
        match sc.adversaries.get(&id) {
            None => return Err(ScenarioError::UnknownAdversary { line, id }),
            Some(AdversaryDecl::Psi(_)) if is_psi => {
                sc.psi.insert(e, id);
            }
            Some(AdversaryDecl::Fca(_)) if !is_psi => {
                sc.fca.insert(e, id);
            }
            Some(_) => return Err(ScenarioError::WrongKind { line, id, expected }),
        }
    }
    Ok(sc)
}

fn adversary_line(sc: &mut Scenario, l: &Line) -> Result<(), ScenarioError> {
    let id = l.word(1)?.to_string();
    match l.word(2)? {
        "mode" => {
            let kv = l.pairs(4)?;
            let decl = match l.word(3)? {
                "alternating" => AdversaryDecl::Psi(DeltaTwoAdversary::new(
                    id.clone(),
                    PsiMode::Alternating { period: l.key(&kv, "period")? },
                )),
                "stabilizing" => AdversaryDecl::Psi(DeltaTwoAdversary::new(
                    id.clone(),
                    PsiMode::Stabilizing { value: l.key(&kv, "value")?, at: l.key(&kv, "at")? },
                )),
                "random" => AdversaryDecl::Psi(DeltaTwoAdversary::new(
                    id.clone(),
                    PsiMode::Random {
                        seed: l.key(&kv, "seed")?,
                        flip: l.key(&kv, "flip")?,
                        stabilize: l.key(&kv, "stabilize")?,
                    },
                )),
                "bounded-random" => {
                    let bound = l.cnf(kv.get("bound").ok_or_else(|| l.err("missing `bound`"))?)?;
                    let mode = FcaMode::Random {
                        seed: l.key(&kv, "seed")?,
                        change: l.key(&kv, "change")?,
                        stabilize: l.key(&kv, "stabilize")?,
                    };
                    AdversaryDecl::Fca(BoundedCaAdversary::new(id.clone(), bound, mode))
                }
                m => return Err(l.err(format!("unknown adversary mode `{m}`"))),
            };
            sc.adversaries.insert(id, decl);
        }
        "psi" => {
            let decl = sc
                .adversaries
                .entry(id.clone())
                .or_insert_with(|| AdversaryDecl::Psi(DeltaTwoAdversary::new(id.clone(), PsiMode::Scripted)));
            let AdversaryDecl::Psi(a) = decl else {
                return Err(ScenarioError::WrongKind { line: l.no, id, expected: "psi" });
            };
            if l.words.len() > 3 {
                let kv = l.pairs(3)?;
                let arg = match *kv.get("arg").ok_or_else(|| l.err("missing `arg`"))? {
                    "*" => None,
                    _ => Some(l.key(&kv, "arg")?),
                };
                let value: u8 = l.key(&kv, "value")?;
                if value > 1 {
                    return Err(l.err("psi values are 0 or 1"));
                }
                a.script_point(arg, l.key(&kv, "stage")?, value);
            }
        }
        "fca" => {
            let kv = l.pairs(3)?;
            if let Some(b) = kv.get("bound") {
                let bound = l.cnf(b)?;
                sc.adversaries
                    .insert(id.clone(), AdversaryDecl::Fca(BoundedCaAdversary::new(id.clone(), bound, FcaMode::Scripted)));
            }
            if kv.contains_key("arg") {
                let Some(AdversaryDecl::Fca(a)) = sc.adversaries.get_mut(&id) else {
                    return match sc.adversaries.get(&id) {
                        None => Err(ScenarioError::UnknownAdversary { line: l.no, id }),
                        Some(_) => Err(ScenarioError::WrongKind { line: l.no, id, expected: "fca" }),
                    };
                };
                let value: u8 = l.key(&kv, "value")?;
                if value > 1 {
                    return Err(l.err("f values are 0 or 1"));
                }
                let marker = l.cnf(kv.get("marker").ok_or_else(|| l.err("missing `marker`"))?)?;
                a.script_point(l.key(&kv, "arg")?, l.key(&kv, "stage")?, value, marker);
            }
        }
        k => return Err(l.err(format!("unknown adversary kind `{k}`"))),
    }
    Ok(())
}

fn functional_line(sc: &mut Scenario, l: &Line) -> Result<(), ScenarioError> {
    let e: u64 = l.num(1)?;
    let family = l.word(2)? == "family";
    let kv = l.pairs(if family { 3 } else { 2 })?;
    let first = match kv.get("first") {
        Some(&"never") => None,
        _ => Some(l.key(&kv, "first")?),
    };
    let policy: UsePolicy = kv
        .get("policy")
        .ok_or_else(|| l.err("missing `policy`"))?
        .parse()
        .map_err(|m: String| l.err(m))?;
    let initial_use = match kv.get("use") {
        Some(_) => Some(l.key(&kv, "use")?),
        None => None,
    };
    let sched = ArgSchedule { first, delay: l.key(&kv, "delay")?, policy, initial_use };
    let spec = sc.functionals.entry(e).or_insert_with(|| FunctionalSpec::new(e));
    if family {
        spec.family = Some((sched, l.key(&kv, "stride")?));
    } else {
        spec.per_arg.insert(l.key(&kv, "arg")?, sched);
    }
    Ok(())
}

impl Scenario {
    fn layout(&self) -> Option<Layout> {
        match self.construction {
            Construction::NonlowLow2 => Some(Layout::Low2),
            Construction::NonlowAlpha => Some(Layout::Alpha),
            Construction::LowAlpha => None,
        }
    }

    fn levels(&self) -> usize {
        if let Some(l) = self.levels {
            return l;
        }
        let count = |m: &BTreeMap<usize, String>| m.keys().next_back().map_or(0, |k| k + 1);
        match self.construction {
            Construction::NonlowLow2 => 2 * count(&self.psi),
            Construction::NonlowAlpha => 3 * count(&self.psi).min(count(&self.fca)),
            Construction::LowAlpha => count(&self.fca),
        }
    }

    /// Attached adversaries by index, stopping at the first gap.
    fn attached<T>(&self, map: &BTreeMap<usize, String>, pick: impl Fn(&AdversaryDecl) -> Option<T>) -> Vec<T> {
        (0..)
            .map_while(|i| map.get(&i).and_then(|id| self.adversaries.get(id)).and_then(&pick))
            .collect()
    }

    /// Runs the scenario with the given seed.
    pub fn run(&self, seed: u64) -> Result<RunTrace, ConfigError> {
        let psi = self.attached(&self.psi, |d| match d {
            AdversaryDecl::Psi(a) => Some(a.clone()),
            _ => None,
        });
        let fca = self.attached(&self.fca, |d| match d {
            AdversaryDecl::Fca(a) => Some(a.clone()),
            _ => None,
        });
        let functionals: Vec<FunctionalSpec> = self.functionals.values().cloned().collect();
        match self.layout() {
            Some(layout) => tree_construction::run(TreeSetup {
                layout,
                levels: self.levels(),
                stages: self.stages,
                seed,
                alpha: self.alpha.clone(),
                psi,
                fca,
                functionals,
                restrict: self.restrict.clone(),
            }),
            None => low_alpha::run(LowAlphaSetup {
                levels: self.levels(),
                stages: self.stages,
                seed,
                alpha: self.alpha.clone().unwrap_or_else(CnfOrdinal::omega),
                fca,
                functionals,
            }),
        }
    }

    /// Verifies a trace of this scenario, dropping the checks toggled off.
    pub fn verify(&self, trace: &RunTrace, opts: &Options) -> Result<Report, VerifyError> {
        let mut report = verify::verify(trace, opts)?;
        report.retain_checks(|name| self.toggles.get(name).copied().unwrap_or(true));
        Ok(report)
    }
}
