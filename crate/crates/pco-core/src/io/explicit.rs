//! PRISM explicit-format interchange (.tra / .sta / .lab / .srew / .trew)
//! plus a JSON model dump.
//!
//! Export is deterministic: the same model always yields byte-identical
//! files.  Probabilities and rewards are printed as the shortest decimal
//! that parses back to the identical `f64`, so a round trip through
//! [`export_explicit`] and [`parse_explicit`] is bit-exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::dtmc::{DtmcError, RewardStructure, SparseDtmc};

/// In-memory contents of one exported model: one string per file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportBundle {
    /// Transition list (`.tra`).
    pub tra: String,
    /// State names (`.sta`).
    pub sta: String,
    /// Label declarations and assignments (`.lab`).
    pub lab: String,
    /// State rewards (`.srew`), present when rewards were exported.
    pub srew: Option<String>,
    /// Transition rewards (`.trew`), present when rewards were exported.
    pub trew: Option<String>,
}

impl ExportBundle {
    /// Writes the bundle next to `stem`, appending the usual extensions.
    /// Returns the paths written.
    pub fn write_to(&self, stem: impl AsRef<Path>) -> io::Result<Vec<PathBuf>> {
        let stem = stem.as_ref();
        let with_ext = |ext: &str| -> PathBuf {
            let mut os = stem.as_os_str().to_owned();
            os.push(".");
            os.push(ext);
            PathBuf::from(os)
        };
        let mut written = Vec::new();
        for (ext, content) in [("tra", Some(&self.tra)), ("sta", Some(&self.sta)), ("lab", Some(&self.lab)), ("srew", self.srew.as_ref()), ("trew", self.trew.as_ref())] {
            if let Some(content) = content {
                let path = with_ext(ext);
                fs::write(&path, content)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// Reads a bundle previously written with [`ExportBundle::write_to`].
    /// The reward files are optional on disk.
    pub fn read_from(stem: impl AsRef<Path>) -> io::Result<Self> {
        let stem = stem.as_ref();
        let with_ext = |ext: &str| -> PathBuf {
            let mut os = stem.as_os_str().to_owned();
            os.push(".");
            os.push(ext);
            PathBuf::from(os)
        };
        let optional = |ext: &str| -> io::Result<Option<String>> {
            let path = with_ext(ext);
            if path.exists() {
                fs::read_to_string(path).map(Some)
            } else {
                Ok(None)
            }
        };
        Ok(ExportBundle {
            tra: fs::read_to_string(with_ext("tra"))?,
            sta: fs::read_to_string(with_ext("sta"))?,
            lab: fs::read_to_string(with_ext("lab"))?,
            srew: optional("srew")?,
            trew: optional("trew")?,
        })
    }
}

/// A model reconstructed from explicit-format text.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitModel {
    pub dtmc: SparseDtmc,
    pub names: Vec<String>,
    pub rewards: Option<RewardStructure>,
}

/// Failure to parse explicit-format text.
#[derive(Debug, Error)]
pub enum ExplicitParseError {
    #[error("{file} line {line}: {message}")]
    Line {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] DtmcError),
    #[error("no state carries the \"init\" label")]
    MissingInit,
    #[error("transition reward on missing transition {0} -> {1}")]
    RewardOffTransition(usize, usize),
}

fn line_err(file: &'static str, line: usize, message: impl Into<String>) -> ExplicitParseError {
    ExplicitParseError::Line {
        file,
        line,
        message: message.into(),
    }
}

/// Serializes a model (and optionally its rewards) to explicit-format text.
///
/// `names` supplies one display name per state, in index order.
pub fn export_explicit(
    dtmc: &SparseDtmc,
    names: &[String],
    rewards: Option<&RewardStructure>,
) -> ExportBundle {
    assert_eq!(
        names.len(),
        dtmc.n(),
        "need exactly one name per state for export"
    );

    let mut tra = String::new();
    let _ = writeln!(tra, "{} {}", dtmc.n(), dtmc.transition_count());
    for src in 0..dtmc.n() {
        for &(dst, p) in dtmc.row(src) {
            let _ = writeln!(tra, "{src} {dst} {p}");
        }
    }

    let mut sta = String::new();
    for (idx, name) in names.iter().enumerate() {
        let _ = writeln!(sta, "{idx}:{name}");
    }

    let mut ids: Vec<&str> = vec!["init"];
    ids.extend(dtmc.labels().keys().map(String::as_str).filter(|l| *l != "init"));
    let mut lab = String::new();
    let decls: Vec<String> = ids
        .iter()
        .enumerate()
        .map(|(id, name)| format!("{id}=\"{name}\""))
        .collect();
    let _ = writeln!(lab, "{}", decls.join(" "));
    let mut per_state: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    per_state.insert(dtmc.initial(), vec![0]);
    for (id, name) in ids.iter().enumerate().skip(1) {
        if let Some(states) = dtmc.label_states(name) {
            for &s in states {
                per_state.entry(s).or_default().push(id);
            }
        }
    }
    for (state, mut label_ids) in per_state {
        label_ids.sort_unstable();
        let rendered: Vec<String> = label_ids.iter().map(|id| id.to_string()).collect();
        let _ = writeln!(lab, "{state}: {}", rendered.join(" "));
    }

    let (srew, trew) = match rewards {
        None => (None, None),
        Some(rewards) => {
            let nonzero_states: Vec<(usize, f64)> = rewards
                .state
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, r)| r != 0.0)
                .collect();
            let mut srew = String::new();
            let _ = writeln!(srew, "{} {}", dtmc.n(), nonzero_states.len());
            for (i, r) in nonzero_states {
                let _ = writeln!(srew, "{i} {r}");
            }

            let nonzero_trans: Vec<(usize, usize, f64)> = rewards
                .trans
                .iter()
                .filter(|&(_, &r)| r != 0.0)
                .map(|(&(i, j), &r)| (i, j, r))
                .collect();
            let mut trew = String::new();
            let _ = writeln!(trew, "{} {}", dtmc.n(), nonzero_trans.len());
            for (i, j, r) in nonzero_trans {
                let _ = writeln!(trew, "{i} {j} {r}");
            }
            (Some(srew), Some(trew))
        }
    };

    ExportBundle {
        tra,
        sta,
        lab,
        srew,
        trew,
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(idx, line)| (idx + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty())
}

fn parse_usize(file: &'static str, line: usize, token: &str, what: &str) -> Result<usize, ExplicitParseError> {
    token
        .parse()
        .map_err(|_| line_err(file, line, format!("invalid {what} `{token}`")))
}

fn parse_f64(file: &'static str, line: usize, token: &str, what: &str) -> Result<f64, ExplicitParseError> {
    token
        .parse()
        .map_err(|_| line_err(file, line, format!("invalid {what} `{token}`")))
}

/// State count plus the `(source, target, value)` triples of a `.tra` or
/// `.trew` file.
pub type CountedTriples = (usize, Vec<(usize, usize, f64)>);

/// Parses `.tra` text into the state count and the transition triples.
pub fn parse_tra(text: &str) -> Result<CountedTriples, ExplicitParseError> {
    const FILE: &str = ".tra";
    let mut lines = content_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| line_err(FILE, 1, "missing `n m` header"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 2 {
        return Err(line_err(FILE, line, "header must be `n m`"));
    }
    let n = parse_usize(FILE, line, tokens[0], "state count")?;
    let m = parse_usize(FILE, line, tokens[1], "transition count")?;

    let mut transitions = Vec::with_capacity(m);
    for (line, text) in lines {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(line_err(FILE, line, "expected `src dst prob`"));
        }
        let src = parse_usize(FILE, line, tokens[0], "source state")?;
        let dst = parse_usize(FILE, line, tokens[1], "target state")?;
        let p = parse_f64(FILE, line, tokens[2], "probability")?;
        if src >= n {
            return Err(line_err(FILE, line, format!("source {src} out of range (n = {n})")));
        }
        transitions.push((src, dst, p));
    }
    if transitions.len() != m {
        return Err(line_err(
            FILE,
            1,
            format!("header promises {m} transitions, found {}", transitions.len()),
        ));
    }
    Ok((n, transitions))
}

/// Parses `.sta` text into state names indexed 0..n.
pub fn parse_sta(text: &str) -> Result<Vec<String>, ExplicitParseError> {
    const FILE: &str = ".sta";
    let mut entries: Vec<(usize, String, usize)> = Vec::new();
    for (line, text) in content_lines(text) {
        let (idx, name) = text
            .split_once(':')
            .ok_or_else(|| line_err(FILE, line, "expected `index:name`"))?;
        let idx = parse_usize(FILE, line, idx.trim(), "state index")?;
        entries.push((idx, name.trim().to_string(), line));
    }
    entries.sort_by_key(|&(idx, _, _)| idx);
    let mut names = Vec::with_capacity(entries.len());
    for (pos, (idx, name, line)) in entries.into_iter().enumerate() {
        if idx != pos {
            let message = if idx < pos {
                format!("duplicate state index {idx}")
            } else {
                format!("missing state index {pos}")
            };
            return Err(line_err(FILE, line, message));
        }
        names.push(name);
    }
    Ok(names)
}

/// Parses `.lab` text into the initial state (from the `init` label) and the
/// remaining label map.
#[allow(clippy::type_complexity)]
pub fn parse_lab(
    text: &str,
) -> Result<(Option<usize>, BTreeMap<String, BTreeSet<usize>>), ExplicitParseError> {
    const FILE: &str = ".lab";
    let mut lines = content_lines(text);
    let (decl_line, decls) = lines
        .next()
        .ok_or_else(|| line_err(FILE, 1, "missing label declarations"))?;
    let mut id_to_name: BTreeMap<usize, String> = BTreeMap::new();
    for token in decls.split_whitespace() {
        let (id, name) = token
            .split_once('=')
            .ok_or_else(|| line_err(FILE, decl_line, format!("expected `id=\"name\"`, got `{token}`")))?;
        let id = parse_usize(FILE, decl_line, id, "label id")?;
        let name = name
            .strip_prefix('"')
            .and_then(|n| n.strip_suffix('"'))
            .ok_or_else(|| line_err(FILE, decl_line, format!("label name must be quoted in `{token}`")))?;
        if id_to_name.insert(id, name.to_string()).is_some() {
            return Err(line_err(FILE, decl_line, format!("duplicate label id {id}")));
        }
    }

    let mut initial = None;
    let mut labels: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (line, text) in lines {
        let (state, ids) = text
            .split_once(':')
            .ok_or_else(|| line_err(FILE, line, "expected `state: id id ...`"))?;
        let state = parse_usize(FILE, line, state.trim(), "state index")?;
        for id in ids.split_whitespace() {
            let id = parse_usize(FILE, line, id, "label id")?;
            let name = id_to_name
                .get(&id)
                .ok_or_else(|| line_err(FILE, line, format!("undeclared label id {id}")))?;
            if name == "init" {
                if initial.replace(state).is_some() {
                    return Err(line_err(FILE, line, "multiple states carry the \"init\" label"));
                }
            } else {
                labels.entry(name.clone()).or_default().insert(state);
            }
        }
    }
    Ok((initial, labels))
}

/// Parses `.srew` text into (state, reward) pairs.
pub fn parse_srew(text: &str) -> Result<(usize, Vec<(usize, f64)>), ExplicitParseError> {
    const FILE: &str = ".srew";
    let mut lines = content_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| line_err(FILE, 1, "missing `n k` header"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 2 {
        return Err(line_err(FILE, line, "header must be `n k`"));
    }
    let n = parse_usize(FILE, line, tokens[0], "state count")?;
    let k = parse_usize(FILE, line, tokens[1], "entry count")?;
    let mut entries = Vec::with_capacity(k);
    for (line, text) in lines {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(line_err(FILE, line, "expected `state reward`"));
        }
        let state = parse_usize(FILE, line, tokens[0], "state index")?;
        let reward = parse_f64(FILE, line, tokens[1], "reward")?;
        if state >= n {
            return Err(line_err(FILE, line, format!("state {state} out of range (n = {n})")));
        }
        entries.push((state, reward));
    }
    if entries.len() != k {
        return Err(line_err(
            FILE,
            1,
            format!("header promises {k} entries, found {}", entries.len()),
        ));
    }
    Ok((n, entries))
}

/// Parses `.trew` text into (source, target, reward) triples.
pub fn parse_trew(text: &str) -> Result<CountedTriples, ExplicitParseError> {
    const FILE: &str = ".trew";
    let mut lines = content_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| line_err(FILE, 1, "missing `n k` header"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 2 {
        return Err(line_err(FILE, line, "header must be `n k`"));
    }
    let n = parse_usize(FILE, line, tokens[0], "state count")?;
    let k = parse_usize(FILE, line, tokens[1], "entry count")?;
    let mut entries = Vec::with_capacity(k);
    for (line, text) in lines {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(line_err(FILE, line, "expected `src dst reward`"));
        }
        let src = parse_usize(FILE, line, tokens[0], "source state")?;
        let dst = parse_usize(FILE, line, tokens[1], "target state")?;
        let reward = parse_f64(FILE, line, tokens[2], "reward")?;
        if src >= n || dst >= n {
            return Err(line_err(FILE, line, format!("transition {src} -> {dst} out of range (n = {n})")));
        }
        entries.push((src, dst, reward));
    }
    if entries.len() != k {
        return Err(line_err(
            FILE,
            1,
            format!("header promises {k} entries, found {}", entries.len()),
        ));
    }
    Ok((n, entries))
}

/// Reassembles a model from exported explicit-format text.
pub fn parse_explicit(bundle: &ExportBundle) -> Result<ExplicitModel, ExplicitParseError> {
    let (n, transitions) = parse_tra(&bundle.tra)?;
    let names = parse_sta(&bundle.sta)?;
    if names.len() != n {
        return Err(line_err(
            ".sta",
            1,
            format!("expected {n} states, found {}", names.len()),
        ));
    }
    let (initial, labels) = parse_lab(&bundle.lab)?;
    let initial = initial.ok_or(ExplicitParseError::MissingInit)?;

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (src, dst, p) in transitions {
        rows[src].push((dst, p));
    }
    let dtmc = SparseDtmc::try_from_rows(initial, rows, labels)?;

    let rewards = match (&bundle.srew, &bundle.trew) {
        (None, None) => None,
        (srew, trew) => {
            let mut rewards = RewardStructure::zero(n);
            if let Some(srew) = srew {
                let (sn, entries) = parse_srew(srew)?;
                if sn != n {
                    return Err(line_err(".srew", 1, format!("state count {sn} does not match .tra ({n})")));
                }
                for (state, reward) in entries {
                    rewards.state[state] = reward;
                }
            }
            if let Some(trew) = trew {
                let (tn, entries) = parse_trew(trew)?;
                if tn != n {
                    return Err(line_err(".trew", 1, format!("state count {tn} does not match .tra ({n})")));
                }
                for (src, dst, reward) in entries {
                    rewards.trans.insert((src, dst), reward);
                }
            }
            rewards
                .validate_support(&dtmc)
                .map_err(|(i, j)| ExplicitParseError::RewardOffTransition(i, j))?;
            Some(rewards)
        }
    };

    Ok(ExplicitModel {
        dtmc,
        names,
        rewards,
    })
}

#[derive(Serialize)]
struct JsonModel<'a> {
    states: usize,
    initial: usize,
    names: &'a [String],
    transitions: Vec<(usize, usize, f64)>,
    labels: &'a BTreeMap<String, BTreeSet<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    state_rewards: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transition_rewards: Option<Vec<(usize, usize, f64)>>,
}

/// Dumps a model as a pretty-printed JSON document.
pub fn export_json(
    dtmc: &SparseDtmc,
    names: &[String],
    rewards: Option<&RewardStructure>,
) -> String {
    assert_eq!(names.len(), dtmc.n(), "need exactly one name per state for export");
    let transitions = (0..dtmc.n())
        .flat_map(|src| dtmc.row(src).iter().map(move |&(dst, p)| (src, dst, p)))
        .collect();
    let model = JsonModel {
        states: dtmc.n(),
        initial: dtmc.initial(),
        names,
        transitions,
        labels: dtmc.labels(),
        state_rewards: rewards.map(|r| r.state.as_slice()),
        transition_rewards: rewards.map(|r| {
            r.trans
                .iter()
                .map(|(&(i, j), &reward)| (i, j, reward))
                .collect()
        }),
    };
    let mut text = serde_json::to_string_pretty(&model).expect("model serialization cannot fail");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (SparseDtmc, Vec<String>, RewardStructure) {
        let rows = vec![
            vec![(1, 0.25), (2, 0.75)],
            vec![(1, 1.0)],
            vec![(0, 0.1), (2, 0.9)],
        ];
        let mut labels = BTreeMap::new();
        labels.insert("goal".to_string(), BTreeSet::from([1]));
        labels.insert("risky".to_string(), BTreeSet::from([0, 2]));
        let dtmc = SparseDtmc::try_from_rows(0, rows, labels).unwrap();
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let mut rewards = RewardStructure::zero(3);
        rewards.state[0] = 1.5;
        rewards.trans.insert((0, 2), 0.125);
        (dtmc, names, rewards)
    }

    #[test]
    fn single_absorbing_state_tra() {
        let dtmc = SparseDtmc::try_from_rows(0, vec![vec![(0, 1.0)]], BTreeMap::new()).unwrap();
        let bundle = export_explicit(&dtmc, &["only".to_string()], None);
        assert_eq!(bundle.tra, "1 1\n0 0 1\n");
        assert_eq!(bundle.sta, "0:only\n");
        assert_eq!(bundle.lab, "0=\"init\"\n0: 0\n");
        assert!(bundle.srew.is_none() && bundle.trew.is_none());
    }

    #[test]
    fn export_is_sorted_and_deterministic() {
        let (dtmc, names, rewards) = toy();
        let a = export_explicit(&dtmc, &names, Some(&rewards));
        let b = export_explicit(&dtmc, &names, Some(&rewards));
        assert_eq!(a, b);
        let pairs: Vec<(usize, usize)> = parse_tra(&a.tra)
            .unwrap()
            .1
            .iter()
            .map(|&(s, d, _)| (s, d))
            .collect();
        let mut sorted = pairs.clone();
        sorted.sort_unstable();
        assert_eq!(pairs, sorted);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (dtmc, names, rewards) = toy();
        let bundle = export_explicit(&dtmc, &names, Some(&rewards));
        let model = parse_explicit(&bundle).unwrap();
        assert_eq!(model.dtmc, dtmc);
        assert_eq!(model.names, names);
        assert_eq!(model.rewards.as_ref(), Some(&rewards));
        let again = export_explicit(&model.dtmc, &model.names, model.rewards.as_ref());
        assert_eq!(again, bundle);
    }

    #[test]
    fn awkward_probabilities_survive_the_round_trip() {
        let p = 0.1f64 + 0.2f64;
        let rows = vec![vec![(0, 1.0 - p), (1, p)], vec![(1, 1.0)]];
        let dtmc = SparseDtmc::try_from_rows(0, rows, BTreeMap::new()).unwrap();
        let names = vec!["x".to_string(), "y".to_string()];
        let bundle = export_explicit(&dtmc, &names, None);
        let model = parse_explicit(&bundle).unwrap();
        assert_eq!(model.dtmc.prob(0, 1).to_bits(), p.to_bits());
    }

    #[test]
    fn tra_parse_errors_carry_line_numbers() {
        let err = parse_tra("2 1\n0 oops 1\n").unwrap_err();
        assert_eq!(err.to_string(), ".tra line 2: invalid target state `oops`");
        let err = parse_tra("2 3\n0 1 1\n1 1 1\n").unwrap_err();
        assert!(err.to_string().contains("promises 3 transitions"));
    }

    #[test]
    fn sta_detects_gaps_and_duplicates() {
        assert!(parse_sta("0:a\n2:c\n").unwrap_err().to_string().contains("missing state index 1"));
        assert!(parse_sta("0:a\n0:b\n").unwrap_err().to_string().contains("duplicate state index 0"));
    }

    #[test]
    fn lab_requires_declared_ids() {
        let err = parse_lab("0=\"init\"\n0: 1\n").unwrap_err();
        assert!(err.to_string().contains("undeclared label id 1"));
    }

    #[test]
    fn missing_init_label_is_rejected() {
        let (dtmc, names, _) = toy();
        let mut bundle = export_explicit(&dtmc, &names, None);
        bundle.lab = "0=\"goal\"\n1: 0\n".to_string();
        let err = parse_explicit(&bundle).unwrap_err();
        assert!(matches!(err, ExplicitParseError::MissingInit));
    }

    #[test]
    fn transition_reward_must_sit_on_a_transition() {
        let (dtmc, names, mut rewards) = toy();
        rewards.trans.insert((1, 0), 2.0);
        let mut bundle = export_explicit(&dtmc, &names, None);
        bundle.trew = Some("3 1\n1 0 2\n".to_string());
        let err = parse_explicit(&bundle).unwrap_err();
        assert!(matches!(err, ExplicitParseError::RewardOffTransition(1, 0)));
    }

    #[test]
    fn write_and_read_back_through_files() {
        let (dtmc, names, rewards) = toy();
        let bundle = export_explicit(&dtmc, &names, Some(&rewards));
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("model");
        let written = bundle.write_to(&stem).unwrap();
        assert_eq!(written.len(), 5);
        let back = ExportBundle::read_from(&stem).unwrap();
        assert_eq!(back, bundle);
    }

    #[test]
    fn json_dump_contains_the_transitions() {
        let (dtmc, names, rewards) = toy();
        let text = export_json(&dtmc, &names, Some(&rewards));
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["states"], 3);
        assert_eq!(value["transitions"].as_array().unwrap().len(), dtmc.transition_count());
        assert_eq!(value["state_rewards"][0], 1.5);
    }
}
