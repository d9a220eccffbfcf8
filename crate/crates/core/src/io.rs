//! JSON and CSV persistence.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::mdp::{DemonstrationSet, PreferencePair, PreferenceSet, TabularMdp, Trajectory};

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, to_json_string(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Reads an MDP and rejects it if any invariant fails.
pub fn read_mdp(path: impl AsRef<Path>) -> Result<TabularMdp> {
    let mdp: TabularMdp = read_json(path)?;
    let report = mdp.validate();
    if !report.is_empty() {
        let msgs: Vec<String> = report.iter().map(|v| v.to_string()).collect();
        return Err(AihfError::InvalidMdp(msgs.join("; ")));
    }
    Ok(mdp)
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRow {
    trajectory: usize,
    step: usize,
    state: usize,
    action: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRow {
    pair: usize,
    role: String,
    step: usize,
    state: usize,
    action: usize,
}

/// One row per step: `trajectory,step,state,action`.
pub fn demonstrations_to_csv(demos: &DemonstrationSet) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, t) in demos.trajectories.iter().enumerate() {
        for (step, &(state, action)) in t.steps.iter().enumerate() {
            w.serialize(StepRow { trajectory: i, step, state, action })?;
        }
    }
    finish(w)
}

pub fn demonstrations_from_csv(text: &str) -> Result<DemonstrationSet> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut trajs: Vec<Vec<(usize, usize)>> = Vec::new();
    for row in r.deserialize() {
        let row: StepRow = row?;
        push_step(&mut trajs, row.trajectory, row.step, (row.state, row.action))?;
    }
    Ok(DemonstrationSet::new(trajs.into_iter().map(Trajectory::new).collect::<Result<_>>()?))
}

/// One row per step: `pair,role,step,state,action` with role `winner` or `loser`.
pub fn preferences_to_csv(prefs: &PreferenceSet) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, p) in prefs.pairs.iter().enumerate() {
        for (role, t) in [("winner", &p.winner), ("loser", &p.loser)] {
            for (step, &(state, action)) in t.steps.iter().enumerate() {
                w.serialize(PairRow { pair: i, role: role.into(), step, state, action })?;
            }
        }
    }
    finish(w)
}

pub fn preferences_from_csv(text: &str) -> Result<PreferenceSet> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut winners: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut losers: Vec<Vec<(usize, usize)>> = Vec::new();
    for row in r.deserialize() {
        let row: PairRow = row?;
        let target = match row.role.as_str() {
            "winner" => &mut winners,
            "loser" => &mut losers,
            other => return Err(AihfError::Config(format!("unknown role {other:?}"))),
        };
        push_step(target, row.pair, row.step, (row.state, row.action))?;
    }
    if winners.len() != losers.len() {
        return Err(AihfError::Config("every pair needs a winner and a loser".into()));
    }
    let pairs = winners
        .into_iter()
        .zip(losers)
        .map(|(w, l)| Ok(PreferencePair { winner: Trajectory::new(w)?, loser: Trajectory::new(l)? }))
        .collect::<Result<_>>()?;
    Ok(PreferenceSet::new(pairs))
}

fn push_step(trajs: &mut Vec<Vec<(usize, usize)>>, id: usize, step: usize, sa: (usize, usize)) -> Result<()> {
    if id > trajs.len() || (id == trajs.len() && step != 0) {
        return Err(AihfError::Config(format!("rows for trajectory {id} are out of order")));
    }
    if id == trajs.len() {
        trajs.push(Vec::new());
    }
    if trajs[id].len() != step {
        return Err(AihfError::Config(format!("trajectory {id} step {step} is out of order")));
    }
    trajs[id].push(sa);
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| AihfError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| AihfError::Config(e.to_string()))
}
