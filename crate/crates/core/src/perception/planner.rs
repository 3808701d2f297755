//! Experience rules and the rule-based task planner.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgendaItem, PerceptionError};
use crate::toolbox::TaskKind;

const DEFAULT_RULES: &str = include_str!("../../assets/experience_rules.json");

/// Precedence pairs `(before, after)` between restoration tasks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperienceRules {
    pairs: Vec<(TaskKind, TaskKind)>,
}

impl ExperienceRules {
    pub fn new(pairs: Vec<(TaskKind, TaskKind)>) -> Result<Self, PerceptionError> {
        for &(a, b) in &pairs {
            if a == b {
                return Err(PerceptionError::CyclicRules(format!("{a} precedes itself")));
            }
        }
        let rules = Self { pairs };
        if let Some(cycle) = rules.find_cycle() {
            let names: Vec<&str> = cycle.iter().map(|t| t.as_str()).collect();
            return Err(PerceptionError::CyclicRules(names.join(" -> ")));
        }
        Ok(rules)
    }

    pub fn empty() -> Self {
        Self { pairs: Vec::new() }
    }

    /// The bundled default rule set.
    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_RULES).expect("bundled rules are valid")
    }

    /// A JSON list of `["before", "after"]` pairs.
    pub fn from_json(text: &str) -> Result<Self, PerceptionError> {
        let raw: Vec<(String, String)> = serde_json::from_str(text).map_err(|e| PerceptionError::InvalidRules(e.to_string()))?;
        let mut pairs = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            let a: TaskKind = a.parse().map_err(PerceptionError::InvalidRules)?;
            let b: TaskKind = b.parse().map_err(PerceptionError::InvalidRules)?;
            pairs.push((a, b));
        }
        Self::new(pairs)
    }

    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let text = std::fs::read_to_string(path).map_err(|e| PerceptionError::InvalidRules(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<(&str, &str)> = self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        serde_json::to_string_pretty(&raw).expect("rules serialize") + "\n"
    }

    pub fn pairs(&self) -> &[(TaskKind, TaskKind)] {
        &self.pairs
    }

    pub fn precedes(&self, a: TaskKind, b: TaskKind) -> bool {
        self.pairs.contains(&(a, b))
    }

    fn find_cycle(&self) -> Option<Vec<TaskKind>> {
        // depth-first search with colours over the nine task kinds
        fn visit(rules: &ExperienceRules, t: TaskKind, state: &mut [u8; 9], stack: &mut Vec<TaskKind>) -> Option<Vec<TaskKind>> {
            let idx = |k: TaskKind| TaskKind::ALL.iter().position(|&x| x == k).unwrap();
            state[idx(t)] = 1;
            stack.push(t);
            for &(a, b) in &rules.pairs {
                if a != t {
                    continue;
                }
                match state[idx(b)] {
                    1 => {
                        let start = stack.iter().position(|&x| x == b).unwrap();
                        let mut cycle = stack[start..].to_vec();
                        cycle.push(b);
                        return Some(cycle);
                    }
                    0 => {
                        if let Some(c) = visit(rules, b, state, stack) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            stack.pop();
            state[idx(t)] = 2;
            None
        }
        let mut state = [0u8; 9];
        for (i, &t) in TaskKind::ALL.iter().enumerate() {
            if state[i] == 0 {
                if let Some(c) = visit(self, t, &mut state, &mut Vec::new()) {
                    return Some(c);
                }
            }
        }
        None
    }
}

impl Default for ExperienceRules {
    fn default() -> Self {
        Self::default_rules()
    }
}

/// A task that failed at some step, with the reason given to the planner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub task: TaskKind,
    pub note: String,
}

/// Topological order of `agenda` under `rules`, keeping input order among
/// incomparable items. Tasks in `failed` are kept out of the first position
/// when possible; if every ready task failed, the earliest non-failed task is
/// pulled forward ahead of its predecessors. The second value reports whether
/// the failure constraint could not be honoured.
pub fn topo_plan(agenda: &[AgendaItem], rules: &ExperienceRules, failed: &BTreeSet<TaskKind>) -> (Vec<AgendaItem>, bool) {
    let n = agenda.len();
    let edge = |i: usize, j: usize| rules.precedes(agenda[i].task, agenda[j].task);
    let mut placed = vec![false; n];
    let ready = |placed: &[bool], j: usize| !placed[j] && (0..n).all(|i| placed[i] || !edge(i, j));
    let mut order = Vec::with_capacity(n);

    let mut unsatisfiable = false;
    if !failed.is_empty() && n > 0 {
        let first = (0..n)
            .find(|&j| ready(&placed, j) && !failed.contains(&agenda[j].task))
            .or_else(|| (0..n).find(|&j| !failed.contains(&agenda[j].task)));
        match first {
            Some(j) => {
                placed[j] = true;
                order.push(j);
            }
            None => unsatisfiable = true,
        }
    }
    while order.len() < n {
        let j = (0..n)
            .find(|&j| ready(&placed, j))
            // rules form a DAG over kinds, but a forced first pick can leave
            // nothing ready only if it broke an edge; fall back to input order
            .or_else(|| (0..n).find(|&j| !placed[j]))
            .expect("an unplaced item remains");
        placed[j] = true;
        order.push(j);
    }
    (order.into_iter().map(|i| agenda[i].clone()).collect(), unsatisfiable)
}

/// True when `plan` is a rearrangement of `agenda` (as multisets).
pub fn is_permutation(agenda: &[AgendaItem], plan: &[AgendaItem]) -> bool {
    let mut a: Vec<_> = agenda.iter().map(|i| (i.task, i.scale)).collect();
    let mut b: Vec<_> = plan.iter().map(|i| (i.task, i.scale)).collect();
    a.sort();
    b.sort();
    a == b
}
