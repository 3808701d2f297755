//! Prompts for remote reasoner/planner workers and strict reply parsing.

use std::collections::BTreeSet;

use serde_json::Value;

use super::{AgendaItem, DegradationKind, ExperienceRules, FailureNote, PerceptionError};
use crate::metrics::MetricReport;
use crate::toolbox::TaskKind;

pub fn reason_prompt(q: &MetricReport, brightening: bool) -> String {
    let mut kinds: Vec<&str> = DegradationKind::ALL
        .iter()
        .filter(|d| brightening || **d != DegradationKind::LowLight)
        .map(|d| d.as_str())
        .collect();
    kinds.dedup();
    let scores: Vec<String> = q.available().iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    format!(
        "You are inspecting a photograph before it is restored.\n\
         Measured quality scores: {}.\n\
         Decide which of these degradations are visibly present: {}.\n\
         Also write one sentence describing what the picture shows.\n\
         Answer with a single JSON object and nothing else, shaped as\n\
         {{\"degradations\": [<names from the list>], \"image_description\": \"<sentence>\"}}",
        if scores.is_empty() { "none".to_string() } else { scores.join(", ") },
        kinds.join(", ")
    )
}

pub fn plan_prompt(
    description: &str,
    degradations: &BTreeSet<DegradationKind>,
    agenda: &[AgendaItem],
    rules: &ExperienceRules,
    failures: &[FailureNote],
) -> String {
    let tasks: Vec<&str> = agenda.iter().map(|i| i.task.as_str()).collect();
    let found: Vec<&str> = degradations.iter().map(|d| d.as_str()).collect();
    let hints: Vec<String> = rules.pairs().iter().map(|(a, b)| format!("{a} before {b}")).collect();
    let mut prompt = format!(
        "Image: {description}\n\
         Detected problems: {}.\n\
         Order these restoration tasks for execution: {}.\n\
         Ordering guidance from earlier runs: {}.\n",
        if found.is_empty() { "none".to_string() } else { found.join(", ") },
        tasks.join(", "),
        if hints.is_empty() { "none".to_string() } else { hints.join("; ") },
    );
    if !failures.is_empty() {
        let failed: Vec<String> = failures.iter().map(|f| format!("{} ({})", f.task, f.note)).collect();
        prompt.push_str(&format!(
            "These tasks already failed at the current step and may not be placed first: {}.\n",
            failed.join("; ")
        ));
    }
    prompt.push_str(
        "Use every listed task exactly as many times as it appears, no more and no fewer.\n\
         Answer with a single JSON object and nothing else, shaped as {\"plan\": [<task names in order>]}",
    );
    prompt
}

fn strict_object(reply: &str) -> Result<serde_json::Map<String, Value>, String> {
    match serde_json::from_str::<Value>(reply.trim()) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err("reply is not a JSON object".into()),
        Err(e) => Err(format!("reply is not JSON: {e}")),
    }
}

/// `{"degradations": [...], "image_description": "..."}`; unknown
/// degradation names are an error.
pub fn parse_reason_reply(reply: &str) -> Result<(BTreeSet<DegradationKind>, String), PerceptionError> {
    let bad = PerceptionError::VlmMalformedReply;
    let obj = strict_object(reply).map_err(bad)?;
    let list = obj
        .get("degradations")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing 'degradations' list".into()))?;
    let description = obj
        .get("image_description")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing 'image_description' string".into()))?;
    let mut found = BTreeSet::new();
    for v in list {
        let s = v.as_str().ok_or_else(|| bad(format!("non-string degradation {v}")))?;
        found.insert(s.parse::<DegradationKind>().map_err(bad)?);
    }
    Ok((found, description.to_string()))
}

/// `{"plan": [...]}` mapped back onto agenda items. Repeated tasks (two SR
/// steps) take the agenda's items in their original order.
pub fn parse_plan_reply(reply: &str, agenda: &[AgendaItem], failed: &BTreeSet<TaskKind>) -> Result<Vec<AgendaItem>, PerceptionError> {
    let bad = PerceptionError::LlmMalformedReply;
    let obj = strict_object(reply).map_err(bad)?;
    let list = obj.get("plan").and_then(Value::as_array).ok_or_else(|| bad("missing 'plan' list".into()))?;
    let mut used = vec![false; agenda.len()];
    let mut steps = Vec::with_capacity(agenda.len());
    for v in list {
        let s = v.as_str().ok_or_else(|| bad(format!("non-string task {v}")))?;
        let task: TaskKind = s.parse().map_err(bad)?;
        let idx = (0..agenda.len())
            .find(|&i| !used[i] && agenda[i].task == task)
            .ok_or_else(|| bad(format!("'{s}' is not in the agenda (or repeated too often)")))?;
        used[idx] = true;
        steps.push(agenda[idx].clone());
    }
    if steps.len() != agenda.len() {
        return Err(bad(format!("plan has {} tasks, agenda has {}", steps.len(), agenda.len())));
    }
    let avoidable = agenda.iter().any(|i| !failed.contains(&i.task));
    if avoidable && failed.contains(&steps[0].task) {
        return Err(bad(format!("failed task {} placed first", steps[0].task)));
    }
    Ok(steps)
}
