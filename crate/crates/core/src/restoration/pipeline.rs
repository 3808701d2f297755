use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde_json::json;

use super::{execute_step, reflect, select, Candidate, Phase, QmoeWeights, QualityScores, RestorationError, SelectionPolicy, Trace, TraceEvent};
use crate::facepipe::IDENTITY_TOOL_ID;
use crate::imagecore::{paste_region, ImageBuf, PixelRect};
use crate::metrics::MetricSuite;
use crate::perception::{plan_tasks, AgendaItem, DegradationKind, ExperienceRules, FailureNote, Plan, Planner};
use crate::toolbox::{apply_tool, Preference, TaskKind, ToolRegistry};

pub struct PipelineDeps<'a> {
    pub registry: &'a ToolRegistry,
    pub suite: &'a MetricSuite,
    pub weights: QmoeWeights,
    pub policy: SelectionPolicy,
    pub planner: &'a Planner,
    pub rules: &'a ExperienceRules,
    pub preference: Preference,
    pub fast4k: bool,
    pub trace: &'a Trace,
}

#[derive(Clone, Debug)]
pub struct ExecutedStep {
    pub item: AgendaItem,
    pub tool_id: String,
    pub q_s: f64,
    /// Accepted under the compromise policy rather than on merit.
    pub compromise: bool,
    pub image: Arc<ImageBuf>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub image: ImageBuf,
    /// Accepted steps in execution order (the history stack).
    pub executed: Vec<ExecutedStep>,
    pub rollbacks: usize,
    pub compromised: bool,
    pub sr_executed: bool,
    /// Every SR step was accepted without ever scoring at or below the threshold.
    pub sr_step_survived: bool,
}

impl PipelineOutcome {
    pub fn executed_order(&self) -> Vec<AgendaItem> {
        self.executed.iter().map(|s| s.item.clone()).collect()
    }
}

type Evaluated = (Vec<Candidate>, Vec<QualityScores>);

/// Takes the items of `remaining` in the order they had in `original`.
fn original_order(original: &[AgendaItem], remaining: &[AgendaItem]) -> Vec<AgendaItem> {
    let mut left = remaining.to_vec();
    let mut out = Vec::with_capacity(left.len());
    for item in original {
        if let Some(pos) = left.iter().position(|i| i == item) {
            out.push(left.remove(pos));
        }
    }
    out.extend(left);
    out
}

/// Runs the plan. Each step applies all eligible tools, scores them, and keeps
/// the best. A step whose best score is at or below `eta` fails: the remaining
/// tasks are replanned with the failed ones kept out of first place. When
/// every remaining task has failed at the current step, the run switches to
/// the compromise policy for the rest of the plan: original order, best
/// candidate accepted regardless of score.
pub fn run_pipeline(
    input: &ImageBuf,
    plan: &Plan,
    description: &str,
    degradations: &BTreeSet<DegradationKind>,
    deps: &PipelineDeps<'_>,
) -> Result<PipelineOutcome, RestorationError> {
    let trace = deps.trace;
    let eta = deps.weights.eta;
    let context = Some(description);
    trace.push(TraceEvent::new(Phase::Run, "start").detail(json!({
        "description": description,
        "plan": plan.steps,
        "eta": eta,
        "policy": deps.policy,
        "preference": deps.preference,
        "fast4k": deps.fast4k,
    })));

    let original = plan.steps.clone();
    let mut remaining = plan.steps.clone();
    let mut current = Arc::new(input.clone());
    let mut executed: Vec<ExecutedStep> = Vec::new();
    let mut cache: HashMap<(usize, AgendaItem), Evaluated> = HashMap::new();
    let (mut rollbacks, mut compromised, mut sr_failed) = (0usize, false, false);

    while !remaining.is_empty() {
        let step = executed.len();
        let mut failures: Vec<FailureNote> = Vec::new();
        loop {
            let item = remaining[0].clone();
            let key = (step, item.clone());
            if !cache.contains_key(&key) {
                let candidates =
                    execute_step(&current, &item, deps.registry, deps.preference, deps.fast4k, context, step, trace)?;
                let scores = reflect(&candidates, context, &deps.weights, deps.suite);
                for s in &scores {
                    trace.push(
                        TraceEvent::new(Phase::Reflect, "candidate")
                            .step(step)
                            .task(item.task, item.scale)
                            .tool(&s.tool_id)
                            .scores(s.record.clone()),
                    );
                }
                cache.insert(key.clone(), (candidates, scores));
            }
            let (candidates, scores) = &cache[&key];
            let q: Vec<f64> = scores.iter().map(QualityScores::q_s).collect();
            let chosen = select(deps.policy, &q, eta);
            let best = q[chosen];
            let base = TraceEvent::new(Phase::Select, "")
                .step(step)
                .task(item.task, item.scale)
                .tool(&candidates[chosen].tool_id)
                .scores(scores[chosen].record.clone());

            let accept = compromised || best > eta;
            if item.task == TaskKind::SuperResolution && !compromised && best <= eta {
                sr_failed = true;
            }
            if accept {
                let decision = if compromised { "compromise_accepted" } else { "accepted" };
                trace.push(TraceEvent { decision: decision.into(), ..base });
                current = candidates[chosen].image.clone();
                executed.push(ExecutedStep {
                    item: item.clone(),
                    tool_id: candidates[chosen].tool_id.clone(),
                    q_s: best,
                    compromise: compromised,
                    image: current.clone(),
                });
                remaining.remove(0);
                break;
            }

            trace.push(TraceEvent { decision: "failed".into(), ..base }.detail(format!("best score {best:.4} <= {eta}")));
            failures.push(FailureNote { task: item.task, note: format!("best score {best:.4} with {}", candidates[chosen].tool_id) });
            let failed: BTreeSet<TaskKind> = failures.iter().map(|f| f.task).collect();
            if remaining.iter().any(|i| !failed.contains(&i.task)) {
                rollbacks += 1;
                let adj = plan_tasks(deps.planner, description, degradations, &remaining, deps.rules, &failures)
                    .map_err(|e| RestorationError::PlanExhausted(e.to_string()))?;
                for w in &adj.warnings {
                    trace.warn(w.clone());
                }
                trace.push(
                    TraceEvent::new(Phase::Rollback, "replanned")
                        .step(step)
                        .task(item.task, item.scale)
                        .detail(json!({"plan": adj.steps, "provenance": adj.provenance, "failures": failures})),
                );
                remaining = adj.steps;
            } else {
                compromised = true;
                remaining = original_order(&original, &remaining);
                trace.push(
                    TraceEvent::new(Phase::Compromise, "compromise")
                        .step(step)
                        .detail(json!({"plan": remaining, "failures": failures})),
                );
            }
        }
    }

    let sr_executed = executed.iter().any(|s| s.item.task == TaskKind::SuperResolution);
    let outcome = PipelineOutcome {
        image: (*current).clone(),
        executed,
        rollbacks,
        compromised,
        sr_executed,
        sr_step_survived: sr_executed && !sr_failed,
    };
    trace.push(TraceEvent::new(Phase::Run, "restored").detail(json!({
        "steps": outcome.executed.iter().map(|s| json!({"item": s.item, "tool_id": s.tool_id, "q_s": s.q_s, "compromise": s.compromise})).collect::<Vec<_>>(),
        "rollbacks": rollbacks,
        "compromised": compromised,
        "sr_step_survived": outcome.sr_step_survived,
    })));
    Ok(outcome)
}

/// Re-applies the tools a trace chose, in order, to `input`. With
/// deterministic tools the result equals the original run's output.
pub fn replay_trace(events: &[TraceEvent], input: &ImageBuf, registry: &ToolRegistry) -> Result<ImageBuf, RestorationError> {
    let bad = |m: String| RestorationError::Replay(m);
    let context = events
        .iter()
        .find(|e| e.phase == Phase::Run && e.decision == "start")
        .and_then(|e| e.detail.as_ref())
        .and_then(|d| d.get("description"))
        .and_then(|d| d.as_str())
        .map(str::to_string);
    let mut img = input.clone();
    for ev in events {
        match (ev.phase, ev.decision.as_str()) {
            (Phase::Select, "accepted" | "compromise_accepted") => {
                let id = ev.tool_id.as_deref().ok_or_else(|| bad(format!("event {} has no tool", ev.seq)))?;
                let spec = registry.get(id).ok_or_else(|| bad(format!("tool {id} is not registered")))?;
                img = apply_tool(spec, &img, ev.scale, context.as_deref()).map_err(|e| bad(e.to_string()))?;
            }
            (Phase::Face, "pasted") => {
                let id = ev.tool_id.as_deref().ok_or_else(|| bad(format!("event {} has no tool", ev.seq)))?;
                let detail = ev.detail.as_ref().ok_or_else(|| bad(format!("event {} has no rect", ev.seq)))?;
                let rect: PixelRect = serde_json::from_value(detail["rect"].clone()).map_err(|e| bad(e.to_string()))?;
                let feather = detail["feather"].as_u64().unwrap_or(0) as u32;
                let crop = img.crop(rect).map_err(|e| bad(e.to_string()))?;
                let restored = if id == IDENTITY_TOOL_ID {
                    crop
                } else {
                    let spec = registry.get(id).ok_or_else(|| bad(format!("tool {id} is not registered")))?;
                    apply_tool(spec, &crop, None, context.as_deref()).map_err(|e| bad(e.to_string()))?
                };
                img = paste_region(&img, &restored, rect, feather).map_err(|e| bad(e.to_string()))?;
            }
            _ => {}
        }
    }
    Ok(img)
}
