//! Declarative task-suite format and its compiled, index-based form.

use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;

use crate::trajectory::{DomainTag, Instruction};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteDoc {
    name: String,
    #[serde(default = "default_slack")]
    step_slack: usize,
    #[serde(rename = "graph")]
    graphs: Vec<GraphDoc>,
    #[serde(rename = "task")]
    tasks: Vec<TaskDoc>,
}

fn default_slack() -> usize {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    id: String,
    initial_screen: String,
    #[serde(default)]
    slots: BTreeMap<String, String>,
    #[serde(rename = "screen")]
    screens: Vec<ScreenDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScreenDoc {
    id: String,
    title: String,
    back: Option<String>,
    enter: Option<String>,
    #[serde(default)]
    widgets: Vec<WidgetDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WidgetDoc {
    label: String,
    bbox: Option<[f64; 4]>,
    target: Option<String>,
    field: Option<String>,
    set: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    id: String,
    graph: String,
    instruction: String,
    step_slack: Option<usize>,
    goal: GoalDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalDoc {
    screen: Option<String>,
    #[serde(default)]
    slots: BTreeMap<String, String>,
    answer: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("suite document: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("duplicate {kind} id {id:?}")]
    Duplicate { kind: &'static str, id: String },
    #[error("{context}: unknown screen {screen:?}")]
    UnknownScreen { context: String, screen: String },
    #[error("{context}: unknown slot {slot:?}")]
    UnknownSlot { context: String, slot: String },
    #[error("task {task:?}: unknown graph {graph:?}")]
    UnknownGraph { task: String, graph: String },
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
    #[error("task {0:?}: goal is unreachable from the initial screen")]
    Unreachable(String),
}

/// What clicking a widget does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Navigate(usize),
    Focus(usize),
    Set(Vec<(usize, String)>),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Widget {
    /// May reference slots as `{slot}`.
    pub label: String,
    pub bbox: [f64; 4],
    pub effect: Effect,
}

impl Widget {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.bbox;
        (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
    }

    pub fn center(&self) -> (f64, f64) {
        let [x0, y0, x1, y1] = self.bbox;
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Screen {
    pub id: String,
    pub title: String,
    pub back: Option<usize>,
    pub enter: Option<usize>,
    pub widgets: Vec<Widget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenGraph {
    pub id: String,
    pub screens: Vec<Screen>,
    pub initial_screen: usize,
    pub slot_names: Vec<String>,
    pub initial_slots: Vec<String>,
}

impl ScreenGraph {
    pub fn screen_index(&self, id: &str) -> Option<usize> {
        self.screens.iter().position(|s| s.id == id)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slot_names.iter().position(|s| s == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    pub screen: Option<usize>,
    pub slots: Vec<(usize, String)>,
    /// Must appear in the agent's final response, ignoring case.
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxTask {
    pub instruction: Instruction,
    pub graph: usize,
    pub goal: Goal,
    /// Shortest number of actions to success, the final `stop` included.
    pub optimal_path_length: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub graphs: Vec<ScreenGraph>,
    pub tasks: Vec<SandboxTask>,
}

pub const SHIPPED_SUITE: &str = include_str!("../../assets/sandbox_suite.toml");

/// Rows used for widgets that do not give a bbox.
const AUTO_TOP: f64 = 0.10;
const AUTO_PITCH: f64 = 0.08;
const AUTO_HEIGHT: f64 = 0.06;

impl Suite {
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_SUITE).expect("shipped suite is valid")
    }

    pub fn parse(text: &str) -> Result<Self, SuiteError> {
        let doc: SuiteDoc = toml::from_str(text)?;
        let mut graphs = Vec::with_capacity(doc.graphs.len());
        let mut graph_ids = HashMap::new();
        for g in &doc.graphs {
            if graph_ids.insert(g.id.clone(), graphs.len()).is_some() {
                return Err(SuiteError::Duplicate {
                    kind: "graph",
                    id: g.id.clone(),
                });
            }
            graphs.push(compile_graph(g)?);
        }

        let mut tasks = Vec::with_capacity(doc.tasks.len());
        let mut task_ids = HashMap::new();
        for t in &doc.tasks {
            if task_ids.insert(t.id.clone(), ()).is_some() {
                return Err(SuiteError::Duplicate {
                    kind: "task",
                    id: t.id.clone(),
                });
            }
            let gi = *graph_ids.get(&t.graph).ok_or_else(|| SuiteError::UnknownGraph {
                task: t.id.clone(),
                graph: t.graph.clone(),
            })?;
            let graph = &graphs[gi];
            let context = format!("task {:?}", t.id);
            if t.instruction.trim().is_empty() {
                return Err(SuiteError::Invalid {
                    context,
                    message: "empty instruction".into(),
                });
            }
            let screen = match &t.goal.screen {
                Some(s) => Some(graph.screen_index(s).ok_or_else(|| SuiteError::UnknownScreen {
                    context: context.clone(),
                    screen: s.clone(),
                })?),
                None => None,
            };
            let slots = resolve_slots(graph, &t.goal.slots, &context)?;
            let goal = Goal {
                screen,
                slots,
                answer: t.goal.answer.clone(),
            };
            let mut task = SandboxTask {
                instruction: Instruction::new(t.id.clone(), t.instruction.clone(), DomainTag::Sandbox),
                graph: gi,
                goal,
                optimal_path_length: 0,
                max_steps: 0,
            };
            let start = super::sim::SimState::initial(graph);
            let optimal =
                super::sim::distance(graph, &task.goal, &start).ok_or_else(|| SuiteError::Unreachable(t.id.clone()))?;
            task.optimal_path_length = optimal;
            task.max_steps = optimal + t.step_slack.unwrap_or(doc.step_slack);
            tasks.push(task);
        }
        Ok(Suite {
            name: doc.name,
            graphs,
            tasks,
        })
    }

    pub fn graph_of(&self, task: &SandboxTask) -> &ScreenGraph {
        &self.graphs[task.graph]
    }

    pub fn task(&self, id: &str) -> Option<&SandboxTask> {
        self.tasks.iter().find(|t| t.instruction.task_id == id)
    }
}

fn resolve_slots(
    graph: &ScreenGraph,
    slots: &BTreeMap<String, String>,
    context: &str,
) -> Result<Vec<(usize, String)>, SuiteError> {
    slots
        .iter()
        .map(|(k, v)| {
            graph
                .slot_index(k)
                .map(|i| (i, v.clone()))
                .ok_or_else(|| SuiteError::UnknownSlot {
                    context: context.to_string(),
                    slot: k.clone(),
                })
        })
        .collect()
}

fn compile_graph(g: &GraphDoc) -> Result<ScreenGraph, SuiteError> {
    let mut ids = HashMap::new();
    for (i, s) in g.screens.iter().enumerate() {
        if ids.insert(s.id.as_str(), i).is_some() {
            return Err(SuiteError::Duplicate {
                kind: "screen",
                id: format!("{}/{}", g.id, s.id),
            });
        }
    }
    let lookup = |context: &str, id: &str| {
        ids.get(id).copied().ok_or_else(|| SuiteError::UnknownScreen {
            context: context.to_string(),
            screen: id.to_string(),
        })
    };
    let slot_names: Vec<String> = g.slots.keys().cloned().collect();
    let initial_slots: Vec<String> = g.slots.values().cloned().collect();
    let mut graph = ScreenGraph {
        id: g.id.clone(),
        screens: Vec::with_capacity(g.screens.len()),
        initial_screen: lookup(&format!("graph {:?}", g.id), &g.initial_screen)?,
        slot_names,
        initial_slots,
    };

    for s in &g.screens {
        let context = format!("graph {:?} screen {:?}", g.id, s.id);
        let back = s.back.as_deref().map(|b| lookup(&context, b)).transpose()?;
        let enter = s.enter.as_deref().map(|b| lookup(&context, b)).transpose()?;
        let mut widgets = Vec::with_capacity(s.widgets.len());
        for (wi, w) in s.widgets.iter().enumerate() {
            let wctx = format!("{context} widget {:?}", w.label);
            let effects = [w.target.is_some(), w.field.is_some(), w.set.is_some()]
                .iter()
                .filter(|b| **b)
                .count();
            if effects > 1 {
                return Err(SuiteError::Invalid {
                    context: wctx,
                    message: "a widget has at most one of target, field, set".into(),
                });
            }
            let effect = if let Some(t) = &w.target {
                Effect::Navigate(lookup(&wctx, t)?)
            } else if let Some(f) = &w.field {
                Effect::Focus(graph.slot_index(f).ok_or_else(|| SuiteError::UnknownSlot {
                    context: wctx.clone(),
                    slot: f.clone(),
                })?)
            } else if let Some(set) = &w.set {
                Effect::Set(resolve_slots(&graph, set, &wctx)?)
            } else {
                Effect::None
            };
            let bbox = w.bbox.unwrap_or_else(|| {
                let top = AUTO_TOP + AUTO_PITCH * wi as f64;
                [0.05, top, 0.95, top + AUTO_HEIGHT]
            });
            let [x0, y0, x1, y1] = bbox;
            if !(bbox.iter().all(|v| (0.0..=1.0).contains(v)) && x0 < x1 && y0 < y1) {
                return Err(SuiteError::Invalid {
                    context: wctx,
                    message: format!("bbox {bbox:?} is not a box inside the unit square"),
                });
            }
            for name in placeholders(&w.label) {
                if graph.slot_index(name).is_none() {
                    return Err(SuiteError::UnknownSlot {
                        context: wctx,
                        slot: name.to_string(),
                    });
                }
            }
            widgets.push(Widget {
                label: w.label.clone(),
                bbox,
                effect,
            });
        }
        graph.screens.push(Screen {
            id: s.id.clone(),
            title: s.title.clone(),
            back,
            enter,
            widgets,
        });
    }
    Ok(graph)
}

/// Slot names referenced as `{name}` in a label.
pub(crate) fn placeholders(label: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = label;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_suite_shape() {
        let s = Suite::shipped();
        assert_eq!(s.graphs.len(), 3);
        assert_eq!(s.tasks.len(), 24);
        for g in 0..3 {
            assert_eq!(s.tasks.iter().filter(|t| t.graph == g).count(), 8);
        }
        for t in &s.tasks {
            assert!(t.optimal_path_length >= 2, "{}", t.instruction.task_id);
            assert!(t.max_steps >= t.optimal_path_length);
        }
    }

    const MINI: &str = r#"
name = "mini"
[[graph]]
id = "g"
initial_screen = "a"
slots = { name = "x" }
[[graph.screen]]
id = "a"
title = "A"
widgets = [{ label = "Go", target = "b" }]
[[graph.screen]]
id = "b"
title = "B"
back = "a"
widgets = [{ label = "Name: {name}", field = "name" }]
[[task]]
id = "t"
graph = "g"
instruction = "Set the name to y"
goal = { screen = "b", slots = { name = "y" } }
"#;

    #[test]
    fn mini_suite_compiles() {
        let s = Suite::parse(MINI).unwrap();
        let t = &s.tasks[0];
        // Go, focus the field, type, stop.
        assert_eq!(t.optimal_path_length, 4);
        assert_eq!(t.max_steps, 6);
        assert_eq!(s.graphs[0].screens[1].back, Some(0));
    }

    #[test]
    fn reference_errors() {
        let bad_target = MINI.replace("target = \"b\"", "target = \"zz\"");
        assert!(matches!(
            Suite::parse(&bad_target),
            Err(SuiteError::UnknownScreen { .. })
        ));
        let bad_slot = MINI.replace("field = \"name\"", "field = \"nope\"");
        assert!(matches!(Suite::parse(&bad_slot), Err(SuiteError::UnknownSlot { .. })));
        let unreachable = MINI.replace("widgets = [{ label = \"Go\", target = \"b\" }]", "widgets = []");
        assert!(matches!(Suite::parse(&unreachable), Err(SuiteError::Unreachable(_))));
        let syntax = MINI.replace("name = \"mini\"", "name = ");
        let err = Suite::parse(&syntax).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }
}
