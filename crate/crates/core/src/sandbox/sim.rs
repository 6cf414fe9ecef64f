//! Screen-graph state machine, goal predicate and shortest-path distances.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use super::suite::{Effect, Goal, ScreenGraph, Widget};
use crate::trajectory::{Action, OcrToken, ScreenshotRef, State};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimState {
    pub screen: usize,
    pub slots: Vec<String>,
    pub focus: Option<usize>,
    pub stopped: bool,
    pub response: Option<String>,
}

impl SimState {
    pub fn initial(graph: &ScreenGraph) -> Self {
        Self {
            screen: graph.initial_screen,
            slots: graph.initial_slots.clone(),
            focus: None,
            stopped: false,
            response: None,
        }
    }
}

fn click_action(w: &Widget) -> Action {
    let (x, y) = w.center();
    Action::click(x, y).expect("widget centers lie in the unit square")
}

/// Applies one action. Anything that does not hit a widget or a defined
/// key binding leaves the state unchanged; a stopped state never changes.
pub fn apply(graph: &ScreenGraph, s: &SimState, action: &Action) -> SimState {
    let mut next = s.clone();
    if s.stopped {
        return next;
    }
    let screen = &graph.screens[s.screen];
    let navigate = |next: &mut SimState, to: usize| {
        next.screen = to;
        next.focus = None;
    };
    match action {
        Action::Click(p) => {
            if let Some(w) = screen.widgets.iter().find(|w| w.contains(p.x(), p.y())) {
                match &w.effect {
                    Effect::Navigate(to) => navigate(&mut next, *to),
                    Effect::Focus(slot) => next.focus = Some(*slot),
                    Effect::Set(assignments) => {
                        for (slot, value) in assignments {
                            next.slots[*slot] = value.clone();
                        }
                        next.focus = None;
                    }
                    Effect::None => {}
                }
            }
        }
        Action::Type(text) => {
            if let Some(slot) = s.focus {
                next.slots[slot] = text.clone();
            }
        }
        Action::PressEnter => {
            if let Some(to) = screen.enter {
                navigate(&mut next, to);
            }
        }
        Action::PressBack => {
            if let Some(to) = screen.back {
                navigate(&mut next, to);
            }
        }
        Action::PressHome => navigate(&mut next, graph.initial_screen),
        Action::Stop(answer) => {
            next.stopped = true;
            next.response = answer.clone();
        }
        Action::Swipe(_) | Action::Raw(_) => {}
    }
    next
}

/// The oracle: the agent stopped on the goal screen with the goal slot
/// values, and its answer (if one is required) names the expected value.
pub fn satisfied(goal: &Goal, s: &SimState) -> bool {
    s.stopped
        && goal.screen.is_none_or(|g| g == s.screen)
        && goal.slots.iter().all(|(i, v)| &s.slots[*i] == v)
        && match &goal.answer {
            None => true,
            Some(a) => s
                .response
                .as_deref()
                .is_some_and(|r| r.to_lowercase().contains(&a.to_lowercase())),
        }
}

/// Actions worth exploring from `s` when searching for the goal: every
/// widget, the key bindings, typing a goal value into the focused slot,
/// and stopping with the goal answer.
pub fn search_actions(graph: &ScreenGraph, goal: &Goal, s: &SimState) -> Vec<Action> {
    let screen = &graph.screens[s.screen];
    let mut out: Vec<Action> = screen.widgets.iter().map(click_action).collect();
    if let Some(slot) = s.focus {
        for (i, v) in &goal.slots {
            if *i == slot {
                out.push(Action::Type(v.clone()));
            }
        }
    }
    if screen.enter.is_some() {
        out.push(Action::PressEnter);
    }
    if screen.back.is_some() {
        out.push(Action::PressBack);
    }
    out.push(Action::PressHome);
    out.push(Action::Stop(goal.answer.clone()));
    out
}

/// Breadth-first search to the nearest satisfying state. Returns the
/// distance and the first action of a shortest path (ties broken by
/// `search_actions` order), or `None` if the goal cannot be reached.
pub fn shortest_path(graph: &ScreenGraph, goal: &Goal, start: &SimState) -> Option<(usize, Option<Action>)> {
    if start.stopped {
        return satisfied(goal, start).then_some((0, None));
    }
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    for a in search_actions(graph, goal, start) {
        let next = apply(graph, start, &a);
        if satisfied(goal, &next) {
            return Some((1, Some(a)));
        }
        if !next.stopped && seen.insert(next.clone()) {
            queue.push_back((next, 1usize, a));
        }
    }
    while let Some((s, d, first)) = queue.pop_front() {
        for a in search_actions(graph, goal, &s) {
            let next = apply(graph, &s, &a);
            if satisfied(goal, &next) {
                return Some((d + 1, Some(first)));
            }
            if !next.stopped && seen.insert(next.clone()) {
                queue.push_back((next, d + 1, first.clone()));
            }
        }
    }
    None
}

pub fn distance(graph: &ScreenGraph, goal: &Goal, s: &SimState) -> Option<usize> {
    shortest_path(graph, goal, s).map(|(d, _)| d)
}

pub fn render_label(graph: &ScreenGraph, s: &SimState, label: &str) -> String {
    let mut out = label.to_string();
    for (name, value) in graph.slot_names.iter().zip(&s.slots) {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Stand-in screenshot bytes: a canonical text dump of everything visible.
pub fn screenshot_bytes(graph: &ScreenGraph, s: &SimState) -> Vec<u8> {
    let screen = &graph.screens[s.screen];
    let mut out = format!("sandbox-screen\ngraph={}\nscreen={}\n", graph.id, screen.id);
    if let Some(f) = s.focus {
        let _ = writeln!(out, "focus={}", graph.slot_names[f]);
    }
    for (name, value) in graph.slot_names.iter().zip(&s.slots) {
        let _ = writeln!(out, "slot.{name}={value}");
    }
    out.into_bytes()
}

const TITLE_BBOX: [f64; 4] = [0.05, 0.02, 0.95, 0.07];
const OCR_CONFIDENCE: f64 = 0.95;

pub fn ocr_tokens(graph: &ScreenGraph, s: &SimState) -> Vec<OcrToken> {
    let screen = &graph.screens[s.screen];
    let mut out = vec![OcrToken::new(screen.title.clone(), TITLE_BBOX, OCR_CONFIDENCE)];
    out.extend(
        screen
            .widgets
            .iter()
            .map(|w| OcrToken::new(render_label(graph, s, &w.label), w.bbox, OCR_CONFIDENCE)),
    );
    out
}

/// Markdown screen summary, the sandbox's captioner output.
pub fn caption(graph: &ScreenGraph, s: &SimState) -> String {
    let screen = &graph.screens[s.screen];
    let mut out = format!("# {}\n", screen.title);
    for w in &screen.widgets {
        let label = render_label(graph, s, &w.label);
        let line = match &w.effect {
            Effect::Navigate(_) => format!("- [link] {label}"),
            Effect::Focus(slot) if s.focus == Some(*slot) => format!("- [text field, focused] {label}"),
            Effect::Focus(_) => format!("- [text field] {label}"),
            Effect::Set(_) => format!("- [button] {label}"),
            Effect::None => format!("- {label}"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    let mut keys = Vec::new();
    if screen.back.is_some() {
        keys.push("back");
    }
    if screen.enter.is_some() {
        keys.push("enter submits");
    }
    if !keys.is_empty() {
        let _ = writeln!(out, "\nNavigation: {}", keys.join(", "));
    }
    out.trim_end().to_string()
}

/// The observable trajectory state: screenshot reference and OCR, with no
/// caption (captions come from the captioner).
pub fn observe(graph: &ScreenGraph, s: &SimState) -> State {
    State::new(ScreenshotRef::for_bytes(&screenshot_bytes(graph, s))).with_ocr(ocr_tokens(graph, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::Suite;

    #[test]
    fn optimal_path_follows_first_actions() {
        let suite = Suite::shipped();
        for task in &suite.tasks {
            let g = suite.graph_of(task);
            let mut s = SimState::initial(g);
            let mut steps = 0;
            while let Some((d, Some(a))) = shortest_path(g, &task.goal, &s) {
                let next = apply(g, &s, &a);
                assert_eq!(distance(g, &task.goal, &next).unwrap_or(usize::MAX), d - 1);
                s = next;
                steps += 1;
            }
            assert!(satisfied(&task.goal, &s), "{}", task.instruction.task_id);
            assert_eq!(steps, task.optimal_path_length);
        }
    }

    #[test]
    fn stop_is_terminal_and_failed_stop_is_unreachable() {
        let suite = Suite::shipped();
        let task = &suite.tasks[0];
        let g = suite.graph_of(task);
        let s = apply(g, &SimState::initial(g), &Action::Stop(None));
        assert!(s.stopped);
        assert_eq!(apply(g, &s, &Action::PressHome), s);
        assert_eq!(distance(g, &task.goal, &s), None);
    }

    #[test]
    fn rendering_is_deterministic() {
        let suite = Suite::shipped();
        let g = &suite.graphs[1];
        let s = SimState::initial(g);
        assert_eq!(screenshot_bytes(g, &s), screenshot_bytes(g, &s));
        assert_eq!(observe(g, &s), observe(g, &s));
        assert!(caption(g, &s).starts_with("# "));
        assert!(ocr_tokens(g, &s).iter().all(|t| t.bbox[0] < t.bbox[2]));
    }
}
