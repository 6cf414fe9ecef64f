use crate::gateway::ChatMessage;
use crate::templates::{self, Template};
use crate::trajectory::{render_action, Action, DomainTag, Instruction, State, Trajectory};

/// Which state of a prompt lacked the caption it needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSlot {
    Current,
    Next,
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{0:?} state has no caption")]
    MissingCaption(StateSlot),
    #[error("trajectory has no states")]
    NoStates,
}

pub const NO_RESPONSE: &str = "N/A";

fn e2e_templates(domain: DomainTag) -> (Template, Template) {
    match domain {
        DomainTag::Web => (templates::WEB_TRAJECTORY_E2E_SYSTEM, templates::WEB_TRAJECTORY_E2E_USER),
        DomainTag::Android | DomainTag::Ios | DomainTag::Sandbox => (
            templates::ANDROID_TRAJECTORY_E2E_SYSTEM,
            templates::ANDROID_TRAJECTORY_E2E_USER,
        ),
    }
}

fn modular_templates(domain: DomainTag) -> (Template, Template) {
    match domain {
        DomainTag::Web => (
            templates::WEB_TRAJECTORY_MODULAR_SYSTEM,
            templates::WEB_TRAJECTORY_MODULAR_USER,
        ),
        DomainTag::Android | DomainTag::Ios | DomainTag::Sandbox => (
            templates::ANDROID_TRAJECTORY_MODULAR_SYSTEM,
            templates::ANDROID_TRAJECTORY_MODULAR_USER,
        ),
    }
}

fn response(t: &Trajectory) -> &str {
    t.agent_response.as_deref().unwrap_or(NO_RESPONSE)
}

/// System prompt plus a user message carrying only the last screenshot.
pub fn build_e2e_trajectory_prompt(t: &Trajectory) -> Result<Vec<ChatMessage>, PromptError> {
    let last = t.final_state().ok_or(PromptError::NoStates)?;
    let (system, user) = e2e_templates(t.instruction.domain_tag);
    let actions = t.rendered_actions();
    let text = user
        .render(&[
            ("intent", &t.instruction.text),
            ("last_actions", &actions),
            ("response", response(t)),
        ])
        .expect("e2e template placeholders are fixed");
    Ok(vec![
        ChatMessage::system(system.text()),
        ChatMessage::user(text).with_images(vec![last.screenshot.clone()]),
    ])
}

/// Text-only variant: the final caption stands in for the screenshot.
pub fn build_modular_trajectory_prompt(t: &Trajectory) -> Result<Vec<ChatMessage>, PromptError> {
    let last = t.final_state().ok_or(PromptError::NoStates)?;
    let caption = last
        .caption
        .as_deref()
        .ok_or(PromptError::MissingCaption(StateSlot::Final))?;
    let (system, user) = modular_templates(t.instruction.domain_tag);
    let actions = t.rendered_actions();
    let text = user
        .render(&[
            ("intent", &t.instruction.text),
            ("last_actions", &actions),
            ("cap", caption),
        ])
        .expect("modular template placeholders are fixed");
    Ok(vec![ChatMessage::system(system.text()), ChatMessage::user(text)])
}

pub fn build_step_prompt(
    instruction: &Instruction,
    action: &Action,
    current: &State,
    next: &State,
) -> Result<Vec<ChatMessage>, PromptError> {
    let cur = current
        .caption
        .as_deref()
        .ok_or(PromptError::MissingCaption(StateSlot::Current))?;
    let nxt = next
        .caption
        .as_deref()
        .ok_or(PromptError::MissingCaption(StateSlot::Next))?;
    let action = render_action(action);
    let text = templates::STEP_MODULAR_USER
        .render(&[
            ("intent", &instruction.text),
            ("current_state", cur),
            ("action", &action),
            ("next_state", nxt),
        ])
        .expect("step template placeholders are fixed");
    Ok(vec![
        ChatMessage::system(templates::STEP_MODULAR_SYSTEM.text()),
        ChatMessage::user(text),
    ])
}
