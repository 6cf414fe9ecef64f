//! Typed agent actions and their canonical string form.
//!
//! Canonical grammar (keywords are matched case-insensitively on input):
//!
//! ```text
//! click [0.50, 0.25]
//! Type "Hello"
//! swipe "up"
//! press "Home" | press "Back" | press "Enter"
//! stop | stop "answer text"
//! ```
//!
//! Quoted payloads use JSON string escaping so arbitrary text survives a
//! render/parse round trip. Anything that does not match the grammar parses
//! as [`Action::Raw`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A point in normalized screen space, quantized to the 0.01 grid used by the
/// canonical rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    x: f64,
    y: f64,
}

impl Point {
    /// Returns `None` unless both coordinates are finite and within `[0, 1]`.
    pub fn new(x: f64, y: f64) -> Option<Self> {
        let ok = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !ok(x) || !ok(y) {
            return None;
        }
        Some(Self {
            x: quantize(x),
            y: quantize(y),
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

fn quantize(v: f64) -> f64 {
    // Parse back from the fixed-point form so the value equals what
    // `parse_action` produces for the rendered text.
    format!("{v:.2}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Direction::ALL.into_iter().find(|d| d.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Click,
    Type,
    Swipe,
    PressHome,
    PressBack,
    PressEnter,
    Stop,
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Click(Point),
    Type(String),
    Swipe(Direction),
    PressHome,
    PressBack,
    PressEnter,
    /// Ends the episode, optionally answering the user.
    Stop(Option<String>),
    /// Verbatim text that did not match the grammar.
    Raw(String),
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click(_) => ActionKind::Click,
            Action::Type(_) => ActionKind::Type,
            Action::Swipe(_) => ActionKind::Swipe,
            Action::PressHome => ActionKind::PressHome,
            Action::PressBack => ActionKind::PressBack,
            Action::PressEnter => ActionKind::PressEnter,
            Action::Stop(_) => ActionKind::Stop,
            Action::Raw(_) => ActionKind::Raw,
        }
    }

    pub fn click(x: f64, y: f64) -> Option<Self> {
        Point::new(x, y).map(Action::Click)
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Action::Type(text.into())
    }
}

/// Parses an action string. Never fails: unrecognized input becomes `Raw`.
pub fn parse_action(text: &str) -> Action {
    parse_structured(text.trim()).unwrap_or_else(|| Action::Raw(text.to_string()))
}

/// Renders the canonical string for an action.
pub fn render_action(action: &Action) -> String {
    match action {
        Action::Click(p) => format!("click [{:.2}, {:.2}]", p.x, p.y),
        Action::Type(text) => format!("Type {}", quote(text)),
        Action::Swipe(dir) => format!("swipe \"{}\"", dir.as_str()),
        Action::PressHome => "press \"Home\"".to_string(),
        Action::PressBack => "press \"Back\"".to_string(),
        Action::PressEnter => "press \"Enter\"".to_string(),
        Action::Stop(None) => "stop".to_string(),
        Action::Stop(Some(answer)) => format!("stop {}", quote(answer)),
        Action::Raw(text) => text.clone(),
    }
}

fn quote(text: &str) -> String {
    serde_json::to_string(text).expect("string serialization is infallible")
}

fn unquote(text: &str) -> Option<String> {
    let text = text.trim();
    if text.len() < 2 || !text.starts_with('"') || !text.ends_with('"') {
        return None;
    }
    serde_json::from_str(text).ok()
}

fn split_keyword(text: &str) -> (&str, &str) {
    match text.find(|c: char| c.is_whitespace() || c == '[' || c == '"') {
        Some(idx) => (&text[..idx], text[idx..].trim_start()),
        None => (text, ""),
    }
}

fn parse_structured(text: &str) -> Option<Action> {
    let (keyword, rest) = split_keyword(text);
    match keyword.to_ascii_lowercase().as_str() {
        "click" | "tap" => parse_point(rest).map(Action::Click),
        "type" => unquote(rest).map(Action::Type),
        "swipe" => {
            let name = unquote(rest).unwrap_or_else(|| rest.to_string());
            Direction::from_name(name.trim()).map(Action::Swipe)
        }
        "press" => {
            let name = unquote(rest).unwrap_or_else(|| rest.to_string());
            match name.trim().to_ascii_lowercase().as_str() {
                "home" => Some(Action::PressHome),
                "back" => Some(Action::PressBack),
                "enter" => Some(Action::PressEnter),
                _ => None,
            }
        }
        "stop" if rest.is_empty() => Some(Action::Stop(None)),
        "stop" => unquote(rest).map(|s| Action::Stop(Some(s))),
        _ => None,
    }
}

fn parse_point(rest: &str) -> Option<Point> {
    let inner = rest.trim().strip_prefix('[')?.strip_suffix(']')?;
    let mut parts = inner.split(',');
    let x = f64::from_str(parts.next()?.trim()).ok()?;
    let y = f64::from_str(parts.next()?.trim()).ok()?;
    if parts.next().is_some() {
        return None;
    }
    Point::new(x, y)
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_action(self))
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&render_action(self))
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Ok(parse_action(&text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_type_example() {
        assert_eq!(parse_action("Type \"Hello\""), Action::Type("Hello".into()));
    }

    #[test]
    fn parses_click_example() {
        let a = parse_action("click [0.50, 0.25]");
        assert_eq!(a, Action::click(0.5, 0.25).unwrap());
    }

    #[test]
    fn unknown_text_is_raw() {
        assert_eq!(parse_action("do the thing"), Action::Raw("do the thing".into()));
    }

    #[test]
    fn out_of_range_click_is_raw() {
        assert_eq!(parse_action("click [1.5, 0.2]"), Action::Raw("click [1.5, 0.2]".into()));
    }

    #[test]
    fn renders_canonical_forms() {
        assert_eq!(render_action(&Action::Type("Hello".into())), "Type \"Hello\"");
        assert_eq!(render_action(&Action::PressHome), "press \"Home\"");
        assert_eq!(render_action(&Action::click(0.5, 0.5).unwrap()), "click [0.50, 0.50]");
        assert_eq!(render_action(&Action::Swipe(Direction::Up)), "swipe \"up\"");
        assert_eq!(render_action(&Action::Stop(Some("42%".into()))), "stop \"42%\"");
    }

    #[test]
    fn keyword_case_is_ignored() {
        assert_eq!(parse_action("TYPE \"x\""), Action::Type("x".into()));
        assert_eq!(parse_action("Press \"home\""), Action::PressHome);
        assert_eq!(parse_action("swipe left"), Action::Swipe(Direction::Left));
    }

    #[test]
    fn quoted_text_keeps_escapes() {
        let a = Action::Type("say \"hi\"\nnow".into());
        assert_eq!(parse_action(&render_action(&a)), a);
    }

    #[test]
    fn coordinates_are_quantized() {
        let p = Point::new(0.123, 0.987).unwrap();
        assert_eq!((p.x(), p.y()), (0.12, 0.99));
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        prop_oneof![
            (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(x, y)| Action::click(x, y).unwrap()),
            any::<String>().prop_map(Action::Type),
            prop::sample::select(Direction::ALL.to_vec()).prop_map(Action::Swipe),
            Just(Action::PressHome),
            Just(Action::PressBack),
            Just(Action::PressEnter),
            proptest::option::of(any::<String>()).prop_map(Action::Stop),
        ]
    }

    proptest! {
        #[test]
        fn parse_inverts_render(a in arb_action()) {
            prop_assert_eq!(parse_action(&render_action(&a)), a);
        }

        #[test]
        fn parse_is_total(s in ".+") {
            let _ = parse_action(&s);
        }
    }
}
