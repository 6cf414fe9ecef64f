//! Captioner side of the caption-then-reason evaluator.
//!
//! Caption prompts are built from a [`State`] alone. The task instruction is
//! never an input here, so it cannot leak into what the captioner sees.

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, Gateway, GatewayError, GenerationParams};
use crate::templates;
use crate::trajectory::{DomainTag, OcrToken, ScreenshotRef, State, Trajectory};

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.3;

/// Height of one OCR row bucket, in normalized screen units.
pub const ROW_BUCKET: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRequest {
    pub screenshot: ScreenshotRef,
    pub ocr_block: String,
    pub prompt_text: String,
}

impl CaptionRequest {
    /// One user message with the screenshot attached ahead of the prompt.
    pub fn to_messages(&self) -> Vec<ChatMessage> {
        vec![ChatMessage::user(self.prompt_text.clone()).with_images(vec![self.screenshot.clone()])]
    }
}

/// Joins OCR text row-major: rows are `ROW_BUCKET`-high bands of the bbox
/// center, left to right within a row. Ties fall back to text then bbox so
/// the result does not depend on input order.
pub fn merge_ocr(tokens: &[OcrToken], min_confidence: f64) -> String {
    let mut kept: Vec<&OcrToken> = tokens.iter().filter(|t| t.confidence >= min_confidence).collect();
    let key = |t: &OcrToken| {
        let (cx, cy) = t.center();
        ((cy / ROW_BUCKET).floor() as i64, cx)
    };
    kept.sort_by(|a, b| {
        let (ra, xa) = key(a);
        let (rb, xb) = key(b);
        ra.cmp(&rb)
            .then(xa.total_cmp(&xb))
            .then_with(|| a.text.cmp(&b.text))
            .then_with(|| {
                a.bbox
                    .iter()
                    .zip(&b.bbox)
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    kept.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n")
}

/// Captioning prompt with the merged OCR block. A state without OCR is
/// treated as having an empty token list.
pub fn build_caption_request(state: &State, min_confidence: f64) -> CaptionRequest {
    let ocr_block = merge_ocr(state.ocr.as_deref().unwrap_or(&[]), min_confidence);
    let prompt_text = templates::CAPTION_OCR_USER
        .render(&[("ocr_result", &ocr_block)])
        .expect("caption template has one placeholder");
    CaptionRequest {
        screenshot: state.screenshot.clone(),
        ocr_block,
        prompt_text,
    }
}

/// Prompt for harvesting teacher captions; carries no OCR.
pub fn build_caption_collection_request(state: &State) -> CaptionRequest {
    CaptionRequest {
        screenshot: state.screenshot.clone(),
        ocr_block: String::new(),
        prompt_text: templates::CAPTION_COLLECTION_USER.text().to_string(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaptionError {
    #[error("state {index} has no OCR tokens")]
    MissingOcr { index: usize },
    #[error("state {index}: captioner returned an empty caption")]
    EmptyCaption { index: usize },
    #[error("state {index}: {source}")]
    Gateway {
        index: usize,
        #[source]
        source: GatewayError,
    },
}

impl CaptionError {
    pub fn index(&self) -> usize {
        match self {
            CaptionError::MissingOcr { index }
            | CaptionError::EmptyCaption { index }
            | CaptionError::Gateway { index, .. } => *index,
        }
    }
}

/// Returns a copy of `t` with every state captioned. States that already
/// have a caption are left alone. On any failure nothing is returned, so a
/// caller never sees a half-captioned trajectory.
pub fn caption_trajectory(t: &Trajectory, gateway: &Gateway, min_confidence: f64) -> Result<Trajectory, CaptionError> {
    let params = GenerationParams::default();
    let mut captions = Vec::with_capacity(t.states.len());
    for (index, state) in t.states.iter().enumerate() {
        if let Some(existing) = &state.caption {
            captions.push(existing.clone());
            continue;
        }
        if state.ocr.is_none() {
            return Err(CaptionError::MissingOcr { index });
        }
        let request = build_caption_request(state, min_confidence);
        let caption = gateway
            .complete(&request.to_messages(), &params)
            .map_err(|source| CaptionError::Gateway { index, source })?;
        if caption.trim().is_empty() {
            return Err(CaptionError::EmptyCaption { index });
        }
        captions.push(caption);
    }
    let mut out = t.clone();
    for (state, caption) in out.states.iter_mut().zip(captions) {
        state.caption = Some(caption);
    }
    Ok(out)
}

/// One line of a caption corpus export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub screenshot: ScreenshotRef,
    pub ocr: String,
    pub caption: String,
    pub domain: DomainTag,
    pub human_verified: bool,
}

impl CaptionRecord {
    pub fn is_valid(&self) -> bool {
        !(self.human_verified && self.caption.trim().is_empty()) && self.domain != DomainTag::Sandbox
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use crate::trajectory::{Action, Instruction};

    fn tok(text: &str, bbox: [f64; 4], conf: f64) -> OcrToken {
        OcrToken::new(text, bbox, conf)
    }

    #[test]
    fn merge_empty_and_sorted() {
        assert_eq!(merge_ocr(&[], 0.3), "");
        let tokens = [
            tok("World", [0.1, 0.5, 0.3, 0.6], 0.9),
            tok("Hello", [0.1, 0.1, 0.3, 0.2], 0.9),
        ];
        assert_eq!(merge_ocr(&tokens, 0.3), "Hello\nWorld");
        assert_eq!(merge_ocr(&[tok("noise", [0.0, 0.0, 0.1, 0.1], 0.1)], 0.3), "");
    }

    #[test]
    fn same_row_reads_left_to_right() {
        let tokens = [
            tok("B", [0.6, 0.100, 0.7, 0.120], 0.9),
            tok("A", [0.1, 0.101, 0.2, 0.121], 0.9),
        ];
        assert_eq!(merge_ocr(&tokens, 0.0), "A\nB");
    }

    #[test]
    fn merge_is_permutation_invariant() {
        let tokens = vec![
            tok("c", [0.5, 0.5, 0.6, 0.6], 0.5),
            tok("a", [0.1, 0.1, 0.2, 0.2], 0.5),
            tok("b", [0.5, 0.1, 0.6, 0.2], 0.5),
            tok("b", [0.5, 0.1, 0.6, 0.2], 0.5),
            tok("d", [0.1, 0.5, 0.2, 0.6], 0.5),
        ];
        let expected = merge_ocr(&tokens, 0.3);
        let mut perm = tokens.clone();
        for _ in 0..20 {
            perm.rotate_left(2);
            perm.swap(0, 3);
            assert_eq!(merge_ocr(&perm, 0.3), expected);
        }
    }

    fn ocr_state(byte: u8, words: &[&str]) -> State {
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, w)| tok(w, [0.1, 0.1 * i as f64, 0.4, 0.1 * i as f64 + 0.05], 0.9))
            .collect();
        State::new(ScreenshotRef::for_bytes(&[byte])).with_ocr(tokens)
    }

    #[test]
    fn caption_prompt_contains_ocr_block() {
        let req = build_caption_request(&ocr_state(0, &["Settings", "Wi-Fi"]), 0.3);
        assert!(req.prompt_text.contains("OCR Result:\nSettings\nWi-Fi"));
        let empty = build_caption_request(&ocr_state(0, &[]), 0.3);
        assert!(empty.prompt_text.ends_with("OCR Result:\n"));
    }

    #[test]
    fn collection_prompt_has_no_ocr() {
        let req = build_caption_collection_request(&ocr_state(0, &["Settings"]));
        assert!(req.prompt_text.contains("hierarchical and in Markdown format"));
        assert!(req.prompt_text.contains("Don't wrap your response in a code block"));
        assert!(!req.prompt_text.contains("OCR"));
        assert!(!req.prompt_text.contains("Settings"));
    }

    fn trajectory(states: Vec<State>) -> Trajectory {
        Trajectory {
            instruction: Instruction::new("t", "Turn on Wi-Fi", DomainTag::Android),
            actions: vec![Action::PressHome; states.len() - 1],
            states,
            agent_response: None,
            policy_id: "p".into(),
        }
    }

    fn scripted_for(t: &Trajectory, skip: Option<usize>) -> ScriptedBackend {
        let mut backend = ScriptedBackend::new();
        for (i, s) in t.states.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let req = build_caption_request(s, DEFAULT_MIN_CONFIDENCE);
            backend.insert(
                &req.to_messages(),
                &GenerationParams::default(),
                format!("# Screen {i}"),
            );
        }
        backend
    }

    #[test]
    fn captions_every_state_in_order() {
        let t = trajectory((0..4).map(|i| ocr_state(i, &["Wi-Fi"])).collect());
        let gw = Gateway::new(scripted_for(&t, None));
        let out = caption_trajectory(&t, &gw, DEFAULT_MIN_CONFIDENCE).unwrap();
        let caps: Vec<_> = out.states.iter().map(|s| s.caption.clone().unwrap()).collect();
        assert_eq!(caps, ["# Screen 0", "# Screen 1", "# Screen 2", "# Screen 3"]);
        assert!(!caps.iter().any(|c| c.contains(&t.instruction.text)));

        let mut stripped = out.clone();
        for s in &mut stripped.states {
            s.caption = None;
        }
        assert_eq!(stripped, t);

        let again = caption_trajectory(&out, &Gateway::new(ScriptedBackend::new()), 0.3).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn failure_names_the_state() {
        let t = trajectory((0..4).map(|i| ocr_state(i, &["x"])).collect());
        let gw = Gateway::new(scripted_for(&t, Some(2)));
        let err = caption_trajectory(&t, &gw, DEFAULT_MIN_CONFIDENCE).unwrap_err();
        assert_eq!(err.index(), 2);
        assert!(matches!(err, CaptionError::Gateway { .. }));
    }

    #[test]
    fn instruction_never_reaches_captioner() {
        let t = trajectory(vec![ocr_state(0, &["Turn", "on"]), ocr_state(1, &["Wi-Fi"])]);
        for s in &t.states {
            for req in [build_caption_request(s, 0.0), build_caption_collection_request(s)] {
                assert!(!req.prompt_text.contains(&t.instruction.text));
            }
        }
    }
}
