//! Versioned prompt assets with `{placeholder}` substitution.
//!
//! Assets live in `templates/` next to the crate manifest and are compiled in.
//! Each file holds its text exactly, minus the final newline of the file.

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    raw: &'static str,
}

macro_rules! asset {
    ($name:literal) => {
        Template {
            name: $name,
            raw: include_str!(concat!("../templates/", $name, ".txt")),
        }
    };
}

pub const WEB_TRAJECTORY_E2E_SYSTEM: Template = asset!("web_trajectory_e2e.system");
pub const WEB_TRAJECTORY_E2E_USER: Template = asset!("web_trajectory_e2e.user");
pub const ANDROID_TRAJECTORY_E2E_SYSTEM: Template = asset!("android_trajectory_e2e.system");
pub const ANDROID_TRAJECTORY_E2E_USER: Template = asset!("android_trajectory_e2e.user");
pub const WEB_TRAJECTORY_MODULAR_SYSTEM: Template = asset!("web_trajectory_modular.system");
pub const WEB_TRAJECTORY_MODULAR_USER: Template = asset!("web_trajectory_modular.user");
pub const ANDROID_TRAJECTORY_MODULAR_SYSTEM: Template = asset!("android_trajectory_modular.system");
pub const ANDROID_TRAJECTORY_MODULAR_USER: Template = asset!("android_trajectory_modular.user");
pub const STEP_MODULAR_SYSTEM: Template = asset!("step_modular.system");
pub const STEP_MODULAR_USER: Template = asset!("step_modular.user");
pub const CAPTION_COLLECTION_USER: Template = asset!("caption_collection.user");
pub const CAPTION_OCR_USER: Template = asset!("caption_ocr.user");
pub const REFLECTION_SYSTEM: Template = asset!("reflection.system");
pub const REFLECTION_USER: Template = asset!("reflection.user");

pub const ALL: [Template; 14] = [
    WEB_TRAJECTORY_E2E_SYSTEM,
    WEB_TRAJECTORY_E2E_USER,
    ANDROID_TRAJECTORY_E2E_SYSTEM,
    ANDROID_TRAJECTORY_E2E_USER,
    WEB_TRAJECTORY_MODULAR_SYSTEM,
    WEB_TRAJECTORY_MODULAR_USER,
    ANDROID_TRAJECTORY_MODULAR_SYSTEM,
    ANDROID_TRAJECTORY_MODULAR_USER,
    STEP_MODULAR_SYSTEM,
    STEP_MODULAR_USER,
    CAPTION_COLLECTION_USER,
    CAPTION_OCR_USER,
    REFLECTION_SYSTEM,
    REFLECTION_USER,
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: no value for placeholder {{{placeholder}}}")]
    MissingValue {
        template: &'static str,
        placeholder: String,
    },
}

impl Template {
    pub fn text(&self) -> &'static str {
        self.raw.strip_suffix('\n').unwrap_or(self.raw)
    }

    /// Substitutes every `{name}` in one pass. Substituted values are never
    /// rescanned, so they may contain braces freely. Braces that do not
    /// enclose a lowercase identifier are literal text.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let text = self.text();
        let mut out = String::with_capacity(text.len() + 256);
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let ident_len = after
                .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
                .unwrap_or(after.len());
            if ident_len > 0 && after[ident_len..].starts_with('}') {
                let name = &after[..ident_len];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::MissingValue {
                        template: self.name,
                        placeholder: name.to_string(),
                    })?;
                out.push_str(value);
                rest = &after[ident_len + 1..];
            } else {
                out.push('{');
                rest = after;
            }
        }
        out.push_str(rest);
        Ok(out)
    }

    pub fn placeholders(&self) -> Vec<&'static str> {
        let text = self.text();
        let mut found = Vec::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let len = after
                .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
                .unwrap_or(after.len());
            if len > 0 && after[len..].starts_with('}') {
                found.push(&after[..len]);
            }
            rest = after;
        }
        found
    }
}

/// Hex SHA-256 over all template names and texts; recorded in run manifests.
pub fn assets_hash() -> String {
    let mut h = Sha256::new();
    for t in ALL {
        h.update(t.name.as_bytes());
        h.update([0]);
        h.update(t.text().as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}
