//! Prompt templates with `<placeholder>` slots. Rendering is a single pass:
//! bound values are inserted verbatim and never re-expanded, so a value
//! containing angle brackets cannot inject further substitutions.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {template:?}: unbound placeholder <{name}>")]
    UnboundPlaceholder { template: String, name: String },
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    name: String,
    body: String,
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl PromptTemplate {
    pub fn new(name: &str, body: &str) -> Self {
        Self {
            name: name.to_string(),
            body: body.to_string(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Placeholder names appearing in the body.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        let bytes = self.body.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'<' {
                if let Some(end) = self.body[i + 1..].find('>') {
                    let candidate = &self.body[i + 1..i + 1 + end];
                    if is_placeholder_name(candidate) {
                        names.insert(candidate.to_string());
                        i += end + 2;
                        continue;
                    }
                }
            }
            i += 1;
        }
        names
    }

    /// Substitute every placeholder from `bindings`. Unused bindings are
    /// ignored; an unbound placeholder is an error naming it.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        let bytes = self.body.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'<' {
                if let Some(end) = self.body[i + 1..].find('>') {
                    let candidate = &self.body[i + 1..i + 1 + end];
                    if is_placeholder_name(candidate) {
                        let value = bindings.get(candidate).ok_or_else(|| {
                            TemplateError::UnboundPlaceholder {
                                template: self.name.clone(),
                                name: candidate.to_string(),
                            }
                        })?;
                        out.push_str(value);
                        i += end + 2;
                        continue;
                    }
                }
            }
            // Placeholders are pure ASCII, so a non-placeholder byte run can
            // be copied per byte without splitting UTF-8 sequences mid-char.
            let ch_len = utf8_len(bytes[i]);
            out.push_str(&self.body[i..i + ch_len]);
            i += ch_len;
        }
        Ok(out)
    }
}

fn utf8_len(first_byte: u8) -> usize {
    match first_byte {
        b if b < 0x80 => 1,
        b if b >> 5 == 0b110 => 2,
        b if b >> 4 == 0b1110 => 3,
        _ => 4,
    }
}

pub fn decompose_template() -> PromptTemplate {
    PromptTemplate::new("decompose", include_str!("../../templates/decompose.txt"))
}

pub fn plot_trajectory_template() -> PromptTemplate {
    PromptTemplate::new(
        "plot_trajectory",
        include_str!("../../templates/plot_trajectory.txt"),
    )
}

pub fn camera_motion_template() -> PromptTemplate {
    PromptTemplate::new(
        "camera_motion",
        include_str!("../../templates/camera_motion.txt"),
    )
}

pub fn rethink_template() -> PromptTemplate {
    PromptTemplate::new("rethink", include_str!("../../templates/rethink.txt"))
}

pub fn identify_template() -> PromptTemplate {
    PromptTemplate::new("identify", include_str!("../../templates/identify.txt"))
}
