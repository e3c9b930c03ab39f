//! Parsing backend replies into validated actions. A reply is structured as
//! Observation / Thought / Action / Summary sections; the Action section
//! holds one function call, either a trajectory plot (`Set_1_Points` …
//! `Set_4_Points`) or a camera motion (`Set_Camera_Motion`). Every accepted
//! action satisfies the target type's own invariants — range and literal
//! violations surface as distinct error kinds so a rethink round can report
//! the failure class.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::camera_path::{CameraMotionSpec, CameraPathError, MotionType};
use crate::trajectory::{parse_set_points, TrajectoryError, TrajectorySpec};

#[derive(Debug, Error)]
pub enum ActionParseError {
    #[error("reply has no Action section")]
    MissingActionSection,
    #[error("Action section is empty")]
    EmptyAction,
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("malformed call: {0}")]
    MalformedCall(String),
    #[error("missing argument {0:?}")]
    MissingArgument(&'static str),
    #[error("duplicate argument {0:?}")]
    DuplicateArgument(String),
    #[error("unexpected argument {0:?}")]
    UnexpectedArgument(String),
    #[error("argument {key}: cannot read {value:?} as {expected}")]
    BadArgumentValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Camera(#[from] CameraPathError),
}

/// A validated function call extracted from a backend reply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentAction {
    pub function_name: String,
    pub action: ParsedAction,
    /// The Action section text the call was parsed from.
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedAction {
    Trajectory(TrajectorySpec),
    Camera(CameraMotionSpec),
}

impl ParsedAction {
    pub fn kind(&self) -> &'static str {
        match self {
            ParsedAction::Trajectory(_) => "trajectory",
            ParsedAction::Camera(_) => "camera",
        }
    }
}

/// A fully sectioned reply; only the action is mandatory.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply {
    pub observation: Option<String>,
    pub thought: Option<String>,
    pub action: AgentAction,
    pub summary: Option<String>,
}

const SECTION_NAMES: [&str; 4] = ["Observation", "Thought", "Action", "Summary"];

/// Strip list markers, emphasis, and heading characters from a line start.
fn strip_line_decor(line: &str) -> &str {
    line.trim_start_matches(|c: char| c.is_whitespace() || c == '-' || c == '*' || c == '#')
}

/// Split a reply into its named sections. Returns the first occurrence of
/// each; text before any header is ignored.
fn split_sections(text: &str) -> BTreeMap<&'static str, String> {
    let mut sections: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for line in text.lines() {
        let stripped = strip_line_decor(line);
        let mut matched = None;
        for name in SECTION_NAMES {
            if let Some(rest) = stripped.strip_prefix(name) {
                if let Some(content) = rest.trim_start_matches('*').strip_prefix(':') {
                    matched = Some((name, content.trim_start_matches('*').trim().to_string()));
                    break;
                }
            }
        }
        match matched {
            Some((name, first_line)) => {
                current = if sections.contains_key(name) {
                    // A repeated header starts a section we already captured;
                    // keep the first and stop appending.
                    None
                } else {
                    sections.insert(name, first_line);
                    Some(name)
                };
            }
            None => {
                if let Some(name) = current {
                    let entry = sections.get_mut(name).expect("current section exists");
                    if !entry.is_empty() {
                        entry.push(' ');
                    }
                    entry.push_str(line.trim());
                }
            }
        }
    }
    sections
}

/// Parse a full Observation/Thought/Action/Summary reply.
pub fn parse_reply(text: &str) -> Result<AgentReply, ActionParseError> {
    let mut sections = split_sections(text);
    let action_text = sections
        .remove("Action")
        .ok_or(ActionParseError::MissingActionSection)?;
    let action = parse_action_text(&action_text)?;
    Ok(AgentReply {
        observation: sections.remove("Observation"),
        thought: sections.remove("Thought"),
        action,
        summary: sections.remove("Summary"),
    })
}

/// Parse one function call (the Action section's content).
pub fn parse_action_text(text: &str) -> Result<AgentAction, ActionParseError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ActionParseError::EmptyAction);
    }
    let paren = trimmed
        .find('(')
        .ok_or_else(|| ActionParseError::MalformedCall("no argument list".to_string()))?;
    let function_name = trimmed[..paren].trim().to_string();
    let action = match function_name.as_str() {
        "Set_1_Points" | "Set_2_Points" | "Set_3_Points" | "Set_4_Points" => {
            ParsedAction::Trajectory(parse_set_points(trimmed)?)
        }
        "Set_Camera_Motion" => ParsedAction::Camera(parse_camera_call(&trimmed[paren..])?),
        _ => return Err(ActionParseError::UnknownFunction(function_name)),
    };
    Ok(AgentAction {
        function_name,
        action,
        raw_text: trimmed.to_string(),
    })
}

const CAMERA_KEYS: [&str; 7] = [
    "x_translation",
    "y_translation",
    "z_translation",
    "x_rotation",
    "y_rotation",
    "z_rotation",
    "motion_type",
];

/// Parse the parenthesized argument list of a `Set_Camera_Motion` call.
fn parse_camera_call(args_text: &str) -> Result<CameraMotionSpec, ActionParseError> {
    let open = args_text
        .find('(')
        .ok_or_else(|| ActionParseError::MalformedCall("no opening parenthesis".to_string()))?;
    let close = args_text
        .rfind(')')
        .ok_or_else(|| ActionParseError::MalformedCall("no closing parenthesis".to_string()))?;
    if close < open {
        return Err(ActionParseError::MalformedCall(
            "closing parenthesis before opening".to_string(),
        ));
    }
    if !args_text[close + 1..].trim().is_empty() {
        return Err(ActionParseError::MalformedCall(format!(
            "trailing text {:?} after the call",
            args_text[close + 1..].trim()
        )));
    }
    let body = &args_text[open + 1..close];

    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(ActionParseError::MalformedCall(
                "empty argument between commas".to_string(),
            ));
        }
        let (key_raw, value_raw) = part.split_once(':').ok_or_else(|| {
            ActionParseError::MalformedCall(format!("argument {part:?} is not key: value"))
        })?;
        let key = key_raw.trim();
        let value = value_raw.trim();
        let canonical = CAMERA_KEYS
            .iter()
            .copied()
            .find(|&k| k == key)
            .ok_or_else(|| ActionParseError::UnexpectedArgument(key.to_string()))?;
        if values.insert(canonical, value.to_string()).is_some() {
            return Err(ActionParseError::DuplicateArgument(key.to_string()));
        }
    }
    for key in CAMERA_KEYS {
        if !values.contains_key(key) {
            return Err(ActionParseError::MissingArgument(key));
        }
    }

    let translation = |key: &str| -> Result<f64, ActionParseError> {
        let value = &values[key];
        value
            .parse::<f64>()
            .map_err(|_| ActionParseError::BadArgumentValue {
                key: key.to_string(),
                value: value.clone(),
                expected: "decimal number",
            })
    };
    let rotation = |key: &str| -> Result<i64, ActionParseError> {
        let value = &values[key];
        value
            .parse::<i64>()
            .map_err(|_| ActionParseError::BadArgumentValue {
                key: key.to_string(),
                value: value.clone(),
                expected: "whole number of degrees",
            })
    };
    let motion_raw = values["motion_type"].trim();
    let motion_unquoted = motion_raw
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(motion_raw);
    let motion_type: MotionType = motion_unquoted.parse().map_err(ActionParseError::Camera)?;

    let spec = CameraMotionSpec {
        x_translation: translation("x_translation")?,
        y_translation: translation("y_translation")?,
        z_translation: translation("z_translation")?,
        x_rotation: rotation("x_rotation")?,
        y_rotation: rotation("y_rotation")?,
        z_rotation: rotation("z_rotation")?,
        motion_type,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Subarea;

    const CAMERA_CALL: &str = "Set_Camera_Motion(x_translation: 0.0, y_translation: 0.0, \
        z_translation: 0.8, x_rotation: 0, y_rotation: 0, z_rotation: 0, motion_type: uniform)";

    #[test]
    fn parses_a_full_reply() {
        let text = format!(
            "Observation: A road scene.\n\
             Thought: Push the camera forward.\n\
             Action: {CAMERA_CALL}\n\
             Summary: Set a forward dolly."
        );
        let reply = parse_reply(&text).unwrap();
        assert_eq!(reply.observation.as_deref(), Some("A road scene."));
        assert_eq!(reply.thought.as_deref(), Some("Push the camera forward."));
        assert_eq!(reply.summary.as_deref(), Some("Set a forward dolly."));
        assert_eq!(reply.action.function_name, "Set_Camera_Motion");
        match &reply.action.action {
            ParsedAction::Camera(spec) => {
                assert_eq!(spec.z_translation, 0.8);
                assert_eq!(spec.motion_type, MotionType::Uniform);
            }
            other => panic!("wrong action kind: {other:?}"),
        }
    }

    #[test]
    fn parses_a_trajectory_action() {
        let text = "Observation: grid.\nThought: move.\n\
            Action: Set_2_Points (start: 143, top-right; end: 33, bottom-right)\nSummary: done.";
        let reply = parse_reply(text).unwrap();
        match &reply.action.action {
            ParsedAction::Trajectory(spec) => {
                assert_eq!(spec.points.len(), 2);
                assert_eq!(spec.points[0].area, 143);
                assert_eq!(spec.points[0].subarea, Subarea::TopRight);
            }
            other => panic!("wrong action kind: {other:?}"),
        }
    }

    #[test]
    fn decorated_headers_are_tolerated() {
        let text = format!(
            "-- **Observation:** scene\n-- **Thought:** plan\n-- **Action:** {CAMERA_CALL}\n\
             -- **Summary:** done"
        );
        let reply = parse_reply(&text).unwrap();
        assert_eq!(reply.observation.as_deref(), Some("scene"));
        assert_eq!(reply.action.function_name, "Set_Camera_Motion");
    }

    #[test]
    fn multi_line_action_call_is_joined() {
        let text = "Action: Set_Camera_Motion(x_translation: 0.1,\n  y_translation: 0.0,\n  \
            z_translation: 0.0, x_rotation: 0,\n  y_rotation: 0, z_rotation: 0,\n  \
            motion_type: increment)";
        let action = parse_reply(text).unwrap().action;
        match action.action {
            ParsedAction::Camera(spec) => {
                assert_eq!(spec.x_translation, 0.1);
                assert_eq!(spec.motion_type, MotionType::Increment);
            }
            other => panic!("wrong action kind: {other:?}"),
        }
    }

    #[test]
    fn missing_action_section_is_its_own_error() {
        let err = parse_reply("Observation: nothing else").unwrap_err();
        assert!(matches!(err, ActionParseError::MissingActionSection));
    }

    #[test]
    fn unknown_function_is_rejected() {
        let err = parse_action_text("Move_Camera(x: 1)").unwrap_err();
        assert!(matches!(err, ActionParseError::UnknownFunction(name) if name == "Move_Camera"));
    }

    #[test]
    fn out_of_range_translation_reports_the_range_violation() {
        let text = CAMERA_CALL.replace("x_translation: 0.0", "x_translation: 1.5");
        let err = parse_action_text(&text).unwrap_err();
        assert!(matches!(
            err,
            ActionParseError::Camera(CameraPathError::TranslationOutOfRange { .. })
        ));
    }

    #[test]
    fn out_of_range_rotation_reports_the_range_violation() {
        let text = CAMERA_CALL.replace("y_rotation: 0", "y_rotation: 360");
        let err = parse_action_text(&text).unwrap_err();
        assert!(matches!(
            err,
            ActionParseError::Camera(CameraPathError::RotationOutOfRange { .. })
        ));
    }

    #[test]
    fn unknown_motion_type_reports_the_literal_violation() {
        let text = CAMERA_CALL.replace("motion_type: uniform", "motion_type: bouncy");
        let err = parse_action_text(&text).unwrap_err();
        assert!(matches!(
            err,
            ActionParseError::Camera(CameraPathError::UnknownMotionType(_))
        ));
    }

    #[test]
    fn quoted_motion_type_is_accepted() {
        let text = CAMERA_CALL.replace("motion_type: uniform", "motion_type: \"decrement\"");
        let action = parse_action_text(&text).unwrap();
        match action.action {
            ParsedAction::Camera(spec) => assert_eq!(spec.motion_type, MotionType::Decrement),
            other => panic!("wrong action kind: {other:?}"),
        }
    }

    #[test]
    fn fractional_rotation_is_rejected() {
        let text = CAMERA_CALL.replace("x_rotation: 0", "x_rotation: 15.5");
        let err = parse_action_text(&text).unwrap_err();
        assert!(matches!(
            err,
            ActionParseError::BadArgumentValue { key, .. } if key == "x_rotation"
        ));
    }

    #[test]
    fn missing_duplicate_and_unexpected_arguments_are_distinct() {
        let missing = CAMERA_CALL.replace("x_translation: 0.0, ", "");
        assert!(matches!(
            parse_action_text(&missing).unwrap_err(),
            ActionParseError::MissingArgument("x_translation")
        ));
        let duplicated = CAMERA_CALL.replace(
            "x_translation: 0.0",
            "x_translation: 0.0, x_translation: 0.1",
        );
        assert!(matches!(
            parse_action_text(&duplicated).unwrap_err(),
            ActionParseError::DuplicateArgument(_)
        ));
        let extra = CAMERA_CALL.replace("motion_type: uniform", "motion_type: uniform, warp: 2");
        assert!(matches!(
            parse_action_text(&extra).unwrap_err(),
            ActionParseError::UnexpectedArgument(_)
        ));
    }

    #[test]
    fn trailing_text_after_the_call_is_rejected() {
        let err = parse_action_text(&format!("{CAMERA_CALL} and then some")).unwrap_err();
        assert!(matches!(err, ActionParseError::MalformedCall(_)));
    }

    #[test]
    fn trajectory_range_violations_pass_through() {
        let err =
            parse_action_text("Set_2_Points (start: 143, upper-left; end: 33, bottom-right)")
                .unwrap_err();
        assert!(matches!(err, ActionParseError::Trajectory(_)));
    }

    #[test]
    fn empty_action_is_rejected() {
        assert!(matches!(
            parse_action_text("  "),
            Err(ActionParseError::EmptyAction)
        ));
        let err = parse_reply("Action:\nSummary: nothing").unwrap_err();
        assert!(matches!(err, ActionParseError::EmptyAction));
    }

    #[test]
    fn repeated_sections_keep_the_first() {
        let text = format!("Action: {CAMERA_CALL}\nAction: Set_1_Points (start: 0, center)");
        let reply = parse_reply(&text).unwrap();
        assert_eq!(reply.action.function_name, "Set_Camera_Motion");
    }
}
