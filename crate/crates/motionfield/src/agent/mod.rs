//! The conversational loop that turns a motion description into validated
//! actions: splitting the text into object and camera clauses, plotting a
//! trajectory over the labeled grid, generating a camera motion, optionally
//! confirming the start point by dialogue, and rethinking a prior action
//! against rendered feedback frames.

pub mod action;
pub mod backend;
pub mod pipeline;
pub mod template;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use action::{parse_reply, ActionParseError, AgentAction};
use backend::{BackendError, ChatBackend, ChatMessage, ImageAttachment};
use template::{
    camera_motion_template, decompose_template, identify_template, plot_trajectory_template,
    rethink_template, TemplateError,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Parse(#[from] ActionParseError),
    #[error("reply is missing the {0:?} line")]
    DecomposeFormat(&'static str),
    #[error("reply is neither a confirmation nor a replacement point")]
    IdentifyFormat,
    #[error("expected a {expected} action, got a {got} action")]
    WrongActionKind {
        expected: &'static str,
        got: &'static str,
    },
    #[error("rethink round cap ({0}) reached")]
    RethinkCapExceeded(usize),
}

impl AgentError {
    /// Parse-class failures earn one automatic retry; backend and template
    /// failures do not.
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            AgentError::Parse(_)
                | AgentError::DecomposeFormat(_)
                | AgentError::IdentifyFormat
                | AgentError::WrongActionKind { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub max_rethink_rounds: usize,
    /// Number of evenly spaced preview frames attached to a rethink prompt.
    pub feedback_frames: usize,
    /// Dialogue round cap for start-point confirmation.
    pub identify_rounds: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_rethink_rounds: 2,
            feedback_frames: 6,
            identify_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Decompose,
    Identify,
    Plot,
    Camera,
    Rethink,
}

/// One backend exchange, as recorded in the conversation history.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: StepKind,
    pub prompt: String,
    pub image_count: usize,
    pub response: String,
    pub retry: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConversationState {
    pub history: Vec<StepRecord>,
    pub rethink_round: usize,
}

/// The two halves of a motion description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MotionSplit {
    pub object_text: String,
    pub camera_text: String,
}

/// Outcome of the start-point dialogue. `confirmed` is false when the round
/// cap ran out before the backend accepted a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiedPoint {
    pub position: (f64, f64),
    pub rounds: usize,
    pub confirmed: bool,
}

pub struct AgentSession {
    backend: Box<dyn ChatBackend>,
    pub config: AgentConfig,
    pub state: ConversationState,
}

impl AgentSession {
    pub fn new(backend: Box<dyn ChatBackend>, config: AgentConfig) -> Self {
        Self {
            backend,
            config,
            state: ConversationState::default(),
        }
    }

    pub fn backend_descriptor(&self) -> String {
        self.backend.descriptor()
    }

    fn exchange(
        &mut self,
        step: StepKind,
        messages: &[ChatMessage],
        retry: bool,
    ) -> Result<String, AgentError> {
        let response = self.backend.send(messages)?;
        let last = messages.last().expect("at least one message");
        self.state.history.push(StepRecord {
            step,
            prompt: last.content.clone(),
            image_count: messages.iter().map(|m| m.images.len()).sum(),
            response: response.clone(),
            retry,
        });
        Ok(response)
    }

    /// Send a prompt and parse the reply; on a parse-class failure, retry
    /// once with the failure appended, then fail for good.
    fn exchange_parsed<T>(
        &mut self,
        step: StepKind,
        prompt: &str,
        images: &[ImageAttachment],
        parse: impl Fn(&str) -> Result<T, AgentError>,
    ) -> Result<T, AgentError> {
        let first = ChatMessage::user(prompt).with_images(images.to_vec());
        let response = self.exchange(step, std::slice::from_ref(&first), false)?;
        match parse(&response) {
            Ok(value) => Ok(value),
            Err(err) if err.is_retryable() => {
                let correction = format!(
                    "Your previous reply could not be used: {err}. \
                     Reply again, following the required format exactly."
                );
                let retry_messages = [
                    first,
                    ChatMessage::assistant(&response),
                    ChatMessage::user(&correction),
                ];
                let second = self.exchange(step, &retry_messages, true)?;
                parse(&second)
            }
            Err(err) => Err(err),
        }
    }

    /// Split a motion description into its object and camera clauses.
    pub fn decompose_motion_text(&mut self, prompt_text: &str) -> Result<MotionSplit, AgentError> {
        if prompt_text.trim().is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        let prompt = decompose_template().render(&bindings(&[(
            "motion_description",
            prompt_text.to_string(),
        )]))?;
        self.exchange_parsed(StepKind::Decompose, &prompt, &[], parse_motion_split)
    }

    /// Ask for a trajectory over the labeled grid image.
    pub fn plot_trajectory(
        &mut self,
        task: &str,
        start_point_location: &str,
        grid_image: &ImageAttachment,
    ) -> Result<AgentAction, AgentError> {
        let prompt = plot_trajectory_template().render(&bindings(&[
            ("task_description", task.to_string()),
            ("start_point_location", start_point_location.to_string()),
        ]))?;
        self.exchange_parsed(
            StepKind::Plot,
            &prompt,
            std::slice::from_ref(grid_image),
            |text| expect_kind(parse_reply(text)?.action, "trajectory"),
        )
    }

    /// Ask for a camera motion over the first frame.
    pub fn generate_camera(
        &mut self,
        task: &str,
        first_frame: &ImageAttachment,
    ) -> Result<AgentAction, AgentError> {
        let prompt = camera_motion_template()
            .render(&bindings(&[("task_description", task.to_string())]))?;
        self.exchange_parsed(
            StepKind::Camera,
            &prompt,
            std::slice::from_ref(first_frame),
            |text| expect_kind(parse_reply(text)?.action, "camera"),
        )
    }

    /// Confirm or correct a start point by dialogue. `render_candidate` draws
    /// the marker at a proposed point so each round shows its own candidate.
    pub fn identify_object(
        &mut self,
        object_text: &str,
        candidate: (f64, f64),
        mut render_candidate: impl FnMut((f64, f64)) -> Result<ImageAttachment, AgentError>,
    ) -> Result<IdentifiedPoint, AgentError> {
        let mut point = candidate;
        let max_rounds = self.config.identify_rounds.max(1);
        for round in 1..=max_rounds {
            let prompt = identify_template().render(&bindings(&[
                ("object_description", object_text.to_string()),
                ("candidate_point", format_point(point)),
            ]))?;
            let image = render_candidate(point)?;
            let verdict =
                self.exchange_parsed(StepKind::Identify, &prompt, &[image], parse_identify)?;
            match verdict {
                IdentifyVerdict::Confirmed => {
                    return Ok(IdentifiedPoint {
                        position: point,
                        rounds: round,
                        confirmed: true,
                    });
                }
                IdentifyVerdict::Replace(next) => point = next,
            }
        }
        Ok(IdentifiedPoint {
            position: point,
            rounds: max_rounds,
            confirmed: false,
        })
    }

    /// Revisit a prior action given rendered feedback frames. Returns the new
    /// (possibly identical) action of the same kind and counts the round.
    pub fn rethink(
        &mut self,
        task: &str,
        prior: &AgentAction,
        feedback_frames: &[ImageAttachment],
    ) -> Result<AgentAction, AgentError> {
        if self.state.rethink_round >= self.config.max_rethink_rounds {
            return Err(AgentError::RethinkCapExceeded(self.config.max_rethink_rounds));
        }
        let prompt = rethink_template().render(&bindings(&[
            ("task_description", task.to_string()),
            ("former_action", prior.raw_text.clone()),
        ]))?;
        let expected = prior.action.kind();
        let action =
            self.exchange_parsed(StepKind::Rethink, &prompt, feedback_frames, |text| {
                expect_kind(parse_reply(text)?.action, expected)
            })?;
        self.state.rethink_round += 1;
        Ok(action)
    }
}

fn bindings(pairs: &[(&'static str, String)]) -> BTreeMap<&'static str, String> {
    pairs.iter().cloned().collect()
}

fn format_point(point: (f64, f64)) -> String {
    format!("({:.0}, {:.0})", point.0, point.1)
}

fn expect_kind(action: AgentAction, expected: &'static str) -> Result<AgentAction, AgentError> {
    let got = action.action.kind();
    if got == expected {
        Ok(action)
    } else {
        Err(AgentError::WrongActionKind { expected, got })
    }
}

fn parse_motion_split(text: &str) -> Result<MotionSplit, AgentError> {
    let mut object_text = None;
    let mut camera_text = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("Object motion:") {
            object_text.get_or_insert_with(|| rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("Camera motion:") {
            camera_text.get_or_insert_with(|| rest.trim().to_string());
        }
    }
    Ok(MotionSplit {
        object_text: object_text.ok_or(AgentError::DecomposeFormat("Object motion:"))?,
        camera_text: camera_text.ok_or(AgentError::DecomposeFormat("Camera motion:"))?,
    })
}

enum IdentifyVerdict {
    Confirmed,
    Replace((f64, f64)),
}

fn parse_identify(text: &str) -> Result<IdentifyVerdict, AgentError> {
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with("Confirmed") {
            return Ok(IdentifyVerdict::Confirmed);
        }
        if let Some(rest) = line.strip_prefix("Point:") {
            let inner = rest
                .trim()
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or(AgentError::IdentifyFormat)?;
            let (x_text, y_text) = inner.split_once(',').ok_or(AgentError::IdentifyFormat)?;
            let x: f64 = x_text.trim().parse().map_err(|_| AgentError::IdentifyFormat)?;
            let y: f64 = y_text.trim().parse().map_err(|_| AgentError::IdentifyFormat)?;
            if !(x.is_finite() && y.is_finite()) {
                return Err(AgentError::IdentifyFormat);
            }
            return Ok(IdentifyVerdict::Replace((x, y)));
        }
    }
    Err(AgentError::IdentifyFormat)
}
