//! Caption prompts, an offline template renderer and a chat-completion client.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{DescriptorKind, HandScope};
use crate::events::{Event, EventError, EventKind, FeatureDoc};
use crate::motion::{Finger, Segment};

pub const ENV_BASE_URL: &str = "HANDKIT_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "HANDKIT_LLM_API_KEY";
pub const ENV_MODEL: &str = "HANDKIT_LLM_MODEL";

pub const DEFAULT_LEFT: &str = "the left hand is still";
pub const DEFAULT_RIGHT: &str = "the right hand is still";
pub const DEFAULT_INTER: &str = "the hands do not interact";

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Features(#[from] EventError),
    #[error("endpoint not configured: {0} is unset")]
    NotConfigured(&'static str),
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication rejected with status {0}")]
    Auth(u16),
    #[error("endpoint returned status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unparseable reply after {attempts} attempts: {reason}")]
    Parse { attempts: usize, reason: String },
}

impl CaptionError {
    /// Stable machine-readable category.
    pub fn code(&self) -> &'static str {
        match self {
            CaptionError::InvalidRequest(_) | CaptionError::Features(_) => "invalid_request",
            CaptionError::NotConfigured(_) => "not_configured",
            CaptionError::Network(_) => "network",
            CaptionError::Auth(_) => "auth",
            CaptionError::Http { .. } => "http",
            CaptionError::Parse { .. } => "reply_parse",
        }
    }
}

/// Granularity levels, least to most detailed.
pub const LEVELS: [u8; 5] = [1, 2, 3, 4, 5];

pub fn level_definition(level: u8) -> &'static str {
    match level {
        1 => {
            "Level 1 (concise): one short sentence per part covering only the most salient motion."
        }
        2 => "Level 2 (brief): the main motions of each hand and the key interaction.",
        3 => "Level 3 (balanced): about half of the events, with their order in time.",
        4 => "Level 4 (detailed): most events, including finger-level states and timing.",
        5 => {
            "Level 5 (comprehensive): every event, finger by finger, in temporal order with timing."
        }
        _ => "",
    }
}

/// Number of events verbalized at `level` out of `n`.
pub fn level_count(level: u8, n: usize) -> usize {
    let frac = |num: usize, den: usize| (n * num).div_ceil(den);
    match level {
        1 => n.min(3),
        2 => n.min(6),
        3 => frac(1, 2),
        4 => frac(4, 5),
        _ => n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleKnobs {
    /// Free-form tone hint, e.g. "plain".
    pub tone: String,
    /// Soft word budget per part for the most detailed level.
    pub max_words: usize,
}

impl Default for StyleKnobs {
    fn default() -> Self {
        Self {
            tone: "plain".into(),
            max_words: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionRequest {
    pub feature_json: String,
    pub levels: BTreeSet<u8>,
    pub style: StyleKnobs,
}

impl CaptionRequest {
    pub fn new(feature_json: impl Into<String>, levels: impl IntoIterator<Item = u8>) -> Self {
        Self {
            feature_json: feature_json.into(),
            levels: levels.into_iter().collect(),
            style: StyleKnobs::default(),
        }
    }

    /// Checks the levels and parses the features.
    pub fn validate(&self) -> Result<FeatureDoc, CaptionError> {
        check_levels(&self.levels)?;
        Ok(FeatureDoc::parse(&self.feature_json)?)
    }
}

pub fn check_levels(levels: &BTreeSet<u8>) -> Result<(), CaptionError> {
    if levels.is_empty() {
        return Err(CaptionError::InvalidRequest("no levels requested".into()));
    }
    if let Some(l) = levels.iter().find(|l| !LEVELS.contains(l)) {
        return Err(CaptionError::InvalidRequest(format!(
            "level {l} outside 1..5"
        )));
    }
    Ok(())
}

/// Parses `"1,3,5"`.
pub fn parse_levels(s: &str) -> Result<BTreeSet<u8>, CaptionError> {
    let levels = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u8>()
                .map_err(|_| CaptionError::InvalidRequest(format!("bad level {p:?}")))
        })
        .collect::<Result<BTreeSet<u8>, _>>()?;
    check_levels(&levels)?;
    Ok(levels)
}

pub const PART_INSTRUCTION: &str = "Describe the motion in three separate parts: the left hand, the right hand, and the inter-hand relationship between them.";
pub const EVENT_INSTRUCTION: &str = "Always report critical motion events such as contact, separation, and hyperextension when they occur.";
pub const TEMPORAL_INSTRUCTION: &str = "Keep the temporal order of events and use their timing to say what happens first, next, and last.";

/// The prompt for one request. Pure: identical requests give identical text.
pub fn build_prompt(req: &CaptionRequest) -> Result<String, CaptionError> {
    let doc = req.validate()?;
    let mut p = String::new();
    p.push_str(
        "You are annotating a bimanual hand motion clip from structured kinematic features.\n\n",
    );
    p.push_str("Instructions:\n");
    p.push_str(&format!("1. {PART_INSTRUCTION}\n"));
    p.push_str(&format!("2. {EVENT_INSTRUCTION}\n"));
    p.push_str(&format!("3. {TEMPORAL_INSTRUCTION}\n"));
    p.push_str(&format!(
        "4. Use a {} tone and at most {} words per part.\n\n",
        req.style.tone, req.style.max_words
    ));
    p.push_str("Produce a description for each of these levels:\n");
    for &l in &req.levels {
        p.push_str(level_definition(l));
        p.push('\n');
    }
    p.push_str(&format!(
        "\nThe clip lasts {:.2} s at {} fps. Frame indices below refer to that rate.\n",
        doc.duration_s(),
        doc.fps
    ));
    p.push_str("\nFeatures:\n");
    p.push_str(&req.feature_json);
    p.push_str("\n\n");
    p.push_str(&reply_format(&req.levels));
    Ok(p)
}

fn reply_format(levels: &BTreeSet<u8>) -> String {
    let keys: Vec<String> = levels.iter().map(|l| format!("\"{l}\"")).collect();
    format!(
        "Reply with a single fenced ```json block holding one object keyed by level ({}), \
         each value an object with exactly the string fields \"left\", \"right\" and \"inter\".",
        keys.join(", ")
    )
}

/// Left, right and inter-hand text for one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionTriple {
    pub left: String,
    pub right: String,
    pub inter: String,
}

impl CaptionTriple {
    fn is_complete(&self) -> bool {
        [&self.left, &self.right, &self.inter]
            .iter()
            .all(|s| !s.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaptionSet {
    pub levels: BTreeMap<u8, CaptionTriple>,
}

fn finger_word(f: Finger) -> String {
    match f {
        Finger::Thumb => "thumb".into(),
        other => format!("{} finger", other.name()),
    }
}

fn segment_word(s: Segment) -> &'static str {
    match s {
        Segment::Mcp => "knuckle",
        Segment::Pip => "middle joint",
        Segment::Dip => "end joint",
        Segment::Tip => "tip",
    }
}

fn hand_word(h: HandScope) -> &'static str {
    h.name()
}

fn other_hand(h: HandScope) -> &'static str {
    match h {
        HandScope::Left => "right",
        HandScope::Right => "left",
        HandScope::Both => "both",
    }
}

/// The noun phrase naming what an event is about.
pub fn subject(e: &Event) -> String {
    let hand = hand_word(e.hand);
    let fallback = || format!("the {hand} {}", e.target.replace(['_', '-'], " "));
    match e.descriptor {
        DescriptorKind::FingerFlexing => {
            let mut it = e.target.splitn(2, '_');
            match (
                it.next().and_then(Finger::parse),
                it.next().and_then(Segment::parse),
            ) {
                (Some(f), Some(s)) => {
                    format!("the {hand} {} {}", finger_word(f), segment_word(s))
                }
                _ => fallback(),
            }
        }
        DescriptorKind::FingerSpacing => match finger_pair(&e.target) {
            Some((a, b)) => format!(
                "the spacing between the {hand} {} and {}",
                finger_word(a),
                finger_word(b)
            ),
            None => fallback(),
        },
        DescriptorKind::FingerFingerDistance => {
            if e.hand == HandScope::Both {
                let sides: Vec<Option<(String, Finger)>> = e
                    .target
                    .split('-')
                    .map(|t| {
                        let (h, f) = t.split_once('_')?;
                        Some((h.to_string(), Finger::parse(f)?))
                    })
                    .collect();
                match sides.as_slice() {
                    [Some((ha, fa)), Some((hb, fb))] => format!(
                        "the {ha} {} tip and the {hb} {} tip",
                        finger_word(*fa),
                        finger_word(*fb)
                    ),
                    _ => fallback(),
                }
            } else {
                match finger_pair(&e.target) {
                    Some((a, b)) => format!(
                        "the {hand} {} tip and {} tip",
                        finger_word(a),
                        finger_word(b)
                    ),
                    None => fallback(),
                }
            }
        }
        DescriptorKind::FingerPalmDistance => {
            match e.target.strip_suffix("_tip").and_then(Finger::parse) {
                Some(f) => format!("the {hand} {} tip", finger_word(f)),
                None => fallback(),
            }
        }
        DescriptorKind::PalmPalmRelation => "the right palm relative to the left palm".into(),
        DescriptorKind::WristTrajectory => format!("the {hand} hand"),
    }
}

fn finger_pair(target: &str) -> Option<(Finger, Finger)> {
    let (a, b) = target.split_once('-')?;
    Some((Finger::parse(a)?, Finger::parse(b)?))
}

fn seconds(frame: usize, fps: f64) -> String {
    format!("{:.2}s", frame as f64 / fps)
}

/// Predicate wording of a table state, e.g. "no contact" becomes "apart".
pub fn state_phrase(e: &Event, state: &str) -> String {
    match (e.descriptor, state) {
        (DescriptorKind::FingerFlexing, "hyper extend") => "hyperextended".into(),
        (DescriptorKind::FingerFlexing, "fully extend") => "fully extended".into(),
        (DescriptorKind::FingerFingerDistance, "contact") => "in contact".into(),
        (DescriptorKind::FingerFingerDistance, "no contact") => "apart".into(),
        (DescriptorKind::FingerPalmDistance, s) => {
            let palm = format!("the {} palm", other_hand(e.hand));
            match s {
                "contact" => format!("touching {palm}"),
                "near" => format!("near {palm}"),
                "far" => format!("far from {palm}"),
                other => format!("{other} relative to {palm}"),
            }
        }
        (_, s) => s.to_string(),
    }
}

/// One sentence for one event.
pub fn sentence(e: &Event, fps: f64) -> String {
    let (t0, t1) = (seconds(e.start_frame, fps), seconds(e.end_frame, fps));
    let who = subject(e);
    let plural = e.descriptor == DescriptorKind::FingerFingerDistance;
    let (go, stay) = if plural {
        ("go", "stay")
    } else {
        ("goes", "stays")
    };
    let axis = e.descriptor.is_vector();
    match (e.kind, axis) {
        (EventKind::Transition, false) => format!(
            "{who} {go} from {} to {} between {t0} and {t1}",
            state_phrase(e, &e.from_state),
            state_phrase(e, &e.to_state)
        ),
        (EventKind::Constant, false) => {
            format!(
                "{who} {stay} {} from {t0} to {t1}",
                state_phrase(e, &e.to_state)
            )
        }
        (EventKind::Transition, true) => format!("{who} {} between {t0} and {t1}", e.to_state),
        (EventKind::Constant, true) => format!("{who} is {} from {t0} to {t1}", e.to_state),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Left,
    Right,
    Inter,
}

/// Which caption part an event belongs to.
pub fn part_of(e: &Event) -> Part {
    match (e.descriptor, e.hand) {
        (DescriptorKind::FingerPalmDistance, _) | (_, HandScope::Both) => Part::Inter,
        (_, HandScope::Left) => Part::Left,
        (_, HandScope::Right) => Part::Right,
    }
}

/// Events kept at `level`: longest spans first (ties by document order),
/// returned in temporal order.
pub fn select_events(events: &[Event], level: u8) -> Vec<&Event> {
    let mut idx: Vec<usize> = (0..events.len()).collect();
    idx.sort_by_key(|&i| (std::cmp::Reverse(events[i].span_len()), i));
    idx.truncate(level_count(level, events.len()));
    idx.sort_by_key(|&i| (events[i].start_frame, events[i].end_frame, i));
    idx.into_iter().map(|i| &events[i]).collect()
}

fn join_or(sentences: Vec<String>, default: &str) -> String {
    if sentences.is_empty() {
        default.to_string()
    } else {
        sentences.join(". ")
    }
}

/// Deterministic captions from fixed sentence templates.
pub fn render_template_captions(doc: &FeatureDoc, levels: &BTreeSet<u8>) -> CaptionSet {
    let mut out = BTreeMap::new();
    for &level in levels {
        let (mut l, mut r, mut i) = (Vec::new(), Vec::new(), Vec::new());
        for e in select_events(&doc.events, level) {
            let s = sentence(e, doc.fps);
            match part_of(e) {
                Part::Left => l.push(s),
                Part::Right => r.push(s),
                Part::Inter => i.push(s),
            }
        }
        out.insert(
            level,
            CaptionTriple {
                left: join_or(l, DEFAULT_LEFT),
                right: join_or(r, DEFAULT_RIGHT),
                inter: join_or(i, DEFAULT_INTER),
            },
        );
    }
    CaptionSet { levels: out }
}

/// Extracts the caption object from a model reply. The reply should hold a
/// fenced json block; a bare object is accepted too.
pub fn parse_reply(reply: &str, levels: &BTreeSet<u8>) -> Result<CaptionSet, String> {
    let body = fenced_json(reply).unwrap_or(reply.trim());
    let raw: BTreeMap<String, CaptionTriple> =
        serde_json::from_str(body).map_err(|e| format!("reply is not the caption object: {e}"))?;
    let mut out = BTreeMap::new();
    for (k, v) in raw {
        let level: u8 = k
            .trim()
            .parse()
            .map_err(|_| format!("bad level key {k:?}"))?;
        if !v.is_complete() {
            return Err(format!("level {level} has an empty part"));
        }
        out.insert(level, v);
    }
    if let Some(l) = levels.iter().find(|l| !out.contains_key(l)) {
        return Err(format!("level {l} missing"));
    }
    out.retain(|l, _| levels.contains(l));
    Ok(CaptionSet { levels: out })
}

fn fenced_json(reply: &str) -> Option<&str> {
    let start = reply.find("```")?;
    let after = &reply[start + 3..];
    let after = after.strip_prefix("json").unwrap_or(after);
    let end = after.find("```")?;
    Some(after[..end].trim())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    /// Extra attempts after an unparseable reply.
    pub max_retries: usize,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn from_env() -> Result<Self, CaptionError> {
        let get = |k: &'static str| std::env::var(k).map_err(|_| CaptionError::NotConfigured(k));
        Ok(Self {
            base_url: get(ENV_BASE_URL)?,
            api_key: get(ENV_API_KEY)?,
            model: get(ENV_MODEL)?,
            max_retries: 2,
            timeout: Duration::from_secs(120),
        })
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Sends one chat exchange and returns the assistant text.
pub trait ChatTransport: Sync {
    fn complete(
        &self,
        cfg: &EndpointConfig,
        messages: &[ChatMessage],
    ) -> Result<String, CaptionError>;
}

/// Chat-completion JSON over HTTP(S).
#[derive(Debug, Default, Clone, Copy)]
pub struct HttpTransport;

impl ChatTransport for HttpTransport {
    fn complete(
        &self,
        cfg: &EndpointConfig,
        messages: &[ChatMessage],
    ) -> Result<String, CaptionError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let body = serde_json::json!({
            "model": cfg.model,
            "messages": messages,
            "temperature": 0,
        });
        let mut resp = agent
            .post(&cfg.completions_url())
            .header("Authorization", &format!("Bearer {}", cfg.api_key))
            .send_json(&body)
            .map_err(|e| CaptionError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CaptionError::Network(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(CaptionError::Auth(status)),
            _ => return Err(CaptionError::Http { status, body: text }),
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CaptionError::Parse {
                attempts: 1,
                reason: format!("response is not JSON: {e}"),
            })?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CaptionError::Parse {
                attempts: 1,
                reason: "response has no choices[0].message.content".into(),
            })
    }
}

pub const FORMAT_REMINDER: &str = "Your previous reply could not be parsed.";

/// Captions from a remote model. Unparseable replies are retried with a
/// stricter format reminder; transport errors are returned at once.
pub fn annotate_remote(
    req: &CaptionRequest,
    cfg: &EndpointConfig,
    transport: &dyn ChatTransport,
) -> Result<CaptionSet, CaptionError> {
    let prompt = build_prompt(req)?;
    let mut messages = vec![ChatMessage::new("user", prompt)];
    let mut reason = String::new();
    for attempt in 0..=cfg.max_retries {
        let reply = transport.complete(cfg, &messages)?;
        match parse_reply(&reply, &req.levels) {
            Ok(set) => return Ok(set),
            Err(r) => {
                reason = r;
                if attempt < cfg.max_retries {
                    messages.push(ChatMessage::new("assistant", reply));
                    messages.push(ChatMessage::new(
                        "user",
                        format!(
                            "{FORMAT_REMINDER} ({reason}). {}",
                            reply_format(&req.levels)
                        ),
                    ));
                }
            }
        }
    }
    Err(CaptionError::Parse {
        attempts: cfg.max_retries + 1,
        reason,
    })
}

/// Remote captions for many requests with at most `limit` in flight.
/// Results keep the request order.
pub fn annotate_many(
    reqs: &[CaptionRequest],
    cfg: &EndpointConfig,
    transport: &dyn ChatTransport,
    limit: usize,
) -> Vec<Result<CaptionSet, CaptionError>> {
    let mut out = Vec::with_capacity(reqs.len());
    for chunk in reqs.chunks(limit.max(1)) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|r| s.spawn(move || annotate_remote(r, cfg, transport)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("annotation worker panicked"))
                .collect()
        });
        out.extend(results);
    }
    out
}
