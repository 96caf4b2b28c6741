use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokroute_core::artifact::sha256_hex;
use tokroute_core::protocol::{contains_tag, ParsedMessage, Segment};

use crate::record::{AnnotatedSample, Caption, ConversationRecord, Turn};
use crate::template::{Template, TemplateSet};
use crate::DatasetError;

/// Source of multi-turn dialogues. The template sampler is the built-in
/// author; an external text-generation service can stand in as long as it
/// returns records of the same shape, which the filter then checks.
pub trait DialogueAuthor {
    fn author(&self, s: &AnnotatedSample, n_turns: usize, seed: u64) -> Result<ConversationRecord, DatasetError>;
}

pub struct TemplateAuthor<'a>(pub &'a TemplateSet);

impl DialogueAuthor for TemplateAuthor<'_> {
    fn author(&self, s: &AnnotatedSample, n_turns: usize, seed: u64) -> Result<ConversationRecord, DatasetError> {
        build_multiturn(s, n_turns, seed, self.0)
    }
}

/// Renders one user/assistant exchange for `caption` under `t`.
pub fn render_exchange(t: &Template, caption: &Caption) -> Result<(Turn, Turn), DatasetError> {
    let text = caption.text.as_str();
    if contains_tag(text) {
        return Err(DatasetError::InvalidCaption(text.to_string()));
    }
    let fill = |s: &str| s.replace("{caption}", text);
    let mut segments = Vec::new();
    let prefix = fill(&t.prefix);
    if !prefix.is_empty() {
        segments.push(Segment::text(prefix));
    }
    segments.push(Segment::task(t.kind, text, Vec::new()));
    if t.uses_region() {
        let region = caption.region.ok_or(DatasetError::RegionRequired {
            template: t.id.clone(),
        })?;
        segments.push(Segment::Grounding {
            region: region.quantized(),
        });
    }
    let suffix = fill(&t.suffix);
    if !suffix.is_empty() {
        segments.push(Segment::text(suffix));
    }
    let reply = ParsedMessage::from_segments(segments).map_err(|_| DatasetError::InvalidCaption(text.to_string()))?;
    let user = fill(&t.user);
    if contains_tag(&user) {
        return Err(DatasetError::InvalidCaption(text.to_string()));
    }
    Ok((Turn::user(user), Turn::assistant(reply.raw)))
}

fn record_id(prefix: &str, key: &serde_json::Value) -> String {
    format!("{prefix}-{}", &sha256_hex(key.to_string().as_bytes())[..16])
}

/// The caption `convert_sample` uses: the first with a box when the
/// template needs one, otherwise the first.
fn primary_caption<'a>(s: &'a AnnotatedSample, t: &Template) -> Result<&'a Caption, DatasetError> {
    if s.captions.is_empty() {
        return Err(DatasetError::InsufficientCaptions);
    }
    if t.uses_region() {
        s.captions
            .iter()
            .find(|c| c.region.is_some())
            .ok_or(DatasetError::RegionRequired { template: t.id.clone() })
    } else {
        Ok(&s.captions[0])
    }
}

fn lookup<'a>(s: &AnnotatedSample, template_id: &str, templates: &'a TemplateSet) -> Result<&'a Template, DatasetError> {
    templates
        .get(template_id)
        .filter(|t| t.kind == s.source_task)
        .ok_or_else(|| DatasetError::TemplateMissing {
            kind: s.source_task,
            template: template_id.to_string(),
        })
}

/// A two-turn record: the template's request, then a reply carrying the
/// task span and, if the template grounds it, the caption's box.
pub fn convert_sample(
    s: &AnnotatedSample,
    template_id: &str,
    templates: &TemplateSet,
) -> Result<ConversationRecord, DatasetError> {
    let t = lookup(s, template_id, templates)?;
    let (user, assistant) = render_exchange(t, primary_caption(s, t)?)?;
    Ok(ConversationRecord {
        id: record_id(&s.source_dataset, &serde_json::json!([s, template_id])),
        turns: vec![user, assistant],
        task_kinds: BTreeSet::from([t.kind]),
    })
}

fn applicable(t: &Template, s: &AnnotatedSample) -> bool {
    !t.uses_region() || s.captions.iter().any(|c| c.region.is_some())
}

/// A dialogue of `n_turns` exchanges. The first exchange is exactly what
/// `convert_sample` gives for a template sampled for the source task;
/// later exchanges draw from every applicable template, avoiding a repeat
/// of the previous kind when another is available.
pub fn build_multiturn(
    s: &AnnotatedSample,
    n_turns: usize,
    seed: u64,
    templates: &TemplateSet,
) -> Result<ConversationRecord, DatasetError> {
    if n_turns == 0 {
        return Err(DatasetError::InvalidTurns);
    }
    if s.captions.is_empty() {
        return Err(DatasetError::InsufficientCaptions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first: Vec<&Template> = templates.for_kind(s.source_task).collect();
    if first.is_empty() {
        return Err(DatasetError::TemplateMissing {
            kind: s.source_task,
            template: String::new(),
        });
    }
    let usable: Vec<&Template> = first.iter().copied().filter(|t| applicable(t, s)).collect();
    let t0 = *usable
        .choose(&mut rng)
        .ok_or_else(|| DatasetError::RegionRequired { template: first[0].id.clone() })?;

    let (u, a) = render_exchange(t0, primary_caption(s, t0)?)?;
    let mut turns = vec![u, a];
    let mut kinds = BTreeSet::from([t0.kind]);
    let pool: Vec<&Template> = templates.iter().filter(|t| applicable(t, s)).collect();
    let boxed: Vec<&Caption> = s.captions.iter().filter(|c| c.region.is_some()).collect();
    let mut prev = t0.kind;
    for _ in 1..n_turns {
        let fresh: Vec<&Template> = pool.iter().copied().filter(|t| t.kind != prev).collect();
        let choices = if fresh.is_empty() { &pool } else { &fresh };
        let t = *choices.choose(&mut rng).expect("pool contains t0");
        let caption = if t.uses_region() {
            *boxed.choose(&mut rng).expect("applicable template has a boxed caption")
        } else {
            s.captions.choose(&mut rng).expect("captions checked nonempty")
        };
        let (u, a) = render_exchange(t, caption)?;
        turns.push(u);
        turns.push(a);
        kinds.insert(t.kind);
        prev = t.kind;
    }
    Ok(ConversationRecord {
        id: record_id(
            &format!("{}-mt", s.source_dataset),
            &serde_json::json!([s, n_turns, seed]),
        ),
        turns,
        task_kinds: kinds,
    })
}
