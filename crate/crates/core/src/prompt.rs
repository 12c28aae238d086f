//! Chat prompts for criterion-level assessment.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::gateway::{ChatMessage, GenerationConfig};
use crate::model::{ClinicalTrial, CriterionKind, PatientNote};

/// Assistant turn appended for models that are primed with an example.
pub const ASSISTANT_PRIMER: &str = "```json```";

const INCLUSION_SYSTEM_PROMPT: &str = "\
You are an assistant tasked with assessing patient eligibility for clinical trials. \
Your role involves comparing patient notes with the trial's inclusion criteria, which vary in format \
and include specifics like age, gender, disease specifics, and medical history. \
Your responsibilities include:
1. Interpreting medical terminology and context in both patient notes and trial criteria.
2. Explaining the relevance of each inclusion criterion in the patient note, step-by-step.
3. Annotating relevant sentences from the patient note which are relevant for that criterion or indicating a lack of relevant information.
4. Labeling each criterion as 'included', 'not included', or 'no relevant information' based on the patient's eligibility for that criterion.
5. Addressing ambiguities or gaps in patient notes carefully.
6. Producing a JSON output with the exact format: {\"inclusion_criterion\": [\"relevance_explanation\", [sentence_id], \"eligibility_status\"]} and ensuring its structural accuracy.";

const EXCLUSION_SYSTEM_PROMPT: &str = "\
You are an assistant tasked with assessing patient eligibility for clinical trials. \
Your role involves comparing patient notes with the trial's exclusion criteria, which vary in format \
and include specifics like age, gender, disease specifics, and medical history. \
Your responsibilities include:
1. Interpreting medical terminology and context in both patient notes and trial criteria.
2. Explaining the relevance of each exclusion criterion in the patient note, step-by-step.
3. Annotating relevant sentences from the patient note which are relevant for that criterion or indicating a lack of relevant information.
4. Labeling each criterion as 'excluded', 'not excluded', or 'no relevant information' based on the patient's eligibility.
5. Addressing ambiguities or gaps in patient notes carefully.
6. Producing a JSON output with the exact format: {\"exclusion_criterion\": [\"relevance_explanation\", [sentence_id], \"eligibility_status\"]} and ensuring its structural accuracy.";

pub fn system_prompt(kind: CriterionKind) -> &'static str {
    match kind {
        CriterionKind::Inclusion => INCLUSION_SYSTEM_PROMPT,
        CriterionKind::Exclusion => EXCLUSION_SYSTEM_PROMPT,
    }
}

/// Sentences as `"<id>. <text>"`, one per line, so the model can cite ids.
pub fn numbered_note(note: &PatientNote) -> String {
    let lines: Vec<String> = note
        .sentences()
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{i}. {s}"))
        .collect();
    lines.join("\n")
}

/// The user turn: patient note followed by the trial fields and the
/// criteria block for `kind`.
pub fn user_prompt(note: &PatientNote, trial: &ClinicalTrial, kind: CriterionKind) -> String {
    let criteria_header = match kind {
        CriterionKind::Inclusion => "Inclusion Criteria",
        CriterionKind::Exclusion => "Exclusion Criteria",
    };
    format!(
        "Here is the patient note - {}. Here is the clinical trial - Title - {} \n Summary - {}\n Target disease - {}\n Interventions - {} \n {} - {}",
        numbered_note(note),
        trial.title,
        trial.summary,
        trial.target_diseases.join(", "),
        trial.interventions.join(", "),
        criteria_header,
        trial.criteria_text(kind),
    )
}

/// Builds the message list for one patient, trial and criterion kind.
///
/// Returns `None` when the trial has no criteria of that kind, meaning the
/// pass should be skipped. With `include_exemplar` set, an optional example
/// exchange from the config is placed before the real user turn and the
/// assistant primer is appended after it.
pub fn render_prompt(
    note: &PatientNote,
    trial: &ClinicalTrial,
    kind: CriterionKind,
    config: &GenerationConfig,
) -> Option<Vec<ChatMessage>> {
    if !trial.has_criteria(kind) {
        return None;
    }
    let mut messages = Vec::with_capacity(5);
    messages.push(ChatMessage::system(system_prompt(kind)));
    if config.include_exemplar {
        if let Some(exemplar) = &config.exemplar {
            messages.push(ChatMessage::user(exemplar.user.clone()));
            messages.push(ChatMessage::assistant(exemplar.assistant.clone()));
        }
    }
    messages.push(ChatMessage::user(user_prompt(note, trial, kind)));
    if config.include_exemplar {
        messages.push(ChatMessage::assistant(ASSISTANT_PRIMER));
    }
    Some(messages)
}
