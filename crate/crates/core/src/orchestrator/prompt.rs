//! Prompt assembly and parsing of LLM steps.

use serde::{Deserialize, Serialize};

pub const QUESTION_PREFIX: &str = "Question:";
pub const SUBQUESTION_PREFIX: &str = "Subquestion:";
pub const GENERATED_ANSWER_PREFIX: &str = "Generated answer:";
pub const RETRIEVED_FACT_PREFIX: &str = "Retrieved fact:";
pub const ENTITY_PROMPT: &str = "According to Generated answer, the entity of Subquestion in English is:";
pub const FINAL_ANSWER_PREFIX: &str = "Final answer:";

const ENTITY_MARKER: &str = "the entity of Subquestion in English is:";

/// Demonstrations, a blank line between each, then the question, the
/// completed transcript, and a `Subquestion:` stub when nothing has been
/// answered yet. Once hops exist the prompt ends after the last transcript
/// line so the model can either ask the next subquestion or give the final
/// answer.
pub fn build_prompt(demos: &[String], question: &str, transcript: &str) -> String {
    let mut out = String::new();
    for demo in demos {
        out.push_str(demo.trim_end_matches('\n'));
        out.push_str("\n\n");
    }
    out.push_str(QUESTION_PREFIX);
    out.push(' ');
    out.push_str(question.trim());
    out.push('\n');
    out.push_str(transcript);
    if transcript.is_empty() {
        out.push_str(SUBQUESTION_PREFIX);
    }
    out
}

/// The prompt stub that precedes the model's continuation for the next step.
pub fn step_stub(transcript: &str) -> &'static str {
    if transcript.is_empty() {
        SUBQUESTION_PREFIX
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum StepParse {
    Subquestion(String),
    Entity(String),
    FinalAnswer(String),
    Malformed(String),
}

fn clean_value(raw: &str) -> String {
    let v = raw.trim();
    v.strip_suffix('.').unwrap_or(v).trim().to_string()
}

/// Classifies model output. Precedence: a `Final answer:` line, then an
/// entity-extraction line, then a `Subquestion:` line. Empty values count as
/// malformed.
pub fn parse_step(output: &str) -> StepParse {
    let value_after = |marker: &str| {
        output.lines().find_map(|line| {
            line.find(marker)
                .map(|at| clean_value(&line[at + marker.len()..]))
        })
    };
    let parsed = if let Some(v) = value_after(FINAL_ANSWER_PREFIX) {
        StepParse::FinalAnswer(v)
    } else if let Some(v) = value_after(ENTITY_MARKER) {
        StepParse::Entity(v)
    } else if let Some(v) = output
        .lines()
        .find_map(|l| l.trim_start().strip_prefix(SUBQUESTION_PREFIX))
    {
        StepParse::Subquestion(v.trim().to_string())
    } else {
        return StepParse::Malformed(output.to_string());
    };
    match &parsed {
        StepParse::Subquestion(v) | StepParse::Entity(v) | StepParse::FinalAnswer(v) if v.is_empty() => {
            StepParse::Malformed(output.to_string())
        }
        _ => parsed,
    }
}

/// First non-empty line of a continuation, trimmed.
pub fn first_line(output: &str) -> String {
    output
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_string()
}

/// The last `Question:` line of a prompt, i.e. the question being answered
/// rather than one from a demonstration.
pub fn current_question(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(QUESTION_PREFIX))
        .map(str::trim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demos() -> Vec<String> {
        vec![
            "Question: Q1?\nSubquestion: S1?\nGenerated answer: A1.\nAccording to Generated answer, the entity of Subquestion in English is: E1\nFinal answer: E1".into(),
            "Question: Q2?\nFinal answer: E2\n".into(),
        ]
    }

    #[test]
    fn empty_transcript_ends_with_stub() {
        let p = build_prompt(&demos(), "Who is it?", "");
        assert!(p.ends_with("\n\nQuestion: Who is it?\nSubquestion:"), "{p}");
        assert!(p.starts_with("Question: Q1?\nSubquestion: S1?"));
        assert_eq!(current_question(&p), Some("Who is it?"));
    }

    #[test]
    fn completed_hop_is_replayed_verbatim() {
        let hop = "Subquestion: Who is A?\nGenerated answer: A is B.\nAccording to Generated answer, the entity of Subquestion in English is: B\n";
        let p = build_prompt(&demos(), "Who is it?", hop);
        assert!(p.ends_with(&format!("Question: Who is it?\n{hop}")));
        assert_eq!(p, build_prompt(&demos(), "Who is it?", hop));
    }

    #[test]
    fn parses_each_step_kind() {
        assert_eq!(parse_step("Final answer: Ottawa"), StepParse::FinalAnswer("Ottawa".into()));
        assert_eq!(
            parse_step("According to Generated answer, the entity of Subquestion in English is: Jared Kushner"),
            StepParse::Entity("Jared Kushner".into())
        );
        assert_eq!(
            parse_step("...the entity of Subquestion in English is: Ottawa."),
            StepParse::Entity("Ottawa".into())
        );
        assert_eq!(
            parse_step("Subquestion: Who is Ivanka Trump's spouse?"),
            StepParse::Subquestion("Who is Ivanka Trump's spouse?".into())
        );
        assert_eq!(parse_step("banana banana"), StepParse::Malformed("banana banana".into()));
        assert_eq!(parse_step("Subquestion:   "), StepParse::Malformed("Subquestion:   ".into()));
    }

    #[test]
    fn final_answer_takes_precedence() {
        let out = "Subquestion: What?\nFinal answer: X";
        assert_eq!(parse_step(out), StepParse::FinalAnswer("X".into()));
    }
}
