//! Prompt rendering.

use serde::{Deserialize, Serialize};

use crate::model::{text_digest, McqItem};

/// System instruction asking for a bare option letter.
pub const DEFAULT_SYSTEM_PROMPT: &str = "Please read the multiple-choice question below carefully and select ONE of the listed options and only give a single letter.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub system_text: String,
    pub question_header: String,
    pub options_header: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system_text: DEFAULT_SYSTEM_PROMPT.to_string(),
            question_header: "Question:".to_string(),
            options_header: "Options:".to_string(),
        }
    }
}

/// A rendered prompt. Chat backends send `system` and `body` as separate
/// messages; [`Prompt::text`] is the single-string form that gets logged
/// and digested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub body: String,
}

impl Prompt {
    pub fn text(&self) -> String {
        if self.system.is_empty() {
            self.body.clone()
        } else {
            format!("{}\n\n{}", self.system, self.body)
        }
    }

    pub fn digest(&self) -> String {
        text_digest(&self.text())
    }
}

/// Renders the item with its options in their current order, one
/// `ID. content` line each.
pub fn build_prompt(item: &McqItem, template: &PromptTemplate) -> Prompt {
    let mut lines = Vec::with_capacity(item.options.len() + 2);
    if template.question_header.is_empty() {
        lines.push(item.question.clone());
    } else {
        lines.push(format!("{} {}", template.question_header, item.question));
    }
    if !template.options_header.is_empty() {
        lines.push(template.options_header.clone());
    }
    lines.extend(
        item.options
            .iter()
            .map(|o| format!("{}. {}", o.id, o.content)),
    );
    Prompt {
        system: template.system_text.clone(),
        body: lines.join("\n"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OptionEntry, OptionKind};

    fn item() -> McqItem {
        McqItem::new(
            Some("t3".into()),
            "Which social psychological principle best explains prejudice?",
            &["self-serving bias", "in-group bias", "individualism", "collectivism"],
            1,
            "high_school_psychology",
            "psychology",
        )
        .unwrap()
    }

    #[test]
    fn renders_original_block() {
        let p = build_prompt(&item(), &PromptTemplate::default());
        assert_eq!(
            p.body,
            "Question: Which social psychological principle best explains prejudice?\n\
             Options:\n\
             A. self-serving bias\n\
             B. in-group bias\n\
             C. individualism\n\
             D. collectivism"
        );
        assert!(p.text().starts_with(DEFAULT_SYSTEM_PROMPT));
        assert!(p.text().contains("\n\nQuestion: "));
    }

    #[test]
    fn system_prompt_is_verbatim() {
        assert_eq!(
            DEFAULT_SYSTEM_PROMPT,
            "Please read the multiple-choice question below carefully and select ONE of the listed options and only give a single letter."
        );
    }

    #[test]
    fn renders_seven_lines_for_extra_options() {
        let mut it = item();
        it.options.extend(
            OptionKind::SPECIALS
                .iter()
                .zip(['E', 'F', 'G'])
                .map(|(&k, id)| OptionEntry::special(id, k)),
        );
        let it = it.validate().unwrap();
        let p = build_prompt(&it, &PromptTemplate::default());
        let option_lines: Vec<&str> = p.body.lines().skip(2).collect();
        assert_eq!(option_lines.len(), 7);
        assert_eq!(option_lines[4], "E. No correct answer");
        assert_eq!(option_lines[6], "G. I do not know");
    }

    #[test]
    fn empty_headers_leave_question_and_options() {
        let t = PromptTemplate {
            system_text: String::new(),
            question_header: String::new(),
            options_header: String::new(),
        };
        let p = build_prompt(&item(), &t);
        assert_eq!(p.text().lines().count(), 5);
        assert!(p.text().starts_with("Which social"));
    }
}
