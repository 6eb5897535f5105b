use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ProviderError;
use crate::format::CaptionFormat;

pub const ASSERTION_PROMPT: &str =
    "List each atomic factual claim in the caption, one per line.\n\nCaption: {caption}";
pub const VQA_PROMPT: &str =
    "Based on the image, is this statement true? {assertion} Answer yes or no.";

/// Prompt templates, editable from config. Placeholders are written
/// `{name}`; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub caption: BTreeMap<CaptionFormat, String>,
    pub assertion: String,
    pub vqa: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let caption = [
            (
                CaptionFormat::Ssc,
                "Describe the image in one concise sentence.",
            ),
            (
                CaptionFormat::Dsc,
                "Describe the image in detail in at most 78 tokens.",
            ),
            (
                CaptionFormat::DscPlus,
                "Describe the image comprehensively, including background and setting.",
            ),
            (
                CaptionFormat::Afc,
                "Describe the image in detail; integrate this alt-text where accurate: {alt_text}",
            ),
        ]
        .into_iter()
        .map(|(f, t)| (f, t.to_string()))
        .collect();
        PromptTemplates {
            caption,
            assertion: ASSERTION_PROMPT.into(),
            vqa: VQA_PROMPT.into(),
        }
    }
}

/// Substitute `{name}` placeholders. Unknown names and names whose value is
/// `None` are template errors.
pub fn render(template: &str, vars: &[(&str, Option<&str>)]) -> Result<String, ProviderError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let c = rest.as_bytes()[i];
        let after = &rest[i + 1..];
        if after.as_bytes().first() == Some(&c) {
            out.push(c as char);
            rest = &after[1..];
            continue;
        }
        if c == b'}' {
            return Err(ProviderError::Template(format!(
                "unmatched `}}` in `{template}`"
            )));
        }
        let end = after
            .find('}')
            .ok_or_else(|| ProviderError::Template(format!("unclosed `{{` in `{template}`")))?;
        let name = &after[..end];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .ok_or_else(|| ProviderError::Template(format!("unknown placeholder `{{{name}}}`")))?
            .1
            .ok_or_else(|| ProviderError::Template(format!("no value for `{{{name}}}`")))?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_rules() {
        assert_eq!(render("a {x} b", &[("x", Some("1"))]).unwrap(), "a 1 b");
        assert_eq!(render("{{lit}}", &[]).unwrap(), "{lit}");
        assert!(matches!(
            render("{y}", &[("x", Some("1"))]),
            Err(ProviderError::Template(_))
        ));
        assert!(matches!(
            render("{x}", &[("x", None)]),
            Err(ProviderError::Template(_))
        ));
        assert!(matches!(render("{x", &[]), Err(ProviderError::Template(_))));
        let t = PromptTemplates::default();
        assert!(t.caption[&CaptionFormat::Afc].contains("{alt_text}"));
        let q = render(&t.vqa, &[("assertion", Some("A dog sits."))]).unwrap();
        assert_eq!(
            q,
            "Based on the image, is this statement true? A dog sits. Answer yes or no."
        );
    }
}
