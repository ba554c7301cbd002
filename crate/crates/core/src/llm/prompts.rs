//! Prompt templates shipped as data files under `prompts/`.
//!
//! Placeholders are written `{name}`. Rendering is plain substitution, so a
//! given template version and input always produce the same bytes.

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub version: &'static str,
    text: &'static str,
}

macro_rules! template {
    ($ident:ident, $name:literal) => {
        pub const $ident: Template = Template {
            name: $name,
            version: PROMPT_VERSION,
            text: include_str!(concat!("../../prompts/", $name, ".v1.txt")),
        };
    };
}

template!(NAMING_SYSTEM, "naming_system");
template!(NAMING_USER, "naming_user");
template!(KEYWORDS_USER, "keywords_user");
template!(ANSWER_SYSTEM, "answer_system");
template!(ANSWER_USER, "answer_user");
template!(IDENTIFY_USER, "identify_user");
template!(COMPARE_USER, "compare_user");
template!(ROUTER_SYSTEM, "router_system");
template!(REPAIR_USER, "repair_user");
template!(COMPOSE_USER, "compose_user");

pub const ALL: [Template; 10] = [
    NAMING_SYSTEM,
    NAMING_USER,
    KEYWORDS_USER,
    ANSWER_SYSTEM,
    ANSWER_USER,
    IDENTIFY_USER,
    COMPARE_USER,
    ROUTER_SYSTEM,
    REPAIR_USER,
    COMPOSE_USER,
];

impl Template {
    pub fn raw(&self) -> &'static str {
        self.text
    }

    /// Substitutes each `{key}` in one left-to-right pass; substituted
    /// values are never re-scanned. Unknown placeholders are left as is.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let text = self.text.trim_end();
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = after.find('}').and_then(|close| {
                let key = &after[..close];
                vars.iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| (close, *v))
            });
            match hit {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}
