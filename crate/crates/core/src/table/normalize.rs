use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// How candidate and gold strings are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationPolicy {
    #[default]
    None,
    Lowercase,
    /// Strip accents, drop any remaining non-ASCII characters, lowercase.
    AsciiFoldLowercase,
}

impl NormalizationPolicy {
    pub fn normalize(self, s: &str) -> String {
        match self {
            NormalizationPolicy::None => s.to_string(),
            NormalizationPolicy::Lowercase => s.to_lowercase(),
            NormalizationPolicy::AsciiFoldLowercase => s
                .nfd()
                .filter(|c| !is_combining_mark(*c))
                .filter(char::is_ascii)
                .map(|c| c.to_ascii_lowercase())
                .collect(),
        }
    }
}
