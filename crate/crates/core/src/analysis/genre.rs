use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The four families of modification algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenreCategory {
    Classical,
    Blues,
    Jazz,
    Pop,
}

impl GenreCategory {
    pub const ALL: [GenreCategory; 4] =
        [GenreCategory::Classical, GenreCategory::Blues, GenreCategory::Jazz, GenreCategory::Pop];

    pub fn as_str(self) -> &'static str {
        match self {
            GenreCategory::Classical => "classical",
            GenreCategory::Blues => "blues",
            GenreCategory::Jazz => "jazz",
            GenreCategory::Pop => "pop",
        }
    }

    /// Rhythmic categories anchor edits on beats rather than section bounds.
    pub fn is_rhythmic(self) -> bool {
        matches!(self, GenreCategory::Blues | GenreCategory::Pop)
    }
}

impl fmt::Display for GenreCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenreCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        GenreCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown category '{s}'"))
    }
}

/// User-facing genre keywords and the category each maps to.
pub const KEYWORD_MAP: [(&str, GenreCategory); 22] = [
    ("classical", GenreCategory::Classical),
    ("rhythmless-instrumental", GenreCategory::Classical),
    ("choir", GenreCategory::Classical),
    ("avant-garde", GenreCategory::Classical),
    ("soundtrack", GenreCategory::Classical),
    ("blues", GenreCategory::Blues),
    ("rock", GenreCategory::Blues),
    ("hip-hop", GenreCategory::Blues),
    ("r&b", GenreCategory::Blues),
    ("soul", GenreCategory::Blues),
    ("strong-rhythmic", GenreCategory::Blues),
    ("disco", GenreCategory::Blues),
    ("rap", GenreCategory::Blues),
    ("jazz", GenreCategory::Jazz),
    ("rhythmic-instrumental", GenreCategory::Jazz),
    ("electronic", GenreCategory::Jazz),
    ("easy-listening", GenreCategory::Jazz),
    ("pop", GenreCategory::Pop),
    ("country", GenreCategory::Pop),
    ("folk", GenreCategory::Pop),
    ("latin", GenreCategory::Pop),
    ("gospel", GenreCategory::Pop),
];

/// Case-insensitive, whitespace-trimmed keyword lookup. `None` means the
/// caller should fall back to automatic sorting.
pub fn classify_keyword(keyword: &str) -> Option<GenreCategory> {
    let k = keyword.trim();
    KEYWORD_MAP
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(k))
        .map(|&(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn examples() {
        assert_eq!(classify_keyword("rock"), Some(GenreCategory::Blues));
        assert_eq!(classify_keyword("soundtrack"), Some(GenreCategory::Classical));
        assert_eq!(classify_keyword("Vaporwave"), None);
        assert_eq!(classify_keyword("  R&B "), Some(GenreCategory::Blues));
        assert_eq!(classify_keyword(""), None);
    }

    #[test]
    fn keywords_unique_case_insensitively() {
        let set: HashSet<String> = KEYWORD_MAP.iter().map(|(k, _)| k.to_lowercase()).collect();
        assert_eq!(set.len(), KEYWORD_MAP.len());
    }

    #[test]
    fn category_parse_round_trip() {
        for c in GenreCategory::ALL {
            assert_eq!(c.as_str().parse::<GenreCategory>().unwrap(), c);
        }
    }
}
