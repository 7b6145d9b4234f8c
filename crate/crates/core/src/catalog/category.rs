use std::fmt;

use serde::{Deserialize, Serialize};

/// Coarse operator families used for coverage breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorCategory {
    Elementwise,
    DeepLearning,
    LinearAlgebra,
    ShapeManipulation,
    Reduction,
    IndexingSelection,
    Other,
}

impl OperatorCategory {
    pub const ALL: [OperatorCategory; 7] = [
        OperatorCategory::Elementwise,
        OperatorCategory::DeepLearning,
        OperatorCategory::LinearAlgebra,
        OperatorCategory::Other,
        OperatorCategory::ShapeManipulation,
        OperatorCategory::Reduction,
        OperatorCategory::IndexingSelection,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OperatorCategory::Elementwise => "Elementwise",
            OperatorCategory::DeepLearning => "Deep Learning",
            OperatorCategory::LinearAlgebra => "Linear Algebra",
            OperatorCategory::ShapeManipulation => "Shape Manipulation",
            OperatorCategory::Reduction => "Reduction",
            OperatorCategory::IndexingSelection => "Indexing & Selection",
            OperatorCategory::Other => "Other",
        }
    }
}

impl fmt::Display for OperatorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Prefix,
    Contains,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryRule {
    #[serde(rename = "match")]
    pub kind: MatchKind,
    pub category: OperatorCategory,
    pub patterns: Vec<String>,
}

impl CategoryRule {
    fn matches(&self, name: &str) -> bool {
        self.patterns.iter().any(|p| match self.kind {
            MatchKind::Exact => name == p,
            MatchKind::Prefix => name.starts_with(p.as_str()),
            MatchKind::Contains => name.contains(p.as_str()),
        })
    }
}

/// Ordered rule table; the first matching rule wins, otherwise `default`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryRules {
    pub default: OperatorCategory,
    pub rules: Vec<CategoryRule>,
}

const BUNDLED: &str = include_str!("../../data/categories.json");

impl CategoryRules {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled category rules are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn categorize(op_name: &str, rules: &CategoryRules) -> OperatorCategory {
    rules
        .rules
        .iter()
        .find(|r| r.matches(op_name))
        .map(|r| r.category)
        .unwrap_or(rules.default)
}

#[cfg(test)]
mod tests {
    use super::*;
    use OperatorCategory::*;

    #[test]
    fn seven_categories() {
        let mut all = OperatorCategory::ALL.to_vec();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 7);
    }

    #[test]
    fn prefixes_and_default() {
        let rules = CategoryRules::bundled();
        assert_eq!(categorize("nn.functional.layer_norm", &rules), DeepLearning);
        assert_eq!(categorize("linalg.vector_norm", &rules), LinearAlgebra);
        assert_eq!(categorize("definitely_not_an_op", &rules), Other);
    }

    /// Hand-labelled sample; the bundled table must agree on every entry.
    #[test]
    fn bundled_table_matches_hand_labels() {
        let labelled = [
            ("exp", Elementwise),
            ("special.erfcx", Elementwise),
            ("atan2", Elementwise),
            ("nn.functional.logsigmoid", DeepLearning),
            ("nn.functional.binary_cross_entropy", DeepLearning),
            ("nn.functional.conv2d", DeepLearning),
            ("nn.functional.channel_shuffle", ShapeManipulation),
            ("nn.functional.embedding", IndexingSelection),
            ("outer", LinearAlgebra),
            ("linalg.svd", LinearAlgebra),
            ("addmm", LinearAlgebra),
            ("argmax", Reduction),
            ("logsumexp", Reduction),
            ("cumsum", Reduction),
            ("permute", ShapeManipulation),
            ("cat", ShapeManipulation),
            ("gather", IndexingSelection),
            ("diag", IndexingSelection),
            ("fill", Other),
            ("empty_like", Other),
        ];
        let rules = CategoryRules::bundled();
        for (name, want) in labelled {
            assert_eq!(categorize(name, &rules), want, "{name}");
        }
    }

    #[test]
    fn first_match_wins() {
        let rules = CategoryRules {
            default: Other,
            rules: vec![
                CategoryRule { kind: MatchKind::Contains, category: Reduction, patterns: vec!["norm".into()] },
                CategoryRule { kind: MatchKind::Prefix, category: LinearAlgebra, patterns: vec!["linalg.".into()] },
            ],
        };
        assert_eq!(categorize("linalg.vector_norm", &rules), Reduction);
        assert_eq!(categorize("linalg.svd", &rules), LinearAlgebra);
    }
}
