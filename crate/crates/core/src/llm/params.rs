//! Sampling and context parameters for generation and summarization models.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningLevel {
    Low,
    Medium,
    High,
}

impl ReasoningLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningLevel::Low => "low",
            ReasoningLevel::Medium => "medium",
            ReasoningLevel::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub model_id: String,
    pub context_length: u64,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default)]
    pub reasoning_level: Option<ReasoningLevel>,
    #[serde(default = "default_max_output")]
    pub max_output_tokens: u64,
}

fn default_max_output() -> u64 {
    8_192
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid model parameters: {0}")]
pub struct InvalidParams(pub String);

impl ModelParams {
    pub fn cwm() -> Self {
        Self {
            model_id: "cwm".into(),
            context_length: 131_072,
            temperature: 1.0,
            top_p: 0.95,
            reasoning_level: None,
            max_output_tokens: default_max_output(),
        }
    }

    pub fn gpt_oss() -> Self {
        Self {
            model_id: "gpt-oss-120b".into(),
            context_length: 131_072,
            temperature: 1.0,
            top_p: 1.0,
            reasoning_level: Some(ReasoningLevel::High),
            max_output_tokens: default_max_output(),
        }
    }

    /// Default summarizer: same sampling as [`ModelParams::cwm`].
    pub fn summarizer() -> Self {
        Self::cwm()
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "cwm" => Some(Self::cwm()),
            "gpt-oss" | "gpt_oss" => Some(Self::gpt_oss()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), InvalidParams> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(InvalidParams(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(InvalidParams(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.context_length == 0 {
            return Err(InvalidParams("context_length must be > 0".into()));
        }
        if self.model_id.is_empty() {
            return Err(InvalidParams("model_id must be nonempty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let c = ModelParams::cwm();
        assert_eq!((c.context_length, c.temperature, c.top_p), (131_072, 1.0, 0.95));
        let g = ModelParams::gpt_oss();
        assert_eq!((g.temperature, g.top_p), (1.0, 1.0));
        assert_eq!(g.reasoning_level, Some(ReasoningLevel::High));
        assert!(c.validate().is_ok() && g.validate().is_ok());
        assert_eq!(ModelParams::preset("gpt-oss"), Some(g));
        assert!(ModelParams::preset("nope").is_none());
    }

    #[test]
    fn validation() {
        let mut p = ModelParams::cwm();
        p.top_p = 0.0;
        assert!(p.validate().is_err());
        p.top_p = 1.0;
        p.temperature = -0.1;
        assert!(p.validate().is_err());
        p.temperature = 0.0;
        p.context_length = 0;
        assert!(p.validate().is_err());
    }
}
