//! LLM-as-judge labeling over an OpenAI-style chat completions endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Labeler;
use crate::error::{Error, Result};
use crate::http::{bearer_from_env, JsonClient, RetryPolicy, DEFAULT_INITIAL_BACKOFF};

/// Bearer token for the judge endpoint.
pub const JUDGE_API_KEY_ENV: &str = "JUDGE_API_KEY";

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are Qwen, created by Alibaba Cloud. You are a helpful assistant.";

pub const DEFAULT_PROMPT_TEMPLATE: &str = "\
You are a helpful assistant tasked with evaluating whether a model-generated response is hallucinated or not.
Here is the context:
Question: {question}
Correct Answer: {gold_answer}
Model Response: {llm_response}

Your task is as follows:
1. Check if the correct answer or its meaningful variations (e.g., initials, abbreviations, synonyms) appear in the model response.
2. If the correct answer (or a variation) is present, even partially, and the essence of correctness is captured, label it as '0' (not hallucinated).
3. If the correct answer or meaningful variations are completely absent or contradicted, label it as '1' (hallucinated).
4. Provide only the label (1 or 0) as your output. Do not include any additional information.";

const PLACEHOLDERS: [&str; 3] = ["question", "gold_answer", "llm_response"];

#[derive(Clone, Debug)]
pub struct JudgeConfig {
    pub base_url: String,
    pub model_name: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub initial_backoff: Duration,
    pub system_prompt: String,
    pub prompt_template: String,
}

impl JudgeConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        JudgeConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            max_in_flight: 4,
            initial_backoff: DEFAULT_INITIAL_BACKOFF,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_owned(),
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_owned(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_url.trim().is_empty() || self.model_name.trim().is_empty() {
            return Err(Error::invalid("judge base URL and model name are required"));
        }
        for p in PLACEHOLDERS {
            if !self.prompt_template.contains(&format!("{{{p}}}")) {
                return Err(Error::invalid(format!("prompt template lacks {{{p}}}")));
            }
        }
        Ok(())
    }
}

/// Substitutes `{question}`, `{gold_answer}` and `{llm_response}` in one pass,
/// so substituted text is never itself expanded.
pub fn render_prompt(template: &str, question: &str, gold_answer: &str, llm_response: &str) -> String {
    let mut out = String::with_capacity(template.len() + question.len() + gold_answer.len() + llm_response.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let value = [
            ("{question}", question),
            ("{gold_answer}", gold_answer),
            ("{llm_response}", llm_response),
        ]
        .into_iter()
        .find(|(ph, _)| tail.starts_with(ph));
        match value {
            Some((ph, v)) => {
                out.push_str(v);
                rest = &tail[ph.len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Accepts a bare `0`/`1`, optionally followed by whitespace or punctuation.
pub fn parse_judge_reply(reply: &str) -> Result<u8> {
    let t = reply.trim();
    let mut chars = t.chars();
    let label = match chars.next() {
        Some('0') => 0,
        Some('1') => 1,
        _ => return Err(Error::UnparseableJudgeOutput(reply.to_owned())),
    };
    if chars.all(|c| c.is_whitespace() || c.is_ascii_punctuation()) {
        Ok(label)
    } else {
        Err(Error::UnparseableJudgeOutput(reply.to_owned()))
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 2],
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

pub struct JudgeClient {
    config: JudgeConfig,
    url: String,
    client: JsonClient,
}

impl JudgeClient {
    pub fn new(config: JudgeConfig) -> Result<Self> {
        config.validate()?;
        let policy = RetryPolicy {
            timeout: config.timeout,
            retries: config.max_retries,
            initial_backoff: config.initial_backoff,
        };
        let client = JsonClient::new(config.max_in_flight, policy, bearer_from_env(JUDGE_API_KEY_ENV))?;
        let url = format!("{}/v1/chat/completions", config.base_url.trim_end_matches('/'));
        Ok(JudgeClient { config, url, client })
    }

    /// Raw reply text for one (question, gold, response) triple.
    pub fn ask(&self, question: &str, gold: &str, response: &str) -> Result<String> {
        let user = render_prompt(&self.config.prompt_template, question, gold, response);
        let body = ChatRequest {
            model: &self.config.model_name,
            temperature: 0.0,
            messages: [
                ChatMessage {
                    role: "system",
                    content: &self.config.system_prompt,
                },
                ChatMessage {
                    role: "user",
                    content: &user,
                },
            ],
        };
        let reply: ChatReply = self.client.post(&self.url, &body)?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Backend("judge reply has no message content".into()))
    }
}

impl Labeler for JudgeClient {
    fn label(&self, question: &str, gold: &str, response: &str) -> Result<u8> {
        parse_judge_reply(&self.ask(question, gold, response)?)
    }
}
