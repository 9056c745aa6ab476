//! OpenAI-compatible HTTP backend.

use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatBackend, ChatReply, ChatRequest, ModelEndpoint};
use crate::error::{Error, Result};

pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    api_key_env: Option<String>,
    logprobs: bool,
}

impl HttpBackend {
    pub fn new(endpoint: &ModelEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_secs)))
            .build()
            .into();
        Self {
            agent,
            base_url: endpoint.base_url.trim_end_matches('/').to_string(),
            api_key_env: endpoint.api_key_env.clone(),
            logprobs: endpoint.supports_logprobs,
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{path}", self.base_url);
        let mut req = self.agent.post(&url);
        if let Some(key) = self.api_key_env.as_ref().and_then(|v| std::env::var(v).ok()) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let transport = |message: String| Error::Transport {
            fingerprint: String::new(),
            message,
        };
        let mut resp = req
            .send_json(body)
            .map_err(|e| transport(format!("POST {url}: {e}")))?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| transport(format!("POST {url}: bad response body: {e}")))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

/// Request body in the chat-completions wire shape.
pub(crate) fn chat_body(req: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if !req.system.is_empty() {
        messages.push(json!({"role": "system", "content": req.system}));
    }
    messages.push(json!({"role": "user", "content": req.user}));
    let mut body = json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
        "seed": req.seed,
        "n": 1,
    });
    if let Some(k) = req.top_logprobs {
        body["logprobs"] = json!(true);
        body["top_logprobs"] = json!(k);
    }
    body
}

pub(crate) fn parse_chat(v: Value) -> Result<ChatReply> {
    let resp: ChatResponse = serde_json::from_value(v).map_err(|e| Error::Transport {
        fingerprint: String::new(),
        message: format!("malformed chat response: {e}"),
    })?;
    let choice = resp.choices.into_iter().next().ok_or_else(|| Error::Transport {
        fingerprint: String::new(),
        message: "chat response has no choices".into(),
    })?;
    let top_logprobs = choice
        .logprobs
        .and_then(|l| l.content.into_iter().next())
        .map(|t| t.top_logprobs.into_iter().map(|x| (x.token, x.logprob)).collect());
    Ok(ChatReply {
        content: choice.message.content.unwrap_or_default(),
        top_logprobs,
    })
}

impl ChatBackend for HttpBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatReply> {
        parse_chat(self.post("chat/completions", &chat_body(req))?)
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let v = self.post("embeddings", &json!({"model": model, "input": texts}))?;
        let resp: EmbeddingResponse = serde_json::from_value(v).map_err(|e| Error::Transport {
            fingerprint: String::new(),
            message: format!("malformed embedding response: {e}"),
        })?;
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }

    fn supports_logprobs(&self) -> bool {
        self.logprobs
    }
}
