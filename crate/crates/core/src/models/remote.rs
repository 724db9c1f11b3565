//! Chat-model classifiers reached over a network API.

use serde::{Deserialize, Serialize};

use super::prompt::ChatMessage;
use crate::corpus::FusionLabel;
use crate::error::{Error, Result};

/// A chat-completion endpoint. Implementations must tolerate concurrent
/// calls or serialise internally.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

impl ChatClient for Box<dyn ChatClient> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        self.as_ref().complete(messages)
    }
}

/// Accepts exactly `low`, `medium` or `high`, ignoring case, surrounding
/// whitespace, one pair of quotes and a trailing full stop.
pub fn parse_label(reply: &str) -> Option<FusionLabel> {
    let mut s = reply.trim();
    s = s.strip_suffix('.').unwrap_or(s);
    for q in ['"', '\''] {
        if let Some(inner) = s.strip_prefix(q).and_then(|r| r.strip_suffix(q)) {
            s = inner.strip_suffix('.').unwrap_or(inner);
            break;
        }
    }
    s.trim().to_ascii_lowercase().parse().ok()
}

/// Sends a prompt, retrying on transport failures and unparseable replies.
pub struct RemoteClassifier {
    client: Box<dyn ChatClient>,
    pub max_attempts: usize,
}

impl RemoteClassifier {
    pub fn new(client: Box<dyn ChatClient>, max_attempts: usize) -> Self {
        RemoteClassifier {
            client,
            max_attempts: max_attempts.max(1),
        }
    }

    pub fn classify(&self, messages: &[ChatMessage]) -> Result<FusionLabel> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.client.complete(messages) {
                Ok(reply) => match parse_label(&reply) {
                    Some(l) => return Ok(l),
                    None => {
                        log::warn!("attempt {attempt}: unparseable reply {reply:?}");
                        last = format!("unparseable reply {reply:?}");
                    }
                },
                Err(e) => {
                    log::warn!("attempt {attempt}: {e}");
                    last = e.to_string();
                }
            }
        }
        Err(Error::inference(format!(
            "remote classifier failed after {} attempts: {last}",
            self.max_attempts
        )))
    }
}

/// Endpoint settings; the key itself is read from the named environment
/// variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_attempts() -> usize {
    3
}

fn default_timeout() -> u64 {
    60
}

#[cfg(feature = "http")]
pub use http::OpenAiChatClient;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::*;

    /// OpenAI-compatible `chat/completions` client (also fits DeepSeek and
    /// most self-hosted gateways).
    pub struct OpenAiChatClient {
        agent: ureq::Agent,
        endpoint: String,
        model: String,
        api_key: Option<String>,
    }

    impl OpenAiChatClient {
        pub fn from_config(cfg: &RemoteConfig) -> Result<Self> {
            let api_key = std::env::var(&cfg.api_key_env).ok();
            if api_key.is_none() {
                log::warn!("{} is not set; sending requests without a key", cfg.api_key_env);
            }
            Ok(OpenAiChatClient {
                agent: ureq::AgentBuilder::new()
                    .timeout(Duration::from_secs(cfg.timeout_secs))
                    .build(),
                endpoint: cfg.endpoint.clone(),
                model: cfg.model.clone(),
                api_key,
            })
        }
    }

    impl ChatClient for OpenAiChatClient {
        fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
            let body = serde_json::json!({
                "model": self.model,
                "messages": messages,
                "temperature": 0,
            });
            let mut req = self.agent.post(&self.endpoint);
            if let Some(k) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {k}"));
            }
            let resp: serde_json::Value = req
                .send_json(body)
                .map_err(|e| Error::inference(format!("{}: {e}", self.endpoint)))?
                .into_json()
                .map_err(|e| Error::inference(format!("{}: bad response body: {e}", self.endpoint)))?;
            resp.pointer("/choices/0/message/content")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| Error::inference(format!("{}: response has no message content", self.endpoint)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stub::ScriptedChat;

    #[test]
    fn strict_parsing() {
        assert_eq!(parse_label(" High\n"), Some(FusionLabel::High));
        assert_eq!(parse_label("\"low\""), Some(FusionLabel::Low));
        assert_eq!(parse_label("medium."), Some(FusionLabel::Medium));
        assert_eq!(parse_label("\"High.\""), Some(FusionLabel::High));
        assert_eq!(parse_label("'low'."), Some(FusionLabel::Low));
        assert_eq!(parse_label("The label is high"), None);
        assert_eq!(parse_label("hi"), None);
        assert_eq!(parse_label(""), None);
    }

    #[test]
    fn retries_then_succeeds() {
        let c = RemoteClassifier::new(Box::new(ScriptedChat::new(["I think medium", "medium"])), 3);
        assert_eq!(c.classify(&[]).unwrap(), FusionLabel::Medium);
    }

    #[test]
    fn exhausted_retries_are_inference_errors() {
        let c = RemoteClassifier::new(Box::new(ScriptedChat::new(["nope"])), 2);
        assert!(matches!(c.classify(&[]), Err(Error::Inference(_))));
    }

    #[cfg(feature = "http")]
    #[test]
    fn http_client_against_local_server() {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.to_ascii_lowercase();
                if let Some(v) = l.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if l.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": "high"}}]}).to_string();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
            (req, auth)
        });
        std::env::set_var("CLIFS_TEST_KEY", "secret");
        let cfg = RemoteConfig {
            endpoint: format!("http://{addr}/v1/chat/completions"),
            model: "m".into(),
            api_key_env: "CLIFS_TEST_KEY".into(),
            max_attempts: 1,
            timeout_secs: 5,
        };
        let client = OpenAiChatClient::from_config(&cfg).unwrap();
        let c = RemoteClassifier::new(Box::new(client), 1);
        let msgs = [ChatMessage::new(super::super::prompt::ChatRole::User, "x")];
        assert_eq!(c.classify(&msgs).unwrap(), FusionLabel::High);
        let (req, auth) = server.join().unwrap();
        assert_eq!(req["model"], "m");
        assert_eq!(req["messages"][0]["role"], "user");
        assert_eq!(auth, "Authorization: Bearer secret");
    }
}
