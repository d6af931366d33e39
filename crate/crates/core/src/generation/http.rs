//! Adapter for a model server speaking a small JSON protocol:
//! `POST {"input": text, "max_candidates": n}` answered by
//! `{"candidates": [{"text": ..., "score": ...}, ...]}`.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Candidate, GenerationBackend, GenerationError};
use crate::markup::ModelInput;

#[derive(Debug, Clone)]
pub struct HttpBackend {
    id: String,
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(id: impl Into<String>, url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { id: id.into(), url: url.into(), agent }
    }
}

impl GenerationBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn candidates(&self, input: &ModelInput, max_candidates: usize) -> Result<Vec<Candidate>, GenerationError> {
        let body = json!({ "input": input.text, "max_candidates": max_candidates });
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| GenerationError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GenerationError::BackendUnavailable(format!("server answered {status}")));
        }
        let value: Value = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) | ureq::Error::Io(_) => GenerationError::BackendUnavailable(e.to_string()),
            other => GenerationError::MalformedResponse(other.to_string()),
        })?;
        parse_candidates(&value)
    }
}

/// Validate a response body, keeping candidates in response order.
pub(crate) fn parse_candidates(value: &Value) -> Result<Vec<Candidate>, GenerationError> {
    let bad = |m: String| GenerationError::MalformedResponse(m);
    let items = value
        .get("candidates")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing \"candidates\" array".into()))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let text = item
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| bad(format!("candidate {i}: missing text")))?;
            if text.trim().is_empty() {
                return Err(bad(format!("candidate {i}: empty text")));
            }
            let score = item
                .get("score")
                .and_then(Value::as_f64)
                .ok_or_else(|| bad(format!("candidate {i}: missing score")))?;
            if !score.is_finite() {
                return Err(bad(format!("candidate {i}: non-finite score")));
            }
            Ok(Candidate::new(text, score))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::{parse_markup, to_model_input};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve one canned response (after `delay`) on a local port.
    fn serve_once(body: String, delay: Duration) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut req = vec![0u8; len];
            reader.read_exact(&mut req).unwrap();
            let req: Value = serde_json::from_slice(&req).unwrap();
            assert!(req["input"].as_str().unwrap().contains("<replace>"));
            std::thread::sleep(delay);
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body.len(),
                body
            );
        });
        format!("http://{addr}/generate")
    }

    fn input() -> ModelInput {
        to_model_input(&parse_markup("a [ wave ] here").unwrap()).unwrap()
    }

    #[test]
    fn well_formed_response_keeps_order() {
        let items: Vec<Value> = (0..10).map(|i| json!({"text": format!("s{i}"), "score": -(i as f64)})).collect();
        let url = serve_once(json!({ "candidates": items }).to_string(), Duration::ZERO);
        let b = HttpBackend::new("remote", url, Duration::from_secs(5));
        let c = b.candidates(&input(), 10).unwrap();
        assert_eq!(c.len(), 10);
        assert_eq!(c[3], Candidate::new("s3", -3.0));
    }

    #[test]
    fn missing_score_is_malformed() {
        let body = json!({"candidates": [{"text": "a", "score": 1.0}, {"text": "b"}]}).to_string();
        let url = serve_once(body, Duration::ZERO);
        let b = HttpBackend::new("remote", url, Duration::from_secs(5));
        assert!(matches!(b.candidates(&input(), 10), Err(GenerationError::MalformedResponse(_))));
    }

    #[test]
    fn timeout_is_unavailable() {
        let url = serve_once(json!({"candidates": []}).to_string(), Duration::from_millis(800));
        let b = HttpBackend::new("remote", url, Duration::from_millis(150));
        assert!(matches!(b.candidates(&input(), 10), Err(GenerationError::BackendUnavailable(_))));
    }

    #[test]
    fn connection_refused_is_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let b = HttpBackend::new("remote", format!("http://127.0.0.1:{port}/"), Duration::from_secs(1));
        assert!(matches!(b.candidates(&input(), 10), Err(GenerationError::BackendUnavailable(_))));
    }

    #[test]
    fn parse_rejects_empty_text() {
        let v = json!({"candidates": [{"text": " ", "score": 0.0}]});
        assert!(parse_candidates(&v).is_err());
        assert!(parse_candidates(&json!({})).is_err());
    }
}
