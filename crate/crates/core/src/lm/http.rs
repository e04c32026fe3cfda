use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{record, Backend, EndpointConfig, ExchangeRecord, LmError, MutationRequest};

/// Token bucket refilled continuously at `rate` tokens per second.
struct Bucket {
    capacity: f64,
    tokens: f64,
    rate: f64,
    last: Instant,
}

impl Bucket {
    fn new(per_minute: u32) -> Self {
        let capacity = f64::from(per_minute.max(1));
        Bucket {
            capacity,
            tokens: capacity,
            rate: capacity / 60.0,
            last: Instant::now(),
        }
    }

    fn take(&mut self) {
        loop {
            let now = Instant::now();
            self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.rate).min(self.capacity);
            self.last = now;
            if self.tokens >= 1.0 {
                self.tokens -= 1.0;
                return;
            }
            std::thread::sleep(Duration::from_secs_f64((1.0 - self.tokens) / self.rate));
        }
    }
}

/// Chat-completion client for any compatible endpoint.
pub struct HttpBackend {
    config: EndpointConfig,
    agent: ureq::Agent,
    bucket: Option<Bucket>,
    records: Vec<ExchangeRecord>,
    /// Keep full request and response texts in the records.
    pub keep_transcripts: bool,
}

enum Failure {
    Retry(LmError),
    Fatal(LmError),
}

impl HttpBackend {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001)))
            .build();
        HttpBackend {
            bucket: config.requests_per_minute.map(Bucket::new),
            config,
            agent,
            records: Vec::new(),
            keep_transcripts: false,
        }
    }

    fn attempt(&mut self, body: &Value, attempts: u32) -> Result<String, Failure> {
        if let Some(b) = &mut self.bucket {
            b.take();
        }
        let mut req = self.agent.post(&self.config.url()).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {}", key.expose()));
        }
        match req.send_json(body) {
            Ok(resp) => {
                let v: Value = resp
                    .into_json()
                    .map_err(|e| Failure::Retry(LmError::Transport { attempts, message: e.to_string() }))?;
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| Failure::Fatal(LmError::Response("missing choices[0].message.content".into())))
            }
            Err(ureq::Error::Status(code, _)) if code == 401 || code == 403 => Err(Failure::Fatal(LmError::Auth(code))),
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Err(Failure::Retry(LmError::Status { status: code, attempts }))
            }
            Err(ureq::Error::Status(code, _)) => Err(Failure::Fatal(LmError::Status { status: code, attempts })),
            Err(ureq::Error::Transport(t)) => Err(Failure::Retry(LmError::Transport {
                attempts,
                message: match t.message() {
                    Some(m) => format!("{}: {m}", t.kind()),
                    None => t.kind().to_string(),
                },
            })),
        }
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    /// Retries transport failures, 429 and 5xx responses up to the
    /// request's retry budget with exponential backoff.
    fn complete(&mut self, request: &MutationRequest) -> Result<String, LmError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match self.attempt(&body, attempts) {
                Ok(text) => break Ok(text),
                Err(Failure::Fatal(e)) => break Err(e),
                Err(Failure::Retry(e)) => {
                    if attempts > request.retry_budget {
                        break Err(e);
                    }
                    let wait = self.config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    std::thread::sleep(Duration::from_millis(wait));
                }
            }
        };
        self.records.push(record("http", request, &result, attempts, self.keep_transcripts));
        result
    }

    fn records(&self) -> &[ExchangeRecord] {
        &self.records
    }
}
