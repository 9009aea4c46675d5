#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use dlot_service::{Credential, ManualClock, RunningService, ServiceConfig, StreamEvent, SubmitRequest};
use dlot_core::Timestamp;
use futures_util::StreamExt;
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const T0: i64 = 1_700_000_000_000;

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub struct Harness {
    pub service: RunningService,
    pub clock: ManualClock,
    pub http: reqwest::Client,
}

pub fn config_doc(id: &str, subjects: usize, interval_ms: i64, observers: &[&str], mode: &str) -> Value {
    let roster: Vec<Value> = (1..=subjects)
        .map(|i| json!({"id": format!("s{i}"), "display_name": format!("Student {i}")}))
        .collect();
    json!({
        "session_id": id,
        "title": "classroom affect",
        "scheme": {"groups": [
            {"name": "affect", "selection": "single",
             "labels": ["engaged", "boredom", "confusion", "frustration", "neutral"]},
            {"name": "behaviour", "selection": "multiple",
             "labels": ["on task", "talking", "off task"]}
        ]},
        "roster": {"subjects": roster},
        "timer": {"interval_ms": interval_ms},
        "scheduling_mode": mode,
        "observer_ids": observers,
    })
}

pub fn answer(prompt: u64, affect: &str, behaviour: &[&str]) -> SubmitRequest {
    let mut selections = dlot_core::Selections::new();
    selections.insert("affect".into(), [affect.to_string()].into());
    selections.insert("behaviour".into(), behaviour.iter().map(|b| b.to_string()).collect());
    SubmitRequest {
        prompt_index: prompt,
        subject_id: None,
        selections,
        status: dlot_core::PromptOutcome::Logged,
        client_sent_at: None,
    }
}

impl Harness {
    pub async fn start(data_dir: &Path, clock: ManualClock) -> Harness {
        let config = ServiceConfig {
            data_dir: data_dir.to_path_buf(),
            ui_dir: None,
            heartbeat: Duration::from_millis(150),
            tick: Duration::from_millis(5),
        };
        let service = dlot_service::start("127.0.0.1:0", config, Arc::new(clock.clone()))
            .await
            .unwrap();
        Harness {
            service,
            clock,
            http: reqwest::Client::new(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.service.url())
    }

    /// Moves the virtual clock and runs the scheduler right away.
    pub fn advance(&self, millis: i64) -> Timestamp {
        let t = self.clock.advance(millis);
        self.service.registry.tick_all();
        t
    }

    pub async fn create(&self, doc: &Value) -> reqwest::Response {
        self.http.post(self.url("/sessions")).json(doc).send().await.unwrap()
    }

    pub async fn post(&self, path: &str) -> reqwest::Response {
        self.http.post(self.url(path)).send().await.unwrap()
    }

    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.http.get(self.url(path)).send().await.unwrap()
    }

    pub async fn join(&self, id: &str, observer: &str) -> Credential {
        let resp = self
            .http
            .post(self.url(&format!("/sessions/{id}/observers")))
            .json(&json!({"observer_id": observer}))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201, "joining {observer}");
        resp.json().await.unwrap()
    }

    pub async fn submit(&self, id: &str, token: &str, req: &SubmitRequest) -> reqwest::Response {
        self.http
            .post(self.url(&format!("/sessions/{id}/observations")))
            .bearer_auth(token)
            .json(req)
            .send()
            .await
            .unwrap()
    }

    pub async fn stream(&self, id: &str, token: &str) -> Ws {
        let url = format!("ws://{}/sessions/{id}/stream?token={token}", self.service.addr);
        tokio_tungstenite::connect_async(url).await.unwrap().0
    }
}

pub enum Received {
    Event(StreamEvent),
    Closed(Option<(CloseCode, String)>),
}

pub async fn receive(ws: &mut Ws) -> Received {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("stream went quiet");
        match msg {
            Some(Ok(Message::Text(text))) => {
                return Received::Event(serde_json::from_str(&text).expect("stream message"))
            }
            Some(Ok(Message::Close(frame))) => {
                return Received::Closed(frame.map(|f| (f.code, f.reason.to_string())))
            }
            Some(Ok(_)) => continue,
            None | Some(Err(_)) => return Received::Closed(None),
        }
    }
}

/// Next message that is not a heartbeat.
pub async fn next_event(ws: &mut Ws) -> Option<StreamEvent> {
    loop {
        match receive(ws).await {
            Received::Event(StreamEvent::Heartbeat { .. }) => continue,
            Received::Event(e) => return Some(e),
            Received::Closed(_) => return None,
        }
    }
}
