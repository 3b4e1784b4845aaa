#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use cygent::backends::{ApiKey, Backend, BackendConfig, RemoteBackend};
use cygent::service::AppState;
use cygent::store::Store;
use cygent::summarize::Summarizer;
use serde_json::{json, Value};

pub const STUB_KEY: &str = "stub-secret-key";

/// One scripted response of the stub chat-completions server.
#[derive(Debug, Clone)]
pub enum Step {
    Status(u16),
    Reply(String),
    /// Sleeps before answering, to trigger client timeouts.
    Hang(Duration),
    Garbage,
}

#[derive(Default)]
struct StubState {
    script: Mutex<VecDeque<Step>>,
    calls: AtomicUsize,
    requests: Mutex<Vec<(Option<String>, Value)>>,
    default_reply: Mutex<String>,
}

/// Loopback stand-in for a chat-completions endpoint. After the script is
/// exhausted it answers 200 with the default reply.
#[derive(Clone)]
pub struct Stub {
    pub base_url: String,
    state: Arc<StubState>,
}

impl Stub {
    pub async fn start(script: Vec<Step>) -> Self {
        let state = Arc::new(StubState {
            script: Mutex::new(script.into()),
            default_reply: Mutex::new("OK".into()),
            ..StubState::default()
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(stub_handler))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self {
            base_url: format!("http://{addr}/v1"),
            state,
        }
    }

    pub fn calls(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }

    pub fn push(&self, step: Step) {
        self.state.script.lock().unwrap().push_back(step);
    }

    pub fn set_default_reply(&self, reply: &str) {
        *self.state.default_reply.lock().unwrap() = reply.into();
    }

    /// (authorization header, JSON body) of every request received.
    pub fn requests(&self) -> Vec<(Option<String>, Value)> {
        self.state.requests.lock().unwrap().clone()
    }

    pub fn config(&self) -> BackendConfig {
        BackendConfig {
            base_url: self.base_url.clone(),
            api_key: ApiKey::new(STUB_KEY),
            model_name: "stub-model".into(),
            timeout_s: 2.0,
            backoff_base: Duration::from_millis(10),
            ..BackendConfig::default()
        }
    }

    pub fn backend(&self) -> Backend {
        Backend::Remote(RemoteBackend::new(self.config()).unwrap())
    }
}

fn completion(content: &str) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
}

async fn stub_handler(State(state): State<Arc<StubState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    state.calls.fetch_add(1, Ordering::SeqCst);
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    state.requests.lock().unwrap().push((auth, body));
    let step = state.script.lock().unwrap().pop_front();
    match step {
        Some(Step::Status(code)) => {
            let status = StatusCode::from_u16(code).unwrap();
            (status, Json(json!({"error": {"message": "scripted"}}))).into_response()
        }
        Some(Step::Reply(text)) => Json(completion(&text)).into_response(),
        Some(Step::Hang(delay)) => {
            tokio::time::sleep(delay).await;
            Json(completion("late")).into_response()
        }
        Some(Step::Garbage) => (StatusCode::OK, "not json").into_response(),
        None => {
            let reply = state.default_reply.lock().unwrap().clone();
            Json(completion(&reply)).into_response()
        }
    }
}

/// The service running on a loopback port over a fresh temporary store.
pub struct TestServer {
    pub base: String,
    pub client: reqwest::Client,
    pub store: Arc<Store>,
    _dir: tempfile::TempDir,
}

impl TestServer {
    pub async fn start(backend: Backend) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let state = AppState::new(Summarizer::new(store.clone(), backend));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { cygent::service::serve(listener, state).await.unwrap() });
        Self {
            base: format!("http://{addr}"),
            client: reqwest::Client::new(),
            store,
            _dir: dir,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        read(resp).await
    }

    pub async fn put(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.client.put(self.url(path)).json(&body).send().await.unwrap();
        read(resp).await
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.client.get(self.url(path)).send().await.unwrap();
        read(resp).await
    }

    pub async fn new_session(&self) -> String {
        let (status, body) = self.post("/sessions", json!({})).await;
        assert_eq!(status, 201, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    pub async fn upload(&self, session: &str, name: &str, content: &str) -> String {
        let (status, body) = self
            .post(&format!("/sessions/{session}/files"), json!({"name": name, "content": content}))
            .await;
        assert_eq!(status, 201, "{body}");
        body["file_id"].as_str().unwrap().to_string()
    }
}

pub async fn read(resp: reqwest::Response) -> (u16, Value) {
    let status = resp.status().as_u16();
    let text = resp.text().await.unwrap();
    let body = serde_json::from_str(&text).unwrap_or(Value::String(text));
    (status, body)
}

/// Asserts `body` is exactly an error document with the given code.
pub fn assert_api_error(body: &Value, code: &str) {
    let obj = body.as_object().unwrap_or_else(|| panic!("not an object: {body}"));
    assert_eq!(obj.len(), 2, "{body}");
    assert_eq!(obj["code"], code, "{body}");
    assert!(!obj["message"].as_str().unwrap().is_empty());
}

pub const ACCESS_LOG: &str = "\
192.168.1.10 - - [01/Mar/2023:10:00:00 +0000] \"GET /index.html HTTP/1.1\" 200 512 \"https://example.com/\" \"Mozilla/5.0\"
192.168.1.11 - - [01/Mar/2023:10:00:01 +0000] \"GET /admin/config.php HTTP/1.1\" 404 0 \"-\" \"curl/8.0\"
10.0.0.5 - - [01/Mar/2023:10:00:02 +0000] \"POST /api/login HTTP/1.1\" 500 128 \"-\" \"python-requests/2.31\"
ERROR database connection refused from 10.0.0.5 while reading /var/lib/app/db.sqlite
WARN retrying request to https://backend.internal/api/v2 after status 503
INFO health check ok
";
