//! Minimal DevTools protocol client over a websocket with flattened
//! target sessions.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot};
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, Clone)]
pub(crate) struct CdpEvent {
    pub method: String,
    pub params: Value,
}

#[derive(Debug, Clone, thiserror::Error)]
pub(crate) enum CdpError {
    #[error("connection closed")]
    Closed,
    #[error("{method}: {message}")]
    Remote { method: String, message: String },
    #[error("websocket: {0}")]
    Socket(String),
}

type Pending = HashMap<u64, (String, oneshot::Sender<Result<Value, CdpError>>)>;

struct Shared {
    pending: Mutex<Pending>,
    sessions: Mutex<HashMap<String, mpsc::UnboundedSender<CdpEvent>>>,
    closed: AtomicBool,
}

#[derive(Clone)]
pub(crate) struct CdpConnection {
    outgoing: mpsc::UnboundedSender<Message>,
    shared: Arc<Shared>,
    next_id: Arc<AtomicU64>,
}

impl CdpConnection {
    pub async fn connect(ws_url: &str) -> Result<Self, CdpError> {
        let (ws, _) = tokio_tungstenite::connect_async(ws_url)
            .await
            .map_err(|e| CdpError::Socket(e.to_string()))?;
        let (mut sink, mut stream) = ws.split();
        let (tx, mut rx) = mpsc::unbounded_channel::<Message>();
        let shared = Arc::new(Shared {
            pending: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            closed: AtomicBool::new(false),
        });

        tokio::spawn(async move {
            while let Some(msg) = rx.recv().await {
                if sink.send(msg).await.is_err() {
                    break;
                }
            }
        });

        let reader_shared = shared.clone();
        tokio::spawn(async move {
            while let Some(Ok(msg)) = stream.next().await {
                let text = match msg {
                    Message::Text(t) => t.to_string(),
                    Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                    Message::Close(_) => break,
                    _ => continue,
                };
                let Ok(value) = serde_json::from_str::<Value>(&text) else {
                    continue;
                };
                dispatch(&reader_shared, value);
            }
            reader_shared.closed.store(true, Ordering::SeqCst);
            for (_, (_, tx)) in reader_shared.pending.lock().unwrap().drain() {
                let _ = tx.send(Err(CdpError::Closed));
            }
            reader_shared.sessions.lock().unwrap().clear();
        });

        Ok(Self {
            outgoing: tx,
            shared,
            next_id: Arc::new(AtomicU64::new(1)),
        })
    }

    pub fn is_closed(&self) -> bool {
        self.shared.closed.load(Ordering::SeqCst)
    }

    /// Route events carrying `session_id` to the returned receiver.
    pub fn subscribe(&self, session_id: &str) -> mpsc::UnboundedReceiver<CdpEvent> {
        let (tx, rx) = mpsc::unbounded_channel();
        self.shared
            .sessions
            .lock()
            .unwrap()
            .insert(session_id.to_string(), tx);
        rx
    }

    pub fn unsubscribe(&self, session_id: &str) {
        self.shared.sessions.lock().unwrap().remove(session_id);
    }

    pub async fn call(
        &self,
        method: &str,
        params: Value,
        session_id: Option<&str>,
    ) -> Result<Value, CdpError> {
        if self.is_closed() {
            return Err(CdpError::Closed);
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let mut msg = json!({"id": id, "method": method, "params": params});
        if let Some(s) = session_id {
            msg["sessionId"] = json!(s);
        }
        let (tx, rx) = oneshot::channel();
        self.shared
            .pending
            .lock()
            .unwrap()
            .insert(id, (method.to_string(), tx));
        if self.outgoing.send(Message::Text(msg.to_string().into())).is_err() {
            self.shared.pending.lock().unwrap().remove(&id);
            return Err(CdpError::Closed);
        }
        rx.await.unwrap_or(Err(CdpError::Closed))
    }
}

fn dispatch(shared: &Shared, value: Value) {
    if let Some(id) = value.get("id").and_then(Value::as_u64) {
        let Some((method, tx)) = shared.pending.lock().unwrap().remove(&id) else {
            return;
        };
        let result = match value.get("error") {
            Some(err) => Err(CdpError::Remote {
                method,
                message: err
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown error")
                    .to_string(),
            }),
            None => Ok(value.get("result").cloned().unwrap_or(Value::Null)),
        };
        let _ = tx.send(result);
        return;
    }
    let Some(method) = value.get("method").and_then(Value::as_str) else {
        return;
    };
    let Some(session) = value.get("sessionId").and_then(Value::as_str) else {
        return;
    };
    let sessions = shared.sessions.lock().unwrap();
    if let Some(tx) = sessions.get(session) {
        let _ = tx.send(CdpEvent {
            method: method.to_string(),
            params: value.get("params").cloned().unwrap_or(Value::Null),
        });
    }
}
