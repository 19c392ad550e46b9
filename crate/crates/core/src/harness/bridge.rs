//! WebSocket endpoint through which a human expert answers queries.
//!
//! Every WebSocket text message carries one JSON object tagged by `"type"`.
//!
//! Server to client: `hello`, `query`, `state_stream`, `curve_point`,
//! `confirm`, `error`. Client to server: `action`. Unknown fields are ignored
//! on both sides. One client is served at a time; when none is connected,
//! queries are abandoned immediately and the budget is not charged.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::envs::{RenderState, Task};
use crate::error::Result;
use crate::expert::{ConsoleMessage, HumanAdapter, QueryPayload};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Hello {
        protocol_version: u32,
        run_id: String,
    },
    Query {
        run_id: String,
        step: u64,
        task: Task,
        render_state: RenderState,
        q_values: Vec<f64>,
        uncertainty: Option<f64>,
        budget_left: usize,
        /// Unix time in milliseconds.
        deadline: u64,
    },
    StateStream {
        run_id: String,
        step: u64,
        task: Task,
        render_state: RenderState,
    },
    CurvePoint {
        step: u64,
        score: f64,
    },
    Confirm {
        step: u64,
        action_id: usize,
        budget_left: usize,
    },
    Error {
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Action { step: u64, action_id: usize },
}

impl ServerFrame {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames always serialize")
    }
}

pub fn parse_client_frame(text: &str) -> std::result::Result<ClientFrame, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
}

pub fn parse_server_frame(text: &str) -> std::result::Result<ServerFrame, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
}

#[derive(Clone, Debug)]
pub struct BridgeConfig {
    /// Address to bind, e.g. `127.0.0.1:8765`; port 0 picks a free one.
    pub addr: String,
    pub run_id: String,
    pub query_timeout: Duration,
    pub num_actions: usize,
    /// Forward passive state frames between queries.
    pub stream_states: bool,
    pub poll_interval: Duration,
}

impl BridgeConfig {
    pub fn new(addr: impl Into<String>, num_actions: usize) -> Self {
        Self {
            addr: addr.into(),
            run_id: "run".into(),
            query_timeout: Duration::from_secs(15),
            num_actions,
            stream_states: true,
            poll_interval: Duration::from_millis(5),
        }
    }
}

/// A running bridge endpoint.
pub struct Bridge {
    tx: Sender<ConsoleMessage>,
    local_addr: SocketAddr,
    connected: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    config: BridgeConfig,
}

impl Bridge {
    pub fn serve(config: BridgeConfig) -> Result<Self> {
        let listener = TcpListener::bind(&config.addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let connected = Arc::new(AtomicBool::new(false));
        let stop = Arc::new(AtomicBool::new(false));
        let mut server = Server {
            listener,
            rx,
            client: None,
            pending: None,
            connected: connected.clone(),
            stop: stop.clone(),
            config: config.clone(),
        };
        let handle = thread::Builder::new()
            .name("expert-bridge".into())
            .spawn(move || server.run())?;
        Ok(Self {
            tx,
            local_addr,
            connected,
            stop,
            handle: Some(handle),
            config,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// An expert adapter whose queries go through this bridge.
    pub fn adapter(&self) -> HumanAdapter {
        HumanAdapter::new(self.tx.clone(), self.config.query_timeout, self.config.num_actions)
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::SeqCst)
    }

    /// Blocks until a client has completed the handshake or `timeout` passes.
    pub fn wait_for_client(&self, timeout: Duration) -> bool {
        let start = Instant::now();
        while start.elapsed() < timeout {
            if self.is_connected() {
                return true;
            }
            thread::sleep(Duration::from_millis(5));
        }
        self.is_connected()
    }

    pub fn shutdown(mut self) {
        self.stop_thread();
    }

    fn stop_thread(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.stop_thread();
    }
}

struct Pending {
    payload: QueryPayload,
    reply: Sender<usize>,
}

struct Server {
    listener: TcpListener,
    rx: Receiver<ConsoleMessage>,
    client: Option<WebSocket<TcpStream>>,
    pending: Option<Pending>,
    connected: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
    config: BridgeConfig,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Server {
    fn run(&mut self) {
        while !self.stop.load(Ordering::SeqCst) {
            if self.client.is_none() {
                self.try_accept();
            }
            self.drain_messages();
            if self.client.is_some() {
                self.read_client();
            } else {
                thread::sleep(self.config.poll_interval);
            }
            if let Some(p) = &self.pending {
                if now_ms() > p.payload.deadline {
                    self.pending = None;
                    self.send(&ServerFrame::Error {
                        message: "query expired".into(),
                    });
                }
            }
        }
        self.drain_messages();
        if let Some(mut ws) = self.client.take() {
            let _ = ws.close(None);
            let _ = ws.flush();
        }
    }

    fn try_accept(&mut self) {
        let stream = match self.listener.accept() {
            Ok((stream, _)) => stream,
            Err(_) => return,
        };
        if stream.set_nonblocking(false).is_err() {
            return;
        }
        let _ = stream.set_nodelay(true);
        if let Ok(ws) = tungstenite::accept(stream) {
            let _ = ws.get_ref().set_read_timeout(Some(self.config.poll_interval));
            self.client = Some(ws);
            self.send(&ServerFrame::Hello {
                protocol_version: PROTOCOL_VERSION,
                run_id: self.config.run_id.clone(),
            });
            self.connected.store(self.client.is_some(), Ordering::SeqCst);
        }
    }

    fn disconnect(&mut self) {
        self.client = None;
        self.connected.store(false, Ordering::SeqCst);
    }

    fn send(&mut self, frame: &ServerFrame) {
        let failed = match self.client.as_mut() {
            Some(ws) => ws.send(Message::Text(frame.to_json())).is_err(),
            None => false,
        };
        if failed {
            self.disconnect();
        }
    }

    fn query_frame(&self, payload: &QueryPayload) -> ServerFrame {
        ServerFrame::Query {
            run_id: self.config.run_id.clone(),
            step: payload.step,
            task: payload.task,
            render_state: payload.render_state.clone(),
            q_values: payload.q_values.clone(),
            uncertainty: payload.uncertainty,
            budget_left: payload.budget_left,
            deadline: payload.deadline,
        }
    }

    fn drain_messages(&mut self) {
        loop {
            match self.rx.try_recv() {
                Ok(ConsoleMessage::Query { payload, reply }) => {
                    if self.client.is_none() {
                        // Dropping `reply` abandons the query at once.
                        continue;
                    }
                    let frame = self.query_frame(&payload);
                    self.send(&frame);
                    if self.client.is_some() {
                        self.pending = Some(Pending { payload, reply });
                    }
                }
                Ok(ConsoleMessage::State {
                    step,
                    task,
                    render_state,
                }) => {
                    if self.config.stream_states {
                        self.send(&ServerFrame::StateStream {
                            run_id: self.config.run_id.clone(),
                            step,
                            task,
                            render_state,
                        });
                    }
                }
                Ok(ConsoleMessage::Confirm {
                    step,
                    action_id,
                    budget_left,
                }) => self.send(&ServerFrame::Confirm {
                    step,
                    action_id,
                    budget_left,
                }),
                Ok(ConsoleMessage::Curve { step, score }) => self.send(&ServerFrame::CurvePoint { step, score }),
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => return,
            }
        }
    }

    fn read_client(&mut self) {
        let Some(ws) = self.client.as_mut() else { return };
        match ws.read() {
            Ok(Message::Text(text)) => self.handle_text(&text),
            Ok(Message::Close(_)) => self.disconnect(),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => self.disconnect(),
        }
    }

    fn handle_text(&mut self, text: &str) {
        let frame = match parse_client_frame(text) {
            Ok(f) => f,
            Err(message) => return self.send(&ServerFrame::Error { message }),
        };
        let ClientFrame::Action { step, action_id } = frame;
        let error = match &self.pending {
            None => Some("no query is pending".to_string()),
            Some(p) if p.payload.step != step => Some(format!("pending query is for step {}", p.payload.step)),
            Some(_) if action_id >= self.config.num_actions => Some(format!(
                "action_id {action_id} out of range (0..{})",
                self.config.num_actions
            )),
            Some(_) => None,
        };
        match error {
            Some(message) => self.send(&ServerFrame::Error { message }),
            None => {
                let p = self.pending.take().expect("checked above");
                let _ = p.reply.send(action_id);
            }
        }
    }
}
