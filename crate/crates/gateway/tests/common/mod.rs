#![allow(dead_code)]

use std::time::Duration;

use futures::{SinkExt, StreamExt};
use glovelink_gateway::protocol::{Message, Role};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as Frame;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

pub const TIMEOUT: Duration = Duration::from_secs(5);

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pub states: Vec<Message>,
}

impl Client {
    pub async fn connect(url: &str) -> Self {
        let (ws, _) = connect_async(url).await.expect("connect");
        Self { ws, states: Vec::new() }
    }

    pub async fn hello(url: &str, role: Role) -> (Self, Vec<Message>) {
        let mut c = Self::connect(url).await;
        c.send(&Message::Hello { role }).await;
        let mut got = Vec::new();
        loop {
            let m = c.next().await.expect("reply to hello");
            let done = matches!(m, Message::Ack { .. });
            got.push(m);
            if done {
                return (c, got);
            }
        }
    }

    pub async fn send(&mut self, m: &Message) {
        self.send_text(&m.to_json()).await;
    }

    pub async fn send_text(&mut self, text: &str) {
        self.ws.send(Frame::Text(text.into())).await.expect("send");
    }

    pub async fn send_binary(&mut self, b: Vec<u8>) {
        self.ws.send(Frame::Binary(b.into())).await.expect("send");
    }

    /// Next frame of any type.
    pub async fn raw(&mut self, limit: Duration) -> Option<Message> {
        loop {
            match tokio::time::timeout(limit, self.ws.next()).await {
                Ok(Some(Ok(Frame::Text(t)))) => return Some(Message::parse(t.as_str()).expect("server frames parse")),
                Ok(Some(Ok(Frame::Close(_)))) | Ok(None) | Ok(Some(Err(_))) | Err(_) => return None,
                Ok(Some(Ok(_))) => continue,
            }
        }
    }

    /// Next non-`robot_state` frame; state frames are kept in `states`.
    pub async fn next(&mut self) -> Option<Message> {
        self.next_within(TIMEOUT).await
    }

    pub async fn next_within(&mut self, limit: Duration) -> Option<Message> {
        let deadline = tokio::time::Instant::now() + limit;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            let m = self.raw(left).await?;
            if matches!(m, Message::RobotState { .. }) {
                self.states.push(m);
            } else {
                return Some(m);
            }
        }
    }

    /// Drains until no non-state frame arrives for `quiet`.
    pub async fn drain(&mut self, quiet: Duration) -> Vec<Message> {
        let mut out = Vec::new();
        while let Some(m) = self.next_within(quiet).await {
            out.push(m);
        }
        out
    }

    /// Reads every frame for exactly `d`; returns the non-state frames.
    pub async fn watch_for(&mut self, d: Duration) -> Vec<Message> {
        let deadline = tokio::time::Instant::now() + d;
        let mut out = Vec::new();
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            if left.is_zero() {
                return out;
            }
            match self.raw(left).await {
                Some(m @ Message::RobotState { .. }) => self.states.push(m),
                Some(m) => out.push(m),
                None => {}
            }
        }
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}

pub fn hand(t: f64, x: f64, yaw: f64) -> Message {
    Message::HandInput {
        t,
        pos: [x, 0.5 * x, -0.25 * x],
        quat: [(yaw / 2.0).cos(), 0.0, 0.0, (yaw / 2.0).sin()],
        finger_dist: 0.05,
        landmarks: None,
    }
}
