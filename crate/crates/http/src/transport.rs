//! Blocking HTTP client implementing the `Transport` trait. Calls are
//! synchronous: responses land in the issuing agent's inbox immediately,
//! exactly like a zero-latency simulated link. Network failures are treated
//! as lost messages (logged, not fatal).

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use tracing::warn;

use platoon_core::comms::messages::{
    Ack, LatchCommandMsg, PerceptionResult, ServerRequest, ServerResponse, SystemState,
};
use platoon_core::comms::transport::Transport;
use platoon_core::world::{AgentId, Tick};

use crate::ErrorBody;

pub struct HttpTransport {
    base_url: String,
    client: Client,
    inboxes: Vec<(AgentId, Vec<ServerResponse>)>,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpTransport {
            base_url: base_url.into(),
            client: Client::new(),
            inboxes: Vec::new(),
        }
    }

    fn inbox(&mut self, agent: &AgentId) -> &mut Vec<ServerResponse> {
        if let Some(idx) = self.inboxes.iter().position(|(id, _)| id == agent) {
            return &mut self.inboxes[idx].1;
        }
        self.inboxes.push((agent.clone(), Vec::new()));
        &mut self.inboxes.last_mut().expect("just pushed").1
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    fn agent_url(&self, path: &str, agent_id: &AgentId) -> String {
        format!("{}{path}?agent_id={}", self.base_url, encode(agent_id.as_str()))
    }

    /// Run one operation synchronously and map the HTTP reply onto the
    /// in-process response type.
    fn call(&self, req: &ServerRequest) -> Result<ServerResponse, reqwest::Error> {
        let response = match req {
            ServerRequest::SubmitStatus(update) => {
                self.client.post(self.url("/status")).json(update).send()?
            }
            ServerRequest::PollSystemState { agent_id } => self
                .client
                .get(self.agent_url("/system-state", agent_id))
                .send()?,
            ServerRequest::RequestPerception(pr) => {
                self.client.post(self.url("/perception")).json(pr).send()?
            }
            ServerRequest::SubmitLatchCommand(msg) => self
                .client
                .post(self.url("/latch-command"))
                .json(msg)
                .send()?,
            ServerRequest::PollLatchCommands { agent_id } => self
                .client
                .get(self.agent_url("/latch-command", agent_id))
                .send()?,
            ServerRequest::ResolveStop(msg) => self
                .client
                .post(self.url("/resolve-stop"))
                .json(msg)
                .send()?,
            ServerRequest::PublishFrame(snapshot) => {
                self.client.post(self.url("/frame")).json(snapshot).send()?
            }
        };
        decode(req, response)
    }
}

/// Percent-encode the few bytes that matter inside a query value.
fn encode(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for b in raw.bytes() {
        match b {
            b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn decode(req: &ServerRequest, response: Response) -> Result<ServerResponse, reqwest::Error> {
    if response.status() == StatusCode::BAD_REQUEST {
        let body: ErrorBody = response.json()?;
        return Ok(ServerResponse::Rejected {
            reason: body.reason,
        });
    }
    let response = response.error_for_status()?;
    Ok(match req {
        ServerRequest::SubmitStatus(_)
        | ServerRequest::SubmitLatchCommand(_)
        | ServerRequest::PublishFrame(_) => ServerResponse::Ack(response.json::<Ack>()?),
        ServerRequest::PollSystemState { .. } | ServerRequest::ResolveStop(_) => {
            ServerResponse::SystemState(response.json::<SystemState>()?)
        }
        ServerRequest::RequestPerception(_) => {
            ServerResponse::Perception(Box::new(response.json::<PerceptionResult>()?))
        }
        ServerRequest::PollLatchCommands { .. } => {
            ServerResponse::LatchCommands(response.json::<Vec<LatchCommandMsg>>()?)
        }
    })
}

impl Transport for HttpTransport {
    fn send(&mut self, from: &AgentId, req: ServerRequest, _tick: Tick) {
        match self.call(&req) {
            Ok(resp) => self.inbox(from).push(resp),
            Err(e) => warn!(agent = %from, "http call failed, message lost: {e}"),
        }
    }

    fn drain(&mut self, agent: &AgentId, _tick: Tick) -> Vec<ServerResponse> {
        std::mem::take(self.inbox(agent))
    }

    fn advance(&mut self, _tick: Tick) {}

    fn admin_system_state(&mut self) -> SystemState {
        self.client
            .get(self.url("/admin/system-state"))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<SystemState>())
            .expect("admin system-state read")
    }

    fn admin_submit(&mut self, req: ServerRequest) -> ServerResponse {
        self.call(&req).expect("admin submission")
    }
}
