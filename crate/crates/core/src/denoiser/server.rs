use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use super::wire::{ArrayBody, CodecBody, DenoiseRequestBody, DenoiseResponseBody, ErrorBody};
use super::{Codec, DenoiseError, Denoiser};
use crate::image::Space;

struct Shared {
    denoiser: Arc<dyn Denoiser>,
    codec: Option<Arc<dyn Codec>>,
    ready: AtomicBool,
}

/// HTTP front end exposing a [`Denoiser`] (and optionally a [`Codec`]) over
/// the `/v1` protocol. Handy for exercising remote clients against the mock.
pub struct ProtocolServer {
    server: Arc<Server>,
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ProtocolServer {
    pub fn start(
        addr: &str,
        denoiser: Arc<dyn Denoiser>,
        codec: Option<Arc<dyn Codec>>,
        threads: usize,
    ) -> io::Result<Self> {
        let server = Server::http(addr).map_err(io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            denoiser,
            codec,
            ready: AtomicBool::new(true),
        });
        let workers = (0..threads.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let shared = Arc::clone(&shared);
                std::thread::spawn(move || {
                    while let Ok(req) = server.recv() {
                        handle(&shared, req);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            shared,
            workers,
            addr,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// While not ready, every endpoint answers 503.
    pub fn set_ready(&self, ready: bool) {
        self.shared.ready.store(ready, Ordering::SeqCst);
    }

    /// Blocks until the server is shut down from elsewhere.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ProtocolServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header is valid")
}

fn reply<T: Serialize>(req: Request, status: u16, body: &T) {
    let text = serde_json::to_string(body).unwrap_or_else(|_| "{}".into());
    let resp = Response::from_string(text)
        .with_status_code(status)
        .with_header(json_header());
    if let Err(e) = req.respond(resp) {
        log::warn!("failed to send response: {e}");
    }
}

fn status_of(e: &DenoiseError) -> u16 {
    match e {
        DenoiseError::BackendUnavailable(_) => 503,
        DenoiseError::Validation(_)
        | DenoiseError::ShapeMismatch(_)
        | DenoiseError::UnknownPrompt(_)
        | DenoiseError::Protocol(_)
        | DenoiseError::Image(_) => 400,
        DenoiseError::Schedule(_) => 500,
    }
}

fn parse<T: serde::de::DeserializeOwned>(req: &mut Request) -> Result<T, DenoiseError> {
    let mut text = String::new();
    req.as_reader()
        .read_to_string(&mut text)
        .map_err(|e| DenoiseError::Protocol(format!("unreadable body: {e}")))?;
    serde_json::from_str(&text).map_err(|e| DenoiseError::Protocol(format!("malformed body: {e}")))
}

fn codec(shared: &Shared) -> Result<&dyn Codec, DenoiseError> {
    shared
        .codec
        .as_deref()
        .ok_or_else(|| DenoiseError::BackendUnavailable("backend has no codec".into()))
}

fn handle(shared: &Shared, mut req: Request) {
    if !shared.ready.load(Ordering::SeqCst) {
        return reply(req, 503, &ErrorBody { error: "model not loaded".into() });
    }
    let method = req.method().clone();
    let path = req.url().split('?').next().unwrap_or("").to_string();
    let outcome: Result<String, DenoiseError> = match (method, path.as_str()) {
        (Method::Post, "/v1/denoise") => parse::<DenoiseRequestBody>(&mut req)
            .and_then(|b| b.into_request())
            .and_then(|r| shared.denoiser.guidance_step(&r))
            .map(|r| json(&DenoiseResponseBody::from_response(&r))),
        (Method::Post, "/v1/encode") => codec(shared).and_then(|c| {
            let img = parse::<ArrayBody>(&mut req)?.into_grid(Space::Pixel)?;
            Ok(json(&ArrayBody::from_grid(&c.encode(&img)?)))
        }),
        (Method::Post, "/v1/decode") => codec(shared).and_then(|c| {
            let z = parse::<ArrayBody>(&mut req)?.into_grid(Space::Latent)?;
            Ok(json(&ArrayBody::from_grid(&c.decode(&z)?)))
        }),
        (Method::Get, "/v1/codec") => {
            codec(shared).and_then(|c| Ok(json(&CodecBody::from(c.descriptor()?))))
        }
        _ => {
            return reply(req, 404, &ErrorBody { error: format!("no route for {path}") });
        }
    };
    match outcome {
        Ok(text) => {
            let resp = Response::from_string(text).with_header(json_header());
            if let Err(e) = req.respond(resp) {
                log::warn!("failed to send response: {e}");
            }
        }
        Err(e) => reply(req, status_of(&e), &ErrorBody { error: e.to_string() }),
    }
}

fn json<T: Serialize>(body: &T) -> String {
    serde_json::to_string(body).expect("protocol bodies serialize")
}
