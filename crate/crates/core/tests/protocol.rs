use std::collections::BTreeMap;
use std::io::Read;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use serde_json::Value;

use tessera::denoiser::{
    Codec, DenoiseError, DenoiseRequest, Denoiser, MockCodec, MockDenoiser, PromptId, ProtocolServer, RemoteBackend,
};
use tessera::ImageGrid;

#[derive(Deserialize)]
struct Vectors {
    servers: BTreeMap<String, ServerSpec>,
    exchanges: Vec<Exchange>,
}

#[derive(Deserialize)]
struct ServerSpec {
    pull: f64,
    scale: usize,
    targets: BTreeMap<String, Array>,
}

#[derive(Deserialize)]
struct Array {
    shape: [usize; 3],
    data: String,
}

#[derive(Deserialize)]
struct Exchange {
    name: String,
    server: String,
    #[serde(default = "yes")]
    ready: bool,
    method: String,
    path: String,
    body: Option<Value>,
    raw_body: Option<String>,
    status: u16,
    response: Option<Value>,
}

fn yes() -> bool {
    true
}

/// Little-endian f32 decoding written against the base64 crate directly.
fn floats(data: &str) -> Vec<f32> {
    base64::engine::general_purpose::STANDARD
        .decode(data)
        .unwrap()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

fn start(spec: &ServerSpec) -> ProtocolServer {
    let targets: Vec<_> = spec
        .targets
        .iter()
        .map(|(p, a)| {
            let [h, w, c] = a.shape;
            (PromptId::new(p.clone()), ImageGrid::pixels(h, w, c, floats(&a.data)).unwrap())
        })
        .collect();
    let shape = targets[0].1.shape();
    let codec = MockCodec::new(shape, spec.scale).unwrap();
    let mock = MockDenoiser::new(targets)
        .with_pull(spec.pull)
        .unwrap()
        .with_codec(&codec)
        .unwrap();
    ProtocolServer::start("127.0.0.1:0", Arc::new(mock), Some(Arc::new(codec)), 2).unwrap()
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

fn exchange(agent: &ureq::Agent, base: &str, ex: &Exchange) -> (u16, String) {
    let url = format!("{base}{}", ex.path);
    let resp = match ex.method.as_str() {
        "GET" => agent.get(&url).call(),
        "POST" => {
            let body = ex
                .raw_body
                .clone()
                .unwrap_or_else(|| serde_json::to_string(ex.body.as_ref().expect("POST exchanges carry a body")).unwrap());
            agent.post(&url).header("content-type", "application/json").send(body)
        }
        m => panic!("unsupported method {m}"),
    };
    let mut resp = resp.unwrap();
    let status = resp.status().as_u16();
    let mut text = String::new();
    resp.body_mut().as_reader().read_to_string(&mut text).unwrap();
    (status, text)
}

#[test]
fn recorded_vectors() {
    let vectors: Vectors = serde_json::from_str(include_str!("data/protocol_vectors.json")).unwrap();
    let servers: BTreeMap<_, _> = vectors.servers.iter().map(|(name, s)| (name.clone(), start(s))).collect();
    let agent = agent();
    for ex in &vectors.exchanges {
        let server = &servers[&ex.server];
        server.set_ready(ex.ready);
        let (status, text) = exchange(&agent, &server.url(), ex);
        server.set_ready(true);
        assert_eq!(status, ex.status, "{}: body {text}", ex.name);
        let got: Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}: {text}", ex.name));
        match &ex.response {
            Some(expected) => assert_eq!(&got, expected, "{}", ex.name),
            None => assert!(got.get("error").is_some_and(Value::is_string), "{}: {text}", ex.name),
        }
    }
}

#[test]
fn every_status_class_is_covered() {
    let vectors: Vectors = serde_json::from_str(include_str!("data/protocol_vectors.json")).unwrap();
    for status in [200, 400, 404, 503] {
        assert!(vectors.exchanges.iter().any(|e| e.status == status), "no vector for {status}");
    }
}

fn target() -> ImageGrid {
    ImageGrid::pixels(4, 4, 3, (0..48).map(|k| (k as f32 * 0.37).fract()).collect()).unwrap()
}

fn mock() -> (Arc<MockDenoiser>, Arc<MockCodec>) {
    let codec = MockCodec::new((4, 4, 3), 2).unwrap();
    let mock = MockDenoiser::new([(PromptId::new("t"), target())])
        .with_pull(0.6)
        .unwrap()
        .with_codec(&codec)
        .unwrap();
    (Arc::new(mock), Arc::new(codec))
}

fn request(image: ImageGrid) -> DenoiseRequest {
    DenoiseRequest {
        image,
        prompt: PromptId::new("t"),
        step: 3,
        total_steps: 8,
        guidance_scale: 1.0,
        seed: 42,
    }
}

#[test]
fn remote_client_matches_in_process_results_bit_for_bit() {
    let (mock, codec) = mock();
    let server = ProtocolServer::start("127.0.0.1:0", mock.clone(), Some(codec.clone()), 2).unwrap();
    let remote = RemoteBackend::new(&server.url()).unwrap();

    let x = ImageGrid::latent(4, 4, 3, (0..48).map(|k| (k as f32 - 20.0) / 7.0).collect()).unwrap();
    let local = mock.guidance_step(&request(x.clone())).unwrap();
    let over_wire = remote.guidance_step(&request(x)).unwrap();
    assert_eq!(local, over_wire);

    assert_eq!(remote.descriptor().unwrap(), codec.descriptor().unwrap());
    let z = remote.encode(&target()).unwrap();
    assert_eq!(z, codec.encode(&target()).unwrap());
    assert_eq!(remote.decode(&z).unwrap(), codec.decode(&z).unwrap());

    let zl = z.clone().into_latent();
    let latent = mock.guidance_step(&request(zl.clone())).unwrap();
    assert_eq!(remote.guidance_step(&request(zl)).unwrap(), latent);
}

#[test]
fn remote_client_maps_status_codes() {
    let (mock, codec) = mock();
    let server = ProtocolServer::start("127.0.0.1:0", mock, Some(codec), 1).unwrap();
    let remote = RemoteBackend::new(&server.url()).unwrap();
    let x = ImageGrid::latent(4, 4, 3, vec![0.0; 48]).unwrap();

    let mut bad = request(x.clone());
    bad.prompt = PromptId::new("missing");
    assert!(matches!(remote.guidance_step(&bad), Err(DenoiseError::Validation(_))));

    server.set_ready(false);
    assert!(matches!(remote.guidance_step(&request(x.clone())), Err(DenoiseError::BackendUnavailable(_))));
    assert!(matches!(remote.descriptor(), Err(DenoiseError::BackendUnavailable(_))));
    server.set_ready(true);
    assert!(remote.guidance_step(&request(x)).is_ok());
}

#[test]
fn unreachable_backend_is_unavailable() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let remote = RemoteBackend::with_timeout(&format!("http://127.0.0.1:{port}"), Duration::from_secs(5)).unwrap();
    let x = ImageGrid::latent(1, 1, 1, vec![0.0]).unwrap();
    assert!(matches!(remote.guidance_step(&request(x)), Err(DenoiseError::BackendUnavailable(_))));
    assert!(RemoteBackend::new("ftp://example").is_err());
}

/// A server that answers every request with the given JSON body.
fn canned(body: &'static str) -> (String, thread::JoinHandle<()>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let handle = thread::spawn(move || {
        if let Ok(mut req) = server.recv() {
            let mut sink = String::new();
            let _ = req.as_reader().read_to_string(&mut sink);
            let _ = req.respond(tiny_http::Response::from_string(body));
        }
    });
    (url, handle)
}

#[test]
fn mismatched_response_shapes_are_rejected() {
    // A 1x1x1 answer to a 1x2x1 request.
    let (url, handle) = canned(r#"{"guidance": "AACAPg==", "next_image": "AACAPg==", "shape": [1, 1, 1]}"#);
    let remote = RemoteBackend::new(&url).unwrap();
    let x = ImageGrid::latent(1, 2, 1, vec![0.0, 1.0]).unwrap();
    assert!(matches!(remote.guidance_step(&request(x)), Err(DenoiseError::ShapeMismatch(_))));
    handle.join().unwrap();

    let (url, handle) = canned(r#"{"shape": [2, 2, 1], "data": "AACAPg=="}"#);
    let remote = RemoteBackend::new(&url).unwrap();
    let err = remote.decode(&ImageGrid::latent(1, 1, 1, vec![0.0]).unwrap()).unwrap_err();
    assert!(matches!(err, DenoiseError::ShapeMismatch(_)), "{err}");
    handle.join().unwrap();

    let (url, handle) = canned("not json");
    let remote = RemoteBackend::new(&url).unwrap();
    assert!(matches!(remote.descriptor(), Err(DenoiseError::Protocol(_))));
    handle.join().unwrap();
}
