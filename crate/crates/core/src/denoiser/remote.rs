use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{ArrayBody, CodecBody, DenoiseRequestBody, DenoiseResponseBody, ErrorBody};
use super::{Codec, CodecDescriptor, DenoiseError, DenoiseRequest, DenoiseResponse, Denoiser};
use crate::image::{ImageGrid, Space};

const BODY_LIMIT: u64 = 1 << 31;

/// Client for a backend speaking the `/v1` HTTP protocol.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    base: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(base_url: &str) -> Result<Self, DenoiseError> {
        Self::with_timeout(base_url, Duration::from_secs(600))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Result<Self, DenoiseError> {
        let base = base_url.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(DenoiseError::Validation(format!("not an http(s) url: {base_url}")));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { base, agent })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn finish<R: DeserializeOwned>(
        &self,
        path: &str,
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<R, DenoiseError> {
        let mut resp = result.map_err(|e| transport_error(path, e))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let detail = resp
                .body_mut()
                .read_json::<ErrorBody>()
                .map(|b| b.error)
                .unwrap_or_default();
            let msg = format!("{path} returned {status}: {detail}");
            return Err(match status {
                400 => DenoiseError::Validation(msg),
                503 => DenoiseError::BackendUnavailable(msg),
                _ => DenoiseError::Protocol(msg),
            });
        }
        resp.body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_json()
            .map_err(|e| DenoiseError::Protocol(format!("{path}: {e}")))
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, DenoiseError> {
        let url = format!("{}{path}", self.base);
        self.finish(path, self.agent.post(&url).send_json(body))
    }

    fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R, DenoiseError> {
        let url = format!("{}{path}", self.base);
        self.finish(path, self.agent.get(&url).call())
    }
}

fn transport_error(path: &str, e: ureq::Error) -> DenoiseError {
    match e {
        ureq::Error::Json(e) => DenoiseError::Protocol(format!("{path}: {e}")),
        ureq::Error::BodyExceedsLimit(n) => DenoiseError::Protocol(format!("{path}: body exceeds {n} bytes")),
        e => DenoiseError::BackendUnavailable(format!("{path}: {e}")),
    }
}

impl Denoiser for RemoteBackend {
    fn guidance_step(&self, req: &DenoiseRequest) -> Result<DenoiseResponse, DenoiseError> {
        req.validate()?;
        let body: DenoiseResponseBody = self.post("/v1/denoise", &DenoiseRequestBody::from_request(req))?;
        body.into_response(req.image.shape())
    }
}

impl Codec for RemoteBackend {
    fn descriptor(&self) -> Result<CodecDescriptor, DenoiseError> {
        let body: CodecBody = self.get("/v1/codec")?;
        let d = CodecDescriptor::from(body);
        d.validate()?;
        Ok(d)
    }

    fn encode(&self, img: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        let body: ArrayBody = self.post("/v1/encode", &ArrayBody::from_grid(img))?;
        body.into_grid(Space::Latent)
    }

    fn decode(&self, z: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        let body: ArrayBody = self.post("/v1/decode", &ArrayBody::from_grid(z))?;
        Ok(body.into_grid(Space::Latent)?.to_pixels_clamped())
    }
}
