//! JSON envelopes of the HTTP protocol. Arrays travel as base64 of their
//! little-endian `f32` bytes, row-major `(h, w, c)`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{CodecDescriptor, DenoiseError, DenoiseRequest, DenoiseResponse, PromptId};
use crate::image::{ImageGrid, Space};

pub fn encode_f32(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32(data: &str, expected_len: usize) -> Result<Vec<f32>, DenoiseError> {
    let bytes = STANDARD
        .decode(data)
        .map_err(|e| DenoiseError::Protocol(format!("bad base64 payload: {e}")))?;
    if bytes.len() != expected_len * 4 {
        return Err(DenoiseError::ShapeMismatch(format!(
            "payload holds {} bytes, shape needs {}",
            bytes.len(),
            expected_len * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn shape_len(shape: [usize; 3]) -> usize {
    shape.iter().product()
}

fn to_grid(shape: [usize; 3], data: &str, space: Space) -> Result<ImageGrid, DenoiseError> {
    let values = decode_f32(data, shape_len(shape))?;
    Ok(ImageGrid::new(shape[0], shape[1], shape[2], values, space)?)
}

fn shape_of(img: &ImageGrid) -> [usize; 3] {
    let (h, w, c) = img.shape();
    [h, w, c]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseRequestBody {
    pub prompt: String,
    pub step: usize,
    pub total_steps: usize,
    pub guidance_scale: f64,
    pub seed: u64,
    pub shape: [usize; 3],
    pub data: String,
}

impl DenoiseRequestBody {
    pub fn from_request(req: &DenoiseRequest) -> Self {
        Self {
            prompt: req.prompt.0.clone(),
            step: req.step,
            total_steps: req.total_steps,
            guidance_scale: req.guidance_scale,
            seed: req.seed,
            shape: shape_of(&req.image),
            data: encode_f32(req.image.values()),
        }
    }

    pub fn into_request(self) -> Result<DenoiseRequest, DenoiseError> {
        let image = to_grid(self.shape, &self.data, Space::Latent)?;
        let req = DenoiseRequest {
            image,
            prompt: PromptId(self.prompt),
            step: self.step,
            total_steps: self.total_steps,
            guidance_scale: self.guidance_scale,
            seed: self.seed,
        };
        req.validate()?;
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseResponseBody {
    pub guidance: String,
    pub next_image: String,
    pub shape: [usize; 3],
}

impl DenoiseResponseBody {
    pub fn from_response(resp: &DenoiseResponse) -> Self {
        Self {
            guidance: encode_f32(resp.guidance.values()),
            next_image: encode_f32(resp.next_image.values()),
            shape: shape_of(&resp.guidance),
        }
    }

    /// Decodes the arrays, rejecting any shape other than `expected`.
    pub fn into_response(self, expected: (usize, usize, usize)) -> Result<DenoiseResponse, DenoiseError> {
        let want = [expected.0, expected.1, expected.2];
        if self.shape != want {
            return Err(DenoiseError::ShapeMismatch(format!(
                "response shape {:?}, request shape {want:?}",
                self.shape
            )));
        }
        Ok(DenoiseResponse {
            guidance: to_grid(self.shape, &self.guidance, Space::Latent)?,
            next_image: to_grid(self.shape, &self.next_image, Space::Latent)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayBody {
    pub shape: [usize; 3],
    pub data: String,
}

impl ArrayBody {
    pub fn from_grid(img: &ImageGrid) -> Self {
        Self {
            shape: shape_of(img),
            data: encode_f32(img.values()),
        }
    }

    pub fn into_grid(self, space: Space) -> Result<ImageGrid, DenoiseError> {
        to_grid(self.shape, &self.data, space)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecBody {
    pub latent_shape: [usize; 3],
    pub pixel_shape: [usize; 3],
    pub scale_factor: usize,
}

impl From<CodecDescriptor> for CodecBody {
    fn from(d: CodecDescriptor) -> Self {
        let (a, b, c) = d.latent_shape;
        let (x, y, z) = d.pixel_shape;
        Self {
            latent_shape: [a, b, c],
            pixel_shape: [x, y, z],
            scale_factor: d.scale_factor,
        }
    }
}

impl From<CodecBody> for CodecDescriptor {
    fn from(b: CodecBody) -> Self {
        let [a, bb, c] = b.latent_shape;
        let [x, y, z] = b.pixel_shape;
        Self {
            latent_shape: (a, bb, c),
            pixel_shape: (x, y, z),
            scale_factor: b.scale_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
